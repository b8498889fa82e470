#ifndef RSTAB_MODEL_HPP
#define RSTAB_MODEL_HPP

#include <functional>
#include <string>
#include <utility>

#include "rstab/common.hpp"
#include "rstab/interval.hpp"

namespace rstab {

// Axis-aligned parameter domain; always contains the origin so the
// unperturbed plant is a member of the family.
struct ParamBox {
  VectorXd lower, upper;

  ParamBox() = default;
  ParamBox(VectorXd lo, VectorXd hi);

  int dim() const { return static_cast<int>(lower.size()); }
  bool contains(const VectorXd& theta, double slack = 0.0) const;
  Box box() const { return make_box(lower, upper); }
  static ParamBox degenerate(const VectorXd& theta);
};

// Bounded polytope {x : a_i'x <= b_i} with the origin strictly inside
// (all offsets positive). Construction verifies boundedness and caches an
// axis-aligned bounding box: exact when built from vertices, otherwise from
// one linear program per axis direction (slightly inflated outward).
class SafePolytope {
 public:
  SafePolytope() = default;
  SafePolytope(MatrixXd faces, VectorXd offsets);
  // Convex 2-D polygon given as one vertex per row (any order).
  static SafePolytope from_vertices(const MatrixXd& vertices);

  int dim() const { return static_cast<int>(faces_.cols()); }
  int num_faces() const { return static_cast<int>(faces_.rows()); }
  const MatrixXd& faces() const { return faces_; }
  const VectorXd& offsets() const { return offsets_; }
  const MatrixXd& vertices() const { return vertices_; }  // empty if face-built

  bool contains(const VectorXd& x, double slack = 1e-12) const;
  // {delta * x : x inside} — same faces, offsets scaled by delta.
  SafePolytope scaled(double delta) const;
  Box bounding_box() const;
  double max_norm_inf() const;  // max ||x||_inf over the polytope's box

 private:
  MatrixXd faces_;
  VectorXd offsets_;
  MatrixXd vertices_;
  VectorXd bbox_lo_, bbox_hi_;

  void validate_faces() const;
  void bounding_box_from_lp();
};

// Outward-normal faces of a convex 2-D polygon (rows of the result are
// [a1 a2 b] with a'x <= b). Vertices may arrive in any order.
MatrixXd polygon_faces(const MatrixXd& vertices);

struct LinearizedDynamics {
  MatrixXd a;  // n x n
  MatrixXd b;  // n x m
};

using DynamicsFn =
    std::function<VectorXd(const VectorXd&, const VectorXd&, const VectorXd&)>;
using JacobianFn =
    std::function<MatrixXd(const VectorXd&, const VectorXd&, const VectorXd&)>;
using BoxDynamicsFn =
    std::function<IntervalVector(const Box&, const Box&, const Box&)>;
using BoxJacobianFn =
    std::function<IntervalMatrix(const Box&, const Box&, const Box&)>;

// Continuous-time plant xdot = f(x, u, theta) with the origin as the
// parameter-invariant equilibrium: f(0, 0, theta) = 0. Evaluators are pure;
// the box variants must enclose the range of their point counterparts.
struct PlantModel {
  std::string name;
  int state_dim = 0;
  int input_dim = 0;
  int param_dim = 0;
  DynamicsFn dynamics;
  JacobianFn jac_x;
  JacobianFn jac_u;
  BoxDynamicsFn dynamics_box;
  BoxJacobianFn jac_x_box;
  BoxJacobianFn jac_u_box;
};

VectorXd eval_dynamics(const PlantModel& model, const VectorXd& x,
                       const VectorXd& u, const VectorXd& theta);
std::pair<MatrixXd, MatrixXd> eval_jacobians(const PlantModel& model,
                                             const VectorXd& x,
                                             const VectorXd& u,
                                             const VectorXd& theta);
// Jacobians at the origin equilibrium for the given parameter value.
LinearizedDynamics linearize(const PlantModel& model, const VectorXd& theta);

// Two-state oscillator with nonlinear damping and two multiplicative
// parameter perturbations; ships with its reference parameter box and
// pentagonal safe region.
PlantModel example_plant();
ParamBox example_param_box();
SafePolytope example_polytope();

// Parameter-independent linear plant xdot = a x + b u (params accepted and
// ignored so the full pipeline runs unchanged).
PlantModel linear_plant(MatrixXd a, MatrixXd b, int param_dim = 1);

}  // namespace rstab

#endif
