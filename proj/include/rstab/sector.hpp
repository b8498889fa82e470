#ifndef RSTAB_SECTOR_HPP
#define RSTAB_SECTOR_HPP

#include <iosfwd>
#include <utility>
#include <vector>

#include "rstab/model.hpp"

namespace rstab {

// Elementwise interval bound on the Jacobian of the residual dynamics
//   zeta(x, v, theta) = f(x, K x + v, theta) - A0K x - B0 v
// over a state polytope, the Lipschitz-capped control box, and the parameter
// box. Columns 0..n-1 bound d(zeta)/dx, columns n..n+m-1 bound d(zeta)/dv.
struct SectorBound {
  MatrixXd lo, hi;  // n x (n+m)
  MatrixXd gain;    // K the bound was computed for (m x n)
  double lipschitz = 0.0;
  double tol = 1e-3;
  bool all_tight = true;  // every entry met the tolerance within budget

  int state_dim() const { return static_cast<int>(lo.rows()); }
  int input_dim() const {
    return static_cast<int>(lo.cols() - lo.rows());
  }
};

// Symmetric per-dimension cap |v_i| <= L * max ||x||_inf covering every
// control a Lipschitz-L zero-at-origin policy can emit over the domain.
struct ControlBox {
  VectorXd u_max;
};

ControlBox control_box(double lipschitz, const SafePolytope& domain,
                       int input_dim);

enum class NpvBlock { kState, kInput };

// Single entry of the residual Jacobian at a point (reference evaluator for
// the interval machinery; row i, column j within the chosen block).
double npv_jacobian_entry(const PlantModel& model, const MatrixXd& gain,
                          NpvBlock which, int i, int j, const VectorXd& x,
                          const VectorXd& u, const VectorXd& theta);

struct SectorOptions {
  double tol = 1e-3;
  long max_boxes = 100000;
};

SectorBound compute_sector(const PlantModel& model, const MatrixXd& gain,
                           double lipschitz, const SafePolytope& domain,
                           const ParamBox& params,
                           const SectorOptions& opts = {});

// Extreme linearizations: every parameter-dependent entry of (A_theta,
// B_theta) is replaced by its lower/upper bound over the parameter box in
// all 2^|I| patterns; constant entries keep their nominal value.
struct UncertaintyVertices {
  std::vector<LinearizedDynamics> vertices;
  std::vector<std::pair<int, int>> a_entries;  // parameter-dependent in A
  std::vector<std::pair<int, int>> b_entries;  // parameter-dependent in B
  MatrixXd a_lo, a_hi;  // entry bounds used
  MatrixXd b_lo, b_hi;
};

UncertaintyVertices uncertainty_vertices(const PlantModel& model,
                                         const ParamBox& params,
                                         double tol = 1e-3);

// CSV with one row per matrix entry: i,j,lo,hi (leading '#' metadata line).
void write_sector_csv(std::ostream& os, const SectorBound& sector);
SectorBound read_sector_csv(std::istream& is);

}  // namespace rstab

#endif
