#include "rstab/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "rstab/conic.hpp"

namespace rstab {

ParamBox::ParamBox(VectorXd lo, VectorXd hi)
    : lower(std::move(lo)), upper(std::move(hi)) {
  if (lower.size() != upper.size())
    throw std::invalid_argument("parameter bounds dimension mismatch");
  for (int i = 0; i < lower.size(); ++i) {
    if (!(lower(i) <= upper(i)))
      throw std::invalid_argument("parameter lower bound exceeds upper bound");
    if (lower(i) > 0.0 || upper(i) < 0.0)
      throw std::invalid_argument("parameter box must contain zero");
  }
}

bool ParamBox::contains(const VectorXd& theta, double slack) const {
  if (theta.size() != lower.size()) return false;
  for (int i = 0; i < theta.size(); ++i)
    if (theta(i) < lower(i) - slack || theta(i) > upper(i) + slack)
      return false;
  return true;
}

ParamBox ParamBox::degenerate(const VectorXd& theta) {
  for (int i = 0; i < theta.size(); ++i)
    if (theta(i) != 0.0)
      throw std::invalid_argument("degenerate parameter box must sit at zero");
  return ParamBox(theta, theta);
}

void SafePolytope::validate_faces() const {
  if (faces_.rows() == 0 || faces_.cols() == 0)
    throw std::invalid_argument("polytope needs at least one face");
  if (faces_.rows() != offsets_.size())
    throw std::invalid_argument("face/offset count mismatch");
  for (int i = 0; i < faces_.rows(); ++i) {
    if (faces_.row(i).norm() == 0.0)
      throw std::invalid_argument("polytope face has a zero normal");
    if (!(offsets_(i) > 0.0))
      throw std::invalid_argument(
          "polytope offsets must be positive (origin strictly inside)");
  }
}

void SafePolytope::bounding_box_from_lp() {
  const int n = dim();
  bbox_lo_.resize(n);
  bbox_hi_.resize(n);
  for (int i = 0; i < n; ++i) {
    for (int sign : {-1, +1}) {
      SdpProblem p;
      const std::vector<int> xs = p.add_vars(n);
      for (int r = 0; r < faces_.rows(); ++r) {
        LmiBlock blk;
        blk.constant = MatrixXd::Constant(1, 1, offsets_(r));
        for (int j = 0; j < n; ++j)
          if (faces_(r, j) != 0.0)
            blk.terms.push_back(
                {xs[j], MatrixXd::Constant(1, 1, -faces_(r, j))});
        p.blocks.push_back(std::move(blk));
      }
      VectorXd c = VectorXd::Zero(n);
      c(i) = -static_cast<double>(sign);
      p.set_objective(c);
      const SdpSolution s = solve(p);
      if (!s.ok())
        throw std::invalid_argument("polytope has no strict interior");
      const double v = s.y(i);
      if (std::abs(v) > 1e6)
        throw std::invalid_argument("polytope is unbounded");
      const double pad = std::max(1e-8, 1e-6 * std::abs(v));
      if (sign > 0)
        bbox_hi_(i) = v + pad;
      else
        bbox_lo_(i) = v - pad;
    }
  }
}

SafePolytope::SafePolytope(MatrixXd faces, VectorXd offsets)
    : faces_(std::move(faces)), offsets_(std::move(offsets)) {
  validate_faces();
  bounding_box_from_lp();
}

MatrixXd polygon_faces(const MatrixXd& vertices) {
  if (vertices.cols() != 2)
    throw std::invalid_argument("polygon vertices must be 2-D");
  const int k = static_cast<int>(vertices.rows());
  if (k < 3) throw std::invalid_argument("polygon needs at least 3 vertices");
  const Eigen::RowVector2d centroid = vertices.colwise().mean();
  std::vector<int> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const auto pa = vertices.row(a) - centroid;
    const auto pb = vertices.row(b) - centroid;
    return std::atan2(pa(1), pa(0)) < std::atan2(pb(1), pb(0));
  });
  MatrixXd out(k, 3);
  for (int e = 0; e < k; ++e) {
    const Eigen::RowVector2d v0 = vertices.row(order[e]);
    const Eigen::RowVector2d v1 = vertices.row(order[(e + 1) % k]);
    const Eigen::RowVector2d t = v1 - v0;
    // Counterclockwise ordering puts the outward normal at (t_y, -t_x).
    out(e, 0) = t(1);
    out(e, 1) = -t(0);
    out(e, 2) = out(e, 0) * v0(0) + out(e, 1) * v0(1);
  }
  return out;
}

SafePolytope SafePolytope::from_vertices(const MatrixXd& vertices) {
  const MatrixXd fb = polygon_faces(vertices);
  SafePolytope p;
  p.faces_ = fb.leftCols(2);
  p.offsets_ = fb.col(2);
  p.validate_faces();
  p.vertices_ = vertices;
  p.bbox_lo_ = vertices.colwise().minCoeff().transpose();
  p.bbox_hi_ = vertices.colwise().maxCoeff().transpose();
  return p;
}

bool SafePolytope::contains(const VectorXd& x, double slack) const {
  if (x.size() != dim()) return false;
  const VectorXd v = faces_ * x - offsets_;
  return (v.array() <= slack * offsets_.array().abs().max(1.0)).all();
}

SafePolytope SafePolytope::scaled(double delta) const {
  if (!(delta > 0.0))
    throw std::invalid_argument("polytope scale must be positive");
  SafePolytope p;
  p.faces_ = faces_;
  p.offsets_ = offsets_ * delta;
  if (vertices_.size() > 0) p.vertices_ = vertices_ * delta;
  p.bbox_lo_ = bbox_lo_ * delta;
  p.bbox_hi_ = bbox_hi_ * delta;
  return p;
}

Box SafePolytope::bounding_box() const { return make_box(bbox_lo_, bbox_hi_); }

double SafePolytope::max_norm_inf() const {
  return std::max(bbox_lo_.cwiseAbs().maxCoeff(), bbox_hi_.cwiseAbs().maxCoeff());
}

namespace {

void check_dims(const PlantModel& model, const VectorXd& x, const VectorXd& u,
                const VectorXd& theta) {
  if (x.size() != model.state_dim || u.size() != model.input_dim ||
      theta.size() != model.param_dim)
    throw std::invalid_argument("plant evaluation dimension mismatch");
}

}  // namespace

VectorXd eval_dynamics(const PlantModel& model, const VectorXd& x,
                       const VectorXd& u, const VectorXd& theta) {
  check_dims(model, x, u, theta);
  VectorXd dx = model.dynamics(x, u, theta);
  if (dx.size() != model.state_dim)
    throw std::invalid_argument("dynamics evaluator returned wrong dimension");
  return dx;
}

std::pair<MatrixXd, MatrixXd> eval_jacobians(const PlantModel& model,
                                             const VectorXd& x,
                                             const VectorXd& u,
                                             const VectorXd& theta) {
  check_dims(model, x, u, theta);
  MatrixXd jx = model.jac_x(x, u, theta);
  MatrixXd ju = model.jac_u(x, u, theta);
  if (jx.rows() != model.state_dim || jx.cols() != model.state_dim ||
      ju.rows() != model.state_dim || ju.cols() != model.input_dim)
    throw std::invalid_argument("jacobian evaluator returned wrong dimension");
  return {std::move(jx), std::move(ju)};
}

LinearizedDynamics linearize(const PlantModel& model, const VectorXd& theta) {
  auto [a, b] = eval_jacobians(model, VectorXd::Zero(model.state_dim),
                               VectorXd::Zero(model.input_dim), theta);
  return {std::move(a), std::move(b)};
}

PlantModel example_plant() {
  PlantModel m;
  m.name = "vdp-2p";
  m.state_dim = 2;
  m.input_dim = 2;
  m.param_dim = 2;
  m.dynamics = [](const VectorXd& x, const VectorXd& u, const VectorXd& th) {
    VectorXd dx(2);
    dx(0) = -(1.0 + th(0)) * x(1) + u(0);
    dx(1) = x(0) + (1.0 + th(1)) * (x(0) * x(0) - 1.0) * x(1) + u(1);
    return dx;
  };
  m.jac_x = [](const VectorXd& x, const VectorXd&, const VectorXd& th) {
    MatrixXd j(2, 2);
    j(0, 0) = 0.0;
    j(0, 1) = -(1.0 + th(0));
    j(1, 0) = 1.0 + 2.0 * (1.0 + th(1)) * x(0) * x(1);
    j(1, 1) = (1.0 + th(1)) * (x(0) * x(0) - 1.0);
    return j;
  };
  m.jac_u = [](const VectorXd&, const VectorXd&, const VectorXd&) {
    return MatrixXd::Identity(2, 2).eval();
  };
  m.dynamics_box = [](const Box& x, const Box& u, const Box& th) {
    IntervalVector dx(2);
    const Interval one(1.0);
    dx(0) = -(one + th(0)) * x(1) + u(0);
    dx(1) = x(0) + (one + th(1)) * (sqr(x(0)) - one) * x(1) + u(1);
    return dx;
  };
  m.jac_x_box = [](const Box& x, const Box&, const Box& th) {
    IntervalMatrix j(2, 2);
    const Interval one(1.0);
    j(0, 0) = Interval(0.0);
    j(0, 1) = -(one + th(0));
    j(1, 0) = one + Interval(2.0) * (one + th(1)) * x(0) * x(1);
    j(1, 1) = (one + th(1)) * (sqr(x(0)) - one);
    return j;
  };
  m.jac_u_box = [](const Box&, const Box&, const Box&) {
    IntervalMatrix j(2, 2);
    j << Interval(1.0), Interval(0.0), Interval(0.0), Interval(1.0);
    return j;
  };
  return m;
}

ParamBox example_param_box() {
  VectorXd lo(2), hi(2);
  lo << -0.05, -0.1;
  hi << 0.05, 0.1;
  return ParamBox(lo, hi);
}

SafePolytope example_polytope() {
  MatrixXd v(5, 2);
  v << 0.3, 0.6,
      0.1962, 0.8077,
      -0.3375, 0.1406,
      -0.3375, -0.8523,
      0.3, -0.2727;
  return SafePolytope::from_vertices(v);
}

PlantModel linear_plant(MatrixXd a, MatrixXd b, int param_dim) {
  if (a.rows() != a.cols() || b.rows() != a.rows())
    throw std::invalid_argument("linear plant dimensions inconsistent");
  PlantModel m;
  m.name = "linear";
  m.state_dim = static_cast<int>(a.rows());
  m.input_dim = static_cast<int>(b.cols());
  m.param_dim = param_dim;
  m.dynamics = [a, b](const VectorXd& x, const VectorXd& u, const VectorXd&) {
    return (a * x + b * u).eval();
  };
  m.jac_x = [a](const VectorXd&, const VectorXd&, const VectorXd&) {
    return a;
  };
  m.jac_u = [b](const VectorXd&, const VectorXd&, const VectorXd&) {
    return b;
  };
  const auto lift = [](const MatrixXd& m0) {
    IntervalMatrix im(m0.rows(), m0.cols());
    for (int i = 0; i < m0.rows(); ++i)
      for (int j = 0; j < m0.cols(); ++j) im(i, j) = Interval(m0(i, j));
    return im;
  };
  const IntervalMatrix ai = lift(a), bi = lift(b);
  m.dynamics_box = [ai, bi](const Box& x, const Box& u, const Box&) {
    return (ai * x + bi * u).eval();
  };
  m.jac_x_box = [ai](const Box&, const Box&, const Box&) { return ai; };
  m.jac_u_box = [bi](const Box&, const Box&, const Box&) { return bi; };
  return m;
}

}  // namespace rstab
