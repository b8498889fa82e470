#ifndef RSTAB_TESTS_ORACLES_HPP
#define RSTAB_TESTS_ORACLES_HPP

#include <functional>

#include "rstab/common.hpp"
#include "rstab/interval.hpp"

namespace rstab::testing {

// Dense-grid range oracle: evaluates fn on a regular grid over the box and
// returns the hull of the sampled values. Under-approximates the true range.
inline Interval grid_range(const std::function<double(const VectorXd&)>& fn,
                           const Box& box, int points_per_dim) {
  const int d = static_cast<int>(box.size());
  long total = 1;
  for (int i = 0; i < d; ++i) total *= points_per_dim;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  VectorXd x(d);
  for (long k = 0; k < total; ++k) {
    long rem = k;
    for (int i = 0; i < d; ++i) {
      const int step = static_cast<int>(rem % points_per_dim);
      rem /= points_per_dim;
      const double t =
          points_per_dim == 1 ? 0.5 : static_cast<double>(step) / (points_per_dim - 1);
      x(i) = box(i).lo() + t * box(i).width();
    }
    const double v = fn(x);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return Interval(lo, hi);
}

// Central-difference gradient of a scalar function.
inline VectorXd fd_gradient(const std::function<double(const VectorXd&)>& fn,
                            const VectorXd& x, double h = 1e-6) {
  VectorXd g(x.size());
  for (int i = 0; i < x.size(); ++i) {
    VectorXd xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    g(i) = (fn(xp) - fn(xm)) / (2.0 * h);
  }
  return g;
}

// Central-difference Jacobian of a vector function.
inline MatrixXd fd_jacobian(const std::function<VectorXd(const VectorXd&)>& fn,
                            const VectorXd& x, double h = 1e-6) {
  const VectorXd f0 = fn(x);
  MatrixXd j(f0.size(), x.size());
  for (int i = 0; i < x.size(); ++i) {
    VectorXd xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    j.col(i) = (fn(xp) - fn(xm)) / (2.0 * h);
  }
  return j;
}

}  // namespace rstab::testing

#endif
