#ifndef RSTAB_INTERVAL_HPP
#define RSTAB_INTERVAL_HPP

#include <Eigen/Core>

#include <functional>
#include <stdexcept>
#include <vector>

#include "rstab/common.hpp"

namespace rstab {

struct EvalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Closed interval [lo, hi]. Arithmetic results are widened outward by a fixed
// absolute slack per operation instead of using directed rounding; the slack
// dominates the roundoff of a single double operation at the value scales the
// toolkit works at (O(1) states, gains and parameters).
class Interval {
 public:
  static constexpr double kSlack = 1e-12;

  Interval() : lo_(0.0), hi_(0.0) {}
  Interval(double v) : lo_(v), hi_(v) {}  // NOLINT: implicit by design
  Interval(double lo, double hi) : lo_(lo), hi_(hi) {
    if (!(lo <= hi)) throw EvalError("interval bounds out of order");
  }

  double lo() const { return lo_; }
  double hi() const { return hi_; }
  double mid() const { return 0.5 * (lo_ + hi_); }
  double width() const { return hi_ - lo_; }
  double mag() const { return std::max(std::abs(lo_), std::abs(hi_)); }

  bool contains(double v, double tol = 0.0) const {
    return v >= lo_ - tol && v <= hi_ + tol;
  }
  bool contains(const Interval& o, double tol = 0.0) const {
    return o.lo_ >= lo_ - tol && o.hi_ <= hi_ + tol;
  }
  bool is_degenerate(double tol = 0.0) const { return width() <= tol; }

  Interval& operator+=(const Interval& o) { return *this = *this + o; }
  Interval& operator-=(const Interval& o) { return *this = *this - o; }
  Interval& operator*=(const Interval& o) { return *this = *this * o; }
  Interval& operator/=(const Interval& o) { return *this = *this / o; }

  friend Interval operator-(const Interval& a) {
    return raw(-a.hi_, -a.lo_);
  }
  friend Interval operator+(const Interval& a, const Interval& b) {
    return widened(a.lo_ + b.lo_, a.hi_ + b.hi_);
  }
  friend Interval operator-(const Interval& a, const Interval& b) {
    return widened(a.lo_ - b.hi_, a.hi_ - b.lo_);
  }
  friend Interval operator*(const Interval& a, const Interval& b) {
    const double p1 = a.lo_ * b.lo_, p2 = a.lo_ * b.hi_;
    const double p3 = a.hi_ * b.lo_, p4 = a.hi_ * b.hi_;
    return widened(std::min(std::min(p1, p2), std::min(p3, p4)),
                   std::max(std::max(p1, p2), std::max(p3, p4)));
  }
  friend Interval operator/(const Interval& a, const Interval& b) {
    if (b.contains(0.0)) throw EvalError("interval division by zero");
    const double p1 = a.lo_ / b.lo_, p2 = a.lo_ / b.hi_;
    const double p3 = a.hi_ / b.lo_, p4 = a.hi_ / b.hi_;
    return widened(std::min(std::min(p1, p2), std::min(p3, p4)),
                   std::max(std::max(p1, p2), std::max(p3, p4)));
  }
  friend bool operator==(const Interval& a, const Interval& b) {
    return a.lo_ == b.lo_ && a.hi_ == b.hi_;
  }
  friend bool operator!=(const Interval& a, const Interval& b) {
    return !(a == b);
  }

  friend Interval sqr(const Interval& a) {
    const double l = std::abs(a.lo_), h = std::abs(a.hi_);
    const double hi = std::max(l, h);
    const double lo = a.contains(0.0) ? 0.0 : std::min(l, h);
    return widened(lo * lo, hi * hi);
  }
  friend Interval abs(const Interval& a) {
    const double l = std::abs(a.lo_), h = std::abs(a.hi_);
    return raw(a.contains(0.0) ? 0.0 : std::min(l, h), std::max(l, h));
  }
  friend Interval hull(const Interval& a, const Interval& b) {
    return raw(std::min(a.lo_, b.lo_), std::max(a.hi_, b.hi_));
  }

 private:
  static Interval raw(double lo, double hi) {
    Interval r;
    r.lo_ = lo;
    r.hi_ = hi;
    return r;
  }
  static Interval widened(double lo, double hi) {
    return raw(lo - kSlack, hi + kSlack);
  }

  double lo_, hi_;
};

using IntervalVector = Eigen::Matrix<Interval, Eigen::Dynamic, 1>;
using IntervalMatrix = Eigen::Matrix<Interval, Eigen::Dynamic, Eigen::Dynamic>;

// Axis-aligned box: one interval per dimension.
using Box = IntervalVector;

Box make_box(const VectorXd& lo, const VectorXd& hi);
VectorXd box_center(const Box& b);
VectorXd box_lower(const Box& b);
VectorXd box_upper(const Box& b);
bool box_contains(const Box& b, const VectorXd& x, double tol = 0.0);
// Corner selected by bitmask: bit d set picks the upper end of dimension d.
VectorXd box_corner(const Box& b, unsigned mask);
int widest_dim(const Box& b);
std::pair<Box, Box> bisect(const Box& b, int dim);

using ScalarIntervalFn = std::function<Interval(const Box&)>;

// Natural interval extension evaluation with domain errors surfaced as
// EvalError. Result is a superset of the true range over the box.
Interval eval_interval(const ScalarIntervalFn& fn, const Box& box);

// Optional domain restriction for branch-and-bound: classifies sub-boxes and
// repairs sample points that fall outside the true domain.
struct DomainFilter {
  // Entire box outside the domain (prune) / possibly overlapping (keep).
  std::function<bool(const Box&)> outside;
  // True if the point is in the domain.
  std::function<bool(const VectorXd&)> inside;
  // Maps a point to a nearby domain point if possible (used for witnesses).
  std::function<bool(VectorXd&)> repair;
};

struct RangeBound {
  Interval bound;       // conservative: contains the true range
  bool tight_lo = false;  // lower end within tol of the true infimum
  bool tight_hi = false;
  long boxes_used = 0;
};

struct BoundOptions {
  double tol = 1e-3;
  long max_boxes = 100000;
  const DomainFilter* domain = nullptr;
};

// Branch-and-bound range bounding: bisects the widest dimension, prunes by
// interval dominance (and the domain filter), tracks point witnesses. The
// returned interval always contains the true range; each side is flagged
// tight when it is within tol of the true extremum.
RangeBound bound_range(const ScalarIntervalFn& fn, const Box& box,
                       const BoundOptions& opts = {});

}  // namespace rstab

namespace Eigen {

template <>
struct NumTraits<rstab::Interval> {
  using Self = rstab::Interval;
  using Real = Self;
  using NonInteger = Self;
  using Literal = Self;
  using Nested = Self;
  enum {
    IsComplex = 0,
    IsInteger = 0,
    IsSigned = 1,
    RequireInitialization = 1,
    ReadCost = 2,
    AddCost = 4,
    MulCost = 8,
  };
  static Self epsilon() { return Self(0.0); }
  static Self dummy_precision() { return Self(0.0); }
  static Self highest() { return Self(std::numeric_limits<double>::max()); }
  static Self lowest() { return Self(std::numeric_limits<double>::lowest()); }
  static int digits10() { return std::numeric_limits<double>::digits10; }
};

}  // namespace Eigen

#endif
