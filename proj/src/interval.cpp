#include "rstab/interval.hpp"

#include <algorithm>
#include <cstdio>
#include <future>
#include <queue>
#include <thread>

namespace rstab {

std::string format_double(double v) {
  char buf[40];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    double back = 0.0;
    std::sscanf(buf, "%lf", &back);
    if (back == v) break;
  }
  return buf;
}

void parallel_for(int count, const std::function<void(int)>& fn) {
  const unsigned hw = std::thread::hardware_concurrency();
  if (hw <= 1 || count <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::future<void>> jobs;
  jobs.reserve(count);
  for (int i = 0; i < count; ++i)
    jobs.push_back(std::async(std::launch::async, fn, i));
  for (auto& j : jobs) j.get();
}

Box make_box(const VectorXd& lo, const VectorXd& hi) {
  if (lo.size() != hi.size())
    throw std::invalid_argument("box bounds dimension mismatch");
  Box b(lo.size());
  for (int i = 0; i < lo.size(); ++i) b(i) = Interval(lo(i), hi(i));
  return b;
}

VectorXd box_center(const Box& b) {
  VectorXd c(b.size());
  for (int i = 0; i < b.size(); ++i) c(i) = b(i).mid();
  return c;
}

VectorXd box_lower(const Box& b) {
  VectorXd c(b.size());
  for (int i = 0; i < b.size(); ++i) c(i) = b(i).lo();
  return c;
}

VectorXd box_upper(const Box& b) {
  VectorXd c(b.size());
  for (int i = 0; i < b.size(); ++i) c(i) = b(i).hi();
  return c;
}

bool box_contains(const Box& b, const VectorXd& x, double tol) {
  if (x.size() != b.size()) return false;
  for (int i = 0; i < b.size(); ++i)
    if (!b(i).contains(x(i), tol)) return false;
  return true;
}

VectorXd box_corner(const Box& b, unsigned mask) {
  VectorXd c(b.size());
  for (int i = 0; i < b.size(); ++i)
    c(i) = (mask >> i) & 1u ? b(i).hi() : b(i).lo();
  return c;
}

int widest_dim(const Box& b) {
  int best = 0;
  for (int i = 1; i < b.size(); ++i)
    if (b(i).width() > b(best).width()) best = i;
  return best;
}

std::pair<Box, Box> bisect(const Box& b, int dim) {
  Box left = b, right = b;
  const double m = b(dim).mid();
  left(dim) = Interval(b(dim).lo(), m);
  right(dim) = Interval(m, b(dim).hi());
  return {left, right};
}

Interval eval_interval(const ScalarIntervalFn& fn, const Box& box) {
  return fn(box);
}

namespace {

Box degenerate_box(const VectorXd& x) {
  Box b(x.size());
  for (int i = 0; i < x.size(); ++i) b(i) = Interval(x(i));
  return b;
}

// Upper-bound search: returns hi with true_sup <= hi, and tight when
// hi - tol <= true_sup. Lower bounds are obtained by negating fn.
struct SupResult {
  double upper;
  bool tight;
  long boxes;
};

SupResult bound_sup(const ScalarIntervalFn& fn, const Box& root,
                    const BoundOptions& opts) {
  const DomainFilter* dom = opts.domain;
  const double kInf = std::numeric_limits<double>::infinity();
  auto point_ok = [&](const VectorXd& x) { return !dom || dom->inside(x); };
  auto point_value = [&](const VectorXd& x) {
    return fn(degenerate_box(x)).mid();
  };

  double witness = -kInf;   // best attained value (always <= true sup)
  double covered = -kInf;   // max bound over regions removed from the heap
  auto try_witness = [&](const VectorXd& x) {
    if (point_ok(x)) {
      witness = std::max(witness, point_value(x));
      return;
    }
    if (dom && dom->repair) {
      VectorXd y = x;
      if (dom->repair(y)) witness = std::max(witness, point_value(y));
    }
  };

  struct Node {
    double ub;
    Box box;
    bool operator<(const Node& o) const { return ub < o.ub; }
  };
  std::priority_queue<Node> heap;

  long used = 1;
  if (dom && dom->outside(root)) return {fn(root).hi(), false, used};
  heap.push({fn(root).hi(), root});
  try_witness(box_center(root));
  const int dims = static_cast<int>(root.size());
  if (dims <= 12) {
    for (unsigned m = 0; m < (1u << dims); ++m)
      try_witness(box_corner(root, m));
  }

  while (!heap.empty()) {
    const Node top = heap.top();
    if (top.ub <= witness + opts.tol) {
      // Every remaining region is bounded within tol of an attained value.
      const double hi = std::max({top.ub, covered, witness});
      return {hi, witness > -kInf && hi <= witness + opts.tol, used};
    }
    if (used >= opts.max_boxes) break;
    heap.pop();

    double max_width = 0.0;
    for (int j = 0; j < dims; ++j)
      max_width = std::max(max_width, top.box(j).width());
    if (max_width <= 1e-14) {
      // Degenerate box: its own bound accounts for the region.
      covered = std::max(covered, top.ub);
      try_witness(box_center(top.box));
      continue;
    }

    // Split the dimension whose two children carry the lowest combined
    // bound; this steers subdivision toward the variables the expression
    // actually depends on (a widest-first rule stalls when wide dimensions
    // are irrelevant).
    int best_dim = -1;
    double best_score = kInf, best_width = -1.0;
    std::pair<Box, Box> best_halves;
    double best_ub[2] = {0.0, 0.0};
    for (int j = 0; j < dims; ++j) {
      const double w = top.box(j).width();
      if (w <= 1e-14 || w < 1e-9 * max_width) continue;
      auto halves = bisect(top.box, j);
      double ub[2];
      const Box* half[2] = {&halves.first, &halves.second};
      for (int s = 0; s < 2; ++s) {
        if (dom && dom->outside(*half[s])) {
          ub[s] = -kInf;
          continue;
        }
        try {
          ub[s] = fn(*half[s]).hi();
        } catch (const EvalError&) {
          ub[s] = top.ub;  // inclusion: the parent bound still covers it
        }
      }
      const double score = std::max(ub[0], -top.ub) + std::max(ub[1], -top.ub);
      if (score < best_score - 1e-12 * (1.0 + std::abs(score)) ||
          (score <= best_score + 1e-12 * (1.0 + std::abs(score)) &&
           w > best_width)) {
        best_score = score;
        best_width = w;
        best_dim = j;
        best_halves = std::move(halves);
        best_ub[0] = ub[0];
        best_ub[1] = ub[1];
      }
    }
    if (best_dim < 0) {  // nothing splittable; keep the region accounted
      covered = std::max(covered, top.ub);
      try_witness(box_center(top.box));
      continue;
    }

    used += 2;
    const Box* half[2] = {&best_halves.first, &best_halves.second};
    for (int s = 0; s < 2; ++s) {
      if (best_ub[s] == -kInf) continue;  // fully outside the domain
      try_witness(box_center(*half[s]));
      if (best_ub[s] <= witness + opts.tol)
        covered = std::max(covered, best_ub[s]);
      else
        heap.push({best_ub[s], *half[s]});
    }
  }

  if (heap.empty()) {
    const double hi = std::max(covered, witness);
    if (hi == -kInf) return {fn(root).hi(), false, used};
    return {hi, witness > -kInf && hi <= witness + opts.tol, used};
  }
  const double hi = std::max({heap.top().ub, covered, witness});
  return {hi, witness > -kInf && hi <= witness + opts.tol, used};
}

}  // namespace

RangeBound bound_range(const ScalarIntervalFn& fn, const Box& box,
                       const BoundOptions& opts) {
  SupResult up = bound_sup(fn, box, opts);
  ScalarIntervalFn neg = [&fn](const Box& b) { return -fn(b); };
  SupResult dn = bound_sup(neg, box, opts);
  RangeBound r;
  r.bound = Interval(std::min(-dn.upper, up.upper), up.upper);
  r.tight_lo = dn.tight;
  r.tight_hi = up.tight;
  r.boxes_used = up.boxes + dn.boxes;
  return r;
}

}  // namespace rstab
