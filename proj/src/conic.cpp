#include "rstab/conic.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

namespace rstab {

MatrixXd LmiBlock::eval(const VectorXd& y) const {
  MatrixXd f = constant;
  for (const LmiTerm& t : terms) f += y(t.var) * t.coeff;
  return f;
}

int SdpProblem::add_var() { return num_vars++; }

std::vector<int> SdpProblem::add_vars(int count) {
  std::vector<int> out(count);
  for (int i = 0; i < count; ++i) out[i] = add_var();
  return out;
}

void SdpProblem::add_lower_bound(int var, double lo) {
  LmiBlock b;
  b.constant = MatrixXd::Constant(1, 1, -lo);
  b.terms.push_back({var, MatrixXd::Identity(1, 1)});
  b.label = "bound";
  blocks.push_back(std::move(b));
}

void SdpProblem::set_objective(const VectorXd& c) { objective = c; }

SymMatrixVar SymMatrixVar::create(SdpProblem& p, int n) {
  SymMatrixVar v;
  v.n = n;
  v.idx = p.add_vars(n * (n + 1) / 2);
  return v;
}

MatrixXd SymMatrixVar::value(const VectorXd& y) const {
  MatrixXd m(n, n);
  int k = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      m(i, j) = m(j, i) = y(idx[k]);
      ++k;
    }
  return m;
}

VectorXd SymMatrixVar::trace_gradient(const MatrixXd& g) const {
  VectorXd out(static_cast<int>(idx.size()));
  int k = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      out(k) = i == j ? g(i, i) : g(i, j) + g(j, i);
      ++k;
    }
  return out;
}

LmiBlock probe_affine_block(
    int num_vars, const std::function<MatrixXd(const VectorXd&)>& assemble,
    std::string label) {
  LmiBlock b;
  b.label = std::move(label);
  b.constant = assemble(VectorXd::Zero(num_vars));
  const double scale = std::max(1.0, b.constant.cwiseAbs().maxCoeff());
  for (int i = 0; i < num_vars; ++i) {
    VectorXd e = VectorXd::Zero(num_vars);
    e(i) = 1.0;
    MatrixXd coeff = assemble(e) - b.constant;
    if (coeff.cwiseAbs().maxCoeff() > 1e-14 * scale)
      b.terms.push_back({i, 0.5 * (coeff + coeff.transpose())});
  }
  b.constant = 0.5 * (b.constant + b.constant.transpose()).eval();
  return b;
}

void add_spectral_epigraph(SdpProblem& p, int tvar,
                           const std::function<MatrixXd(const VectorXd&)>& m,
                           int rows, int cols, std::string label) {
  auto assemble = [&m, tvar, rows, cols](const VectorXd& y) {
    MatrixXd big = MatrixXd::Zero(rows + cols, rows + cols);
    big.topLeftCorner(rows, rows) = y(tvar) * MatrixXd::Identity(rows, rows);
    big.bottomRightCorner(cols, cols) =
        y(tvar) * MatrixXd::Identity(cols, cols);
    MatrixXd mv = m(y);
    big.topRightCorner(rows, cols) = mv;
    big.bottomLeftCorner(cols, rows) = mv.transpose();
    return big;
  };
  p.blocks.push_back(probe_affine_block(p.num_vars, assemble, std::move(label)));
}

const char* to_string(SdpStatus s) {
  switch (s) {
    case SdpStatus::kOptimal: return "optimal";
    case SdpStatus::kFeasible: return "feasible";
    case SdpStatus::kInfeasible: return "infeasible";
    case SdpStatus::kMaxIterations: return "max-iterations";
  }
  return "unknown";
}

namespace {

struct Barrier {
  const std::vector<LmiBlock>* blocks;
  double reg;
  VectorXd c;
  int total_dim = 0;

  Barrier(const std::vector<LmiBlock>& b, const VectorXd& obj, double reg_in)
      : blocks(&b), reg(reg_in), c(obj) {
    for (const LmiBlock& blk : b) total_dim += static_cast<int>(blk.constant.rows());
  }

  bool strictly_feasible(const VectorXd& y, double* min_diag = nullptr) const {
    double md = std::numeric_limits<double>::infinity();
    for (const LmiBlock& blk : *blocks) {
      Eigen::LLT<MatrixXd> llt(blk.eval(y));
      if (llt.info() != Eigen::Success) return false;
      md = std::min(md, llt.matrixL()(0, 0));
    }
    if (min_diag) *min_diag = md;
    return true;
  }

  // Value of c'y + reg*|y|^2 - mu * sum log det F_j(y); +inf outside the cone.
  double value(const VectorXd& y, double mu) const {
    double v = c.dot(y) + reg * y.squaredNorm();
    for (const LmiBlock& blk : *blocks) {
      Eigen::LLT<MatrixXd> llt(blk.eval(y));
      if (llt.info() != Eigen::Success)
        return std::numeric_limits<double>::infinity();
      double ld = 0.0;
      const auto& l = llt.matrixLLT();
      for (int i = 0; i < l.rows(); ++i) {
        if (l(i, i) <= 0.0) return std::numeric_limits<double>::infinity();
        ld += std::log(l(i, i));
      }
      v -= 2.0 * mu * ld;
    }
    return v;
  }

  bool derivatives(const VectorXd& y, double mu, VectorXd& g, MatrixXd& h) const {
    const int p = static_cast<int>(y.size());
    g = c + 2.0 * reg * y;
    h = 2.0 * reg * MatrixXd::Identity(p, p);
    for (const LmiBlock& blk : *blocks) {
      Eigen::LLT<MatrixXd> llt(blk.eval(y));
      if (llt.info() != Eigen::Success) return false;
      const int s = static_cast<int>(blk.constant.rows());
      const MatrixXd finv = llt.solve(MatrixXd::Identity(s, s));
      const int nt = static_cast<int>(blk.terms.size());
      std::vector<MatrixXd> m(nt);
      for (int a = 0; a < nt; ++a) {
        m[a] = finv * blk.terms[a].coeff;
        g(blk.terms[a].var) -= mu * m[a].trace();
      }
      for (int a = 0; a < nt; ++a)
        for (int b = a; b < nt; ++b) {
          const double v = mu * (m[a].array() * m[b].transpose().array()).sum();
          h(blk.terms[a].var, blk.terms[b].var) += v;
          if (blk.terms[a].var != blk.terms[b].var)
            h(blk.terms[b].var, blk.terms[a].var) += v;
        }
    }
    return true;
  }
};

struct CenterResult {
  bool converged = false;
  int iterations = 0;
};

// Damped Newton minimization of the barrier objective at fixed mu.
CenterResult center(const Barrier& bar, VectorXd& y, double mu,
                    const SolverOptions& opts,
                    const std::function<bool(const VectorXd&)>& stop_early) {
  CenterResult res;
  VectorXd g;
  MatrixXd h;
  for (int it = 0; it < opts.max_newton_per_mu; ++it) {
    if (stop_early && stop_early(y)) {
      res.converged = true;
      return res;
    }
    if (!bar.derivatives(y, mu, g, h)) return res;
    Eigen::LDLT<MatrixXd> ldlt;
    double ridge = 0.0;
    VectorXd step;
    for (int attempt = 0; attempt < 8; ++attempt) {
      MatrixXd hr = h;
      if (ridge > 0.0) hr.diagonal().array() += ridge;
      ldlt.compute(hr);
      if (ldlt.info() == Eigen::Success) {
        step = ldlt.solve(-g);
        if (step.allFinite() && g.dot(step) < 0.0) break;
      }
      ridge = ridge == 0.0 ? 1e-10 * std::max(1.0, h.diagonal().maxCoeff())
                           : ridge * 100.0;
      step.resize(0);
    }
    if (step.size() == 0) return res;

    const double decrement = std::sqrt(std::max(0.0, -g.dot(step)));
    ++res.iterations;
    if (decrement <= opts.newton_tol) {
      res.converged = true;
      return res;
    }

    const double f0 = bar.value(y, mu);
    const double slope = g.dot(step);
    double alpha = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      VectorXd cand = y + alpha * step;
      const double fc = bar.value(cand, mu);
      if (std::isfinite(fc) && fc <= f0 + 0.01 * alpha * slope) {
        y = cand;
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      res.converged = decrement <= 1e3 * opts.newton_tol;
      return res;
    }
  }
  return res;
}

double exact_min_margin(const std::vector<LmiBlock>& blocks, const VectorXd& y) {
  double m = std::numeric_limits<double>::infinity();
  for (const LmiBlock& blk : blocks) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(blk.eval(y),
                                               Eigen::EigenvaluesOnly);
    m = std::min(m, es.eigenvalues().minCoeff());
  }
  return blocks.empty() ? 0.0 : m;
}

// Phase I: minimize s with every block shifted by s*I, stopping as soon as
// the unshifted blocks are strictly feasible with the target margin.
bool phase_one(const SdpProblem& p, const SolverOptions& opts, VectorXd& y,
               double& achieved_margin, int& newton_count) {
  const int pv = p.num_vars;
  std::vector<LmiBlock> shifted = p.blocks;
  for (LmiBlock& blk : shifted) {
    const int s = static_cast<int>(blk.constant.rows());
    blk.terms.push_back({pv, MatrixXd::Identity(s, s)});
  }

  VectorXd ext(pv + 1);
  ext.head(pv) = y;
  double margin0 = exact_min_margin(p.blocks, y);
  ext(pv) = std::max(0.0, -margin0) + 1.0;

  VectorXd c = VectorXd::Zero(pv + 1);
  c(pv) = 1.0;
  Barrier bar(shifted, c, opts.regularization);

  auto good = [&](const VectorXd& cur) {
    return exact_min_margin(p.blocks, cur.head(pv)) >= opts.phase1_target;
  };

  double best_margin = margin0;
  double mu = std::max(1.0, ext(pv));
  for (int outer = 0; outer < opts.max_outer; ++outer) {
    CenterResult cr = center(bar, ext, mu, opts, good);
    newton_count += cr.iterations;
    best_margin = std::max(best_margin, exact_min_margin(p.blocks, ext.head(pv)));
    if (best_margin >= opts.phase1_target) {
      y = ext.head(pv);
      achieved_margin = best_margin;
      return true;
    }
    if (mu * bar.total_dim <= opts.gap_tol) break;
    mu *= opts.mu_factor;
  }
  achieved_margin = best_margin;
  return false;
}

}  // namespace

SdpSolution solve(const SdpProblem& p, const SolverOptions& opts,
                  const std::optional<VectorXd>& warm_start) {
  SdpSolution sol;
  sol.y = warm_start && warm_start->size() == p.num_vars
              ? *warm_start
              : VectorXd::Zero(p.num_vars);

  for (const LmiBlock& blk : p.blocks) {
    if (blk.constant.rows() != blk.constant.cols())
      throw std::invalid_argument("conic block not square");
    for (const LmiTerm& t : blk.terms)
      if (t.var < 0 || t.var >= p.num_vars ||
          t.coeff.rows() != blk.constant.rows() ||
          t.coeff.cols() != blk.constant.cols())
        throw std::invalid_argument("conic term shape/index invalid");
  }

  double margin = 0.0;
  if (!phase_one(p, opts, sol.y, margin, sol.newton_iterations)) {
    sol.status = SdpStatus::kInfeasible;
    sol.phase1_margin = margin;
    sol.message = "no strictly feasible point found (best margin " +
                  format_double(margin) + ")";
    return sol;
  }
  sol.phase1_margin = margin;

  const bool has_objective = p.objective.size() == p.num_vars &&
                             p.objective.cwiseAbs().maxCoeff() > 0.0;
  VectorXd c = has_objective ? p.objective : VectorXd::Zero(p.num_vars);
  const double reg = opts.regularization * std::max(1.0, c.cwiseAbs().maxCoeff());
  Barrier bar(p.blocks, c, reg);

  double mu = 1.0;
  if (has_objective) {
    VectorXd g;
    MatrixXd h;
    if (bar.derivatives(sol.y, 1.0, g, h)) {
      const double bnorm = (g - c - 2.0 * reg * sol.y).norm();
      mu = std::min(1e3, std::max(1e-2, c.norm() / std::max(1e-8, bnorm)));
    }
  }

  for (int outer = 0; outer < opts.max_outer; ++outer) {
    CenterResult cr = center(bar, sol.y, mu, opts, nullptr);
    sol.newton_iterations += cr.iterations;
    if (mu * bar.total_dim <= opts.gap_tol * std::max(1.0, std::abs(c.dot(sol.y))))
      break;
    if (!has_objective && outer >= 1) break;  // analytic centering only
    mu *= opts.mu_factor;
  }

  sol.objective = c.dot(sol.y);
  sol.min_margin = exact_min_margin(p.blocks, sol.y);
  if (sol.min_margin >= opts.recheck_margin) {
    sol.status = has_objective ? SdpStatus::kOptimal : SdpStatus::kFeasible;
  } else {
    sol.status = SdpStatus::kMaxIterations;
    sol.message = "eigenvalue re-check failed (margin " +
                  format_double(sol.min_margin) + ")";
  }
  return sol;
}

namespace {

double logdet_of(const MatrixXd& m) {
  Eigen::LLT<MatrixXd> llt(m);
  if (llt.info() != Eigen::Success)
    return -std::numeric_limits<double>::infinity();
  double ld = 0.0;
  for (int i = 0; i < m.rows(); ++i) {
    const double d = llt.matrixLLT()(i, i);
    if (d <= 0.0) return -std::numeric_limits<double>::infinity();
    ld += std::log(d);
  }
  return 2.0 * ld;
}

}  // namespace

LogDetResult logdet_maximize(const SdpProblem& p, const SymMatrixVar& x,
                             const LogDetOptions& opts) {
  LogDetResult res;
  SdpProblem work = p;
  work.objective = VectorXd();
  SdpSolution start = solve(work, opts.solver);
  if (!start.ok()) {
    res.status = start.status;
    res.message = "no feasible start: " + start.message;
    return res;
  }

  VectorXd y = start.y;
  double cur = logdet_of(x.value(y));
  res.objective_history.push_back(cur);

  for (int it = 0; it < opts.max_iterations; ++it) {
    const MatrixXd xk = x.value(y);
    Eigen::LLT<MatrixXd> llt(xk);
    if (llt.info() != Eigen::Success) break;
    const MatrixXd xinv = llt.solve(MatrixXd::Identity(x.n, x.n));

    VectorXd c = VectorXd::Zero(work.num_vars);
    const VectorXd tg = x.trace_gradient(xinv);
    for (size_t k = 0; k < x.idx.size(); ++k) c(x.idx[k]) = -tg(static_cast<int>(k));
    work.objective = c;

    SdpSolution step = solve(work, opts.solver, y);
    if (!step.ok()) break;

    // Line search on ln det along the ascent segment keeps monotonicity.
    const VectorXd d = step.y - y;
    double a = 0.0, b = 1.0;
    auto f = [&](double t) { return logdet_of(x.value(y + t * d)); };
    for (int ts = 0; ts < 60; ++ts) {
      const double m1 = a + (b - a) / 3.0, m2 = b - (b - a) / 3.0;
      if (f(m1) < f(m2))
        a = m1;
      else
        b = m2;
    }
    const double t = f(0.5 * (a + b)) >= f(1.0) ? 0.5 * (a + b) : 1.0;
    const double next = f(t);
    if (!(next > -std::numeric_limits<double>::infinity())) break;
    if (next >= cur) {
      y += t * d;
      res.objective_history.push_back(next);
    } else {
      res.objective_history.push_back(cur);
      break;
    }
    const double rel = std::abs(next - cur) / std::max(1.0, std::abs(next));
    cur = next;
    if (rel < opts.rel_tol) break;
  }

  res.y = y;
  res.logdet = cur;
  res.status = SdpStatus::kOptimal;
  return res;
}

void write_problem(std::ostream& os, const SdpProblem& p) {
  os << "sdp-problem v1\n";
  os << "vars " << p.num_vars << "\n";
  os << "objective";
  for (int i = 0; i < p.num_vars; ++i)
    os << " " << format_double(p.objective.size() == p.num_vars ? p.objective(i) : 0.0);
  os << "\n";
  os << "blocks " << p.blocks.size() << "\n";
  for (size_t j = 0; j < p.blocks.size(); ++j) {
    const LmiBlock& blk = p.blocks[j];
    const int s = static_cast<int>(blk.constant.rows());
    os << "block " << j << " size " << s << " terms " << blk.terms.size();
    if (!blk.label.empty()) os << " label " << blk.label;
    os << "\n";
    auto put = [&os, s](const MatrixXd& m) {
      for (int r = 0; r < s; ++r) {
        for (int ccol = 0; ccol < s; ++ccol)
          os << (ccol ? "," : "") << format_double(m(r, ccol));
        os << "\n";
      }
    };
    os << "const\n";
    put(blk.constant);
    for (const LmiTerm& t : blk.terms) {
      os << "term var " << t.var << "\n";
      put(t.coeff);
    }
  }
}

}  // namespace rstab
