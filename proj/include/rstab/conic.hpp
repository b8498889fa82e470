#ifndef RSTAB_CONIC_HPP
#define RSTAB_CONIC_HPP

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rstab/common.hpp"

namespace rstab {

// Linear matrix inequality in the decision vector y:
//   constant + sum_i terms[i].coeff * y[terms[i].var]  >= 0  (PSD).
// Coefficient matrices must be symmetric and match constant's size.
struct LmiTerm {
  int var;
  MatrixXd coeff;
};

struct LmiBlock {
  MatrixXd constant;
  std::vector<LmiTerm> terms;
  std::string label;

  MatrixXd eval(const VectorXd& y) const;
};

// Minimize c'y subject to a list of PSD blocks. Scalar inequalities are 1x1
// blocks. The kernel adds a fixed tiny quadratic regularizer so directions
// the constraints and objective leave flat (e.g. slack multipliers) stay
// bounded and end up small instead of drifting.
struct SdpProblem {
  int num_vars = 0;
  VectorXd objective;  // empty means feasibility only
  std::vector<LmiBlock> blocks;

  int add_var();
  std::vector<int> add_vars(int count);
  // Adds y[var] >= lo as a 1x1 block.
  void add_lower_bound(int var, double lo);
  void set_objective(const VectorXd& c);
};

// Indices of the packed upper triangle of a symmetric n x n matrix variable.
struct SymMatrixVar {
  int n = 0;
  std::vector<int> idx;  // row-major upper triangle: (0,0),(0,1)...,(1,1),...

  static SymMatrixVar create(SdpProblem& p, int n);
  MatrixXd value(const VectorXd& y) const;
  // Gradient of tr(G * X) with respect to the packed entries (G symmetric).
  VectorXd trace_gradient(const MatrixXd& g) const;
};

// Builds a block by probing an affine matrix map at zero and unit vectors.
// `assemble` must be affine in y and return a symmetric matrix.
LmiBlock probe_affine_block(int num_vars,
                            const std::function<MatrixXd(const VectorXd&)>& assemble,
                            std::string label = "");

// Appends the spectral-norm epigraph ||M(y)||_2 <= y[tvar] for an affine,
// possibly non-square M.
void add_spectral_epigraph(SdpProblem& p, int tvar,
                           const std::function<MatrixXd(const VectorXd&)>& m,
                           int rows, int cols, std::string label = "");

enum class SdpStatus { kOptimal, kFeasible, kInfeasible, kMaxIterations };

const char* to_string(SdpStatus s);

struct SdpSolution {
  SdpStatus status = SdpStatus::kMaxIterations;
  VectorXd y;
  double objective = 0.0;
  // Minimum eigenvalue over all blocks at y, from an eigenvalue re-check
  // independent of the solve path. Feasible statuses require >= -1e-7.
  double min_margin = 0.0;
  double phase1_margin = 0.0;
  int newton_iterations = 0;
  std::string message;

  bool ok() const {
    return status == SdpStatus::kOptimal || status == SdpStatus::kFeasible;
  }
};

struct SolverOptions {
  double regularization = 1e-8;   // quadratic drag on y
  double phase1_target = 1e-9;    // strict-interior margin demanded of phase I
  double mu_factor = 0.2;
  double gap_tol = 1e-9;          // stop when mu * total_cone_dim <= gap_tol
  double newton_tol = 1e-9;       // Newton decrement
  int max_newton_per_mu = 60;
  int max_outer = 90;
  double recheck_margin = -1e-7;  // eigenvalue re-check acceptance threshold
};

SdpSolution solve(const SdpProblem& p, const SolverOptions& opts = {},
                  const std::optional<VectorXd>& warm_start = std::nullopt);

struct LogDetResult {
  SdpStatus status = SdpStatus::kMaxIterations;
  VectorXd y;
  double logdet = 0.0;
  std::vector<double> objective_history;  // monotone nondecreasing
  std::string message;

  bool ok() const {
    return status == SdpStatus::kOptimal || status == SdpStatus::kFeasible;
  }
};

struct LogDetOptions {
  SolverOptions solver;
  double rel_tol = 1e-6;
  int max_iterations = 50;
};

// Maximizes ln det(X(y)) over the feasible set of p by repeated
// linearization: each step maximizes tr(X_prev^{-1} X) and a line search on
// ln det along the step keeps the objective sequence nondecreasing.
LogDetResult logdet_maximize(const SdpProblem& p, const SymMatrixVar& x,
                             const LogDetOptions& opts = {});

// Plain-text dump for cross-checking a problem with an external solver.
void write_problem(std::ostream& os, const SdpProblem& p);

}  // namespace rstab

#endif
