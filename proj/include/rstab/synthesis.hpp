#ifndef RSTAB_SYNTHESIS_HPP
#define RSTAB_SYNTHESIS_HPP

#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include "rstab/certificate.hpp"
#include "rstab/conic.hpp"
#include "rstab/model.hpp"
#include "rstab/sector.hpp"

namespace rstab {

struct SynthesisConfig {
  double w = 1.1;       // Lipschitz budget granted per unit of schedule
  int n_steps = 20;     // schedule resolution; step k uses delta = k/n_steps
  double sector_tol = 1e-3;
  long sector_max_boxes = 100000;
  double lmi_margin = 1e-4;   // strict-negativity demanded of the certificate matrix
  double init_margin = 1e-4;  // strict decrease demanded at the uncertainty vertices
  SolverOptions solver;
};

// Robust linear design at the uncertainty vertices: maximize ln det Q
// subject to Q A_v' + A_v Q + B_v Y + Y' B_v' <= -margin I at every vertex
// and ||Q a_i|| <= b_i for every domain face; returns K = Y Q^{-1},
// P = Q^{-1}.
struct NominalDesign {
  MatrixXd gain;
  MatrixXd p;
};

NominalDesign init_nominal(const PlantModel& model, const ParamBox& params,
                           const SafePolytope& domain,
                           const SynthesisConfig& cfg = {});

// Multiplier feasibility for a frozen (gain, P, budget): finds nonnegative
// (gamma, lambda) making the certificate matrix negative definite, if any.
std::optional<QcMultipliers> solve_multipliers(const SectorBound& sector,
                                               const MatrixXd& a0,
                                               const MatrixXd& b0,
                                               const MatrixXd& p,
                                               double lipschitz,
                                               const SynthesisConfig& cfg = {});

// Gain update: minimize ||K - K_prev||_2 over gains admitting multipliers
// for the frozen P and sector (which was computed at K_prev).
std::optional<MatrixXd> solve_gain_step(const SectorBound& sector,
                                        const MatrixXd& a0, const MatrixXd& b0,
                                        const MatrixXd& p_prev,
                                        const MatrixXd& gain_prev,
                                        double lipschitz,
                                        const SynthesisConfig& cfg = {});

// Lyapunov update: minimize ||P - P_prev||_2 over shapes admitting
// multipliers for the frozen gain and its recomputed sector.
struct LyapunovUpdate {
  MatrixXd p;
  QcMultipliers multipliers;
};

std::optional<LyapunovUpdate> solve_lyapunov_step(
    const SectorBound& sector, const MatrixXd& a0, const MatrixXd& b0,
    const MatrixXd& gain, const MatrixXd& p_prev, double lipschitz,
    const SynthesisConfig& cfg = {});

// One schedule point: recompute the sector at the incumbent gain, move the
// gain, recompute at the new gain, move the Lyapunov shape. Empty result
// means this schedule point is infeasible and the caller should roll back.
struct IterationStep {
  MatrixXd gain;
  MatrixXd p;
  QcMultipliers multipliers;
  SectorBound sector;  // sector at (gain, budget) used by the final solve
};

std::optional<IterationStep> iteration_step(const PlantModel& model,
                                            const ParamBox& params,
                                            const SafePolytope& scaled_domain,
                                            const MatrixXd& gain_prev,
                                            const MatrixXd& p_prev,
                                            double lipschitz,
                                            const SynthesisConfig& cfg = {});

struct IterationRecord {
  int k = 0;
  double delta = 0.0;
  double lipschitz = 0.0;
  bool feasible = false;
  VectorXd eig_real;  // real parts of eig(A0 + B0 K) for the retained gain
  double sigma = 0.0; // inscribed level of the retained shape in the domain
};

struct SynthesisResult {
  StabilityCertificate certificate;
  NominalDesign nominal;
  int iterations = 0;  // successful schedule points; certificate reflects them
  std::vector<IterationRecord> log;
  SectorBound sector;  // matches the certificate's gain and budget
};

// Test seam: veto(k) == true forces schedule point k infeasible.
struct SynthesisHooks {
  std::function<bool(int)> veto;
};

// Full schedule: nominal design, then k = 1..n_steps with growing domain
// fraction and budget, stopping at the first infeasible point and keeping
// the last feasible iterate. With zero successful iterations the result
// carries the nominal design only (budget 0, multipliers zero, full domain);
// such a certificate makes no nonlinear claim and does not verify.
SynthesisResult synthesize(const PlantModel& model, const ParamBox& params,
                           const SafePolytope& domain,
                           const SynthesisConfig& cfg = {},
                           const SynthesisHooks& hooks = {});

// CSV: k, delta, lipschitz, feasible, eig real parts, sigma.
void write_iteration_log(std::ostream& os,
                         const std::vector<IterationRecord>& log);

}  // namespace rstab

#endif
