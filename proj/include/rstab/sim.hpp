#ifndef RSTAB_SIM_HPP
#define RSTAB_SIM_HPP

#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "rstab/certificate.hpp"
#include "rstab/model.hpp"

namespace rstab {

// Total state-feedback control law u(x); must be deterministic so paired
// evaluations of several policies can share random draws.
using Policy = std::function<VectorXd(const VectorXd&)>;
using Reward = std::function<double(const VectorXd&, const VectorXd&)>;

Policy linear_policy(const MatrixXd& gain);
// r(x, u) = -(x'x + control_weight u'u), the quadratic running cost.
Reward quadratic_reward(double state_weight = 1.0,
                        double control_weight = 0.1);

// One classical fourth-order step of xdot = f(x).
VectorXd rk4_step(const std::function<VectorXd(const VectorXd&)>& f,
                  const VectorXd& x, double h);

struct Trajectory {
  MatrixXd states;    // (steps+1) x n
  MatrixXd controls;  // steps x m, held over each period
  MatrixXd params;    // steps x d, held over each period
  VectorXd rewards;   // steps, evaluated at (x(k), u(k))
  double tau = 0.0;
  bool diverged = false;

  int steps() const { return static_cast<int>(controls.rows()); }
};

// Parameters held constant within a sampling period, redrawn uniformly over
// the box at each period boundary.
struct ParamSampler {
  ParamBox box;

  VectorXd operator()(Rng& rng) const;
};

struct RolloutOptions {
  int substeps = 10;
  double divergence_norm = 1e6;  // truncate and flag past this state norm
};

// Zero-order-hold closed-loop integration for n_s periods of length tau.
// On divergence the trajectory is truncated to the completed periods.
Trajectory rk4_rollout(const PlantModel& model, const Policy& policy,
                       const VectorXd& x0, const ParamSampler& sampler,
                       const Reward& reward, int n_s, double tau, Rng& rng,
                       const RolloutOptions& opts = {});

// Riemann sum of the running reward: sum_k r(x(k), u(k)) * tau.
double utility(const Trajectory& traj);

struct LqrResult {
  MatrixXd gain;    // u = gain * x
  MatrixXd p;       // stabilizing Riccati solution
  double residual;  // norm of the Riccati defect at p
};

// Continuous-time LQR via Newton iteration on the Riccati equation, seeded
// with a stabilizing gain when the drift matrix is not already stable.
LqrResult lqr_gain(const MatrixXd& a, const MatrixXd& b, const MatrixXd& q,
                   const MatrixXd& r);

struct UtilityStats {
  std::string name;
  VectorXd utilities;  // one entry per run, run order
  int diverged = 0;
  double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
};

// Order statistics with linearly interpolated quartiles.
UtilityStats summarize(std::string name, VectorXd utilities);

struct EvalConfig {
  int n_runs = 40;
  int n_s = 200;
  double tau = 0.1;
  int substeps = 10;
  unsigned long long seed = 0;
};

// Paired Monte-Carlo comparison: run i draws its start from the ellipsoid
// and its parameter path from the sampler using a seed derived only from
// (seed, i), so every policy sees identical scenarios.
std::vector<UtilityStats> monte_carlo_eval(
    const PlantModel& model,
    const std::vector<std::pair<std::string, Policy>>& policies,
    const Ellipsoid& init_set, const ParamSampler& sampler,
    const Reward& reward, const EvalConfig& cfg);

// CSV: t, states, controls, params, reward (one row per period).
void write_trajectory_csv(std::ostream& os, const Trajectory& traj);
// CSV: policy, runs, diverged, min, q1, median, q3, max.
void write_stats_csv(std::ostream& os,
                     const std::vector<UtilityStats>& stats);

}  // namespace rstab

#endif
