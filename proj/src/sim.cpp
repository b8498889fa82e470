#include "rstab/sim.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "rstab/conic.hpp"

namespace rstab {

Policy linear_policy(const MatrixXd& gain) {
  return [gain](const VectorXd& x) { return (gain * x).eval(); };
}

Reward quadratic_reward(double state_weight, double control_weight) {
  return [state_weight, control_weight](const VectorXd& x, const VectorXd& u) {
    return -(state_weight * x.squaredNorm() + control_weight * u.squaredNorm());
  };
}

VectorXd rk4_step(const std::function<VectorXd(const VectorXd&)>& f,
                  const VectorXd& x, double h) {
  const VectorXd k1 = f(x);
  const VectorXd k2 = f(x + 0.5 * h * k1);
  const VectorXd k3 = f(x + 0.5 * h * k2);
  const VectorXd k4 = f(x + h * k3);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

VectorXd ParamSampler::operator()(Rng& rng) const {
  const Box b = box.box();
  VectorXd out(b.size());
  for (int i = 0; i < b.size(); ++i)
    out(i) = uniform(rng, b(i).lo(), b(i).hi());
  return out;
}

Trajectory rk4_rollout(const PlantModel& model, const Policy& policy,
                       const VectorXd& x0, const ParamSampler& sampler,
                       const Reward& reward, int n_s, double tau, Rng& rng,
                       const RolloutOptions& opts) {
  if (x0.size() != model.state_dim)
    throw std::invalid_argument("initial state dimension mismatch");
  if (!(tau > 0.0)) throw std::invalid_argument("sampling interval must be positive");
  if (opts.substeps < 1) throw std::invalid_argument("substeps must be positive");
  if (n_s < 0) throw std::invalid_argument("negative horizon");

  Trajectory traj;
  traj.tau = tau;
  traj.states.resize(n_s + 1, model.state_dim);
  traj.controls.resize(n_s, model.input_dim);
  traj.params.resize(n_s, model.param_dim);
  traj.rewards.resize(n_s);

  VectorXd x = x0;
  traj.states.row(0) = x0.transpose();
  const double h = tau / opts.substeps;
  for (int k = 0; k < n_s; ++k) {
    const VectorXd u = policy(x);
    const VectorXd theta = sampler(rng);
    const double r = reward(x, u);
    const auto f = [&](const VectorXd& s) {
      return eval_dynamics(model, s, u, theta);
    };
    bool blown = false;
    for (int s = 0; s < opts.substeps; ++s) {
      x = rk4_step(f, x, h);
      if (!x.allFinite() || x.norm() > opts.divergence_norm) {
        blown = true;
        break;
      }
    }
    if (blown) {
      traj.states.conservativeResize(k + 1, Eigen::NoChange);
      traj.controls.conservativeResize(k, Eigen::NoChange);
      traj.params.conservativeResize(k, Eigen::NoChange);
      traj.rewards.conservativeResize(k);
      traj.diverged = true;
      return traj;
    }
    traj.states.row(k + 1) = x.transpose();
    traj.controls.row(k) = u.transpose();
    traj.params.row(k) = theta.transpose();
    traj.rewards(k) = r;
  }
  return traj;
}

double utility(const Trajectory& traj) {
  return traj.rewards.size() ? traj.rewards.sum() * traj.tau : 0.0;
}

namespace {

bool is_hurwitz(const MatrixXd& a) {
  return Eigen::EigenSolver<MatrixXd>(a).eigenvalues().real().maxCoeff() <
         0.0;
}

// a_cl' p + p a_cl = -s, solved as the n^2 linear system on vec(p).
MatrixXd solve_lyapunov(const MatrixXd& a_cl, const MatrixXd& s) {
  const int n = static_cast<int>(a_cl.rows());
  MatrixXd big = MatrixXd::Zero(n * n, n * n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c)
      big.block(r * n, c * n, n, n) =
          a_cl(c, r) * MatrixXd::Identity(n, n);
  for (int d = 0; d < n; ++d)
    big.block(d * n, d * n, n, n) += a_cl.transpose();
  const Eigen::Map<const VectorXd> vec_s(s.data(), n * n);
  const VectorXd v = big.partialPivLu().solve(-vec_s);
  const Eigen::Map<const MatrixXd> p(v.data(), n, n);
  return 0.5 * (p + p.transpose());
}

MatrixXd unpack_gain(const VectorXd& y, const std::vector<int>& vars, int m,
                     int n) {
  MatrixXd k(m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) k(i, j) = y(vars[i * n + j]);
  return k;
}

// Any gain making a + b k stable, found as a feasibility cone problem.
MatrixXd stabilizing_gain(const MatrixXd& a, const MatrixXd& b) {
  const int n = static_cast<int>(a.rows());
  const int m = static_cast<int>(b.cols());
  if (is_hurwitz(a)) return MatrixXd::Zero(m, n);

  SdpProblem prob;
  const SymMatrixVar qv = SymMatrixVar::create(prob, n);
  const std::vector<int> yv = prob.add_vars(m * n);
  prob.blocks.push_back(probe_affine_block(
      prob.num_vars,
      [&](const VectorXd& y) {
        const MatrixXd q = qv.value(y);
        const MatrixXd ym = unpack_gain(y, yv, m, n);
        const MatrixXd s = q * a.transpose() + a * q + b * ym +
                           ym.transpose() * b.transpose();
        return (-s - 1e-4 * MatrixXd::Identity(n, n)).eval();
      },
      "decay"));
  prob.blocks.push_back(probe_affine_block(
      prob.num_vars,
      [&](const VectorXd& y) {
        return (qv.value(y) - 1e-4 * MatrixXd::Identity(n, n)).eval();
      },
      "shape-floor"));
  const SdpSolution sol = solve(prob);
  if (!sol.ok()) throw std::runtime_error("pair not stabilizable");
  const MatrixXd q = 0.5 * (qv.value(sol.y) + qv.value(sol.y).transpose());
  const MatrixXd k =
      unpack_gain(sol.y, yv, m, n) * q.llt().solve(MatrixXd::Identity(n, n));
  if (!is_hurwitz(a + b * k)) throw std::runtime_error("pair not stabilizable");
  return k;
}

double riccati_residual(const MatrixXd& a, const MatrixXd& b,
                        const MatrixXd& q, const MatrixXd& r_inv,
                        const MatrixXd& p) {
  return (a.transpose() * p + p * a -
          p * b * r_inv * b.transpose() * p + q)
      .norm();
}

}  // namespace

LqrResult lqr_gain(const MatrixXd& a, const MatrixXd& b, const MatrixXd& q,
                   const MatrixXd& r) {
  const int n = static_cast<int>(a.rows());
  const int m = static_cast<int>(b.cols());
  if (a.cols() != n || b.rows() != n || q.rows() != n || q.cols() != n ||
      r.rows() != m || r.cols() != m)
    throw std::invalid_argument("lqr dimension mismatch");
  Eigen::LLT<MatrixXd> rchol(r);
  if (rchol.info() != Eigen::Success)
    throw std::invalid_argument("control weight must be positive definite");
  const MatrixXd r_inv = rchol.solve(MatrixXd::Identity(m, m));

  MatrixXd gain = stabilizing_gain(a, b);
  MatrixXd p = MatrixXd::Zero(n, n);
  for (int iter = 0; iter < 100; ++iter) {
    const MatrixXd a_cl = a + b * gain;
    p = solve_lyapunov(a_cl, q + gain.transpose() * r * gain);
    const MatrixXd next = -r_inv * b.transpose() * p;
    const double res = riccati_residual(a, b, q, r_inv, p);
    const double move = (next - gain).norm();
    gain = next;
    if (res <= 1e-12 * std::max(1.0, p.norm()) && move <= 1e-10) break;
  }
  LqrResult out;
  out.gain = gain;
  out.p = p;
  out.residual = riccati_residual(a, b, q, r_inv, p);
  if (!(out.residual <= 1e-8 * std::max(1.0, p.norm())))
    throw std::runtime_error("riccati iteration did not converge");
  return out;
}

UtilityStats summarize(std::string name, VectorXd utilities) {
  UtilityStats st;
  st.name = std::move(name);
  st.utilities = std::move(utilities);
  if (st.utilities.size() == 0) return st;
  std::vector<double> s(st.utilities.data(),
                        st.utilities.data() + st.utilities.size());
  std::sort(s.begin(), s.end());
  const auto at = [&](double frac) {
    const double h = (s.size() - 1) * frac;
    const size_t lo = static_cast<size_t>(h);
    if (lo + 1 >= s.size()) return s.back();
    return s[lo] + (h - lo) * (s[lo + 1] - s[lo]);
  };
  st.min = s.front();
  st.q1 = at(0.25);
  st.median = at(0.5);
  st.q3 = at(0.75);
  st.max = s.back();
  return st;
}

std::vector<UtilityStats> monte_carlo_eval(
    const PlantModel& model,
    const std::vector<std::pair<std::string, Policy>>& policies,
    const Ellipsoid& init_set, const ParamSampler& sampler,
    const Reward& reward, const EvalConfig& cfg) {
  if (cfg.n_runs < 0) throw std::invalid_argument("negative run count");
  RolloutOptions ropts;
  ropts.substeps = cfg.substeps;

  std::vector<UtilityStats> out;
  for (const auto& [name, policy] : policies) {
    VectorXd utils(cfg.n_runs);
    std::vector<char> blown(cfg.n_runs, 0);
    parallel_for(cfg.n_runs, [&](int run) {
      // Seed depends only on (seed, run): every policy sees the same
      // start state and parameter path.
      Rng rng(split_seed(cfg.seed, run));
      const VectorXd x0 = init_set.sample(rng);
      const Trajectory traj = rk4_rollout(model, policy, x0, sampler, reward,
                                          cfg.n_s, cfg.tau, rng, ropts);
      utils(run) = utility(traj);
      blown[run] = traj.diverged ? 1 : 0;
    });
    UtilityStats st = summarize(name, std::move(utils));
    for (char b : blown) st.diverged += b;
    out.push_back(std::move(st));
  }
  return out;
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  const int n = static_cast<int>(traj.states.cols());
  const int m = static_cast<int>(traj.controls.cols());
  const int d = static_cast<int>(traj.params.cols());
  os << "t";
  for (int i = 0; i < n; ++i) os << ",x_" << i;
  for (int i = 0; i < m; ++i) os << ",u_" << i;
  for (int i = 0; i < d; ++i) os << ",theta_" << i;
  os << ",r\n";
  for (int k = 0; k <= traj.steps(); ++k) {
    os << format_double(k * traj.tau);
    for (int i = 0; i < n; ++i)
      os << "," << format_double(traj.states(k, i));
    if (k < traj.steps()) {
      for (int i = 0; i < m; ++i)
        os << "," << format_double(traj.controls(k, i));
      for (int i = 0; i < d; ++i)
        os << "," << format_double(traj.params(k, i));
      os << "," << format_double(traj.rewards(k));
    } else {
      // Terminal sample carries no held inputs; keep the row rectangular.
      for (int i = 0; i < m + d + 1; ++i) os << ",";
    }
    os << "\n";
  }
}

void write_stats_csv(std::ostream& os,
                     const std::vector<UtilityStats>& stats) {
  os << "policy,runs,diverged,min,q1,median,q3,max\n";
  for (const UtilityStats& st : stats) {
    os << st.name << "," << st.utilities.size() << "," << st.diverged << ","
       << format_double(st.min) << "," << format_double(st.q1) << ","
       << format_double(st.median) << "," << format_double(st.q3) << ","
       << format_double(st.max) << "\n";
  }
}

}  // namespace rstab
