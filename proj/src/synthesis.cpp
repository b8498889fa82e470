#include "rstab/synthesis.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <ostream>
#include <stdexcept>

namespace rstab {

namespace {

MatrixXd unpack(const VectorXd& y, const std::vector<int>& vars, int rows,
                int cols) {
  MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = y(vars[i * cols + j]);
  return m;
}

struct MultiplierVars {
  std::vector<int> gamma, lambda;
};

MultiplierVars add_multiplier_vars(SdpProblem& p, int n, int m) {
  MultiplierVars v;
  v.gamma = p.add_vars(m * n);
  v.lambda = p.add_vars(n * (n + m));
  for (int k : v.gamma) p.add_lower_bound(k, 0.0);
  for (int k : v.lambda) p.add_lower_bound(k, 0.0);
  return v;
}

QcMultipliers extract_multipliers(const VectorXd& y, const MultiplierVars& mv,
                                  int n, int m) {
  return {unpack(y, mv.gamma, m, n).cwiseMax(0.0),
          unpack(y, mv.lambda, n, n + m).cwiseMax(0.0)};
}

// -T(y) - margin I >= 0 where T is the certificate matrix; a0k_of and p_of
// must each be affine in y (one of them is typically constant).
LmiBlock certificate_block(
    int num_vars, const SectorBound& sector,
    const std::function<MatrixXd(const VectorXd&)>& a0k_of,
    const MatrixXd& b0, const std::function<MatrixXd(const VectorXd&)>& p_of,
    const MultiplierVars& mv, double lipschitz, double margin) {
  const int n = sector.state_dim();
  const int m = sector.input_dim();
  return probe_affine_block(
      num_vars,
      [&](const VectorXd& y) {
        const MatrixXd gamma = unpack(y, mv.gamma, m, n);
        const MatrixXd lambda = unpack(y, mv.lambda, n, n + m);
        const SectorQcBlocks blk = sector_qc_blocks(sector, lambda);
        const MatrixXd t =
            stability_lmi(a0k_of(y), b0, p_of(y), blk, lipschitz, gamma);
        const int sz = static_cast<int>(t.rows());
        return (-t - margin * MatrixXd::Identity(sz, sz)).eval();
      },
      "certificate");
}

SectorOptions sector_options(const SynthesisConfig& cfg) {
  SectorOptions o;
  o.tol = cfg.sector_tol;
  o.max_boxes = cfg.sector_max_boxes;
  return o;
}

MatrixXd symmetrized(const MatrixXd& m) {
  return 0.5 * (m + m.transpose());
}

}  // namespace

NominalDesign init_nominal(const PlantModel& model, const ParamBox& params,
                           const SafePolytope& domain,
                           const SynthesisConfig& cfg) {
  const int n = model.state_dim, m = model.input_dim;
  if (domain.dim() != n)
    throw std::invalid_argument("domain dimension inconsistent with plant");
  const UncertaintyVertices uv =
      uncertainty_vertices(model, params, cfg.sector_tol);

  SdpProblem prob;
  const SymMatrixVar q = SymMatrixVar::create(prob, n);
  const std::vector<int> yv = prob.add_vars(m * n);

  // Closed-loop decrease at every extreme linearization.
  for (const LinearizedDynamics& v : uv.vertices)
    prob.blocks.push_back(probe_affine_block(
        prob.num_vars,
        [&](const VectorXd& y) {
          const MatrixXd qm = q.value(y);
          const MatrixXd ym = unpack(y, yv, m, n);
          const MatrixXd s = qm * v.a.transpose() + v.a * qm + v.b * ym +
                             ym.transpose() * v.b.transpose();
          return (-s - cfg.init_margin * MatrixXd::Identity(n, n)).eval();
        },
        "vertex"));

  // ||Q a_i|| <= b_i keeps the shape compatible with the domain faces.
  for (int i = 0; i < domain.num_faces(); ++i) {
    const VectorXd a = domain.faces().row(i).transpose();
    const double b = domain.offsets()(i);
    prob.blocks.push_back(probe_affine_block(
        prob.num_vars,
        [&](const VectorXd& y) {
          MatrixXd s = MatrixXd::Zero(n + 1, n + 1);
          s.topLeftCorner(n, n) = b * MatrixXd::Identity(n, n);
          s.block(0, n, n, 1) = q.value(y) * a;
          s.block(n, 0, 1, n) = (q.value(y) * a).transpose();
          s(n, n) = b;
          return s;
        },
        "face"));
  }

  prob.blocks.push_back(probe_affine_block(
      prob.num_vars,
      [&](const VectorXd& y) {
        return (q.value(y) - 1e-6 * MatrixXd::Identity(n, n)).eval();
      },
      "shape-floor"));

  LogDetOptions lopts;
  lopts.solver = cfg.solver;
  const LogDetResult res = logdet_maximize(prob, q, lopts);
  if (!res.ok())
    throw std::runtime_error("not robustly stabilizable at the linear level");

  const MatrixXd qv = symmetrized(q.value(res.y));
  const MatrixXd p0 =
      symmetrized(qv.llt().solve(MatrixXd::Identity(n, n)));
  NominalDesign nd;
  nd.p = p0;
  nd.gain = unpack(res.y, yv, m, n) * p0;
  return nd;
}

std::optional<QcMultipliers> solve_multipliers(const SectorBound& sector,
                                               const MatrixXd& a0,
                                               const MatrixXd& b0,
                                               const MatrixXd& p,
                                               double lipschitz,
                                               const SynthesisConfig& cfg) {
  const int n = sector.state_dim(), m = sector.input_dim();
  const MatrixXd a0k = a0 + b0 * sector.gain;
  SdpProblem prob;
  const MultiplierVars mv = add_multiplier_vars(prob, n, m);
  prob.blocks.push_back(certificate_block(
      prob.num_vars, sector, [&](const VectorXd&) { return a0k; }, b0,
      [&](const VectorXd&) { return p; }, mv, lipschitz, cfg.lmi_margin));
  const SdpSolution sol = solve(prob, cfg.solver);
  if (!sol.ok()) return std::nullopt;
  return extract_multipliers(sol.y, mv, n, m);
}

std::optional<MatrixXd> solve_gain_step(const SectorBound& sector,
                                        const MatrixXd& a0, const MatrixXd& b0,
                                        const MatrixXd& p_prev,
                                        const MatrixXd& gain_prev,
                                        double lipschitz,
                                        const SynthesisConfig& cfg) {
  const int n = sector.state_dim(), m = sector.input_dim();
  SdpProblem prob;
  const std::vector<int> kv = prob.add_vars(m * n);
  const MultiplierVars mv = add_multiplier_vars(prob, n, m);
  const int tv = prob.add_var();
  prob.add_lower_bound(tv, 0.0);
  VectorXd c = VectorXd::Zero(prob.num_vars);
  c(tv) = 1.0;
  prob.set_objective(c);

  prob.blocks.push_back(certificate_block(
      prob.num_vars, sector,
      [&](const VectorXd& y) { return (a0 + b0 * unpack(y, kv, m, n)).eval(); },
      b0, [&](const VectorXd&) { return p_prev; }, mv, lipschitz,
      cfg.lmi_margin));
  add_spectral_epigraph(
      prob, tv,
      [&](const VectorXd& y) { return (unpack(y, kv, m, n) - gain_prev).eval(); },
      m, n, "gain-step");

  const SdpSolution sol = solve(prob, cfg.solver);
  if (!sol.ok()) return std::nullopt;
  return unpack(sol.y, kv, m, n);
}

std::optional<LyapunovUpdate> solve_lyapunov_step(
    const SectorBound& sector, const MatrixXd& a0, const MatrixXd& b0,
    const MatrixXd& gain, const MatrixXd& p_prev, double lipschitz,
    const SynthesisConfig& cfg) {
  const int n = sector.state_dim(), m = sector.input_dim();
  const MatrixXd a0k = a0 + b0 * gain;
  SdpProblem prob;
  const SymMatrixVar pv = SymMatrixVar::create(prob, n);
  const MultiplierVars mv = add_multiplier_vars(prob, n, m);
  const int tv = prob.add_var();
  prob.add_lower_bound(tv, 0.0);
  VectorXd c = VectorXd::Zero(prob.num_vars);
  c(tv) = 1.0;
  prob.set_objective(c);

  prob.blocks.push_back(certificate_block(
      prob.num_vars, sector, [&](const VectorXd&) { return a0k; }, b0,
      [&](const VectorXd& y) { return pv.value(y); }, mv, lipschitz,
      cfg.lmi_margin));
  prob.blocks.push_back(probe_affine_block(
      prob.num_vars,
      [&](const VectorXd& y) {
        return (pv.value(y) - 1e-8 * MatrixXd::Identity(n, n)).eval();
      },
      "shape-floor"));
  add_spectral_epigraph(
      prob, tv,
      [&](const VectorXd& y) { return (pv.value(y) - p_prev).eval(); }, n, n,
      "shape-step");

  const SdpSolution sol = solve(prob, cfg.solver);
  if (!sol.ok()) return std::nullopt;
  LyapunovUpdate up;
  up.p = symmetrized(pv.value(sol.y));
  up.multipliers = extract_multipliers(sol.y, mv, n, m);
  return up;
}

std::optional<IterationStep> iteration_step(const PlantModel& model,
                                            const ParamBox& params,
                                            const SafePolytope& scaled_domain,
                                            const MatrixXd& gain_prev,
                                            const MatrixXd& p_prev,
                                            double lipschitz,
                                            const SynthesisConfig& cfg) {
  const LinearizedDynamics nom =
      linearize(model, VectorXd::Zero(model.param_dim));
  const SectorOptions sopts = sector_options(cfg);

  const SectorBound sec_prev = compute_sector(model, gain_prev, lipschitz,
                                              scaled_domain, params, sopts);
  const std::optional<MatrixXd> gain = solve_gain_step(
      sec_prev, nom.a, nom.b, p_prev, gain_prev, lipschitz, cfg);
  if (!gain) return std::nullopt;

  const SectorBound sec_next =
      compute_sector(model, *gain, lipschitz, scaled_domain, params, sopts);
  const std::optional<LyapunovUpdate> up = solve_lyapunov_step(
      sec_next, nom.a, nom.b, *gain, p_prev, lipschitz, cfg);
  if (!up) return std::nullopt;

  IterationStep step;
  step.gain = *gain;
  step.p = up->p;
  step.multipliers = up->multipliers;
  step.sector = sec_next;
  return step;
}

SynthesisResult synthesize(const PlantModel& model, const ParamBox& params,
                           const SafePolytope& domain,
                           const SynthesisConfig& cfg,
                           const SynthesisHooks& hooks) {
  if (cfg.n_steps < 1)
    throw std::invalid_argument("schedule needs at least one step");
  if (cfg.w < 0.0)
    throw std::invalid_argument("trade-off weight must be nonnegative");
  const int n = model.state_dim, m = model.input_dim;
  const LinearizedDynamics nom =
      linearize(model, VectorXd::Zero(model.param_dim));

  SynthesisResult out;
  out.nominal = init_nominal(model, params, domain, cfg);

  MatrixXd gain = out.nominal.gain;
  MatrixXd p = out.nominal.p;
  QcMultipliers mult{MatrixXd::Zero(m, n), MatrixXd::Zero(n, n + m)};
  SafePolytope final_domain = domain;
  std::optional<SectorBound> final_sector;
  double delta = 0.0, lipschitz = 0.0;
  int successes = 0;

  for (int k = 1; k <= cfg.n_steps; ++k) {
    const double delta_k = static_cast<double>(k) / cfg.n_steps;
    const double lip_k = cfg.w * delta_k;
    const SafePolytope domain_k = domain.scaled(delta_k);

    std::optional<IterationStep> step;
    if (!(hooks.veto && hooks.veto(k)))
      step = iteration_step(model, params, domain_k, gain, p, lip_k, cfg);

    if (step) {
      gain = step->gain;
      p = step->p;
      mult = step->multipliers;
      final_sector = step->sector;
      final_domain = domain_k;
      delta = delta_k;
      lipschitz = lip_k;
      successes = k;
    }

    IterationRecord rec;
    rec.k = k;
    rec.delta = delta_k;
    rec.lipschitz = lip_k;
    rec.feasible = step.has_value();
    const Eigen::EigenSolver<MatrixXd> es(nom.a + nom.b * gain);
    rec.eig_real = es.eigenvalues().real();
    rec.sigma = max_level(p, successes > 0 ? final_domain : domain);
    out.log.push_back(rec);
    if (!step) break;
  }

  out.iterations = successes;
  out.certificate.gain = gain;
  out.certificate.lipschitz = lipschitz;
  out.certificate.p = p;
  out.certificate.multipliers = mult;
  out.certificate.delta = delta;
  out.certificate.domain = final_domain;
  out.certificate.sigma = max_level(p, final_domain);
  out.sector = final_sector
                   ? *final_sector
                   : compute_sector(model, gain, 0.0, domain, params,
                                    sector_options(cfg));
  return out;
}

void write_iteration_log(std::ostream& os,
                         const std::vector<IterationRecord>& log) {
  const int n = log.empty() ? 0 : static_cast<int>(log.front().eig_real.size());
  os << "k,delta,lipschitz,feasible";
  for (int i = 0; i < n; ++i) os << ",eig_re_" << i;
  os << ",sigma\n";
  for (const IterationRecord& r : log) {
    os << r.k << "," << format_double(r.delta) << ","
       << format_double(r.lipschitz) << "," << (r.feasible ? 1 : 0);
    for (int i = 0; i < n; ++i) os << "," << format_double(r.eig_real(i));
    os << "," << format_double(r.sigma) << "\n";
  }
}

}  // namespace rstab
