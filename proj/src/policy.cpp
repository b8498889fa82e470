#include <rstab/policy.hpp>

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace rstab {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

// Forward pass keeping every layer's activation (a[0] = x, a[i] = output of
// layer i); hidden activations are already through tanh.
std::vector<VectorXd> activations(const Mlp& net, const VectorXd& x) {
  std::vector<VectorXd> a;
  a.reserve(net.weights.size() + 1);
  a.push_back(x);
  for (int i = 0; i < net.layer_count(); ++i) {
    VectorXd z = net.weights[static_cast<std::size_t>(i)] * a.back();
    if (i + 1 < net.layer_count()) z = z.array().tanh().matrix();
    a.push_back(std::move(z));
  }
  return a;
}

double induced_inf_norm(const MatrixXd& w) {
  return w.rows() == 0 ? 0.0 : w.cwiseAbs().rowwise().sum().maxCoeff();
}

}  // namespace

Mlp::Mlp(std::vector<MatrixXd> w) : weights(std::move(w)) {
  require(!weights.empty(), "network needs at least one layer");
  for (std::size_t i = 0; i < weights.size(); ++i) {
    require(weights[i].rows() > 0 && weights[i].cols() > 0,
            "empty weight matrix");
    if (i + 1 < weights.size())
      require(weights[i + 1].cols() == weights[i].rows(),
              "layer dimensions do not chain");
  }
}

int Mlp::input_dim() const {
  return weights.empty() ? 0 : static_cast<int>(weights.front().cols());
}

int Mlp::output_dim() const {
  return weights.empty() ? 0 : static_cast<int>(weights.back().rows());
}

int Mlp::parameter_count() const {
  int count = 0;
  for (const MatrixXd& w : weights) count += static_cast<int>(w.size());
  return count;
}

VectorXd Mlp::forward(const VectorXd& x) const {
  require(!weights.empty(), "empty network");
  require(x.size() == input_dim(), "input dimension mismatch");
  return activations(*this, x).back();
}

VectorXd Mlp::flat() const {
  VectorXd p(parameter_count());
  int at = 0;
  for (const MatrixXd& w : weights)
    for (int r = 0; r < w.rows(); ++r)
      for (int c = 0; c < w.cols(); ++c) p(at++) = w(r, c);
  return p;
}

void Mlp::set_flat(const VectorXd& p) {
  require(p.size() == parameter_count(), "flat parameter size mismatch");
  int at = 0;
  for (MatrixXd& w : weights)
    for (int r = 0; r < w.rows(); ++r)
      for (int c = 0; c < w.cols(); ++c) w(r, c) = p(at++);
}

Mlp make_mlp(const std::vector<int>& sizes, Rng& rng, double scale) {
  require(sizes.size() >= 2, "need input and output sizes");
  require(scale >= 0.0, "negative initialization scale");
  std::vector<MatrixXd> w;
  w.reserve(sizes.size() - 1);
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    require(sizes[i] > 0 && sizes[i + 1] > 0, "layer sizes must be positive");
    MatrixXd m(sizes[i + 1], sizes[i]);
    for (int r = 0; r < m.rows(); ++r)
      for (int c = 0; c < m.cols(); ++c) m(r, c) = uniform(rng, -scale, scale);
    w.push_back(std::move(m));
  }
  return Mlp(std::move(w));
}

VectorXd parameter_gradient(const Mlp& net, const VectorXd& x,
                            const VectorXd& cotangent) {
  require(!net.weights.empty(), "empty network");
  require(x.size() == net.input_dim(), "input dimension mismatch");
  require(cotangent.size() == net.output_dim(),
          "cotangent dimension mismatch");
  const std::vector<VectorXd> a = activations(net, x);
  VectorXd grad(net.parameter_count());
  // Parameter offsets of each layer in the flat layout.
  std::vector<int> offset(net.weights.size() + 1, 0);
  for (std::size_t i = 0; i < net.weights.size(); ++i)
    offset[i + 1] = offset[i] + static_cast<int>(net.weights[i].size());

  VectorXd delta = cotangent;  // identity output activation
  for (int i = net.layer_count() - 1; i >= 0; --i) {
    const MatrixXd& w = net.weights[static_cast<std::size_t>(i)];
    const VectorXd& input = a[static_cast<std::size_t>(i)];
    int at = offset[static_cast<std::size_t>(i)];
    for (int r = 0; r < w.rows(); ++r)
      for (int c = 0; c < w.cols(); ++c) grad(at++) = delta(r) * input(c);
    if (i > 0) {
      VectorXd back = w.transpose() * delta;
      // d tanh(z) = 1 - tanh(z)^2, and input already holds tanh(z).
      delta = (back.array() * (1.0 - input.array().square())).matrix();
    }
  }
  return grad;
}

double lipschitz_upper_bound(const Mlp& net) {
  double bound = net.weights.empty() ? 0.0 : 1.0;
  for (const MatrixXd& w : net.weights) bound *= induced_inf_norm(w);
  return bound;
}

VectorXd lipschitz_subgradient(const Mlp& net) {
  require(!net.weights.empty(), "empty network");
  const int layers = net.layer_count();
  std::vector<double> norms(static_cast<std::size_t>(layers));
  std::vector<int> active_row(static_cast<std::size_t>(layers));
  for (int i = 0; i < layers; ++i) {
    const MatrixXd& w = net.weights[static_cast<std::size_t>(i)];
    VectorXd sums = w.cwiseAbs().rowwise().sum();
    int row = 0;
    sums.maxCoeff(&row);
    norms[static_cast<std::size_t>(i)] = sums(row);
    active_row[static_cast<std::size_t>(i)] = row;
  }
  VectorXd grad = VectorXd::Zero(net.parameter_count());
  int at = 0;
  for (int i = 0; i < layers; ++i) {
    const MatrixXd& w = net.weights[static_cast<std::size_t>(i)];
    double others = 1.0;
    for (int j = 0; j < layers; ++j)
      if (j != i) others *= norms[static_cast<std::size_t>(j)];
    const int row = active_row[static_cast<std::size_t>(i)];
    for (int r = 0; r < w.rows(); ++r)
      for (int c = 0; c < w.cols(); ++c, ++at)
        if (r == row && w(r, c) != 0.0)
          grad(at) = others * (w(r, c) > 0.0 ? 1.0 : -1.0);
  }
  return grad;
}

Mlp project_to_lipschitz(const Mlp& net, double cap) {
  require(cap > 0.0, "nonpositive Lipschitz cap");
  const double bound = lipschitz_upper_bound(net);
  if (bound <= cap || bound == 0.0) return net;
  const double scale = std::pow(cap / bound, 1.0 / net.layer_count());
  Mlp out = net;
  for (MatrixXd& w : out.weights) w *= scale;
  return out;
}

double n_step_advantage(const VectorXd& rewards, const Mlp& critic,
                        const VectorXd& x_next, const VectorXd& x_first) {
  require(rewards.size() > 0, "empty reward window");
  require(critic.output_dim() == 1, "critic must be scalar-valued");
  return rewards.sum() + critic.forward(x_next)(0) -
         critic.forward(x_first)(0);
}

Policy perturbation_policy(const MatrixXd& gain, const Mlp& actor) {
  require(gain.cols() == actor.input_dim() &&
              gain.rows() == actor.output_dim(),
          "gain and actor dimensions disagree");
  return [gain, actor](const VectorXd& x) {
    return (gain * x + actor.forward(x)).eval();
  };
}

namespace {

// Adam moment estimates; step() returns the parameter increment for a raw
// gradient (the caller picks ascent or descent by adding or subtracting).
struct AdamState {
  VectorXd m, v;
  long t = 0;

  explicit AdamState(int dim)
      : m(VectorXd::Zero(dim)), v(VectorXd::Zero(dim)) {}

  VectorXd step(const VectorXd& g, double alpha) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++t;
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
    return alpha * (m / c1).cwiseQuotient(
                       ((v / c2).cwiseSqrt().array() + eps).matrix());
  }
};

void validate_certificate_inputs(const StabilityCertificate& cert, int n,
                                 int m) {
  require(cert.gain.rows() == m && cert.gain.cols() == n,
          "certificate rejected: gain dimensions do not match the plant");
  require(cert.p.rows() == n && cert.p.cols() == n,
          "certificate rejected: shape matrix dimensions are wrong");
  require((cert.p - cert.p.transpose()).cwiseAbs().maxCoeff() <= 1e-9,
          "certificate rejected: shape matrix is not symmetric");
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(cert.p);
  require(eig.eigenvalues().minCoeff() > 0.0,
          "certificate rejected: shape matrix is not positive definite");
  require(cert.lipschitz >= 0.0,
          "certificate rejected: negative Lipschitz budget");
  require(cert.sigma > 0.0, "certificate rejected: nonpositive level");
  require(cert.domain.num_faces() > 0,
          "certificate rejected: missing safe region");
  require(cert.sigma <=
              max_level(cert.p, cert.domain) * (1.0 + 1e-9),
          "certificate rejected: ellipsoid exceeds the safe region");
}

void validate_train_config(const TrainConfig& cfg, int m) {
  require(cfg.tau > 0.0, "nonpositive sampling interval");
  require(cfg.alpha_actor > 0.0 && cfg.alpha_critic > 0.0,
          "nonpositive step size");
  require(cfg.nu_decay > 0.0 && cfg.nu_decay < 1.0,
          "exploration decay outside (0, 1)");
  require(cfg.nu_min > 0.0 && cfg.nu_min < 1.0,
          "exploration floor outside (0, 1)");
  require(cfg.n_trajectories >= 0, "negative trajectory count");
  require(cfg.n_steps >= 1, "need at least one step per trajectory");
  require(cfg.advantage_horizon >= 1 && cfg.advantage_horizon < cfg.n_steps,
          "advantage horizon must lie in [1, n_steps)");
  require(cfg.beta >= 0.0, "negative regularizer weight");
  require(cfg.hidden >= 1, "hidden width must be positive");
  require(cfg.init_scale >= 0.0, "negative initialization scale");
  require(cfg.substeps >= 1, "need at least one integrator substep");
  require(cfg.optimizer == "adam" || cfg.optimizer == "sgd",
          "unknown optimizer");
  require(cfg.sigma0.size() == 0 ||
              (cfg.sigma0.size() == m && cfg.sigma0.minCoeff() >= 0.0),
          "exploration covariance diagonal is invalid");
}

}  // namespace

TrainResult train(const PlantModel& model, const StabilityCertificate& cert,
                  const ParamBox& param_box, const Reward& reward,
                  const TrainConfig& cfg, std::optional<Mlp> initial_actor,
                  std::optional<Mlp> initial_critic) {
  const int n = model.state_dim;
  const int m = model.input_dim;
  validate_certificate_inputs(cert, n, m);
  validate_train_config(cfg, m);
  require(param_box.dim() == model.param_dim,
          "parameter box dimension mismatch");

  Rng rng(cfg.seed);
  Mlp actor = initial_actor ? std::move(*initial_actor)
                            : make_mlp({n, cfg.hidden, m}, rng,
                                       cfg.init_scale);
  Mlp critic = initial_critic ? std::move(*initial_critic)
                              : make_mlp({n, cfg.hidden, 1}, rng,
                                         cfg.init_scale);
  require(actor.input_dim() == n && actor.output_dim() == m,
          "actor dimensions do not match the plant");
  require(critic.input_dim() == n && critic.output_dim() == 1,
          "critic must map states to a scalar value");
  // The stability guarantee requires the deviation inside the budget from
  // the very first rollout, not only after the first update.
  if (cert.lipschitz > 0.0)
    actor = project_to_lipschitz(actor, cert.lipschitz);

  const VectorXd sigma0 = cfg.sigma0.size() == 0
                              ? VectorXd::Constant(m, 0.0225)
                              : cfg.sigma0;
  const Ellipsoid init_set = safe_initialization_set(cert);
  const ParamSampler sampler{param_box};
  const double horizon = cfg.advantage_horizon;

  AdamState adam_actor(actor.parameter_count());
  AdamState adam_critic(critic.parameter_count());

  TrainResult result;
  result.log.reserve(static_cast<std::size_t>(cfg.n_trajectories));
  double nu = 1.0;

  for (int e = 1; e <= cfg.n_trajectories; ++e) {
    const VectorXd sigma_diag = nu * sigma0;
    const VectorXd sigma_inv =
        sigma_diag.cwiseMax(1e-8).cwiseInverse();
    const VectorXd noise_std = sigma_diag.cwiseSqrt();

    VectorXd d_actor = VectorXd::Zero(actor.parameter_count());
    VectorXd d_critic = VectorXd::Zero(critic.parameter_count());
    double total_reward = 0.0;

    MatrixXd states(cfg.n_steps + 1, n);
    MatrixXd deviations(cfg.n_steps, m);  // sampled minus actor mean
    VectorXd rewards(cfg.n_steps);

    VectorXd x = init_set.sample(rng);
    states.row(0) = x.transpose();
    for (int k = 0; k < cfg.n_steps; ++k) {
      VectorXd noise(m);
      for (int i = 0; i < m; ++i) noise(i) = noise_std(i) * gaussian(rng);
      const VectorXd u_explore = actor.forward(x) + noise;
      const VectorXd u_total = cert.gain * x + u_explore;
      rewards(k) = reward(x, u_total);
      total_reward += rewards(k);
      deviations.row(k) = noise.transpose();

      const VectorXd theta = sampler(rng);
      const auto f = [&](const VectorXd& s) {
        return eval_dynamics(model, s, u_total, theta);
      };
      const double h = cfg.tau / cfg.substeps;
      bool diverged = false;
      for (int s = 0; s < cfg.substeps; ++s) {
        x = rk4_step(f, x, h);
        if (!x.allFinite() || x.norm() > 1e6) {
          diverged = true;
          break;
        }
      }
      if (diverged) break;
      states.row(k + 1) = x.transpose();

      if (k >= cfg.advantage_horizon) {
        const VectorXd window =
            rewards.segment(k - cfg.advantage_horizon + 1,
                            cfg.advantage_horizon);
        const VectorXd x_first =
            states.row(k - cfg.advantage_horizon + 1).transpose();
        const VectorXd x_next = states.row(k + 1).transpose();
        const double adv =
            n_step_advantage(window, critic, x_next, x_first);

        const VectorXd x_k = states.row(k).transpose();
        const VectorXd cotangent =
            sigma_inv.cwiseProduct(deviations.row(k).transpose());
        const VectorXd g_actor =
            parameter_gradient(actor, x_k, cotangent) * adv;
        const VectorXd one = VectorXd::Ones(1);
        const VectorXd g_critic =
            (parameter_gradient(critic, x_first, one) -
             parameter_gradient(critic, x_next, one)) *
            adv;

        const double seen = k - horizon;  // samples averaged so far
        d_actor = (seen * d_actor + g_actor) / (seen + 1.0);
        d_critic = (seen * d_critic + g_critic) / (seen + 1.0);
      }
    }

    const VectorXd ascent =
        d_actor - cfg.beta * lipschitz_subgradient(actor);
    if (cfg.optimizer == "adam") {
      actor.set_flat(actor.flat() + adam_actor.step(ascent, cfg.alpha_actor));
      critic.set_flat(critic.flat() -
                      adam_critic.step(d_critic, cfg.alpha_critic));
    } else {
      actor.set_flat(actor.flat() + cfg.alpha_actor * ascent);
      critic.set_flat(critic.flat() - cfg.alpha_critic * d_critic);
    }
    if (cert.lipschitz > 0.0)
      actor = project_to_lipschitz(actor, cert.lipschitz);

    TrainRecord rec;
    rec.trajectory = e;
    rec.utility = total_reward * cfg.tau;
    rec.lipschitz = lipschitz_upper_bound(actor);
    rec.nu = nu;
    result.log.push_back(rec);

    nu = std::max(cfg.nu_min, nu * cfg.nu_decay);
  }

  result.actor = std::move(actor);
  result.critic = std::move(critic);
  return result;
}

void write_train_log(std::ostream& os, const std::vector<TrainRecord>& log) {
  os << "trajectory,return,lipschitz,nu\n";
  for (const TrainRecord& rec : log)
    os << rec.trajectory << "," << format_double(rec.utility) << ","
       << format_double(rec.lipschitz) << "," << format_double(rec.nu)
       << "\n";
}

void write_mlp(std::ostream& os, const Mlp& net) {
  os << "mlp v1\n";
  os << "sizes " << net.input_dim();
  for (const MatrixXd& w : net.weights) os << " " << w.rows();
  os << "\n";
  for (const MatrixXd& w : net.weights)
    for (int r = 0; r < w.rows(); ++r) {
      for (int c = 0; c < w.cols(); ++c)
        os << (c ? "," : "") << format_double(w(r, c));
      os << "\n";
    }
}

Mlp read_mlp(std::istream& is) {
  const auto fail = [](const char* what) -> Mlp {
    throw std::runtime_error(std::string("bad network file: ") + what);
  };
  std::string line;
  if (!std::getline(is, line) || line != "mlp v1")
    return fail("unsupported header");
  if (!std::getline(is, line)) return fail("missing sizes line");
  std::istringstream sizes_in(line);
  std::string tag;
  sizes_in >> tag;
  if (tag != "sizes") return fail("missing sizes line");
  std::vector<int> sizes;
  for (int v = 0; sizes_in >> v;) {
    if (v <= 0) return fail("layer sizes must be positive");
    sizes.push_back(v);
  }
  if (sizes.size() < 2) return fail("need input and output sizes");

  std::vector<MatrixXd> weights;
  weights.reserve(sizes.size() - 1);
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    MatrixXd w(sizes[i + 1], sizes[i]);
    for (int r = 0; r < w.rows(); ++r) {
      if (!std::getline(is, line)) return fail("truncated weight rows");
      std::istringstream row_in(line);
      std::string cell;
      for (int c = 0; c < w.cols(); ++c) {
        if (!std::getline(row_in, cell, ',')) return fail("short weight row");
        try {
          std::size_t consumed = 0;
          w(r, c) = std::stod(cell, &consumed);
          if (consumed != cell.size()) return fail("unparseable weight");
        } catch (const std::exception&) {
          return fail("unparseable weight");
        }
      }
      if (std::getline(row_in, cell, ',')) return fail("long weight row");
    }
    weights.push_back(std::move(w));
  }
  return Mlp(std::move(weights));
}

}  // namespace rstab
