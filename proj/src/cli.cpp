#include <rstab/cli.hpp>

#include <algorithm>
#include <climits>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include <rstab/certificate.hpp>
#include <rstab/sector.hpp>

namespace fs = std::filesystem;

namespace rstab {

namespace {

std::string trim(const std::string& s) {
  const auto from = s.find_first_not_of(" \t\r\n");
  if (from == std::string::npos) return "";
  const auto to = s.find_last_not_of(" \t\r\n");
  return s.substr(from, to - from + 1);
}

bool parse_double_value(const std::string& raw, double& out) {
  const std::string s = trim(raw);
  if (s.empty()) return false;
  try {
    std::size_t used = 0;
    out = std::stod(s, &used);
    return used == s.size();
  } catch (const std::exception&) {
    return false;
  }
}

bool parse_int_value(const std::string& raw, int& out) {
  const std::string s = trim(raw);
  if (s.empty()) return false;
  try {
    std::size_t used = 0;
    const long v = std::stol(s, &used);
    if (used != s.size() || v < INT_MIN || v > INT_MAX) return false;
    out = static_cast<int>(v);
    return true;
  } catch (const std::exception&) {
    return false;
  }
}

bool parse_long_value(const std::string& raw, long& out) {
  const std::string s = trim(raw);
  if (s.empty()) return false;
  try {
    std::size_t used = 0;
    out = std::stol(s, &used);
    return used == s.size();
  } catch (const std::exception&) {
    return false;
  }
}

bool parse_seed_value(const std::string& raw, std::uint64_t& out) {
  const std::string s = trim(raw);
  if (s.empty() || s[0] == '-') return false;
  try {
    std::size_t used = 0;
    out = std::stoull(s, &used);
    return used == s.size();
  } catch (const std::exception&) {
    return false;
  }
}

bool parse_matrix_value(const std::string& raw, MatrixXd& out) {
  const std::string s = trim(raw);
  if (s.size() < 2 || s.front() != '[' || s.back() != ']') return false;
  std::vector<std::vector<double>> rows;
  std::stringstream row_stream(s.substr(1, s.size() - 2));
  std::string row_text;
  while (std::getline(row_stream, row_text, ';')) {
    std::vector<double> row;
    std::stringstream cell_stream(row_text);
    std::string cell;
    while (std::getline(cell_stream, cell, ',')) {
      double v = 0.0;
      if (!parse_double_value(cell, v)) return false;
      row.push_back(v);
    }
    if (row.empty() || (!rows.empty() && row.size() != rows.front().size()))
      return false;
    rows.push_back(std::move(row));
  }
  if (rows.empty()) return false;
  out.resize(static_cast<int>(rows.size()),
             static_cast<int>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      out(static_cast<int>(r), static_cast<int>(c)) = rows[r][c];
  return true;
}

bool parse_vector_value(const std::string& raw, VectorXd& out) {
  MatrixXd m;
  if (!parse_matrix_value(raw, m) || m.rows() != 1) return false;
  out = m.row(0).transpose();
  return true;
}

std::string matrix_text(const MatrixXd& m) {
  std::string s = "[";
  for (int r = 0; r < m.rows(); ++r) {
    if (r) s += "; ";
    for (int c = 0; c < m.cols(); ++c) {
      if (c) s += ", ";
      s += format_double(m(r, c));
    }
  }
  return s + "]";
}

std::string vector_text(const VectorXd& v) {
  return matrix_text(v.transpose());
}

// Accumulates key values and problems; the semantic pass at the end checks
// range invariants so every complaint is listed in a single parse.
struct ConfigReader {
  ConfigParse result;
  int line_no = 0;
  std::string section;
  bool section_known = false;

  VectorXd param_lower, param_upper;

  void error(const std::string& msg) {
    result.errors.push_back("line " + std::to_string(line_no) + ": " + msg);
  }
  void check(bool ok, const std::string& msg) {
    if (!ok) result.errors.push_back(msg);
  }
};

void read_key(ConfigReader& r, const std::string& key,
              const std::string& value) {
  RunConfig& cfg = r.result.config;
  const auto bad_value = [&] {
    r.error("cannot parse value for '" + key + "' in [" + r.section + "]");
  };
  const auto unknown_key = [&] {
    r.error("unknown key '" + key + "' in [" + r.section + "]");
  };

  const auto take_double = [&](double& slot) {
    if (!parse_double_value(value, slot)) bad_value();
  };
  const auto take_int = [&](int& slot) {
    if (!parse_int_value(value, slot)) bad_value();
  };

  if (r.section == "plant") {
    if (key == "name")
      cfg.plant = trim(value);
    else
      unknown_key();
  } else if (r.section == "parameters") {
    if (key == "lower") {
      if (!parse_vector_value(value, r.param_lower)) bad_value();
    } else if (key == "upper") {
      if (!parse_vector_value(value, r.param_upper)) bad_value();
    } else {
      unknown_key();
    }
  } else if (r.section == "domain") {
    if (key == "vertices") {
      if (!parse_matrix_value(value, cfg.domain_vertices)) bad_value();
    } else {
      unknown_key();
    }
  } else if (r.section == "synthesis") {
    if (key == "w")
      take_double(cfg.synthesis.w);
    else if (key == "n_steps")
      take_int(cfg.synthesis.n_steps);
    else if (key == "sector_tol")
      take_double(cfg.synthesis.sector_tol);
    else if (key == "sector_max_boxes") {
      if (!parse_long_value(value, cfg.synthesis.sector_max_boxes))
        bad_value();
    } else if (key == "lmi_margin")
      take_double(cfg.synthesis.lmi_margin);
    else if (key == "init_margin")
      take_double(cfg.synthesis.init_margin);
    else
      unknown_key();
  } else if (r.section == "training") {
    if (key == "tau")
      take_double(cfg.training.tau);
    else if (key == "alpha_actor")
      take_double(cfg.training.alpha_actor);
    else if (key == "alpha_critic")
      take_double(cfg.training.alpha_critic);
    else if (key == "sigma") {
      if (!parse_vector_value(value, cfg.training.sigma0)) bad_value();
    } else if (key == "nu_decay")
      take_double(cfg.training.nu_decay);
    else if (key == "nu_min")
      take_double(cfg.training.nu_min);
    else if (key == "n_trajectories")
      take_int(cfg.training.n_trajectories);
    else if (key == "n_steps")
      take_int(cfg.training.n_steps);
    else if (key == "advantage_horizon")
      take_int(cfg.training.advantage_horizon);
    else if (key == "beta")
      take_double(cfg.training.beta);
    else if (key == "seed") {
      if (!parse_seed_value(value, cfg.training.seed)) bad_value();
    } else if (key == "hidden")
      take_int(cfg.training.hidden);
    else if (key == "init_scale")
      take_double(cfg.training.init_scale);
    else if (key == "substeps")
      take_int(cfg.training.substeps);
    else if (key == "optimizer")
      cfg.training.optimizer = trim(value);
    else
      unknown_key();
  } else if (r.section == "evaluation") {
    if (key == "n_runs")
      take_int(cfg.evaluation.n_runs);
    else if (key == "n_steps")
      take_int(cfg.evaluation.n_s);
    else if (key == "tau")
      take_double(cfg.evaluation.tau);
    else if (key == "substeps")
      take_int(cfg.evaluation.substeps);
    else if (key == "seed") {
      std::uint64_t seed = 0;
      if (parse_seed_value(value, seed))
        cfg.evaluation.seed = seed;
      else
        bad_value();
    } else {
      unknown_key();
    }
  } else if (r.section == "certify") {
    if (key == "gain") {
      if (!parse_matrix_value(value, cfg.certify_gain)) bad_value();
    } else if (key == "lipschitz")
      take_double(cfg.certify_lipschitz);
    else
      unknown_key();
  } else if (r.section == "output") {
    if (key == "directory")
      cfg.output_dir = trim(value);
    else
      unknown_key();
  }
}

void semantic_checks(ConfigReader& r) {
  RunConfig& cfg = r.result.config;

  int state_dim = 0, input_dim = 0, param_dim = 0;
  if (cfg.plant == "example") {
    state_dim = 2;
    input_dim = 2;
    param_dim = 2;
  } else {
    r.check(false, "[plant] unknown plant '" + cfg.plant + "'");
  }

  const bool have_lower = r.param_lower.size() > 0;
  const bool have_upper = r.param_upper.size() > 0;
  if (have_lower != have_upper) {
    r.check(false, "[parameters] lower and upper must be given together");
  } else if (have_lower) {
    if (r.param_lower.size() != r.param_upper.size())
      r.check(false, "[parameters] lower and upper sizes differ");
    else if (param_dim && r.param_lower.size() != param_dim)
      r.check(false, "[parameters] dimension does not match the plant");
    else if ((r.param_upper - r.param_lower).minCoeff() < 0.0)
      r.check(false, "[parameters] lower exceeds upper");
    else
      cfg.params = ParamBox(r.param_lower, r.param_upper);
  }

  if (cfg.domain_vertices.size() > 0) {
    if (state_dim && cfg.domain_vertices.cols() != state_dim) {
      r.check(false, "[domain] vertex dimension does not match the plant");
    } else if (cfg.domain_vertices.rows() < 3) {
      r.check(false, "[domain] need at least three vertices");
    } else {
      try {
        (void)SafePolytope::from_vertices(cfg.domain_vertices);
      } catch (const std::exception& e) {
        r.check(false, std::string("[domain] ") + e.what());
      }
    }
  }

  r.check(cfg.synthesis.w >= 0.0, "[synthesis] w must be nonnegative");
  r.check(cfg.synthesis.n_steps >= 1, "[synthesis] n_steps must be positive");
  r.check(cfg.synthesis.sector_tol > 0.0,
          "[synthesis] sector_tol must be positive");
  r.check(cfg.synthesis.sector_max_boxes >= 1,
          "[synthesis] sector_max_boxes must be positive");
  r.check(cfg.synthesis.lmi_margin > 0.0,
          "[synthesis] lmi_margin must be positive");
  r.check(cfg.synthesis.init_margin > 0.0,
          "[synthesis] init_margin must be positive");

  const TrainConfig& t = cfg.training;
  r.check(t.tau > 0.0, "[training] tau must be positive");
  r.check(t.alpha_actor > 0.0, "[training] alpha_actor must be positive");
  r.check(t.alpha_critic > 0.0, "[training] alpha_critic must be positive");
  r.check(t.nu_decay > 0.0 && t.nu_decay < 1.0,
          "[training] nu_decay must lie in (0, 1)");
  r.check(t.nu_min > 0.0 && t.nu_min < 1.0,
          "[training] nu_min must lie in (0, 1)");
  r.check(t.n_trajectories >= 0,
          "[training] n_trajectories must be nonnegative");
  r.check(t.n_steps >= 1, "[training] n_steps must be positive");
  r.check(t.advantage_horizon >= 1 && t.advantage_horizon < t.n_steps,
          "[training] advantage_horizon must lie in [1, n_steps)");
  r.check(t.beta >= 0.0, "[training] beta must be nonnegative");
  r.check(t.hidden >= 1, "[training] hidden must be positive");
  r.check(t.init_scale >= 0.0, "[training] init_scale must be nonnegative");
  r.check(t.substeps >= 1, "[training] substeps must be positive");
  r.check(t.optimizer == "adam" || t.optimizer == "sgd",
          "[training] optimizer must be adam or sgd");
  if (t.sigma0.size() > 0) {
    if (input_dim && t.sigma0.size() != input_dim)
      r.check(false, "[training] sigma size does not match the plant");
    else
      r.check(t.sigma0.minCoeff() >= 0.0,
              "[training] sigma entries must be nonnegative");
  }

  r.check(cfg.evaluation.n_runs >= 0, "[evaluation] n_runs must be nonnegative");
  r.check(cfg.evaluation.n_s >= 1, "[evaluation] n_steps must be positive");
  r.check(cfg.evaluation.tau > 0.0, "[evaluation] tau must be positive");
  r.check(cfg.evaluation.substeps >= 1,
          "[evaluation] substeps must be positive");

  if (cfg.certify_gain.size() > 0 && state_dim &&
      (cfg.certify_gain.rows() != input_dim ||
       cfg.certify_gain.cols() != state_dim))
    r.check(false, "[certify] gain dimensions do not match the plant");
  r.check(cfg.certify_lipschitz >= 0.0,
          "[certify] lipschitz must be nonnegative");

  r.check(!cfg.output_dir.empty(), "[output] directory must not be empty");
}

}  // namespace

ConfigParse parse_config(std::istream& is) {
  static const std::vector<std::string> known_sections = {
      "plant",    "parameters", "domain",  "synthesis",
      "training", "evaluation", "certify", "output"};
  ConfigReader r;
  std::string line;
  while (std::getline(is, line)) {
    ++r.line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') {
        r.error("malformed section header");
        r.section_known = false;
        continue;
      }
      r.section = trim(line.substr(1, line.size() - 2));
      r.section_known = std::find(known_sections.begin(),
                                  known_sections.end(),
                                  r.section) != known_sections.end();
      if (!r.section_known) r.error("unknown section [" + r.section + "]");
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      r.error("expected 'key = value'");
      continue;
    }
    if (r.section.empty()) {
      r.error("key outside any [section]");
      continue;
    }
    if (!r.section_known) continue;  // already reported once
    read_key(r, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  semantic_checks(r);
  return std::move(r.result);
}

void emit_config(std::ostream& os, const RunConfig& cfg) {
  os << "[plant]\nname = " << cfg.plant << "\n\n";
  if (cfg.params.dim() > 0) {
    os << "[parameters]\n";
    os << "lower = " << vector_text(cfg.params.lower) << "\n";
    os << "upper = " << vector_text(cfg.params.upper) << "\n\n";
  }
  if (cfg.domain_vertices.size() > 0)
    os << "[domain]\nvertices = " << matrix_text(cfg.domain_vertices)
       << "\n\n";

  os << "[synthesis]\n";
  os << "w = " << format_double(cfg.synthesis.w) << "\n";
  os << "n_steps = " << cfg.synthesis.n_steps << "\n";
  os << "sector_tol = " << format_double(cfg.synthesis.sector_tol) << "\n";
  os << "sector_max_boxes = " << cfg.synthesis.sector_max_boxes << "\n";
  os << "lmi_margin = " << format_double(cfg.synthesis.lmi_margin) << "\n";
  os << "init_margin = " << format_double(cfg.synthesis.init_margin)
     << "\n\n";

  const TrainConfig& t = cfg.training;
  os << "[training]\n";
  os << "tau = " << format_double(t.tau) << "\n";
  os << "alpha_actor = " << format_double(t.alpha_actor) << "\n";
  os << "alpha_critic = " << format_double(t.alpha_critic) << "\n";
  if (t.sigma0.size() > 0)
    os << "sigma = " << vector_text(t.sigma0) << "\n";
  os << "nu_decay = " << format_double(t.nu_decay) << "\n";
  os << "nu_min = " << format_double(t.nu_min) << "\n";
  os << "n_trajectories = " << t.n_trajectories << "\n";
  os << "n_steps = " << t.n_steps << "\n";
  os << "advantage_horizon = " << t.advantage_horizon << "\n";
  os << "beta = " << format_double(t.beta) << "\n";
  os << "seed = " << t.seed << "\n";
  os << "hidden = " << t.hidden << "\n";
  os << "init_scale = " << format_double(t.init_scale) << "\n";
  os << "substeps = " << t.substeps << "\n";
  os << "optimizer = " << t.optimizer << "\n\n";

  os << "[evaluation]\n";
  os << "n_runs = " << cfg.evaluation.n_runs << "\n";
  os << "n_steps = " << cfg.evaluation.n_s << "\n";
  os << "tau = " << format_double(cfg.evaluation.tau) << "\n";
  os << "substeps = " << cfg.evaluation.substeps << "\n";
  os << "seed = " << cfg.evaluation.seed << "\n\n";

  if (cfg.certify_gain.size() > 0 || cfg.certify_lipschitz != 0.0) {
    os << "[certify]\n";
    if (cfg.certify_gain.size() > 0)
      os << "gain = " << matrix_text(cfg.certify_gain) << "\n";
    os << "lipschitz = " << format_double(cfg.certify_lipschitz) << "\n\n";
  }

  os << "[output]\ndirectory = " << cfg.output_dir << "\n";
}

RunConfig example_config() {
  RunConfig cfg;
  cfg.params = example_param_box();
  cfg.domain_vertices = example_polytope().vertices();
  cfg.training.seed = 1;
  cfg.evaluation.seed = 42;
  return cfg;
}

namespace {

struct Setup {
  PlantModel plant;
  ParamBox params;
  SafePolytope domain;
};

Setup resolve(const RunConfig& cfg) {
  if (cfg.plant != "example")
    throw std::invalid_argument("unknown plant '" + cfg.plant + "'");
  Setup s;
  s.plant = example_plant();
  s.params = cfg.params.dim() > 0 ? cfg.params : example_param_box();
  s.domain = cfg.domain_vertices.size() > 0
                 ? SafePolytope::from_vertices(cfg.domain_vertices)
                 : example_polytope();
  return s;
}

void write_file(const fs::path& path,
                const std::function<void(std::ostream&)>& fn) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  fn(os);
}

// Orchestrates one configured run; later stages load earlier artifacts when
// present and compute them otherwise, so the commands compose.
struct Pipeline {
  const Setup& setup;
  const RunConfig& cfg;
  fs::path dir;
  std::ostream& diag;

  Pipeline(const Setup& s, const RunConfig& c, std::ostream& d)
      : setup(s), cfg(c), dir(c.output_dir), diag(d) {
    fs::create_directories(dir);
  }

  StabilityCertificate synthesize_fresh() {
    const SynthesisResult res =
        synthesize(setup.plant, setup.params, setup.domain, cfg.synthesis);
    write_file(dir / "certificate.txt", [&](std::ostream& os) {
      write_certificate(os, res.certificate);
    });
    write_file(dir / "iterations.csv", [&](std::ostream& os) {
      write_iteration_log(os, res.log);
    });
    diag << "synthesis: " << res.iterations << "/" << cfg.synthesis.n_steps
         << " schedule points feasible, lipschitz = "
         << format_double(res.certificate.lipschitz)
         << ", sigma = " << format_double(res.certificate.sigma) << "\n";
    diag << "wrote " << (dir / "certificate.txt").string() << "\n";
    diag << "wrote " << (dir / "iterations.csv").string() << "\n";
    return res.certificate;
  }

  StabilityCertificate certificate() {
    const fs::path path = dir / "certificate.txt";
    if (fs::exists(path)) {
      std::ifstream is(path);
      try {
        StabilityCertificate cert = read_certificate(is);
        diag << "loaded " << path.string() << "\n";
        return cert;
      } catch (const std::exception& e) {
        diag << "ignoring unreadable " << path.string() << " (" << e.what()
             << ")\n";
      }
    }
    return synthesize_fresh();
  }

  TrainResult train_fresh(const StabilityCertificate& cert) {
    const TrainResult tr = train(setup.plant, cert, setup.params,
                                 quadratic_reward(), cfg.training);
    write_file(dir / "actor.txt",
               [&](std::ostream& os) { write_mlp(os, tr.actor); });
    write_file(dir / "critic.txt",
               [&](std::ostream& os) { write_mlp(os, tr.critic); });
    write_file(dir / "training_log.csv",
               [&](std::ostream& os) { write_train_log(os, tr.log); });
    diag << "training: " << tr.log.size()
         << " trajectories, final actor bound = "
         << format_double(lipschitz_upper_bound(tr.actor)) << "\n";
    diag << "wrote " << (dir / "actor.txt").string() << "\n";
    diag << "wrote " << (dir / "critic.txt").string() << "\n";
    diag << "wrote " << (dir / "training_log.csv").string() << "\n";
    return tr;
  }

  Mlp actor(const StabilityCertificate& cert) {
    const fs::path path = dir / "actor.txt";
    if (fs::exists(path)) {
      std::ifstream is(path);
      try {
        Mlp net = read_mlp(is);
        diag << "loaded " << path.string() << "\n";
        return net;
      } catch (const std::exception& e) {
        diag << "ignoring unreadable " << path.string() << " (" << e.what()
             << ")\n";
      }
    }
    return train_fresh(cert).actor;
  }

  int evaluate(const StabilityCertificate& cert, const Mlp& trained) {
    const auto nominal =
        linearize(setup.plant, VectorXd::Zero(setup.plant.param_dim));
    const LqrResult lqr =
        lqr_gain(nominal.a, nominal.b,
                 MatrixXd::Identity(setup.plant.state_dim,
                                    setup.plant.state_dim),
                 MatrixXd::Identity(setup.plant.input_dim,
                                    setup.plant.input_dim));
    std::vector<std::pair<std::string, Policy>> policies;
    policies.emplace_back("lqr", linear_policy(lqr.gain));
    policies.emplace_back("nominal", linear_policy(cert.gain));
    policies.emplace_back("trained",
                          perturbation_policy(cert.gain, trained));

    const Ellipsoid init_set = safe_initialization_set(cert);
    const ParamSampler sampler{setup.params};
    const std::vector<UtilityStats> stats =
        monte_carlo_eval(setup.plant, policies, init_set, sampler,
                         quadratic_reward(), cfg.evaluation);
    write_file(dir / "statistics.csv", [&](std::ostream& os) {
      write_stats_csv(os, stats);
    });
    diag << "wrote " << (dir / "statistics.csv").string() << "\n";

    // Plot data: replay evaluation run 0 for the paired policies.
    for (const auto& [name, policy] : policies) {
      if (name == "nominal") continue;
      Rng rng(split_seed(cfg.evaluation.seed, 0));
      const VectorXd x0 = init_set.sample(rng);
      RolloutOptions opts;
      opts.substeps = cfg.evaluation.substeps;
      const Trajectory traj =
          rk4_rollout(setup.plant, policy, x0, sampler, quadratic_reward(),
                      cfg.evaluation.n_s, cfg.evaluation.tau, rng, opts);
      write_file(dir / ("trajectory_" + name + ".csv"),
                 [&](std::ostream& os) { write_trajectory_csv(os, traj); });
      diag << "wrote " << (dir / ("trajectory_" + name + ".csv")).string()
           << "\n";
    }
    for (const UtilityStats& st : stats)
      diag << "utility " << st.name << ": median = "
           << format_double(st.median) << ", q1 = " << format_double(st.q1)
           << ", q3 = " << format_double(st.q3)
           << ", diverged = " << st.diverged << "\n";
    return 0;
  }
};

int cmd_bound_sector(const Setup& setup, const RunConfig& cfg,
                     std::ostream& diag) {
  Pipeline pipe(setup, cfg, diag);
  const MatrixXd gain =
      cfg.certify_gain.size() > 0
          ? cfg.certify_gain
          : MatrixXd::Zero(setup.plant.input_dim, setup.plant.state_dim);
  SectorOptions opts;
  opts.tol = cfg.synthesis.sector_tol;
  opts.max_boxes = cfg.synthesis.sector_max_boxes;
  const SectorBound sector =
      compute_sector(setup.plant, gain, cfg.certify_lipschitz, setup.domain,
                     setup.params, opts);
  write_file(pipe.dir / "sector.csv",
             [&](std::ostream& os) { write_sector_csv(os, sector); });
  diag << "sector over " << sector.lo.rows() << "x" << sector.lo.cols()
       << " entries, " << (sector.all_tight ? "all" : "NOT all")
       << " within tolerance " << format_double(sector.tol) << "\n";
  diag << "wrote " << (pipe.dir / "sector.csv").string() << "\n";
  return 0;
}

int cmd_certify(const Setup& setup, const RunConfig& cfg,
                std::ostream& diag) {
  if (cfg.certify_gain.size() == 0) {
    diag << "certify requires gain under [certify]\n";
    return 2;
  }
  Pipeline pipe(setup, cfg, diag);
  const double budget = cfg.certify_lipschitz;
  SectorOptions opts;
  opts.tol = cfg.synthesis.sector_tol;
  opts.max_boxes = cfg.synthesis.sector_max_boxes;
  const SectorBound sector =
      compute_sector(setup.plant, cfg.certify_gain, budget, setup.domain,
                     setup.params, opts);
  const auto nominal =
      linearize(setup.plant, VectorXd::Zero(setup.plant.param_dim));
  const std::optional<LyapunovUpdate> solved = solve_lyapunov_step(
      sector, nominal.a, nominal.b, cfg.certify_gain,
      MatrixXd::Identity(setup.plant.state_dim, setup.plant.state_dim),
      budget, cfg.synthesis);
  if (!solved) {
    diag << "LMI infeasible\n";
    return 1;
  }
  StabilityCertificate cert;
  cert.gain = cfg.certify_gain;
  cert.lipschitz = budget;
  cert.p = solved->p;
  cert.multipliers = solved->multipliers;
  cert.domain = setup.domain;
  cert.sigma = max_level(cert.p, cert.domain);
  const Verdict verdict = verify_certificate(setup.plant, cert, sector);
  if (!verdict.valid) {
    diag << "certificate check failed: " << verdict.reason << "\n";
    return 1;
  }
  write_file(pipe.dir / "certificate.txt", [&](std::ostream& os) {
    write_certificate(os, cert);
  });
  diag << "certificate valid: lipschitz = " << format_double(cert.lipschitz)
       << ", sigma = " << format_double(cert.sigma) << "\n";
  diag << "wrote " << (pipe.dir / "certificate.txt").string() << "\n";
  return 0;
}

}  // namespace

int run_command(const std::string& command, const RunConfig& cfg,
                std::ostream& diag) {
  try {
    if (command == "print-config") {
      emit_config(diag, cfg);
      return 0;
    }
    const Setup setup = resolve(cfg);
    if (command == "bound-sector") return cmd_bound_sector(setup, cfg, diag);
    if (command == "certify") return cmd_certify(setup, cfg, diag);
    if (command == "synthesize") {
      Pipeline pipe(setup, cfg, diag);
      pipe.synthesize_fresh();
      return 0;
    }
    if (command == "train") {
      Pipeline pipe(setup, cfg, diag);
      pipe.train_fresh(pipe.certificate());
      return 0;
    }
    if (command == "evaluate") {
      Pipeline pipe(setup, cfg, diag);
      const StabilityCertificate cert = pipe.certificate();
      return pipe.evaluate(cert, pipe.actor(cert));
    }
    if (command == "reproduce-example") {
      Pipeline pipe(setup, cfg, diag);
      const StabilityCertificate cert = pipe.synthesize_fresh();
      const TrainResult tr = pipe.train_fresh(cert);
      return pipe.evaluate(cert, tr.actor);
    }
    diag << "unknown command '" << command << "'\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    diag << "invalid input: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    diag << "infeasible: " << e.what() << "\n";
    return 1;
  }
}

int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err) {
  static const std::vector<std::pair<std::string, std::string>> commands = {
      {"bound-sector",
       "bound the nonlinear-part Jacobians over the safe region"},
      {"synthesize",
       "run the full gain/Lipschitz schedule and write a certificate"},
      {"certify", "check the configured fixed gain and Lipschitz budget"},
      {"train", "train the perturbation policy inside the certified budget"},
      {"evaluate", "paired Monte-Carlo comparison against the LQR baseline"},
      {"reproduce-example", "synthesize, train, and evaluate from scratch"},
      {"print-config", "write the effective configuration and exit"}};

  CLI::App app{
      "Robust stability certification and budgeted policy training.\n"
      "Without a config file the built-in reference configuration is used.\n"
      "RSTAB_OUTPUT_DIR overrides the configured output directory; the\n"
      "--output-dir flag overrides both. Exit codes: 0 success, 1 "
      "infeasible,\n2 bad input."};
  app.require_subcommand(1);
  std::string config_path, output_override;
  for (const auto& [name, blurb] : commands) {
    CLI::App* sub = app.add_subcommand(name, blurb);
    sub->add_option("config", config_path,
                    "configuration file (built-in reference when omitted)");
    sub->add_option("--output-dir", output_override,
                    "override the output directory");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  RunConfig cfg;
  if (config_path.empty()) {
    cfg = example_config();
  } else {
    std::ifstream is(config_path);
    if (!is) {
      err << "cannot read config file '" << config_path << "'\n";
      return 2;
    }
    ConfigParse parsed = parse_config(is);
    if (!parsed.ok()) {
      for (const std::string& e : parsed.errors)
        err << "config error: " << e << "\n";
      return 2;
    }
    cfg = std::move(parsed.config);
  }
  if (const char* env = std::getenv("RSTAB_OUTPUT_DIR"); env && *env)
    cfg.output_dir = env;
  if (!output_override.empty()) cfg.output_dir = output_override;

  return run_command(command, cfg, out);
}

}  // namespace rstab
