#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <rstab/policy.hpp>

#include "doctest.h"

using namespace rstab;

namespace {

Mlp single_layer(double v) {
  return Mlp({MatrixXd::Constant(1, 1, v)});
}

Mlp two_scalar_layers(double v1, double v2) {
  return Mlp({MatrixXd::Constant(1, 1, v1), MatrixXd::Constant(1, 1, v2)});
}

SafePolytope unit_square() {
  MatrixXd faces(4, 2);
  faces << 1, 0, -1, 0, 0, 1, 0, -1;
  return SafePolytope(faces, VectorXd::Ones(4));
}

// Structurally valid certificate for a 2-state, 2-input plant: identity
// shape on the unit square, half-level ellipsoid, zero nominal gain.
StabilityCertificate basic_certificate(double cap) {
  StabilityCertificate cert;
  cert.gain = MatrixXd::Zero(2, 2);
  cert.lipschitz = cap;
  cert.p = MatrixXd::Identity(2, 2);
  cert.multipliers.gamma = MatrixXd::Zero(2, 2);
  cert.multipliers.lambda = MatrixXd::Zero(2, 4);
  cert.sigma = 0.5;
  cert.domain = unit_square();
  return cert;
}

VectorXd fd_parameter_gradient(const Mlp& net, const VectorXd& x,
                               const VectorXd& cotangent, double h) {
  Mlp probe = net;
  const VectorXd p = net.flat();
  VectorXd g(p.size());
  for (int i = 0; i < p.size(); ++i) {
    VectorXd hi = p, lo = p;
    hi(i) += h;
    lo(i) -= h;
    probe.set_flat(hi);
    const double fhi = cotangent.dot(probe.forward(x));
    probe.set_flat(lo);
    const double flo = cotangent.dot(probe.forward(x));
    g(i) = (fhi - flo) / (2.0 * h);
  }
  return g;
}

}  // namespace

TEST_SUITE_BEGIN("policy");

TEST_CASE("forward: pinned evaluations and shape checks") {
  SUBCASE("zero input maps to zero for any parameters") {
    Rng rng(11);
    const Mlp net = make_mlp({2, 5, 2}, rng, 0.8);
    CHECK(net.forward(VectorXd::Zero(2)).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("single layer is purely linear") {
    CHECK(single_layer(2.0).forward(VectorXd::Ones(1))(0) == 2.0);
  }
  SUBCASE("two unit scalar layers produce tanh(1)") {
    const double y = two_scalar_layers(1.0, 1.0).forward(VectorXd::Ones(1))(0);
    CHECK(y == std::tanh(1.0));
    CHECK(y == doctest::Approx(0.761594).epsilon(1e-6));
  }
  SUBCASE("dimension mismatches are rejected") {
    CHECK_THROWS_AS(single_layer(1.0).forward(VectorXd::Ones(2)),
                    std::invalid_argument);
    CHECK_THROWS_AS(Mlp({MatrixXd::Ones(3, 2), MatrixXd::Ones(1, 4)}),
                    std::invalid_argument);
    CHECK_THROWS_AS(Mlp(std::vector<MatrixXd>{}), std::invalid_argument);
    CHECK_THROWS_AS(Mlp().forward(VectorXd::Zero(0)), std::invalid_argument);
  }
}

TEST_CASE("flat parameters: row-major round trip") {
  Rng rng(5);
  const Mlp net = make_mlp({3, 4, 2}, rng, 1.0);
  CHECK(net.parameter_count() == 3 * 4 + 4 * 2);

  Mlp clone = make_mlp({3, 4, 2}, rng, 1.0);
  clone.set_flat(net.flat());
  for (std::size_t i = 0; i < net.weights.size(); ++i)
    CHECK((clone.weights[i] - net.weights[i]).cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(clone.set_flat(VectorXd::Zero(3)), std::invalid_argument);
}

TEST_CASE("Lipschitz upper bound: pinned values and soundness") {
  SUBCASE("max absolute row sum of a single layer") {
    MatrixXd w(2, 2);
    w << 1.0, -2.0, 0.0, 3.0;
    CHECK(lipschitz_upper_bound(Mlp({w})) == 3.0);
  }
  SUBCASE("products across layers") {
    const Mlp net({2.0 * MatrixXd::Identity(2, 2),
                   0.5 * MatrixXd::Identity(2, 2)});
    CHECK(lipschitz_upper_bound(net) == 1.0);
  }
  SUBCASE("zero network has bound zero") {
    CHECK(lipschitz_upper_bound(Mlp({MatrixXd::Zero(2, 3)})) == 0.0);
  }
  SUBCASE("bounds the observed increment ratio everywhere") {
    Rng rng(23);
    const Mlp net = make_mlp({2, 5, 2}, rng, 1.5);
    const double bound = lipschitz_upper_bound(net);
    for (int trial = 0; trial < 10000; ++trial) {
      VectorXd x1(2), x2(2);
      for (int i = 0; i < 2; ++i) {
        x1(i) = uniform(rng, -3.0, 3.0);
        x2(i) = uniform(rng, -3.0, 3.0);
      }
      const double num =
          (net.forward(x1) - net.forward(x2)).cwiseAbs().maxCoeff();
      const double den = (x1 - x2).cwiseAbs().maxCoeff();
      CHECK(num <= bound * den * (1.0 + 1e-12) + 1e-15);
    }
  }
}

TEST_CASE("Lipschitz projection: uniform per-layer scaling") {
  SUBCASE("bound 4 capped at 1 halves both scalar layers") {
    const Mlp projected = project_to_lipschitz(two_scalar_layers(2.0, 2.0),
                                               1.0);
    CHECK(projected.weights[0](0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(projected.weights[1](0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(lipschitz_upper_bound(projected) ==
          doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("a network inside the cap is untouched") {
    const Mlp net = two_scalar_layers(0.5, 1.2);
    const Mlp projected = project_to_lipschitz(net, 1.0);
    CHECK(projected.weights[0](0, 0) == 0.5);
    CHECK(projected.weights[1](0, 0) == 1.2);
  }
  SUBCASE("single layer scales linearly") {
    const Mlp projected = project_to_lipschitz(single_layer(3.0), 1.5);
    CHECK(projected.weights[0](0, 0) == doctest::Approx(1.5).epsilon(1e-12));
  }
  SUBCASE("zero network stays zero") {
    const Mlp projected =
        project_to_lipschitz(Mlp({MatrixXd::Zero(2, 2)}), 1.0);
    CHECK(projected.weights[0].cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("post-condition holds for random networks") {
    Rng rng(31);
    for (int trial = 0; trial < 50; ++trial) {
      const Mlp net = make_mlp({2, 4, 2}, rng, 2.0);
      const double bound =
          lipschitz_upper_bound(project_to_lipschitz(net, 0.7));
      CHECK(bound <= 0.7 * (1.0 + 1e-12));
    }
  }
  SUBCASE("nonpositive cap is rejected") {
    CHECK_THROWS_AS(project_to_lipschitz(single_layer(1.0), 0.0),
                    std::invalid_argument);
  }
}

TEST_CASE("parameter gradients match central finite differences") {
  Rng rng(47);
  SUBCASE("vector-valued network with a random cotangent") {
    for (int trial = 0; trial < 5; ++trial) {
      const Mlp net = make_mlp({2, 5, 2}, rng, 0.9);
      VectorXd x(2), cot(2);
      for (int i = 0; i < 2; ++i) {
        x(i) = uniform(rng, -1.5, 1.5);
        cot(i) = uniform(rng, -1.0, 1.0);
      }
      const VectorXd g = parameter_gradient(net, x, cot);
      const VectorXd fd = fd_parameter_gradient(net, x, cot, 1e-6);
      for (int i = 0; i < g.size(); ++i)
        CHECK(std::abs(g(i) - fd(i)) <= 1e-5 * std::max(1.0, std::abs(fd(i))));
    }
  }
  SUBCASE("scalar-valued network with a unit cotangent") {
    const Mlp net = make_mlp({2, 5, 1}, rng, 0.9);
    VectorXd x(2);
    x << 0.4, -1.1;
    const VectorXd g = parameter_gradient(net, x, VectorXd::Ones(1));
    const VectorXd fd = fd_parameter_gradient(net, x, VectorXd::Ones(1), 1e-6);
    for (int i = 0; i < g.size(); ++i)
      CHECK(std::abs(g(i) - fd(i)) <= 1e-5 * std::max(1.0, std::abs(fd(i))));
  }
  SUBCASE("at the origin every parameter direction is flat") {
    const Mlp net = make_mlp({2, 5, 2}, rng, 0.9);
    const VectorXd g =
        parameter_gradient(net, VectorXd::Zero(2), VectorXd::Ones(2));
    // Hidden activations vanish at x = 0, so the output layer's gradient is
    // zero; the chain through tanh'(0) = 1 still reaches the first layer but
    // multiplies the zero input.
    CHECK(g.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("cotangent size must match the output") {
    const Mlp net = make_mlp({2, 5, 2}, rng, 0.9);
    CHECK_THROWS_AS(parameter_gradient(net, VectorXd::Zero(2),
                                       VectorXd::Ones(1)),
                    std::invalid_argument);
  }
}

TEST_CASE("Lipschitz subgradient: active rows and finite differences") {
  MatrixXd w1(2, 2), w2(1, 2);
  w1 << 1.0, 0.2, 0.3, 2.0;  // row sums 1.2 and 2.3: row 1 active
  w2 << 0.5, 1.1;            // single row, sum 1.6
  const Mlp net({w1, w2});

  SUBCASE("pinned entries in flat layout") {
    const VectorXd g = lipschitz_subgradient(net);
    CHECK(g(0) == 0.0);
    CHECK(g(1) == 0.0);
    CHECK(g(2) == doctest::Approx(1.6).epsilon(1e-12));
    CHECK(g(3) == doctest::Approx(1.6).epsilon(1e-12));
    CHECK(g(4) == doctest::Approx(2.3).epsilon(1e-12));
    CHECK(g(5) == doctest::Approx(2.3).epsilon(1e-12));
  }
  SUBCASE("matches finite differences away from ties") {
    Mlp probe = net;
    const VectorXd p = net.flat();
    const VectorXd g = lipschitz_subgradient(net);
    for (int i = 0; i < p.size(); ++i) {
      VectorXd hi = p, lo = p;
      hi(i) += 1e-7;
      lo(i) -= 1e-7;
      probe.set_flat(hi);
      const double fhi = lipschitz_upper_bound(probe);
      probe.set_flat(lo);
      const double flo = lipschitz_upper_bound(probe);
      const double fd = (fhi - flo) / 2e-7;
      CHECK(std::abs(g(i) - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("n-step advantage: reward window plus value difference") {
  const Mlp zero_critic(
      std::vector<MatrixXd>{MatrixXd::Zero(1, 2)});
  VectorXd a(2), b(2);
  a << 0.3, -0.2;
  b << -0.1, 0.4;

  SUBCASE("all zeros") {
    CHECK(n_step_advantage(VectorXd::Zero(3), zero_critic, a, b) == 0.0);
  }
  SUBCASE("pure reward sum under a zero critic") {
    CHECK(n_step_advantage(VectorXd::Ones(2), zero_critic, a, b) == 2.0);
  }
  SUBCASE("identical endpoint states cancel the value terms exactly") {
    Rng rng(3);
    const Mlp critic = make_mlp({2, 4, 1}, rng, 1.0);
    VectorXd rewards(3);
    rewards << 0.5, -1.5, 0.25;
    CHECK(n_step_advantage(rewards, critic, a, a) == rewards.sum());
  }
  SUBCASE("rejections") {
    Rng rng(4);
    CHECK_THROWS_AS(n_step_advantage(VectorXd(), zero_critic, a, b),
                    std::invalid_argument);
    const Mlp vector_net = make_mlp({2, 3, 2}, rng, 1.0);
    CHECK_THROWS_AS(n_step_advantage(VectorXd::Ones(2), vector_net, a, b),
                    std::invalid_argument);
  }
}

TEST_CASE("perturbation policy: gain action plus network deviation") {
  Rng rng(9);
  const Mlp actor = make_mlp({2, 4, 2}, rng, 0.7);
  MatrixXd gain(2, 2);
  gain << -1.0, 0.3, 0.2, -1.5;
  const Policy pi = perturbation_policy(gain, actor);
  VectorXd x(2);
  x << 0.25, -0.6;
  CHECK((pi(x) - (gain * x + actor.forward(x))).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(perturbation_policy(MatrixXd::Zero(3, 3), actor),
                  std::invalid_argument);
}

TEST_CASE("weight files: exact round trip and strict parsing") {
  Rng rng(17);
  const Mlp net = make_mlp({2, 5, 2}, rng, 1.3);

  std::ostringstream first;
  write_mlp(first, net);
  std::istringstream in(first.str());
  const Mlp back = read_mlp(in);

  REQUIRE(back.layer_count() == net.layer_count());
  for (std::size_t i = 0; i < net.weights.size(); ++i)
    CHECK((back.weights[i] - net.weights[i]).cwiseAbs().maxCoeff() == 0.0);

  std::ostringstream second;
  write_mlp(second, back);
  CHECK(first.str() == second.str());

  SUBCASE("malformed inputs are rejected") {
    std::istringstream bad_header("mlp v2\nsizes 1 1\n1\n");
    CHECK_THROWS_AS(read_mlp(bad_header), std::runtime_error);
    std::istringstream truncated("mlp v1\nsizes 2 2\n1,2\n");
    CHECK_THROWS_AS(read_mlp(truncated), std::runtime_error);
    std::istringstream junk("mlp v1\nsizes 1 1\n1.5x\n");
    CHECK_THROWS_AS(read_mlp(junk), std::runtime_error);
    std::istringstream wide("mlp v1\nsizes 1 1\n1.5,2.5\n");
    CHECK_THROWS_AS(read_mlp(wide), std::runtime_error);
  }
}

TEST_CASE("training: determinism, budget enforcement, and rejections") {
  const PlantModel plant = [] {
    MatrixXd a(2, 2), b(2, 2);
    a << 0.0, 1.0, -1.0, -1.0;
    b = MatrixXd::Identity(2, 2);
    return linear_plant(a, b);
  }();
  const ParamBox params(VectorXd::Constant(1, -0.1),
                        VectorXd::Constant(1, 0.1));
  const StabilityCertificate cert = basic_certificate(0.5);
  TrainConfig cfg;
  cfg.n_trajectories = 4;
  cfg.n_steps = 25;
  cfg.advantage_horizon = 5;
  cfg.substeps = 2;
  cfg.seed = 7;
  cfg.sigma0 = VectorXd::Constant(2, 0.0225);
  cfg.init_scale = 1.0;

  SUBCASE("identical seeds give bit-identical runs") {
    const TrainResult r1 = train(plant, cert, params, quadratic_reward(), cfg);
    const TrainResult r2 = train(plant, cert, params, quadratic_reward(), cfg);
    CHECK((r1.actor.flat() - r2.actor.flat()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((r1.critic.flat() - r2.critic.flat()).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(r1.log.size() == 4);
    REQUIRE(r2.log.size() == 4);
    for (std::size_t i = 0; i < r1.log.size(); ++i) {
      CHECK(r1.log[i].utility == r2.log[i].utility);
      CHECK(r1.log[i].lipschitz == r2.log[i].lipschitz);
      CHECK(r1.log[i].nu == r2.log[i].nu);
    }

    TrainConfig other = cfg;
    other.seed = 8;
    const TrainResult r3 =
        train(plant, cert, params, quadratic_reward(), other);
    CHECK((r1.actor.flat() - r3.actor.flat()).cwiseAbs().maxCoeff() > 0.0);
  }
  SUBCASE("the budget holds after every update and nu decays with a floor") {
    TrainConfig decayed = cfg;
    decayed.n_trajectories = 8;
    decayed.nu_decay = 0.5;
    decayed.nu_min = 0.1;
    const TrainResult r =
        train(plant, cert, params, quadratic_reward(), decayed);
    REQUIRE(r.log.size() == 8);
    double nu = 1.0;
    for (const TrainRecord& rec : r.log) {
      CHECK(rec.lipschitz <= 0.5 * (1.0 + 1e-12));
      CHECK(rec.nu == nu);
      nu = std::max(decayed.nu_min, nu * decayed.nu_decay);
    }
    CHECK(r.log.back().nu == 0.1);
  }
  SUBCASE("invalid certificates are refused") {
    StabilityCertificate bad = cert;
    bad.p = -MatrixXd::Identity(2, 2);
    CHECK_THROWS_AS(train(plant, bad, params, quadratic_reward(), cfg),
                    std::invalid_argument);
    StabilityCertificate oversized = cert;
    oversized.sigma = 5.0;
    CHECK_THROWS_AS(train(plant, oversized, params, quadratic_reward(), cfg),
                    std::invalid_argument);
  }
  SUBCASE("degenerate configurations are refused") {
    TrainConfig bad = cfg;
    bad.advantage_horizon = 25;
    CHECK_THROWS_AS(train(plant, cert, params, quadratic_reward(), bad),
                    std::invalid_argument);
    TrainConfig unknown = cfg;
    unknown.optimizer = "rmsprop";
    CHECK_THROWS_AS(train(plant, cert, params, quadratic_reward(), unknown),
                    std::invalid_argument);
  }
}

TEST_CASE("training: provided networks and zero-exploration behavior") {
  const PlantModel plant = [] {
    MatrixXd a(2, 2), b(2, 2);
    a << 0.0, 1.0, -1.0, -1.0;
    b = MatrixXd::Identity(2, 2);
    return linear_plant(a, b);
  }();
  const ParamBox params(VectorXd::Constant(1, -0.1),
                        VectorXd::Constant(1, 0.1));
  const StabilityCertificate cert = basic_certificate(0.5);
  Rng init_rng(99);
  const Mlp actor0 = project_to_lipschitz(
      make_mlp({2, 3, 2}, init_rng, 0.4), cert.lipschitz);
  const Mlp critic0 = make_mlp({2, 3, 1}, init_rng, 0.4);

  SUBCASE("zero trajectories return the inputs unchanged") {
    TrainConfig cfg;
    cfg.n_trajectories = 0;
    cfg.n_steps = 10;
    cfg.advantage_horizon = 2;
    cfg.sigma0 = VectorXd::Constant(2, 0.01);
    const TrainResult r =
        train(plant, cert, params, quadratic_reward(), cfg, actor0, critic0);
    CHECK(r.log.empty());
    CHECK((r.actor.flat() - actor0.flat()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((r.critic.flat() - critic0.flat()).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("zero exploration noise freezes the plain-gradient actor") {
    TrainConfig cfg;
    cfg.n_trajectories = 3;
    cfg.n_steps = 20;
    cfg.advantage_horizon = 4;
    cfg.substeps = 2;
    cfg.sigma0 = VectorXd::Zero(2);
    cfg.optimizer = "sgd";
    cfg.beta = 0.0;
    const TrainResult r =
        train(plant, cert, params, quadratic_reward(), cfg, actor0, critic0);
    // The score weights every actor sample by the realized deviation, which
    // is identically zero here, so only the critic moves.
    CHECK((r.actor.flat() - actor0.flat()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((r.critic.flat() - critic0.flat()).cwiseAbs().maxCoeff() > 0.0);
  }
}

TEST_CASE("training log: CSV layout") {
  std::vector<TrainRecord> log(2);
  log[0] = {1, -0.5, 1.05, 1.0};
  log[1] = {2, -0.25, 0.9, 0.98};
  std::ostringstream os;
  write_train_log(os, log);
  CHECK(os.str() ==
        "trajectory,return,lipschitz,nu\n"
        "1,-0.5,1.05,1\n"
        "2,-0.25,0.9,0.98\n");
}

TEST_SUITE_END();
