#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <sstream>

#include "rstab/synthesis.hpp"

using namespace rstab;

namespace {

// Scalar plant xdot = theta x + u whose whole A matrix is uncertain.
PlantModel gain_uncertain_plant() {
  PlantModel p;
  p.name = "gain-uncertain";
  p.state_dim = 1;
  p.input_dim = 1;
  p.param_dim = 1;
  p.dynamics = [](const VectorXd& x, const VectorXd& u, const VectorXd& th) {
    return VectorXd::Constant(1, th(0) * x(0) + u(0)).eval();
  };
  p.jac_x = [](const VectorXd&, const VectorXd&, const VectorXd& th) {
    return MatrixXd::Constant(1, 1, th(0)).eval();
  };
  p.jac_u = [](const VectorXd&, const VectorXd&, const VectorXd&) {
    return MatrixXd::Identity(1, 1).eval();
  };
  p.dynamics_box = [](const Box& x, const Box& u, const Box& th) {
    IntervalVector dx(1);
    dx(0) = th(0) * x(0) + u(0);
    return dx;
  };
  p.jac_x_box = [](const Box&, const Box&, const Box& th) {
    IntervalMatrix j(1, 1);
    j(0, 0) = th(0);
    return j;
  };
  p.jac_u_box = [](const Box&, const Box&, const Box&) {
    IntervalMatrix j(1, 1);
    j(0, 0) = Interval(1.0);
    return j;
  };
  return p;
}

SafePolytope interval_domain(double half_width) {
  MatrixXd faces(2, 1);
  faces << 1.0, -1.0;
  return SafePolytope(faces, VectorXd::Constant(2, half_width));
}

SectorBound zero_sector(const MatrixXd& gain, double lipschitz) {
  SectorBound s;
  const int m = static_cast<int>(gain.rows());
  const int n = static_cast<int>(gain.cols());
  s.lo = MatrixXd::Zero(n, n + m);
  s.hi = MatrixXd::Zero(n, n + m);
  s.gain = gain;
  s.lipschitz = lipschitz;
  return s;
}

double closed_loop_decay(const MatrixXd& p, const MatrixXd& a_cl) {
  const MatrixXd s = p * a_cl + a_cl.transpose() * p;
  return Eigen::SelfAdjointEigenSolver<MatrixXd>(s).eigenvalues().maxCoeff();
}

}  // namespace

TEST_SUITE_BEGIN("synthesis");

TEST_CASE("nominal design: scalar plant with sign-indefinite dynamics") {
  const PlantModel plant = gain_uncertain_plant();
  const ParamBox params(VectorXd::Constant(1, -1.0), VectorXd::Constant(1, 1.0));
  const NominalDesign nd = init_nominal(plant, params, interval_domain(1.0));
  CHECK(nd.p(0, 0) > 0.0);
  // Both extreme linearizations must decay: theta + k < 0 at theta = +1.
  CHECK(nd.gain(0, 0) < -1.0);
}

TEST_CASE("nominal design: drift without actuation is rejected") {
  const PlantModel plant =
      linear_plant(MatrixXd::Identity(1, 1), MatrixXd::Zero(1, 1));
  const ParamBox params = ParamBox::degenerate(VectorXd::Zero(1));
  CHECK_THROWS_WITH_AS(
      init_nominal(plant, params, interval_domain(1.0)),
      "not robustly stabilizable at the linear level", std::runtime_error);
}

TEST_CASE("nominal design: example plant vertices all decay") {
  const PlantModel plant = example_plant();
  const ParamBox params = example_param_box();
  const SafePolytope domain = example_polytope();
  const SynthesisConfig cfg;
  const NominalDesign nd = init_nominal(plant, params, domain, cfg);

  Eigen::SelfAdjointEigenSolver<MatrixXd> pe(nd.p);
  CHECK(pe.eigenvalues().minCoeff() > 0.0);

  const UncertaintyVertices uv = uncertainty_vertices(plant, params);
  CHECK(uv.vertices.size() == 4);
  for (const LinearizedDynamics& v : uv.vertices)
    CHECK(closed_loop_decay(nd.p, v.a + v.b * nd.gain) < 0.0);

  // Face compatibility transfers to the shape: ||Q a_i|| <= b_i.
  const MatrixXd q = nd.p.inverse();
  for (int i = 0; i < domain.num_faces(); ++i)
    CHECK((q * domain.faces().row(i).transpose()).norm() <=
          domain.offsets()(i) + 1e-6);
}

TEST_CASE("multiplier feasibility: stable scalar loop accepts, unstable rejects") {
  const MatrixXd one = MatrixXd::Identity(1, 1);
  const SectorBound sec = zero_sector(MatrixXd::Zero(1, 1), 0.5);
  const SynthesisConfig cfg;

  const auto good = solve_multipliers(sec, -one, one, one, 0.5, cfg);
  REQUIRE(good.has_value());
  CHECK(good->gamma.minCoeff() >= 0.0);
  CHECK(good->lambda.minCoeff() >= 0.0);
  const SectorQcBlocks blk = sector_qc_blocks(sec, good->lambda);
  const MatrixXd t = stability_lmi(-one, one, one, blk, 0.5, good->gamma);
  CHECK(Eigen::SelfAdjointEigenSolver<MatrixXd>(t).eigenvalues().maxCoeff() <=
        -cfg.lmi_margin + 1e-7);

  CHECK(!solve_multipliers(sec, one, one, one, 0.5, cfg).has_value());
}

TEST_CASE("multiplier feasibility: published final iterate of the example") {
  // The gain/shape pair the pipeline is expected to reach at full budget;
  // multipliers must exist for the certificate matrix at L = 1.1.
  const PlantModel plant = example_plant();
  const ParamBox params = example_param_box();
  const SafePolytope domain = example_polytope();
  MatrixXd gain(2, 2);
  gain << -2.9714, -0.1204, 1.5924, -2.1744;
  MatrixXd p(2, 2);
  p << 3.8426, -0.2612, -0.2612, 1.5241;
  const double lip = 1.1;

  const SectorBound sec = compute_sector(plant, gain, lip, domain, params);
  const LinearizedDynamics nom = linearize(plant, VectorXd::Zero(2));
  const SynthesisConfig cfg;
  const auto mult = solve_multipliers(sec, nom.a, nom.b, p, lip, cfg);
  REQUIRE(mult.has_value());

  StabilityCertificate cert;
  cert.gain = gain;
  cert.lipschitz = lip;
  cert.p = p;
  cert.multipliers = *mult;
  cert.delta = 1.0;
  cert.domain = domain;
  cert.sigma = 0.3272;
  CHECK(max_level(p, domain) >= cert.sigma * 0.999);
  const Verdict v = verify_certificate(plant, cert, sec);
  CHECK(v.valid);
  CHECK(v.reason.empty());
}

TEST_CASE("gain step: an already-feasible point stays put") {
  const MatrixXd one = MatrixXd::Identity(1, 1);
  const SectorBound sec = zero_sector(MatrixXd::Zero(1, 1), 0.1);
  const auto gain =
      solve_gain_step(sec, -one, one, one, MatrixXd::Zero(1, 1), 0.1);
  REQUIRE(gain.has_value());
  CHECK(std::abs((*gain)(0, 0)) <= 1e-3);
}

TEST_CASE("lyapunov step: keeps the shape near the incumbent") {
  const MatrixXd one = MatrixXd::Identity(1, 1);
  const SectorBound sec = zero_sector(MatrixXd::Zero(1, 1), 0.1);
  const auto up = solve_lyapunov_step(sec, -one, one, MatrixXd::Zero(1, 1),
                                      2.0 * one, 0.1);
  REQUIRE(up.has_value());
  CHECK(std::abs(up->p(0, 0) - 2.0) <= 1e-2);
  CHECK(up->multipliers.gamma.minCoeff() >= 0.0);
  CHECK(up->multipliers.lambda.minCoeff() >= 0.0);
}

TEST_CASE("iteration step: example plant accepts the first schedule point") {
  const PlantModel plant = example_plant();
  const ParamBox params = example_param_box();
  const SafePolytope domain = example_polytope();
  const SynthesisConfig cfg;
  const NominalDesign nd = init_nominal(plant, params, domain, cfg);

  const auto step = iteration_step(plant, params, domain.scaled(0.05),
                                   nd.gain, nd.p, 0.055, cfg);
  REQUIRE(step.has_value());
  const LinearizedDynamics nom = linearize(plant, VectorXd::Zero(2));
  const SectorQcBlocks blk =
      sector_qc_blocks(step->sector, step->multipliers.lambda);
  const MatrixXd t = stability_lmi(nom.a + nom.b * step->gain, nom.b, step->p,
                                   blk, 0.055, step->multipliers.gamma);
  CHECK(Eigen::SelfAdjointEigenSolver<MatrixXd>(t).eigenvalues().maxCoeff() <
        0.0);
}

TEST_CASE("fixed-gain solves reject an inflated sector") {
  // A free gain can always outrun a bad sector (the decay term is unbounded
  // in K while the sector penalty is fixed), so the rejection must come from
  // the stages that hold the gain still.
  const PlantModel plant = example_plant();
  const ParamBox params = example_param_box();
  const SafePolytope domain = example_polytope();
  const SynthesisConfig cfg;
  const NominalDesign nd = init_nominal(plant, params, domain, cfg);
  const LinearizedDynamics nom = linearize(plant, VectorXd::Zero(2));

  SectorBound sec = compute_sector(plant, nd.gain, 0.055, domain.scaled(0.05),
                                   params, SectorOptions{});
  const MatrixXd mid = 0.5 * (sec.lo + sec.hi);
  const MatrixXd half = 0.5 * (sec.hi - sec.lo);
  sec.lo = mid - 100.0 * half.cwiseMax(0.05);
  sec.hi = mid + 100.0 * half.cwiseMax(0.05);
  CHECK(!solve_multipliers(sec, nom.a, nom.b, nd.p, 0.055, cfg).has_value());
  CHECK(!solve_lyapunov_step(sec, nom.a, nom.b, nd.gain, nd.p, 0.055, cfg)
             .has_value());
}

TEST_CASE("schedule: frozen parameters keep every step feasible") {
  MatrixXd a(2, 2), b(2, 2);
  a << 0, 1, -1, -1;
  b = MatrixXd::Identity(2, 2);
  const PlantModel plant = linear_plant(a, b);
  const ParamBox params = ParamBox::degenerate(VectorXd::Zero(1));
  MatrixXd faces(4, 2);
  faces << 1, 0, -1, 0, 0, 1, 0, -1;
  const SafePolytope domain(faces, VectorXd::Ones(4));

  SynthesisConfig cfg;
  cfg.w = 0.8;
  cfg.n_steps = 4;
  const SynthesisResult res = synthesize(plant, params, domain, cfg);

  CHECK(res.iterations == 4);
  CHECK(res.certificate.lipschitz == 0.8);  // w * (4/4), exactly
  CHECK(res.certificate.delta == 1.0);
  REQUIRE(res.log.size() == 4);
  for (int k = 0; k < 4; ++k) {
    CHECK(res.log[k].feasible);
    CHECK(res.log[k].delta == (k + 1) / 4.0);
    CHECK(res.log[k].lipschitz == 0.8 * ((k + 1) / 4.0));
  }
  const Verdict v = verify_certificate(plant, res.certificate, res.sector);
  CHECK(v.valid);
  CHECK(res.certificate.sigma > 0.0);
}

TEST_CASE("schedule: forced rejection rolls back to the last good iterate") {
  MatrixXd a(2, 2), b(2, 2);
  a << 0, 1, -1, -1;
  b = MatrixXd::Identity(2, 2);
  const PlantModel plant = linear_plant(a, b);
  const ParamBox params = ParamBox::degenerate(VectorXd::Zero(1));
  MatrixXd faces(4, 2);
  faces << 1, 0, -1, 0, 0, 1, 0, -1;
  const SafePolytope domain(faces, VectorXd::Ones(4));

  SynthesisConfig cfg;
  cfg.w = 1.0;
  cfg.n_steps = 5;
  SynthesisHooks hooks;
  hooks.veto = [](int k) { return k == 3; };
  const SynthesisResult res = synthesize(plant, params, domain, cfg, hooks);

  CHECK(res.iterations == 2);
  CHECK(res.certificate.lipschitz == 1.0 * (2.0 / 5.0));
  CHECK(res.certificate.delta == 2.0 / 5.0);
  REQUIRE(res.log.size() == 3);
  CHECK(res.log[2].feasible == false);
  const Verdict v = verify_certificate(plant, res.certificate, res.sector);
  CHECK(v.valid);

  // Vetoing the very first step leaves the linear-only design.
  SynthesisHooks all;
  all.veto = [](int) { return true; };
  const SynthesisResult bare = synthesize(plant, params, domain, cfg, all);
  CHECK(bare.iterations == 0);
  CHECK(bare.certificate.lipschitz == 0.0);
  CHECK(bare.certificate.delta == 0.0);
  CHECK(bare.certificate.sigma > 0.0);
  CHECK((bare.certificate.gain - bare.nominal.gain).cwiseAbs().maxCoeff() ==
        0.0);
}

TEST_CASE("schedule: example plant shifts eigenvalues left") {
  const PlantModel plant = example_plant();
  const ParamBox params = example_param_box();
  const SafePolytope domain = example_polytope();

  SynthesisConfig cfg;
  cfg.w = 1.1;
  cfg.n_steps = 5;
  const SynthesisResult res = synthesize(plant, params, domain, cfg);

  CHECK(res.iterations == 5);
  CHECK(res.certificate.lipschitz == 1.1);
  const Verdict v = verify_certificate(plant, res.certificate, res.sector);
  CHECK(v.valid);
  CHECK(v.reason.empty());
  CHECK(res.certificate.sigma > 0.05);
  CHECK(res.certificate.sigma < 1.0);

  REQUIRE(res.log.size() == 5);
  CHECK(res.log.back().eig_real.maxCoeff() <=
        res.log.front().eig_real.maxCoeff() - 0.02);

  std::ostringstream os;
  write_iteration_log(os, res.log);
  const std::string text = os.str();
  CHECK(text.find("k,delta,lipschitz,feasible,eig_re_0,eig_re_1,sigma") == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 6);
}

TEST_CASE("schedule rejects degenerate configuration") {
  const PlantModel plant = example_plant();
  SynthesisConfig cfg;
  cfg.n_steps = 0;
  CHECK_THROWS_AS(
      synthesize(plant, example_param_box(), example_polytope(), cfg),
      std::invalid_argument);
  cfg.n_steps = 1;
  cfg.w = -0.5;
  CHECK_THROWS_AS(
      synthesize(plant, example_param_box(), example_polytope(), cfg),
      std::invalid_argument);
}

TEST_SUITE_END();
