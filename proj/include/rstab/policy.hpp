#ifndef RSTAB_POLICY_HPP
#define RSTAB_POLICY_HPP

// Zero-bias multilayer perceptrons for the actor (control perturbation) and
// critic (value estimate), an induced-infinity-norm Lipschitz bound with a
// uniform-scaling projection, and an actor-critic trainer that keeps the
// actor inside a certified Lipschitz budget after every update.

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <rstab/certificate.hpp>
#include <rstab/common.hpp>
#include <rstab/model.hpp>
#include <rstab/sim.hpp>

namespace rstab {

// Fully-connected network with tanh on every hidden layer, identity output,
// and all biases fixed at zero, so net(0) = 0 for every parameter value.
// weights[i] maps layer-i activations to layer-(i+1) pre-activations; a
// single-layer network is purely linear.
struct Mlp {
  std::vector<MatrixXd> weights;

  Mlp() = default;
  explicit Mlp(std::vector<MatrixXd> w);

  int layer_count() const { return static_cast<int>(weights.size()); }
  int input_dim() const;
  int output_dim() const;
  int parameter_count() const;

  VectorXd forward(const VectorXd& x) const;

  // Row-major concatenation of all weight matrices, layer by layer.
  VectorXd flat() const;
  void set_flat(const VectorXd& p);
};

// sizes = {input, hidden..., output}; entries drawn uniformly from
// [-scale, scale].
Mlp make_mlp(const std::vector<int>& sizes, Rng& rng, double scale = 0.1);

// Gradient of cotangent . net(x) with respect to the flat parameter vector.
VectorXd parameter_gradient(const Mlp& net, const VectorXd& x,
                            const VectorXd& cotangent);

// Product of the layers' induced infinity norms (max absolute row sums).
// Upper-bounds the infinity-norm Lipschitz constant of the network because
// tanh is 1-Lipschitz elementwise.
double lipschitz_upper_bound(const Mlp& net);

// Subgradient of lipschitz_upper_bound in flat-parameter layout: in each
// layer the first row attaining the max absolute sum is active and the
// product rule distributes the other layers' norms onto its entries.
VectorXd lipschitz_subgradient(const Mlp& net);

// Scales every layer by (cap / bound)^(1 / layer_count) when the bound
// exceeds cap; identity otherwise, zero networks included.
Mlp project_to_lipschitz(const Mlp& net, double cap);

// Undiscounted n-step advantage. rewards holds the window r(k-n+1) .. r(k);
// the critic values the successor state x(k+1) against the window's first
// state x(k-n+1).
double n_step_advantage(const VectorXd& rewards, const Mlp& critic,
                        const VectorXd& x_next, const VectorXd& x_first);

// Total-control policy u(x) = gain x + actor(x) for closed-loop evaluation.
Policy perturbation_policy(const MatrixXd& gain, const Mlp& actor);

struct TrainConfig {
  double tau = 0.1;            // sampling interval (zero-order hold)
  double alpha_actor = 1e-3;   // actor step size
  double alpha_critic = 1e-3;  // critic step size
  VectorXd sigma0;             // exploration covariance diagonal; empty means
                               // 0.0225 per input channel
  double nu_decay = 0.98;      // per-trajectory exploration decay
  double nu_min = 1e-4;        // exploration floor
  int n_trajectories = 600;
  int n_steps = 200;           // control periods per trajectory
  int advantage_horizon = 20;  // reward window length, < n_steps
  double beta = 1e-15;         // Lipschitz regularizer weight
  std::uint64_t seed = 0;
  int hidden = 5;              // hidden width of freshly initialized networks
  double init_scale = 0.1;     // uniform initialization range
  int substeps = 10;           // integrator substeps per period
  std::string optimizer = "adam";  // "adam" or "sgd"
};

struct TrainRecord {
  int trajectory = 0;      // 1-based trajectory index
  double utility = 0.0;    // sum of rewards times tau over the trajectory
  double lipschitz = 0.0;  // actor bound after the update and projection
  double nu = 0.0;         // exploration coefficient used by this trajectory
};

struct TrainResult {
  Mlp actor;
  Mlp critic;
  std::vector<TrainRecord> log;
};

// Per trajectory: roll the plant under the total control gain x + u_e with
// exploration u_e ~ N(actor(x), nu diag(sigma0)) held over each period, the
// parameter redrawn from param_box every period; accumulate running-mean
// actor and critic gradients from the n-step advantage; step the parameters
// (ascent for the actor, descent for the critic); rescale the actor whenever
// its Lipschitz bound exceeds the certificate budget; decay nu. Initial
// states are drawn from the certificate's safe initialization ellipsoid.
// The certificate must be structurally valid or the trainer refuses to
// start. Identical seeds give bit-identical results.
TrainResult train(const PlantModel& model, const StabilityCertificate& cert,
                  const ParamBox& param_box, const Reward& reward,
                  const TrainConfig& cfg,
                  std::optional<Mlp> initial_actor = std::nullopt,
                  std::optional<Mlp> initial_critic = std::nullopt);

// CSV: trajectory, return, lipschitz, nu.
void write_train_log(std::ostream& os, const std::vector<TrainRecord>& log);

// Plain text: "mlp v1", a sizes line, then one CSV row per matrix row,
// layer by layer. Round-trips bit-identically.
void write_mlp(std::ostream& os, const Mlp& net);
Mlp read_mlp(std::istream& is);

}  // namespace rstab

#endif
