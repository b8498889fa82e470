#ifndef RSTAB_CLI_HPP
#define RSTAB_CLI_HPP

// Plain-text run configuration and the command pipeline behind the rstab
// binary: sector bounding, gain/certificate synthesis, fixed-gain
// certification, policy training, paired Monte-Carlo evaluation, and the
// end-to-end example reproduction.

#include <iosfwd>
#include <string>
#include <vector>

#include <rstab/model.hpp>
#include <rstab/policy.hpp>
#include <rstab/sim.hpp>
#include <rstab/synthesis.hpp>

namespace rstab {

struct RunConfig {
  std::string plant = "example";
  ParamBox params;           // empty: the plant's reference box
  MatrixXd domain_vertices;  // one vertex per row; empty: plant default
  SynthesisConfig synthesis;
  TrainConfig training;
  EvalConfig evaluation;
  MatrixXd certify_gain;  // used by certify and bound-sector when set
  double certify_lipschitz = 0.0;
  std::string output_dir = "out";
};

struct ConfigParse {
  RunConfig config;
  std::vector<std::string> errors;  // empty on success; exhaustive otherwise

  bool ok() const { return errors.empty(); }
};

// Flat "key = value" text under [section] headers; '#' starts a comment.
// Vectors are written "[a, b]", matrices "[a, b; c, d]". Unknown sections
// or keys, malformed values, and violated range invariants are all
// collected in one pass rather than stopping at the first problem.
ConfigParse parse_config(std::istream& is);

// Writes every field; feeding the output back to parse_config reproduces
// the configuration exactly.
void emit_config(std::ostream& os, const RunConfig& config);

// The shipped reference configuration: the full pipeline on the built-in
// plant with its published schedule and training setup.
RunConfig example_config();

// Executes one command against a parsed config. Progress and results go to
// diag. Returns 0 on success, 1 when a solve is infeasible (diag carries a
// machine-readable reason such as "LMI infeasible"), 2 on bad input.
int run_command(const std::string& command, const RunConfig& config,
                std::ostream& diag);

// argv-level entry: rstab <command> [config-file] [--output-dir DIR].
// The RSTAB_OUTPUT_DIR environment variable overrides the configured
// output directory, and the flag overrides both.
int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err);

}  // namespace rstab

#endif
