#pragma once

#include "dovetail/errors.hpp"
#include "dovetail/optimizer.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dovetail {

inline constexpr std::string_view kToolName = "dovetail";
inline constexpr std::string_view kToolVersion = "1.0.0";

enum ExitCode : int {
  kExitOk = 0,
  kExitInvalidInput = 2,
  kExitSolverFailure = 3,
  kExitThreshold = 4,
};

struct GradCheckOptions {
  double fd_step = 1e-4;
  double threshold = 1e-3;
  AdjointMode mode = AdjointMode::FullTape;
};

struct RunConfig {
  DesignSpace space = DesignSpace::SingleDovetail;
  /// Empty means the space's default theta.
  std::vector<Eigen::VectorXd> theta0;
  Material material;
  /// Unset means 0.001 GPa for the single dovetail and 0.003 GPa otherwise.
  std::optional<double> traction;
  double mesh_step = 0.5;
  PenaltyConfig penalty;
  ObjectiveConfig objective;
  AlternateOptions solver;
  OptimizerConfig optimizer;
  GradCheckOptions grad_check;
  std::vector<double> nu_list = {0.3, 0.4};
  std::uint64_t seed = 0;
  std::string out = "out";
  bool dump_iterations = false;
  int jobs = 1;

  double resolved_traction() const;
  std::vector<Eigen::VectorXd> resolved_theta0() const;
  SimSettings sim_settings() const;
  ObjectiveConfig objective_config() const;
  OptimizerConfig optimizer_config() const;
};

Eigen::VectorXd default_theta(DesignSpace space);
double default_traction(DesignSpace space);

/// Accepts a RunConfig document or a run manifest (its `config` member).
/// Unknown keys, wrong types and out-of-range values throw InvalidConfig.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);
/// Fully resolved configuration as JSON; parse_run_config round-trips it.
std::string run_config_json(const RunConfig& cfg);
/// Range checks on every field; throws InvalidConfig.
void validate_run_config(const RunConfig& cfg);

/// Each command writes its artifacts and `manifest.json` into cfg.out and
/// returns an exit code. Errors propagate; run_command maps them to codes.
int cmd_simulate(const RunConfig& cfg, std::ostream& log);
int cmd_grad_check(const RunConfig& cfg, std::ostream& log);
int cmd_optimize(const RunConfig& cfg, std::ostream& log);
int cmd_sweep_poisson(const RunConfig& cfg, std::ostream& log);
int cmd_export_geometry(const RunConfig& cfg, std::ostream& log);

/// Dispatches by subcommand name and maps errors to exit codes.
int run_command(std::string_view name, const RunConfig& cfg, std::ostream& log, std::ostream& err);

int exit_code_for(ErrorKind kind);

/// One optimization per theta0, spread over cfg.jobs threads.
std::vector<OptTrace> optimize_all(const RunConfig& cfg);

}  // namespace dovetail
