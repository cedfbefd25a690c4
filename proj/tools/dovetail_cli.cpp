#include "dovetail/workbench.hpp"

#include "CLI11.hpp"

#include <iostream>
#include <optional>

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  bool dump_iterations = false;
  std::optional<int> jobs;
  std::optional<double> fd_step;
  std::optional<double> threshold;
};

void add_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON run config or a previous run manifest")->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "RNG seed (overrides the config)");
  cmd->add_option("--out", f.out, "output directory (overrides the config)");
  cmd->add_flag("--dump-iterations", f.dump_iterations, "write per-iteration field dumps");
  cmd->add_option("--jobs", f.jobs, "worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--fd-step", f.fd_step, "finite-difference step");
  cmd->add_option("--threshold", f.threshold, "grad-check pass threshold on the mean relative difference");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-part joint simulation, gradient checking and shape optimization"};
  app.set_version_flag("--version", std::string(dovetail::kToolVersion));
  app.require_subcommand(1);
  Flags flags;
  const char* names[][2] = {
      {"simulate", "run the alternating contact solver and export fields"},
      {"grad-check", "compare adjoint gradients with central finite differences"},
      {"optimize", "gradient-descent shape optimization from each theta0"},
      {"sweep-poisson", "optimize for every Poisson's ratio in nu_list"},
      {"export-geometry", "write SVG and polygon text for each theta0"},
  };
  for (const auto& n : names) add_flags(app.add_subcommand(n[0], n[1]), flags);

  CLI11_PARSE(app, argc, argv);
  const std::string command = app.get_subcommands().front()->get_name();

  dovetail::RunConfig cfg;
  try {
    if (!flags.config.empty()) cfg = dovetail::load_run_config(flags.config);
  } catch (const dovetail::Error& e) {
    std::cerr << e.what() << '\n';
    return dovetail::kExitInvalidInput;
  }
  if (flags.seed) cfg.seed = *flags.seed;
  if (flags.out) cfg.out = *flags.out;
  if (flags.dump_iterations) cfg.dump_iterations = true;
  if (flags.jobs) cfg.jobs = *flags.jobs;
  if (flags.fd_step) cfg.grad_check.fd_step = *flags.fd_step;
  if (flags.threshold) cfg.grad_check.threshold = *flags.threshold;

  return dovetail::run_command(command, cfg, std::cout, std::cerr);
}
