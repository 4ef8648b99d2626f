// Experiment runner CLI. Subcommands: simulate, fft, fisher, quantum,
// validate. Each takes --config <path> and --out <dir>, plus --preset and
// --seed overrides. Exit codes: 0 ok, 2 config error, 3 I/O error,
// 4 internal invariant violation.

#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "nvnmr/experiment.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonOptions {
  std::string config_path;
  std::string out_dir = ".";
  std::string preset;
  std::uint64_t seed = 0;
  bool seed_given = false;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config_path, "JSON config file");
  cmd->add_option("--out", opts.out_dir, "output directory");
  cmd->add_option("--preset", opts.preset, "named preset overriding the config physics");
  cmd->add_option("--seed", opts.seed, "master seed override")
      ->each([&opts](const std::string&) { opts.seed_given = true; });
}

nvnmr::ExperimentConfig resolve_config(const CommonOptions& opts) {
  nvnmr::ExperimentConfig cfg;
  if (!opts.config_path.empty()) {
    cfg = nvnmr::load_config_file(opts.config_path);
  }
  if (!opts.preset.empty()) {
    if (!cfg.preset.empty() && cfg.preset != opts.preset)
      std::cerr << "note: --preset " << opts.preset << " overrides config preset "
                << cfg.preset << "\n";
    nvnmr::apply_preset(cfg, opts.preset);
  }
  if (opts.config_path.empty() && opts.preset.empty())
    throw nvnmr::ConfigError("need --config and/or --preset");
  if (opts.seed_given) cfg.seed = opts.seed;
  return cfg;
}

int dispatch(const std::string& command, const CommonOptions& opts) {
  const nvnmr::ExperimentConfig cfg = resolve_config(opts);
  const fs::path out_dir(opts.out_dir);

  if (command == "validate") {
    const nvnmr::ValidationReport report = nvnmr::validate_config(cfg);
    std::cout << report.to_json().dump(2) << "\n";
    return nvnmr::kExitOk;
  }

  nvnmr::RunArtifacts artifacts;
  if (command == "simulate") {
    artifacts = nvnmr::run_simulate(cfg, out_dir);
  } else if (command == "fft") {
    artifacts = nvnmr::run_fft(cfg, out_dir);
  } else if (command == "fisher") {
    artifacts = nvnmr::run_fisher(cfg, out_dir);
  } else if (command == "quantum") {
    artifacts = nvnmr::run_quantum(cfg, out_dir);
  }
  for (const fs::path& f : artifacts.files) std::cout << f.string() << "\n";
  return nvnmr::kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NV-NMR protocol simulation and analysis"};
  app.require_subcommand(1);

  CommonOptions opts;
  for (const char* name : {"simulate", "fft", "fisher", "quantum", "validate"}) {
    CLI::App* cmd = app.add_subcommand(name);
    add_common(cmd, opts);
  }

  CLI11_PARSE(app, argc, argv);

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return dispatch(command, opts);
  } catch (const nvnmr::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return nvnmr::kExitConfigError;
  } catch (const nvnmr::IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return nvnmr::kExitIoError;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return nvnmr::kExitInternalError;
  }
}
