#pragma once

// Config-driven experiment runner: named presets for the standard studies,
// a generic simulation pipeline, and serialization of traces, spectra, peak
// reports and Fisher results.
//
// Config format is a single JSON document. CSV outputs carry a header row
// with column units, '.' decimal separator. Summary JSON embeds the fully
// resolved config, so any run can be reproduced bit-identically from its
// summary alone.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "nvnmr/fisher.hpp"
#include "nvnmr/noise.hpp"
#include "nvnmr/quantum.hpp"
#include "nvnmr/spectral.hpp"
#include "nvnmr/types.hpp"

namespace nvnmr {

using json = nlohmann::json;

inline constexpr const char* kVersion = "0.1.0";

// CLI exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitIoError = 3;
inline constexpr int kExitInternalError = 4;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InternalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct AnalysisConfig {
  std::string window = "rectangular";
  bool detrend = true;
  int max_harmonic = 4;
};

struct SweepConfig {
  std::string parameter;  // "alpha" or "tau_t"
  std::vector<double> values;
};

struct OuConfig {
  int n_paths = 200;
  int substeps = 64;
  int n_static_samples = 8192;  // equal-variance static ensemble for comparison
};

struct FisherConfig {
  std::string scenario = "sensing_x";
  bool noisy_omega_s = true;
  double g1 = 0.0;  // 0 means: use protocol.g
  double g2 = 0.0;
  std::vector<double> n_sweep;
  std::vector<double> tau_sweep;
};

struct QuantumConfig {
  std::string mode = "xy_readout";  // or "backaction"
  std::vector<double> couplings;
  std::vector<double> larmor;
  double g_global = 1.0;
  Index steps = 0;
  std::string interaction = "flip_flop";  // or "sensing"
};

struct ExperimentConfig {
  std::string preset;
  std::uint64_t seed = 1;
  std::string route = "ensemble_static";  // closed_form | ensemble_static | ou_paths
  ProtocolParams protocol;
  MicroNoise micro;
  NoiseModel noise = NoNoise{};
  EnsembleSpec ensemble = QuadratureSpec{};
  AnalysisConfig analysis;
  std::optional<SweepConfig> sweep;
  OuConfig ou;
  FisherConfig fisher;
  QuantumConfig quantum;
  std::string input_trace;  // consumed by the fft command
};

struct ValidationReport {
  std::vector<std::string> errors;
  std::vector<std::string> warnings;

  bool ok() const { return errors.empty(); }
  json to_json() const;
};

std::vector<std::string> preset_names();

// Overwrites the physics fields with the named preset; explicit config
// fields applied afterwards override them. Throws ConfigError on unknown
// names.
void apply_preset(ExperimentConfig& cfg, const std::string& name);

ExperimentConfig config_from_json(const json& j);
json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config_file(const std::filesystem::path& path);

// Lists violated invariants and regime warnings; never throws.
ValidationReport validate_config(const ExperimentConfig& cfg);

struct RunArtifacts {
  std::vector<std::filesystem::path> files;
  json summary;
};

// The four experiment entry points behind the CLI subcommands. Each writes
// its artifact bundle (CSV traces/spectra, peaks JSON, summary JSON) into
// out_dir and is deterministic given cfg.seed.
RunArtifacts run_simulate(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);
RunArtifacts run_fft(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);
RunArtifacts run_fisher(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);
RunArtifacts run_quantum(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

// CSV round-trip helpers (deterministic %.17g formatting).
void write_trace_csv(const std::filesystem::path& path, const ProbabilityTrace& trace);
ProbabilityTrace read_trace_csv(const std::filesystem::path& path);
void write_spectrum_csv(const std::filesystem::path& path, const Spectrum& spec);
json peak_report_to_json(const PeakReport& report);

}  // namespace nvnmr
