#include "nvnmr/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "nvnmr/rng.hpp"
#include "nvnmr/signal_core.hpp"

namespace nvnmr {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void ensure_finite(double v, const char* what) {
  if (!std::isfinite(v))
    throw InternalError(std::string("non-finite value in ") + what);
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

// Least squares through the origin plus the usual R^2 about the mean.
struct OriginFit {
  double slope = 0.0;
  double r_squared = 0.0;
};

OriginFit fit_through_origin(const std::vector<double>& x, const std::vector<double>& y) {
  double sxy = 0.0, sxx = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += x[i] * y[i];
    sxx += x[i] * x[i];
    sy += y[i];
  }
  OriginFit fit;
  fit.slope = sxy / sxx;
  const double mean = sy / static_cast<double>(y.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    ss_res += std::pow(y[i] - fit.slope * x[i], 2);
    ss_tot += std::pow(y[i] - mean, 2);
  }
  fit.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  return fit;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);  // binary: no platform newline games
  if (!out) throw IoError("cannot open for writing: " + path.string());
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// JSON serialization
// ---------------------------------------------------------------------------

namespace {

json noise_to_json(const NoiseModel& noise) {
  json j;
  if (std::holds_alternative<NoNoise>(noise)) {
    j["type"] = "none";
  } else if (const auto* u = std::get_if<UniformOffsetNoise>(&noise)) {
    j["type"] = "uniform_offset";
    j["half_width"] = u->half_width;
    j["center"] = u->center;
  } else if (const auto* g = std::get_if<GaussianMacroscopicNoise>(&noise)) {
    j["type"] = "gaussian_macroscopic";
    j["sigma"] = g->sigma;
  } else if (const auto* u = std::get_if<UniformMacroscopicNoise>(&noise)) {
    j["type"] = "uniform_macroscopic";
    j["half_width"] = u->half_width;
  } else if (const auto* ou = std::get_if<OrnsteinUhlenbeckNoise>(&noise)) {
    j["type"] = "ornstein_uhlenbeck";
    j["correlation_time"] = ou->correlation_time;
    j["diffusion"] = ou->diffusion;
    j["seed"] = ou->seed;
  }
  return j;
}

NoiseModel noise_from_json(const json& j) {
  const std::string type = j.value("type", "none");
  if (type == "none") return NoNoise{};
  if (type == "uniform_offset")
    return UniformOffsetNoise{j.value("half_width", 0.0), j.value("center", 0.0)};
  if (type == "gaussian_macroscopic")
    return GaussianMacroscopicNoise{j.value("sigma", 0.0)};
  if (type == "uniform_macroscopic")
    return UniformMacroscopicNoise{j.value("half_width", 0.0)};
  if (type == "ornstein_uhlenbeck")
    return OrnsteinUhlenbeckNoise{j.value("correlation_time", 0.0),
                                  j.value("diffusion", 0.0),
                                  j.value("seed", std::uint64_t{0})};
  throw ConfigError("unknown noise type '" + type + "'");
}

json ensemble_to_json(const EnsembleSpec& spec) {
  json j;
  if (const auto* q = std::get_if<QuadratureSpec>(&spec)) {
    j["method"] = "quadrature";
    j["order"] = q->order;
  } else if (const auto* mc = std::get_if<MonteCarloSpec>(&spec)) {
    j["method"] = "monte_carlo";
    j["n_samples"] = static_cast<std::int64_t>(mc->n_samples);
    j["seed"] = mc->seed;
  }
  return j;
}

EnsembleSpec ensemble_from_json(const json& j) {
  const std::string method = j.value("method", "quadrature");
  if (method == "quadrature") return QuadratureSpec{j.value("order", 64)};
  if (method == "monte_carlo")
    return MonteCarloSpec{j.value("n_samples", std::int64_t{100000}),
                          j.value("seed", std::uint64_t{0})};
  throw ConfigError("unknown ensemble method '" + method + "'");
}

}  // namespace

json config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["preset"] = cfg.preset;
  j["seed"] = cfg.seed;
  j["route"] = cfg.route;
  j["protocol"] = {{"g", cfg.protocol.g},
                   {"tau", cfg.protocol.tau},
                   {"delta1", cfg.protocol.delta1},
                   {"delta2", cfg.protocol.delta2},
                   {"phi_m", cfg.protocol.phi_m},
                   {"alpha", cfg.protocol.alpha},
                   {"n_shots", static_cast<std::int64_t>(cfg.protocol.n_shots)}};
  j["micro"] = {{"delta_width", cfg.micro.delta_width}, {"epsilon0", cfg.micro.epsilon0}};
  j["noise"] = noise_to_json(cfg.noise);
  j["ensemble"] = ensemble_to_json(cfg.ensemble);
  j["analysis"] = {{"window", cfg.analysis.window},
                   {"detrend", cfg.analysis.detrend},
                   {"max_harmonic", cfg.analysis.max_harmonic}};
  if (cfg.sweep) {
    j["sweep"] = {{"parameter", cfg.sweep->parameter}, {"values", cfg.sweep->values}};
  } else {
    j["sweep"] = nullptr;
  }
  j["ou"] = {{"n_paths", cfg.ou.n_paths},
             {"substeps", cfg.ou.substeps},
             {"n_static_samples", cfg.ou.n_static_samples}};
  j["fisher"] = {{"scenario", cfg.fisher.scenario},
                 {"noisy_omega_s", cfg.fisher.noisy_omega_s},
                 {"g1", cfg.fisher.g1},
                 {"g2", cfg.fisher.g2},
                 {"n_sweep", cfg.fisher.n_sweep},
                 {"tau_sweep", cfg.fisher.tau_sweep}};
  j["quantum"] = {{"mode", cfg.quantum.mode},
                  {"couplings", cfg.quantum.couplings},
                  {"larmor", cfg.quantum.larmor},
                  {"g_global", cfg.quantum.g_global},
                  {"steps", static_cast<std::int64_t>(cfg.quantum.steps)},
                  {"interaction", cfg.quantum.interaction}};
  j["input_trace"] = cfg.input_trace;
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig cfg;
  if (j.contains("preset") && !j["preset"].is_null()) cfg.preset = j["preset"];
  if (!cfg.preset.empty()) apply_preset(cfg, cfg.preset);

  cfg.seed = j.value("seed", cfg.seed);
  cfg.route = j.value("route", cfg.route);
  if (j.contains("protocol")) {
    const json& p = j["protocol"];
    cfg.protocol.g = p.value("g", cfg.protocol.g);
    cfg.protocol.tau = p.value("tau", cfg.protocol.tau);
    cfg.protocol.delta1 = p.value("delta1", cfg.protocol.delta1);
    cfg.protocol.delta2 = p.value("delta2", cfg.protocol.delta2);
    cfg.protocol.phi_m = p.value("phi_m", cfg.protocol.phi_m);
    cfg.protocol.alpha = p.value("alpha", cfg.protocol.alpha);
    cfg.protocol.n_shots = p.value("n_shots", static_cast<std::int64_t>(cfg.protocol.n_shots));
  }
  if (j.contains("micro")) {
    cfg.micro.delta_width = j["micro"].value("delta_width", cfg.micro.delta_width);
    cfg.micro.epsilon0 = j["micro"].value("epsilon0", cfg.micro.epsilon0);
  }
  if (j.contains("noise") && !j["noise"].is_null()) cfg.noise = noise_from_json(j["noise"]);
  if (j.contains("ensemble") && !j["ensemble"].is_null())
    cfg.ensemble = ensemble_from_json(j["ensemble"]);
  if (j.contains("analysis")) {
    const json& a = j["analysis"];
    cfg.analysis.window = a.value("window", cfg.analysis.window);
    cfg.analysis.detrend = a.value("detrend", cfg.analysis.detrend);
    cfg.analysis.max_harmonic = a.value("max_harmonic", cfg.analysis.max_harmonic);
  }
  if (j.contains("sweep") && !j["sweep"].is_null()) {
    SweepConfig sweep;
    sweep.parameter = j["sweep"].value("parameter", "");
    sweep.values = j["sweep"].value("values", std::vector<double>{});
    cfg.sweep = sweep;
  }
  if (j.contains("ou")) {
    cfg.ou.n_paths = j["ou"].value("n_paths", cfg.ou.n_paths);
    cfg.ou.substeps = j["ou"].value("substeps", cfg.ou.substeps);
    cfg.ou.n_static_samples = j["ou"].value("n_static_samples", cfg.ou.n_static_samples);
  }
  if (j.contains("fisher")) {
    const json& f = j["fisher"];
    cfg.fisher.scenario = f.value("scenario", cfg.fisher.scenario);
    cfg.fisher.noisy_omega_s = f.value("noisy_omega_s", cfg.fisher.noisy_omega_s);
    cfg.fisher.g1 = f.value("g1", cfg.fisher.g1);
    cfg.fisher.g2 = f.value("g2", cfg.fisher.g2);
    cfg.fisher.n_sweep = f.value("n_sweep", cfg.fisher.n_sweep);
    cfg.fisher.tau_sweep = f.value("tau_sweep", cfg.fisher.tau_sweep);
  }
  if (j.contains("quantum")) {
    const json& q = j["quantum"];
    cfg.quantum.mode = q.value("mode", cfg.quantum.mode);
    cfg.quantum.couplings = q.value("couplings", cfg.quantum.couplings);
    cfg.quantum.larmor = q.value("larmor", cfg.quantum.larmor);
    cfg.quantum.g_global = q.value("g_global", cfg.quantum.g_global);
    cfg.quantum.steps = q.value("steps", static_cast<std::int64_t>(cfg.quantum.steps));
    cfg.quantum.interaction = q.value("interaction", cfg.quantum.interaction);
  }
  cfg.input_trace = j.value("input_trace", cfg.input_trace);
  return cfg;
}

ExperimentConfig load_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config parse error in " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

std::vector<std::string> preset_names() {
  return {"fig3_weak",   "fig3_strong",   "fig4_amplification",
          "si_ou_decay", "si_xy_readout", "fisher_scaling"};
}

void apply_preset(ExperimentConfig& cfg, const std::string& name) {
  cfg.preset = name;
  if (name == "fig3_weak" || name == "fig3_strong") {
    cfg.route = "closed_form";
    cfg.protocol = ProtocolParams{};
    cfg.protocol.g = name == "fig3_weak" ? 1.0 : 1.0e3;
    cfg.protocol.tau = 5e-3;
    cfg.protocol.delta1 = 1e2;
    cfg.protocol.delta2 = 1e2 + 1e-2;
    cfg.protocol.phi_m = 0.0;
    cfg.protocol.n_shots = 1000000;
    cfg.micro = MicroNoise{1e-6, 0.0};
    cfg.noise = GaussianMacroscopicNoise{1.0};
    cfg.ensemble = QuadratureSpec{64};
    cfg.analysis = AnalysisConfig{};
    cfg.sweep.reset();
    return;
  }
  if (name == "fig4_amplification") {
    cfg.route = "ensemble_static";
    cfg.protocol = ProtocolParams{};
    cfg.protocol.g = 1.0;
    cfg.protocol.tau = 5e-3;
    cfg.protocol.delta1 = 1e2;
    cfg.protocol.delta2 = 99.0;  // beat note at 1, amplified peak at 0.5
    cfg.protocol.n_shots = 10000;
    cfg.micro = MicroNoise{0.0, 0.0};
    cfg.noise = GaussianMacroscopicNoise{0.1};
    cfg.ensemble = MonteCarloSpec{4096, 0};
    cfg.analysis = AnalysisConfig{};
    cfg.sweep = SweepConfig{"alpha", {0.0, 1.0, 2.0, 4.0, 8.0}};
    return;
  }
  if (name == "si_ou_decay") {
    cfg.route = "ou_paths";
    cfg.protocol = ProtocolParams{};
    cfg.protocol.g = 1e-2;
    cfg.protocol.tau = 5e-3;
    cfg.protocol.delta1 = 1e2;
    cfg.protocol.delta2 = 99.0;
    cfg.protocol.n_shots = 10000;
    cfg.micro = MicroNoise{0.0, 0.0};
    cfg.noise = OrnsteinUhlenbeckNoise{5e-3, 1e5, 0};
    cfg.ou = OuConfig{};
    cfg.analysis = AnalysisConfig{};
    SweepConfig sweep;
    sweep.parameter = "tau_t";
    for (const double ratio : {0.1, 0.31622776601683794, 1.0, 3.1622776601683795, 10.0,
                               31.622776601683793, 100.0})
      sweep.values.push_back(ratio * cfg.protocol.tau);
    cfg.sweep = sweep;
    return;
  }
  if (name == "si_xy_readout") {
    cfg.route = "ensemble_static";
    cfg.protocol = ProtocolParams{};
    cfg.protocol.tau = 0.5;
    cfg.protocol.n_shots = 20000;
    cfg.quantum = QuantumConfig{};
    cfg.quantum.mode = "xy_readout";
    cfg.quantum.couplings = {2.0 * M_PI * 1e-3, 2.0 * M_PI * 1e-3};
    cfg.quantum.larmor = {2.0 * M_PI * 0.71, 2.0 * M_PI * 0.71126};
    cfg.analysis = AnalysisConfig{};
    cfg.sweep.reset();
    return;
  }
  if (name == "fisher_scaling") {
    cfg.protocol = ProtocolParams{};
    cfg.protocol.g = 0.2;
    cfg.protocol.tau = 5e-3;
    cfg.fisher = FisherConfig{};
    cfg.fisher.scenario = "scaling_suite";
    cfg.fisher.n_sweep = {100, 178, 316, 562, 1000};
    cfg.fisher.tau_sweep = {5e-4, 1.06e-3, 2.24e-3, 4.73e-3, 1e-2};
    return;
  }
  std::string known;
  for (const std::string& p : preset_names()) known += " " + p;
  throw ConfigError("unknown preset '" + name + "'; available:" + known);
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

json ValidationReport::to_json() const {
  return json{{"ok", ok()}, {"errors", errors}, {"warnings", warnings}};
}

ValidationReport validate_config(const ExperimentConfig& cfg) {
  ValidationReport report;
  auto error = [&](const std::string& msg) { report.errors.push_back(msg); };
  auto warn = [&](const std::string& msg) { report.warnings.push_back(msg); };

  if (!cfg.preset.empty()) {
    const auto names = preset_names();
    if (std::find(names.begin(), names.end(), cfg.preset) == names.end()) {
      std::string known;
      for (const std::string& p : names) known += " " + p;
      error("unknown preset '" + cfg.preset + "'; available:" + known);
    }
  }
  if (!(cfg.protocol.tau > 0.0)) error("tau must be positive");
  if (cfg.protocol.n_shots < 1) error("n_shots must be >= 1");
  if (cfg.micro.delta_width < 0.0) error("micro.delta_width must be >= 0");
  try {
    validate(cfg.noise);
  } catch (const std::exception& e) {
    error(e.what());
  }
  try {
    validate(cfg.ensemble);
  } catch (const std::exception& e) {
    error(e.what());
  }
  if (cfg.route != "closed_form" && cfg.route != "ensemble_static" &&
      cfg.route != "ou_paths")
    error("unknown route '" + cfg.route + "'");
  if (cfg.route == "ou_paths" && !std::holds_alternative<OrnsteinUhlenbeckNoise>(cfg.noise))
    error("route ou_paths requires ornstein_uhlenbeck noise");
  if (cfg.analysis.window != "rectangular" && cfg.analysis.window != "hann")
    error("unknown window '" + cfg.analysis.window + "'");
  if (cfg.analysis.max_harmonic < 1) error("analysis.max_harmonic must be >= 1");
  if (cfg.sweep && cfg.sweep->parameter != "alpha" && cfg.sweep->parameter != "tau_t")
    error("unknown sweep parameter '" + cfg.sweep->parameter + "'");
  if (cfg.sweep && cfg.sweep->values.empty()) error("sweep.values must not be empty");
  if (cfg.quantum.couplings.size() != cfg.quantum.larmor.size())
    error("quantum.couplings and quantum.larmor must have equal length");
  if (cfg.quantum.couplings.size() > static_cast<std::size_t>(kMaxNuclei))
    error("quantum supports at most 12 nuclei");

  if (cfg.protocol.tau > 0.0) {
    const RegimeFlags flags = regime_flags(cfg.protocol, cfg.micro);
    for (const std::string& w : flags.warnings()) warn(w);
    if (const auto* g = std::get_if<GaussianMacroscopicNoise>(&cfg.noise)) {
      const double sigma_t_total =
          g->sigma * cfg.protocol.tau * static_cast<double>(cfg.protocol.n_shots);
      if (cfg.route == "closed_form" && sigma_t_total < 50.0)
        warn("sigma*t_total < 50: closed-form averaging assumes sigma*t >> 1");
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// CSV and artifact writers
// ---------------------------------------------------------------------------

void write_trace_csv(const fs::path& path, const ProbabilityTrace& trace) {
  std::ofstream out = open_output(path);
  out << "t [time],P [prob]\n";
  const ArrayXd times = trace.times();
  for (Index i = 0; i < trace.size(); ++i) {
    ensure_finite(trace.values[i], "trace CSV");
    out << fmt(times[i]) << ',' << fmt(trace.values[i]) << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

ProbabilityTrace read_trace_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read trace file: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty trace file: " + path.string());
  std::vector<double> times, values;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::size_t comma = line.find(',');
    if (comma == std::string::npos)
      throw IoError("malformed trace row in " + path.string());
    times.push_back(std::stod(line.substr(0, comma)));
    values.push_back(std::stod(line.substr(comma + 1)));
  }
  if (times.size() < 2) throw IoError("trace too short: " + path.string());
  ProbabilityTrace trace;
  trace.tau = times[1] - times[0];
  trace.values = Eigen::Map<const ArrayXd>(values.data(), static_cast<Index>(values.size()));
  const double t0 = times[0];
  if (std::abs(t0 - trace.tau) > 1e-9 * std::max(1.0, std::abs(t0)))
    throw IoError("trace grid must start at t = tau: " + path.string());
  return trace;
}

void write_spectrum_csv(const fs::path& path, const Spectrum& spec) {
  std::ofstream out = open_output(path);
  out << "omega [rad/time],magnitude [prob]\n";
  for (Index k = 0; k < spec.mags.size(); ++k) {
    ensure_finite(spec.mags[k], "spectrum CSV");
    out << fmt(spec.freqs[k]) << ',' << fmt(spec.mags[k]) << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

json peak_report_to_json(const PeakReport& report) {
  json peaks = json::array();
  for (const Peak& p : report.peaks) {
    peaks.push_back({{"frequency", p.frequency},
                     {"interpolated_frequency", p.interpolated_frequency},
                     {"magnitude", p.magnitude},
                     {"quality", std::isfinite(p.quality) ? p.quality : -1.0},
                     {"harmonic", p.harmonic},
                     {"is_local_max", p.is_local_max},
                     {"present", p.present()}});
  }
  return json{{"expected_beat", report.expected_beat},
              {"background_median", report.background_median},
              {"peaks", peaks}};
}

namespace {

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out = open_output(path);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

json summary_envelope(const char* command, const ExperimentConfig& cfg) {
  json j;
  j["version"] = kVersion;
  j["command"] = command;
  j["config"] = config_to_json(cfg);
  j["warnings"] = validate_config(cfg).warnings;
  return j;
}

void require_valid(const ExperimentConfig& cfg) {
  const ValidationReport report = validate_config(cfg);
  if (!report.ok()) {
    std::string msg = "invalid config:";
    for (const std::string& e : report.errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
}

// Each preset belongs to one subcommand; running it elsewhere would quietly
// simulate defaults instead.
void require_preset_command(const ExperimentConfig& cfg, const char* command) {
  if (cfg.preset.empty()) return;
  std::string expected = "simulate";
  if (cfg.preset == "si_xy_readout") expected = "quantum";
  if (cfg.preset == "fisher_scaling") expected = "fisher";
  if (expected != command)
    throw ConfigError("preset '" + cfg.preset + "' belongs to the '" + expected +
                      "' command");
}

ProbabilityTrace make_static_trace(const ExperimentConfig& cfg) {
  const ProtocolParams& p = cfg.protocol;
  if (cfg.route == "closed_form") {
    ProbabilityTrace trace;
    trace.tau = p.tau;
    trace.values = strong_coupling_probability(trace_times(p.tau, p.n_shots), p, cfg.micro);
    trace.flags = regime_flags(p, cfg.micro);
    return trace;
  }
  EnsembleSpec spec = cfg.ensemble;
  if (auto* mc = std::get_if<MonteCarloSpec>(&spec); mc && mc->seed == 0)
    mc->seed = derive_seed(cfg.seed, "macro-ensemble", 0);
  return average_over_macroscopic(phase_readout_probability, cfg.noise, spec, p, cfg.micro);
}

ProbabilityTrace make_ou_trace(const ExperimentConfig& cfg, double tau_t,
                               std::string_view seed_tag, int n_paths) {
  const ProtocolParams& p = cfg.protocol;
  const auto& ou = std::get<OrnsteinUhlenbeckNoise>(cfg.noise);
  const std::uint64_t base =
      ou.seed != 0 ? ou.seed : derive_seed(cfg.seed, seed_tag, 0);
  const ArrayXd path_grid = ou_time_grid(p, cfg.ou.substeps);
  const ArrayXd t_grid = trace_times(p.tau, p.n_shots);

  ProbabilityTrace mean;
  mean.tau = p.tau;
  mean.values = ArrayXd::Zero(p.n_shots);
  for (int i = 0; i < n_paths; ++i) {
    const NoisePath path = sample_ou_path(
        tau_t, ou.diffusion, path_grid,
        derive_seed(base, "ou-path", static_cast<std::uint64_t>(i)));
    mean.values += evolve_time_dependent(path, p, t_grid, cfg.ou.substeps).values;
  }
  mean.values /= static_cast<double>(n_paths);
  mean.flags = regime_flags(p, cfg.micro);
  return mean;
}

// Static-offset ensemble of equal variance, averaged over the probability.
// At sigma*tau >> 1 almost no plain Gaussian draw lands inside the sinc
// window |eps| <~ 2 pi / tau that carries the beat signal, so the estimator
// draws from a half Gaussian / half uniform(-L, L) mixture and reweights;
// unbiased for any sigma.
ProbabilityTrace make_static_equivalent_trace(const ExperimentConfig& cfg, double sigma,
                                              std::string_view seed_tag) {
  const ProtocolParams& p = cfg.protocol;
  const ArrayXd t_grid = trace_times(p.tau, p.n_shots);
  const std::uint64_t base = derive_seed(cfg.seed, seed_tag, 1);
  const double window = 16.0 * M_PI / p.tau;
  const double gauss_norm = 1.0 / (sigma * std::sqrt(2.0 * M_PI));
  const auto density = [&](double eps) {
    return gauss_norm * std::exp(-0.5 * eps * eps / (sigma * sigma));
  };
  ProbabilityTrace mean;
  mean.tau = p.tau;
  mean.values = ArrayXd::Zero(p.n_shots);
  for (int j = 0; j < cfg.ou.n_static_samples; ++j) {
    SplitMix64 rng(derive_seed(base, "static-eps", static_cast<std::uint64_t>(j)));
    double eps;
    if (j % 2 == 0) {
      GaussianStream stream(rng.next());
      eps = sigma * stream.next();
    } else {
      eps = window * (2.0 * rng.uniform01() - 1.0);
    }
    const double proposal = 0.5 * density(eps) + 0.25 / window;
    const double weight = density(eps) / proposal;
    for (Index i = 0; i < t_grid.size(); ++i)
      mean.values[i] += weight * static_offset_probability(t_grid[i], p, eps);
  }
  mean.values /= static_cast<double>(cfg.ou.n_static_samples);
  mean.flags = regime_flags(p, cfg.micro);
  return mean;
}

json analyze_trace(const ExperimentConfig& cfg, const ProbabilityTrace& trace,
                   const fs::path& out_dir, const std::string& tag,
                   std::vector<fs::path>& files) {
  const fs::path trace_path = out_dir / ("trace" + tag + ".csv");
  write_trace_csv(trace_path, trace);
  files.push_back(trace_path);

  const Spectrum spec = compute_spectrum(trace, cfg.analysis.window, cfg.analysis.detrend);
  const fs::path spec_path = out_dir / ("spectrum" + tag + ".csv");
  write_spectrum_csv(spec_path, spec);
  files.push_back(spec_path);

  json result;
  const Peak top = dominant_peak(spec);
  result["dominant_peak"] = {{"frequency", top.frequency},
                             {"magnitude", top.magnitude},
                             {"quality", std::isfinite(top.quality) ? top.quality : -1.0}};
  const double beat = std::abs(cfg.protocol.beat());
  if (beat >= 4.0 * spec.bin_width()) {
    result["harmonics"] =
        peak_report_to_json(detect_harmonics(spec, beat, cfg.analysis.max_harmonic));
  } else {
    result["harmonics"] = nullptr;
  }
  return result;
}

}  // namespace

// ---------------------------------------------------------------------------
// Runners
// ---------------------------------------------------------------------------

RunArtifacts run_simulate(const ExperimentConfig& cfg, const fs::path& out_dir) {
  require_valid(cfg);
  require_preset_command(cfg, "simulate");
  fs::create_directories(out_dir);
  RunArtifacts artifacts;
  json summary = summary_envelope("simulate", cfg);
  json results;

  if (cfg.sweep && cfg.sweep->parameter == "alpha") {
    json table = json::array();
    std::vector<double> alphas, half_peaks;
    int idx = 0;
    for (const double alpha : cfg.sweep->values) {
      ExperimentConfig point = cfg;
      point.protocol.alpha = alpha;
      const ProbabilityTrace trace = make_static_trace(point);
      char tag[32];
      std::snprintf(tag, sizeof(tag), "_%03d", idx++);
      json entry = analyze_trace(point, trace, out_dir, tag, artifacts.files);
      entry["alpha"] = alpha;
      table.push_back(entry);
      if (alpha > 0.0 && !entry["harmonics"].is_null()) {
        for (const json& peak : entry["harmonics"]["peaks"]) {
          if (peak["harmonic"] == 0.5) {
            alphas.push_back(alpha);
            half_peaks.push_back(peak["magnitude"]);
          }
        }
      }
    }
    results["sweep"] = {{"parameter", "alpha"}, {"table", table}};
    if (alphas.size() >= 2) {
      const OriginFit fit = fit_through_origin(alphas, half_peaks);
      results["half_beat_linear_fit"] = {{"slope", fit.slope},
                                         {"r_squared", fit.r_squared}};
    }
  } else if (cfg.sweep && cfg.sweep->parameter == "tau_t") {
    json table = json::array();
    std::vector<double> tau_ts, amplitudes;
    const double beat = std::abs(cfg.protocol.beat());
    int idx = 0;
    for (const double tau_t : cfg.sweep->values) {
      const std::string seed_tag = "ou-point-" + std::to_string(idx);
      // The beat amplitude shrinks as tau_t^(-1/2); spend more paths where
      // the signal sits closer to the ensemble noise floor.
      const double ratio = tau_t / cfg.protocol.tau;
      const int n_paths = cfg.ou.n_paths * (ratio >= 80.0 ? 4 : (ratio >= 20.0 ? 2 : 1));
      const ProbabilityTrace ou_trace = make_ou_trace(cfg, tau_t, seed_tag, n_paths);
      char tag[32];
      std::snprintf(tag, sizeof(tag), "_%03d", idx++);
      const json analysis = analyze_trace(cfg, ou_trace, out_dir, tag, artifacts.files);

      const auto& ou = std::get<OrnsteinUhlenbeckNoise>(cfg.noise);
      const double sigma = ou_stationary_sigma(
          OrnsteinUhlenbeckNoise{tau_t, ou.diffusion, 0});
      const ProbabilityTrace static_trace =
          make_static_equivalent_trace(cfg, sigma, seed_tag);
      const double amp_ou = beat_amplitude({ou_trace}, beat);
      const double prediction =
          beat_amplitude_decay_prediction(cfg.protocol.g, cfg.protocol.tau, sigma);
      table.push_back(
          {{"tau_t", tau_t},
           {"sigma_equivalent", sigma},
           {"n_paths", n_paths},
           {"amplitude_ou", amp_ou},
           {"amplitude_ou_corrected", beat_amplitude_noise_corrected({ou_trace}, beat)},
           {"amplitude_static", beat_amplitude({static_trace}, beat)},
           {"amplitude_static_corrected",
            beat_amplitude_noise_corrected({static_trace}, beat)},
           {"prediction", prediction},
           {"analysis", analysis}});
      tau_ts.push_back(tau_t);
      amplitudes.push_back(amp_ou);
    }
    results["sweep"] = {{"parameter", "tau_t"}, {"table", table}};
    if (tau_ts.size() >= 2)
      results["amplitude_loglog_slope"] = loglog_slope(tau_ts, amplitudes);
  } else {
    const ProbabilityTrace trace = cfg.route == "ou_paths"
        ? make_ou_trace(cfg, std::get<OrnsteinUhlenbeckNoise>(cfg.noise).correlation_time,
                        "ou-point-0", cfg.ou.n_paths)
        : make_static_trace(cfg);
    results = analyze_trace(cfg, trace, out_dir, "", artifacts.files);
  }

  summary["results"] = results;
  json peaks = results.contains("harmonics") ? results["harmonics"] : results;
  const fs::path peaks_path = out_dir / "peaks.json";
  write_json_file(peaks_path, peaks);
  artifacts.files.push_back(peaks_path);

  for (const fs::path& f : artifacts.files) summary["outputs"].push_back(f.filename());
  const fs::path summary_path = out_dir / "summary.json";
  write_json_file(summary_path, summary);
  artifacts.files.push_back(summary_path);
  artifacts.summary = summary;
  return artifacts;
}

RunArtifacts run_fft(const ExperimentConfig& cfg, const fs::path& out_dir) {
  if (cfg.input_trace.empty())
    throw ConfigError("fft requires config field 'input_trace'");
  fs::create_directories(out_dir);
  RunArtifacts artifacts;
  json summary = summary_envelope("fft", cfg);

  const ProbabilityTrace trace = read_trace_csv(cfg.input_trace);
  const Spectrum spec = compute_spectrum(trace, cfg.analysis.window, cfg.analysis.detrend);
  const fs::path spec_path = out_dir / "spectrum.csv";
  write_spectrum_csv(spec_path, spec);
  artifacts.files.push_back(spec_path);

  json results;
  const Peak top = dominant_peak(spec);
  results["dominant_peak"] = {{"frequency", top.frequency},
                              {"magnitude", top.magnitude},
                              {"quality", std::isfinite(top.quality) ? top.quality : -1.0}};
  const double beat = std::abs(cfg.protocol.beat());
  json peaks;
  if (beat >= 4.0 * spec.bin_width()) {
    peaks = peak_report_to_json(detect_harmonics(spec, beat, cfg.analysis.max_harmonic));
  } else {
    peaks = nullptr;
    summary["warnings"].push_back("expected beat unresolvable on this grid; no harmonic report");
  }
  results["harmonics"] = peaks;
  const fs::path peaks_path = out_dir / "peaks.json";
  write_json_file(peaks_path, peaks.is_null() ? json::object() : peaks);
  artifacts.files.push_back(peaks_path);

  summary["results"] = results;
  for (const fs::path& f : artifacts.files) summary["outputs"].push_back(f.filename());
  const fs::path summary_path = out_dir / "summary.json";
  write_json_file(summary_path, summary);
  artifacts.files.push_back(summary_path);
  artifacts.summary = summary;
  return artifacts;
}

namespace {

Readout readout_from_name(const std::string& name) {
  if (name == "sensing_x") return Readout::SensingX;
  if (name == "sensing_y") return Readout::SensingY;
  if (name == "hartmann_hahn_z") return Readout::HartmannHahnZ;
  if (name == "multinucleus_x") return Readout::MultiNucleusX;
  if (name == "multinucleus_y") return Readout::MultiNucleusY;
  throw ConfigError("unknown fisher scenario '" + name + "'");
}

json scaling_fit_to_json(const ScalingFit& fit) {
  return json{{"n_exponent", fit.n_exponent},
              {"tau_exponent", fit.tau_exponent},
              {"prefactor", fit.prefactor}};
}

std::vector<Index> to_index_vector(const std::vector<double>& values) {
  std::vector<Index> out;
  for (const double v : values) out.push_back(static_cast<Index>(std::llround(v)));
  return out;
}

}  // namespace

RunArtifacts run_fisher(const ExperimentConfig& cfg, const fs::path& out_dir) {
  require_preset_command(cfg, "fisher");
  fs::create_directories(out_dir);
  RunArtifacts artifacts;
  json summary = summary_envelope("fisher", cfg);
  json results;

  if (cfg.fisher.scenario == "scaling_suite") {
    const std::vector<Index> n_sweep = to_index_vector(cfg.fisher.n_sweep);
    // Weak sensing: g*tau = 1e-3 at the base tau; strong sensing: g*tau = 10.
    ProtocolParams weak = cfg.protocol;
    FisherScenario sensing_weak = make_scenario(Readout::SensingX, weak, true);
    sensing_weak.omega_s = 1100.0;
    sensing_weak.omega_r = 2000.0;
    results["sensing_weak"] =
        scaling_fit_to_json(fit_scaling(sensing_weak, n_sweep, cfg.fisher.tau_sweep));

    ProtocolParams strong = cfg.protocol;
    strong.g = 10.0 / strong.tau;
    FisherScenario sensing_strong = make_scenario(Readout::SensingX, strong, true);
    sensing_strong.omega_s = 1100.0;
    sensing_strong.omega_r = 400.0;
    std::vector<double> tau_strong;
    for (const double t : cfg.fisher.tau_sweep) tau_strong.push_back(10.0 * t);
    results["sensing_strong"] =
        scaling_fit_to_json(fit_scaling(sensing_strong, n_sweep, tau_strong));

    FisherScenario hh = make_scenario(Readout::HartmannHahnZ, weak, true);
    hh.omega_s = 1100.0;
    hh.omega_r = 2000.0;
    results["hartmann_hahn"] =
        scaling_fit_to_json(fit_scaling(hh, n_sweep, cfg.fisher.tau_sweep));
  } else {
    FisherScenario sc =
        make_scenario(readout_from_name(cfg.fisher.scenario), cfg.protocol,
                      cfg.fisher.noisy_omega_s);
    if (cfg.fisher.g1 > 0.0) sc.g1 = cfg.fisher.g1;
    if (cfg.fisher.g2 > 0.0) sc.g2 = cfg.fisher.g2;
    const FisherResult result = fisher_information_sum(sc, cfg.protocol.n_shots);
    ensure_finite(result.total, "fisher total");
    results["total"] = result.total;
    results["n_shots"] = static_cast<std::int64_t>(cfg.protocol.n_shots);
    if (cfg.fisher.n_sweep.size() >= 2 && cfg.fisher.tau_sweep.size() >= 2) {
      results["scaling_fit"] = scaling_fit_to_json(
          fit_scaling(sc, to_index_vector(cfg.fisher.n_sweep), cfg.fisher.tau_sweep));
    }
  }

  summary["results"] = results;
  const fs::path fisher_path = out_dir / "fisher.json";
  write_json_file(fisher_path, results);
  artifacts.files.push_back(fisher_path);
  for (const fs::path& f : artifacts.files) summary["outputs"].push_back(f.filename());
  const fs::path summary_path = out_dir / "summary.json";
  write_json_file(summary_path, summary);
  artifacts.files.push_back(summary_path);
  artifacts.summary = summary;
  return artifacts;
}

RunArtifacts run_quantum(const ExperimentConfig& cfg, const fs::path& out_dir) {
  require_valid(cfg);
  require_preset_command(cfg, "quantum");
  fs::create_directories(out_dir);
  RunArtifacts artifacts;
  json summary = summary_envelope("quantum", cfg);
  json results;

  NucleusSpec spec;
  spec.couplings = Eigen::Map<const ArrayXd>(cfg.quantum.couplings.data(),
                                             static_cast<Index>(cfg.quantum.couplings.size()));
  spec.larmor = Eigen::Map<const ArrayXd>(cfg.quantum.larmor.data(),
                                          static_cast<Index>(cfg.quantum.larmor.size()));

  if (cfg.quantum.mode == "xy_readout") {
    const ArrayXd times = trace_times(cfg.protocol.tau, cfg.protocol.n_shots);
    ProbabilityTrace trace_x, trace_y;
    trace_x.tau = trace_y.tau = cfg.protocol.tau;
    trace_x.values.resize(times.size());
    trace_y.values.resize(times.size());
    for (Index i = 0; i < times.size(); ++i) {
      trace_x.values[i] =
          multinucleus_readout(spec, cfg.protocol.tau, times[i], ReadoutBasis::X);
      trace_y.values[i] =
          multinucleus_readout(spec, cfg.protocol.tau, times[i], ReadoutBasis::Y);
    }
    const fs::path x_path = out_dir / "trace_x.csv";
    const fs::path y_path = out_dir / "trace_y.csv";
    write_trace_csv(x_path, trace_x);
    write_trace_csv(y_path, trace_y);
    artifacts.files.push_back(x_path);
    artifacts.files.push_back(y_path);

    const Spectrum spec_x = compute_spectrum(trace_x, cfg.analysis.window, true);
    const Spectrum spec_y = compute_spectrum(trace_y, cfg.analysis.window, true);
    write_spectrum_csv(out_dir / "spectrum_x.csv", spec_x);
    write_spectrum_csv(out_dir / "spectrum_y.csv", spec_y);
    artifacts.files.push_back(out_dir / "spectrum_x.csv");
    artifacts.files.push_back(out_dir / "spectrum_y.csv");

    const double diff = std::abs(spec.larmor[1] - spec.larmor[0]);
    const Index diff_bin = static_cast<Index>(std::llround(diff / spec_x.bin_width()));
    results["difference_frequency"] = diff;
    results["x_difference_magnitude"] = spec_x.mags[diff_bin];
    results["y_difference_magnitude"] = spec_y.mags[diff_bin];
    const Peak y_top = dominant_peak(spec_y);
    results["y_dominant_frequency"] = y_top.frequency;
  } else if (cfg.quantum.mode == "backaction") {
    const Interaction interaction = cfg.quantum.interaction == "sensing"
                                        ? Interaction::Sensing
                                        : Interaction::FlipFlop;
    const SpinEnsembleState initial =
        make_initial_state(static_cast<int>(spec.size()));
    ExactRunOptions opts;
    opts.reset = ResetMode::Deterministic;
    opts.seed = cfg.seed;
    const ExactRunResult run = evolve_exact(initial, spec, interaction,
                                            cfg.quantum.g_global, cfg.protocol.tau,
                                            cfg.quantum.steps, opts);
    const fs::path back_path = out_dir / "backaction.csv";
    std::ofstream out = open_output(back_path);
    out << "t [time],P_z [prob],P_x [prob],purity [1],polarization [1]\n";
    for (Index n = 0; n < cfg.quantum.steps; ++n) {
      const double t = cfg.protocol.tau * static_cast<double>(n + 1);
      for (const double v : {run.prob_z[n], run.prob_x[n], run.purity[n], run.polarization[n]})
        ensure_finite(v, "backaction CSV");
      out << fmt(t) << ',' << fmt(run.prob_z[n]) << ',' << fmt(run.prob_x[n]) << ','
          << fmt(run.purity[n]) << ',' << fmt(run.polarization[n]) << '\n';
    }
    if (!out) throw IoError("write failed: " + back_path.string());
    artifacts.files.push_back(back_path);
    results["final_purity"] = run.purity[cfg.quantum.steps - 1];
    results["final_polarization"] = run.polarization[cfg.quantum.steps - 1];
  } else {
    throw ConfigError("unknown quantum mode '" + cfg.quantum.mode + "'");
  }

  summary["results"] = results;
  for (const fs::path& f : artifacts.files) summary["outputs"].push_back(f.filename());
  const fs::path summary_path = out_dir / "summary.json";
  write_json_file(summary_path, summary);
  artifacts.files.push_back(summary_path);
  artifacts.summary = summary;
  return artifacts;
}

}  // namespace nvnmr
