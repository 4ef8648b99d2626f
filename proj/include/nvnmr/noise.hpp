#pragma once

// Noise distributions and the ensemble-averaging engine: static offset
// averaging (quadrature or Monte Carlo), Ornstein-Uhlenbeck time-dependent
// noise with its Brownian accumulated phase, and the single-path
// time-dependent probability evolution.

#include <cstdint>
#include <functional>
#include <utility>
#include <variant>

#include "nvnmr/types.hpp"

namespace nvnmr {

struct NoNoise {};

// Offset uniform in [center - half_width, center + half_width].
struct UniformOffsetNoise {
  double half_width = 0.0;
  double center = 0.0;
};

// Offset drawn from N(0, sigma) across the sample.
struct GaussianMacroscopicNoise {
  double sigma = 0.0;
};

// Offset uniform in +-half_width across the sample.
struct UniformMacroscopicNoise {
  double half_width = 0.0;
};

// d eps = -eps/tau_t dt + sigma_t dW. Stationary variance sigma_t^2*tau_t/2.
struct OrnsteinUhlenbeckNoise {
  double correlation_time = 0.0;
  double diffusion = 0.0;
  std::uint64_t seed = 0;
};

using NoiseModel = std::variant<NoNoise, UniformOffsetNoise, GaussianMacroscopicNoise,
                                UniformMacroscopicNoise, OrnsteinUhlenbeckNoise>;

// Throws std::invalid_argument on negative widths or OU tau_t <= 0.
void validate(const NoiseModel& noise);

double ou_stationary_sigma(const OrnsteinUhlenbeckNoise& ou);

// How a static-offset ensemble is averaged. Quadrature uses Gauss-Hermite
// nodes for Gaussian noise and Gauss-Legendre nodes for uniform noise.
struct QuadratureSpec {
  int order = 64;  // >= 8
};

struct MonteCarloSpec {
  Index n_samples = 100000;  // >= 1000
  std::uint64_t seed = 0;
};

using EnsembleSpec = std::variant<QuadratureSpec, MonteCarloSpec>;

void validate(const EnsembleSpec& spec);

// Single-shot probability model to be averaged; the engine shifts
// MicroNoise::epsilon0 by the sampled offset.
using ShotProbabilityFn =
    std::function<double(double t, const ProtocolParams&, const MicroNoise&)>;

// sin^2(phi + phi_m/2) with phi from accumulated_phase: the default
// measurement kernel for static-offset ensembles.
double phase_readout_probability(double t, const ProtocolParams& p, const MicroNoise& m);

// E_eps[ fn(t; epsilon0 -> epsilon0 + eps) ] at a single time.
double ensemble_average_at(const ShotProbabilityFn& fn, const NoiseModel& noise,
                           const EnsembleSpec& spec, double t, const ProtocolParams& p,
                           const MicroNoise& m);

// Monte Carlo mean and standard error of the mean at a single time.
std::pair<double, double> monte_carlo_average_at(const ShotProbabilityFn& fn,
                                                 const NoiseModel& noise,
                                                 const MonteCarloSpec& spec, double t,
                                                 const ProtocolParams& p,
                                                 const MicroNoise& m);

// Averaged trace over the grid t_n = n*tau. Rejects the OU variant (use
// evolve_time_dependent) and empty grids. Deterministic given the spec seed.
ProbabilityTrace average_over_macroscopic(const ShotProbabilityFn& fn,
                                          const NoiseModel& noise, const EnsembleSpec& spec,
                                          const Eigen::Ref<const ArrayXd>& t_grid,
                                          const ProtocolParams& p, const MicroNoise& m);

ProbabilityTrace average_over_macroscopic(const ShotProbabilityFn& fn,
                                          const NoiseModel& noise, const EnsembleSpec& spec,
                                          const ProtocolParams& p, const MicroNoise& m);

// One realization of the noise offset and its accumulated phase
// theta(t) = integral of eps dt' (trapezoidal, theta[0] = 0).
struct NoisePath {
  ArrayXd times;
  ArrayXd epsilon;
  ArrayXd theta;
};

// Exact OU update on an arbitrary strictly increasing grid,
// eps(t+dt) = eps(t) e^{-dt/tau_t} + eta sqrt(Var_stat (1 - e^{-2dt/tau_t})),
// initialized from the stationary distribution.
NoisePath sample_ou_path(double tau_t, double sigma_t,
                         const Eigen::Ref<const ArrayXd>& times, std::uint64_t seed);

// theta(t) = eps*t: a constant offset in path form.
NoisePath constant_offset_path(double eps, const Eigen::Ref<const ArrayXd>& times);

// Uniform path grid with spacing <= tau/substeps covering every shot window
// of the protocol grid, [tau/2, n_shots*tau + tau/2].
ArrayXd ou_time_grid(const ProtocolParams& p, int substeps_per_window = 64);

// Single-path x-basis probability trace: at each grid time the shot integral
// of sin(delta_i t' + theta(t')) over [t - tau/2, t + tau/2] is evaluated by
// trapezoidal quadrature with linear interpolation of theta.
ProbabilityTrace evolve_time_dependent(const NoisePath& path, const ProtocolParams& p,
                                       const Eigen::Ref<const ArrayXd>& t_grid,
                                       int substeps_per_window = 64);

// Predicted beat-note FFT amplitude (2/N one-sided convention) in the
// strong-noise regime, proportional to 4 g^2 tau / (sqrt(2 pi) sigma). The
// proportionality constant is a frozen regression baseline fitted once
// against simulated ensembles.
double beat_amplitude_decay_prediction(double g, double tau, double sigma);

// Exact x-basis shot probability for a constant frequency offset eps:
// sin^2(g sum_i (2/w_i) sin(w_i tau/2) sin(w_i t)) with w_i = delta_i + eps.
// Equivalent to a theta(t) = eps*t path evaluated without quadrature error.
double static_offset_probability(double t, const ProtocolParams& p, double eps);

}  // namespace nvnmr
