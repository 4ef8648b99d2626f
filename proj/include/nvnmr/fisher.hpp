#pragma once

// Fisher information about the frequency difference omega_r for the
// Bernoulli measurement record, I = sum_n (dP/d omega_r)^2 / (P (1-P)) with
// t_n = n*tau. Per-shot contributions are evaluated from analytic
// derivatives; points where P(1-P) -> 0 enter through the analytic limit of
// the quotient (the models' derivatives vanish at the same points), never a
// numerical epsilon.

#include <vector>

#include "nvnmr/types.hpp"

namespace nvnmr {

enum class Readout {
  SensingX,        // x-basis sensing; Bessel-averaged form when omega_s is noisy
  SensingY,        // y basis; carries no information once averaged
  HartmannHahnZ,   // spin-locked z readout (SI normalization, g/sqrt(2) drive)
  MultiNucleusX,   // two-frequency nuclear ensemble, x readout
  MultiNucleusY,   // same, y readout
};

struct FisherScenario {
  Readout readout = Readout::SensingX;
  ProtocolParams params;         // tau and the shot count live here
  double g1 = 1.0;               // coupling amplitudes (may be unequal)
  double g2 = 1.0;
  double omega_s = 0.0;          // average frequency (delta1+delta2)/2
  double omega_r = 0.0;          // difference delta1-delta2, >= 0
  bool noisy_omega_s = true;     // macroscopic averaging of the carrier
  MicroNoise micro;              // sinc(Delta*t) envelope on all amplitudes
};

// Scenario with equal amplitudes taken from the protocol parameters.
FisherScenario make_scenario(Readout readout, const ProtocolParams& p,
                             bool noisy_omega_s = true);

struct FisherResult {
  double total = 0.0;
  ArrayXd per_shot;
};

struct ScalingFit {
  double n_exponent = 0.0;
  double tau_exponent = 0.0;
  double prefactor = 0.0;  // total / (tau^4 N^3) at the largest sweep point
};

struct FisherMatrixResult {
  Eigen::Matrix2d matrix;  // ordered (omega_r, omega_s)
  double i_r = 0.0;        // 1 / (matrix^-1)_{rr}
};

// Single-shot probability of the scenario's measurement at time t.
double shot_probability(const FisherScenario& sc, double t);

// Analytic d P / d omega_r at time t.
double shot_probability_derivative(const FisherScenario& sc, double t);

// Per-shot Fisher information contribution, degeneracy-safe.
double shot_information(const FisherScenario& sc, double t);

// Exact sum over shots t_n = n*tau, n = 1..N.
FisherResult fisher_information_sum(const FisherScenario& sc, Index n_shots);

// Log-log scaling fit of the total information versus N and versus tau.
// The oscillatory sin^2/cos^2 factors are averaged by evaluating the sum
// over a band of omega_r values in [omega_r, 2*omega_r]; both sweeps must
// span at least a decade.
ScalingFit fit_scaling(const FisherScenario& sc, const std::vector<Index>& n_values,
                       const std::vector<double>& tau_values);

// Closed-form two-parameter (omega_r, omega_s) information matrix for
// unequal amplitudes, (tau^4 N^3 / 6) [[g1^2+g2^2, 2(g1^2-g2^2)],
// [2(g1^2-g2^2), 4(g1^2+g2^2)]], and the marginal information about
// omega_r from its inverse.
FisherMatrixResult fisher_matrix_two_params(double g1, double g2, double tau, Index n_shots);

// f(c) = (1/2pi) Int_0^{2pi} sin^2 x / (1 + c^2 + 2 c cos x)^{3/2} dx for
// 0 < c < 1, by adaptive quadrature to 1e-8 absolute.
double f_c_integral(double c);

// J1(u)^2 / (1 - J0(u)^2); series-protected near u = 0 where it tends to 1/2.
double j1sq_over_one_minus_j0sq(double u);

}  // namespace nvnmr
