#pragma once

// Exact quantum validation layer: sensor-coherence closed form for N
// identically coupled nuclei, two-spin sensing vs flip-flop closed forms,
// multi-nucleus X/Y readout signals, and exact few-spin evolution with
// measurement back-action.
//
// Convention: sensor and nuclear spin operators are Pauli matrices (not
// spin-1/2 halves); this is the normalization under which the closed forms
// below reproduce the exact unitary evolution. Nuclei start polarized along
// +x and precess about z so that |psi_m(t)> = cos(d_m t/2)|+x> +
// i sin(d_m t/2)|-x>; the sensor is prepared in |up_z>.

#include <complex>
#include <cstdint>

#include "nvnmr/types.hpp"

namespace nvnmr {

inline constexpr int kMaxNuclei = 12;

struct NucleusSpec {
  ArrayXd couplings;  // g_m
  ArrayXd larmor;     // delta_m

  Index size() const { return couplings.size(); }
};

// Pure state of sensor ⊗ nuclei; sensor is the most significant qubit.
struct SpinEnsembleState {
  int n_nuclei = 0;
  VectorXcd amplitudes;
  double time = 0.0;

  Index dim() const { return amplitudes.size(); }
};

// |up_z> ⊗ |+x>^M
SpinEnsembleState make_initial_state(int n_nuclei);

// Off-diagonal sensor density-matrix element for N identical nuclei:
// <up|rho|down> = (cos(2 g tau) - i sin(2 g tau) cos(delta t))^N / 2.
// For N*g*tau fixed and N large this tends to exp(-2 i N g tau cos(delta t))/2.
std::complex<double> coherence_closed_form(Index n_atoms, double g, double tau,
                                           double delta, double t);

enum class Interaction { Sensing, FlipFlop };
enum class TwoSpinBasis { X, Z };

// Closed-form sensor probabilities for two nuclei precessing in the x-y
// plane, interaction applied for tau at time t (SI normalization: the
// flip-flop drive carries g/sqrt(2)). FlipFlop-Z depends on the frequencies
// only through delta1 - delta2.
double twospin_probability(double g, double tau, double delta1, double delta2, double t,
                           Interaction interaction, TwoSpinBasis basis);

enum class ReadoutBasis { X, Y };

// Back-action-free M-nucleus readout signal:
//   Y: 1/2 + 1/2 sin(2 sum_m g_m tau cos(delta_m t))
//   X: 1/2 + 1/2 cos(2 sum_m g_m tau cos(delta_m t))
double multinucleus_readout(const NucleusSpec& spec, double tau, double t,
                            ReadoutBasis basis);

// Collective phase sum_m g_m tau cos(delta_m t); X readout is even in it,
// Y readout odd.
double collective_phase(const NucleusSpec& spec, double tau, double t);

enum class ResetMode {
  None,           // let the joint state evolve shot after shot
  Deterministic,  // trace out the sensor and reinitialize (non-selective)
  Stochastic      // Born-rule branch selection with a derived seed
};

struct ExactRunOptions {
  ResetMode reset = ResetMode::Deterministic;
  std::uint64_t seed = 0;
  bool co_evolve = false;  // precess nuclei during the interaction window too
  ArrayXd common_shift;    // per-shot offset added to every Larmor frequency
};

struct ExactRunResult {
  ArrayXd prob_z;         // P(up_z) just before each reset
  ArrayXd prob_x;         // quadrature-basis probability, matches the closed forms
  ArrayXd purity;         // reduced-sensor Tr(rho_s^2) just before each reset
  ArrayXd polarization;   // mean nuclear <sigma_z> after each shot
  SpinEnsembleState final_state;  // meaningful for ResetMode None / Stochastic
};

// Alternates free nuclear precession over tau with the sensor-nuclei
// interaction applied for tau (precession frozen during the shot unless
// co_evolve), then handles the measurement per ResetMode. The interaction
// propagator comes from an exact eigendecomposition of the Hamiltonian.
// Throws on more than kMaxNuclei nuclei or norm drift beyond 1e-8.
ExactRunResult evolve_exact(const SpinEnsembleState& initial, const NucleusSpec& spec,
                            Interaction interaction, double g_global, double tau,
                            Index steps, const ExactRunOptions& opts = {});

}  // namespace nvnmr
