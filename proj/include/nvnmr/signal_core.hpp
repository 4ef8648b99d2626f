#pragma once

// Closed-form deterministic signal and probability models: classical coil
// signal, quantum phase accumulation, weak/strong-coupling readout
// probabilities, central-frequency amplification and Hartmann-Hahn readout.
//
// Everything here is a pure function of its inputs; safe to call from any
// number of threads.

#include <cmath>

#include "nvnmr/bessel.hpp"
#include "nvnmr/types.hpp"

namespace nvnmr {

// sin(x)/x with the removable singularity filled in by continuity.
template <class Scalar>
inline Scalar sinc(Scalar x) {
  if (x == Scalar(0)) return Scalar(1);
  return std::sin(x) / x;
}

inline ArrayXd sinc(const ArrayXd& x) {
  return (x == 0.0).select(1.0, x.sin() / x);
}

// Classical coil current for two close frequencies with shift inhomogeneity
// uniform over +-sigma: 2*g*delta1 * cos(mean*t) * cos(beat*t/2) * sinc(sigma*t).
template <class Scalar>
inline Scalar classical_coil_signal(Scalar t, Scalar g, Scalar delta1, Scalar delta2,
                                    Scalar sigma) {
  const Scalar mean = (delta1 + delta2) / Scalar(2);
  const Scalar half_beat = (delta1 - delta2) / Scalar(2);
  return Scalar(2) * g * delta1 * std::cos(mean * t) * std::cos(half_beat * t) *
         sinc(sigma * t);
}

inline ArrayXd classical_coil_signal(const ArrayXd& t, double g, double delta1,
                                     double delta2, double sigma) {
  const double mean = 0.5 * (delta1 + delta2);
  const double half_beat = 0.5 * (delta1 - delta2);
  return 2.0 * g * delta1 * (mean * t).cos() * (half_beat * t).cos() * sinc(ArrayXd(sigma * t));
}

// Sensor phase accumulated over one shot centered at t, with the microscopic
// offset spread folded in as a sinc envelope:
//
//   phi = 2*g*tau * sinc(Delta*t) * sin(((delta1+delta2)/2 + eps0)*t) * B(t)
//   B(t) = cos((delta1-delta2)*t/2)            for alpha == 0
//        = cos((delta1-delta2)*t/2) + alpha/2  with a strong central tone
//
// Assumes a short interaction, tau*(max|delta| + Delta) < pi; the returned
// flag reports whether that holds.
inline PhaseValue accumulated_phase(double t, const ProtocolParams& p, const MicroNoise& m) {
  const double envelope = sinc(m.delta_width * t);
  const double carrier = std::sin((p.carrier() + m.epsilon0) * t);
  const double beat = std::cos(0.5 * p.beat() * t) + 0.5 * p.alpha;
  PhaseValue out;
  out.phi = 2.0 * p.g * p.tau * envelope * carrier * beat;
  out.t = t;
  out.short_interaction_ok = short_interaction_ok(p, m);
  return out;
}

inline ArrayXd accumulated_phase(const ArrayXd& t, const ProtocolParams& p,
                                 const MicroNoise& m) {
  const ArrayXd envelope = sinc(ArrayXd(m.delta_width * t));
  const ArrayXd carrier = ((p.carrier() + m.epsilon0) * t).sin();
  const ArrayXd beat = (0.5 * p.beat() * t).cos() + 0.5 * p.alpha;
  return 2.0 * p.g * p.tau * envelope * carrier * beat;
}

// Probability of the |down_phi_m> outcome given the accumulated phase.
inline double measurement_probability(const PhaseValue& phase, double phi_m) {
  const double s = std::sin(phase.phi + 0.5 * phi_m);
  return s * s;
}

inline ArrayXd measurement_probability(const ArrayXd& phi, double phi_m) {
  return (phi + 0.5 * phi_m).sin().square();
}

// Macroscopically averaged x-basis probability in the weak-coupling limit:
// P = 2*(g*tau*sinc(Delta*t))^2 * cos^2(beat*t/2). Valid for 2*g*tau << 1
// and sigma*t >> 1 (the wide-noise average is already taken).
inline double weak_coupling_probability(double t, const ProtocolParams& p,
                                        const MicroNoise& m) {
  const double a = p.g * p.tau * sinc(m.delta_width * t);
  const double c = std::cos(0.5 * p.beat() * t);
  return 2.0 * (a * a) * (c * c);  // grouped as in the array overload
}

inline ArrayXd weak_coupling_probability(const ArrayXd& t, const ProtocolParams& p,
                                         const MicroNoise& m) {
  const ArrayXd a = p.g * p.tau * sinc(ArrayXd(m.delta_width * t));
  const ArrayXd c = (0.5 * p.beat() * t).cos();
  return 2.0 * a.square() * c.square();
}

// Macroscopically averaged probability at any coupling strength:
// P = (1 - cos(phi_m) * J0(4*g*tau*sinc(Delta*t)*cos(beat*t/2))) / 2.
// The y basis (phi_m = pi/2) carries no even-moment signal and stays at 1/2.
inline double strong_coupling_probability(double t, const ProtocolParams& p,
                                          const MicroNoise& m) {
  const double arg =
      4.0 * p.g * p.tau * sinc(m.delta_width * t) * std::cos(0.5 * p.beat() * t);
  return 0.5 * (1.0 - std::cos(p.phi_m) * bessel_j0(arg));
}

inline ArrayXd strong_coupling_probability(const ArrayXd& t, const ProtocolParams& p,
                                           const MicroNoise& m) {
  ArrayXd arg =
      4.0 * p.g * p.tau * sinc(ArrayXd(m.delta_width * t)) * (0.5 * p.beat() * t).cos();
  const double cm = std::cos(p.phi_m);
  for (Index i = 0; i < arg.size(); ++i) arg[i] = 0.5 * (1.0 - cm * bessel_j0(arg[i]));
  return arg;
}

// Hartmann-Hahn detection (main-text normalization): probability of staying
// in |up_z> under the spin-locked drive. Depends on the frequencies only
// through delta1 - delta2, hence exactly invariant under common shifts.
inline double hartmann_hahn_probability(double t, const ProtocolParams& p) {
  const double c = std::cos(p.g * p.tau * std::cos(0.5 * p.beat() * t));
  return c * c;
}

inline ArrayXd hartmann_hahn_probability(const ArrayXd& t, const ProtocolParams& p) {
  return (p.g * p.tau * (0.5 * p.beat() * t).cos()).cos().square();
}

}  // namespace nvnmr
