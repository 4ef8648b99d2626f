#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace nvnmr {

using Eigen::ArrayXd;
using Eigen::ArrayXcd;
using Eigen::Index;
using Eigen::MatrixXcd;
using Eigen::VectorXcd;

// All frequencies are angular (rad per time unit) in dimensionless
// simulation units; there is no SI conversion layer.

// Physics knobs of one experiment.
struct ProtocolParams {
  double g = 1.0;              // effective sensor-sample coupling
  double tau = 5e-3;           // interaction time per shot
  double delta1 = 1e2;         // sample frequencies after control offset
  double delta2 = 1e2 + 1e-2;
  double phi_m = 0.0;          // measurement basis angle: 0 = x, pi/2 = y
  double alpha = 0.0;          // central-frequency amplification strength
  Index n_shots = 1;           // number of consecutive measurements N

  double beat() const { return delta1 - delta2; }
  double carrier() const { return 0.5 * (delta1 + delta2); }
};

// Field inhomogeneity over the region probed by a single sensor:
// offsets are uniform in [epsilon0 - delta_width, epsilon0 + delta_width].
struct MicroNoise {
  double delta_width = 0.0;
  double epsilon0 = 0.0;
};

// Accumulated sensor phase at evaluation time t.
struct PhaseValue {
  double phi = 0.0;
  double t = 0.0;
  bool short_interaction_ok = true;
};

inline bool short_interaction_ok(const ProtocolParams& p, const MicroNoise& m) {
  const double dmax = std::max(std::abs(p.delta1), std::abs(p.delta2));
  return p.tau * (dmax + m.delta_width) < M_PI;
}

// 2*g*tau <= 0.1 keeps sin(x) = x good to ~0.2%.
inline bool weak_coupling_ok(const ProtocolParams& p) {
  return 2.0 * std::abs(p.g) * p.tau <= 0.1;
}

// Regime warnings carried along with derived data products. The closed
// forms are regime approximations, so violations flag rather than throw.
struct RegimeFlags {
  bool short_interaction_ok = true;
  bool weak_coupling_ok = true;

  std::vector<std::string> warnings() const {
    std::vector<std::string> w;
    if (!short_interaction_ok)
      w.push_back("short-interaction condition tau*(max|delta|+Delta) < pi violated");
    if (!weak_coupling_ok)
      w.push_back("weak-coupling condition 2*g*tau <= 0.1 violated");
    return w;
  }
};

inline RegimeFlags regime_flags(const ProtocolParams& p, const MicroNoise& m) {
  RegimeFlags f;
  f.short_interaction_ok = short_interaction_ok(p, m);
  f.weak_coupling_ok = weak_coupling_ok(p);
  return f;
}

// Measurement grid t_n = n*tau for n = 1..n.
inline ArrayXd trace_times(double tau, Index n) {
  return ArrayXd::LinSpaced(n, tau, tau * static_cast<double>(n));
}

// Probability time series P(t_n) on the uniform grid t_n = n*tau.
struct ProbabilityTrace {
  double tau = 0.0;
  ArrayXd values;
  RegimeFlags flags;

  Index size() const { return values.size(); }
  ArrayXd times() const { return trace_times(tau, values.size()); }
  double total_time() const { return tau * static_cast<double>(values.size()); }
};

}  // namespace nvnmr
