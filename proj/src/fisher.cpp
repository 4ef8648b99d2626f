#include "nvnmr/fisher.hpp"

#include <cmath>
#include <stdexcept>

#include "nvnmr/bessel.hpp"
#include "nvnmr/quadrature.hpp"
#include "nvnmr/signal_core.hpp"

namespace nvnmr {

namespace {

// Shared amplitude kernel: W^2 = g1^2 + g2^2 + 2 g1 g2 cos(omega_r t),
// written so that the degenerate point (equal amplitudes, cos -> -1) stays
// finite through the (1 - c)(1 + c) factorization of sin^2.
struct BeatKernel {
  double q;        // 1 + cos(omega_r t)
  double one_m_c;  // 1 - cos(omega_r t)
  double w_sq;     // g1^2 + g2^2 + 2 g1 g2 cos
  double g1g2;

  BeatKernel(double g1, double g2, double omega_r, double t) {
    const double c = std::cos(omega_r * t);
    q = 1.0 + c;
    one_m_c = 1.0 - c;
    g1g2 = g1 * g2;
    const double dg = g1 - g2;
    w_sq = dg * dg + 2.0 * g1g2 * q;
  }

  // sin^2(omega_r t) / W^2 with the exact limit at W^2 == 0.
  double sin_sq_over_w_sq() const {
    if (w_sq == 0.0) return g1g2 > 0.0 ? one_m_c / (2.0 * g1g2) : 0.0;
    return one_m_c * q / w_sq;
  }
};

double envelope(const FisherScenario& sc, double t) {
  return sinc(sc.micro.delta_width * t);
}

// d phi / d omega_r for the phase-type models,
// phi = tau * s * (g1 cos(omega1 t) + g2 cos(omega2 t)).
double phase_derivative(const FisherScenario& sc, double t) {
  const double s = envelope(sc, t);
  const double w1 = sc.omega_s + 0.5 * sc.omega_r;
  const double w2 = sc.omega_s - 0.5 * sc.omega_r;
  return 0.5 * sc.params.tau * s * t * (sc.g2 * std::sin(w2 * t) - sc.g1 * std::sin(w1 * t));
}

double phase_value(const FisherScenario& sc, double t) {
  const double s = envelope(sc, t);
  const double w1 = sc.omega_s + 0.5 * sc.omega_r;
  const double w2 = sc.omega_s - 0.5 * sc.omega_r;
  return sc.params.tau * s * (sc.g1 * std::cos(w1 * t) + sc.g2 * std::cos(w2 * t));
}

}  // namespace

double j1sq_over_one_minus_j0sq(double u) {
  const double au = std::abs(u);
  if (au < 0.1) {
    const double u2 = u * u;
    return 0.5 * (1.0 - u2 / 16.0 - 7.0 * u2 * u2 / 2304.0);
  }
  const double j0 = bessel_j0(u);
  const double j1 = bessel_j1(u);
  return j1 * j1 / (1.0 - j0 * j0);
}

FisherScenario make_scenario(Readout readout, const ProtocolParams& p, bool noisy_omega_s) {
  FisherScenario sc;
  sc.readout = readout;
  sc.params = p;
  sc.g1 = p.g;
  sc.g2 = p.g;
  sc.omega_s = p.carrier();
  sc.omega_r = std::abs(p.beat());
  sc.noisy_omega_s = noisy_omega_s;
  return sc;
}

double shot_probability(const FisherScenario& sc, double t) {
  const double tau = sc.params.tau;
  const double s = envelope(sc, t);
  switch (sc.readout) {
    case Readout::SensingX:
      if (sc.noisy_omega_s) {
        const BeatKernel k(sc.g1, sc.g2, sc.omega_r, t);
        const double u = 2.0 * tau * s * std::sqrt(k.w_sq);
        return 0.5 * (1.0 - bessel_j0(u));
      }
      return std::pow(std::sin(phase_value(sc, t)), 2);
    case Readout::SensingY: {
      if (sc.noisy_omega_s) return 0.5;  // odd moments average out
      const double sp = std::sin(phase_value(sc, t) + 0.25 * M_PI);
      return sp * sp;
    }
    case Readout::HartmannHahnZ: {
      const BeatKernel k(sc.g1, sc.g2, sc.omega_r, t);
      const double sp = std::sin(tau * s * std::sqrt(0.5 * k.w_sq));
      return sp * sp;
    }
    case Readout::MultiNucleusX:
      return 0.5 + 0.5 * std::cos(2.0 * phase_value(sc, t));
    case Readout::MultiNucleusY:
      return 0.5 + 0.5 * std::sin(2.0 * phase_value(sc, t));
  }
  throw std::invalid_argument("shot_probability: unknown readout scenario");
}

double shot_probability_derivative(const FisherScenario& sc, double t) {
  const double tau = sc.params.tau;
  const double s = envelope(sc, t);
  switch (sc.readout) {
    case Readout::SensingX: {
      if (sc.noisy_omega_s) {
        const BeatKernel k(sc.g1, sc.g2, sc.omega_r, t);
        if (k.w_sq == 0.0) return 0.0;
        const double w = std::sqrt(k.w_sq);
        const double u = 2.0 * tau * s * w;
        const double du = -2.0 * tau * s * k.g1g2 * t * std::sin(sc.omega_r * t) / w;
        return 0.5 * bessel_j1(u) * du;
      }
      return std::sin(2.0 * phase_value(sc, t)) * phase_derivative(sc, t);
    }
    case Readout::SensingY:
      if (sc.noisy_omega_s) return 0.0;
      return std::cos(2.0 * phase_value(sc, t)) * phase_derivative(sc, t);
    case Readout::HartmannHahnZ: {
      const BeatKernel k(sc.g1, sc.g2, sc.omega_r, t);
      if (k.w_sq == 0.0) return 0.0;
      const double w = std::sqrt(0.5 * k.w_sq);
      const double dw = -0.5 * k.g1g2 * t * std::sin(sc.omega_r * t) / w;
      return std::sin(2.0 * tau * s * w) * tau * s * dw;
    }
    case Readout::MultiNucleusX:
      return -std::sin(2.0 * phase_value(sc, t)) * phase_derivative(sc, t);
    case Readout::MultiNucleusY:
      return std::cos(2.0 * phase_value(sc, t)) * phase_derivative(sc, t);
  }
  throw std::invalid_argument("shot_probability_derivative: unknown readout scenario");
}

double shot_information(const FisherScenario& sc, double t) {
  const double tau = sc.params.tau;
  const double s = envelope(sc, t);
  switch (sc.readout) {
    case Readout::SensingX: {
      if (!sc.noisy_omega_s) {
        const double d = phase_derivative(sc, t);
        return 4.0 * d * d;
      }
      const BeatKernel k(sc.g1, sc.g2, sc.omega_r, t);
      const double u = 2.0 * tau * s * std::sqrt(k.w_sq);
      const double du_sq =
          4.0 * tau * tau * s * s * k.g1g2 * k.g1g2 * t * t * k.sin_sq_over_w_sq();
      return j1sq_over_one_minus_j0sq(u) * du_sq;
    }
    case Readout::SensingY: {
      if (sc.noisy_omega_s) return 0.0;
      const double d = phase_derivative(sc, t);
      return 4.0 * d * d;
    }
    case Readout::HartmannHahnZ: {
      // tau^2 s^2 g1^2 g2^2 t^2 sin^2(omega_r t) / (0.5(g1^2+g2^2) + g1 g2 cos)
      const BeatKernel k(sc.g1, sc.g2, sc.omega_r, t);
      return tau * tau * s * s * k.g1g2 * k.g1g2 * t * t * 2.0 * k.sin_sq_over_w_sq();
    }
    case Readout::MultiNucleusX:
    case Readout::MultiNucleusY: {
      const double d = 2.0 * phase_derivative(sc, t);
      return d * d;  // both readouts carry identical information
    }
  }
  throw std::invalid_argument("shot_information: unknown readout scenario");
}

FisherResult fisher_information_sum(const FisherScenario& sc, Index n_shots) {
  if (n_shots < 0) throw std::invalid_argument("fisher_information_sum: negative N");
  FisherResult result;
  result.per_shot.resize(n_shots);
  double sum = 0.0;
  double carry = 0.0;
  for (Index n = 1; n <= n_shots; ++n) {
    const double value = shot_information(sc, sc.params.tau * static_cast<double>(n));
    result.per_shot[n - 1] = value;
    const double y = value - carry;
    const double t = sum + y;
    carry = (t - sum) - y;
    sum = t;
  }
  result.total = sum;
  return result;
}

namespace {

double band_averaged_total(const FisherScenario& sc, Index n_shots, double tau) {
  constexpr int kBand = 48;
  FisherScenario sweep = sc;
  sweep.params.tau = tau;
  double sum = 0.0;
  for (int j = 0; j < kBand; ++j) {
    sweep.omega_r = sc.omega_r * (1.0 + static_cast<double>(j) / (kBand - 1));
    sum += fisher_information_sum(sweep, n_shots).total;
  }
  return sum / kBand;
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

}  // namespace

ScalingFit fit_scaling(const FisherScenario& sc, const std::vector<Index>& n_values,
                       const std::vector<double>& tau_values) {
  if (n_values.size() < 2 || tau_values.size() < 2)
    throw std::invalid_argument("fit_scaling: degenerate sweep (need >= 2 points)");
  const auto [n_min, n_max] = std::minmax_element(n_values.begin(), n_values.end());
  const auto [tau_min, tau_max] = std::minmax_element(tau_values.begin(), tau_values.end());
  if (static_cast<double>(*n_max) < 10.0 * static_cast<double>(*n_min) ||
      *tau_max < 10.0 * *tau_min)
    throw std::invalid_argument("fit_scaling: degenerate sweep (must span a decade)");

  std::vector<double> ns, totals_n;
  for (const Index n : n_values) {
    ns.push_back(static_cast<double>(n));
    totals_n.push_back(band_averaged_total(sc, n, sc.params.tau));
  }
  std::vector<double> taus, totals_tau;
  for (const double tau : tau_values) {
    taus.push_back(tau);
    totals_tau.push_back(band_averaged_total(sc, *n_max, tau));
  }

  ScalingFit fit;
  fit.n_exponent = loglog_slope(ns, totals_n);
  fit.tau_exponent = loglog_slope(taus, totals_tau);
  // prefactor refers to the last N in sweep order at the scenario tau
  fit.prefactor = totals_n.back() / (std::pow(sc.params.tau, 4) * std::pow(ns.back(), 3));
  return fit;
}

FisherMatrixResult fisher_matrix_two_params(double g1, double g2, double tau, Index n_shots) {
  if (!(g1 > 0.0) || !(g2 > 0.0))
    throw std::invalid_argument("fisher_matrix_two_params: amplitudes must be positive");
  const double n3 = std::pow(static_cast<double>(n_shots), 3);
  const double scale = std::pow(tau, 4) * n3 / 6.0;
  const double sum_sq = g1 * g1 + g2 * g2;
  const double diff_sq = g1 * g1 - g2 * g2;
  FisherMatrixResult out;
  out.matrix << scale * sum_sq, scale * 2.0 * diff_sq, scale * 2.0 * diff_sq,
      scale * 4.0 * sum_sq;
  out.i_r = 1.0 / out.matrix.inverse()(0, 0);
  return out;
}

double f_c_integral(double c) {
  if (!(c > 0.0) || !(c < 1.0))
    throw std::domain_error("f_c_integral: c must lie in (0, 1)");
  const auto integrand = [c](double x) {
    const double s = std::sin(x);
    return s * s / std::pow(1.0 + c * c + 2.0 * c * std::cos(x), 1.5);
  };
  return adaptive_simpson(integrand, 0.0, 2.0 * M_PI, 1e-9) / (2.0 * M_PI);
}

}  // namespace nvnmr
