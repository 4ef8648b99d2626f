#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "nvnmr/bessel.hpp"
#include "nvnmr/fisher.hpp"
#include "nvnmr/rng.hpp"
#include "test_util.hpp"

using namespace nvnmr;

namespace {

FisherScenario base_scenario(Readout readout, double g, double tau, bool noisy = true) {
  ProtocolParams p;
  p.g = g;
  p.tau = tau;
  FisherScenario sc = make_scenario(readout, p, noisy);
  sc.omega_s = 1100.0;
  sc.omega_r = 2000.0;  // omega_r * tau = O(1): shots decorrelate quickly
  return sc;
}

}  // namespace

TEST_CASE("bessel J0/J1 against the standard library and reference values") {
  // Spot values from the usual tables.
  CHECK(bessel_j0(0.0) == 1.0);
  CHECK(bessel_j1(0.0) == 0.0);
  CHECK(bessel_j0(1.0) == doctest::Approx(0.76519768655796655).epsilon(1e-14));
  CHECK(bessel_j1(1.0) == doctest::Approx(0.44005058574493351).epsilon(1e-14));
  CHECK(bessel_j0(2.0) == doctest::Approx(0.22389077914123567).epsilon(1e-14));
  CHECK(bessel_j1(2.0) == doctest::Approx(0.57672480775687338).epsilon(1e-14));
  CHECK(bessel_j0(5.0) == doctest::Approx(-0.17759677131433830).epsilon(1e-13));
  CHECK(bessel_j1(5.0) == doctest::Approx(-0.32757913759146522).epsilon(1e-13));
  CHECK(bessel_j0(10.0) == doctest::Approx(-0.24593576445134835).epsilon(1e-13));
  CHECK(bessel_j1(10.0) == doctest::Approx(0.04347274616886144).epsilon(1e-12));

  // Dense sweep against the independent libstdc++ implementation.
  for (int i = 1; i <= 400; ++i) {
    const double x = 0.11 * i;  // up to 44
    CHECK(bessel_j0(x) == doctest::Approx(std::cyl_bessel_j(0, x)).epsilon(2e-12));
    CHECK(bessel_j1(x) == doctest::Approx(std::cyl_bessel_j(1, x)).epsilon(2e-12));
  }
  // Parity.
  CHECK(bessel_j0(-3.7) == bessel_j0(3.7));
  CHECK(bessel_j1(-3.7) == -bessel_j1(3.7));
}

TEST_CASE("J1^2/(1-J0^2): series joins the direct evaluation and tends to 1/2") {
  CHECK(j1sq_over_one_minus_j0sq(1e-12) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(j1sq_over_one_minus_j0sq(0.0999) ==
        doctest::Approx(j1sq_over_one_minus_j0sq(0.1001)).epsilon(1e-6));
  // Reference at u = 0.1 from a high-precision evaluation.
  CHECK(j1sq_over_one_minus_j0sq(0.1) == doctest::Approx(0.49968734806318118).epsilon(1e-9));
}

TEST_CASE("fisher sum: N = 0 carries no information") {
  const FisherScenario sc = base_scenario(Readout::SensingX, 0.2, 5e-3);
  const FisherResult result = fisher_information_sum(sc, 0);
  CHECK(result.total == 0.0);
  CHECK(result.per_shot.size() == 0);
}

TEST_CASE("fisher sum: omega_r = 0 is a blind spot for SensingX and HartmannHahnZ") {
  for (const Readout readout : {Readout::SensingX, Readout::HartmannHahnZ}) {
    FisherScenario sc = base_scenario(readout, 0.2, 5e-3);
    sc.omega_r = 0.0;
    CHECK(fisher_information_sum(sc, 200).total == 0.0);
  }
}

TEST_CASE("fisher sum: non-negative, additive over shots") {
  for (const Readout readout :
       {Readout::SensingX, Readout::SensingY, Readout::HartmannHahnZ,
        Readout::MultiNucleusX, Readout::MultiNucleusY}) {
    for (const bool noisy : {true, false}) {
      const FisherScenario sc = base_scenario(readout, 0.5, 4e-3, noisy);
      const FisherResult result = fisher_information_sum(sc, 300);
      CHECK(result.per_shot.minCoeff() >= 0.0);
      CHECK(result.total == doctest::Approx(result.per_shot.sum()).epsilon(1e-12));
    }
  }
}

TEST_CASE("analytic dP/d omega_r matches central finite differences to 1e-5") {
  SplitMix64 rng(987);
  const Readout readouts[] = {Readout::SensingX, Readout::SensingY,
                              Readout::HartmannHahnZ, Readout::MultiNucleusX,
                              Readout::MultiNucleusY};
  int checked = 0;
  while (checked < 100) {
    FisherScenario sc;
    sc.readout = readouts[rng.next() % 5];
    sc.noisy_omega_s = rng.uniform01() < 0.5;
    sc.params.tau = 1e-3 + 9e-3 * rng.uniform01();
    sc.params.g = 0.05 + 20.0 * rng.uniform01();
    sc.g1 = sc.params.g * (0.5 + rng.uniform01());
    sc.g2 = sc.params.g * (0.5 + rng.uniform01());
    sc.omega_s = 500.0 + 1000.0 * rng.uniform01();
    sc.omega_r = 100.0 + 1000.0 * rng.uniform01();
    sc.micro.delta_width = 0.01 * rng.uniform01();
    const double t = sc.params.tau * (1.0 + std::floor(500.0 * rng.uniform01()));

    const double analytic = shot_probability_derivative(sc, t);
    const double h = 1e-6 * sc.omega_r;
    FisherScenario lo = sc, hi = sc;
    lo.omega_r -= h;
    hi.omega_r += h;
    const double fd = (shot_probability(hi, t) - shot_probability(lo, t)) / (2.0 * h);
    const double scale = std::max(std::abs(analytic), std::abs(fd));
    if (scale < 1e-8) continue;  // keep the relative comparison meaningful
    CHECK(std::abs(analytic - fd) <= 1e-5 * scale);
    ++checked;
  }
}

TEST_CASE("per-shot information equals the Bernoulli quotient away from degeneracies") {
  SplitMix64 rng(1234);
  for (int i = 0; i < 200; ++i) {
    FisherScenario sc = base_scenario(Readout::SensingX, 0.3 + 3.0 * rng.uniform01(),
                                      2e-3 + 6e-3 * rng.uniform01());
    sc.noisy_omega_s = rng.uniform01() < 0.5;
    const double t = sc.params.tau * (1.0 + std::floor(300.0 * rng.uniform01()));
    const double prob = shot_probability(sc, t);
    const double var = prob * (1.0 - prob);
    if (var < 1e-6) continue;
    const double d = shot_probability_derivative(sc, t);
    const double quotient = d * d / var;
    CHECK(shot_information(sc, t) == doctest::Approx(quotient).epsilon(1e-8));
  }
}

TEST_CASE("scaling fit: weak coupling gives the phase-sensitive N^3 tau^4 law") {
  const FisherScenario sc = base_scenario(Readout::SensingX, 0.2, 5e-3);  // g tau = 1e-3
  const std::vector<Index> n_sweep{100, 178, 316, 562, 1000};
  const std::vector<double> tau_sweep{5e-4, 1.06e-3, 2.24e-3, 4.73e-3, 1e-2};
  const ScalingFit fit = fit_scaling(sc, n_sweep, tau_sweep);
  CHECK(fit.n_exponent == doctest::Approx(3.0).epsilon(0.1 / 3.0));
  CHECK(fit.tau_exponent == doctest::Approx(4.0).epsilon(0.15 / 4.0));
  // prefactor: I / (tau^4 N^3) -> g^2 / 3 within 20%.
  const double expected = sc.params.g * sc.params.g / 3.0;
  CHECK(fit.prefactor == doctest::Approx(expected).epsilon(0.2));
}

TEST_CASE("scaling fit: strong noisy coupling loses a power of tau") {
  FisherScenario sc = base_scenario(Readout::SensingX, 2000.0, 5e-3);  // g tau = 10
  sc.omega_r = 400.0;
  const std::vector<Index> n_sweep{100, 178, 316, 562, 1000};
  const std::vector<double> tau_sweep{5e-3, 1.06e-2, 2.24e-2, 4.73e-2, 1e-1};
  const ScalingFit fit = fit_scaling(sc, n_sweep, tau_sweep);
  CHECK(fit.tau_exponent == doctest::Approx(3.0).epsilon(0.2 / 3.0));
}

TEST_CASE("scaling fit: Hartmann-Hahn keeps N^3 tau^4 at any coupling") {
  for (const double g : {0.2, 2000.0}) {
    const FisherScenario sc = base_scenario(Readout::HartmannHahnZ, g, 5e-3);
    const std::vector<Index> n_sweep{100, 178, 316, 562, 1000};
    const std::vector<double> tau_sweep{5e-4, 1.06e-3, 2.24e-3, 4.73e-3, 1e-2};
    const ScalingFit fit = fit_scaling(sc, n_sweep, tau_sweep);
    CHECK(fit.n_exponent == doctest::Approx(3.0).epsilon(0.1 / 3.0));
    CHECK(fit.tau_exponent == doctest::Approx(4.0).epsilon(0.15 / 4.0));
  }
}

TEST_CASE("scaling fit: degenerate sweeps are rejected") {
  const FisherScenario sc = base_scenario(Readout::SensingX, 0.2, 5e-3);
  CHECK_THROWS_AS(fit_scaling(sc, {100}, {1e-3, 1e-2}), std::invalid_argument);
  CHECK_THROWS_AS(fit_scaling(sc, {100, 200}, {1e-3, 1e-2}), std::invalid_argument);
}

TEST_CASE("HH and weak sensing carry the same information at small phase") {
  FisherScenario sensing = base_scenario(Readout::SensingX, 0.2, 5e-3);
  sensing.g1 = 0.15;
  sensing.g2 = 0.25;
  FisherScenario hh = sensing;
  hh.readout = Readout::HartmannHahnZ;
  const double i_sensing = fisher_information_sum(sensing, 500).total;
  const double i_hh = fisher_information_sum(hh, 500).total;
  CHECK(i_sensing == doctest::Approx(i_hh).epsilon(0.01));
}

TEST_CASE("noisy omega_s costs a growing factor at strong coupling") {
  double previous_ratio = 0.0;
  for (const double gtau : {2.0, 5.0, 10.0, 20.0}) {
    FisherScenario noisy = base_scenario(Readout::SensingX, gtau / 5e-3, 5e-3, true);
    FisherScenario clean = noisy;
    clean.noisy_omega_s = false;
    const double ratio = fisher_information_sum(clean, 400).total /
                         fisher_information_sum(noisy, 400).total;
    CHECK(ratio > 1.0);
    CHECK(ratio > previous_ratio);
    previous_ratio = ratio;
  }
}

TEST_CASE("fisher matrix: closed form, reductions, and positivity") {
  const double tau = 5e-3;
  const Index n = 1000;
  const double n3 = std::pow(static_cast<double>(n), 3);

  const FisherMatrixResult equal = fisher_matrix_two_params(0.4, 0.4, tau, n);
  CHECK(equal.i_r ==
        doctest::Approx(0.4 * 0.4 * std::pow(tau, 4) * n3 / 3.0).epsilon(1e-10));

  const FisherMatrixResult general = fisher_matrix_two_params(0.7, 1.3, tau, n);
  const double expected = (2.0 / 3.0) * (0.7 * 0.7 * 1.3 * 1.3) /
                          (0.7 * 0.7 + 1.3 * 1.3) * std::pow(tau, 4) * n3;
  CHECK(general.i_r == doctest::Approx(expected).epsilon(1e-10));

  // g1 << g2: the information about the difference follows the weak arm.
  const FisherMatrixResult lopsided = fisher_matrix_two_params(1e-3, 1.0, tau, n);
  CHECK(lopsided.i_r ==
        doctest::Approx((2.0 / 3.0) * 1e-6 * std::pow(tau, 4) * n3).epsilon(1e-3));

  CHECK_THROWS_AS(fisher_matrix_two_params(0.0, 0.0, tau, n), std::invalid_argument);
}

TEST_CASE("fisher matrix vs numeric per-shot assembly on N = 100") {
  // Oracle: finite-difference derivatives of the shot phase with respect to
  // (omega_r, omega_s), assembled as 4 dphi dphi^T and averaged over an
  // exact 4x4 grid of carrier phase offsets (discrete averages of sin^2 and
  // sin are exact there).
  const double g1 = 0.7, g2 = 1.3, tau = 5e-3;
  const Index n_shots = 100;
  const double omega_s = 700.0, omega_r = 300.0;

  const auto phase = [&](double wr, double ws, double chi1, double chi2, double t) {
    return tau * (g1 * std::cos((ws + 0.5 * wr) * t + chi1) +
                  g2 * std::cos((ws - 0.5 * wr) * t + chi2));
  };

  Eigen::Matrix2d numeric = Eigen::Matrix2d::Zero();
  const double hr = 1e-7 * omega_r, hs = 1e-7 * omega_s;
  for (Index n = 1; n <= n_shots; ++n) {
    const double t = tau * static_cast<double>(n);
    Eigen::Matrix2d shot = Eigen::Matrix2d::Zero();
    for (int a = 0; a < 4; ++a) {
      for (int b = 0; b < 4; ++b) {
        const double chi1 = 0.5 * M_PI * a;
        const double chi2 = 0.5 * M_PI * b;
        const double dr = (phase(omega_r + hr, omega_s, chi1, chi2, t) -
                           phase(omega_r - hr, omega_s, chi1, chi2, t)) /
                          (2.0 * hr);
        const double ds = (phase(omega_r, omega_s + hs, chi1, chi2, t) -
                           phase(omega_r, omega_s - hs, chi1, chi2, t)) /
                          (2.0 * hs);
        shot(0, 0) += 4.0 * dr * dr;
        shot(0, 1) += 4.0 * dr * ds;
        shot(1, 1) += 4.0 * ds * ds;
      }
    }
    shot(1, 0) = shot(0, 1);
    numeric += shot / 16.0;
  }

  const FisherMatrixResult closed = fisher_matrix_two_params(g1, g2, tau, n_shots);
  const double scale = closed.matrix.norm();
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c)
      CHECK(std::abs(numeric(r, c) - closed.matrix(r, c)) < 0.02 * scale);

  const double numeric_i_r = 1.0 / numeric.inverse()(0, 0);
  CHECK(numeric_i_r == doctest::Approx(closed.i_r).epsilon(0.02));
}

TEST_CASE("f(c): small-c limit, bounds, monotonicity") {
  CHECK(f_c_integral(1e-4) == doctest::Approx(0.5).epsilon(1e-3));

  for (const double c : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    const double f = f_c_integral(c);
    CHECK(f > 0.5);
    CHECK(f < 2.0);
  }

  double prev = 0.0;
  for (int k = 1; k <= 20; ++k) {
    const double c = 0.045 * k;  // 0.045 .. 0.9
    const double f = f_c_integral(c);
    CHECK(f > prev);
    prev = f;
  }

  CHECK_THROWS_AS(f_c_integral(0.0), std::domain_error);
  CHECK_THROWS_AS(f_c_integral(1.0), std::domain_error);
  CHECK_THROWS_AS(f_c_integral(-0.3), std::domain_error);
}

TEST_CASE("f(0.5) against an independent fixed-grid Simpson evaluation") {
  const double c = 0.5;
  const auto integrand = [&](double x) {
    const double s = std::sin(x);
    return s * s / std::pow(1.0 + c * c + 2.0 * c * std::cos(x), 1.5);
  };
  const double simpson =
      testutil::composite_simpson(integrand, 0.0, 2.0 * M_PI, 1 << 16) / (2.0 * M_PI);
  CHECK(f_c_integral(c) == doctest::Approx(simpson).epsilon(1e-7));
}
