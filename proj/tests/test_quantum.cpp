#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>

#include <unsupported/Eigen/MatrixFunctions>

#include "nvnmr/quantum.hpp"
#include "nvnmr/rng.hpp"
#include "test_util.hpp"

using namespace nvnmr;
using Complex = std::complex<double>;

namespace {

const Complex kI{0.0, 1.0};

Eigen::Matrix2cd sx() {
  Eigen::Matrix2cd m;
  m << 0, 1, 1, 0;
  return m;
}
Eigen::Matrix2cd sy() {
  Eigen::Matrix2cd m;
  m << 0, -kI, kI, 0;
  return m;
}
Eigen::Matrix2cd sz() {
  Eigen::Matrix2cd m;
  m << 1, 0, 0, -1;
  return m;
}

MatrixXcd kron(const MatrixXcd& a, const MatrixXcd& b) {
  MatrixXcd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

MatrixXcd on_qubit(const Eigen::Matrix2cd& op, int qubit, int n_qubits) {
  MatrixXcd out = MatrixXcd::Identity(1, 1);
  for (int q = 0; q < n_qubits; ++q)
    out = kron(out, q == qubit ? MatrixXcd(op) : MatrixXcd(MatrixXcd::Identity(2, 2)));
  return out;
}

// Nucleus precessed to time t: cos(dt/2)|+x> + i sin(dt/2)|-x>.
Eigen::Vector2cd precessed_nucleus(double delta, double t) {
  const Eigen::Vector2cd plus_x(1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0));
  const Eigen::Vector2cd minus_x(1.0 / std::sqrt(2.0), -1.0 / std::sqrt(2.0));
  return std::cos(0.5 * delta * t) * plus_x + kI * std::sin(0.5 * delta * t) * minus_x;
}

// Independent oracle: exact propagator through Eigen's general matrix
// exponential (the library uses a Hermitian eigendecomposition instead).
VectorXcd evolve_with_exp(const MatrixXcd& h, double tau, const VectorXcd& psi) {
  const MatrixXcd u = (-kI * tau * h).exp();
  return u * psi;
}

Eigen::Matrix2cd reduced_sensor(const VectorXcd& psi) {
  const Index nuc_dim = psi.size() / 2;
  const VectorXcd up = psi.head(nuc_dim);
  const VectorXcd down = psi.tail(nuc_dim);
  Eigen::Matrix2cd rho;
  rho(0, 0) = up.squaredNorm();
  rho(1, 1) = down.squaredNorm();
  rho(0, 1) = down.dot(up);
  rho(1, 0) = std::conj(rho(0, 1));
  return rho;
}

}  // namespace

TEST_CASE("coherence closed form: decoupled limit and semiclassical tail") {
  for (const Index n : {Index{1}, Index{5}, Index{200}})
    CHECK(std::abs(coherence_closed_form(n, 0.0, 1e-3, 3.0, 2.0) - Complex(0.5, 0.0)) <
          1e-15);

  // N g tau = 1e-2 at N = 1000: the exponential form holds to 1e-3.
  const Index n = 1000;
  const double gtau = 1e-2 / static_cast<double>(n);
  for (const double t : {0.3, 1.1, 2.9}) {
    const Complex exact = coherence_closed_form(n, gtau / 1e-3, 1e-3, 2.0, t);
    const Complex semi = 0.5 * std::exp(-kI * 2.0 * 1e-2 * std::cos(2.0 * t));
    CHECK(std::abs(exact - semi) < 1e-3);
  }
}

TEST_CASE("coherence closed form vs exact evolution for N = 1..4 nuclei") {
  SplitMix64 rng(5150);
  for (int n_nuclei = 1; n_nuclei <= 4; ++n_nuclei) {
    for (int rep = 0; rep < 5; ++rep) {
      const double g = 0.2 + 2.0 * rng.uniform01();
      const double tau = 0.05 + 0.3 * rng.uniform01();
      const double delta = 0.5 + 3.0 * rng.uniform01();
      const double t = 5.0 * rng.uniform01();

      // Sensor up_x, nuclei product-precessed; couple g sigma_z sum I_x for tau.
      const int n_qubits = n_nuclei + 1;
      VectorXcd nuclei = VectorXcd::Ones(1);
      for (int m = 0; m < n_nuclei; ++m)
        nuclei = kron(nuclei, precessed_nucleus(delta, t));
      VectorXcd sensor(2);
      sensor << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);  // up_x
      VectorXcd psi = kron(sensor, nuclei);

      MatrixXcd h = MatrixXcd::Zero(psi.size(), psi.size());
      for (int m = 0; m < n_nuclei; ++m)
        h += g * on_qubit(sz(), 0, n_qubits) * on_qubit(sx(), m + 1, n_qubits);
      psi = evolve_with_exp(h, tau, psi);

      // <up_z| rho_NV |down_z> from the evolved pure state.
      const Index nuc_dim = psi.size() / 2;
      const Complex coherence = psi.tail(nuc_dim).dot(psi.head(nuc_dim));
      const Complex closed = coherence_closed_form(n_nuclei, g, tau, delta, t);
      CHECK(std::abs(coherence - closed) < 1e-8);
    }
  }
}

TEST_CASE("semiclassical limit: closed-form error halves as N doubles") {
  const double total_phase = 1e-2;  // N g tau fixed
  const double delta = 2.0, tau = 1e-3, t = 1.7;
  const auto error_at = [&](Index n) {
    const double g = total_phase / (static_cast<double>(n) * tau);
    const Complex semi = 0.5 * std::exp(-kI * 2.0 * total_phase * std::cos(delta * t));
    return std::abs(coherence_closed_form(n, g, tau, delta, t) - semi);
  };
  const double e250 = error_at(250);
  const double e500 = error_at(500);
  const double e1000 = error_at(1000);
  CHECK(e250 / e500 >= 1.8);
  CHECK(e500 / e1000 >= 1.8);
}

TEST_CASE("two-spin closed forms: trivial anchors") {
  // g tau = 0: flip-flop keeps the sensor up, sensing quadrature is flat.
  CHECK(twospin_probability(0.0, 0.1, 3.0, 4.0, 2.0, Interaction::FlipFlop,
                            TwoSpinBasis::Z) == doctest::Approx(1.0));
  CHECK(twospin_probability(0.0, 0.1, 3.0, 4.0, 2.0, Interaction::Sensing,
                            TwoSpinBasis::X) == doctest::Approx(0.5));
}

TEST_CASE("flip-flop Z is bit-identical under exactly representable common shifts") {
  SplitMix64 rng(20240814);
  const double g = 0.8, tau = 0.2, d1 = 100.0, d2 = 99.25;
  for (int i = 0; i < 50; ++i) {
    const double t = 30.0 * rng.uniform01();
    const double eps = testutil::dyadic_shift(rng);
    CHECK(twospin_probability(g, tau, d1 + eps, d2 + eps, t, Interaction::FlipFlop,
                              TwoSpinBasis::Z) ==
          twospin_probability(g, tau, d1, d2, t, Interaction::FlipFlop, TwoSpinBasis::Z));
  }
}

TEST_CASE("all four two-spin closed forms vs the 8-dimensional unitary oracle") {
  SplitMix64 rng(31415);
  for (int rep = 0; rep < 40; ++rep) {
    const double g = 0.1 + 1.5 * rng.uniform01();
    const double tau = 0.05 + 0.4 * rng.uniform01();
    const double d1 = 0.5 + 4.0 * rng.uniform01();
    const double d2 = 0.5 + 4.0 * rng.uniform01();
    const double t = 8.0 * rng.uniform01();

    VectorXcd nuclei = kron(precessed_nucleus(d1, t), precessed_nucleus(d2, t));
    VectorXcd sensor(2);
    sensor << 1.0, 0.0;  // up_z
    const VectorXcd psi0 = kron(sensor, nuclei);

    MatrixXcd h_sensing = MatrixXcd::Zero(8, 8);
    MatrixXcd h_ff = MatrixXcd::Zero(8, 8);
    for (int m = 1; m <= 2; ++m) {
      h_sensing += g * on_qubit(sx(), 0, 3) * on_qubit(sx(), m, 3);
      h_ff += g / std::sqrt(2.0) *
              (on_qubit(sx(), 0, 3) * on_qubit(sx(), m, 3) +
               on_qubit(sy(), 0, 3) * on_qubit(sy(), m, 3));
    }

    const VectorXcd psi_sensing = evolve_with_exp(h_sensing, tau, psi0);
    const VectorXcd psi_ff = evolve_with_exp(h_ff, tau, psi0);

    const Eigen::Matrix2cd rho_sensing = reduced_sensor(psi_sensing);
    const Eigen::Matrix2cd rho_ff = reduced_sensor(psi_ff);

    // Z readout: population of up_z. Quadrature (X) readout: 1/2 + Im rho01.
    const double oracle[4] = {
        rho_sensing(0, 0).real(), 0.5 + rho_sensing(0, 1).imag(),
        rho_ff(0, 0).real(), 0.5 + rho_ff(0, 1).imag()};
    const double closed[4] = {
        twospin_probability(g, tau, d1, d2, t, Interaction::Sensing, TwoSpinBasis::Z),
        twospin_probability(g, tau, d1, d2, t, Interaction::Sensing, TwoSpinBasis::X),
        twospin_probability(g, tau, d1, d2, t, Interaction::FlipFlop, TwoSpinBasis::Z),
        twospin_probability(g, tau, d1, d2, t, Interaction::FlipFlop, TwoSpinBasis::X)};
    for (int k = 0; k < 4; ++k) CHECK(closed[k] == doctest::Approx(oracle[k]).epsilon(1e-8));
  }
}

TEST_CASE("multinucleus readout: anchors, algebraic identity, parity") {
  NucleusSpec spec;
  spec.couplings = ArrayXd::Zero(3);
  spec.larmor = ArrayXd::LinSpaced(3, 1.0, 3.0);
  CHECK(multinucleus_readout(spec, 0.1, 2.0, ReadoutBasis::Y) == doctest::Approx(0.5));
  CHECK(multinucleus_readout(spec, 0.1, 2.0, ReadoutBasis::X) == doctest::Approx(1.0));

  // Two equal couplings: Y readout equals cos^2(2 g tau cos(beat t/2) cos(mean t) - pi/4).
  NucleusSpec two;
  two.couplings = ArrayXd::Constant(2, 0.3);
  two.larmor = ArrayXd(2);
  two.larmor << 4.0, 3.2;
  const double tau = 0.05;
  for (const double t : {0.4, 1.9, 7.3}) {
    const double x = 2.0 * 0.3 * tau * std::cos(0.5 * (4.0 - 3.2) * t) *
                     std::cos(0.5 * (4.0 + 3.2) * t);
    const double identity = std::pow(std::cos(x - 0.25 * M_PI), 2);
    CHECK(multinucleus_readout(two, tau, t, ReadoutBasis::Y) ==
          doctest::Approx(identity).epsilon(1e-12));
  }

  // X is even and Y odd in the collective phase (exact bit-level statement).
  NucleusSpec flipped = two;
  flipped.couplings = -two.couplings;
  for (const double t : {0.7, 2.2}) {
    CHECK(multinucleus_readout(two, tau, t, ReadoutBasis::X) ==
          multinucleus_readout(flipped, tau, t, ReadoutBasis::X));
    const double py = multinucleus_readout(two, tau, t, ReadoutBasis::Y);
    const double py_flipped = multinucleus_readout(flipped, tau, t, ReadoutBasis::Y);
    CHECK(py - 0.5 == -(py_flipped - 0.5));
  }
}

TEST_CASE("evolve_exact: zero coupling leaves the sensor untouched") {
  NucleusSpec spec;
  spec.couplings = ArrayXd::Constant(2, 0.4);
  spec.larmor = ArrayXd::LinSpaced(2, 1.0, 1.5);
  const SpinEnsembleState initial = make_initial_state(2);
  const ExactRunResult run =
      evolve_exact(initial, spec, Interaction::Sensing, 0.0, 0.1, 20, {});
  CHECK((run.prob_z - 1.0).abs().maxCoeff() < 1e-12);
  CHECK((run.purity - 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("evolve_exact: single shot without reset matches the two-spin closed forms") {
  const double g = 0.6, tau = 0.13, d1 = 2.4, d2 = 1.9;
  NucleusSpec spec;
  spec.couplings = ArrayXd::Constant(2, g);
  spec.larmor = ArrayXd(2);
  spec.larmor << d1, d2;
  const SpinEnsembleState initial = make_initial_state(2);
  ExactRunOptions opts;
  opts.reset = ResetMode::None;

  for (const Interaction interaction : {Interaction::Sensing, Interaction::FlipFlop}) {
    const ExactRunResult run = evolve_exact(initial, spec, interaction, 1.0, tau, 1, opts);
    // After one precession window the nuclei sit at t = tau.
    const double pz = twospin_probability(g, tau, d1, d2, tau, interaction, TwoSpinBasis::Z);
    const double px = twospin_probability(g, tau, d1, d2, tau, interaction, TwoSpinBasis::X);
    CHECK(run.prob_z[0] == doctest::Approx(pz).epsilon(1e-8));
    CHECK(run.prob_x[0] == doctest::Approx(px).epsilon(1e-8));
    CHECK(run.final_state.amplitudes.norm() == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("evolve_exact: norm stays within 1e-10 over many steps") {
  NucleusSpec spec;
  spec.couplings = ArrayXd::Constant(3, 0.7);
  spec.larmor = ArrayXd::LinSpaced(3, 0.8, 1.9);
  const SpinEnsembleState initial = make_initial_state(3);
  ExactRunOptions opts;
  opts.reset = ResetMode::None;
  const ExactRunResult run =
      evolve_exact(initial, spec, Interaction::FlipFlop, 1.0, 0.21, 400, opts);
  CHECK(std::abs(run.final_state.amplitudes.norm() - 1.0) < 1e-10);
}

TEST_CASE("evolve_exact: flip-flop polarizes the nuclei, sensing dephases the sensor") {
  NucleusSpec spec;
  spec.couplings = ArrayXd::Constant(2, 1.0);
  spec.larmor = ArrayXd(2);
  spec.larmor << 1.3, 1.1;
  const SpinEnsembleState initial = make_initial_state(2);
  const double tau = 0.1;  // g tau = 0.1
  const Index steps = 1500;

  const ExactRunResult ff =
      evolve_exact(initial, spec, Interaction::FlipFlop, 1.0, tau, steps, {});
  const ExactRunResult sensing =
      evolve_exact(initial, spec, Interaction::Sensing, 1.0, tau, steps, {});

  // Polarization transfer: monotone growth toward the dark fully-up state.
  CHECK(ff.polarization[0] < 0.1);
  CHECK(ff.polarization[steps - 1] > 0.9);
  int decreases = 0;
  for (Index n = 1; n < steps; ++n)
    if (ff.polarization[n] < ff.polarization[n - 1] - 1e-9) ++decreases;
  CHECK(decreases < steps / 20);

  // Once polarized, the flip-flop sensor stays pure; the sensing sensor keeps
  // entangling with the (never polarizing) nuclei.
  CHECK(ff.purity[steps - 1] > 1.0 - 1e-6);
  CHECK(sensing.purity[steps - 1] < 1.0 - 1e-3);
  CHECK(std::abs(sensing.polarization[steps - 1]) < 0.05);
}

TEST_CASE("evolve_exact: stochastic mode is deterministic under a seed") {
  NucleusSpec spec;
  spec.couplings = ArrayXd::Constant(2, 0.9);
  spec.larmor = ArrayXd(2);
  spec.larmor << 1.0, 1.4;
  const SpinEnsembleState initial = make_initial_state(2);
  ExactRunOptions opts;
  opts.reset = ResetMode::Stochastic;
  opts.seed = 909;
  const ExactRunResult a = evolve_exact(initial, spec, Interaction::Sensing, 1.0, 0.3, 50, opts);
  const ExactRunResult b = evolve_exact(initial, spec, Interaction::Sensing, 1.0, 0.3, 50, opts);
  CHECK((a.prob_z == b.prob_z).all());
  CHECK((a.final_state.amplitudes.array() == b.final_state.amplitudes.array()).all());
}

TEST_CASE("evolve_exact: input validation") {
  NucleusSpec spec;
  spec.couplings = ArrayXd::Constant(2, 1.0);
  spec.larmor = ArrayXd::Constant(2, 1.0);
  CHECK_THROWS_AS(make_initial_state(13), std::invalid_argument);
  const SpinEnsembleState wrong = make_initial_state(3);
  CHECK_THROWS_AS(evolve_exact(wrong, spec, Interaction::Sensing, 1.0, 0.1, 5, {}),
                  std::invalid_argument);
  const SpinEnsembleState ok = make_initial_state(2);
  ExactRunOptions opts;
  opts.common_shift = ArrayXd::Zero(3);  // shorter than the run
  CHECK_THROWS_AS(evolve_exact(ok, spec, Interaction::Sensing, 1.0, 0.1, 5, opts),
                  std::invalid_argument);
}

TEST_CASE("evolve_exact: zero common shift reproduces the unshifted run bitwise") {
  NucleusSpec spec;
  spec.couplings = ArrayXd::Constant(2, 0.8);
  spec.larmor = ArrayXd(2);
  spec.larmor << 2.0, 1.7;
  const SpinEnsembleState initial = make_initial_state(2);
  ExactRunOptions with_shift;
  with_shift.common_shift = ArrayXd::Zero(30);
  const ExactRunResult a =
      evolve_exact(initial, spec, Interaction::FlipFlop, 1.0, 0.15, 30, {});
  const ExactRunResult b =
      evolve_exact(initial, spec, Interaction::FlipFlop, 1.0, 0.15, 30, with_shift);
  CHECK((a.prob_z == b.prob_z).all());
  CHECK((a.purity == b.purity).all());
}

TEST_CASE("evolve_exact: co-evolution agrees with frozen shots for slow precession") {
  NucleusSpec spec;
  spec.couplings = ArrayXd::Constant(2, 0.5);
  spec.larmor = ArrayXd(2);
  spec.larmor << 0.02, 0.015;  // delta * tau = O(1e-3)
  const SpinEnsembleState initial = make_initial_state(2);
  ExactRunOptions frozen;
  ExactRunOptions co;
  co.co_evolve = true;
  const ExactRunResult a =
      evolve_exact(initial, spec, Interaction::Sensing, 1.0, 0.1, 40, frozen);
  const ExactRunResult b = evolve_exact(initial, spec, Interaction::Sensing, 1.0, 0.1, 40, co);
  CHECK((a.prob_z - b.prob_z).abs().maxCoeff() < 1e-3);
}
