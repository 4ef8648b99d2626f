#include "nvnmr/quantum.hpp"

#include <cmath>
#include <stdexcept>

#include "nvnmr/rng.hpp"

namespace nvnmr {

namespace {

using Complex = std::complex<double>;

constexpr Complex kI{0.0, 1.0};

Eigen::Matrix2cd pauli_x() {
  Eigen::Matrix2cd m;
  m << 0, 1, 1, 0;
  return m;
}

Eigen::Matrix2cd pauli_y() {
  Eigen::Matrix2cd m;
  m << 0, -kI, kI, 0;
  return m;
}

MatrixXcd kron(const MatrixXcd& a, const MatrixXcd& b) {
  MatrixXcd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

// Operator acting on one qubit of an n-qubit register, qubit 0 most
// significant (the sensor).
MatrixXcd op_on_qubit(const Eigen::Matrix2cd& op, int qubit, int n_qubits) {
  MatrixXcd out = MatrixXcd::Identity(1, 1);
  for (int q = 0; q < n_qubits; ++q) {
    if (q == qubit)
      out = kron(out, op);
    else
      out = kron(out, MatrixXcd::Identity(2, 2));
  }
  return out;
}

MatrixXcd interaction_hamiltonian(const NucleusSpec& spec, Interaction interaction,
                                  double g_global) {
  const int m = static_cast<int>(spec.size());
  const int n_qubits = m + 1;
  const Index dim = Index{1} << n_qubits;
  MatrixXcd h = MatrixXcd::Zero(dim, dim);
  const MatrixXcd sx = op_on_qubit(pauli_x(), 0, n_qubits);
  const MatrixXcd sy = op_on_qubit(pauli_y(), 0, n_qubits);
  for (int k = 0; k < m; ++k) {
    const double g = g_global * spec.couplings[k];
    const MatrixXcd ix = op_on_qubit(pauli_x(), k + 1, n_qubits);
    if (interaction == Interaction::Sensing) {
      h += g * sx * ix;
    } else {
      const MatrixXcd iy = op_on_qubit(pauli_y(), k + 1, n_qubits);
      h += g / std::sqrt(2.0) * (sx * ix + sy * iy);
    }
  }
  return h;
}

// Free precession: each nucleus rotates by delta_m per unit time about z,
// i.e. exp(+i (delta_m/2) sigma_z tau) per nucleus, which carries
// |+x> -> cos(delta tau/2)|+x> + i sin(delta tau/2)|-x>.
ArrayXcd precession_diagonal(const NucleusSpec& spec, double tau, double shift,
                             bool include_sensor_dim) {
  const int m = static_cast<int>(spec.size());
  const Index nuc_dim = Index{1} << m;
  ArrayXcd diag(nuc_dim);
  for (Index j = 0; j < nuc_dim; ++j) {
    double phase = 0.0;
    for (int k = 0; k < m; ++k) {
      const bool down = (j >> (m - 1 - k)) & 1;
      phase += 0.5 * (spec.larmor[k] + shift) * tau * (down ? -1.0 : 1.0);
    }
    diag[j] = std::exp(kI * phase);
  }
  if (!include_sensor_dim) return diag;
  ArrayXcd full(2 * nuc_dim);
  full << diag, diag;
  return full;
}

MatrixXcd unitary_from_hamiltonian(const MatrixXcd& h, double tau) {
  const Eigen::SelfAdjointEigenSolver<MatrixXcd> solver(h);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("evolve_exact: eigendecomposition failed");
  const ArrayXcd phases = (-kI * tau * solver.eigenvalues().array()).exp();
  return solver.eigenvectors() * phases.matrix().asDiagonal() *
         solver.eigenvectors().adjoint();
}

double mean_sigma_z(const MatrixXcd& rho_nuc, int m) {
  double total = 0.0;
  for (Index j = 0; j < rho_nuc.rows(); ++j) {
    double z = 0.0;
    for (int k = 0; k < m; ++k) z += ((j >> (m - 1 - k)) & 1) ? -1.0 : 1.0;
    total += z * rho_nuc(j, j).real();
  }
  return total / static_cast<double>(m);
}

}  // namespace

SpinEnsembleState make_initial_state(int n_nuclei) {
  if (n_nuclei < 1 || n_nuclei > kMaxNuclei)
    throw std::invalid_argument("make_initial_state: need 1..12 nuclei");
  const Index nuc_dim = Index{1} << n_nuclei;
  SpinEnsembleState state;
  state.n_nuclei = n_nuclei;
  state.amplitudes = VectorXcd::Zero(2 * nuc_dim);
  // |+x>^M in the z product basis is uniform; sensor |up_z> is the upper block.
  const double amp = std::pow(2.0, -0.5 * n_nuclei);
  state.amplitudes.head(nuc_dim).setConstant(Complex(amp, 0.0));
  return state;
}

std::complex<double> coherence_closed_form(Index n_atoms, double g, double tau,
                                           double delta, double t) {
  if (n_atoms < 1) throw std::invalid_argument("coherence_closed_form: N must be >= 1");
  const Complex base =
      std::cos(2.0 * g * tau) - kI * std::sin(2.0 * g * tau) * std::cos(delta * t);
  return 0.5 * std::pow(base, static_cast<double>(n_atoms));
}

double twospin_probability(double g, double tau, double delta1, double delta2, double t,
                           Interaction interaction, TwoSpinBasis basis) {
  const double th = g * tau;
  const double c1 = std::cos(delta1 * t);
  const double c2 = std::cos(delta2 * t);
  if (interaction == Interaction::FlipFlop) {
    if (basis == TwoSpinBasis::Z) {
      const double s2 = std::sin(2.0 * th);
      return 0.25 * (3.0 + std::cos(4.0 * th) - s2 * s2 * std::cos((delta1 - delta2) * t));
    }
    const double c = std::cos(th);
    return 0.5 + std::sin(th) * c * c * c * (c1 + c2) / std::sqrt(2.0);
  }
  if (basis == TwoSpinBasis::Z) {
    const double s2 = std::sin(2.0 * th);
    return 0.25 * (3.0 + std::cos(4.0 * th)) - 0.5 * s2 * s2 * c1 * c2;
  }
  return 0.5 + 0.25 * std::sin(4.0 * th) * (c1 + c2);
}

double collective_phase(const NucleusSpec& spec, double tau, double t) {
  double sum = 0.0;
  for (Index k = 0; k < spec.size(); ++k)
    sum += spec.couplings[k] * tau * std::cos(spec.larmor[k] * t);
  return sum;
}

double multinucleus_readout(const NucleusSpec& spec, double tau, double t,
                            ReadoutBasis basis) {
  const double u = collective_phase(spec, tau, t);
  if (basis == ReadoutBasis::Y) return 0.5 + 0.5 * std::sin(2.0 * u);
  return 0.5 + 0.5 * std::cos(2.0 * u);
}

ExactRunResult evolve_exact(const SpinEnsembleState& initial, const NucleusSpec& spec,
                            Interaction interaction, double g_global, double tau,
                            Index steps, const ExactRunOptions& opts) {
  const int m = static_cast<int>(spec.size());
  if (m < 1 || m > kMaxNuclei)
    throw std::invalid_argument("evolve_exact: dimension overflow (need 1..12 nuclei)");
  if (initial.n_nuclei != m || initial.dim() != (Index{2} << m))
    throw std::invalid_argument("evolve_exact: state dimension does not match spec");
  if (opts.common_shift.size() != 0 && opts.common_shift.size() < steps)
    throw std::invalid_argument("evolve_exact: common_shift must cover every shot");
  const bool shifted = opts.common_shift.size() != 0;
  if (opts.co_evolve && shifted)
    throw std::invalid_argument("evolve_exact: co_evolve does not support per-shot shifts");

  const Index nuc_dim = Index{1} << m;

  MatrixXcd h = interaction_hamiltonian(spec, interaction, g_global);
  if (opts.co_evolve) {
    // Precession folded into the shot propagator; sign chosen to match the
    // +i delta/2 free-precession convention.
    for (int k = 0; k < m; ++k) {
      Eigen::Matrix2cd sz;
      sz << 1, 0, 0, -1;
      h -= 0.5 * spec.larmor[k] * op_on_qubit(sz, k + 1, m + 1);
    }
  }
  const MatrixXcd u_full = unitary_from_hamiltonian(h, tau);
  // Sensor-block decomposition: K_b maps the nuclear state given sensor
  // |up_z> in and |b_z> out.
  const MatrixXcd u00 = u_full.topLeftCorner(nuc_dim, nuc_dim);
  const MatrixXcd u10 = u_full.bottomLeftCorner(nuc_dim, nuc_dim);
  const MatrixXcd u01 = u_full.topRightCorner(nuc_dim, nuc_dim);
  const MatrixXcd u11 = u_full.bottomRightCorner(nuc_dim, nuc_dim);

  ExactRunResult result;
  result.prob_z.resize(steps);
  result.prob_x.resize(steps);
  result.purity.resize(steps);
  result.polarization.resize(steps);

  const bool density_mode = opts.reset == ResetMode::Deterministic;

  // State storage: nuclear density matrix in deterministic-reset mode,
  // otherwise the full pure state vector.
  MatrixXcd rho;
  VectorXcd psi;
  if (density_mode) {
    // Deterministic reset assumes the sensor starts in |up_z>.
    if (initial.amplitudes.tail(nuc_dim).norm() > 1e-12)
      throw std::invalid_argument(
          "evolve_exact: deterministic reset requires the sensor prepared in up_z");
    const VectorXcd nuc0 = initial.amplitudes.head(nuc_dim).normalized();
    rho = nuc0 * nuc0.adjoint();
  } else {
    psi = initial.amplitudes;
  }

  SplitMix64 branch_rng(derive_seed(opts.seed, "measure", 0));
  double time = initial.time;

  for (Index n = 0; n < steps; ++n) {
    const double shift = shifted ? opts.common_shift[n] : 0.0;

    Eigen::Matrix2cd rho_s;
    if (density_mode) {
      MatrixXcd rho_pre = rho;
      if (!opts.co_evolve) {
        const ArrayXcd d = precession_diagonal(spec, tau, shift, false);
        rho_pre = d.matrix().asDiagonal() * rho * d.conjugate().matrix().asDiagonal();
      }
      const MatrixXcd a0 = u00 * rho_pre;
      const MatrixXcd a1 = u10 * rho_pre;
      rho_s(0, 0) = (a0.array() * u00.array().conjugate()).sum();
      rho_s(0, 1) = (a0.array() * u10.array().conjugate()).sum();
      rho_s(1, 0) = std::conj(rho_s(0, 1));
      rho_s(1, 1) = (a1.array() * u10.array().conjugate()).sum();
      // Non-selective reset: trace out the sensor, keep the nuclei.
      rho = u00 * rho_pre * u00.adjoint() + u10 * rho_pre * u10.adjoint();
      const double trace = rho.trace().real();
      if (std::abs(trace - 1.0) > 1e-8)
        throw std::runtime_error("evolve_exact: norm drift beyond 1e-8");
      result.polarization[n] = mean_sigma_z(rho, m);
    } else {
      if (!opts.co_evolve) {
        const ArrayXcd d = precession_diagonal(spec, tau, shift, true);
        psi.array() *= d;
      }
      VectorXcd up = u00 * psi.head(nuc_dim) + u01 * psi.tail(nuc_dim);
      VectorXcd down = u10 * psi.head(nuc_dim) + u11 * psi.tail(nuc_dim);
      rho_s(0, 0) = up.squaredNorm();
      rho_s(1, 1) = down.squaredNorm();
      rho_s(0, 1) = down.dot(up);  // sum_j psi_up[j] conj(psi_down[j])
      rho_s(1, 0) = std::conj(rho_s(0, 1));
      const double norm = std::sqrt(rho_s(0, 0).real() + rho_s(1, 1).real());
      if (std::abs(norm - 1.0) > 1e-8)
        throw std::runtime_error("evolve_exact: norm drift beyond 1e-8");

      if (opts.reset == ResetMode::None) {
        psi.head(nuc_dim) = up;
        psi.tail(nuc_dim) = down;
      } else {  // stochastic collapse and reinitialize
        const double p_up = rho_s(0, 0).real();
        const bool take_up = branch_rng.uniform01() < p_up;
        VectorXcd& branch = take_up ? up : down;
        branch.normalize();
        psi.head(nuc_dim) = branch;
        psi.tail(nuc_dim).setZero();
      }
      { // nuclear polarization of the post-shot state
        double total = 0.0;
        for (Index j = 0; j < nuc_dim; ++j) {
          double z = 0.0;
          for (int k = 0; k < m; ++k) z += ((j >> (m - 1 - k)) & 1) ? -1.0 : 1.0;
          const double w = std::norm(psi[j]) + std::norm(psi[nuc_dim + j]);
          total += z * w;
        }
        result.polarization[n] = total / static_cast<double>(m);
      }
    }

    result.prob_z[n] = rho_s(0, 0).real();
    result.prob_x[n] = 0.5 + rho_s(0, 1).imag();
    result.purity[n] = std::norm(rho_s(0, 0)) + std::norm(rho_s(1, 1)) +
                       2.0 * std::norm(rho_s(0, 1));
    time += tau;
  }

  result.final_state.n_nuclei = m;
  result.final_state.time = time;
  if (!density_mode) result.final_state.amplitudes = psi;
  return result;
}

}  // namespace nvnmr
