#pragma once

// Gaussian quadrature rules via Golub-Welsch (eigenvalues of the Jacobi
// matrix of the orthogonal-polynomial recurrence) and a small adaptive
// Simpson integrator.

#include <cmath>
#include <functional>
#include <stdexcept>

#include <Eigen/Dense>

namespace nvnmr {

struct QuadratureRule {
  Eigen::ArrayXd nodes;
  Eigen::ArrayXd weights;
};

namespace detail {

// Nodes are the eigenvalues of the symmetric tridiagonal Jacobi matrix;
// weights are mu0 * (first eigenvector component)^2.
inline QuadratureRule golub_welsch(const Eigen::VectorXd& offdiag, double mu0) {
  const Eigen::Index n = offdiag.size() + 1;
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index k = 0; k + 1 < n; ++k) {
    jacobi(k, k + 1) = offdiag[k];
    jacobi(k + 1, k) = offdiag[k];
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(jacobi);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("golub_welsch: eigensolver failed");
  QuadratureRule rule;
  rule.nodes = solver.eigenvalues().array();
  rule.weights = mu0 * solver.eigenvectors().row(0).transpose().array().square();
  return rule;
}

}  // namespace detail

// Gauss-Hermite rule for weight exp(-x^2) on the real line (physicists'
// convention). E[f(eps)] for eps ~ N(0, sigma) is
// sum_i w_i f(sqrt(2)*sigma*x_i) / sqrt(pi).
inline QuadratureRule gauss_hermite(int order) {
  if (order < 1) throw std::invalid_argument("gauss_hermite: order must be >= 1");
  Eigen::VectorXd b(order - 1);
  for (int k = 1; k < order; ++k) b[k - 1] = std::sqrt(0.5 * k);
  return detail::golub_welsch(b, std::sqrt(M_PI));
}

// Gauss-Legendre rule for weight 1 on [-1, 1].
inline QuadratureRule gauss_legendre(int order) {
  if (order < 1) throw std::invalid_argument("gauss_legendre: order must be >= 1");
  Eigen::VectorXd b(order - 1);
  for (int k = 1; k < order; ++k)
    b[k - 1] = static_cast<double>(k) / std::sqrt(4.0 * k * k - 1.0);
  return detail::golub_welsch(b, 2.0);
}

namespace detail {

inline double adaptive_simpson_step(const std::function<double(double)>& f, double a,
                                    double b, double fa, double fm, double fb,
                                    double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol)
    return left + right + delta / 15.0;
  return adaptive_simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adaptive_simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace detail

// Absolute-tolerance adaptive Simpson quadrature.
inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                               double abs_tol, int max_depth = 40) {
  const double m = 0.5 * (a + b);
  const double fa = f(a);
  const double fm = f(m);
  const double fb = f(b);
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return detail::adaptive_simpson_step(f, a, b, fa, fm, fb, whole, abs_tol, max_depth);
}

}  // namespace nvnmr
