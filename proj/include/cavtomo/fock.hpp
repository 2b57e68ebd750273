#pragma once

// Truncated Fock-space primitives: density matrices, ladder/number/parity
// operators, coherent states, exact displacement operators and fidelities.
//
// Everything lives in a D-dimensional truncation of the oscillator Hilbert
// space.  Operators are dense Eigen matrices; a displacement is computed as
// the exact matrix exponential of the truncated generator, so it is unitary
// by construction even though it differs from the projected infinite-
// dimensional displacement near the truncation edge.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <iostream>
#include <stdexcept>
#include <string>

namespace cavtomo {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;
using Index = Eigen::Index;

inline constexpr double kPi = 3.141592653589793238462643383279502884;

namespace tol {
inline constexpr double hermiticity = 1e-10;
inline constexpr double trace = 1e-9;
inline constexpr double eigenvalue_floor = -1e-9;
}  // namespace tol

// Largest absolute entry of A - A^dagger.
inline double hermiticity_defect(const ComplexMatrix& a) {
  return (a - a.adjoint()).cwiseAbs().maxCoeff();
}

// Re Tr[A B] without forming the product: sum_ij A_ji B_ij.
inline double real_trace_product(const ComplexMatrix& a, const ComplexMatrix& b) {
  return (a.transpose().cwiseProduct(b)).sum().real();
}

inline Complex trace_product(const ComplexMatrix& a, const ComplexMatrix& b) {
  return (a.transpose().cwiseProduct(b)).sum();
}

// A validated density matrix.  Construction enforces hermiticity within
// 1e-10 (then symmetrizes), trace 1 within 1e-9 (then renormalizes) and
// eigenvalues above -1e-9.  Violations throw.
class FieldState {
 public:
  explicit FieldState(ComplexMatrix rho) : rho_(std::move(rho)) {
    if (rho_.rows() != rho_.cols() || rho_.rows() < 1)
      throw std::invalid_argument("FieldState: matrix must be square and non-empty");
    const double defect = hermiticity_defect(rho_);
    if (defect > tol::hermiticity)
      throw std::invalid_argument("FieldState: hermiticity defect " +
                                  std::to_string(defect) + " exceeds 1e-10");
    rho_ = 0.5 * (rho_ + rho_.adjoint().eval());
    const double tr = rho_.trace().real();
    if (std::abs(tr - 1.0) > tol::trace)
      throw std::invalid_argument("FieldState: trace deviates from 1 by " +
                                  std::to_string(tr - 1.0));
    rho_ /= tr;
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(rho_, Eigen::EigenvaluesOnly);
    const double wmin = es.eigenvalues().minCoeff();
    if (wmin < tol::eigenvalue_floor)
      throw std::invalid_argument("FieldState: negative eigenvalue " +
                                  std::to_string(wmin));
  }

  Index dim() const { return rho_.rows(); }
  const ComplexMatrix& matrix() const { return rho_; }
  Complex element(Index n, Index m) const { return rho_(n, m); }
  RealVector populations() const { return rho_.diagonal().real(); }

 private:
  ComplexMatrix rho_;
};

// Annihilation operator, a|n> = sqrt(n)|n-1>.
inline ComplexMatrix annihilation_operator(Index dim) {
  ComplexMatrix a = ComplexMatrix::Zero(dim, dim);
  for (Index n = 1; n < dim; ++n) a(n - 1, n) = std::sqrt(double(n));
  return a;
}

inline ComplexMatrix creation_operator(Index dim) {
  return annihilation_operator(dim).adjoint();
}

inline ComplexMatrix number_operator(Index dim) {
  ComplexMatrix n = ComplexMatrix::Zero(dim, dim);
  for (Index k = 0; k < dim; ++k) n(k, k) = double(k);
  return n;
}

// Photon number parity exp(i pi N) = diag(+1,-1,+1,...).
inline ComplexMatrix parity_operator(Index dim) {
  ComplexMatrix p = ComplexMatrix::Zero(dim, dim);
  for (Index k = 0; k < dim; ++k) p(k, k) = (k % 2 == 0) ? 1.0 : -1.0;
  return p;
}

// Truncated coherent amplitudes c_n = e^{-|b|^2/2} b^n / sqrt(n!), not
// renormalized.  The missing tail weight is 1 - |c|^2.
inline ComplexVector coherent_amplitudes_raw(Complex beta, Index dim) {
  if (dim < 1) throw std::invalid_argument("coherent_amplitudes_raw: dim must be >= 1");
  ComplexVector c(dim);
  c(0) = std::exp(-0.5 * std::norm(beta));
  for (Index n = 1; n < dim; ++n) c(n) = c(n - 1) * beta / std::sqrt(double(n));
  return c;
}

// Normalized coherent state density matrix.  Throws when the truncated tail
// weight exceeds tail_bound.
inline FieldState coherent_state(Complex beta, Index dim, double tail_bound = 1e-3) {
  ComplexVector c = coherent_amplitudes_raw(beta, dim);
  const double weight = c.squaredNorm();
  const double tail = 1.0 - weight;
  if (tail > tail_bound)
    throw std::invalid_argument(
        "coherent_state: truncated tail weight " + std::to_string(tail) +
        " exceeds bound " + std::to_string(tail_bound) + "; increase dim");
  c /= std::sqrt(weight);
  return FieldState(c * c.adjoint());
}

inline FieldState fock_state(Index n, Index dim) {
  if (n < 0 || n >= dim) throw std::invalid_argument("fock_state: n out of range");
  ComplexMatrix rho = ComplexMatrix::Zero(dim, dim);
  rho(n, n) = 1.0;
  return FieldState(std::move(rho));
}

// exp(H) for Hermitian H via eigendecomposition.
inline ComplexMatrix hermitian_exp(const ComplexMatrix& h) {
  const double defect = hermiticity_defect(h);
  if (defect > 1e-8)
    throw std::invalid_argument("hermitian_exp: input not Hermitian, defect " +
                                std::to_string(defect));
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(0.5 * (h + h.adjoint().eval()));
  return es.eigenvectors() *
         es.eigenvalues().array().exp().matrix().asDiagonal() *
         es.eigenvectors().adjoint();
}

// Exact exponential of the truncated displacement generator,
// D(alpha) = exp(alpha a^dag - alpha^* a).  The generator is skew-Hermitian,
// so we diagonalize M = i(alpha a^dag - alpha^* a) and form V e^{-i w} V^dag,
// which is unitary to machine precision.
inline ComplexMatrix displacement_operator(Complex alpha, Index dim) {
  if (dim < 1) throw std::invalid_argument("displacement_operator: dim must be >= 1");
  if (std::norm(alpha) > 0.25 * double(dim))
    std::cerr << "displacement_operator: |alpha|^2 = " << std::norm(alpha)
              << " is large for dim = " << dim << "; truncation artifacts likely\n";
  const ComplexMatrix a = annihilation_operator(dim);
  const Complex i(0.0, 1.0);
  ComplexMatrix m = i * (alpha * a.adjoint() - std::conj(alpha) * a);
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(0.5 * (m + m.adjoint().eval()));
  ComplexVector phases(dim);
  for (Index k = 0; k < dim; ++k) phases(k) = std::exp(-i * es.eigenvalues()(k));
  return es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
}

// rho -> D(alpha) rho D(alpha)^dag.
inline FieldState translate(const FieldState& state, Complex alpha) {
  const ComplexMatrix d = displacement_operator(alpha, state.dim());
  return FieldState(d * state.matrix() * d.adjoint());
}

inline double mean_photon_number(const FieldState& state) {
  double s = 0.0;
  for (Index n = 0; n < state.dim(); ++n) s += double(n) * state.matrix()(n, n).real();
  return s;
}

inline Complex mean_amplitude(const FieldState& state) {
  return trace_product(state.matrix(), annihilation_operator(state.dim()));
}

// Trace norm (sum of singular values).
inline double trace_norm(const ComplexMatrix& a) {
  Eigen::JacobiSVD<ComplexMatrix> svd(a);
  return svd.singularValues().sum();
}

// <psi| rho |psi> for a pure target.
inline double fidelity(const FieldState& rho, const ComplexVector& psi) {
  if (psi.size() != rho.dim())
    throw std::invalid_argument("fidelity: dimension mismatch");
  const double n2 = psi.squaredNorm();
  if (std::abs(n2 - 1.0) > 1e-9)
    throw std::invalid_argument("fidelity: target vector not normalized");
  const double f = (psi.adjoint() * rho.matrix() * psi)(0).real();
  return std::clamp(f, 0.0, 1.0);
}

// Uhlmann fidelity (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2 for general mixed
// states, via two eigendecompositions.
inline double fidelity(const FieldState& rho, const FieldState& sigma) {
  if (rho.dim() != sigma.dim())
    throw std::invalid_argument("fidelity: dimension mismatch");
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(rho.matrix());
  RealVector w = es.eigenvalues().cwiseMax(0.0);
  const ComplexMatrix sqrt_rho = es.eigenvectors() *
                                 w.array().sqrt().matrix().asDiagonal() *
                                 es.eigenvectors().adjoint();
  ComplexMatrix inner = sqrt_rho * sigma.matrix() * sqrt_rho;
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es2(
      0.5 * (inner + inner.adjoint().eval()), Eigen::EigenvaluesOnly);
  double s = 0.0;
  for (Index k = 0; k < rho.dim(); ++k)
    s += std::sqrt(std::max(0.0, es2.eigenvalues()(k)));
  return std::clamp(s * s, 0.0, 1.0);
}

}  // namespace cavtomo
