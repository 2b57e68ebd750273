#pragma once

// Shared test utilities.

#include <cstdint>

#include "cavtomo/fock.hpp"
#include "cavtomo/rng.hpp"

namespace test_helpers {

// Random density matrix with support on the first `support` Fock levels,
// embedded in a dim-dimensional space: rho = G G^dag / Tr with Ginibre G.
inline cavtomo::FieldState random_state(Eigen::Index dim, Eigen::Index support,
                                        std::uint64_t seed) {
  using namespace cavtomo;
  if (support > dim) support = dim;
  Xoshiro256pp rng(seed);
  ComplexMatrix g = ComplexMatrix::Zero(dim, support);
  for (Eigen::Index i = 0; i < support; ++i)
    for (Eigen::Index j = 0; j < support; ++j)
      g(i, j) = Complex(rng.normal(), rng.normal());
  ComplexMatrix rho = g * g.adjoint();
  rho /= rho.trace().real();
  return FieldState(std::move(rho));
}

// Random normalized pure state on the first `support` levels.
inline cavtomo::ComplexVector random_pure(Eigen::Index dim, Eigen::Index support,
                                          std::uint64_t seed) {
  using namespace cavtomo;
  if (support > dim) support = dim;
  Xoshiro256pp rng(seed);
  ComplexVector psi = ComplexVector::Zero(dim);
  for (Eigen::Index i = 0; i < support; ++i)
    psi(i) = Complex(rng.normal(), rng.normal());
  psi /= psi.norm();
  return psi;
}

}  // namespace test_helpers
