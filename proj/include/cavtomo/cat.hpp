#pragma once

// Schroedinger cat descriptors.
//
// A cat is a superposition of two coherent components beta e^{+i chi} and
// beta e^{-i chi}.  chi is set by the dispersive interaction: one probe atom
// at mean photon number n_m kicks the field phase by half the per-photon
// Ramsey slope in each dressed branch.  The squared separation
// d^2 = |beta e^{+i chi} - beta e^{-i chi}|^2 = 4 |beta|^2 sin^2 chi controls
// the decoherence rate.

#include <cmath>
#include <complex>
#include <stdexcept>

#include "cavtomo/dispersive.hpp"

namespace cavtomo {

enum class CatParity { even, odd, mixture };

struct CatSpec {
  Complex beta{0.0, 0.0};  // mean amplitude before the phase splitting
  double chi = 0.0;        // half opening angle between the components
  CatParity parity = CatParity::even;
  bool exact_nonlinear = false;  // apply the full dispersive phase profile

  void validate() const {
    if (std::abs(beta) <= 0.0)
      throw std::invalid_argument("CatSpec: beta must be nonzero");
    if (!(chi > 0.0) || chi >= kPi)
      throw std::invalid_argument("CatSpec: chi must lie in (0, pi)");
  }
};

inline double cat_size(const CatSpec& spec) {
  spec.validate();
  const double s = std::sin(spec.chi);
  return 4.0 * std::norm(spec.beta) * s * s;
}

// Component half-angle imprinted by a single probe at mean photon n_m.
inline double chi_from_slope(double n_m, const DispersiveParams& p) {
  if (n_m < 0.0) throw std::invalid_argument("chi_from_slope: n_m must be >= 0");
  return 0.5 * phase_slope(n_m, p);
}

}  // namespace cavtomo
