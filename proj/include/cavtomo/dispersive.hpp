#pragma once

// Dispersive atom-field phase shift beyond the linear approximation.
//
// A two-level atom crossing the cavity with detuning delta and vacuum Rabi
// frequency Omega accumulates, per dressed-state light shift, the phase
//
//   Phi(n) = (t_eff / 2) * ( sqrt(w_d^2 + w_o^2 (n+1)) - w_d ),
//
// with w_d = 2 pi delta, w_o = 2 pi Omega and t_eff the effective
// interaction time.  Phi is exactly linear in n only for w_o^2 (n+1) << w_d^2;
// the curvature matters at the detunings used here and is kept throughout.

#include <cmath>
#include <stdexcept>
#include <string>

#include "cavtomo/fock.hpp"

namespace cavtomo {

struct DispersiveParams {
  double omega_hz = 0.0;  // vacuum Rabi frequency Omega (Hz, cycles)
  double delta_hz = 0.0;  // atom-cavity detuning delta (Hz, cycles)
  double t_eff_s = 0.0;   // effective interaction time (s)

  void validate() const {
    if (!(omega_hz > 0.0))
      throw std::invalid_argument("DispersiveParams: omega_hz must be positive");
    if (delta_hz == 0.0)
      throw std::invalid_argument("DispersiveParams: delta_hz must be nonzero");
    if (!(t_eff_s > 0.0))
      throw std::invalid_argument("DispersiveParams: t_eff_s must be positive");
  }
};

// Phi(n).  n is continuous so the same expression serves slope anchors at
// non-integer mean photon numbers.
inline double phase_shift(double n, const DispersiveParams& p) {
  p.validate();
  if (n < 0.0) throw std::invalid_argument("phase_shift: n must be >= 0");
  const double wd = 2.0 * kPi * p.delta_hz;
  const double wo = 2.0 * kPi * p.omega_hz;
  return 0.5 * p.t_eff_s * (std::sqrt(wd * wd + wo * wo * (n + 1.0)) - wd);
}

// dPhi/dn, analytic.
inline double phase_slope(double n, const DispersiveParams& p) {
  p.validate();
  if (n < 0.0) throw std::invalid_argument("phase_slope: n must be >= 0");
  const double wd = 2.0 * kPi * p.delta_hz;
  const double wo = 2.0 * kPi * p.omega_hz;
  return 0.25 * p.t_eff_s * wo * wo / std::sqrt(wd * wd + wo * wo * (n + 1.0));
}

// diag(Phi(0), ..., Phi(D-1)) as a complex matrix.
inline ComplexMatrix phase_operator(const DispersiveParams& p, Index dim) {
  p.validate();
  if (dim < 1) throw std::invalid_argument("phase_operator: dim must be >= 1");
  ComplexMatrix phi = ComplexMatrix::Zero(dim, dim);
  for (Index n = 0; n < dim; ++n) phi(n, n) = phase_shift(double(n), p);
  return phi;
}

// Target slope at a reference photon number; used to pin t_eff.
struct SlopeAnchor {
  double delta_hz = 0.0;
  double n = 0.0;
  double slope_rad = 0.0;  // desired dPhi/dn at n
};

// Solve phase_slope(anchor.n) = anchor.slope_rad for t_eff; linear in t_eff,
// so the inversion is closed-form.  omega is taken from `base`, delta from
// the anchor.
inline DispersiveParams calibrate_teff(const SlopeAnchor& anchor,
                                       const DispersiveParams& base) {
  if (!(base.omega_hz > 0.0))
    throw std::invalid_argument("calibrate_teff: omega_hz must be positive");
  if (anchor.delta_hz == 0.0)
    throw std::invalid_argument("calibrate_teff: anchor delta_hz must be nonzero");
  if (!(anchor.slope_rad > 0.0))
    throw std::invalid_argument("calibrate_teff: target slope must be positive");
  if (anchor.n < 0.0)
    throw std::invalid_argument("calibrate_teff: anchor n must be >= 0");
  const double wd = 2.0 * kPi * anchor.delta_hz;
  const double wo = 2.0 * kPi * base.omega_hz;
  DispersiveParams out = base;
  out.delta_hz = anchor.delta_hz;
  out.t_eff_s = 4.0 * anchor.slope_rad *
                std::sqrt(wd * wd + wo * wo * (anchor.n + 1.0)) / (wo * wo);
  return out;
}

}  // namespace cavtomo
