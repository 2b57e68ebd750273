#pragma once

// Ramsey interferometry on the cavity field.
//
// One probe atom, prepared in a superposition, crosses the cavity after the
// field has been translated by alpha and is read out with Ramsey phase phi.
// The ideal e/g population difference is the expectation of
//
//   G(alpha, phi) = D(-alpha) cos(Phi(N) + phi) D(alpha),
//
// a bounded Hermitian observable.  Detector imperfections compress the
// fringe by a contrast factor and shift it by an offset; correct_signal
// undoes the affine map and propagates the binomial uncertainty.

#include <cstdint>
#include <stdexcept>
#include <string>

#include "cavtomo/dispersive.hpp"
#include "cavtomo/fock.hpp"
#include "cavtomo/rng.hpp"

namespace cavtomo {

struct MeasurementSetting {
  Complex alpha{0.0, 0.0};  // translation injected before the probe
  double phi = 0.0;         // Ramsey phase
  DispersiveParams dispersive;
  int window_index = 0;  // decoherence window this setting belongs to
};

struct DetectionRecord {
  MeasurementSetting setting;
  long n_e = 0;
  long n_g = 0;
};

struct ImperfectionModel {
  double contrast = 0.8;
  double offset = 0.0;

  void validate() const {
    if (!(contrast > 0.0) || contrast > 1.0)
      throw std::invalid_argument("ImperfectionModel: contrast must be in (0,1]");
    if (std::abs(offset) + contrast > 1.0 + 1e-12)
      throw std::invalid_argument(
          "ImperfectionModel: |offset| + contrast must not exceed 1");
  }
};

// cos(Phi(N) + phi) as a diagonal matrix.
inline ComplexMatrix ramsey_cosine(double phi, const DispersiveParams& p, Index dim) {
  ComplexMatrix c = ComplexMatrix::Zero(dim, dim);
  for (Index n = 0; n < dim; ++n)
    c(n, n) = std::cos(phase_shift(double(n), p) + phi);
  return c;
}

inline ComplexMatrix g_operator(const MeasurementSetting& s, Index dim) {
  const ComplexMatrix dm = displacement_operator(-s.alpha, dim);
  return dm * ramsey_cosine(s.phi, s.dispersive, dim) * dm.adjoint();
}

// Tr[rho G] evaluated as a diagonal sum in the translated frame, avoiding
// the full operator product.
inline double expected_signal(const FieldState& rho, const MeasurementSetting& s) {
  const ComplexMatrix d = displacement_operator(s.alpha, rho.dim());
  const ComplexMatrix moved = d * rho.matrix() * d.adjoint();
  double g = 0.0;
  for (Index n = 0; n < rho.dim(); ++n)
    g += std::cos(phase_shift(double(n), s.dispersive) + s.phi) * moved(n, n).real();
  return g;
}

// Bernoulli detection of n_atoms identical probes against the imperfect
// fringe P_e = (1 + contrast g + offset) / 2.
inline DetectionRecord sample_detections(const FieldState& truth,
                                         const MeasurementSetting& s, long n_atoms,
                                         const ImperfectionModel& imp,
                                         std::uint64_t seed) {
  imp.validate();
  if (n_atoms < 1)
    throw std::invalid_argument("sample_detections: n_atoms must be positive");
  double g = expected_signal(truth, s);
  g = std::clamp(g, -1.0, 1.0);
  const double p_e = 0.5 * (1.0 + imp.contrast * g + imp.offset);
  if (p_e < 0.0 || p_e > 1.0)
    throw std::runtime_error("sample_detections: P_e = " + std::to_string(p_e) +
                             " outside [0,1]");
  Xoshiro256pp rng(seed);
  DetectionRecord rec;
  rec.setting = s;
  for (long k = 0; k < n_atoms; ++k)
    (rng.bernoulli(p_e) ? rec.n_e : rec.n_g) += 1;
  return rec;
}

struct CorrectedSignal {
  double g_hat = 0.0;
  double sigma = 0.0;
};

// Invert the imperfection map on the observed count asymmetry.  The
// uncertainty is the binomial standard error pushed through the affine
// correction; counts are Laplace-smoothed by half an event so degenerate
// records (all e or all g) keep a positive sigma.
inline CorrectedSignal correct_signal(const DetectionRecord& rec,
                                      const ImperfectionModel& imp) {
  imp.validate();
  const long n = rec.n_e + rec.n_g;
  if (n < 1) throw std::invalid_argument("correct_signal: empty record");
  if (rec.n_e < 0 || rec.n_g < 0)
    throw std::invalid_argument("correct_signal: negative counts");
  const double raw = double(rec.n_e - rec.n_g) / double(n);
  CorrectedSignal out;
  out.g_hat = std::clamp((raw - imp.offset) / imp.contrast, -1.0, 1.0);
  const double p_smooth = (double(rec.n_e) + 0.5) / (double(n) + 1.0);
  out.sigma = 2.0 * std::sqrt(p_smooth * (1.0 - p_smooth) / double(n)) / imp.contrast;
  return out;
}

struct RamseyKraus {
  ComplexMatrix m_e;
  ComplexMatrix m_g;
};

// Diagonal Kraus pair of the dispersive Ramsey readout at alpha = 0:
// M_e = cos((Phi(N)+phi)/2), M_g = sin((Phi(N)+phi)/2).  Completeness
// M_e^2 + M_g^2 = 1 holds exactly, and diagonal states are invariant under
// the unconditional map (the probe is quantum nondemolition in N).
inline RamseyKraus ramsey_kraus(double phi, const DispersiveParams& p, Index dim) {
  RamseyKraus k;
  k.m_e = ComplexMatrix::Zero(dim, dim);
  k.m_g = ComplexMatrix::Zero(dim, dim);
  for (Index n = 0; n < dim; ++n) {
    const double half = 0.5 * (phase_shift(double(n), p) + phi);
    k.m_e(n, n) = std::cos(half);
    k.m_g(n, n) = std::sin(half);
  }
  return k;
}

}  // namespace cavtomo
