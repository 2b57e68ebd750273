#pragma once

// Field state preparation.
//
// Fock states are carved out of a small coherent field by repeated
// dispersive probes: each atom applies the diagonal Ramsey Kraus pair, the
// outcome steers the population distribution, and the sequence stops once a
// single photon number holds enough weight.  Optionally the cavity relaxes
// for one atom interval between probes.
//
// Cats are superpositions of two coherent components beta e^{+-i chi}.  The
// ideal form builds them directly; the exact_nonlinear form instead applies
// the physical probe Kraus operators (e^{+i Phi(N)/2} +- e^{-i Phi(N)/2})/2
// to the coherent field, which reproduces the component distortion caused by
// the curvature of Phi.

#include <cmath>
#include <cstdint>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <vector>

#include "cavtomo/cat.hpp"
#include "cavtomo/dynamics.hpp"
#include "cavtomo/fock.hpp"
#include "cavtomo/measurement.hpp"
#include "cavtomo/rng.hpp"

namespace cavtomo {

struct QndPlan {
  std::vector<double> phi_set;  // Ramsey phases, cycled over the probe train
  DispersiveParams dispersive;
  int max_atoms = 60;
  double threshold = 0.9;  // stop when one population exceeds this
  std::optional<CavityParams> damping;  // relax between probes when set
  double atom_interval_s = 5e-4;        // one detected probe per 0.5 ms

  void validate() const {
    if (phi_set.empty()) throw std::invalid_argument("QndPlan: empty phase set");
    dispersive.validate();
    if (max_atoms < 1) throw std::invalid_argument("QndPlan: max_atoms must be >= 1");
    if (!(threshold > 0.0) || threshold > 1.0)
      throw std::invalid_argument("QndPlan: threshold must be in (0, 1]");
    if (damping) {
      damping->validate();
      if (!(atom_interval_s > 0.0))
        throw std::invalid_argument("QndPlan: atom_interval_s must be positive");
    }
  }
};

struct QndStep {
  bool excited = false;  // probe detected in e
  FieldState state;      // field after collapse (and interleaved damping)
};

struct QndResult {
  bool converged = false;
  Index n0 = 0;  // dominant photon number at the end
  FieldState state;
  std::vector<QndStep> trajectory;
};

// Project toward a Fock state with a train of stochastic probe readouts.
// The readout is quantum nondemolition: collapse only reweights the photon
// number distribution, so a converged run sits on a near-Fock state.
inline QndResult qnd_project(const FieldState& initial, const QndPlan& plan,
                             std::uint64_t seed) {
  plan.validate();
  const Index d = initial.dim();
  Xoshiro256pp rng(seed);

  auto peak = [](const FieldState& s, Index& at) {
    const RealVector pop = s.populations();
    at = 0;
    for (Index n = 1; n < s.dim(); ++n)
      if (pop(n) > pop(at)) at = n;
    return pop(at);
  };

  QndResult out{false, 0, initial, {}};
  if (peak(out.state, out.n0) > plan.threshold) {
    out.converged = true;
    return out;
  }

  for (int k = 0; k < plan.max_atoms; ++k) {
    const double phi = plan.phi_set[k % plan.phi_set.size()];
    const RamseyKraus kraus = ramsey_kraus(phi, plan.dispersive, d);
    const RealVector pop = out.state.populations();
    double p_e = 0.0;
    for (Index n = 0; n < d; ++n) {
      const double c = kraus.m_e(n, n).real();
      p_e += c * c * pop(n);
    }
    p_e = std::clamp(p_e, 0.0, 1.0);
    const bool excited = rng.bernoulli(p_e);
    const double p = excited ? p_e : 1.0 - p_e;
    if (p < 1e-12)
      throw std::runtime_error("qnd_project: vanishing outcome probability");
    ComplexMatrix m = out.state.matrix();
    for (Index n = 0; n < d; ++n)
      for (Index j = 0; j < d; ++j) {
        const double mn = (excited ? kraus.m_e : kraus.m_g)(n, n).real();
        const double mj = (excited ? kraus.m_e : kraus.m_g)(j, j).real();
        m(n, j) *= mn * mj / p;
      }
    FieldState collapsed{std::move(m)};
    if (plan.damping)
      collapsed = lindblad_evolve(collapsed, plan.atom_interval_s, *plan.damping);
    out.state = collapsed;
    out.trajectory.push_back({excited, collapsed});
    if (peak(out.state, out.n0) > plan.threshold) {
      out.converged = true;
      return out;
    }
  }
  peak(out.state, out.n0);
  return out;
}

// Build a cat state.  tail_bound limits the coherent weight lost to the
// truncation, exactly as for coherent_state.
inline FieldState prepare_cat(const CatSpec& spec, const DispersiveParams& p,
                              Index dim, double tail_bound = 1e-3) {
  spec.validate();
  if (dim < 2) throw std::invalid_argument("prepare_cat: dim must be >= 2");

  auto checked_raw = [&](Complex amp) {
    ComplexVector c = coherent_amplitudes_raw(amp, dim);
    const double tail = 1.0 - c.squaredNorm();
    if (tail > tail_bound)
      throw std::invalid_argument(
          "prepare_cat: truncated tail weight " + std::to_string(tail) +
          " exceeds bound " + std::to_string(tail_bound) + "; increase dim");
    return c;
  };

  auto normalized_density = [](ComplexVector psi) {
    const double n2 = psi.squaredNorm();
    if (n2 < 1e-12)
      throw std::runtime_error("prepare_cat: degenerate superposition");
    psi /= std::sqrt(n2);
    return FieldState((psi * psi.adjoint()).eval());
  };

  ComplexVector comp_even, comp_odd;
  if (spec.exact_nonlinear) {
    p.validate();
    // the probe splits the mean field |beta> with the full phase profile;
    // chi should match half the Ramsey slope at n_m = |beta|^2
    const double implied = chi_from_slope(std::norm(spec.beta), p);
    if (std::abs(implied - spec.chi) > 0.05 * std::abs(spec.chi))
      std::cerr << "prepare_cat: chi = " << spec.chi
                << " differs from the slope-implied value " << implied << "\n";
    ComplexVector base = checked_raw(spec.beta);
    comp_even.resize(dim);
    comp_odd.resize(dim);
    for (Index n = 0; n < dim; ++n) {
      const double half = 0.5 * phase_shift(double(n), p);
      comp_even(n) = std::cos(half) * base(n);
      comp_odd(n) = Complex(0.0, 1.0) * std::sin(half) * base(n);
    }
  } else {
    const ComplexVector c1 =
        checked_raw(spec.beta * std::exp(Complex(0.0, spec.chi)));
    const ComplexVector c2 =
        checked_raw(spec.beta * std::exp(Complex(0.0, -spec.chi)));
    comp_even = c1 + c2;
    comp_odd = c1 - c2;
  }

  switch (spec.parity) {
    case CatParity::even:
      return normalized_density(comp_even);
    case CatParity::odd:
      return normalized_density(comp_odd);
    case CatParity::mixture: {
      const FieldState even = normalized_density(comp_even);
      const FieldState odd = normalized_density(comp_odd);
      return FieldState(0.5 * (even.matrix() + odd.matrix()));
    }
  }
  throw std::logic_error("prepare_cat: unknown parity");
}

}  // namespace cavtomo
