#include <catch2/catch_amalgamated.hpp>

#include "cavtomo/dynamics.hpp"
#include "helpers.hpp"

using namespace cavtomo;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {
CavityParams cavity() { return {0.13, 0.05}; }
DispersiveParams params65() { return {49000.0, 65000.0, 6.45282e-5}; }
}  // namespace

TEST_CASE("mean photon number relaxes on the exact exponential", "[dynamics]") {
  // <N>(t) = n0 e^{-t/Tc} + n_b (1 - e^{-t/Tc}) holds exactly for this
  // generator; check far from the truncation edge
  FieldState rho = coherent_state(std::sqrt(2.5), 30);
  const CavityParams cav = cavity();
  for (double t : {0.01, 0.05, 0.13}) {
    FieldState out = lindblad_evolve(rho, t, cav);
    const double decay = std::exp(-t / cav.t_c_s);
    const double expect = 2.5 * decay + cav.n_b * (1.0 - decay);
    CHECK_THAT(mean_photon_number(out), WithinAbs(expect, 1e-6));
    CHECK_THAT(out.matrix().trace().real(), WithinAbs(1.0, 1e-12));
  }
}

TEST_CASE("zero-temperature damping keeps coherent states coherent", "[dynamics]") {
  const Complex alpha(1.5, -0.4);
  FieldState rho = coherent_state(alpha, 25);
  CavityParams cav{0.13, 0.0};
  const double t = 0.06;
  FieldState out = lindblad_evolve(rho, t, cav);
  FieldState expect = coherent_state(rescale_translation(alpha, t, cav), 25);
  CHECK(fidelity(out, expect) > 1.0 - 1e-6);
}

TEST_CASE("long-time limit is the reservoir thermal state", "[dynamics]") {
  CavityParams cav{0.13, 0.05};
  FieldState vac = fock_state(2, 15);
  FieldState out = lindblad_evolve(vac, 1.0, cav);  // ~7.7 damping times
  // thermal populations p_n = nb^n / (1+nb)^{n+1}
  for (Index n = 0; n < 5; ++n) {
    const double p = std::pow(cav.n_b, double(n)) / std::pow(1.0 + cav.n_b, double(n) + 1.0);
    CHECK_THAT(out.populations()(n), WithinAbs(p, 2e-3));
  }
}

TEST_CASE("injected translations commute with damping after rescaling", "[dynamics]") {
  // D(alpha e^{-t/2Tc}) L_t[rho] D+ = L_t[D(alpha) rho D+] for any n_b;
  // support kept low so truncation cannot blur the identity
  auto rho = test_helpers::random_state(15, 4, 3);
  const Complex alpha(0.6, -0.2);
  const CavityParams cav = cavity();
  const double t = 0.01;
  FieldState left = lindblad_evolve(translate(rho, alpha), t, cav);
  FieldState right = translate(lindblad_evolve(rho, t, cav),
                               rescale_translation(alpha, t, cav));
  CHECK(trace_norm(left.matrix() - right.matrix()) < 1e-5);

  // amplitude rescaling halves after 2 Tc ln 2
  const double t_half = 2.0 * cav.t_c_s * std::log(2.0);
  CHECK_THAT(std::abs(rescale_translation(1.0, t_half, cav) - Complex(0.5)),
             WithinAbs(0.0, 1e-12));
  CHECK(rescale_translation(alpha, 0.0, cav) == alpha);
}

TEST_CASE("evolution semigroup property", "[dynamics]") {
  auto rho = test_helpers::random_state(12, 6, 41);
  const CavityParams cav = cavity();
  FieldState two_step = lindblad_evolve(lindblad_evolve(rho, 0.015, cav), 0.025, cav);
  FieldState one_step = lindblad_evolve(rho, 0.040, cav);
  CHECK(trace_norm(two_step.matrix() - one_step.matrix()) < 1e-7);
}

TEST_CASE("twenty damping times reach the thermal mean", "[dynamics]") {
  CavityParams cav{0.05, 0.05};  // shorter Tc keeps the integration cheap
  FieldState start = coherent_state(1.3, 10);
  FieldState out = lindblad_evolve(start, 20.0 * cav.t_c_s, cav);
  CHECK_THAT(mean_photon_number(out), WithinAbs(cav.n_b, 1e-4));
}

TEST_CASE("translated frame double application restores the state", "[dynamics]") {
  const double beta = 1.1, chi = 0.4 * kPi;
  ComplexVector c1 = coherent_amplitudes_raw(beta * std::exp(Complex(0, chi)), 24);
  ComplexVector c2 = coherent_amplitudes_raw(beta * std::exp(Complex(0, -chi)), 24);
  ComplexVector psi = c1 + c2;
  psi /= psi.norm();
  FieldState cat{(psi * psi.adjoint()).eval()};
  CatSpec spec{beta, chi, CatParity::even, false};
  FieldState there = translated_matrix(cat, spec);
  FieldState back = translate(there, spec.beta * std::exp(Complex(0.0, spec.chi)));
  CHECK((back.matrix() - cat.matrix()).cwiseAbs().maxCoeff() < 1e-9);

  // a bare +chi component parks exactly on vacuum
  FieldState comp = coherent_state(beta * std::exp(Complex(0, chi)), 24);
  FieldState parked = translated_matrix(comp, spec);
  CHECK(parked.populations()(0) > 1.0 - 1e-6);
}

TEST_CASE("evolution input validation", "[dynamics]") {
  FieldState vac = fock_state(0, 5);
  CHECK_THROWS_AS(lindblad_evolve(vac, -0.1, cavity()), std::invalid_argument);
  CHECK_THROWS_AS(lindblad_evolve(vac, 0.1, {0.0, 0.05}), std::invalid_argument);
  CHECK_THROWS_AS(lindblad_evolve(vac, 0.1, {0.13, -0.1}), std::invalid_argument);
  // t = 0 is the identity
  FieldState same = lindblad_evolve(vac, 0.0, cavity());
  CHECK((same.matrix() - vac.matrix()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("translated cat frame exposes the component structure", "[dynamics]") {
  // even cat at beta = 1.2, chi = pi/2: components at +-1.2i ... translating
  // by -1.2 e^{i pi/2} parks one component at vacuum and the other at
  // amplitude -2.4i sin(pi/2), a Poisson bump around n = d^2 = 5.76
  const double beta = 1.2, chi = kPi / 2;
  ComplexVector c1 = coherent_amplitudes_raw(beta * std::exp(Complex(0, chi)), 30);
  ComplexVector c2 = coherent_amplitudes_raw(beta * std::exp(Complex(0, -chi)), 30);
  ComplexVector psi = c1 + c2;
  psi /= psi.norm();
  FieldState cat{(psi * psi.adjoint()).eval()};
  CatSpec spec{beta, chi, CatParity::even, false};
  FieldState moved = translated_matrix(cat, spec);
  CHECK(moved.populations()(0) > 0.4);
  Index peak = 3;
  for (Index n = 3; n < 12; ++n)
    if (moved.populations()(n) > moved.populations()(peak)) peak = n;
  CHECK(peak >= 4);
  CHECK(peak <= 7);
  CHECK_THAT(cat_size(spec), WithinAbs(5.76, 1e-12));
}

TEST_CASE("coherence metric sums the far first column", "[dynamics]") {
  ComplexVector psi(8);
  psi << 0.8, 0.1, 0.05, 0.05, 0.1, 0.3, 0.4, 0.2;
  psi /= psi.norm();
  FieldState rho{(psi * psi.adjoint()).eval()};
  double expect = 0.0;
  for (Index n = 5; n < 8; ++n) expect += std::abs(psi(n) * psi(0));
  CHECK_THAT(coherence_metric(rho, 5), WithinAbs(expect, 1e-12));
  CHECK_THROWS_AS(coherence_metric(rho, 8), std::invalid_argument);
}

TEST_CASE("predicted decoherence times from the separation formula", "[dynamics]") {
  // hand values at Tc = 0.13 s: d2 = 11.8, nb = 0.05 -> 0.26/13.18 = 19.727 ms;
  // nb = 0 -> 0.26/11.8 = 22.034 ms; d2 = 8, nb = 0.05 -> 0.26/9.0 = 28.889 ms
  CHECK_THAT(predicted_td(11.8, {0.13, 0.05}), WithinAbs(0.019727, 2e-6));
  CHECK_THAT(predicted_td(11.8, {0.13, 0.0}), WithinAbs(0.022034, 2e-6));
  CHECK_THAT(predicted_td(8.0, {0.13, 0.05}), WithinAbs(0.028889, 2e-6));
  CHECK_THROWS_AS(predicted_td(0.0, cavity()), std::invalid_argument);
}

TEST_CASE("exponential fit recovers noiseless parameters", "[dynamics]") {
  std::vector<SeriesPoint> pts;
  for (double t_ms : {1.0, 3.0, 6.0, 9.0, 13.0, 17.0, 21.0, 25.0}) {
    const double t = t_ms * 1e-3;
    pts.push_back({t, 0.9 * std::exp(-t / 0.0195) + 0.02, 0.0});
  }
  auto fit = fit_exponential_offset(pts);
  CHECK_THAT(fit.t_d_s, WithinRel(0.0195, 1e-6));
  CHECK_THAT(fit.amplitude, WithinRel(0.9, 1e-6));
  CHECK_THAT(fit.offset, WithinAbs(0.02, 1e-6));
  CHECK(fit.t_d_std_s < 1e-6);
}

TEST_CASE("weighted exponential fit with noise", "[dynamics]") {
  Xoshiro256pp rng(17);
  std::vector<SeriesPoint> pts;
  const double sigma = 0.03;
  for (int k = 0; k < 12; ++k) {
    const double t = (1.0 + 2.2 * k) * 1e-3;
    const double y = 0.8 * std::exp(-t / 0.0197) + 0.01 + sigma * rng.normal();
    pts.push_back({t, y, sigma});
  }
  auto fit = fit_exponential_offset(pts);
  CHECK(fit.t_d_std_s > 0.0);
  CHECK(std::abs(fit.t_d_s - 0.0197) < 4.0 * fit.t_d_std_s + 1e-9);
}

TEST_CASE("degenerate series are rejected", "[dynamics]") {
  std::vector<SeriesPoint> flat;
  for (int k = 0; k < 6; ++k) flat.push_back({k * 1e-3, 0.25, 0.0});
  CHECK_THROWS_AS(fit_exponential_offset(flat), std::runtime_error);

  std::vector<SeriesPoint> few = {{0.0, 1.0, 0.0}, {1e-3, 0.5, 0.0}, {2e-3, 0.3, 0.0}};
  CHECK_THROWS_AS(fit_exponential_offset(few), std::invalid_argument);

  std::vector<SeriesPoint> unordered = {
      {0.0, 1.0, 0.0}, {2e-3, 0.5, 0.0}, {1e-3, 0.3, 0.0}, {3e-3, 0.2, 0.0}};
  CHECK_THROWS_AS(fit_exponential_offset(unordered), std::invalid_argument);
}

TEST_CASE("ideal movie frames match direct evolution", "[dynamics]") {
  FieldState rho = coherent_state(Complex(0.9, 0.5), 18);
  const std::vector<double> windows = {0.0013, 0.0043, 0.0158, 0.0229};
  auto frames = decoherence_movie(rho, windows, cavity(), MovieMode::ideal);
  REQUIRE(frames.size() == 4);
  double last_n = mean_photon_number(rho);
  for (std::size_t w = 0; w < 4; ++w) {
    REQUIRE(frames[w].ok);
    REQUIRE(frames[w].state.has_value());
    CHECK_THAT(frames[w].t_s, WithinAbs(windows[w], 1e-15));
    FieldState direct = lindblad_evolve(rho, windows[w], cavity());
    CHECK(trace_norm(frames[w].state->matrix() - direct.matrix()) < 1e-7);
    const double n_now = mean_photon_number(*frames[w].state);
    CHECK(n_now < last_n);
    last_n = n_now;
  }
}

TEST_CASE("measured movie reconstructs each window", "[dynamics]") {
  FieldState rho = coherent_state(1.0, 8);
  MoviePlan plan;
  for (int i = -3; i <= 3; ++i)
    for (int j = -3; j <= 3; ++j)
      plan.settings.push_back({Complex(0.5 * i, 0.5 * j),
                               kPi - phase_shift(0.0, params65()), params65(), 0});
  plan.atoms_per_setting = 6000;
  plan.imperfection = {0.8, 0.0};
  plan.seed = 99;
  const std::vector<double> windows = {0.002, 0.01};
  auto frames =
      decoherence_movie(rho, windows, cavity(), MovieMode::via_measurement, &plan);
  REQUIRE(frames.size() == 2);
  for (std::size_t w = 0; w < 2; ++w) {
    REQUIRE(frames[w].ok);
    FieldState ideal = lindblad_evolve(rho, windows[w], cavity());
    CHECK(fidelity(*frames[w].state, ideal) > 0.95);
  }
}

TEST_CASE("movie at window zero returns the initial state", "[dynamics]") {
  FieldState rho = coherent_state(Complex(0.4, 0.2), 10);
  auto frames = decoherence_movie(rho, {0.0}, cavity(), MovieMode::ideal);
  REQUIRE(frames.size() == 1);
  CHECK((frames[0].state->matrix() - rho.matrix()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("cat coherence decays monotonically under damping", "[dynamics]") {
  const double beta = std::sqrt(3.5), chi = 0.37 * kPi;
  ComplexVector c1 = coherent_amplitudes_raw(beta * std::exp(Complex(0, chi)), 30);
  ComplexVector c2 = coherent_amplitudes_raw(beta * std::exp(Complex(0, -chi)), 30);
  ComplexVector psi = c1 + c2;
  psi /= psi.norm();
  FieldState cat{(psi * psi.adjoint()).eval()};
  CatSpec spec{beta, chi, CatParity::even, false};

  double last = coherence_metric(translated_matrix(cat, spec));
  CHECK(last > 0.1);
  FieldState state = cat;
  for (int k = 0; k < 5; ++k) {
    state = lindblad_evolve(state, 0.004, cavity());
    const double now = coherence_metric(translated_matrix(state, spec));
    CHECK(now < last);
    last = now;
  }

  // the unread-atom mixture has only the e^{-d^2/2} residue
  ComplexVector n1 = c1 / c1.norm(), n2 = c2 / c2.norm();
  FieldState mix{(0.5 * (n1 * n1.adjoint() + n2 * n2.adjoint())).eval()};
  CHECK(coherence_metric(translated_matrix(mix, spec)) < 0.01);
}

TEST_CASE("movie input validation", "[dynamics]") {
  FieldState rho = fock_state(0, 4);
  CHECK_THROWS_AS(decoherence_movie(rho, {}, cavity(), MovieMode::ideal),
                  std::invalid_argument);
  CHECK_THROWS_AS(decoherence_movie(rho, {0.01, 0.01}, cavity(), MovieMode::ideal),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      decoherence_movie(rho, {0.01}, cavity(), MovieMode::via_measurement, nullptr),
      std::invalid_argument);
}
