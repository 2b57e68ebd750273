#include <catch2/catch_amalgamated.hpp>

#include "cavtomo/maxent.hpp"
#include "helpers.hpp"

using namespace cavtomo;
using Catch::Matchers::WithinAbs;

namespace {

DispersiveParams params65() { return {49000.0, 65000.0, 6.45282e-5}; }

// Ramsey settings on a small square grid of translations.
std::vector<MeasurementSetting> grid_settings(double extent, int per_side,
                                              double phi) {
  std::vector<MeasurementSetting> out;
  for (int i = 0; i < per_side; ++i)
    for (int j = 0; j < per_side; ++j) {
      const double x = -extent + 2.0 * extent * i / (per_side - 1);
      const double y = -extent + 2.0 * extent * j / (per_side - 1);
      out.push_back({Complex(x, y), phi, params65(), 0});
    }
  return out;
}

ConstraintSet ideal_constraints(const FieldState& truth,
                                const std::vector<MeasurementSetting>& settings,
                                double sigma) {
  ConstraintSet cs;
  cs.dim = truth.dim();
  for (const auto& s : settings)
    cs.constraints.push_back({g_operator(s, truth.dim()),
                              expected_signal(truth, s), sigma});
  return cs;
}

}  // namespace

TEST_CASE("single parity constraint has a closed-form solution", "[maxent]") {
  // <P> = 0.3 in dim 2 forces rho = diag(0.65, 0.35); hand entropy
  // -(0.65 ln 0.65 + 0.35 ln 0.35) = 0.6474
  ConstraintSet cs;
  cs.dim = 2;
  cs.constraints.push_back({parity_operator(2), 0.3, 0.0});
  ReconstructOptions opts;
  opts.noise_relaxation = false;
  opts.tol = 1e-8;
  auto res = reconstruct(cs, opts);
  REQUIRE(res.converged);
  CHECK_THAT(res.rho.matrix()(0, 0).real(), WithinAbs(0.65, 1e-6));
  CHECK_THAT(res.rho.matrix()(1, 1).real(), WithinAbs(0.35, 1e-6));
  CHECK(std::abs(res.rho.matrix()(0, 1)) < 1e-8);
  CHECK_THAT(res.entropy, WithinAbs(0.6474, 1e-3));
  CHECK(res.residuals[0] < 1e-7);
}

TEST_CASE("commuting projector constraints fill in the remaining weight", "[maxent]") {
  ConstraintSet cs;
  cs.dim = 3;
  ComplexMatrix p0 = ComplexMatrix::Zero(3, 3), p1 = ComplexMatrix::Zero(3, 3);
  p0(0, 0) = 1.0;
  p1(1, 1) = 1.0;
  cs.constraints.push_back({p0, 0.5, 0.0});
  cs.constraints.push_back({p1, 0.3, 0.0});
  ReconstructOptions opts;
  opts.noise_relaxation = false;
  opts.tol = 1e-8;
  auto res = reconstruct(cs, opts);
  REQUIRE(res.converged);
  CHECK_THAT(res.rho.matrix()(0, 0).real(), WithinAbs(0.5, 1e-6));
  CHECK_THAT(res.rho.matrix()(1, 1).real(), WithinAbs(0.3, 1e-6));
  CHECK_THAT(res.rho.matrix()(2, 2).real(), WithinAbs(0.2, 1e-6));
}

TEST_CASE("a complete Hermitian basis pins down a full-rank state", "[maxent]") {
  const Index d = 3;
  auto truth = test_helpers::random_state(d, d, 99);
  ConstraintSet cs;
  cs.dim = d;
  auto add = [&](const ComplexMatrix& g) {
    cs.constraints.push_back({g, real_trace_product(truth.matrix(), g), 0.0});
  };
  for (Index i = 0; i < d; ++i) {
    ComplexMatrix e = ComplexMatrix::Zero(d, d);
    e(i, i) = 1.0;
    add(e);
    for (Index j = i + 1; j < d; ++j) {
      ComplexMatrix re = ComplexMatrix::Zero(d, d), im = ComplexMatrix::Zero(d, d);
      re(i, j) = re(j, i) = 1.0;
      im(i, j) = Complex(0.0, -1.0);
      im(j, i) = Complex(0.0, 1.0);
      add(re);
      add(im);
    }
  }
  ReconstructOptions opts;
  opts.noise_relaxation = false;
  opts.tol = 1e-7;
  auto res = reconstruct(cs, opts);
  REQUIRE(res.converged);
  CHECK((res.rho.matrix() - truth.matrix()).cwiseAbs().maxCoeff() < 1e-4);
  CHECK(fidelity(res.rho, truth) > 1.0 - 1e-5);
  // maximum entropy among compatible states can only exceed the truth's
  CHECK(res.entropy >= entropy_of(truth) - 1e-3);
}

TEST_CASE("phase-space Ramsey settings reconstruct a coherent state", "[maxent]") {
  FieldState truth = coherent_state(1.0, 8);
  auto settings = grid_settings(1.8, 9, kPi - phase_shift(0.0, params65()));
  auto cs = ideal_constraints(truth, settings, 0.0);
  ReconstructOptions opts;
  opts.noise_relaxation = false;
  auto res = reconstruct(cs, opts);
  REQUIRE(res.converged);
  CHECK(fidelity(res.rho, truth) > 0.995);
}

TEST_CASE("relaxed mode absorbs noise that breaks exact feasibility", "[maxent]") {
  FieldState truth = coherent_state(1.0, 8);
  auto settings = grid_settings(1.8, 9, kPi - phase_shift(0.0, params65()));
  const double sigma = 0.02;
  auto cs = ideal_constraints(truth, settings, sigma);
  Xoshiro256pp rng(31);
  for (auto& c : cs.constraints)
    c.value = std::clamp(c.value + sigma * rng.normal(), -1.0, 1.0);
  ReconstructOptions opts;
  opts.noise_relaxation = true;
  auto res = reconstruct(cs, opts);
  REQUIRE(res.converged);
  // the quadratic penalty trades a little fidelity for feasibility
  CHECK(fidelity(res.rho, truth) > 0.96);
}

TEST_CASE("contradictory exact constraints diverge with a hint", "[maxent]") {
  ConstraintSet cs;
  cs.dim = 2;
  cs.constraints.push_back({parity_operator(2), 0.9, 0.1});
  cs.constraints.push_back({parity_operator(2), -0.9, 0.1});
  ReconstructOptions opts;
  opts.noise_relaxation = false;
  auto res = reconstruct(cs, opts);
  CHECK_FALSE(res.converged);
  CHECK(res.message.find("relax") != std::string::npos);

  // the relaxed mode settles on the compromise state near I/2
  opts.noise_relaxation = true;
  auto ok = reconstruct(cs, opts);
  CHECK(ok.converged);
  CHECK_THAT(ok.rho.matrix()(0, 0).real(), WithinAbs(0.5, 1e-3));
}

TEST_CASE("empty constraint set yields the maximally mixed state", "[maxent]") {
  ConstraintSet cs;
  cs.dim = 5;
  auto res = reconstruct(cs);
  CHECK(res.converged);
  CHECK((res.rho.matrix() -
         ComplexMatrix::Identity(5, 5) / 5.0).cwiseAbs().maxCoeff() < 1e-14);
  CHECK_THAT(res.entropy, WithinAbs(std::log(5.0), 1e-12));
}

TEST_CASE("reconstruction is deterministic", "[maxent]") {
  FieldState truth = coherent_state(Complex(0.4, 0.7), 6);
  auto settings = grid_settings(1.2, 5, 0.3);
  auto cs = ideal_constraints(truth, settings, 0.01);
  auto a = reconstruct(cs);
  auto b = reconstruct(cs);
  CHECK(a.iterations == b.iterations);
  CHECK((a.rho.matrix() - b.rho.matrix()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("build_constraints merges duplicate settings and clips", "[maxent]") {
  ImperfectionModel imp{0.8, 0.0};
  MeasurementSetting s1{Complex(0.1, 0.0), 0.2, params65(), 0};
  MeasurementSetting s2{Complex(0.0, 0.3), 0.2, params65(), 0};
  std::vector<DetectionRecord> recs = {
      {s1, 100, 50}, {s2, 10, 90}, {s1, 200, 150}};
  auto cs = build_constraints(recs, 6, imp);
  REQUIRE(cs.constraints.size() == 2);
  // merged counts 300 e / 200 g: raw = 0.2, g_hat = 0.25
  CHECK_THAT(cs.constraints[0].value, WithinAbs(0.25, 1e-12));
  CHECK(cs.constraints[0].sigma > 0.0);
  // all-g record pushed past the contrast window clips to -1
  std::vector<DetectionRecord> extreme = {{s1, 0, 40}};
  auto ce = build_constraints(extreme, 6, imp);
  CHECK(ce.constraints[0].value == -1.0);
}

TEST_CASE("dual at lambda = 0 and against finite differences", "[maxent]") {
  const Index d = 4;
  ConstraintSet cs;
  cs.dim = d;
  Xoshiro256pp rng(55);
  for (int k = 0; k < 5; ++k) {
    ComplexMatrix g = ComplexMatrix::Zero(d, d);
    for (Index i = 0; i < d; ++i)
      for (Index j = 0; j < d; ++j) g(i, j) = Complex(rng.normal(), rng.normal());
    g = 0.5 * (g + g.adjoint().eval());
    cs.constraints.push_back({g, 0.4 * rng.normal(), 0.0});
  }

  // lambda = 0: F = ln D, grad_k = g_k - Tr[G_k]/D
  auto at0 = dual_value_and_gradient(Eigen::VectorXd::Zero(5), cs, false);
  CHECK_THAT(at0.value, WithinAbs(std::log(4.0), 1e-12));
  for (int k = 0; k < 5; ++k)
    CHECK_THAT(at0.gradient(k),
               WithinAbs(cs.constraints[k].value -
                             cs.constraints[k].g_op.trace().real() / 4.0,
                         1e-12));

  // gradient vs central differences at a generic point
  Eigen::VectorXd lam(5);
  lam << 0.3, -0.7, 0.2, 1.1, -0.4;
  auto mid = dual_value_and_gradient(lam, cs, false);
  const double h = 1e-6;
  for (int k = 0; k < 5; ++k) {
    Eigen::VectorXd up = lam, dn = lam;
    up(k) += h;
    dn(k) -= h;
    const double fd = (dual_value_and_gradient(up, cs, false).value -
                       dual_value_and_gradient(dn, cs, false).value) /
                      (2.0 * h);
    CHECK_THAT(mid.gradient(k), Catch::Matchers::WithinRel(fd, 1e-6));
  }

  // convexity along random pairs
  for (int trial = 0; trial < 4; ++trial) {
    Eigen::VectorXd a(5), b(5);
    for (int k = 0; k < 5; ++k) {
      a(k) = rng.normal();
      b(k) = rng.normal();
    }
    const double fa = dual_value_and_gradient(a, cs, false).value;
    const double fb = dual_value_and_gradient(b, cs, false).value;
    const double fm = dual_value_and_gradient(0.5 * (a + b), cs, false).value;
    CHECK(fm <= 0.5 * (fa + fb) + 1e-12);
  }
}

TEST_CASE("extreme constraint drives the state pure", "[maxent]") {
  // G = diag(1,-1), g = 1: rho -> diag(1,0) as tol -> 0
  ConstraintSet cs;
  cs.dim = 2;
  cs.constraints.push_back({parity_operator(2), 1.0, 0.0});
  ReconstructOptions opts;
  opts.noise_relaxation = false;
  opts.tol = 1e-6;
  auto res = reconstruct(cs, opts);
  REQUIRE(res.converged);
  CHECK(res.rho.matrix()(0, 0).real() > 1.0 - 2e-6);
  CHECK(res.entropy < 1e-4);
}

TEST_CASE("adding constraints never raises the entropy", "[maxent]") {
  FieldState truth = coherent_state(Complex(0.6, -0.3), 6);
  auto settings = grid_settings(1.4, 5, 0.8);
  ReconstructOptions opts;
  opts.noise_relaxation = false;
  double previous = std::log(6.0);
  for (std::size_t count : {5, 10, 15, 25}) {
    ConstraintSet cs;
    cs.dim = 6;
    for (std::size_t k = 0; k < count; ++k)
      cs.constraints.push_back({g_operator(settings[k], 6),
                                expected_signal(truth, settings[k]), 0.0});
    auto res = reconstruct(cs, opts);
    REQUIRE(res.converged);
    CHECK(res.entropy <= previous + 1e-6);
    previous = res.entropy;
  }
}

TEST_CASE("entropy helper closed forms", "[maxent]") {
  CHECK_THAT(entropy_of(fock_state(2, 5)), WithinAbs(0.0, 1e-12));
  CHECK_THAT(entropy_of(FieldState(ComplexMatrix::Identity(7, 7) / 7.0)),
             WithinAbs(std::log(7.0), 1e-12));
  ComplexMatrix half = ComplexMatrix::Zero(2, 2);
  half(0, 0) = half(1, 1) = 0.5;
  CHECK_THAT(entropy_of(FieldState(half)), WithinAbs(std::log(2.0), 1e-12));
}

TEST_CASE("bootstrap width shrinks with the atom budget", "[maxent]") {
  FieldState truth = coherent_state(0.8, 6);
  ImperfectionModel imp{0.8, 0.0};
  auto settings = grid_settings(1.5, 5, kPi - phase_shift(0.0, params65()));
  auto run = [&](long atoms, std::uint64_t seed) {
    std::vector<DetectionRecord> recs;
    int idx = 0;
    for (const auto& s : settings)
      recs.push_back(sample_detections(
          truth, s, atoms, imp, derive_seed(seed, "meas", {std::uint64_t(idx++)})));
    ReconstructOptions opts;
    return bootstrap_errorbars(
        recs, 6, imp, opts,
        [&](const FieldState& r) { return fidelity(r, truth); }, 6, 77);
  };
  auto narrow = run(16000, 4);
  auto wide = run(1000, 4);
  CHECK(wide.std > narrow.std);

  // single resample: std = 0 by convention
  std::vector<DetectionRecord> one = {
      sample_detections(truth, settings[0], 500, imp, 9)};
  ReconstructOptions opts;
  auto single = bootstrap_errorbars(
      one, 6, imp, opts, [](const FieldState& r) { return mean_photon_number(r); },
      1, 5);
  CHECK(single.std == 0.0);
  CHECK(single.n_failed == 0);
}

TEST_CASE("validation of malformed constraint sets", "[maxent]") {
  ConstraintSet cs;
  cs.dim = 3;
  ComplexMatrix bad = ComplexMatrix::Zero(3, 3);
  bad(0, 1) = 1.0;  // not Hermitian
  cs.constraints.push_back({bad, 0.0, 0.0});
  CHECK_THROWS_AS(reconstruct(cs), std::invalid_argument);

  ConstraintSet mis;
  mis.dim = 4;
  mis.constraints.push_back({parity_operator(3), 0.0, 0.0});
  CHECK_THROWS_AS(reconstruct(mis), std::invalid_argument);

  ConstraintSet neg;
  neg.dim = 3;
  neg.constraints.push_back({parity_operator(3), 0.0, -0.1});
  CHECK_THROWS_AS(reconstruct(neg), std::invalid_argument);
}

TEST_CASE("bootstrap error bars on a small scenario", "[maxent]") {
  FieldState truth = coherent_state(0.8, 6);
  ImperfectionModel imp{0.8, 0.0};
  auto settings = grid_settings(1.5, 7, kPi - phase_shift(0.0, params65()));
  std::vector<DetectionRecord> recs;
  int idx = 0;
  for (const auto& s : settings)
    recs.push_back(sample_detections(truth, s, 5000, imp,
                                     derive_seed(11, "meas", {std::uint64_t(idx++)})));
  ReconstructOptions opts;
  auto stats = bootstrap_errorbars(
      recs, 6, imp, opts, [](const FieldState& r) { return mean_photon_number(r); },
      8, 2024);
  CHECK(stats.n_failed == 0);
  CHECK(stats.std > 0.0);
  CHECK(stats.std < 0.2);
  CHECK(std::abs(stats.mean - 0.64) < 0.2);  // |beta|^2 = 0.64
}
