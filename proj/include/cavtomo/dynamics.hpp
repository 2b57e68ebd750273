#pragma once

// Cavity relaxation and decoherence analysis.
//
// The field couples to a thermal reservoir at occupancy n_b with energy
// damping time T_c:
//
//   drho/dt = (1/T_c) [ (1+n_b) (a rho a+ - {a+a, rho}/2)
//                      + n_b    (a+ rho a - {a a+, rho}/2) ].
//
// The generator is built from the literal truncated operator products, so
// the trace is conserved exactly (the truncation corner feeds no leakage).
// Integration is classic RK4 under step-doubling error control.
//
// A translation injected before a delay commutes with the damping once its
// amplitude is rescaled by e^{-t/2T_c}; rescale_translation implements that
// amplitude map and decoherence_movie uses it to synthesize snapshot data at
// each observation window.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cavtomo/cat.hpp"
#include "cavtomo/fock.hpp"
#include "cavtomo/maxent.hpp"
#include "cavtomo/measurement.hpp"
#include "cavtomo/rng.hpp"

namespace cavtomo {

struct CavityParams {
  double t_c_s = 0.13;  // energy damping time
  double n_b = 0.05;    // reservoir thermal occupancy

  void validate() const {
    if (!(t_c_s > 0.0))
      throw std::invalid_argument("CavityParams: t_c_s must be positive");
    if (n_b < 0.0)
      throw std::invalid_argument("CavityParams: n_b must be >= 0");
  }
};

struct EvolveOptions {
  double local_tol = 1e-9;  // per-step max-entry error target
  double h_init_s = 0.0;    // 0 picks t_c/100
};

namespace detail {

struct LindbladRhs {
  ComplexMatrix a, ad, n1, n2;
  double rate_down = 0.0, rate_up = 0.0;

  LindbladRhs(Index dim, const CavityParams& cav)
      : a(annihilation_operator(dim)),
        ad(creation_operator(dim)),
        n1(ad * a),
        n2(a * ad),
        rate_down((1.0 + cav.n_b) / cav.t_c_s),
        rate_up(cav.n_b / cav.t_c_s) {}

  ComplexMatrix operator()(const ComplexMatrix& m) const {
    ComplexMatrix out = rate_down * (a * m * ad - 0.5 * (n1 * m + m * n1));
    if (rate_up > 0.0) out += rate_up * (ad * m * a - 0.5 * (n2 * m + m * n2));
    return out;
  }
};

inline ComplexMatrix rk4_step(const LindbladRhs& rhs, const ComplexMatrix& m,
                              double h) {
  const ComplexMatrix k1 = rhs(m);
  const ComplexMatrix k2 = rhs(m + 0.5 * h * k1);
  const ComplexMatrix k3 = rhs(m + 0.5 * h * k2);
  const ComplexMatrix k4 = rhs(m + h * k3);
  return m + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace detail

inline FieldState lindblad_evolve(const FieldState& rho0, double t_s,
                                  const CavityParams& cav,
                                  const EvolveOptions& opts = {}) {
  cav.validate();
  if (t_s < 0.0) throw std::invalid_argument("lindblad_evolve: negative time");
  if (!(opts.local_tol > 0.0))
    throw std::invalid_argument("lindblad_evolve: local_tol must be positive");
  if (t_s == 0.0) return rho0;

  const detail::LindbladRhs rhs(rho0.dim(), cav);
  ComplexMatrix m = rho0.matrix();
  double time = 0.0;
  double h = opts.h_init_s > 0.0 ? opts.h_init_s : 0.01 * cav.t_c_s;
  long steps = 0;
  while (time < t_s) {
    if (++steps > 10'000'000)
      throw std::runtime_error("lindblad_evolve: step budget exhausted");
    if (h > t_s - time) h = t_s - time;
    const ComplexMatrix full = detail::rk4_step(rhs, m, h);
    const ComplexMatrix half =
        detail::rk4_step(rhs, detail::rk4_step(rhs, m, 0.5 * h), 0.5 * h);
    const double err = (full - half).cwiseAbs().maxCoeff();
    if (err <= opts.local_tol) {
      m = 0.5 * (half + half.adjoint().eval());
      time += h;
    }
    const double factor =
        err > 0.0 ? std::clamp(0.9 * std::pow(opts.local_tol / err, 0.2), 0.2, 5.0)
                  : 5.0;
    h *= factor;
    if (h < 1e-15 * std::max(t_s, cav.t_c_s))
      throw std::runtime_error("lindblad_evolve: step size underflow");
  }

  // Integration can leave eigenvalues marginally negative; anything beyond
  // a 1e-7 floor means the truncation or tolerance is inadequate.
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(m);
  if (es.eigenvalues().minCoeff() < -1e-7)
    throw std::runtime_error("lindblad_evolve: positivity lost beyond the 1e-7 floor");
  RealVector w = es.eigenvalues().cwiseMax(0.0);
  m = es.eigenvectors() * w.asDiagonal() * es.eigenvectors().adjoint();
  m /= m.trace().real();
  return FieldState(std::move(m));
}

// Amplitude damping of an injected translation over a delay t.
inline Complex rescale_translation(Complex alpha, double t_s, const CavityParams& cav) {
  cav.validate();
  if (t_s < 0.0) throw std::invalid_argument("rescale_translation: negative time");
  return alpha * std::exp(-0.5 * t_s / cav.t_c_s);
}

// Cat matrix in the frame of its +chi component: translating by
// -beta e^{+i chi} sends that component to vacuum, so the coherence between
// the components shows up in the first column at high photon number.
inline FieldState translated_matrix(const FieldState& rho, const CatSpec& spec) {
  spec.validate();
  const Complex plus = spec.beta * std::exp(Complex(0.0, spec.chi));
  return translate(rho, -plus);
}

inline double coherence_metric(const FieldState& rho_t, Index n_min = 5) {
  if (n_min < 0 || n_min >= rho_t.dim())
    throw std::invalid_argument("coherence_metric: n_min out of range");
  double s = 0.0;
  for (Index n = n_min; n < rho_t.dim(); ++n)
    s += std::abs(rho_t.matrix()(n, 0));
  return s;
}

// Decoherence time of a cat of squared separation d2 under the thermal
// reservoir: T_d = 2 T_c / (d2 (1 + 2 n_b) + 4 n_b).
inline double predicted_td(double d2, const CavityParams& cav) {
  cav.validate();
  if (!(d2 > 0.0)) throw std::invalid_argument("predicted_td: d2 must be positive");
  return 2.0 * cav.t_c_s / (d2 * (1.0 + 2.0 * cav.n_b) + 4.0 * cav.n_b);
}

struct SeriesPoint {
  double t_s = 0.0;
  double value = 0.0;
  double sigma = 0.0;  // <= 0 marks an unweighted point
};

struct ExponentialFit {
  double t_d_s = 0.0;
  double amplitude = 0.0;
  double offset = 0.0;
  double t_d_std_s = 0.0;
};

// Fit y = A exp(-t/T) + C.  T is seeded by a log-spaced scan (A, C solved
// linearly at each trial T), then the triple is polished by damped
// Gauss-Newton.  With all sigmas positive the fit is inverse-variance
// weighted and the quoted T uncertainty comes straight from the normal
// matrix; otherwise it is scaled by the reduced chi-square.
inline ExponentialFit fit_exponential_offset(const std::vector<SeriesPoint>& pts) {
  const auto n = static_cast<Index>(pts.size());
  if (n < 4)
    throw std::invalid_argument("fit_exponential_offset: need at least 4 points");
  bool weighted = true;
  for (const auto& p : pts) {
    if (!std::isfinite(p.t_s) || !std::isfinite(p.value))
      throw std::invalid_argument("fit_exponential_offset: non-finite input");
    if (p.sigma <= 0.0) weighted = false;
  }
  for (Index i = 1; i < n; ++i)
    if (!(pts[i].t_s > pts[i - 1].t_s))
      throw std::invalid_argument("fit_exponential_offset: times must increase");

  Eigen::VectorXd t(n), y(n), w(n);
  for (Index i = 0; i < n; ++i) {
    t(i) = pts[i].t_s;
    y(i) = pts[i].value;
    w(i) = weighted ? 1.0 / (pts[i].sigma * pts[i].sigma) : 1.0;
  }

  const double span = t(n - 1) - t(0);
  if (!(span > 0.0))
    throw std::invalid_argument("fit_exponential_offset: zero time span");

  auto solve_ac = [&](double trial_t, double& a, double& c) {
    // weighted least squares for y ~ a e^{-t/T} + c at fixed T
    double s_ee = 0, s_e1 = 0, s_11 = 0, s_ey = 0, s_1y = 0;
    for (Index i = 0; i < n; ++i) {
      const double e = std::exp(-t(i) / trial_t);
      s_ee += w(i) * e * e;
      s_e1 += w(i) * e;
      s_11 += w(i);
      s_ey += w(i) * e * y(i);
      s_1y += w(i) * y(i);
    }
    const double det = s_ee * s_11 - s_e1 * s_e1;
    if (std::abs(det) < 1e-300) {
      a = 0.0;
      c = s_1y / s_11;
      return;
    }
    a = (s_ey * s_11 - s_e1 * s_1y) / det;
    c = (s_ee * s_1y - s_e1 * s_ey) / det;
  };
  auto sse_of = [&](double a, double trial_t, double c) {
    double s = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double r = y(i) - (a * std::exp(-t(i) / trial_t) + c);
      s += w(i) * r * r;
    }
    return s;
  };

  // reference: best constant model
  double ybar = 0.0, wsum = 0.0;
  for (Index i = 0; i < n; ++i) {
    ybar += w(i) * y(i);
    wsum += w(i);
  }
  ybar /= wsum;
  double sse_const = 0.0;
  for (Index i = 0; i < n; ++i) sse_const += w(i) * (y(i) - ybar) * (y(i) - ybar);

  double best_t = 0.0, best_a = 0.0, best_c = ybar;
  double best_sse = std::numeric_limits<double>::infinity();
  const int grid = 120;
  for (int k = 0; k < grid; ++k) {
    const double trial =
        (span / 200.0) * std::pow(2e4, double(k) / double(grid - 1));
    double a, c;
    solve_ac(trial, a, c);
    const double s = sse_of(a, trial, c);
    if (s < best_sse) {
      best_sse = s;
      best_t = trial;
      best_a = a;
      best_c = c;
    }
  }

  const double yscale = y.cwiseAbs().maxCoeff() + 1e-30;
  if (!(best_t > 0.0) || std::abs(best_a) < 1e-10 * yscale ||
      best_sse > sse_const * (1.0 - 1e-12) + 1e-300)
    throw std::runtime_error(
        "fit_exponential_offset: no identifiable decay in the series");

  // Gauss-Newton polish with step halving
  double a = best_a, tt = best_t, c = best_c, sse = best_sse;
  for (int it = 0; it < 200; ++it) {
    Eigen::MatrixXd j(n, 3);
    Eigen::VectorXd r(n);
    for (Index i = 0; i < n; ++i) {
      const double e = std::exp(-t(i) / tt);
      const double sw = std::sqrt(w(i));
      j(i, 0) = sw * e;
      j(i, 1) = sw * a * e * t(i) / (tt * tt);
      j(i, 2) = sw;
      r(i) = sw * (y(i) - (a * e + c));
    }
    const Eigen::Vector3d step =
        (j.transpose() * j).ldlt().solve(j.transpose() * r);
    double scale = 1.0;
    bool moved = false;
    for (int h = 0; h < 40; ++h) {
      const double a2 = a + scale * step(0);
      const double t2 = tt + scale * step(1);
      const double c2 = c + scale * step(2);
      if (t2 > 0.0) {
        const double s2 = sse_of(a2, t2, c2);
        if (s2 <= sse) {
          const bool done = (sse - s2) <= 1e-13 * (sse + 1e-300);
          a = a2;
          tt = t2;
          c = c2;
          sse = s2;
          moved = !done;
          break;
        }
      }
      scale *= 0.5;
    }
    if (!moved) break;
  }

  if (!(tt > 0.0) || std::abs(a) < 1e-10 * yscale)
    throw std::runtime_error(
        "fit_exponential_offset: no identifiable decay in the series");

  // covariance of (A, T, C) from the final normal matrix
  Eigen::MatrixXd j(n, 3);
  for (Index i = 0; i < n; ++i) {
    const double e = std::exp(-t(i) / tt);
    const double sw = std::sqrt(w(i));
    j(i, 0) = sw * e;
    j(i, 1) = sw * a * e * t(i) / (tt * tt);
    j(i, 2) = sw;
  }
  Eigen::Matrix3d cov = (j.transpose() * j).inverse();
  double var_t = cov(1, 1);
  if (!weighted && n > 3) var_t *= sse / double(n - 3);

  ExponentialFit out;
  out.t_d_s = tt;
  out.amplitude = a;
  out.offset = c;
  out.t_d_std_s = var_t > 0.0 ? std::sqrt(var_t) : 0.0;
  return out;
}

enum class MovieMode { ideal, via_measurement };

struct MoviePlan {
  std::vector<MeasurementSetting> settings;  // defined at t = 0
  long atoms_per_setting = 2000;
  ImperfectionModel imperfection;
  ReconstructOptions recon;
  std::uint64_t seed = 1;
};

struct MovieFrame {
  double t_s = 0.0;
  std::optional<FieldState> state;
  bool ok = false;
  std::string note;
};

// Snapshots of the field at the requested windows.  In ideal mode the frame
// is the relaxed density matrix itself; in via_measurement mode each frame
// is reconstructed from synthetic Ramsey records whose translation
// amplitudes carry the e^{-t/2T_c} rescaling.  A frame whose reconstruction
// fails is marked and the movie continues.
inline std::vector<MovieFrame> decoherence_movie(const FieldState& rho0,
                                                 const std::vector<double>& windows_s,
                                                 const CavityParams& cav,
                                                 MovieMode mode,
                                                 const MoviePlan* plan = nullptr) {
  cav.validate();
  if (windows_s.empty())
    throw std::invalid_argument("decoherence_movie: no windows");
  for (std::size_t i = 0; i < windows_s.size(); ++i) {
    if (windows_s[i] < 0.0)
      throw std::invalid_argument("decoherence_movie: negative window");
    if (i > 0 && !(windows_s[i] > windows_s[i - 1]))
      throw std::invalid_argument("decoherence_movie: windows must increase");
  }
  if (mode == MovieMode::via_measurement) {
    if (plan == nullptr || plan->settings.empty())
      throw std::invalid_argument(
          "decoherence_movie: via_measurement needs a nonempty plan");
    plan->imperfection.validate();
  }

  std::vector<MovieFrame> frames;
  frames.reserve(windows_s.size());
  FieldState current = rho0;
  double prev_t = 0.0;
  for (std::size_t w = 0; w < windows_s.size(); ++w) {
    const double t_w = windows_s[w];
    current = lindblad_evolve(current, t_w - prev_t, cav);
    prev_t = t_w;
    MovieFrame frame;
    frame.t_s = t_w;
    if (mode == MovieMode::ideal) {
      frame.state = current;
      frame.ok = true;
    } else {
      std::vector<DetectionRecord> records;
      records.reserve(plan->settings.size());
      for (std::size_t j = 0; j < plan->settings.size(); ++j) {
        MeasurementSetting s = plan->settings[j];
        s.alpha = rescale_translation(s.alpha, t_w, cav);
        s.window_index = static_cast<int>(w);
        records.push_back(sample_detections(
            current, s, plan->atoms_per_setting, plan->imperfection,
            derive_seed(plan->seed, "movie", {std::uint64_t(w), std::uint64_t(j)})));
      }
      try {
        const auto cs = build_constraints(records, rho0.dim(), plan->imperfection);
        const auto res = reconstruct(cs, plan->recon);
        frame.state = res.rho;
        frame.ok = res.converged;
        frame.note = res.message;
      } catch (const std::exception& ex) {
        frame.ok = false;
        frame.note = ex.what();
      }
    }
    frames.push_back(std::move(frame));
  }
  return frames;
}

}  // namespace cavtomo
