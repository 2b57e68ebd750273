#pragma once

// Maximum-entropy state reconstruction.
//
// Among all density matrices reproducing the measured means g_k of the
// observables G_k, pick the one maximizing von Neumann entropy.  The
// solution has Gibbs form rho(lambda) = exp(-sum_k lambda_k G_k) / Z, and
// the multipliers minimize the smooth convex dual
//
//   F(lambda) = ln Tr exp(-sum_k lambda_k G_k) + sum_k lambda_k g_k
//
// (plus 1/2 sum_k sigma_k^2 lambda_k^2 when noisy constraints are relaxed,
// which keeps the problem feasible for data that no exact state matches).
// Minimization uses L-BFGS with Armijo backtracking; the matrix exponential
// is evaluated through an eigendecomposition with a max-eigenvalue shift so
// large multipliers cannot overflow.

#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cavtomo/fock.hpp"
#include "cavtomo/measurement.hpp"
#include "cavtomo/rng.hpp"

namespace cavtomo {

struct Constraint {
  ComplexMatrix g_op;  // Hermitian observable
  double value = 0.0;  // measured mean, in [-1, 1] for Ramsey signals
  double sigma = 0.0;  // uncertainty, used by the relaxed mode
};

struct ConstraintSet {
  Index dim = 0;
  std::vector<Constraint> constraints;
};

// Merge detection records sharing a setting, correct the imperfection map
// and attach the corresponding observable.  Order follows first appearance,
// so the output is deterministic.
inline ConstraintSet build_constraints(const std::vector<DetectionRecord>& records,
                                       Index dim, const ImperfectionModel& imp) {
  imp.validate();
  if (dim < 1) throw std::invalid_argument("build_constraints: dim must be >= 1");
  ConstraintSet cs;
  cs.dim = dim;
  std::vector<DetectionRecord> merged;
  auto same_setting = [](const MeasurementSetting& a, const MeasurementSetting& b) {
    return a.alpha == b.alpha && a.phi == b.phi &&
           a.dispersive.omega_hz == b.dispersive.omega_hz &&
           a.dispersive.delta_hz == b.dispersive.delta_hz &&
           a.dispersive.t_eff_s == b.dispersive.t_eff_s &&
           a.window_index == b.window_index;
  };
  for (const auto& rec : records) {
    bool found = false;
    for (auto& m : merged) {
      if (same_setting(m.setting, rec.setting)) {
        m.n_e += rec.n_e;
        m.n_g += rec.n_g;
        found = true;
        break;
      }
    }
    if (!found) merged.push_back(rec);
  }
  cs.constraints.reserve(merged.size());
  for (const auto& m : merged) {
    const CorrectedSignal c = correct_signal(m, imp);
    cs.constraints.push_back({g_operator(m.setting, dim), c.g_hat, c.sigma});
  }
  return cs;
}

struct ReconstructOptions {
  double tol = 1e-4;
  long max_iter = 2000;
  bool noise_relaxation = true;
  double lambda_limit = 1e4;
  int lbfgs_memory = 10;
};

struct ReconstructionResult {
  FieldState rho;
  double entropy = 0.0;
  std::vector<double> residuals;  // |Tr[rho G_k] - g_k| on the returned state
  long iterations = 0;
  bool converged = false;
  std::string message;
};

inline double entropy_of(const FieldState& rho) {
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(rho.matrix(), Eigen::EigenvaluesOnly);
  double s = 0.0;
  for (Index k = 0; k < rho.dim(); ++k) {
    const double p = es.eigenvalues()(k);
    if (p > 1e-15) s -= p * std::log(p);
  }
  return s;
}

struct DualEval {
  double value = 0.0;
  Eigen::VectorXd gradient;
  ComplexMatrix rho;
  double log_z = 0.0;
};

// Dual value, gradient and the Gibbs state at lambda.
inline DualEval dual_value_and_gradient(const Eigen::VectorXd& lambda,
                                        const ConstraintSet& cs, bool relaxed) {
  const Index d = cs.dim;
  const auto k_count = static_cast<Index>(cs.constraints.size());
  ComplexMatrix b = ComplexMatrix::Zero(d, d);
  for (Index k = 0; k < k_count; ++k) b -= lambda(k) * cs.constraints[k].g_op;
  b = 0.5 * (b + b.adjoint().eval());
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(b);
  const double wmax = es.eigenvalues().maxCoeff();
  Eigen::ArrayXd ez = (es.eigenvalues().array() - wmax).exp();
  const double zt = ez.sum();
  DualEval out;
  out.log_z = wmax + std::log(zt);
  out.rho = es.eigenvectors() * (ez / zt).matrix().asDiagonal() *
            es.eigenvectors().adjoint();
  out.rho = 0.5 * (out.rho + out.rho.adjoint().eval());
  out.value = out.log_z;
  out.gradient.resize(k_count);
  for (Index k = 0; k < k_count; ++k) {
    const auto& c = cs.constraints[k];
    out.value += lambda(k) * c.value;
    out.gradient(k) = c.value - real_trace_product(out.rho, c.g_op);
    if (relaxed) {
      out.value += 0.5 * c.sigma * c.sigma * lambda(k) * lambda(k);
      out.gradient(k) += c.sigma * c.sigma * lambda(k);
    }
  }
  return out;
}

namespace detail {

// Two-loop L-BFGS direction from the stored (s, y) pairs.
inline Eigen::VectorXd lbfgs_direction(
    const Eigen::VectorXd& grad,
    const std::deque<std::pair<Eigen::VectorXd, Eigen::VectorXd>>& memory) {
  Eigen::VectorXd q = grad;
  std::vector<double> alpha(memory.size());
  std::vector<double> rho_inv(memory.size());
  for (std::size_t i = memory.size(); i-- > 0;) {
    const auto& [s, y] = memory[i];
    rho_inv[i] = 1.0 / y.dot(s);
    alpha[i] = rho_inv[i] * s.dot(q);
    q -= alpha[i] * y;
  }
  if (!memory.empty()) {
    const auto& [s, y] = memory.back();
    q *= s.dot(y) / y.dot(y);
  }
  for (std::size_t i = 0; i < memory.size(); ++i) {
    const auto& [s, y] = memory[i];
    const double beta = rho_inv[i] * y.dot(q);
    q += (alpha[i] - beta) * s;
  }
  return -q;
}

}  // namespace detail

inline ReconstructionResult reconstruct(const ConstraintSet& cs,
                                        const ReconstructOptions& opts = {}) {
  if (cs.dim < 1) throw std::invalid_argument("reconstruct: dim must be >= 1");
  if (!(opts.tol > 0.0)) throw std::invalid_argument("reconstruct: tol must be positive");
  for (const auto& c : cs.constraints) {
    if (c.g_op.rows() != cs.dim || c.g_op.cols() != cs.dim)
      throw std::invalid_argument("reconstruct: constraint dimension mismatch");
    if (hermiticity_defect(c.g_op) > 1e-8)
      throw std::invalid_argument("reconstruct: constraint operator not Hermitian");
    if (c.sigma < 0.0)
      throw std::invalid_argument("reconstruct: negative sigma");
  }

  const auto k_count = static_cast<Index>(cs.constraints.size());
  if (k_count == 0) {
    ReconstructionResult out{
        FieldState(ComplexMatrix::Identity(cs.dim, cs.dim) / double(cs.dim))};
    out.entropy = std::log(double(cs.dim));
    out.converged = true;
    out.message = "no constraints; returning the maximally mixed state";
    return out;
  }

  const bool relaxed = opts.noise_relaxation;
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(k_count);
  DualEval cur = dual_value_and_gradient(lambda, cs, relaxed);
  DualEval best = cur;
  std::deque<std::pair<Eigen::VectorXd, Eigen::VectorXd>> memory;

  long iter = 0;
  bool converged = false;
  std::string message;
  while (iter < opts.max_iter) {
    if (cur.gradient.cwiseAbs().maxCoeff() <= opts.tol) {
      converged = true;
      break;
    }
    Eigen::VectorXd dir = detail::lbfgs_direction(cur.gradient, memory);
    double slope = dir.dot(cur.gradient);
    if (!(slope < 0.0)) {
      memory.clear();
      dir = -cur.gradient;
      slope = dir.dot(cur.gradient);
    }
    double t = 1.0;
    DualEval next;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      next = dual_value_and_gradient(lambda + t * dir, cs, relaxed);
      if (next.value <= cur.value + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    // Forward expansion: on rays where the dual keeps dropping linearly
    // (infeasible data) backtracking alone would crawl toward the
    // multiplier limit, so double the step while it still helps.
    if (accepted && t == 1.0) {
      for (int ex = 0; ex < 60; ++ex) {
        const double t2 = 2.0 * t;
        DualEval wide = dual_value_and_gradient(lambda + t2 * dir, cs, relaxed);
        if (wide.value < next.value &&
            wide.value <= cur.value + 1e-4 * t2 * slope) {
          t = t2;
          next = wide;
        } else {
          break;
        }
      }
    }
    ++iter;
    if (!accepted) {
      message = "line search stalled before reaching tolerance";
      break;
    }
    const Eigen::VectorXd s = t * dir;
    const Eigen::VectorXd y = next.gradient - cur.gradient;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      memory.emplace_back(s, y);
      if (static_cast<int>(memory.size()) > opts.lbfgs_memory) memory.pop_front();
    }
    lambda += s;
    cur = next;
    if (cur.value < best.value) best = cur;
    if (lambda.cwiseAbs().maxCoeff() > opts.lambda_limit) {
      message =
          "multipliers diverged; constraints look infeasible, consider "
          "noise relaxation";
      break;
    }
  }
  if (!converged && message.empty())
    message = "iteration limit reached before tolerance";

  if (cur.value < best.value) best = cur;
  ReconstructionResult out{FieldState(best.rho)};
  out.entropy = entropy_of(out.rho);
  out.iterations = iter;
  out.converged = converged;
  out.message = converged ? "converged" : message;
  out.residuals.reserve(k_count);
  for (const auto& c : cs.constraints)
    out.residuals.push_back(
        std::abs(real_trace_product(out.rho.matrix(), c.g_op) - c.value));
  return out;
}

struct BootstrapStats {
  double mean = 0.0;
  double std = 0.0;
  int n_failed = 0;
};

// Nonparametric bootstrap over detection records: resample with replacement,
// reconstruct, evaluate the functional.  Resamples whose reconstruction
// throws are recorded and excluded from the statistics.
inline BootstrapStats bootstrap_errorbars(
    const std::vector<DetectionRecord>& records, Index dim,
    const ImperfectionModel& imp, const ReconstructOptions& opts,
    const std::function<double(const FieldState&)>& functional, int n_resamples,
    std::uint64_t seed) {
  if (records.empty())
    throw std::invalid_argument("bootstrap_errorbars: no records");
  if (n_resamples < 1)
    throw std::invalid_argument("bootstrap_errorbars: need at least 1 resample");
  std::vector<double> values;
  values.reserve(n_resamples);
  BootstrapStats stats;
  for (int r = 0; r < n_resamples; ++r) {
    Xoshiro256pp rng(derive_seed(seed, "bootstrap", {std::uint64_t(r)}));
    std::vector<DetectionRecord> sample;
    sample.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i)
      sample.push_back(records[rng.below(records.size())]);
    try {
      const auto cs = build_constraints(sample, dim, imp);
      const auto res = reconstruct(cs, opts);
      values.push_back(functional(res.rho));
    } catch (const std::exception&) {
      ++stats.n_failed;
    }
  }
  if (values.empty())
    throw std::runtime_error("bootstrap_errorbars: every resample failed");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= double(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  if (values.size() > 1) var /= double(values.size() - 1);
  stats.mean = mean;
  stats.std = std::sqrt(var);
  return stats;
}

}  // namespace cavtomo
