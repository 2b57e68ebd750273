#pragma once

// End-to-end run plumbing.  A sampling plan places measurement settings on a
// lattice sized to the state's phase-space support; run_pipeline executes an
// ordered stage list, exchanging artifacts through plain files in one output
// directory and recording everything in a JSON manifest (config hash, seed,
// versions, per-stage wall time, per-artifact content hash).

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "cavtomo/config.hpp"
#include "cavtomo/dynamics.hpp"
#include "cavtomo/io.hpp"
#include "cavtomo/maxent.hpp"
#include "cavtomo/measurement.hpp"
#include "cavtomo/prepare.hpp"
#include "cavtomo/rng.hpp"
#include "cavtomo/wigner.hpp"

namespace cavtomo {

inline constexpr const char* kVersion = "0.1.0";

struct SamplingPlan {
  std::vector<MeasurementSetting> settings;  // lattice point outer, phase inner
  long atoms_per_setting = 0;
  double radius = 0.0;   // disc radius of the lattice
  double spacing = 0.0;  // lattice pitch after the shrink loop
  std::vector<double> phis;  // absolute Ramsey phases
};

namespace detail {

struct DiscLattice {
  std::vector<Complex> sites;
  double spacing = 0.0;
};

// Square lattice clipped to a disc, then decimated evenly to exactly
// `target` points.  The pitch starts at the equal-area estimate and shrinks
// until the disc holds at least the target count, so the decimation only
// ever thins the lattice.
inline DiscLattice disc_lattice(double radius, long target) {
  if (!(radius > 0.0))
    throw std::invalid_argument("disc_lattice: radius must be positive");
  if (target < 1) throw std::invalid_argument("disc_lattice: target must be >= 1");
  DiscLattice out;
  out.spacing = radius * std::sqrt(kPi / double(target));
  for (int guard = 0; guard < 400; ++guard) {
    out.sites.clear();
    const long m = long(std::floor(radius / out.spacing));
    for (long i = -m; i <= m; ++i)
      for (long j = -m; j <= m; ++j) {
        const double x = double(i) * out.spacing;
        const double y = double(j) * out.spacing;
        if (x * x + y * y <= radius * radius + 1e-12) out.sites.emplace_back(x, y);
      }
    if (long(out.sites.size()) >= target) break;
    out.spacing *= 0.97;
  }
  const long n = long(out.sites.size());
  if (n < target)
    throw std::runtime_error("disc_lattice: could not reach the target count");
  std::vector<Complex> kept;
  kept.reserve(std::size_t(target));
  for (long k = 0; k < target; ++k) kept.push_back(out.sites[std::size_t((k * n) / target)]);
  out.sites = std::move(kept);
  return out;
}

struct PlanDefaults {
  long points = 0;
  long atoms = 0;
  std::vector<double> offsets;  // added to -Phi(0, delta)
};

inline PlanDefaults plan_defaults(const std::string& kind) {
  if (kind == "coherent") return {161, 7000, {kPi}};
  if (kind == "fock") return {400, 2000, {kPi, kPi / 2.0}};
  return {500, 2000, {kPi}};  // cat and its mixture
}

}  // namespace detail

// Settings lattice for a run config: a disc of radius 1.6 * (largest state
// amplitude) + 1 unless overridden, decimated to the published point budget
// for the prepared state family, crossed with the phase list.
inline SamplingPlan make_sampling_plan(const RunConfig& cfg) {
  cfg.validate();
  const detail::PlanDefaults defaults = detail::plan_defaults(cfg.prepare_kind);
  const long target = cfg.plan_points > 0 ? cfg.plan_points : defaults.points;
  const std::vector<double> offsets = cfg.plan_phi_offsets.empty()
                                          ? defaults.offsets
                                          : parse_double_list(cfg.plan_phi_offsets);
  if (offsets.empty())
    throw std::invalid_argument("make_sampling_plan: empty phase offset list");
  const double amp = cfg.prepare_kind == "fock" ? std::sqrt(double(cfg.prepare_n0))
                                                : std::sqrt(cfg.prepare_nm);
  SamplingPlan plan;
  plan.radius = cfg.plan_radius > 0.0 ? cfg.plan_radius : 1.6 * amp + 1.0;
  detail::DiscLattice lattice = detail::disc_lattice(plan.radius, target);
  plan.spacing = lattice.spacing;
  plan.atoms_per_setting =
      cfg.atoms_per_setting > 0 ? cfg.atoms_per_setting : defaults.atoms;
  const DispersiveParams p = cfg.dispersive();
  const double base = -phase_shift(0.0, p);
  plan.phis.reserve(offsets.size());
  for (double off : offsets) plan.phis.push_back(base + off);
  plan.settings.reserve(lattice.sites.size() * plan.phis.size());
  for (const Complex& alpha : lattice.sites)
    for (double phi : plan.phis) plan.settings.push_back({alpha, phi, p, 0});
  return plan;
}

inline SamplingPlan sampling_plan_default(const std::string& kind, Index dim) {
  RunConfig cfg;
  cfg.prepare_kind = kind;
  cfg.dim = dim;
  return make_sampling_plan(cfg);
}

struct StageReport {
  std::string name;
  double wall_s = 0.0;
  std::vector<std::string> artifacts;  // file names inside the output directory
  std::string note;
};

struct PipelineResult {
  bool ok = true;
  std::string message;  // names the failing stage when !ok
  std::vector<StageReport> stages;
};

namespace detail {

inline const std::vector<std::string>& pipeline_stage_names() {
  static const std::vector<std::string> names = {
      "prepare", "simulate-measure", "reconstruct", "wigner",
      "evolve",  "movie",            "fit-td"};
  return names;
}

inline std::string hash_hex(std::uint64_t h) {
  std::ostringstream out;
  out << std::hex << std::setfill('0') << std::setw(16) << h;
  return out.str();
}

inline std::uint64_t file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot reopen artifact " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return hash_tag(buffer.str());
}

}  // namespace detail

inline PipelineResult run_pipeline(const RunConfig& cfg,
                                   const std::vector<std::string>& stages,
                                   const std::string& out_dir) {
  cfg.validate();
  namespace fs = std::filesystem;
  const fs::path out(out_dir);
  fs::create_directories(out);

  PipelineResult result;
  for (const auto& name : stages) {
    const auto& known = detail::pipeline_stage_names();
    if (std::find(known.begin(), known.end(), name) == known.end()) {
      result.ok = false;
      result.message = "unknown stage: " + name;
      break;
    }
  }

  std::optional<SamplingPlan> plan;
  auto the_plan = [&]() -> const SamplingPlan& {
    if (!plan) plan = make_sampling_plan(cfg);
    return *plan;
  };
  auto path_of = [&](const std::string& name) { return (out / name).string(); };
  const WignerUnits units =
      cfg.wigner_units == "two-over-pi" ? WignerUnits::two_over_pi : WignerUnits::natural;
  const GridExtent extent{-cfg.wigner_extent, cfg.wigner_extent, -cfg.wigner_extent,
                          cfg.wigner_extent};

  auto stage_prepare = [&](StageReport& rep) {
    FieldState state = [&] {
      if (cfg.prepare_kind == "coherent")
        return coherent_state(std::sqrt(cfg.prepare_nm), cfg.dim);
      if (cfg.prepare_kind == "fock") {
        if (cfg.prepare_ideal) return fock_state(cfg.prepare_n0, cfg.dim);
        DispersiveParams probe = cfg.dispersive();
        probe.delta_hz = cfg.anchor_delta_hz;  // linear regime for counting
        QndPlan qnd;
        const double base = -phase_shift(0.0, probe);
        for (int j = 0; j < 4; ++j) qnd.phi_set.push_back(base + j * kPi / 4.0);
        qnd.dispersive = probe;
        qnd.threshold = cfg.qnd_threshold;
        qnd.max_atoms = int(cfg.qnd_max_atoms);
        const FieldState source = coherent_state(std::sqrt(cfg.prepare_nm), cfg.dim);
        const long attempts = 500;
        for (long attempt = 0; attempt < attempts; ++attempt) {
          auto res = qnd_project(source, qnd,
                                 derive_seed(cfg.seed, "prepare",
                                             {std::uint64_t(attempt)}));
          if (res.converged && res.n0 == cfg.prepare_n0) {
            rep.note = "selected n0 after " + std::to_string(attempt + 1) + " run(s)";
            return res.state;
          }
        }
        throw std::runtime_error("projection never selected n0 = " +
                                 std::to_string(cfg.prepare_n0) + " in " +
                                 std::to_string(attempts) + " runs");
      }
      return prepare_cat(cfg.cat_spec(), cfg.dispersive(), cfg.dim);
    }();
    save_state(state, path_of("state.txt"));
    rep.artifacts.push_back("state.txt");
  };

  auto stage_measure = [&](StageReport& rep) {
    const FieldState truth = load_state(path_of("state.txt"));
    if (truth.dim() != cfg.dim)
      throw std::runtime_error("state.txt dimension " + std::to_string(truth.dim()) +
                               " does not match config dim " + std::to_string(cfg.dim));
    const SamplingPlan& sp = the_plan();
    const ImperfectionModel imp = cfg.imperfection();
    std::vector<DetectionRecord> records;
    records.reserve(sp.settings.size());
    for (std::size_t i = 0; i < sp.settings.size(); ++i)
      records.push_back(sample_detections(truth, sp.settings[i], sp.atoms_per_setting,
                                          imp,
                                          derive_seed(cfg.seed, "measure", {i})));
    save_records(records, path_of("records.txt"));
    rep.artifacts.push_back("records.txt");
  };

  auto stage_reconstruct = [&](StageReport& rep) {
    const DispersiveParams p = cfg.dispersive();
    const auto records = load_records(path_of("records.txt"), p.omega_hz, p.t_eff_s);
    const ConstraintSet cs = build_constraints(records, cfg.dim, cfg.imperfection());
    const ReconstructionResult res = reconstruct(cs, cfg.recon_options());
    save_state(res.rho, path_of("reconstructed.txt"));
    rep.artifacts.push_back("reconstructed.txt");
    save_report(res, path_of("report.txt"));
    rep.artifacts.push_back("report.txt");
    if (fs::exists(out / "state.txt")) {
      const FieldState truth = load_state(path_of("state.txt"));
      if (truth.dim() == res.rho.dim()) {
        std::ofstream app(path_of("report.txt"), std::ios::app);
        app << "fidelity " << detail::format_double(fidelity(res.rho, truth)) << "\n";
      }
    }
    if (!res.converged)
      throw std::runtime_error("reconstruction did not converge: " + res.message);
  };

  auto stage_wigner = [&](StageReport& rep) {
    const bool have_recon = fs::exists(out / "reconstructed.txt");
    const FieldState rho =
        load_state(path_of(have_recon ? "reconstructed.txt" : "state.txt"));
    rep.note = have_recon ? "rendered reconstructed.txt" : "rendered state.txt";
    const WignerGrid grid =
        wigner_grid(rho, extent, cfg.wigner_res, cfg.wigner_res, units, cfg.threads);
    save_wigner_csv(grid, path_of("wigner.csv"));
    rep.artifacts.push_back("wigner.csv");
    if (cfg.wigner_image) {
      save_wigner_pgm(grid, path_of("wigner.pgm"));
      rep.artifacts.push_back("wigner.pgm");
    }
  };

  auto stage_evolve = [&](StageReport& rep) {
    const FieldState rho = load_state(path_of("state.txt"));
    const FieldState evolved = lindblad_evolve(rho, cfg.evolve_t_ms * 1e-3, cfg.cavity());
    save_state(evolved, path_of("evolved.txt"));
    rep.artifacts.push_back("evolved.txt");
  };

  auto stage_movie = [&](StageReport& rep) {
    const FieldState rho0 = load_state(path_of("state.txt"));
    if (rho0.dim() != cfg.dim)
      throw std::runtime_error("state.txt dimension " + std::to_string(rho0.dim()) +
                               " does not match config dim " + std::to_string(cfg.dim));
    const std::vector<double> windows_ms = parse_double_list(cfg.movie_windows_ms);
    if (windows_ms.empty()) throw std::invalid_argument("movie_windows_ms is empty");
    std::vector<double> windows_s;
    windows_s.reserve(windows_ms.size());
    for (double w : windows_ms) windows_s.push_back(w * 1e-3);
    const CavityParams cav = cfg.cavity();

    std::vector<MovieFrame> frames;
    if (cfg.movie_mode == "ideal") {
      frames = decoherence_movie(rho0, windows_s, cav, MovieMode::ideal);
    } else {
      MoviePlan mp;
      mp.settings = the_plan().settings;
      mp.atoms_per_setting = cfg.movie_atoms;
      mp.imperfection = cfg.imperfection();
      mp.recon = cfg.recon_options();
      mp.seed = cfg.seed;
      frames = decoherence_movie(rho0, windows_s, cav, MovieMode::via_measurement, &mp);
    }

    // The series tracks the cat coherences: translate one classical
    // component to the vacuum and sum the first-column tail.
    const CatSpec spec = cfg.cat_spec();
    std::vector<SeriesRow> series;
    long failed = 0;
    for (std::size_t k = 0; k < frames.size(); ++k) {
      const MovieFrame& f = frames[k];
      if (!f.ok) {
        ++failed;
        continue;
      }
      const std::string frame_name = "frame_" + std::to_string(k) + ".txt";
      save_state(*f.state, path_of(frame_name));
      rep.artifacts.push_back(frame_name);
      const WignerGrid grid = wigner_grid(*f.state, extent, cfg.wigner_res,
                                          cfg.wigner_res, units, cfg.threads);
      const std::string grid_name = "wigner_frame_" + std::to_string(k) + ".csv";
      save_wigner_csv(grid, path_of(grid_name));
      rep.artifacts.push_back(grid_name);
      series.push_back(
          {f.t_s * 1e3, coherence_metric(translated_matrix(*f.state, spec)), 0.0});
    }
    save_series(series, path_of("series.csv"));
    rep.artifacts.push_back("series.csv");
    if (failed > 0) rep.note = std::to_string(failed) + " frame(s) failed";
  };

  auto stage_fit = [&](StageReport& rep) {
    const auto rows = load_series(path_of("series.csv"));
    std::vector<SeriesPoint> pts;
    pts.reserve(rows.size());
    for (const SeriesRow& r : rows) pts.push_back({r.t_ms * 1e-3, r.coherence, r.err});
    const ExponentialFit fit = fit_exponential_offset(pts);
    {
      auto fit_out = detail::open_out(path_of("fit.txt"));
      fit_out << "t_d_ms " << detail::format_double(fit.t_d_s * 1e3) << "\n"
              << "amplitude " << detail::format_double(fit.amplitude) << "\n"
              << "offset " << detail::format_double(fit.offset) << "\n"
              << "t_d_std_ms " << detail::format_double(fit.t_d_std_s * 1e3) << "\n"
              << "points " << rows.size() << "\n";
    }
    rep.artifacts.push_back("fit.txt");
    if (!(fit.t_d_s > 0.0))
      throw std::runtime_error("fitted decay time is not positive");
  };

  if (result.ok) {
    for (const auto& name : stages) {
      StageReport rep;
      rep.name = name;
      const auto t0 = std::chrono::steady_clock::now();
      bool stage_ok = true;
      try {
        if (name == "prepare") stage_prepare(rep);
        else if (name == "simulate-measure") stage_measure(rep);
        else if (name == "reconstruct") stage_reconstruct(rep);
        else if (name == "wigner") stage_wigner(rep);
        else if (name == "evolve") stage_evolve(rep);
        else if (name == "movie") stage_movie(rep);
        else stage_fit(rep);
      } catch (const std::exception& e) {
        stage_ok = false;
        result.ok = false;
        result.message = "stage " + name + ": " + e.what();
      }
      rep.wall_s =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      result.stages.push_back(std::move(rep));
      if (!stage_ok) break;
    }
  }

  nlohmann::json manifest;
  manifest["config_hash"] = detail::hash_hex(config_hash(cfg));
  manifest["seed"] = cfg.seed;
  manifest["versions"] = {
      {"cavtomo", kVersion},
      {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                    std::to_string(EIGEN_MAJOR_VERSION) + "." +
                    std::to_string(EIGEN_MINOR_VERSION)}};
  manifest["status"] = result.ok ? "ok" : "failed";
  manifest["message"] = result.message;
  manifest["stages"] = nlohmann::json::array();
  for (const StageReport& rep : result.stages) {
    nlohmann::json stage;
    stage["name"] = rep.name;
    stage["wall_s"] = rep.wall_s;
    if (!rep.note.empty()) stage["note"] = rep.note;
    stage["artifacts"] = nlohmann::json::array();
    for (const std::string& artifact : rep.artifacts)
      stage["artifacts"].push_back(
          {{"file", artifact},
           {"fnv1a", detail::hash_hex(detail::file_hash(out / artifact))}});
    manifest["stages"].push_back(std::move(stage));
  }
  if (plan) {
    manifest["plan"] = {{"settings", plan->settings.size()},
                        {"atoms_per_setting", plan->atoms_per_setting},
                        {"radius", plan->radius},
                        {"spacing", plan->spacing},
                        {"phis", plan->phis}};
  }
  {
    auto mout = detail::open_out(path_of("manifest.json"));
    mout << manifest.dump(2) << "\n";
  }
  return result;
}

}  // namespace cavtomo
