// Subcommand front-end.  Every config key doubles as a --key flag; flags win
// over the --config file.  Stage subcommands are thin wrappers over
// run_pipeline and share one output directory; a few take direct input paths
// (documented per subcommand) and then run outside the manifest.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "cavtomo/cavtomo.hpp"

namespace {

using namespace cavtomo;

struct CliState {
  std::string config_path;
  std::string out_dir = "out";
  std::vector<std::pair<std::string, std::string>> overrides;
};

RunConfig assemble_config(const CliState& cli) {
  RunConfig cfg;
  if (!cli.config_path.empty()) {
    std::ifstream in(cli.config_path);
    if (!in) throw std::runtime_error("cannot open config file " + cli.config_path);
    cfg = parse_config(in);
  }
  for (const auto& [key, value] : cli.overrides) set_config_value(cfg, key, value);
  cfg.validate();
  return cfg;
}

bool run_stages(const RunConfig& cfg, const std::vector<std::string>& stages,
                const std::string& out_dir) {
  const PipelineResult result = run_pipeline(cfg, stages, out_dir);
  for (const StageReport& rep : result.stages) {
    std::printf("stage %-16s %8.3f s", rep.name.c_str(), rep.wall_s);
    for (const std::string& artifact : rep.artifacts)
      std::printf("  %s", artifact.c_str());
    if (!rep.note.empty()) std::printf("  (%s)", rep.note.c_str());
    std::printf("\n");
  }
  if (!result.ok) std::fprintf(stderr, "error: %s\n", result.message.c_str());
  return result.ok;
}

void print_fit(const ExponentialFit& fit, std::size_t points) {
  std::printf("T_d = %.4g ms +/- %.2g ms  (amplitude %.4g, offset %.4g, %zu points)\n",
              fit.t_d_s * 1e3, fit.t_d_std_s * 1e3, fit.amplitude, fit.offset, points);
}

void write_fit_file(const ExponentialFit& fit, std::size_t points,
                    const std::string& path) {
  auto out = detail::open_out(path);
  out << "t_d_ms " << detail::format_double(fit.t_d_s * 1e3) << "\n"
      << "amplitude " << detail::format_double(fit.amplitude) << "\n"
      << "offset " << detail::format_double(fit.offset) << "\n"
      << "t_d_std_ms " << detail::format_double(fit.t_d_std_s * 1e3) << "\n"
      << "points " << points << "\n";
}

int selftest() {
  int failed = 0;
  auto check = [&](const char* name, bool ok) {
    std::printf("[%s] %s\n", ok ? " ok " : "FAIL", name);
    if (!ok) ++failed;
  };

  const Index dim = 18;
  const Complex alpha{0.7, 0.3};
  const ComplexMatrix d = displacement_operator(alpha, dim);
  check("displacement operator is unitary",
        (d.adjoint() * d - ComplexMatrix::Identity(dim, dim)).cwiseAbs().maxCoeff() <
            1e-10);
  const FieldState coh = coherent_state(alpha, dim);
  check("displaced vacuum equals the coherent state",
        fidelity(translate(fock_state(0, dim), alpha), coh) > 1.0 - 1e-9);
  const double par = real_trace_product(parity_operator(dim), coh.matrix());
  check("coherent-state parity matches exp(-2|alpha|^2)",
        std::abs(par - std::exp(-2.0 * std::norm(alpha))) < 1e-6);

  const DispersiveParams probe =
      calibrate_teff({120000.0, 3.0, kPi / 2.0}, {49000.0, 120000.0, 0.0});
  check("phase slope calibrates to pi/2 per photon",
        std::abs(phase_slope(3.0, probe) - kPi / 2.0) < 1e-12);
  const RamseyKraus kraus = ramsey_kraus(0.3, probe, dim);
  check("detection operators are complete",
        (kraus.m_e.adjoint() * kraus.m_e + kraus.m_g.adjoint() * kraus.m_g -
         ComplexMatrix::Identity(dim, dim))
                .cwiseAbs()
                .maxCoeff() < 1e-12);

  ConstraintSet empty;
  empty.dim = 7;
  const auto flat = reconstruct(empty);
  check("unconstrained reconstruction is maximally mixed",
        flat.converged && std::abs(flat.entropy - std::log(7.0)) < 1e-9);

  check("vacuum Wigner peak is 2/pi",
        std::abs(wigner_at(fock_state(0, 12), Complex{0.0, 0.0}) - 2.0 / kPi) < 1e-12);
  check("single-photon Wigner dip is -2/pi",
        std::abs(wigner_at(fock_state(1, 12), Complex{0.0, 0.0}) + 2.0 / kPi) < 1e-12);

  const CavityParams cav{0.13, 0.0};
  const FieldState decayed = lindblad_evolve(coherent_state(1.0, 16), 5e-3, cav);
  check("field energy relaxes at the cavity rate",
        std::abs(mean_photon_number(decayed) - std::exp(-5e-3 / 0.13)) < 1e-6);

  const CavityParams warm{0.13, 0.05};
  const Complex move{0.5, 0.0};
  const FieldState seed_state = coherent_state(Complex{0.4, -0.2}, 16);
  const FieldState left =
      lindblad_evolve(translate(seed_state, move), 5e-3, warm);
  const FieldState right = translate(lindblad_evolve(seed_state, 5e-3, warm),
                                     rescale_translation(move, 5e-3, warm));
  check("translations commute with damping after rescaling",
        trace_norm(left.matrix() - right.matrix()) < 1e-5);

  std::vector<SeriesPoint> pts;
  for (int k = 0; k < 8; ++k) {
    const double t = 4e-3 * k;
    pts.push_back({t, std::exp(-t / 19.5e-3) + 0.02, 0.0});
  }
  const ExponentialFit fit = fit_exponential_offset(pts);
  check("exponential fit recovers a synthetic decay time",
        std::abs(fit.t_d_s - 19.5e-3) < 19.5e-3 * 1e-6);

  std::printf("%s\n", failed == 0 ? "selftest passed" : "selftest FAILED");
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"microwave cavity field tomography toolkit"};
  app.require_subcommand(1);

  CliState cli;
  app.add_option("--config", cli.config_path, "run configuration file");
  app.add_option("--out", cli.out_dir, "output directory (default: out)");
  for (const std::string& key : config_key_names()) {
    app.add_option_function<std::string>(
        "--" + key,
        [&cli, key](const std::string& value) { cli.overrides.emplace_back(key, value); },
        "override config key " + key);
  }

  auto alias_option = [&cli](CLI::App* sub, const std::string& flag,
                             const std::string& key, const std::string& help) {
    sub->add_option_function<std::string>(
        flag,
        [&cli, key](const std::string& value) { cli.overrides.emplace_back(key, value); },
        help);
  };
  auto alias_flag = [&cli](CLI::App* sub, const std::string& flag,
                           const std::string& key, const std::string& help) {
    sub->add_flag_callback(
        flag, [&cli, key]() { cli.overrides.emplace_back(key, "1"); }, help);
  };

  CLI::App* prepare = app.add_subcommand("prepare", "engineer the field state");
  alias_option(prepare, "--kind", "prepare_kind", "coherent|fock|cat|cat-mixture");
  alias_option(prepare, "--nm", "prepare_nm", "mean photon number of the source");
  alias_option(prepare, "--n0", "prepare_n0", "target photon number (fock)");
  alias_option(prepare, "--chi", "prepare_chi_rad", "cat half opening angle, radians");
  alias_option(prepare, "--parity", "prepare_parity", "cat parity: even|odd");
  alias_flag(prepare, "--exact-nonlinear", "prepare_exact_nonlinear",
             "apply the full dispersive phase profile to the cat");
  alias_flag(prepare, "--ideal", "prepare_ideal",
             "fock: write the target state without the projective sequence");

  CLI::App* measure =
      app.add_subcommand("simulate-measure", "sample detection records from state.txt");
  alias_option(measure, "--atoms", "atoms_per_setting", "atoms per setting");
  alias_option(measure, "--points", "plan_points", "settings lattice target count");

  CLI::App* recon =
      app.add_subcommand("reconstruct", "maximum-entropy state from records");
  std::string records_path;
  recon->add_option("--records", records_path,
                    "detection record file (default: <out>/records.txt)");
  alias_option(recon, "--mode", "recon_mode", "exact|relaxed");
  alias_option(recon, "--tol", "recon_tol", "constraint residual tolerance");

  CLI::App* wig = app.add_subcommand("wigner", "render the Wigner function grid");
  alias_option(wig, "--res", "wigner_res", "grid resolution per axis");
  alias_option(wig, "--extent", "wigner_extent", "half-width of the square grid");
  alias_option(wig, "--units", "wigner_units", "two-over-pi|natural");
  alias_flag(wig, "--image", "wigner_image", "also write a PGM image");

  CLI::App* evolve = app.add_subcommand("evolve", "damp the field state");
  std::string state_path;
  evolve->add_option("--state", state_path,
                     "input state file (default: <out>/state.txt)");
  alias_option(evolve, "--t", "evolve_t_ms", "evolution time, ms");

  CLI::App* movie =
      app.add_subcommand("movie", "decoherence snapshots plus coherence series");
  alias_option(movie, "--windows", "movie_windows_ms", "comma list of windows, ms");
  alias_option(movie, "--mode", "movie_mode", "via-measurement|ideal");
  alias_option(movie, "--atoms", "movie_atoms", "atoms per setting and window");

  CLI::App* fit = app.add_subcommand("fit-td", "fit the coherence decay time");
  std::string series_path;
  fit->add_option("--series", series_path,
                  "coherence series file (default: <out>/series.csv)");

  app.add_subcommand("selftest", "run quick analytic checks");

  for (CLI::App* sub : app.get_subcommands([](CLI::App*) { return true; }))
    sub->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("selftest")) return selftest();

    const RunConfig cfg = assemble_config(cli);
    namespace fs = std::filesystem;

    if (app.got_subcommand("prepare"))
      return run_stages(cfg, {"prepare"}, cli.out_dir) ? 0 : 1;
    if (app.got_subcommand("simulate-measure"))
      return run_stages(cfg, {"simulate-measure"}, cli.out_dir) ? 0 : 1;

    if (app.got_subcommand("reconstruct")) {
      if (records_path.empty())
        return run_stages(cfg, {"reconstruct"}, cli.out_dir) ? 0 : 1;
      // direct mode: reconstruct an arbitrary record file, skip the manifest
      const DispersiveParams p = cfg.dispersive();
      const auto records = load_records(records_path, p.omega_hz, p.t_eff_s);
      const ConstraintSet cs = build_constraints(records, cfg.dim, cfg.imperfection());
      const ReconstructionResult res = reconstruct(cs, cfg.recon_options());
      fs::create_directories(cli.out_dir);
      const std::string state_out = cli.out_dir + "/reconstructed.txt";
      save_state(res.rho, state_out);
      save_report(res, cli.out_dir + "/report.txt");
      std::printf("reconstructed %zu settings -> %s (entropy %.4f, %s)\n",
                  cs.constraints.size(), state_out.c_str(), res.entropy,
                  res.converged ? "converged" : "not converged");
      if (!res.converged)
        std::fprintf(stderr, "error: stage reconstruct: %s\n", res.message.c_str());
      return res.converged ? 0 : 1;
    }

    if (app.got_subcommand("wigner"))
      return run_stages(cfg, {"wigner"}, cli.out_dir) ? 0 : 1;

    if (app.got_subcommand("evolve")) {
      if (state_path.empty()) return run_stages(cfg, {"evolve"}, cli.out_dir) ? 0 : 1;
      const FieldState rho = load_state(state_path);
      const FieldState evolved =
          lindblad_evolve(rho, cfg.evolve_t_ms * 1e-3, cfg.cavity());
      fs::create_directories(cli.out_dir);
      const std::string evolved_out = cli.out_dir + "/evolved.txt";
      save_state(evolved, evolved_out);
      std::printf("evolved %s by %g ms -> %s\n", state_path.c_str(), cfg.evolve_t_ms,
                  evolved_out.c_str());
      return 0;
    }

    if (app.got_subcommand("movie")) {
      std::vector<std::string> stages;
      if (!fs::exists(fs::path(cli.out_dir) / "state.txt"))
        stages.push_back("prepare");
      else
        std::printf("reusing %s/state.txt; prepare skipped\n", cli.out_dir.c_str());
      stages.push_back("movie");
      return run_stages(cfg, stages, cli.out_dir) ? 0 : 1;
    }

    if (app.got_subcommand("fit-td")) {
      const std::string path =
          series_path.empty() ? cli.out_dir + "/series.csv" : series_path;
      const auto rows = load_series(path);
      std::vector<SeriesPoint> pts;
      pts.reserve(rows.size());
      for (const SeriesRow& r : rows)
        pts.push_back({r.t_ms * 1e-3, r.coherence, r.err});
      const ExponentialFit fitted = fit_exponential_offset(pts);
      print_fit(fitted, rows.size());
      fs::create_directories(cli.out_dir);
      write_fit_file(fitted, rows.size(), cli.out_dir + "/fit.txt");
      return fitted.t_d_s > 0.0 ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
