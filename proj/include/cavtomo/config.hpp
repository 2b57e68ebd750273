#pragma once

// Run configuration: a flat key = value text file with '#' comments.  Every
// key has a CLI flag twin and flag values win.  serialize() emits the keys in
// one canonical order so the config hash is stable across platforms.

#include <cstdint>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cavtomo/cat.hpp"
#include "cavtomo/dispersive.hpp"
#include "cavtomo/dynamics.hpp"
#include "cavtomo/maxent.hpp"
#include "cavtomo/measurement.hpp"
#include "cavtomo/rng.hpp"

namespace cavtomo {

struct RunConfig {
  long dim = 11;
  std::uint64_t seed = 1;
  int threads = 1;

  // cavity and probe hardware
  double t_c_s = 0.13;
  double n_b = 0.05;
  double omega_hz = 49000.0;
  double delta_hz = 65000.0;
  double t_eff_s = 0.0;  // 0 = calibrate from the anchor below
  double anchor_delta_hz = 120000.0;
  double anchor_n = 3.0;
  double anchor_slope_rad = kPi / 2.0;

  // detection imperfection
  double contrast = 0.8;
  double offset = 0.0;

  // state preparation
  std::string prepare_kind = "coherent";  // coherent|fock|cat|cat-mixture
  double prepare_nm = 2.5;                // mean photon number of the source
  long prepare_n0 = 0;                    // fock target
  double prepare_chi_rad = 0.37 * kPi;
  std::string prepare_parity = "even";  // even|odd, cat kind only
  bool prepare_exact_nonlinear = false;
  bool prepare_ideal = false;  // fock: skip the projective sequence
  double qnd_threshold = 0.9;
  long qnd_max_atoms = 60;

  // sampling plan; zeros mean "use the defaults for prepare_kind"
  long plan_points = 0;
  std::string plan_phi_offsets;  // comma list, radians added to -Phi(0, delta)
  double plan_radius = 0.0;
  long atoms_per_setting = 0;

  // reconstruction
  std::string recon_mode = "relaxed";  // exact|relaxed
  double recon_tol = 1e-4;
  long recon_max_iter = 2000;

  // wigner rendering
  double wigner_extent = 3.5;
  long wigner_res = 101;
  std::string wigner_units = "two-over-pi";  // two-over-pi|natural
  bool wigner_image = false;

  // dynamics stages
  double evolve_t_ms = 10.0;
  std::string movie_windows_ms = "1.3,4.3,15.8,22.9";
  std::string movie_mode = "via-measurement";  // via-measurement|ideal
  long movie_atoms = 2000;

  DispersiveParams dispersive() const {
    DispersiveParams base{omega_hz, delta_hz, t_eff_s};
    if (t_eff_s > 0.0) {
      base.validate();
      return base;
    }
    return calibrate_teff({anchor_delta_hz, anchor_n, anchor_slope_rad}, base);
  }

  CavityParams cavity() const {
    CavityParams c{t_c_s, n_b};
    c.validate();
    return c;
  }

  ImperfectionModel imperfection() const {
    ImperfectionModel imp{contrast, offset};
    imp.validate();
    return imp;
  }

  CatSpec cat_spec() const {
    CatSpec spec;
    spec.beta = std::sqrt(prepare_nm);
    spec.chi = prepare_chi_rad;
    spec.exact_nonlinear = prepare_exact_nonlinear;
    if (prepare_kind == "cat-mixture")
      spec.parity = CatParity::mixture;
    else if (prepare_parity == "even")
      spec.parity = CatParity::even;
    else if (prepare_parity == "odd")
      spec.parity = CatParity::odd;
    else
      throw std::invalid_argument("RunConfig: prepare_parity must be even or odd");
    spec.validate();
    return spec;
  }

  ReconstructOptions recon_options() const {
    if (recon_mode != "exact" && recon_mode != "relaxed")
      throw std::invalid_argument("RunConfig: recon_mode must be exact or relaxed");
    ReconstructOptions opts;
    opts.noise_relaxation = recon_mode == "relaxed";
    opts.tol = recon_tol;
    opts.max_iter = recon_max_iter;
    return opts;
  }

  void validate() const {
    if (dim < 2) throw std::invalid_argument("RunConfig: dim must be >= 2");
    if (threads < 1) throw std::invalid_argument("RunConfig: threads must be >= 1");
    if (prepare_kind != "coherent" && prepare_kind != "fock" &&
        prepare_kind != "cat" && prepare_kind != "cat-mixture")
      throw std::invalid_argument("RunConfig: unknown prepare_kind " + prepare_kind);
    if (prepare_parity != "even" && prepare_parity != "odd")
      throw std::invalid_argument("RunConfig: prepare_parity must be even or odd");
    if (movie_mode != "via-measurement" && movie_mode != "ideal")
      throw std::invalid_argument(
          "RunConfig: movie_mode must be via-measurement or ideal");
    if (wigner_units != "two-over-pi" && wigner_units != "natural")
      throw std::invalid_argument("RunConfig: wigner_units must be two-over-pi or natural");
    if (!(wigner_extent > 0.0))
      throw std::invalid_argument("RunConfig: wigner_extent must be positive");
    if (wigner_res < 2) throw std::invalid_argument("RunConfig: wigner_res must be >= 2");
    dispersive();
    cavity();
    imperfection();
    recon_options();
  }
};

inline std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::string item;
  std::istringstream stream(text);
  while (std::getline(stream, item, ',')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    std::size_t used = 0;
    const double v = std::stod(item, &used);
    if (item.find_first_not_of(" \t", used) != std::string::npos)
      throw std::invalid_argument("bad number in list: " + item);
    out.push_back(v);
  }
  return out;
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto from = s.find_first_not_of(" \t\r");
  if (from == std::string::npos) return "";
  const auto to = s.find_last_not_of(" \t\r");
  return s.substr(from, to - from + 1);
}

// one table drives parsing, overriding, and serialization
struct ConfigKey {
  const char* name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

inline long parse_long(const std::string& v) {
  std::size_t used = 0;
  const long out = std::stol(v, &used);
  if (used != v.size()) throw std::invalid_argument("bad integer: " + v);
  return out;
}

inline double parse_real(const std::string& v) {
  std::size_t used = 0;
  const double out = std::stod(v, &used);
  if (used != v.size()) throw std::invalid_argument("bad number: " + v);
  return out;
}

inline bool parse_flag(const std::string& v) {
  if (v == "1" || v == "true" || v == "on") return true;
  if (v == "0" || v == "false" || v == "off") return false;
  throw std::invalid_argument("bad flag value: " + v);
}

inline const std::vector<ConfigKey>& config_keys() {
  auto real_key = [](const char* name, double RunConfig::* field) {
    return ConfigKey{
        name,
        [field](RunConfig& c, const std::string& v) { c.*field = parse_real(v); },
        [field](const RunConfig& c) {
          std::ostringstream out;
          out.precision(17);
          out << c.*field;
          return out.str();
        }};
  };
  auto long_key = [](const char* name, long RunConfig::* field) {
    return ConfigKey{
        name,
        [field](RunConfig& c, const std::string& v) { c.*field = parse_long(v); },
        [field](const RunConfig& c) { return std::to_string(c.*field); }};
  };
  auto flag_key = [](const char* name, bool RunConfig::* field) {
    return ConfigKey{
        name,
        [field](RunConfig& c, const std::string& v) { c.*field = parse_flag(v); },
        [field](const RunConfig& c) { return std::string(c.*field ? "1" : "0"); }};
  };
  auto text_key = [](const char* name, std::string RunConfig::* field) {
    return ConfigKey{name,
                     [field](RunConfig& c, const std::string& v) { c.*field = v; },
                     [field](const RunConfig& c) { return c.*field; }};
  };
  static const std::vector<ConfigKey> keys = {
      long_key("dim", &RunConfig::dim),
      ConfigKey{"seed",
                [](RunConfig& c, const std::string& v) {
                  std::size_t used = 0;
                  c.seed = std::stoull(v, &used);
                  if (used != v.size())
                    throw std::invalid_argument("bad integer: " + v);
                },
                [](const RunConfig& c) { return std::to_string(c.seed); }},
      ConfigKey{"threads",
                [](RunConfig& c, const std::string& v) {
                  c.threads = int(parse_long(v));
                },
                [](const RunConfig& c) { return std::to_string(c.threads); }},
      real_key("t_c_s", &RunConfig::t_c_s),
      real_key("n_b", &RunConfig::n_b),
      real_key("omega_hz", &RunConfig::omega_hz),
      real_key("delta_hz", &RunConfig::delta_hz),
      real_key("t_eff_s", &RunConfig::t_eff_s),
      real_key("anchor_delta_hz", &RunConfig::anchor_delta_hz),
      real_key("anchor_n", &RunConfig::anchor_n),
      real_key("anchor_slope_rad", &RunConfig::anchor_slope_rad),
      real_key("contrast", &RunConfig::contrast),
      real_key("offset", &RunConfig::offset),
      text_key("prepare_kind", &RunConfig::prepare_kind),
      real_key("prepare_nm", &RunConfig::prepare_nm),
      long_key("prepare_n0", &RunConfig::prepare_n0),
      real_key("prepare_chi_rad", &RunConfig::prepare_chi_rad),
      text_key("prepare_parity", &RunConfig::prepare_parity),
      flag_key("prepare_exact_nonlinear", &RunConfig::prepare_exact_nonlinear),
      flag_key("prepare_ideal", &RunConfig::prepare_ideal),
      real_key("qnd_threshold", &RunConfig::qnd_threshold),
      long_key("qnd_max_atoms", &RunConfig::qnd_max_atoms),
      long_key("plan_points", &RunConfig::plan_points),
      text_key("plan_phi_offsets", &RunConfig::plan_phi_offsets),
      real_key("plan_radius", &RunConfig::plan_radius),
      long_key("atoms_per_setting", &RunConfig::atoms_per_setting),
      text_key("recon_mode", &RunConfig::recon_mode),
      real_key("recon_tol", &RunConfig::recon_tol),
      long_key("recon_max_iter", &RunConfig::recon_max_iter),
      real_key("wigner_extent", &RunConfig::wigner_extent),
      long_key("wigner_res", &RunConfig::wigner_res),
      text_key("wigner_units", &RunConfig::wigner_units),
      flag_key("wigner_image", &RunConfig::wigner_image),
      real_key("evolve_t_ms", &RunConfig::evolve_t_ms),
      text_key("movie_windows_ms", &RunConfig::movie_windows_ms),
      text_key("movie_mode", &RunConfig::movie_mode),
      long_key("movie_atoms", &RunConfig::movie_atoms),
  };
  return keys;
}

inline const ConfigKey& find_key(const std::string& name) {
  for (const auto& k : config_keys())
    if (name == k.name) return k;
  throw std::invalid_argument("unknown config key: " + name);
}

}  // namespace detail

inline void set_config_value(RunConfig& cfg, const std::string& key,
                             const std::string& value) {
  detail::find_key(key).set(cfg, value);
}

inline std::vector<std::string> config_key_names() {
  std::vector<std::string> names;
  for (const auto& k : detail::config_keys()) names.emplace_back(k.name);
  return names;
}

inline RunConfig parse_config(std::istream& in) {
  RunConfig cfg;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    try {
      set_config_value(cfg, key, value);
    } catch (const std::exception& e) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": " +
                                  e.what());
    }
  }
  return cfg;
}

inline RunConfig parse_config_text(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

inline std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream out;
  for (const auto& k : detail::config_keys())
    out << k.name << " = " << k.get(cfg) << "\n";
  return out.str();
}

inline std::uint64_t config_hash(const RunConfig& cfg) {
  return hash_tag(serialize_config(cfg));
}

}  // namespace cavtomo
