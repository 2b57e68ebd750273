#pragma once

// Text artifact formats.  Everything is written with 17 significant digits
// (%.16e) so a write/read cycle reproduces every double bit-exactly.
//
//   state file    line 1 "dim D", then D*D lines "n m re im", row-major
//   records file  one line per setting: alpha_re alpha_im phi delta_hz
//                 window_index n_e n_g (the dispersive omega and t_eff are
//                 run-level context, supplied again when loading)
//   wigner csv    header "x,y,w", row-major over x then y
//   series csv    header "t_ms,coherence,err"
//   report        key-value lines plus a residual histogram
//   pgm image     plain text P2, gray levels mapped from [-max|W|, +max|W|]

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cavtomo/fock.hpp"
#include "cavtomo/maxent.hpp"
#include "cavtomo/measurement.hpp"
#include "cavtomo/wigner.hpp"

namespace cavtomo {

namespace detail {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.16e", v);
  return buf;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  return out;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  return in;
}

}  // namespace detail

inline void save_state(const FieldState& state, const std::string& path) {
  auto out = detail::open_out(path);
  const Index d = state.dim();
  out << "dim " << d << "\n";
  for (Index n = 0; n < d; ++n)
    for (Index m = 0; m < d; ++m)
      out << n << " " << m << " " << detail::format_double(state.matrix()(n, m).real())
          << " " << detail::format_double(state.matrix()(n, m).imag()) << "\n";
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline FieldState load_state(const std::string& path) {
  auto in = detail::open_in(path);
  std::string tag;
  Index d = 0;
  if (!(in >> tag >> d) || tag != "dim" || d < 1)
    throw std::runtime_error("state file " + path + ": bad header");
  ComplexMatrix m(d, d);
  for (Index n = 0; n < d; ++n)
    for (Index k = 0; k < d; ++k) {
      Index rn = 0, rm = 0;
      double re = 0.0, im = 0.0;
      if (!(in >> rn >> rm >> re >> im) || rn != n || rm != k)
        throw std::runtime_error("state file " + path + ": bad row for (" +
                                 std::to_string(n) + "," + std::to_string(k) + ")");
      m(n, k) = Complex(re, im);
    }
  return FieldState(std::move(m));  // validates hermiticity, trace, spectrum
}

inline void save_records(const std::vector<DetectionRecord>& records,
                         const std::string& path) {
  auto out = detail::open_out(path);
  for (const auto& r : records)
    out << detail::format_double(r.setting.alpha.real()) << " "
        << detail::format_double(r.setting.alpha.imag()) << " "
        << detail::format_double(r.setting.phi) << " "
        << detail::format_double(r.setting.dispersive.delta_hz) << " "
        << r.setting.window_index << " " << r.n_e << " " << r.n_g << "\n";
  if (!out) throw std::runtime_error("write failed: " + path);
}

// omega and t_eff are not stored per line; the caller restores them
inline std::vector<DetectionRecord> load_records(const std::string& path,
                                                 double omega_hz, double t_eff_s) {
  auto in = detail::open_in(path);
  std::vector<DetectionRecord> records;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    double are = 0.0, aim = 0.0, phi = 0.0, delta = 0.0;
    int window = 0;
    long n_e = 0, n_g = 0;
    if (!(row >> are >> aim >> phi >> delta >> window >> n_e >> n_g))
      throw std::runtime_error("records file " + path + ": bad line " +
                               std::to_string(line_no));
    DetectionRecord r;
    r.setting = {Complex(are, aim), phi, {omega_hz, delta, t_eff_s}, window};
    r.n_e = n_e;
    r.n_g = n_g;
    records.push_back(r);
  }
  return records;
}

inline void save_wigner_csv(const WignerGrid& grid, const std::string& path) {
  auto out = detail::open_out(path);
  out << "x,y,w\n";
  for (Index ix = 0; ix < grid.nx; ++ix)
    for (Index iy = 0; iy < grid.ny; ++iy)
      out << detail::format_double(grid.x_at(ix)) << ","
          << detail::format_double(grid.y_at(iy)) << ","
          << detail::format_double(grid.values(ix, iy)) << "\n";
  if (!out) throw std::runtime_error("write failed: " + path);
}

// the csv carries no units tag; the caller says how the file was written
inline WignerGrid load_wigner_csv(const std::string& path,
                                  WignerUnits units = WignerUnits::two_over_pi) {
  auto in = detail::open_in(path);
  std::string line;
  if (!std::getline(in, line) || line != "x,y,w")
    throw std::runtime_error("wigner file " + path + ": bad header");
  std::vector<double> xs, ys, ws;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    double x = 0.0, y = 0.0, w = 0.0;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &x, &y, &w) != 3)
      throw std::runtime_error("wigner file " + path + ": bad row");
    xs.push_back(x);
    ys.push_back(y);
    ws.push_back(w);
  }
  if (xs.empty()) throw std::runtime_error("wigner file " + path + ": empty");
  Index ny = 0;
  while (ny < Index(xs.size()) && xs[ny] == xs[0]) ++ny;
  if (ny < 2 || Index(xs.size()) % ny != 0)
    throw std::runtime_error("wigner file " + path + ": not a grid");
  const Index nx = Index(xs.size()) / ny;
  if (nx < 2) throw std::runtime_error("wigner file " + path + ": not a grid");
  WignerGrid grid;
  grid.extent = {xs.front(), xs.back(), ys.front(), ys[ny - 1]};
  grid.extent.validate();
  grid.nx = nx;
  grid.ny = ny;
  grid.units = units;
  grid.values.resize(nx, ny);
  for (Index ix = 0; ix < nx; ++ix)
    for (Index iy = 0; iy < ny; ++iy) {
      const Index row = ix * ny + iy;
      if (xs[row] != xs[ix * ny] || ys[row] != ys[iy])
        throw std::runtime_error("wigner file " + path + ": ragged grid");
      grid.values(ix, iy) = ws[row];
    }
  return grid;
}

struct SeriesRow {
  double t_ms = 0.0;
  double coherence = 0.0;
  double err = 0.0;
};

inline void save_series(const std::vector<SeriesRow>& rows, const std::string& path) {
  auto out = detail::open_out(path);
  out << "t_ms,coherence,err\n";
  for (const auto& r : rows)
    out << detail::format_double(r.t_ms) << "," << detail::format_double(r.coherence)
        << "," << detail::format_double(r.err) << "\n";
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline std::vector<SeriesRow> load_series(const std::string& path) {
  auto in = detail::open_in(path);
  std::string line;
  if (!std::getline(in, line) || line != "t_ms,coherence,err")
    throw std::runtime_error("series file " + path + ": bad header");
  std::vector<SeriesRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    SeriesRow r;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &r.t_ms, &r.coherence, &r.err) != 3)
      throw std::runtime_error("series file " + path + ": bad row");
    rows.push_back(r);
  }
  return rows;
}

inline void save_report(const ReconstructionResult& result, const std::string& path) {
  auto out = detail::open_out(path);
  out << "entropy " << detail::format_double(result.entropy) << "\n";
  out << "iterations " << result.iterations << "\n";
  out << "converged " << (result.converged ? 1 : 0) << "\n";
  if (!result.message.empty()) out << "message " << result.message << "\n";
  out << "residual_histogram\n";
  double lo = 0.0, hi = 0.0;
  for (double r : result.residuals) {
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  const int bins = 10;
  const double width = (hi - lo) > 0.0 ? (hi - lo) / bins : 1.0;
  std::vector<long> counts(bins, 0);
  for (double r : result.residuals) {
    int b = int((r - lo) / width);
    counts[std::clamp(b, 0, bins - 1)] += 1;
  }
  for (int b = 0; b < bins; ++b)
    out << detail::format_double(lo + b * width) << " "
        << detail::format_double(lo + (b + 1) * width) << " " << counts[b] << "\n";
  if (!out) throw std::runtime_error("write failed: " + path);
}

struct ReportSummary {
  double entropy = 0.0;
  long iterations = 0;
  bool converged = false;
};

inline ReportSummary load_report(const std::string& path) {
  auto in = detail::open_in(path);
  ReportSummary summary;
  std::string key;
  bool have_entropy = false, have_iterations = false, have_converged = false;
  while (in >> key) {
    if (key == "entropy") {
      have_entropy = bool(in >> summary.entropy);
    } else if (key == "iterations") {
      have_iterations = bool(in >> summary.iterations);
    } else if (key == "converged") {
      int flag = 0;
      have_converged = bool(in >> flag);
      summary.converged = flag != 0;
    } else {
      break;  // message or histogram section
    }
  }
  if (!have_entropy || !have_iterations || !have_converged)
    throw std::runtime_error("report file " + path + ": missing fields");
  return summary;
}

inline void save_wigner_pgm(const WignerGrid& grid, const std::string& path) {
  auto out = detail::open_out(path);
  double peak = 0.0;
  for (Index ix = 0; ix < grid.nx; ++ix)
    for (Index iy = 0; iy < grid.ny; ++iy)
      peak = std::max(peak, std::abs(grid.values(ix, iy)));
  if (peak == 0.0) peak = 1.0;
  out << "P2\n" << grid.nx << " " << grid.ny << "\n255\n";
  // image rows from the top of the plot down
  for (Index iy = grid.ny - 1; iy >= 0; --iy) {
    for (Index ix = 0; ix < grid.nx; ++ix) {
      const int level =
          int(std::lround(255.0 * (grid.values(ix, iy) + peak) / (2.0 * peak)));
      out << std::clamp(level, 0, 255) << (ix + 1 < grid.nx ? " " : "\n");
    }
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace cavtomo
