#pragma once

// Phase-space representation.
//
// W(alpha) = 2 Tr[D(-alpha) rho D(alpha) e^{i pi N}] / pi with alpha = x + i y,
// so the natural-units integral over dx dy is 1 and |W| <= 2/pi everywhere
// (the displaced parity has spectrum +-1).  Grids can also be expressed in
// multiples of 2/pi, where the vacuum peak reads 1.
//
// The displaced parity is evaluated through the exact displaced-Fock
// overlaps <n|D(alpha)|k>, built by recurrence.  Exponentials of the
// truncated generator are useless here: far from the origin they wrap the
// state around the truncation edge and the parity sum turns into rim noise,
// while the overlap form stays correct for any state held in the space.
// W(alpha) = (2/pi) sum_k (-1)^k c_k^dag rho c_k with c_k(n) = <n|D(alpha)|k>,
// and the sum over k self-terminates once the displaced |k> no longer
// reaches back into the stored block.

#include <cmath>
#include <complex>
#include <stdexcept>
#include <thread>
#include <vector>

#include "cavtomo/fock.hpp"

namespace cavtomo {

enum class WignerUnits { natural, two_over_pi };

struct GridExtent {
  double x_min = -3.5;
  double x_max = 3.5;
  double y_min = -3.5;
  double y_max = 3.5;

  void validate() const {
    if (!(x_min < x_max) || !(y_min < y_max))
      throw std::invalid_argument("GridExtent: degenerate extent");
  }
};

struct WignerGrid {
  GridExtent extent;
  Index nx = 0;
  Index ny = 0;
  Eigen::MatrixXd values;  // values(ix, iy) = W(x_at(ix) + i y_at(iy))
  WignerUnits units = WignerUnits::two_over_pi;

  double x_at(Index ix) const {
    return extent.x_min + (extent.x_max - extent.x_min) * double(ix) / double(nx - 1);
  }
  double y_at(Index iy) const {
    return extent.y_min + (extent.y_max - extent.y_min) * double(iy) / double(ny - 1);
  }
  double dx() const { return (extent.x_max - extent.x_min) / double(nx - 1); }
  double dy() const { return (extent.y_max - extent.y_min) / double(ny - 1); }

  // factor turning stored values into natural units
  double natural_scale() const {
    return units == WignerUnits::two_over_pi ? 2.0 / kPi : 1.0;
  }
};

namespace detail {

inline double drop_imaginary(Complex w) {
  if (std::abs(w.imag()) > 1e-10)
    throw std::runtime_error("wigner: imaginary residue " +
                             std::to_string(w.imag()));
  return w.real();
}

// Natural-units Wigner value at one point.  Columns of the displacement,
// c_k(n) = <n|D(alpha)|k>, follow from
//   <0|D|k>   = e^{-|a|^2/2} (-a*)^k / sqrt(k!)
//   <n+1|D|k> = (a <n|D|k> + sqrt(k) <n|D|k-1>) / sqrt(n+1)
// which stays stable for the small n of the stored block.
inline double wigner_point(const ComplexMatrix& rho, Complex alpha) {
  const Index d = rho.rows();
  const double r2 = std::norm(alpha);
  const Index k_cap = Index(std::ceil(r2 + double(d) +
                                      8.0 * std::sqrt(r2 * double(d) + 1.0))) + 16;
  ComplexVector prev = ComplexVector::Zero(d);
  ComplexVector cur(d);
  Complex head = std::exp(-0.5 * r2);  // <0|D|k>, updated per column
  Complex s = 0.0;
  double small_run = 0.0;
  for (Index k = 0; k < k_cap; ++k) {
    if (k > 0) head *= -std::conj(alpha) / std::sqrt(double(k));
    cur(0) = head;
    for (Index n = 0; n + 1 < d; ++n)
      cur(n + 1) = (alpha * cur(n) + std::sqrt(double(k)) * prev(n)) /
                   std::sqrt(double(n + 1));
    const Complex contribution = cur.dot(rho * cur);
    s += (k % 2 ? -1.0 : 1.0) * contribution;
    const double weight = cur.squaredNorm();
    if (double(k) > r2 + double(d)) {
      small_run = weight < 1e-17 ? small_run + 1.0 : 0.0;
      if (small_run >= 2.0) break;
    }
    prev.swap(cur);
  }
  return (2.0 / kPi) * drop_imaginary(s);
}

}  // namespace detail

inline double wigner_at(const FieldState& rho, Complex alpha) {
  return detail::wigner_point(rho.matrix(), alpha);
}

inline WignerGrid wigner_grid(const FieldState& rho, GridExtent extent = {},
                              Index nx = 101, Index ny = 101,
                              WignerUnits units = WignerUnits::two_over_pi,
                              int threads = 1) {
  extent.validate();
  if (nx < 2 || ny < 2)
    throw std::invalid_argument("wigner_grid: resolution must be >= 2x2");
  if (threads < 1) throw std::invalid_argument("wigner_grid: threads must be >= 1");

  WignerGrid out;
  out.extent = extent;
  out.nx = nx;
  out.ny = ny;
  out.units = units;
  out.values.resize(nx, ny);
  const double unit_scale = units == WignerUnits::two_over_pi ? kPi / 2.0 : 1.0;

  auto render_columns = [&](Index ix_begin, Index ix_end) {
    for (Index ix = ix_begin; ix < ix_end; ++ix) {
      const double x = out.x_at(ix);
      for (Index iy = 0; iy < ny; ++iy)
        out.values(ix, iy) =
            unit_scale *
            detail::wigner_point(rho.matrix(), Complex(x, out.y_at(iy)));
    }
  };

  const int t_count = int(std::min<Index>(threads, nx));
  if (t_count <= 1) {
    render_columns(0, nx);
  } else {
    std::vector<std::thread> pool;
    const Index chunk = (nx + t_count - 1) / t_count;
    for (int t = 0; t < t_count; ++t) {
      const Index lo = Index(t) * chunk;
      const Index hi = std::min(nx, lo + chunk);
      if (lo < hi) pool.emplace_back(render_columns, lo, hi);
    }
    for (auto& th : pool) th.join();
  }
  return out;
}

namespace detail {

template <typename CellFn>
double trapezoid_sum(const WignerGrid& g, CellFn&& cell) {
  double sum = 0.0;
  for (Index ix = 0; ix < g.nx; ++ix) {
    const double wx = (ix == 0 || ix == g.nx - 1) ? 0.5 : 1.0;
    for (Index iy = 0; iy < g.ny; ++iy) {
      const double wy = (iy == 0 || iy == g.ny - 1) ? 0.5 : 1.0;
      sum += wx * wy * cell(g.values(ix, iy));
    }
  }
  return sum * g.dx() * g.dy();
}

}  // namespace detail

// integral of W over the grid, natural units
inline double grid_integral(const WignerGrid& g) {
  const double s = g.natural_scale();
  return detail::trapezoid_sum(g, [s](double w) { return s * w; });
}

// integrated negative part, natural units
inline double negativity_volume(const WignerGrid& g) {
  const double s = g.natural_scale();
  return detail::trapezoid_sum(g, [s](double w) { return std::max(0.0, -s * w); });
}

}  // namespace cavtomo
