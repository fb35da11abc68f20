#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "pairwfs/error.hpp"

namespace pairwfs {

using cplx = std::complex<double>;

enum class Domain { position, angular };

/// Uniform centered sampling of one transverse axis. Sample i sits at
/// (i - n/2) * spacing. In the angular domain the extent is in rad/m.
struct Grid {
  std::size_t n_points = 0;
  double extent = 0.0;

  Grid() = default;
  Grid(std::size_t n, double ext) : n_points(n), extent(ext) {
    require(n >= 2, ErrorCode::invalid_argument, "grid needs at least 2 points");
    require(std::isfinite(ext) && ext > 0.0, ErrorCode::invalid_argument,
            "grid extent must be positive");
  }

  double spacing() const { return extent / static_cast<double>(n_points); }
  std::ptrdiff_t center_index() const { return static_cast<std::ptrdiff_t>(n_points / 2); }
  double coord(std::size_t i) const {
    return (static_cast<double>(i) - static_cast<double>(n_points / 2)) * spacing();
  }
  std::vector<double> coords() const {
    std::vector<double> c(n_points);
    for (std::size_t i = 0; i < n_points; ++i) c[i] = coord(i);
    return c;
  }
  /// The grid conjugate under the discrete Fourier transform.
  Grid reciprocal() const {
    return Grid(n_points, 2.0 * std::numbers::pi / spacing());
  }
  bool operator==(const Grid& o) const {
    return n_points == o.n_points && std::abs(extent - o.extent) <= 1e-12 * extent;
  }
};

/// Complex amplitude on a square grid of rank 1 or 2 (row-major).
struct ComplexField {
  Grid grid;
  int rank = 1;
  std::vector<cplx> values;
  double wavelength = 0.0;
  Domain domain = Domain::position;

  ComplexField() = default;
  ComplexField(Grid g, int r, double lambda, Domain d = Domain::position)
      : grid(g), rank(r), values(count(g, r), cplx{}), wavelength(lambda), domain(d) {
    require(r == 1 || r == 2, ErrorCode::invalid_argument, "rank must be 1 or 2");
  }
  ComplexField(Grid g, int r, std::vector<cplx> v, double lambda, Domain d = Domain::position)
      : grid(g), rank(r), values(std::move(v)), wavelength(lambda), domain(d) {
    require(r == 1 || r == 2, ErrorCode::invalid_argument, "rank must be 1 or 2");
    require(values.size() == count(g, r), ErrorCode::grid_mismatch,
            "value count does not match grid");
  }

  static std::size_t count(const Grid& g, int r) {
    return r == 1 ? g.n_points : g.n_points * g.n_points;
  }
  std::size_t size() const { return values.size(); }
  double cell() const { return rank == 1 ? grid.spacing() : grid.spacing() * grid.spacing(); }
  cplx& at(std::size_t i, std::size_t j) { return values[i * grid.n_points + j]; }
  const cplx& at(std::size_t i, std::size_t j) const { return values[i * grid.n_points + j]; }
};

/// Nonnegative sampled quantity (intensity, coincidence rate).
struct RealField {
  Grid grid;
  int rank = 1;
  std::vector<double> values;
  double wavelength = 0.0;
  Domain domain = Domain::angular;

  RealField() = default;
  RealField(Grid g, int r, std::vector<double> v, double lambda = 0.0,
            Domain d = Domain::angular)
      : grid(g), rank(r), values(std::move(v)), wavelength(lambda), domain(d) {
    require(r == 1 || r == 2, ErrorCode::invalid_argument, "rank must be 1 or 2");
    require(values.size() == ComplexField::count(g, r), ErrorCode::grid_mismatch,
            "value count does not match grid");
  }
  std::size_t size() const { return values.size(); }
  double cell() const { return rank == 1 ? grid.spacing() : grid.spacing() * grid.spacing(); }
  double sum() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  double at(std::size_t i, std::size_t j) const { return values[i * grid.n_points + j]; }
};

inline double power(const ComplexField& f) {
  double p = 0.0;
  for (const auto& v : f.values) p += std::norm(v);
  return p * f.cell();
}

inline RealField intensity(const ComplexField& f) {
  std::vector<double> v(f.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::norm(f.values[i]);
  return RealField(f.grid, f.rank, std::move(v), f.wavelength, f.domain);
}

/// Scale so that sum(values) * cell == 1.
inline RealField normalized(RealField f) {
  const double total = f.sum() * f.cell();
  require(total > 0.0, ErrorCode::zero_total, "pattern has zero total");
  for (double& v : f.values) v /= total;
  return f;
}

inline bool all_finite(std::span<const cplx> v) {
  for (const auto& c : v)
    if (!std::isfinite(c.real()) || !std::isfinite(c.imag())) return false;
  return true;
}

}  // namespace pairwfs
