#pragma once

#include <cmath>
#include <algorithm>
#include <cstdint>
#include <string>
#include <numbers>
#include <span>
#include <vector>

#include "pairwfs/fft.hpp"
#include "pairwfs/field.hpp"

namespace pairwfs {

/// Detector-plane position behind a lens for angular coordinate q.
inline double detector_position(double q, double wavelength, double focal_length) {
  return q * wavelength * focal_length / (2.0 * std::numbers::pi);
}

namespace detail {
inline ComplexField fourier(const ComplexField& f, fft::Direction dir, Domain out_domain) {
  require(all_finite(f.values), ErrorCode::non_finite, "field contains non-finite values");
  const Grid out_grid = f.grid.reciprocal();
  ComplexField out(out_grid, f.rank, f.values, f.wavelength, out_domain);
  fft::centered(out.values, f.rank, f.grid.n_points, dir);
  const double per_axis = std::sqrt(f.grid.spacing() / out_grid.spacing());
  const double s = f.rank == 1 ? per_axis : per_axis * per_axis;
  for (auto& v : out.values) v *= s;
  return out;
}
}  // namespace detail

/// Lens Fourier transform to the angular (q) domain. Power is preserved:
/// sum |A|^2 dq = sum |a|^2 dx. The focal length only sets the detector
/// scale (see detector_position), so it is validated but not stored.
inline ComplexField far_field(const ComplexField& f, double focal_length = 1.0) {
  require(f.domain == Domain::position, ErrorCode::invalid_argument,
          "far_field expects a position-domain field");
  require(focal_length > 0.0, ErrorCode::invalid_argument, "focal length must be positive");
  return detail::fourier(f, fft::Direction::forward, Domain::angular);
}

/// Inverse of far_field.
inline ComplexField near_field(const ComplexField& f) {
  require(f.domain == Domain::angular, ErrorCode::invalid_argument,
          "near_field expects an angular-domain field");
  return detail::fourier(f, fft::Direction::inverse, Domain::position);
}

struct PropagationOptions {
  /// Fraction of samples at each window edge treated as the guard band.
  double edge_fraction = 1.0 / 16.0;
  /// Maximum allowed fraction of output power inside the guard band.
  /// Values >= 1 disable the check.
  double max_edge_power = 1.0;
};

struct PropagationDiagnostics {
  double clipped_power_fraction = 0.0;
  double edge_power_fraction = 0.0;
};

namespace detail {

inline double edge_power_fraction(const ComplexField& f, double edge_fraction) {
  const std::size_t n = f.grid.n_points;
  const std::size_t band = std::max<std::size_t>(1, std::size_t(edge_fraction * double(n)));
  auto in_band = [&](std::size_t i) { return i < band || i >= n - band; };
  double edge = 0.0, total = 0.0;
  if (f.rank == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      const double p = std::norm(f.values[i]);
      total += p;
      if (in_band(i)) edge += p;
    }
  } else {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double p = std::norm(f.at(i, j));
        total += p;
        if (in_band(i) || in_band(j)) edge += p;
      }
  }
  return total > 0.0 ? edge / total : 0.0;
}

/// exp(i z (kz - k)) computed without cancellation, zero for evanescent q.
inline cplx propagation_phase(double q2, double k, double z, bool& evanescent) {
  const double k2 = k * k;
  if (q2 > k2) {
    evanescent = true;
    return {0.0, 0.0};
  }
  evanescent = false;
  const double dkz = -q2 / (k + std::sqrt(k2 - q2));
  return std::polar(1.0, z * dkz);
}

}  // namespace detail

/// Angular-spectrum propagation over `distance` with the exact kernel
/// exp(i z sqrt(k^2 - q^2)), dropping the constant phase exp(i k z) so that
/// long links keep full precision in the transverse phase. Evanescent
/// components are removed and their power fraction is reported in `diag`.
inline ComplexField propagate_angular_spectrum(const ComplexField& f, double distance,
                                               const PropagationOptions& opt = {},
                                               PropagationDiagnostics* diag = nullptr) {
  require(f.domain == Domain::position, ErrorCode::invalid_argument,
          "propagation expects a position-domain field");
  require(f.wavelength > 0.0, ErrorCode::invalid_argument, "field wavelength not set");
  require(std::isfinite(distance), ErrorCode::invalid_argument, "distance must be finite");
  if (distance == 0.0) {
    if (diag) *diag = {0.0, detail::edge_power_fraction(f, opt.edge_fraction)};
    return f;
  }
  ComplexField spec = far_field(f);
  const double k = 2.0 * std::numbers::pi / f.wavelength;
  const std::size_t n = spec.grid.n_points;
  const auto q = spec.grid.coords();
  double clipped = 0.0, total = 0.0;
  auto apply = [&](cplx& v, double q2) {
    bool ev = false;
    const cplx h = detail::propagation_phase(q2, k, distance, ev);
    const double p = std::norm(v);
    total += p;
    if (ev) clipped += p;
    v *= h;
  };
  if (f.rank == 1) {
    for (std::size_t i = 0; i < n; ++i) apply(spec.values[i], q[i] * q[i]);
  } else {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) apply(spec.at(i, j), q[i] * q[i] + q[j] * q[j]);
  }
  ComplexField out = near_field(spec);
  out.grid = f.grid;
  const double edge = detail::edge_power_fraction(out, opt.edge_fraction);
  if (diag) *diag = {total > 0.0 ? clipped / total : 0.0, edge};
  if (opt.max_edge_power < 1.0)
    require(edge <= opt.max_edge_power, ErrorCode::aliasing,
            "guard band holds " + std::to_string(edge) + " of the power (limit " +
                std::to_string(opt.max_edge_power) + ")");
  return out;
}

/// Pearson correlation over samples where mask is nonzero (all if empty).
inline double pearson_correlation(std::span<const double> a, std::span<const double> b,
                                  std::span<const std::uint8_t> mask = {}) {
  require(a.size() == b.size(), ErrorCode::grid_mismatch, "pearson: size mismatch");
  require(mask.empty() || mask.size() == a.size(), ErrorCode::grid_mismatch,
          "pearson: mask size mismatch");
  double ma = 0.0, mb = 0.0;
  std::size_t cnt = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    ma += a[i];
    mb += b[i];
    ++cnt;
  }
  require(cnt >= 2, ErrorCode::invalid_argument, "pearson: fewer than two samples");
  ma /= double(cnt);
  mb /= double(cnt);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  require(saa > 0.0 && sbb > 0.0, ErrorCode::zero_variance, "pearson: zero variance input");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

inline double pearson_correlation(const RealField& a, const RealField& b,
                                  std::span<const std::uint8_t> mask = {}) {
  require(a.grid == b.grid && a.rank == b.rank, ErrorCode::grid_mismatch,
          "pearson: fields on different grids");
  return pearson_correlation(std::span<const double>(a.values), std::span<const double>(b.values),
                             mask);
}

/// std/mean of an intensity pattern.
inline double speckle_contrast(std::span<const double> a) {
  require(!a.empty(), ErrorCode::invalid_argument, "empty pattern");
  double m = 0.0;
  for (double v : a) m += v;
  m /= double(a.size());
  require(m > 0.0, ErrorCode::zero_total, "speckle contrast of a zero field");
  double s = 0.0;
  for (double v : a) s += (v - m) * (v - m);
  return std::sqrt(s / double(a.size())) / m;
}

inline double speckle_contrast(const RealField& a) { return speckle_contrast(a.values); }

}  // namespace pairwfs
