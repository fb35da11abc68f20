#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "pairwfs/optics.hpp"
#include "pairwfs/path.hpp"
#include "pairwfs/random.hpp"

namespace pairwfs {

struct DiffuserSpec {
  double coherence_length = 0.0;  // d, m
  double opd_rms = 0.0;           // m
  double loss_strength = 0.0;     // s in [0, 1]
  std::uint64_t seed = 0;

  void validate() const {
    require(coherence_length > 0.0, ErrorCode::invalid_argument, "coherence length must be positive");
    require(opd_rms >= 0.0, ErrorCode::invalid_argument, "opd rms must be nonnegative");
    require(loss_strength >= 0.0 && loss_strength <= 1.0, ErrorCode::invalid_argument,
            "loss strength must lie in [0, 1]");
  }
  /// Default strength: opd rms of two photon wavelengths.
  static DiffuserSpec fully_developed(double d, double photon_wavelength, std::uint64_t seed) {
    return {d, 2.0 * photon_wavelength, 0.0, seed};
  }
};

/// One frozen thin medium: optical path delay plus amplitude transmission.
struct DiffuserRealization {
  Grid grid;
  int rank = 1;
  std::vector<double> opd;        // m
  std::vector<double> amplitude;  // in [1 - s, 1]
  DiffuserSpec spec;
};

struct VolumeDiffuser {
  DiffuserRealization first;
  DiffuserRealization second;
  double gap = 0.0;  // m
};

/// Gaussian random OPD with Gaussian autocorrelation exp(-r^2/d^2) and a
/// piecewise-constant amplitude per d-sized cell, t ~ unif(1 - s, 1).
inline DiffuserRealization synth_diffuser(const DiffuserSpec& spec, const Grid& grid, int rank = 1) {
  spec.validate();
  require(grid.spacing() < spec.coherence_length / 4.0, ErrorCode::under_resolved,
          "grid spacing must be below d/4");
  DiffuserRealization r{grid, rank, {}, {}, spec};
  Rng rng(splitmix64(spec.seed));
  r.opd = gaussian_correlated_field(grid, rank, spec.coherence_length, rng);
  for (auto& v : r.opd) v *= spec.opd_rms;
  const std::size_t n = grid.n_points;
  r.amplitude.assign(r.opd.size(), 1.0);
  if (spec.loss_strength > 0.0) {
    Rng arng(splitmix64(spec.seed ^ 0x5deece66dULL));
    std::uniform_real_distribution<double> u(1.0 - spec.loss_strength, 1.0);
    const auto cells = static_cast<std::size_t>(std::ceil(grid.extent / spec.coherence_length));
    std::vector<double> t(rank == 1 ? cells : cells * cells);
    for (auto& v : t) v = u(arng);
    auto cell = [&](std::size_t i) {
      return std::min(cells - 1, static_cast<std::size_t>(double(i) * grid.spacing() / spec.coherence_length));
    };
    if (rank == 1) {
      for (std::size_t i = 0; i < n; ++i) r.amplitude[i] = t[cell(i)];
    } else {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) r.amplitude[i * n + j] = t[cell(i) * cells + cell(j)];
    }
  }
  return r;
}

/// A = amplitude * exp(i 2 pi opd / lambda).
inline ComplexField transmission_at(const DiffuserRealization& r, double wavelength) {
  require(wavelength > 0.0, ErrorCode::invalid_argument, "wavelength must be positive");
  ComplexField f(r.grid, r.rank, wavelength);
  const double k = 2.0 * std::numbers::pi / wavelength;
  for (std::size_t i = 0; i < f.size(); ++i) f.values[i] = std::polar(r.amplitude[i], k * r.opd[i]);
  return f;
}

/// OPD = sign(y) lambda_photon / 4 with sign(0) = +1: a +-pi/2 phase step for
/// the photons and a 2 pi step (no effect) for the pump. y is the last
/// coordinate for rank 1 and the row coordinate for rank 2.
inline DiffuserRealization pi_step_mask(const Grid& grid, double photon_wavelength, int rank = 1) {
  DiffuserRealization r{grid, rank, {}, {}, {}};
  const std::size_t n = grid.n_points;
  r.opd.resize(ComplexField::count(grid, rank));
  r.amplitude.assign(r.opd.size(), 1.0);
  const double h = photon_wavelength / 4.0;
  for (std::size_t i = 0; i < r.opd.size(); ++i) {
    const std::size_t row = rank == 1 ? i : i / n;
    r.opd[i] = grid.coord(row) >= 0.0 ? h : -h;
  }
  r.spec = {grid.extent, h, 0.0, 0};
  return r;
}

/// Cyclic shift along the last axis by the nearest whole number of samples.
inline DiffuserRealization translate(const DiffuserRealization& r, double offset) {
  require(std::abs(offset) < r.grid.extent, ErrorCode::invalid_argument, "offset exceeds grid extent");
  const std::size_t n = r.grid.n_points;
  const auto s = static_cast<std::ptrdiff_t>(std::lround(offset / r.grid.spacing()));
  const std::size_t sh = static_cast<std::size_t>(((s % std::ptrdiff_t(n)) + std::ptrdiff_t(n)) % std::ptrdiff_t(n));
  if (sh == 0) return r;
  DiffuserRealization out = r;
  const std::size_t rows = r.rank == 1 ? 1 : n;
  for (std::size_t row = 0; row < rows; ++row)
    for (std::size_t j = 0; j < n; ++j) {
      out.opd[row * n + (j + sh) % n] = r.opd[row * n + j];
      out.amplitude[row * n + (j + sh) % n] = r.amplitude[row * n + j];
    }
  return out;
}

/// Optical path of a single thin diffuser at the given wavelength.
inline OpticalPath thin_path(const DiffuserRealization& r, double wavelength) {
  OpticalPath p(r.grid, r.rank, wavelength);
  p.mask(transmission_at(r, wavelength).values);
  return p;
}

/// first diffuser, free gap, second diffuser.
inline OpticalPath volume_path(const VolumeDiffuser& v, double wavelength) {
  OpticalPath p(v.first.grid, v.first.rank, wavelength);
  p.mask(transmission_at(v.first, wavelength).values).gap(v.gap).mask(transmission_at(v.second, wavelength).values);
  return p;
}

/// Far-field speckle correlation versus input tilt. Each tilt is rounded to
/// a whole number of angular samples so the output shift is an exact cyclic
/// shift, which is undone before correlating with the untilted pattern.
/// `mask` optionally restricts the correlation samples (angular grid).
inline std::vector<double> memory_effect_curve(const OpticalPath& medium, const ComplexField& probe,
                                               std::span<const double> tilt_angles,
                                               std::span<const std::uint8_t> mask = {}) {
  require(probe.rank == 1, ErrorCode::invalid_argument, "memory effect scan uses rank-1 probes");
  const double k = 2.0 * std::numbers::pi / medium.wavelength();
  const Grid qg = probe.grid.reciprocal();
  const std::size_t n = probe.grid.n_points;
  const RealField ref = intensity(far_field(medium.apply(probe)));
  std::vector<double> out;
  for (double theta : tilt_angles) {
    require(std::abs(k * theta) < qg.extent / 2.0, ErrorCode::invalid_argument,
            "tilt outside the angular window");
    const auto shift = static_cast<std::ptrdiff_t>(std::lround(k * theta / qg.spacing()));
    const double q = double(shift) * qg.spacing();
    ComplexField p = probe;
    for (std::size_t i = 0; i < n; ++i) p.values[i] *= std::polar(1.0, q * probe.grid.coord(i));
    const RealField I = intensity(far_field(medium.apply(std::move(p))));
    std::vector<double> back(n);
    for (std::size_t i = 0; i < n; ++i)
      back[i] = I.values[std::size_t((std::ptrdiff_t(i) + shift + std::ptrdiff_t(n)) % std::ptrdiff_t(n))];
    out.push_back(pearson_correlation(std::span<const double>(back), std::span<const double>(ref.values), mask));
  }
  return out;
}

/// (1 + var/mean^2)^-1: the phase-only focusing efficiency limit for a
/// transmission with the given first two moments.
inline double phase_only_efficiency_bound(double mean, double stddev) {
  require(mean > 0.0, ErrorCode::invalid_argument, "mean transmission must be positive");
  return 1.0 / (1.0 + stddev * stddev / (mean * mean));
}

}  // namespace pairwfs
