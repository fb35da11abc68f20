#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

#include "pairwfs/fft.hpp"
#include "pairwfs/field.hpp"
#include "pairwfs/fit.hpp"
#include "pairwfs/optics.hpp"

namespace pairwfs {

struct CrystalSpec {
  double length = 0.0;            // m
  double pump_wavelength = 0.0;   // m, vacuum
  double n_crystal = 1.0;

  CrystalSpec() = default;
  CrystalSpec(double L, double lambda_p, double n) : length(L), pump_wavelength(lambda_p), n_crystal(n) {
    require(L > 0.0, ErrorCode::invalid_argument, "crystal length must be positive");
    require(lambda_p > 0.0 && n > 0.0, ErrorCode::invalid_argument,
            "pump wavelength and index must be positive");
  }
  double pump_wavenumber() const { return 2.0 * std::numbers::pi * n_crystal / pump_wavelength; }
  /// b^2 = L / 4k.
  double b_squared() const { return length / (4.0 * pump_wavenumber()); }
  /// Order-of-magnitude position correlation width, proportionality constant 1.
  double correlation_width() const { return std::sqrt(pump_wavelength * length); }
  /// Order-of-magnitude emission angle, proportionality constant 1.
  double emission_angle() const { return std::sqrt(pump_wavelength / length); }
};

struct DoubleGaussianParams {
  double sigma = 0.0;  // 1/m
  double b = 0.0;      // m

  DoubleGaussianParams() = default;
  DoubleGaussianParams(double s, double bb) : sigma(s), b(bb) {
    require(s > 0.0 && bb > 0.0, ErrorCode::invalid_argument, "sigma and b must be positive");
  }
  /// Parameters with pump width `sigma` and analytic Schmidt number `K`,
  /// choosing the branch b*sigma <= 1.
  static DoubleGaussianParams from_schmidt(double K, double sigma) {
    require(K >= 1.0, ErrorCode::invalid_argument, "Schmidt number must be >= 1");
    const double y = std::sqrt(K) - std::sqrt(K - 1.0);
    return {sigma, y / sigma};
  }
};

/// Two-photon amplitude psi(s, i) sampled on grid_s x grid_i, row index s.
struct JointAmplitude {
  Grid grid_s;
  Grid grid_i;
  std::vector<cplx> values;
  Domain domain = Domain::angular;
  double photon_wavelength = 0.0;

  JointAmplitude() = default;
  JointAmplitude(Grid gs, Grid gi, Domain d, double lambda)
      : grid_s(gs), grid_i(gi), values(gs.n_points * gi.n_points), domain(d), photon_wavelength(lambda) {}

  std::size_t ns() const { return grid_s.n_points; }
  std::size_t ni() const { return grid_i.n_points; }
  cplx& at(std::size_t s, std::size_t i) { return values[s * ni() + i]; }
  const cplx& at(std::size_t s, std::size_t i) const { return values[s * ni() + i]; }
  double cell() const { return grid_s.spacing() * grid_i.spacing(); }
  double norm() const {
    double t = 0.0;
    for (const auto& v : values) t += std::norm(v);
    return t * cell();
  }
  void normalize() {
    const double t = norm();
    require(t > 0.0, ErrorCode::zero_total, "joint amplitude is identically zero");
    const double s = 1.0 / std::sqrt(t);
    for (auto& v : values) v *= s;
  }
};

inline double sinc(double x) { return std::abs(x) < 1e-8 ? 1.0 - x * x / 6.0 : std::sin(x) / x; }

namespace detail {

inline JointAmplitude joint_transform(const JointAmplitude& psi, fft::Direction dir, Domain out) {
  require(psi.grid_s == psi.grid_i, ErrorCode::grid_mismatch,
          "joint transforms need identical signal and idler grids");
  const Grid g = psi.grid_s.reciprocal();
  JointAmplitude r(g, g, out, psi.photon_wavelength);
  r.values = psi.values;
  fft::centered(r.values, 2, g.n_points, dir);
  const double s = psi.grid_s.spacing() / g.spacing();
  for (auto& v : r.values) v *= s;
  return r;
}

/// Linear interpolation of a rank-1 field at coordinate x, zero outside.
inline cplx sample_linear(const ComplexField& f, double x) {
  const double t = x / f.grid.spacing() + double(f.grid.n_points / 2);
  if (t < 0.0 || t > double(f.grid.n_points - 1)) return {0.0, 0.0};
  const auto i0 = static_cast<std::size_t>(std::floor(t));
  const double w = t - double(i0);
  if (i0 + 1 >= f.grid.n_points) return f.values[i0];
  return f.values[i0] * (1.0 - w) + f.values[i0 + 1] * w;
}

}  // namespace detail

inline JointAmplitude to_angular(const JointAmplitude& psi) {
  if (psi.domain == Domain::angular) return psi;
  return detail::joint_transform(psi, fft::Direction::forward, Domain::angular);
}

inline JointAmplitude to_position(const JointAmplitude& psi) {
  if (psi.domain == Domain::position) return psi;
  return detail::joint_transform(psi, fft::Direction::inverse, Domain::position);
}

/// psi(q_s, q_i) = v(q_s + q_i) sinc(L (q_s - q_i)^2 / 4k) on `photon_grid`
/// (angular). The pump spectrum is linearly interpolated at the sum
/// coordinate.
inline JointAmplitude build_state_eq1(const ComplexField& pump_angular, const CrystalSpec& crystal,
                                      const Grid& photon_grid) {
  require(pump_angular.rank == 1 && pump_angular.domain == Domain::angular,
          ErrorCode::invalid_argument, "pump must be a rank-1 angular field");
  const double qmax_sum = 2.0 * photon_grid.coord(photon_grid.n_points - 1);
  const double qmin_sum = 2.0 * photon_grid.coord(0);
  double outside = 0.0, total = 0.0;
  for (std::size_t i = 0; i < pump_angular.size(); ++i) {
    const double q = pump_angular.grid.coord(i);
    const double p = std::norm(pump_angular.values[i]);
    total += p;
    if (q > qmax_sum || q < qmin_sum) outside += p;
  }
  require(total > 0.0, ErrorCode::zero_total, "pump spectrum is zero");
  require(outside <= 1e-9 * total, ErrorCode::invalid_argument,
          "pump spectrum extends beyond the representable sum-coordinate range");
  const double lambda_photon = 2.0 * crystal.pump_wavelength;
  JointAmplitude psi(photon_grid, photon_grid, Domain::angular, lambda_photon);
  const double b2 = crystal.b_squared();
  const auto q = photon_grid.coords();
  const std::size_t n = photon_grid.n_points;
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t i = 0; i < n; ++i) {
      const double d = q[s] - q[i];
      psi.at(s, i) = detail::sample_linear(pump_angular, q[s] + q[i]) * sinc(b2 * d * d);
    }
  psi.normalize();
  return psi;
}

/// exp(-(q_s+q_i)^2/sigma^2) exp(-b^2 (q_s-q_i)^2), normalized.
inline JointAmplitude build_double_gaussian(const DoubleGaussianParams& p, const Grid& photon_grid,
                                            double photon_wavelength = 808e-9) {
  const double half = photon_grid.extent / 2.0;
  const double wmax = std::max(p.sigma, 1.0 / p.b);
  require(half >= 2.0 * wmax, ErrorCode::invalid_argument,
          "grid does not contain 4 widths of the joint amplitude");
  // the conjugate (position) window must hold 4 widths as well; there the
  // sum coordinate has width 2/sigma and the difference 2b
  require(std::numbers::pi / photon_grid.spacing() >= 4.0 * std::max(1.0 / p.sigma, p.b),
          ErrorCode::under_resolved, "grid spacing does not resolve the narrow joint width");
  JointAmplitude psi(photon_grid, photon_grid, Domain::angular, photon_wavelength);
  const auto q = photon_grid.coords();
  const std::size_t n = photon_grid.n_points;
  const double is2 = 1.0 / (p.sigma * p.sigma), b2 = p.b * p.b;
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t i = 0; i < n; ++i) {
      const double u = q[s] + q[i], d = q[s] - q[i];
      psi.at(s, i) = std::exp(-u * u * is2 - b2 * d * d);
    }
  psi.normalize();
  return psi;
}

/// Smallest power-of-two angular grid accepted by build_double_gaussian,
/// sampled at half the narrower width.
inline Grid default_photon_grid(const DoubleGaussianParams& p) {
  const double dq = std::min(p.sigma, 1.0 / p.b) / 2.0;
  const double need = 4.0 * std::max(p.sigma, 1.0 / p.b) / dq;
  std::size_t n = 16;
  while (double(n) < need) n *= 2;
  return {n, double(n) * dq};
}

inline double schmidt_number_analytic(const DoubleGaussianParams& p) {
  const double x = p.b * p.sigma;
  const double t = 1.0 / x + x;
  return 0.25 * t * t;
}

/// Normalized Schmidt weights (squared singular values of the
/// measure-weighted kernel), descending.
inline std::vector<double> schmidt_weights(const JointAmplitude& psi) {
  const double n2 = psi.norm();
  require(std::abs(n2 - 1.0) < 1e-6, ErrorCode::not_normalized,
          "joint amplitude is not normalized (norm " + std::to_string(n2) + ")");
  const double w = std::sqrt(psi.cell());
  Eigen::MatrixXcd m(psi.ns(), psi.ni());
  for (std::size_t s = 0; s < psi.ns(); ++s)
    for (std::size_t i = 0; i < psi.ni(); ++i) m(Eigen::Index(s), Eigen::Index(i)) = psi.at(s, i) * w;
  Eigen::BDCSVD<Eigen::MatrixXcd> svd(m);
  const auto& sv = svd.singularValues();
  std::vector<double> p(std::size_t(sv.size()));
  double t = 0.0;
  for (Eigen::Index k = 0; k < sv.size(); ++k) {
    p[std::size_t(k)] = sv(k) * sv(k);
    t += p[std::size_t(k)];
  }
  for (auto& x : p) x /= t;
  return p;
}

/// 1 / sum p_k^2 of the one-axis kernel.
inline double schmidt_number_per_axis(const JointAmplitude& psi) {
  double s = 0.0;
  for (double p : schmidt_weights(psi)) s += p * p;
  return 1.0 / s;
}

/// Schmidt number of the isotropic state with two transverse axes, each
/// carrying `psi`. Independent axes multiply, so this is the square of the
/// per-axis value; it is the quantity the double-Gaussian closed form and
/// the width estimator describe.
inline double schmidt_number_numeric(const JointAmplitude& psi) {
  const double k = schmidt_number_per_axis(psi);
  return k * k;
}

struct ScatteredJoint {
  JointAmplitude psi;
  /// Fraction of pair probability surviving the element (1 if lossless).
  double transmitted_fraction = 1.0;
};

/// psi(x_s, x_i) -> psi(x_s, x_i) A(x_s) A(x_i); renormalized when lossy.
inline ScatteredJoint apply_diffuser_joint(const JointAmplitude& psi, const ComplexField& A) {
  require(psi.domain == Domain::position, ErrorCode::invalid_argument,
          "apply_diffuser_joint expects a position-domain state");
  require(A.rank == 1 && A.grid == psi.grid_s && A.grid == psi.grid_i, ErrorCode::grid_mismatch,
          "transmission map does not match the photon grid");
  ScatteredJoint out{psi, 1.0};
  for (std::size_t s = 0; s < psi.ns(); ++s)
    for (std::size_t i = 0; i < psi.ni(); ++i) out.psi.at(s, i) *= A.values[s] * A.values[i];
  const double after = out.psi.norm(), before = psi.norm();
  out.transmitted_fraction = after / before;
  if (std::abs(out.transmitted_fraction - 1.0) > 1e-12) out.psi.normalize();
  return out;
}

/// C(q_s, q_i) = |psi(q_s, q_i)|^2, normalized to unit integral.
inline RealField coincidence_pattern(const JointAmplitude& psi) {
  const JointAmplitude a = to_angular(psi);
  require(a.grid_s == a.grid_i, ErrorCode::grid_mismatch, "coincidence needs square joint grid");
  std::vector<double> c(a.values.size());
  for (std::size_t k = 0; k < c.size(); ++k) c[k] = std::norm(a.values[k]);
  return normalized(RealField(a.grid_s, 2, std::move(c), a.photon_wavelength, Domain::angular));
}

/// C(q_s, q_i = q_idler) versus q_s, normalized to unit integral.
inline RealField coincidence_slice(const JointAmplitude& psi, double q_idler = 0.0) {
  const JointAmplitude a = to_angular(psi);
  const double t = q_idler / a.grid_i.spacing() + double(a.ni() / 2);
  const auto col = static_cast<std::size_t>(std::lround(t));
  require(col < a.ni(), ErrorCode::invalid_argument, "idler coordinate outside the grid");
  std::vector<double> c(a.ns());
  for (std::size_t s = 0; s < a.ns(); ++s) c[s] = std::norm(a.at(s, col));
  return normalized(RealField(a.grid_s, 1, std::move(c), a.photon_wavelength, Domain::angular));
}

/// Signal marginal, normalized to unit integral.
inline RealField singles_pattern(const JointAmplitude& psi) {
  const JointAmplitude a = to_angular(psi);
  std::vector<double> c(a.ns(), 0.0);
  for (std::size_t s = 0; s < a.ns(); ++s)
    for (std::size_t i = 0; i < a.ni(); ++i) c[s] += std::norm(a.at(s, i));
  return normalized(RealField(a.grid_s, 1, std::move(c), a.photon_wavelength, Domain::angular));
}

/// Thin-crystal coincidence |FT[W A^2]|^2 in the sum coordinate, normalized.
inline RealField thin_crystal_coincidence(const ComplexField& pump_profile, const ComplexField& photon_map) {
  require(pump_profile.domain == Domain::position, ErrorCode::invalid_argument,
          "pump profile must be in the position domain");
  require(pump_profile.grid == photon_map.grid && pump_profile.rank == photon_map.rank,
          ErrorCode::grid_mismatch, "pump profile and transmission map differ in grid");
  ComplexField f = pump_profile;
  for (std::size_t k = 0; k < f.size(); ++k) f.values[k] *= photon_map.values[k] * photon_map.values[k];
  RealField r = intensity(far_field(f));
  r.wavelength = photon_map.wavelength;
  return normalized(std::move(r));
}

namespace detail {

/// Band-limited (trigonometric) interpolation of periodic samples at
/// fractional index t (index units on the centered grid).
class TrigInterpolator {
 public:
  explicit TrigInterpolator(std::span<const double> samples) : n_(samples.size()) {
    coeff_.assign(samples.begin(), samples.end());
    fft::centered(coeff_, 1, n_, fft::Direction::forward);
  }
  double operator()(double t) const {
    // inverse centered unitary DFT evaluated off-grid
    const double c = double(n_ / 2);
    cplx acc{0.0, 0.0};
    for (std::size_t k = 0; k < n_; ++k) {
      const double kk = double(k) - c;
      if (n_ % 2 == 0 && k == 0) {
        // split the Nyquist term symmetrically so real input stays real
        acc += coeff_[k] * std::cos(2.0 * std::numbers::pi * kk * (t - c) / double(n_));
        continue;
      }
      acc += coeff_[k] * std::polar(1.0, 2.0 * std::numbers::pi * kk * (t - c) / double(n_));
    }
    return acc.real() / std::sqrt(double(n_));
  }

 private:
  std::size_t n_;
  std::vector<cplx> coeff_;
};

}  // namespace detail

/// Maps a coincidence pattern onto the pump far-field grid. Both inputs are
/// angular (q) patterns tagged with their wavelength. At a detector angle
/// theta the pump sees q_p = 2 pi theta / lambda_p while the photons see
/// q = 2 pi theta / lambda_s, so in detector coordinates the coincidence
/// pattern is stretched by lambda_s / lambda_p = 2. The coincidence pattern
/// is interpolated (band-limited) at the detector angles of the pump grid
/// after compressing by that factor. Returns both patterns cropped to the
/// overlapping samples.
inline std::pair<RealField, RealField> resample_sum_coordinate(const RealField& coinc,
                                                               const RealField& pump_ff) {
  require(coinc.rank == 1 && pump_ff.rank == 1, ErrorCode::invalid_argument,
          "resampling works on rank-1 patterns");
  require(coinc.wavelength > 0.0 && pump_ff.wavelength > 0.0, ErrorCode::invalid_argument,
          "patterns must carry wavelengths");
  require(coinc.domain == Domain::angular && pump_ff.domain == Domain::angular,
          ErrorCode::invalid_argument, "patterns must be angular");
  const double stretch = coinc.wavelength / pump_ff.wavelength;
  // pump sample j at angle theta_j = q_j lambda_p / 2pi; the compressed
  // coincidence at that angle is C at angle stretch*theta_j, i.e. at
  // photon q = 2 pi stretch theta_j / lambda_s = q_j.
  const detail::TrigInterpolator interp(coinc.values);
  const double cq = double(coinc.grid.n_points / 2);
  const double qlo = coinc.grid.coord(0), qhi = coinc.grid.coord(coinc.grid.n_points - 1);
  std::vector<std::size_t> keep;
  for (std::size_t j = 0; j < pump_ff.grid.n_points; ++j) {
    const double theta = pump_ff.grid.coord(j) * pump_ff.wavelength / (2.0 * std::numbers::pi);
    const double q = 2.0 * std::numbers::pi * stretch * theta / coinc.wavelength;
    if (q >= qlo && q <= qhi) keep.push_back(j);
  }
  require(keep.size() * 4 >= pump_ff.grid.n_points, ErrorCode::invalid_argument,
          "insufficient overlap between coincidence and pump grids");
  // keep a symmetric block around the pump grid center
  const std::size_t c = pump_ff.grid.n_points / 2;
  std::size_t half = std::min(c - keep.front(), keep.back() - c);
  const std::size_t m = 2 * half;
  const std::size_t first = c - half;
  require(m >= 2, ErrorCode::invalid_argument, "insufficient overlap between grids");
  std::vector<double> cv(m), pv(m);
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t j = first + k;
    const double theta = pump_ff.grid.coord(j) * pump_ff.wavelength / (2.0 * std::numbers::pi);
    const double q = 2.0 * std::numbers::pi * stretch * theta / coinc.wavelength;
    cv[k] = std::max(0.0, interp(q / coinc.grid.spacing() + cq));
    pv[k] = pump_ff.values[j];
  }
  const Grid g(m, double(m) * pump_ff.grid.spacing());
  return {RealField(g, 1, std::move(cv), pump_ff.wavelength), RealField(g, 1, std::move(pv), pump_ff.wavelength)};
}

struct SchmidtEstimate {
  double K = 0.0;
  double uncertainty = 0.0;
  double sigma = 0.0;  // pump angular width from the coincidence slice
  double b = 0.0;      // from the singles width
};

/// Width-based Schmidt estimate. Widths are 1/e^2 intensity half-widths.
/// The coincidence slice gives sigma directly; the singles follow
/// exp(-8 b^2 q^2), so b = 1 / (2 w_singles).
inline SchmidtEstimate estimate_schmidt_from_widths(const WidthMeasurement& coinc_slice,
                                                    const WidthMeasurement& singles) {
  require(coinc_slice.width > 0.0 && singles.width > 0.0, ErrorCode::fit_failed,
          "widths must be positive");
  SchmidtEstimate e;
  e.sigma = coinc_slice.width;
  e.b = 1.0 / (2.0 * singles.width);
  const double bs = e.b * e.sigma;
  require(bs <= 0.2, ErrorCode::regime_violation,
          "b*sigma = " + std::to_string(bs) + " violates the sigma << 1/b regime");
  e.K = 1.0 / (4.0 * bs * bs);
  const double rc = coinc_slice.stderr_width / coinc_slice.width;
  const double rs = singles.stderr_width / singles.width;
  e.uncertainty = 2.0 * e.K * std::sqrt(rc * rc + rs * rs);
  return e;
}

/// Gaussian fits of a coincidence slice and singles pattern followed by
/// estimate_schmidt_from_widths.
inline SchmidtEstimate estimate_schmidt(const JointAmplitude& psi, double q_idler = 0.0) {
  const auto slice = fit_gaussian(coincidence_slice(psi, q_idler));
  const auto singles = fit_gaussian(singles_pattern(psi));
  return estimate_schmidt_from_widths(slice.width_measurement(), singles.width_measurement());
}

}  // namespace pairwfs
