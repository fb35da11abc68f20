#pragma once

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss.hpp>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <vector>

#include "pairwfs/emission.hpp"
#include "pairwfs/fft.hpp"
#include "pairwfs/path.hpp"
#include "pairwfs/random.hpp"
#include "pairwfs/spdc.hpp"

namespace pairwfs {

struct AtmosphereParams {
  double Cn2 = 0.0;              // m^(-2/3)
  double outer_scale = 10.0;     // m
  double inner_scale = 5e-3;     // m
  double pressure_mbar = 1013.0;
  double temperature_K = 288.0;

  void validate() const {
    require(Cn2 > 0.0, ErrorCode::invalid_argument, "Cn2 must be positive");
    require(outer_scale > inner_scale && inner_scale > 0.0, ErrorCode::invalid_argument,
            "scales must satisfy lo > li > 0");
    require(pressure_mbar > 0.0 && temperature_K > 0.0, ErrorCode::invalid_argument,
            "pressure and temperature must be positive");
  }
};

/// Air refractive index; wavelength in micrometres, P in mbar, T in K.
inline double refractive_index(double P, double T, double lambda_um) {
  require(P > 0.0 && T > 0.0 && lambda_um > 0.0, ErrorCode::invalid_argument,
          "refractive index inputs must be positive");
  return 1.0 + 77.6 * (1.0 + 7.52e-3 / (lambda_um * lambda_um)) * (P / T) * 1e-6;
}

/// Plane-wave Fried parameter for a constant Cn2 path of length z.
inline double fried_parameter(double Cn2, double z, double wavelength) {
  require(Cn2 > 0.0 && z > 0.0 && wavelength > 0.0, ErrorCode::invalid_argument,
          "fried parameter inputs must be positive");
  const double k = 2.0 * std::numbers::pi / wavelength;
  return std::pow(0.4229 * k * k * z * Cn2, -3.0 / 5.0);
}

/// Cn2 giving Fried parameter r0 over length z.
inline double cn2_for_fried(double r0, double z, double wavelength) {
  const double k = 2.0 * std::numbers::pi / wavelength;
  return std::pow(r0, -5.0 / 3.0) / (0.4229 * k * k * z);
}

inline double rytov_variance(double Cn2, double z, double wavelength) {
  require(Cn2 > 0.0 && z > 0.0 && wavelength > 0.0, ErrorCode::invalid_argument,
          "rytov variance inputs must be positive");
  const double k = 2.0 * std::numbers::pi / wavelength;
  return 1.23 * std::pow(k, 7.0 / 6.0) * Cn2 * std::pow(z, 11.0 / 6.0);
}

/// Weak-to-moderate fluctuation regime in which the screen model applies.
inline bool rytov_applicable(double sigma_R2) { return sigma_R2 < 2.5; }

struct CoherenceRadius {
  double rho0 = 0.0;            // m
  double rayleigh_length = 0.0;  // z_ra, m
};

inline CoherenceRadius coherence_radius(double r0, double wavelength) {
  require(r0 > 0.0 && wavelength > 0.0, ErrorCode::invalid_argument, "r0 and wavelength must be positive");
  const double rho0 = r0 / 2.1;
  return {rho0, std::numbers::pi * rho0 * rho0 / wavelength};
}

/// Phase power spectrum (rad^2 m^2) with outer and inner scales; kx, ky in rad/m.
inline double von_karman_phase_psd(double kx, double ky, double r0, double lo, double li) {
  const double k0 = 2.0 * std::numbers::pi / lo;
  const double km = 5.32 / li;
  const double k2 = kx * kx + ky * ky;
  return 0.49 * std::pow(r0, -5.0 / 3.0) * std::pow(k2 + k0 * k0, -11.0 / 6.0) * std::exp(-k2 / (km * km));
}

/// Refractive-index spectrum 0.033 Cn2 (k^2 + k0^2)^(-11/6).
inline double von_karman_index_psd(double kx, double ky, double kz, double Cn2, double lo) {
  const double k0 = 2.0 * std::numbers::pi / lo;
  return 0.033 * Cn2 * std::pow(kx * kx + ky * ky + kz * kz + k0 * k0, -11.0 / 6.0);
}

/// Kolmogorov phase structure function 6.88 (r/r0)^(5/3).
inline double kolmogorov_structure_function(double r, double r0) { return 6.88 * std::pow(r / r0, 5.0 / 3.0); }

/// Screens are synthesized by the inverse-FFT method plus subharmonic
/// levels. Level p covers the 3x3 block of cells of size dk/3^p around the
/// origin (centre excluded); each cell gets a complex Gaussian weight with
/// variance PSD(k) * cell area. The subharmonic sum has its mean removed.
/// Line screens (rank 1) use the marginal spectrum along one axis.
class ScreenGenerator {
 public:
  ScreenGenerator(Grid grid, int rank, double lo, double li, int n_subharmonics = 10)
      : grid_(grid), rank_(rank), lo_(lo), li_(li), nsub_(n_subharmonics) {
    require(rank == 1 || rank == 2, ErrorCode::invalid_argument, "screen rank must be 1 or 2");
    require(lo > li && li > 0.0, ErrorCode::invalid_argument, "scales must satisfy lo > li > 0");
    require(n_subharmonics >= 0, ErrorCode::invalid_argument, "subharmonic count must be >= 0");
    const std::size_t n = grid.n_points;
    const double dk = 2.0 * std::numbers::pi / grid.extent;
    if (rank == 1) {
      // unit-r0 marginal spectrum of the 2D PSD along a line
      // The marginal falls as k^(-8/3), so a point sample at the centre of
      // the lowest cells misses most of their power (x1.6 for the first
      // cell). Those cells and all subharmonic cells use the cell average.
      shape_.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double k = std::abs((double(i) - double(n / 2)) * dk);
        shape_[i] = k <= averaged_cells * dk ? cell_average(k, dk) : line_psd(k);
      }
      for (int p = 1; p <= nsub_; ++p) {
        const double dkp = dk / std::pow(3.0, p);
        sub_shape_.push_back(cell_average(dkp, dkp));
      }
    }
  }

  /// True when the window is shorter than the outer scale.
  bool extent_below_outer_scale() const { return grid_.extent < lo_; }
  const Grid& grid() const { return grid_; }
  int rank() const { return rank_; }

  RealField operator()(double r0, Rng& rng) const {
    require(r0 > 0.0, ErrorCode::invalid_argument, "r0 must be positive");
    require(grid_.spacing() <= r0 / 2.0, ErrorCode::under_resolved,
            "grid spacing exceeds r0/2: screen under-resolved");
    return rank_ == 1 ? line(r0, rng) : plane(r0, rng);
  }

 private:
  double line_psd(double kx) const {
    // integral over ky of the unit-r0 2D spectrum (both signs)
    boost::math::quadrature::exp_sinh<double> integrator;
    auto f = [&](double ky) { return von_karman_phase_psd(kx, ky, 1.0, lo_, li_); };
    return 2.0 * integrator.integrate(f, 0.0, std::numeric_limits<double>::infinity());
  }

  static constexpr double averaged_cells = 32.0;

  double cell_average(double k, double width) const {
    return boost::math::quadrature::gauss<double, 15>::integrate([&](double u) { return u * u * line_psd(u); },
                                                                 k - width / 2.0, k + width / 2.0) /
           (width * k * k);
  }

  RealField line(double r0, Rng& rng) const {
    const std::size_t n = grid_.n_points;
    const double dk = 2.0 * std::numbers::pi / grid_.extent;
    const double scale = std::pow(r0, -5.0 / 3.0);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<cplx> c(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double a = g(rng), b = g(rng);
      c[i] = i == n / 2 ? cplx{} : cplx(a, b) * std::sqrt(shape_[i] * scale * dk);
    }
    const auto phase = centered_sum(std::move(c), 1);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = phase[i];
    std::vector<double> low(n, 0.0);
    for (int p = 1; p <= nsub_; ++p) {
      const double dkp = dk / std::pow(3.0, p);
      for (int s : {-1, 1}) {
        const double a = g(rng), b = g(rng);
        const cplx cn = cplx(a, b) * std::sqrt(sub_shape_[std::size_t(p - 1)] * scale * dkp);
        for (std::size_t i = 0; i < n; ++i) low[i] += (cn * std::polar(1.0, double(s) * dkp * grid_.coord(i))).real();
      }
    }
    add_zero_mean(out, low);
    return RealField(grid_, 1, std::move(out), 0.0, Domain::position);
  }

  RealField plane(double r0, Rng& rng) const {
    const std::size_t n = grid_.n_points;
    const double dk = 2.0 * std::numbers::pi / grid_.extent;
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<cplx> c(n * n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double a = g(rng), b = g(rng);
        if (i == n / 2 && j == n / 2) continue;
        const double kx = (double(i) - double(n / 2)) * dk, ky = (double(j) - double(n / 2)) * dk;
        c[i * n + j] = cplx(a, b) * std::sqrt(von_karman_phase_psd(kx, ky, r0, lo_, li_)) * dk;
      }
    const auto phase = centered_sum(std::move(c), 2);
    std::vector<double> out(phase.begin(), phase.end());
    std::vector<double> low(n * n, 0.0);
    for (int p = 1; p <= nsub_; ++p) {
      const double dkp = dk / std::pow(3.0, p);
      for (int a = -1; a <= 1; ++a)
        for (int b = -1; b <= 1; ++b) {
          const double u = g(rng), v = g(rng);
          if (a == 0 && b == 0) continue;
          const double kx = a * dkp, ky = b * dkp;
          const cplx cn = cplx(u, v) * std::sqrt(von_karman_phase_psd(kx, ky, r0, lo_, li_)) * dkp;
          std::vector<cplx> ey(n);
          for (std::size_t j = 0; j < n; ++j) ey[j] = std::polar(1.0, ky * grid_.coord(j));
          for (std::size_t i = 0; i < n; ++i) {
            const cplx ex = cn * std::polar(1.0, kx * grid_.coord(i));
            for (std::size_t j = 0; j < n; ++j) low[i * n + j] += ex.real() * ey[j].real() - ex.imag() * ey[j].imag();
          }
        }
    }
    add_zero_mean(out, low);
    return RealField(grid_, 2, std::move(out), 0.0, Domain::position);
  }

  /// Real part of sum_k c_k exp(i k x) on the centered grids.
  std::vector<double> centered_sum(std::vector<cplx> c, int rank) const {
    const std::size_t n = grid_.n_points;
    fft::centered(c, rank, n, fft::Direction::inverse);
    const double s = rank == 1 ? std::sqrt(double(n)) : double(n);
    std::vector<double> out(c.size());
    for (std::size_t k = 0; k < c.size(); ++k) out[k] = c[k].real() * s;
    return out;
  }

  static void add_zero_mean(std::vector<double>& out, const std::vector<double>& low) {
    double m = 0.0;
    for (double v : low) m += v;
    m /= double(low.size());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += low[k] - m;
  }

  Grid grid_;
  int rank_;
  double lo_, li_;
  int nsub_;
  std::vector<double> shape_;
  std::vector<double> sub_shape_;
};

/// Phase screen (radians at the reference wavelength), zero mean per seed.
inline RealField synth_phase_screen(const Grid& grid, double r0, double lo, double li, std::uint64_t seed,
                                    int n_subharmonics = 10, int rank = 2) {
  Rng rng(splitmix64(seed));
  return ScreenGenerator(grid, rank, lo, li, n_subharmonics)(r0, rng);
}

/// Equal-strength split: r0_m = r0 M^(3/5) so that sum r0_m^(-5/3) = r0^(-5/3).
inline std::vector<double> split_link(double r0_total, int M) {
  require(M >= 1, ErrorCode::invalid_argument, "at least one screen is required");
  return std::vector<double>(std::size_t(M), r0_total * std::pow(double(M), 3.0 / 5.0));
}

/// Screen m (1-based) of M sits at z (2m - 1) / (2M).
inline std::vector<double> screen_positions(double link_length, int M) {
  std::vector<double> z;
  for (int m = 1; m <= M; ++m) z.push_back(link_length * (2.0 * m - 1.0) / (2.0 * M));
  return z;
}

struct PhaseScreenLayer {
  RealField phase;  // rad at the reference wavelength
  double position = 0.0;
  double r0 = 0.0;
};

struct PhaseScreenStack {
  std::vector<PhaseScreenLayer> screens;
  double reference_wavelength = 0.0;

  void validate(double link_length) const {
    double prev = 0.0;
    for (const auto& s : screens) {
      require(s.position > prev && s.position < link_length, ErrorCode::invalid_argument,
              "screen positions must increase strictly inside the link");
      prev = s.position;
    }
  }
};

/// M equal-strength screens for a constant-Cn2 link.
inline PhaseScreenStack make_screen_stack(const ScreenGenerator& gen, const AtmosphereParams& atm,
                                          double link_length, double reference_wavelength, int M, Rng& rng) {
  atm.validate();
  const double r0 = fried_parameter(atm.Cn2, link_length, reference_wavelength);
  const auto r0m = split_link(r0, M);
  const auto zs = screen_positions(link_length, M);
  PhaseScreenStack st{{}, reference_wavelength};
  for (int m = 0; m < M; ++m) st.screens.push_back({gen(r0m[std::size_t(m)], rng), zs[std::size_t(m)], r0m[std::size_t(m)]});
  return st;
}

/// How screen phases defined at the reference wavelength carry over to
/// another wavelength, beyond the lambda_ref / lambda factor.
///  none:         achromatic optical path
///  index:        ratio of refractive indices n(lambda) / n(lambda_ref)
///  refractivity: ratio of refractivities (n(lambda) - 1) / (n(lambda_ref) - 1)
enum class Dispersion { none, index, refractivity };

struct LinkOptions {
  Dispersion dispersion = Dispersion::index;
  double pressure_mbar = 1013.0;
  double temperature_K = 288.0;
  PropagationOptions propagation{};
};

inline double screen_phase_scale(double reference_wavelength, double wavelength, const LinkOptions& opt) {
  double s = reference_wavelength / wavelength;
  if (opt.dispersion != Dispersion::none) {
    const double off = opt.dispersion == Dispersion::refractivity ? 1.0 : 0.0;
    const double nr = refractive_index(opt.pressure_mbar, opt.temperature_K, reference_wavelength * 1e6) - off;
    const double nl = refractive_index(opt.pressure_mbar, opt.temperature_K, wavelength * 1e6) - off;
    s *= nl / nr;
  }
  return s;
}

/// Split-step path through the stack: gap, screen, gap, ..., gap to the
/// receiver plane at link_length.
inline OpticalPath link_path(const PhaseScreenStack& stack, double link_length, double wavelength,
                             const LinkOptions& opt = {}) {
  require(!stack.screens.empty() || link_length >= 0.0, ErrorCode::invalid_argument, "bad link");
  stack.validate(link_length);
  const Grid g = stack.screens.empty() ? Grid{} : stack.screens.front().phase.grid;
  const int rank = stack.screens.empty() ? 1 : stack.screens.front().phase.rank;
  OpticalPath p(g, rank, wavelength, opt.propagation);
  const double s = screen_phase_scale(stack.reference_wavelength, wavelength, opt);
  double z = 0.0;
  for (const auto& scr : stack.screens) {
    p.gap(scr.position - z);
    std::vector<cplx> t(scr.phase.size());
    for (std::size_t k = 0; k < t.size(); ++k) t[k] = std::polar(1.0, s * scr.phase.values[k]);
    p.mask(std::move(t));
    z = scr.position;
  }
  p.gap(link_length - z);
  return p;
}

/// Pump field at the receiver plane. Throws on guard-band violation.
inline ComplexField propagate_pump_link(const ComplexField& pump, const PhaseScreenStack& stack, double link_length,
                                        const LinkOptions& opt = {}, PropagationDiagnostics* diag = nullptr) {
  if (stack.screens.empty()) {
    PropagationDiagnostics d;
    auto out = propagate_angular_spectrum(pump, link_length, opt.propagation, &d);
    if (diag) *diag = d;
    return out;
  }
  return link_path(stack, link_length, pump.wavelength, opt).apply(pump, diag);
}

/// Joint amplitude at the receiver: each screen multiplies both photon
/// coordinates, each gap propagates both coordinates.
inline JointAmplitude propagate_joint_link(const JointAmplitude& psi, const PhaseScreenStack& stack,
                                           double link_length, const LinkOptions& opt = {}) {
  require(psi.grid_s == psi.grid_i, ErrorCode::grid_mismatch, "joint link needs identical photon grids");
  stack.validate(link_length);
  const double lambda = psi.photon_wavelength;
  const double s = screen_phase_scale(stack.reference_wavelength, lambda, opt);
  const double k = 2.0 * std::numbers::pi / lambda;
  JointAmplitude cur = to_position(psi);
  auto gap = [&](double z) {
    if (z == 0.0) return;
    JointAmplitude a = to_angular(cur);
    const auto q = a.grid_s.coords();
    std::vector<cplx> h(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) {
      bool ev = false;
      h[i] = detail::propagation_phase(q[i] * q[i], k, z, ev);
    }
    for (std::size_t a_ = 0; a_ < a.ns(); ++a_)
      for (std::size_t b_ = 0; b_ < a.ni(); ++b_) a.at(a_, b_) *= h[a_] * h[b_];
    cur = to_position(a);
  };
  double z = 0.0;
  for (const auto& scr : stack.screens) {
    require(scr.phase.rank == 1 && scr.phase.grid == cur.grid_s, ErrorCode::grid_mismatch,
            "joint link needs rank-1 screens on the photon grid");
    gap(scr.position - z);
    for (std::size_t a_ = 0; a_ < cur.ns(); ++a_)
      for (std::size_t b_ = 0; b_ < cur.ni(); ++b_)
        cur.at(a_, b_) *= std::polar(1.0, s * (scr.phase.values[a_] + scr.phase.values[b_]));
    z = scr.position;
  }
  gap(link_length - z);
  return cur;
}

/// First crossing of `level` going down, interpolated linearly in log z.
inline std::optional<double> half_crossing(std::span<const double> lengths, std::span<const double> beta,
                                           double level = 0.5) {
  for (std::size_t i = 1; i < lengths.size(); ++i)
    if (beta[i] < level && beta[i - 1] >= level) {
      const double f = (beta[i - 1] - level) / (beta[i - 1] - beta[i]);
      return std::exp(std::log(lengths[i - 1]) + f * (std::log(lengths[i]) - std::log(lengths[i - 1])));
    }
  return std::nullopt;
}

}  // namespace pairwfs
