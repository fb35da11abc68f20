#pragma once

// Shared numerical studies used by the scenario runner and the acceptance
// checks. Each function is deterministic given its seed.

#include <cmath>
#include <algorithm>
#include <cstdint>
#include <numbers>
#include <optional>
#include <vector>

#include "pairwfs/emission.hpp"
#include "pairwfs/media.hpp"
#include "pairwfs/optics.hpp"
#include "pairwfs/random.hpp"
#include "pairwfs/shaping.hpp"
#include "pairwfs/spdc.hpp"
#include "pairwfs/turbulence.hpp"

namespace pairwfs {

/// Pump-speckle versus two-photon-speckle comparison for a double-Gaussian
/// state behind one thin phase diffuser.
struct SpeckleCorrelationSetup {
  std::size_t n_points = 1024;
  double pump_waist = 1e-3;          // 1/e amplitude radius w, m
  double window_waists = 6.0;        // grid extent in units of w
  double coherence_fraction = 0.2;   // diffuser d in units of w
  double phase_rms = std::numbers::pi;  // photon phase rms, rad
  double pump_wavelength = 404e-9;
};

inline ComplexField gaussian_mode(const Grid& g, double w, double wavelength) {
  ComplexField f(g, 1, wavelength);
  for (std::size_t i = 0; i < g.n_points; ++i) {
    const double x = g.coord(i) / w;
    f.values[i] = std::exp(-x * x);
  }
  return f;
}

/// Pump far-field speckle and coincidence slice (idler at q = 0) mapped
/// onto the common sum-coordinate grid. `mask` marks the central half of
/// the pump speckle envelope used for correlating.
struct SpecklePatterns {
  RealField coinc;
  RealField pump;
  std::vector<std::uint8_t> mask;
  double correlation = 0.0;
};

inline SpecklePatterns speckle_patterns(double schmidt_number, std::uint64_t seed, const SpeckleCorrelationSetup& s = {}) {
  const double w = s.pump_waist;
  const Grid xg(s.n_points, s.window_waists * w);
  const Grid qg = xg.reciprocal();
  const double lambda_s = 2.0 * s.pump_wavelength;
  const auto p = DoubleGaussianParams::from_schmidt(schmidt_number, 2.0 / w);
  const JointAmplitude psi = to_position(build_double_gaussian(p, qg, lambda_s));

  const double d = s.coherence_fraction * w;
  const DiffuserSpec spec{d, s.phase_rms * lambda_s / (2.0 * std::numbers::pi), 0.0, seed};
  const DiffuserRealization medium = synth_diffuser(spec, xg);
  const ScatteredJoint scattered = apply_diffuser_joint(psi, transmission_at(medium, lambda_s));
  const RealField coinc = coincidence_slice(scattered.psi, 0.0);

  RealField pump_ff = intensity(far_field(thin_path(medium, s.pump_wavelength).apply(gaussian_mode(xg, w, s.pump_wavelength))));
  pump_ff.wavelength = s.pump_wavelength;

  auto [c, pf] = resample_sum_coordinate(coinc, pump_ff);
  // pump phase rms is twice the photon one; its speckle spreads over ~G
  const double spread = 2.0 * s.phase_rms * std::numbers::sqrt2 / d;
  std::vector<std::uint8_t> mask(c.grid.n_points);
  for (std::size_t k = 0; k < mask.size(); ++k) mask[k] = std::abs(c.grid.coord(k)) < 0.5 * spread;
  const double r = pearson_correlation(c, pf, mask);
  return {std::move(c), std::move(pf), std::move(mask), r};
}

/// Pearson correlation between the pump far-field speckle and the
/// coincidence slice, restricted to the central half of the pump envelope.
inline double speckle_pattern_correlation(double schmidt_number, std::uint64_t seed,
                                          const SpeckleCorrelationSetup& s = {}) {
  return speckle_patterns(schmidt_number, seed, s).correlation;
}

/// Double-Gaussian pairs and a Gaussian pump through the +-pi/2 step mask.
struct PiStepSetup {
  std::size_t n_points = 512;
  double extent = 6e-3;
  double pump_waist = 1e-3;
  double pump_wavelength = 404e-9;
};

struct PiStepResult {
  double coinc_corr_high_k = 0.0;    // full coincidence pattern, masked vs bare
  double singles_corr_high_k = 0.0;
  double singles_corr_separable = 0.0;
  double pump_corr = 0.0;
  RealField singles_separable_bare, singles_separable_masked;
  RealField coinc_slice_bare, coinc_slice_masked;
  RealField pump_bare, pump_masked;
};

inline PiStepResult pi_step_study(double high_k, const PiStepSetup& s = {}) {
  const Grid xg(s.n_points, s.extent);
  const double lambda_s = 2.0 * s.pump_wavelength;
  const DiffuserRealization mask = pi_step_mask(xg, lambda_s);
  const ComplexField A = transmission_at(mask, lambda_s);
  auto state = [&](double K) {
    return to_position(build_double_gaussian(DoubleGaussianParams::from_schmidt(K, 2.0 / s.pump_waist), xg.reciprocal(), lambda_s));
  };
  PiStepResult r;
  const JointAmplitude hi = state(high_k), hi_m = apply_diffuser_joint(hi, A).psi;
  r.coinc_corr_high_k = pearson_correlation(coincidence_pattern(hi), coincidence_pattern(hi_m));
  r.singles_corr_high_k = pearson_correlation(singles_pattern(hi), singles_pattern(hi_m));
  r.coinc_slice_bare = coincidence_slice(hi, 0.0);
  r.coinc_slice_masked = coincidence_slice(hi_m, 0.0);
  const JointAmplitude one = state(1.0), one_m = apply_diffuser_joint(one, A).psi;
  r.singles_separable_bare = singles_pattern(one);
  r.singles_separable_masked = singles_pattern(one_m);
  r.singles_corr_separable = pearson_correlation(r.singles_separable_bare, r.singles_separable_masked);
  const ComplexField W = gaussian_mode(xg, s.pump_waist, s.pump_wavelength);
  r.pump_bare = pump_far_field(W, OpticalPath(xg, 1, s.pump_wavelength));
  r.pump_masked = pump_far_field(W, thin_path(mask, s.pump_wavelength));
  r.pump_corr = pearson_correlation(r.pump_bare, r.pump_masked);
  return r;
}

/// Crystal imaged onto the medium: a top-hat pump on a fine 1D grid.
struct ImagePlaneSetup {
  std::size_t n_points = 4096;
  double spacing = 1e-6;            // m
  std::size_t aperture_points = 2048;
  double pump_wavelength = 404e-9;
  double b = 0.0;                   // pair correlation parameter, m

  Grid grid() const { return {n_points, double(n_points) * spacing}; }
  double photon_wavelength() const { return 2.0 * pump_wavelength; }
  ComplexField pump() const {
    const Grid g = grid();
    ComplexField f(g, 1, pump_wavelength);
    const double half = double(aperture_points) * spacing / 2.0;
    for (std::size_t i = 0; i < n_points; ++i) f.values[i] = std::abs(g.coord(i)) < half ? 1.0 : 0.0;
    return f;
  }
};

/// Fraction of the far-field signal in one target sample.
struct FocusEfficiency {
  double pump = 0.0;
  double coinc = 0.0;
};

/// Target fractions for a given (already shaped) pump profile. The pump
/// target is far-field sample `target`; the pair target is the signal at
/// the same angular coordinate with the idler detector at q = 0.
inline FocusEfficiency focus_efficiency(const ComplexField& pump, double b, const OpticalPath& pump_path,
                                        const OpticalPath& photon_path, std::size_t target) {
  const RealField P = pump_far_field(pump, pump_path);
  const RealField C = coincidence_slice(PairSource{pump, b}, photon_path, 0.0);
  require(P.sum() > 0.0 && C.sum() > 0.0, ErrorCode::zero_total, "no signal reaches the far field");
  return {P.values[target] / P.sum(), C.values[target] / C.sum()};
}

/// Pump multiplied by the per-sample phase conjugate of the backpropagated
/// target: ideal focusing of the classical pump.
inline ComplexField conjugated_pump(const ComplexField& pump, const OpticalPath& pump_path, std::size_t target) {
  const double q = pump.grid.reciprocal().coord(target);
  const ComplexField g = target_backpropagation(pump_path, q);
  ComplexField out = pump;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (std::abs(pump.values[i]) > 0.0) out.values[i] *= std::polar(1.0, -std::arg(g.values[i] * pump.values[i]));
  return out;
}

/// Optimized focusing through two thin diffusers separated by `gap`.
struct VolumeStudySetup {
  ImagePlaneSetup plane{};
  double phase_rms = std::numbers::pi;  // per diffuser at the photon wavelength
};

inline FocusEfficiency volume_focus(double coherence_length, double gap, std::uint64_t seed,
                                    const VolumeStudySetup& s = {}) {
  const Grid g = s.plane.grid();
  const double lambda_s = s.plane.photon_wavelength();
  const double opd = s.phase_rms * lambda_s / (2.0 * std::numbers::pi);
  const VolumeDiffuser v{synth_diffuser({coherence_length, opd, 0.0, derive_seed(seed, "volume-first", 0)}, g),
                         synth_diffuser({coherence_length, opd, 0.0, derive_seed(seed, "volume-second", 0)}, g),
                         gap};
  const OpticalPath pump_path = volume_path(v, s.plane.pump_wavelength);
  const OpticalPath photon_path = volume_path(v, lambda_s);
  const std::size_t target = g.n_points / 2;
  const ComplexField shaped = conjugated_pump(s.plane.pump(), pump_path, target);
  return focus_efficiency(shaped, s.plane.b, pump_path, photon_path, target);
}

/// Thickness scale z_rd = pi d^2 / lambda of a volume diffuser.
inline double diffuser_rayleigh_length(double coherence_length, double wavelength) {
  return std::numbers::pi * coherence_length * coherence_length / wavelength;
}

/// Pump focused through two thin diffusers; the idler detector is then
/// displaced by `idler_shifts` far-field samples. For each shift, returns the
/// coincidence fraction at the signal sample where momentum conservation
/// puts the focus (target minus the shift). A single thin layer keeps this
/// constant; the gap limits it to the memory-effect range.
inline std::vector<double> idler_displacement_scan(double coherence_length, double gap, std::uint64_t seed,
                                                   std::span<const int> idler_shifts, const VolumeStudySetup& s = {}) {
  const Grid g = s.plane.grid();
  const double lambda_s = s.plane.photon_wavelength();
  const double opd = s.phase_rms * lambda_s / (2.0 * std::numbers::pi);
  const VolumeDiffuser v{synth_diffuser({coherence_length, opd, 0.0, derive_seed(seed, "volume-first", 0)}, g),
                         synth_diffuser({coherence_length, opd, 0.0, derive_seed(seed, "volume-second", 0)}, g), gap};
  const OpticalPath pump_path = volume_path(v, s.plane.pump_wavelength);
  const OpticalPath photon_path = volume_path(v, lambda_s);
  const std::size_t target = g.n_points / 2;
  const PairSource src{conjugated_pump(s.plane.pump(), pump_path, target), s.plane.b};
  const Grid qg = g.reciprocal();
  std::vector<double> out;
  for (int shift : idler_shifts) {
    const auto k = std::ptrdiff_t(target) - shift;
    require(k >= 0 && k < std::ptrdiff_t(g.n_points), ErrorCode::invalid_argument, "idler shift outside the grid");
    const RealField C = coincidence_slice(src, photon_path, double(shift) * qg.spacing());
    out.push_back(C.values[std::size_t(k)] / C.sum());
  }
  return out;
}

/// Free-space optical link: Gaussian pump at the transmitter (crystal image
/// plane, thin-crystal pairs), M phase screens, receiver far field.
struct LinkSetup {
  std::size_t n_points = 8192;
  double extent = 32.0;          // m
  double waist = 1.0;            // 1/e amplitude radius, m
  double pump_wavelength = 404e-9;
  int screens = 2;
  double outer_scale = 10.0;
  double inner_scale = 5e-3;
  int subharmonics = 10;
  LinkOptions options{};

  Grid grid() const { return {n_points, extent}; }
  ComplexField pump() const {
    const Grid g = grid();
    ComplexField f(g, 1, pump_wavelength);
    for (std::size_t i = 0; i < n_points; ++i) {
      const double x = g.coord(i) / waist;
      f.values[i] = std::exp(-x * x);
    }
    return f;
  }
  ScreenGenerator generator() const { return {grid(), 1, outer_scale, inner_scale, subharmonics}; }
  AtmosphereParams atmosphere(double Cn2) const {
    return {Cn2, outer_scale, inner_scale, options.pressure_mbar, options.temperature_K};
  }
};

/// Pump-channel target fraction without any medium. Link efficiencies are
/// reported relative to it.
inline double free_space_focus(const LinkSetup& s) {
  const RealField P = intensity(far_field(s.pump()));
  return P.values[s.n_points / 2] / P.sum();
}

struct LinkOutcome {
  FocusEfficiency unoptimized;  // raw target fractions
  FocusEfficiency optimized;
  double r0 = 0.0;              // whole-link Fried parameter at the pump wavelength
  double sigma_R2 = 0.0;        // at the photon wavelength
};

/// One screen realization of a link of `length` metres. The pump is shaped
/// by the phase conjugate of its own backpropagated target.
inline LinkOutcome link_focus(const LinkSetup& s, const ScreenGenerator& gen, double Cn2, double length,
                              std::uint64_t seed) {
  Rng rng(splitmix64(seed));
  const PhaseScreenStack stack =
      make_screen_stack(gen, s.atmosphere(Cn2), length, s.pump_wavelength, s.screens, rng);
  const OpticalPath pump_path = link_path(stack, length, s.pump_wavelength, s.options);
  const OpticalPath photon_path = link_path(stack, length, 2.0 * s.pump_wavelength, s.options);
  const std::size_t target = s.n_points / 2;
  const ComplexField pump = s.pump();
  LinkOutcome out;
  out.unoptimized = focus_efficiency(pump, 0.0, pump_path, photon_path, target);
  out.optimized = focus_efficiency(conjugated_pump(pump, pump_path, target), 0.0, pump_path, photon_path, target);
  out.r0 = fried_parameter(Cn2, length, s.pump_wavelength);
  out.sigma_R2 = rytov_variance(Cn2, length, 2.0 * s.pump_wavelength);
  return out;
}

struct LinkSample {
  double Cn2, length;
  std::size_t seed;
  double beta_opt, beta_unopt, sigma_R2, r0;
};

/// Coincidence efficiency versus link length for one atmosphere, relative
/// to the free-space value and averaged over seeds.
struct LinkSweepResult {
  double Cn2 = 0.0;
  std::vector<double> lengths;
  std::vector<double> beta_optimized;
  std::vector<double> beta_unoptimized;
  std::optional<double> z_o, z_no;
  std::vector<LinkSample> samples;
};

struct LinkSweepConfig {
  std::size_t seeds = 10;
  std::uint64_t master_seed = 1;
  // lengths whose screens would be under-resolved, or that follow two
  // consecutive points with beta_opt below this level, are not evaluated
  double stop_level = 0.1;
};

/// Screen seed for realization `k`. Shared across lengths and atmospheres
/// so that curves are compared on common random numbers.
inline std::uint64_t link_seed(std::uint64_t master, std::size_t k) { return derive_seed(master, "link-screens", k); }

inline LinkSweepResult link_length_sweep(const LinkSetup& s, const ScreenGenerator& gen, double Cn2,
                                         const std::vector<double>& lengths, const LinkSweepConfig& cfg = {}) {
  require(cfg.seeds >= 1, ErrorCode::invalid_argument, "sweep needs at least one seed");
  require(std::is_sorted(lengths.begin(), lengths.end()) && !lengths.empty() && lengths.front() > 0.0,
          ErrorCode::invalid_argument, "lengths must be positive and increasing");
  const double b0 = free_space_focus(s);
  const double dx = s.grid().spacing();
  LinkSweepResult r;
  r.Cn2 = Cn2;
  int low_run = 0;
  for (double z : lengths) {
    const double r0m = split_link(fried_parameter(Cn2, z, s.pump_wavelength), s.screens).front();
    if (dx > r0m / 2.0 || low_run >= 2) break;
    double bo = 0.0, bu = 0.0;
    for (std::size_t k = 0; k < cfg.seeds; ++k) {
      const LinkOutcome o = link_focus(s, gen, Cn2, z, link_seed(cfg.master_seed, k));
      r.samples.push_back({Cn2, z, k, o.optimized.coinc / b0, o.unoptimized.coinc / b0, o.sigma_R2, o.r0});
      bo += o.optimized.coinc;
      bu += o.unoptimized.coinc;
    }
    r.lengths.push_back(z);
    r.beta_optimized.push_back(bo / double(cfg.seeds) / b0);
    r.beta_unoptimized.push_back(bu / double(cfg.seeds) / b0);
    low_run = r.beta_optimized.back() < cfg.stop_level ? low_run + 1 : 0;
  }
  r.z_o = half_crossing(r.lengths, r.beta_optimized);
  r.z_no = half_crossing(r.lengths, r.beta_unoptimized);
  return r;
}

/// Geometric grid of n lengths from a to b inclusive.
inline std::vector<double> log_lengths(double a, double b, std::size_t n) {
  std::vector<double> z(n);
  for (std::size_t i = 0; i < n; ++i)
    z[i] = a * std::pow(b / a, n == 1 ? 0.0 : double(i) / double(n - 1));
  return z;
}

/// Mean optimized coincidence efficiency (relative to free space) at link
/// length ratio z / z_ra for a whole-link Fried parameter r0.
inline double zra_scaled_focus(const LinkSetup& s, const ScreenGenerator& gen, double r0, double z_over_zra,
                               std::size_t seeds, std::uint64_t master_seed) {
  const double z = z_over_zra * coherence_radius(r0, s.pump_wavelength).rayleigh_length;
  const double Cn2 = cn2_for_fried(r0, z, s.pump_wavelength);
  double acc = 0.0;
  for (std::size_t k = 0; k < seeds; ++k) acc += link_focus(s, gen, Cn2, z, link_seed(master_seed, k)).optimized.coinc;
  return acc / double(seeds) / free_space_focus(s);
}

/// Feedback wavefront shaping of pump and pairs through one thin diffuser
/// imaged on the crystal. Lengths are in metres on a 1 um grid.
struct ShapingSetup {
  ImagePlaneSetup plane{4096, 1e-6, 2048, 404e-9, 0.5e-6};
  double coherence_length = 12e-6;
  double phase_rms = std::numbers::pi;  // at the photon wavelength
  double loss_strength = 0.0;
  std::ptrdiff_t target_offset = 5;     // target cell relative to the axis
  std::size_t baseline_media = 10;
  int baseline_shift = 8;

  std::size_t target() const { return std::size_t(std::ptrdiff_t(plane.n_points / 2) + target_offset); }
  std::vector<std::size_t> target_region() const { return {target()}; }
  DiffuserRealization medium(std::uint64_t seed) const {
    const double opd = phase_rms * plane.photon_wavelength() / (2.0 * std::numbers::pi);
    return synth_diffuser({coherence_length, opd, loss_strength, seed}, plane.grid());
  }
  SlmConfig slm(int N, int levels = 8, double response = 0.1) const {
    return SlmConfig::tiles(plane.grid(), double(plane.aperture_points) * plane.spacing, N, levels, response);
  }
  FeedbackChannel pump_feedback() const { return {FeedbackMode::pump_intensity, target_region(), 0.1, 0.0, 0}; }
};

/// Pump far field and coincidence slice through `medium` for a per-sample
/// SLM phase (empty = flat).
inline ForwardModel thin_medium_model(const ShapingSetup& s, const DiffuserRealization& medium) {
  const ComplexField W = s.plane.pump();
  const double b = s.plane.b;
  auto shaped = [W](std::span<const double> mask) {
    ComplexField p = W;
    if (!mask.empty()) {
      require(mask.size() == p.size(), ErrorCode::grid_mismatch, "SLM mask does not match the pump grid");
      for (std::size_t i = 0; i < p.size(); ++i) p.values[i] *= std::polar(1.0, mask[i]);
    }
    return p;
  };
  OpticalPath pump_path = thin_path(medium, s.plane.pump_wavelength);
  OpticalPath photon_path = thin_path(medium, s.plane.photon_wavelength());
  return {[shaped, pump_path](std::span<const double> m) { return pump_far_field(shaped(m), pump_path); },
          [shaped, photon_path, b](std::span<const double> m) {
            return coincidence_slice(PairSource{shaped(m), b}, photon_path, 0.0);
          }};
}

/// Unshaped ensemble baseline over independent media for run `seed`.
inline Baseline shaping_baseline(const ShapingSetup& s, std::uint64_t seed) {
  std::vector<ForwardModel> media;
  for (std::size_t r = 0; r < s.baseline_media; ++r)
    media.push_back(thin_medium_model(s, s.medium(derive_seed(seed, "baseline-medium", r))));
  return measure_baseline(media, s.target_region(), s.baseline_shift);
}

/// One static optimization with noiseless pump feedback: a single stepwise
/// pass, or `updates` partition iterations.
inline OptimizationTrace enhancement_run(const ShapingSetup& s, int N, std::uint64_t seed,
                                         Algorithm alg = Algorithm::stepwise, int updates = 0) {
  const ForwardModel model = thin_medium_model(s, s.medium(derive_seed(seed, "medium", 0)));
  const Baseline base = shaping_baseline(s, seed);
  FeedbackChannel fb = s.pump_feedback();
  fb.seed = derive_seed(seed, "feedback", 0);
  if (alg == Algorithm::stepwise) return stepwise_optimize(model, s.slm(N), fb, base, updates > 0 ? updates / N : 1);
  return partition_optimize(model, s.slm(N), fb, updates > 0 ? updates : 10 * N, base);
}

/// (beta_pump, beta_coinc) cloud registered along one stepwise run.
inline BetaRelation scattering_relation(const ShapingSetup& s, int N, std::uint64_t seed) {
  return relation_from_trace(enhancement_run(s, N, seed));
}

/// Signal singles behind `medium` for a per-sample SLM phase, from the
/// dense joint amplitude. Small grids only.
inline RealField shaped_singles(const ShapingSetup& s, const DiffuserRealization& medium,
                                std::span<const double> mask) {
  ComplexField p = s.plane.pump();
  if (!mask.empty()) {
    require(mask.size() == p.size(), ErrorCode::grid_mismatch, "SLM mask does not match the pump grid");
    for (std::size_t i = 0; i < p.size(); ++i) p.values[i] *= std::polar(1.0, mask[i]);
  }
  const JointAmplitude psi = joint_amplitude(PairSource{p, s.plane.b});
  return singles_pattern(apply_diffuser_joint(psi, transmission_at(medium, s.plane.photon_wavelength())).psi);
}

/// Scalar absorber in front of the diffuser: amplitude t for every
/// wavelength, so the pump target scales as t^2 and the pairs as t^4.
inline DiffuserRealization attenuated(DiffuserRealization medium, double t) {
  require(t > 0.0 && t <= 1.0, ErrorCode::invalid_argument, "transmission must lie in (0, 1]");
  for (auto& a : medium.amplitude) a *= t;
  return medium;
}

inline BetaRelation absorption_relation(const ShapingSetup& s, std::uint64_t seed, std::span<const double> transmissions) {
  const DiffuserRealization medium = s.medium(derive_seed(seed, "medium", 0));
  const auto target = s.target_region();
  return absorption_scan([&](double t) { return thin_medium_model(s, attenuated(medium, t)); }, transmissions, target);
}

/// Per-sample phase conjugation of the pump ("perfect phase-only
/// correction"). Efficiency is the coincidence target fraction relative to
/// the same correction on the lossless version of the medium.
struct LossyFocus {
  double pump_efficiency = 0.0;
  double coinc_efficiency = 0.0;
};

inline LossyFocus lossy_perfect_correction(const ShapingSetup& s, std::uint64_t seed) {
  const DiffuserRealization lossy = s.medium(derive_seed(seed, "medium", 0));
  DiffuserRealization clean = lossy;
  std::fill(clean.amplitude.begin(), clean.amplitude.end(), 1.0);
  auto focus = [&](const DiffuserRealization& m) {
    const OpticalPath pp = thin_path(m, s.plane.pump_wavelength);
    const OpticalPath ph = thin_path(m, s.plane.photon_wavelength());
    return focus_efficiency(conjugated_pump(s.plane.pump(), pp, s.target()), s.plane.b, pp, ph, s.target());
  };
  const FocusEfficiency a = focus(lossy), b = focus(clean);
  return {a.pump / b.pump, a.coinc / b.coinc};
}

/// Moving-diffuser closed loop: the medium of run `seed` translates at
/// `speed` (m/s) while the optimizer probes once per response time.
struct DynamicSetup {
  ShapingSetup shaping{};
  int segments = 32;
  int levels = 8;
  double response_time = 0.1;
  Algorithm algorithm = Algorithm::stepwise;
  double duration = 600.0;
};

inline OptimizationTrace dynamic_shaping_run(const DynamicSetup& d, double speed, const FeedbackChannel& fb,
                                             std::uint64_t seed, const DynamicSchedule& schedule) {
  const ShapingSetup& s = d.shaping;
  const DiffuserRealization medium = s.medium(derive_seed(seed, "medium", 0));
  const double extent = medium.grid.extent;
  auto at = [&](double x) {
    x = std::fmod(x, extent);
    return thin_medium_model(s, x == 0.0 ? medium : translate(medium, x));
  };
  return dynamic_run(at, speed, d.algorithm, s.slm(d.segments, d.levels, d.response_time), fb, schedule,
                     shaping_baseline(s, seed));
}

}  // namespace pairwfs
