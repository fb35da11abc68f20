#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "pairwfs/field.hpp"
#include "pairwfs/fit.hpp"
#include "pairwfs/random.hpp"

namespace pairwfs {

/// Segmented phase-only modulator imaged onto the crystal plane.
struct SlmConfig {
  int n_segments = 0;
  int phase_levels = 8;
  double response_time = 0.1;  // s per probe
  std::vector<int> layout;     // segment index of every grid sample

  /// N equal tiles across [center - width/2, center + width/2); samples
  /// outside the window join the nearest end tile so the tiles partition
  /// the whole grid.
  static SlmConfig tiles(const Grid& g, double width, int N, int M = 8, double response = 0.1) {
    require(N >= 1, ErrorCode::invalid_argument, "segment count must be >= 1");
    require(M >= 3, ErrorCode::invalid_argument, "phase levels must be >= 3");
    require(response > 0.0, ErrorCode::invalid_argument, "response time must be positive");
    require(width > 0.0, ErrorCode::invalid_argument, "SLM width must be positive");
    SlmConfig c{N, M, response, std::vector<int>(g.n_points)};
    for (std::size_t i = 0; i < g.n_points; ++i) {
      const double u = (g.coord(i) + width / 2.0) / width * N;
      c.layout[i] = std::clamp(static_cast<int>(std::floor(u)), 0, N - 1);
    }
    return c;
  }
  /// One segment per grid sample.
  static SlmConfig per_sample(const Grid& g, int M = 8, double response = 0.1) {
    SlmConfig c{int(g.n_points), M, response, std::vector<int>(g.n_points)};
    std::iota(c.layout.begin(), c.layout.end(), 0);
    return c;
  }

  std::vector<double> expand(std::span<const double> phases) const {
    require(phases.size() == std::size_t(n_segments), ErrorCode::invalid_argument, "phase count mismatch");
    std::vector<double> m(layout.size());
    for (std::size_t i = 0; i < layout.size(); ++i) m[i] = phases[std::size_t(layout[i])];
    return m;
  }
};

enum class FeedbackMode { pump_intensity, coincidence_poisson };

struct FeedbackChannel {
  FeedbackMode mode = FeedbackMode::pump_intensity;
  std::vector<std::size_t> target;  // far-field sample indices
  double integration_time = 0.1;    // s
  double rate_scale = 0.0;          // counts/s at beta_coinc = 1
  std::uint64_t seed = 0;

  void validate() const {
    require(!target.empty(), ErrorCode::invalid_argument, "target region is empty");
    if (mode == FeedbackMode::coincidence_poisson)
      require(rate_scale > 0.0 && integration_time > 0.0, ErrorCode::invalid_argument,
              "coincidence feedback needs positive rate scale and integration time");
  }
};

/// Pump and coincidence far-field patterns as functions of segment phases.
/// The coincidence model may be empty when not needed.
struct ForwardModel {
  std::function<RealField(std::span<const double>)> pump;
  std::function<RealField(std::span<const double>)> coincidence;
};

struct TraceEntry {
  double time = 0.0;
  int iteration = 0;
  std::vector<double> mask;
  double feedback = 0.0;
  double beta_pump = 0.0;
  double beta_coinc = 0.0;
  bool optimizing = true;
};

struct OptimizationTrace {
  std::vector<TraceEntry> iterations;
  double baseline_pump = 0.0;
  double baseline_coinc = 0.0;
  double eta_pump = 0.0;
  double eta_coinc = 0.0;
  std::vector<int> skipped_segments;
};

inline double beta_metric(std::span<const double> pattern, std::span<const std::size_t> target) {
  require(!target.empty(), ErrorCode::invalid_argument, "target region is empty");
  double tot = 0.0, t = 0.0;
  for (double v : pattern) tot += v;
  require(tot > 0.0, ErrorCode::zero_total, "pattern has zero total signal");
  for (auto i : target) {
    require(i < pattern.size(), ErrorCode::invalid_argument, "target index outside pattern");
    t += pattern[i];
  }
  return t / tot;
}

inline double beta_metric(const RealField& pattern, std::span<const std::size_t> target) {
  return beta_metric(std::span<const double>(pattern.values), target);
}

inline std::uint64_t poisson_counts(double mean_count, Rng& rng) {
  require(mean_count >= 0.0, ErrorCode::invalid_argument, "rate must be nonnegative");
  if (mean_count == 0.0) return 0;
  std::poisson_distribution<std::uint64_t> d(mean_count);
  return d(rng);
}

inline std::uint64_t poisson_counts(double rate, double integration_time, std::uint64_t seed) {
  Rng rng(splitmix64(seed));
  return poisson_counts(rate * integration_time, rng);
}

struct Baseline {
  double pump = 0.0;
  double coinc = 0.0;
};

/// Mean unshaped beta over independent media and over the target region
/// shifted by -shift..+shift samples.
inline Baseline measure_baseline(std::span<const ForwardModel> media, std::span<const std::size_t> target,
                                 int shift = 8) {
  require(!media.empty(), ErrorCode::invalid_argument, "baseline needs at least one medium");
  Baseline b;
  std::size_t cnt = 0;
  for (const auto& m : media) {
    const RealField p = m.pump({});
    const RealField c = m.coincidence ? m.coincidence({}) : RealField{};
    for (int s = -shift; s <= shift; ++s) {
      std::vector<std::size_t> t;
      for (auto i : target) t.push_back(std::size_t(std::ptrdiff_t(i) + s));
      b.pump += beta_metric(p, t);
      if (m.coincidence) b.coinc += beta_metric(c, t);
      ++cnt;
    }
  }
  b.pump /= double(cnt);
  b.coinc /= double(cnt);
  return b;
}

enum class Algorithm { stepwise, partition };

/// Closed-loop feedback optimizer driven one probe at a time so the same
/// code serves static and time-varying media. `model_at(t)` returns the
/// forward model valid at time t.
class FeedbackOptimizer {
 public:
  using ModelAt = std::function<ForwardModel(double)>;

  FeedbackOptimizer(Algorithm alg, SlmConfig slm, FeedbackChannel fb)
      : alg_(alg), slm_(std::move(slm)), fb_(std::move(fb)), rng_(splitmix64(fb_.seed)),
        phases_(std::size_t(slm_.n_segments), 0.0) {
    fb_.validate();
    require(slm_.n_segments >= 1 && slm_.phase_levels >= 3, ErrorCode::invalid_argument, "bad SLM config");
  }

  const std::vector<double>& phases() const { return phases_; }
  double time() const { return time_; }
  OptimizationTrace& trace() { return trace_; }

  /// One optimizer update (a segment for stepwise, a partition for the
  /// partitioning algorithm). Returns the feedback of the accepted state.
  double update(const ModelAt& model_at) {
    return alg_ == Algorithm::stepwise ? stepwise_update(model_at) : partition_update(model_at);
  }

  /// Records the current state measured with the model valid now.
  void record(const ModelAt& model_at, double feedback, bool optimizing) {
    const ForwardModel m = model_at(time_);
    const auto mask = slm_.expand(phases_);
    TraceEntry e{time_, iteration_, phases_, feedback, beta_metric(m.pump(mask), fb_.target), 0.0, optimizing};
    if (m.coincidence) e.beta_coinc = beta_metric(m.coincidence(mask), fb_.target);
    trace_.iterations.push_back(std::move(e));
  }

  /// Advance time without optimizing (optimizer switched off).
  void idle() { time_ += slm_.response_time; }

  int iteration() const { return iteration_; }

 private:
  double feedback(const ForwardModel& m, std::span<const double> phases) {
    const auto mask = slm_.expand(phases);
    if (fb_.mode == FeedbackMode::pump_intensity) return beta_metric(m.pump(mask), fb_.target);
    const double beta = beta_metric(m.coincidence(mask), fb_.target);
    return double(poisson_counts(fb_.rate_scale * beta * fb_.integration_time, rng_));
  }

  double probe(const ModelAt& model_at, std::span<const double> phases) {
    const double f = feedback(model_at(time_), phases);
    time_ += slm_.response_time;
    return f;
  }

  // Feedback samples f_m at offsets 2 pi m / M; the response of a single
  // interfering group is f = a + c cos(th - th0). Returns th0 and the
  // fitted peak a + c, or nullopt when every sample is zero.
  struct CosineFit {
    double phase;
    double peak;
  };
  static std::optional<CosineFit> cosine_fit(std::span<const double> f) {
    const std::size_t M = f.size();
    cplx acc{0.0, 0.0};
    double sum = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
      acc += f[m] * std::polar(1.0, 2.0 * std::numbers::pi * double(m) / double(M));
      sum += f[m];
    }
    if (sum == 0.0) return std::nullopt;
    return CosineFit{std::arg(acc), sum / double(M) + 2.0 * std::abs(acc) / double(M)};
  }

  double stepwise_update(const ModelAt& model_at) {
    const int M = slm_.phase_levels;
    const std::size_t s = std::size_t(next_segment_);
    next_segment_ = (next_segment_ + 1) % slm_.n_segments;
    std::vector<double> trial = phases_;
    std::vector<double> f(static_cast<std::size_t>(M));
    for (int m = 0; m < M; ++m) {
      trial[s] = 2.0 * std::numbers::pi * m / M;
      f[std::size_t(m)] = probe(model_at, trial);
    }
    ++iteration_;
    const auto fit = cosine_fit(f);
    if (!fit) {
      trace_.skipped_segments.push_back(int(s));
      return 0.0;
    }
    phases_[s] = fit->phase;
    return fit->peak;
  }

  // Random half of the segments gets a common offset, set by the same
  // cosine fit.
  double partition_update(const ModelAt& model_at) {
    const int M = slm_.phase_levels;
    std::vector<int> idx(std::size_t(slm_.n_segments));
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng_);
    idx.resize(std::max<std::size_t>(1, idx.size() / 2));
    std::vector<double> f(static_cast<std::size_t>(M));
    for (int m = 0; m < M; ++m) {
      std::vector<double> trial = phases_;
      const double off = 2.0 * std::numbers::pi * m / M;
      for (int i : idx) trial[std::size_t(i)] += off;
      f[std::size_t(m)] = probe(model_at, trial);
    }
    ++iteration_;
    const auto fit = cosine_fit(f);
    if (!fit) {
      trace_.skipped_segments.push_back(-1);
      return 0.0;
    }
    for (int i : idx) phases_[std::size_t(i)] = std::remainder(phases_[std::size_t(i)] + fit->phase, 2.0 * std::numbers::pi);
    return fit->peak;
  }

  Algorithm alg_;
  SlmConfig slm_;
  FeedbackChannel fb_;
  Rng rng_;
  std::vector<double> phases_;
  double time_ = 0.0;
  int iteration_ = 0;
  int next_segment_ = 0;
  OptimizationTrace trace_;
};

/// (eta_pump, eta_coinc) of the last trace entry against the baseline.
inline std::pair<double, double> enhancement(const OptimizationTrace& trace) {
  require(!trace.iterations.empty(), ErrorCode::invalid_argument, "empty trace");
  require(trace.baseline_pump > 0.0, ErrorCode::zero_total, "zero pump baseline");
  const auto& last = trace.iterations.back();
  const double ec = trace.baseline_coinc > 0.0 ? last.beta_coinc / trace.baseline_coinc : 0.0;
  return {last.beta_pump / trace.baseline_pump, ec};
}

namespace detail {
inline OptimizationTrace run_static(Algorithm alg, const ForwardModel& model, const SlmConfig& slm,
                                    const FeedbackChannel& fb, int updates, const Baseline& baseline) {
  FeedbackOptimizer opt(alg, slm, fb);
  const FeedbackOptimizer::ModelAt at = [&model](double) { return model; };
  opt.record(at, 0.0, false);
  for (int k = 0; k < updates; ++k) {
    const double f = opt.update(at);
    opt.record(at, f, true);
  }
  OptimizationTrace t = std::move(opt.trace());
  t.baseline_pump = baseline.pump;
  t.baseline_coinc = baseline.coinc;
  if (baseline.pump > 0.0) std::tie(t.eta_pump, t.eta_coinc) = enhancement(t);
  return t;
}
}  // namespace detail

/// Sequential single-segment optimization, `passes` sweeps over the SLM.
inline OptimizationTrace stepwise_optimize(const ForwardModel& model, const SlmConfig& slm, const FeedbackChannel& fb,
                                           const Baseline& baseline = {}, int passes = 1) {
  return detail::run_static(Algorithm::stepwise, model, slm, fb, passes * slm.n_segments, baseline);
}

/// Random-half partitioning with a cosine-fitted common offset.
inline OptimizationTrace partition_optimize(const ForwardModel& model, const SlmConfig& slm, const FeedbackChannel& fb,
                                            int n_iterations, const Baseline& baseline = {}) {
  return detail::run_static(Algorithm::partition, model, slm, fb, n_iterations, baseline);
}

/// Phase-only conjugation of a back-propagated target field: per segment,
/// -arg(sum over the segment of backprop * pump). This is the state the
/// feedback algorithms converge to.
inline std::vector<double> conjugate_phases(std::span<const cplx> backprop, std::span<const cplx> pump,
                                            const SlmConfig& slm) {
  require(backprop.size() == pump.size() && pump.size() == slm.layout.size(), ErrorCode::grid_mismatch,
          "conjugation inputs differ in size");
  std::vector<cplx> acc(std::size_t(slm.n_segments), cplx{});
  for (std::size_t i = 0; i < pump.size(); ++i) acc[std::size_t(slm.layout[i])] += backprop[i] * pump[i];
  std::vector<double> ph(acc.size());
  for (std::size_t s = 0; s < acc.size(); ++s) ph[s] = std::abs(acc[s]) > 0.0 ? -std::arg(acc[s]) : 0.0;
  return ph;
}

struct BetaRelation {
  std::vector<double> beta_pump;
  std::vector<double> beta_coinc;
  LinearFit fit;  // slope = power-law exponent of beta_coinc vs beta_pump
};

/// Scalar absorption sweep: `model_for(t)` is the forward model with
/// amplitude transmission t applied to pump and photons. Betas are target
/// signals relative to the lossless (t = 1) run.
inline BetaRelation absorption_scan(const std::function<ForwardModel(double)>& model_for,
                                    std::span<const double> transmissions, std::span<const std::size_t> target) {
  auto target_sum = [&](const RealField& f) {
    double s = 0.0;
    for (auto i : target) s += f.values[i];
    return s;
  };
  const ForwardModel ref = model_for(1.0);
  const double p0 = target_sum(ref.pump({})), c0 = target_sum(ref.coincidence({}));
  require(p0 > 0.0 && c0 > 0.0, ErrorCode::zero_total, "lossless reference has no target signal");
  BetaRelation r;
  for (double t : transmissions) {
    const ForwardModel m = model_for(t);
    r.beta_pump.push_back(target_sum(m.pump({})) / p0);
    r.beta_coinc.push_back(target_sum(m.coincidence({})) / c0);
  }
  r.fit = fit_power_law(r.beta_pump, r.beta_coinc);
  return r;
}

/// (beta_pump, beta_coinc) registered along an optimization trace.
inline BetaRelation relation_from_trace(const OptimizationTrace& trace) {
  BetaRelation r;
  for (const auto& e : trace.iterations) {
    r.beta_pump.push_back(e.beta_pump);
    r.beta_coinc.push_back(e.beta_coinc);
  }
  r.fit = fit_power_law(r.beta_pump, r.beta_coinc);
  return r;
}

/// Optimizer on/off schedule for a dynamic run.
struct DynamicSchedule {
  double duration = 60.0;
  /// Intervals [start, end) during which the optimizer runs; empty = always.
  std::vector<std::pair<double, double>> windows;

  bool active(double t) const {
    if (windows.empty()) return true;
    for (const auto& [a, b] : windows)
      if (t >= a && t < b) return true;
    return false;
  }
};

/// Closed loop on a translating medium. `medium_at(displacement)` returns
/// the forward model with the medium shifted by `displacement` metres; the
/// medium moves by speed * response_time per probe. A record is written
/// after every optimizer update, or every response_time while idle.
inline OptimizationTrace dynamic_run(const std::function<ForwardModel(double)>& medium_at, double speed,
                                     Algorithm alg, const SlmConfig& slm, const FeedbackChannel& fb,
                                     const DynamicSchedule& schedule, const Baseline& baseline) {
  FeedbackOptimizer opt(alg, slm, fb);
  const FeedbackOptimizer::ModelAt at = [&](double t) { return medium_at(speed * t); };
  opt.record(at, 0.0, false);
  while (opt.time() < schedule.duration) {
    if (schedule.active(opt.time())) {
      const double f = opt.update(at);
      opt.record(at, f, true);
    } else {
      opt.idle();
      opt.record(at, 0.0, false);
    }
  }
  OptimizationTrace t = std::move(opt.trace());
  t.baseline_pump = baseline.pump;
  t.baseline_coinc = baseline.coinc;
  if (baseline.pump > 0.0) std::tie(t.eta_pump, t.eta_coinc) = enhancement(t);
  return t;
}

/// Mean enhancement over trace entries with time in [t0, t1).
inline std::pair<double, double> mean_enhancement(const OptimizationTrace& t, double t0, double t1) {
  double p = 0.0, c = 0.0;
  int n = 0;
  for (const auto& e : t.iterations)
    if (e.time >= t0 && e.time < t1) {
      p += e.beta_pump;
      c += e.beta_coinc;
      ++n;
    }
  require(n > 0, ErrorCode::invalid_argument, "no trace entries in window");
  require(t.baseline_pump > 0.0, ErrorCode::zero_total, "zero pump baseline");
  return {p / n / t.baseline_pump, t.baseline_coinc > 0.0 ? c / n / t.baseline_coinc : 0.0};
}

}  // namespace pairwfs
