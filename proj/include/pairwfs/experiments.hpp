#pragma once

// Declarative scenario runner: one runner per figure, JSON configs checked
// against a per-scenario schema, CSV outputs, a plotting script and a run
// manifest with content hashes.

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <limits>
#include <mutex>
#include <numbers>
#include <string>
#include <thread>
#include <vector>

#include "pairwfs/io.hpp"
#include "pairwfs/studies.hpp"

namespace pairwfs {

inline constexpr const char* library_version = "0.1.0";

using json = nlohmann::json;

enum class ScenarioId {
  fig2_speckle_identity,
  fig3_dynamic,
  fig4b_beta_relation,
  fig4c_corr_vs_K,
  fig5b_double_diffuser,
  fig5d_link_sweep,
  figS1_pi_step,
  figS2_zrd_collapse,
  figS3_memory_effect,
  figS4_zra_collapse,
  figS5_lossy,
  figS7_scaling,
  figS8_waist15cm,
  schmidt_estimate
};

inline const std::vector<std::pair<ScenarioId, std::string>>& scenario_names() {
  static const std::vector<std::pair<ScenarioId, std::string>> names{
      {ScenarioId::fig2_speckle_identity, "fig2_speckle_identity"},
      {ScenarioId::fig3_dynamic, "fig3_dynamic"},
      {ScenarioId::fig4b_beta_relation, "fig4b_beta_relation"},
      {ScenarioId::fig4c_corr_vs_K, "fig4c_corr_vs_K"},
      {ScenarioId::fig5b_double_diffuser, "fig5b_double_diffuser"},
      {ScenarioId::fig5d_link_sweep, "fig5d_link_sweep"},
      {ScenarioId::figS1_pi_step, "figS1_pi_step"},
      {ScenarioId::figS2_zrd_collapse, "figS2_zrd_collapse"},
      {ScenarioId::figS3_memory_effect, "figS3_memory_effect"},
      {ScenarioId::figS4_zra_collapse, "figS4_zra_collapse"},
      {ScenarioId::figS5_lossy, "figS5_lossy"},
      {ScenarioId::figS7_scaling, "figS7_scaling"},
      {ScenarioId::figS8_waist15cm, "figS8_waist15cm"},
      {ScenarioId::schmidt_estimate, "schmidt_estimate"}};
  return names;
}

inline const std::string& to_string(ScenarioId id) {
  for (const auto& [k, n] : scenario_names())
    if (k == id) return n;
  throw Error(ErrorCode::invalid_argument, "unknown scenario id");
}

inline ScenarioId parse_scenario_id(const std::string& s) {
  for (const auto& [k, n] : scenario_names())
    if (n == s) return k;
  throw Error(ErrorCode::config, "scenario_id: unknown scenario '" + s + "'");
}

// ---------------------------------------------------------------- schema

enum class ParamKind { real, integer, real_list, integer_list };

struct ParamSpec {
  std::string name;
  ParamKind kind;
  json fallback;
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  bool lo_open = false;  // lo itself excluded
  std::string unit;
  std::string help;
};

namespace detail {
inline constexpr double inf = std::numeric_limits<double>::infinity();

inline ParamSpec positive(std::string n, json v, std::string unit, std::string help) {
  return {std::move(n), ParamKind::real, std::move(v), 0.0, inf, true, std::move(unit), std::move(help)};
}
inline ParamSpec positive_list(std::string n, json v, std::string unit, std::string help) {
  return {std::move(n), ParamKind::real_list, std::move(v), 0.0, inf, true, std::move(unit), std::move(help)};
}
inline ParamSpec count(std::string n, int v, int lo, int hi, std::string help) {
  return {std::move(n), ParamKind::integer, v, double(lo), double(hi), false, "1", std::move(help)};
}
}  // namespace detail

/// Parameters, defaults and ranges of every scenario.
inline const std::vector<ParamSpec>& scenario_schema(ScenarioId id) {
  using namespace detail;
  static const std::vector<ParamSpec> link_common{
      count("seeds", 10, 1, 1000, "screen realizations per length"),
      count("n_points", 8192, 256, 1 << 16, "transverse samples"),
      positive("extent", 32.0, "m", "transverse window"),
      positive("waist", 1.0, "m", "pump 1/e amplitude radius"),
      count("screens", 2, 1, 64, "phase screens per link"),
      positive("outer_scale", 10.0, "m", "von Karman outer scale"),
      positive("inner_scale", 5e-3, "m", "inner scale"),
      positive("length_min", 10.0, "m", "shortest link"),
      positive("length_max", 1e6, "m", "longest link"),
      count("lengths", 31, 2, 400, "log-spaced link lengths"),
  };
  static const std::vector<std::pair<ScenarioId, std::vector<ParamSpec>>> table{
      {ScenarioId::fig2_speckle_identity,
       {positive("schmidt_number", 680.0, "1", "pair Schmidt number"), count("seeds", 5, 1, 1000, "diffusers"),
        count("n_points", 1024, 64, 4096, "transverse samples"),
        positive("coherence_fraction", 0.2, "1", "diffuser coherence length over pump waist"),
        positive("phase_rms", std::numbers::pi, "rad", "diffuser phase rms at the photon wavelength")}},
      {ScenarioId::fig3_dynamic,
       {count("segments", 32, 2, 4096, "SLM segments"), count("phase_levels", 8, 3, 64, "probe phases"),
        positive("response_time", 0.1, "s", "time per probe"), positive("duration", 400.0, "s", "run length"),
        positive("optimizer_off", 250.0, "s", "pump-feedback optimizer is switched off at this time"),
        positive("speed_factor", 20.0, "1", "medium decorrelation time d/speed over N * response_time"),
        positive("coincidence_counts", 4.0, "counts", "expected counts per probe at beta = 1")}},
      {ScenarioId::fig4b_beta_relation,
       {count("segments", 64, 2, 4096, "SLM segments"), count("seeds", 5, 1, 1000, "media"),
        positive_list("transmissions", json::array({1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3}), "1",
                      "absorber amplitude transmissions"),
        positive("pair_correlation", 0.5e-6, "m", "pair correlation parameter b")}},
      {ScenarioId::fig4c_corr_vs_K,
       {positive_list("schmidt_numbers", json::array({1, 2, 5, 10, 50, 200, 680}), "1", "Schmidt numbers"),
        count("seeds", 20, 1, 1000, "diffusers per Schmidt number"),
        count("n_points", 1024, 64, 4096, "transverse samples"),
        positive("coherence_fraction", 0.2, "1", "diffuser coherence length over pump waist")}},
      {ScenarioId::fig5b_double_diffuser,
       {positive("coherence_length", 12e-6, "m", "diffuser coherence length"),
        {"gap_over_zrd", ParamKind::real, 0.3, 0.0, inf, false, "1", "diffuser separation over pi d^2/lambda"},
        {"idler_shifts", ParamKind::integer_list, json::array({0, 16, 32, 64, 96, 128, 192, 256, 384, 512}), 0.0,
         1024.0, false, "samples", "idler detector displacement"},
        count("seeds", 5, 1, 1000, "media")}},
      {ScenarioId::fig5d_link_sweep, {}},
      {ScenarioId::figS1_pi_step,
       {positive("schmidt_number", 200.0, "1", "entangled-state Schmidt number"),
        count("n_points", 512, 64, 2048, "transverse samples")}},
      {ScenarioId::figS2_zrd_collapse,
       {positive_list("coherence_lengths", json::array({8e-6, 12e-6, 18e-6}), "m", "diffuser coherence lengths"),
        positive_list("z_over_zrd", json::array({0.03, 0.1, 0.3, 1.0, 3.0, 10.0}), "1", "gap over pi d^2/lambda"),
        count("seeds", 10, 1, 1000, "media")}},
      {ScenarioId::figS3_memory_effect,
       {positive("coherence_length", 100e-6, "m", "diffuser coherence length"),
        positive("gap", 3e-3, "m", "diffuser separation"),
        positive_list("tilts", json::array({0.005, 0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.08}), "rad",
                      "input tilt angles"),
        count("seeds", 5, 1, 1000, "media")}},
      {ScenarioId::figS4_zra_collapse,
       {positive_list("fried_parameters", json::array({0.01, 0.02, 0.04, 0.08}), "m", "whole-link r0"),
        positive_list("z_over_zra", json::array({0.1, 0.2, 0.5, 1.0, 2.0, 5.0}), "1", "length over pi rho0^2/lambda"),
        count("seeds", 10, 1, 1000, "screen realizations")}},
      {ScenarioId::figS5_lossy,
       {{"loss_strengths", ParamKind::real_list, json::array({0.0, 0.5, 1.0}), 0.0, 1.0, false, "1",
         "loss strength s"},
        count("segments", 64, 2, 4096, "SLM segments"), count("seeds", 10, 1, 1000, "media")}},
      {ScenarioId::figS7_scaling, {}},
      {ScenarioId::figS8_waist15cm, {}},
      {ScenarioId::schmidt_estimate,
       {positive("schmidt_number", 680.0, "1", "synthetic state Schmidt number"),
        positive("pump_width", 1.0, "1/m", "pump angular width sigma")}},
  };
  static const std::vector<ParamSpec> fig5d = [] {
    auto v = link_common;
    v.insert(v.begin(), positive("cn2", 1e-16, "m^-2/3", "refractive-index structure constant"));
    return v;
  }();
  static const std::vector<ParamSpec> figS7 = [] {
    auto v = link_common;
    v.insert(v.begin(), positive_list("cn2", json::array({1e-18, 2e-18, 5e-18, 1e-17, 2e-17, 5e-17, 1e-16}),
                                      "m^-2/3", "structure constants"));
    return v;
  }();
  static const std::vector<ParamSpec> figS8 = [] {
    auto v = fig5d;
    for (auto& p : v) {
      if (p.name == "waist") p.fallback = 0.15;
      if (p.name == "extent") p.fallback = 4.8;
    }
    return v;
  }();
  if (id == ScenarioId::fig5d_link_sweep) return fig5d;
  if (id == ScenarioId::figS7_scaling) return figS7;
  if (id == ScenarioId::figS8_waist15cm) return figS8;
  for (const auto& [k, v] : table)
    if (k == id) return v;
  throw Error(ErrorCode::invalid_argument, "scenario without schema");
}

struct ScenarioConfig {
  ScenarioId id = ScenarioId::fig4c_corr_vs_K;
  json parameters = json::object();  // fully resolved
  std::uint64_t master_seed = 1;
  std::filesystem::path output_dir;
  json raw = json::object();         // input echo
};

namespace detail {
inline void check_value(const ParamSpec& p, const json& v, const std::string& where) {
  if (!v.is_number()) throw Error(ErrorCode::config, where + ": expected a number");
  if (p.kind == ParamKind::integer || p.kind == ParamKind::integer_list)
    if (!v.is_number_integer()) throw Error(ErrorCode::config, where + ": expected an integer");
  const double x = v.get<double>();
  const bool low = p.lo_open ? !(x > p.lo) : !(x >= p.lo);
  if (!std::isfinite(x) || low || x > p.hi)
    throw Error(ErrorCode::config, where + ": value " + v.dump() + " out of range " + (p.lo_open ? "(" : "[") +
                                       format_number(p.lo) + ", " + format_number(p.hi) + "]");
}
}  // namespace detail

/// Resolves defaults and rejects unknown keys, wrong types and values out of
/// range. Error messages start with the offending key.
inline ScenarioConfig validate_config(const json& raw) {
  if (!raw.is_object()) throw Error(ErrorCode::config, "config: expected an object");
  static const std::vector<std::string> top{"scenario_id", "master_seed", "output_dir", "parameters"};
  for (const auto& [k, v] : raw.items())
    if (std::find(top.begin(), top.end(), k) == top.end()) throw Error(ErrorCode::config, k + ": unknown key");
  if (!raw.contains("scenario_id")) throw Error(ErrorCode::config, "scenario_id: missing required key");
  if (!raw["scenario_id"].is_string()) throw Error(ErrorCode::config, "scenario_id: expected a string");
  ScenarioConfig c;
  c.raw = raw;
  c.id = parse_scenario_id(raw["scenario_id"].get<std::string>());
  if (raw.contains("master_seed")) {
    const auto& s = raw["master_seed"];
    if (!s.is_number_integer() || s.get<std::int64_t>() < 0) throw Error(ErrorCode::config, "master_seed: expected a nonnegative integer");
    c.master_seed = s.get<std::uint64_t>();
  }
  if (raw.contains("output_dir")) {
    if (!raw["output_dir"].is_string()) throw Error(ErrorCode::config, "output_dir: expected a string");
    c.output_dir = raw["output_dir"].get<std::string>();
  }
  const json given = raw.value("parameters", json::object());
  if (!given.is_object()) throw Error(ErrorCode::config, "parameters: expected an object");
  const auto& schema = scenario_schema(c.id);
  for (const auto& [k, v] : given.items())
    if (std::none_of(schema.begin(), schema.end(), [&](const ParamSpec& p) { return p.name == k; }))
      throw Error(ErrorCode::config, k + ": unknown key for scenario " + to_string(c.id));
  for (const auto& p : schema) {
    const json v = given.contains(p.name) ? given[p.name] : p.fallback;
    if (p.kind == ParamKind::real_list || p.kind == ParamKind::integer_list) {
      if (!v.is_array() || v.empty()) throw Error(ErrorCode::config, p.name + ": expected a nonempty list");
      for (std::size_t i = 0; i < v.size(); ++i) detail::check_value(p, v[i], p.name + "[" + std::to_string(i) + "]");
    } else {
      detail::check_value(p, v, p.name);
    }
    c.parameters[p.name] = v;
  }
  return c;
}

inline ScenarioConfig validate_config(std::string_view text) {
  json raw;
  try {
    raw = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::config, std::string("config: parse error: ") + e.what());
  }
  return validate_config(raw);
}
inline ScenarioConfig validate_config(const std::string& text) { return validate_config(std::string_view(text)); }
inline ScenarioConfig validate_config(const char* text) { return validate_config(std::string_view(text)); }

// ---------------------------------------------------------------- running

/// Runs f(0..n-1) on up to `jobs` threads; results are stored by index so
/// the outcome does not depend on scheduling. The lowest-index exception is
/// rethrown.
template <class F>
auto parallel_map(std::size_t n, int jobs, F&& f) -> std::vector<decltype(f(std::size_t{}))> {
  using R = decltype(f(std::size_t{}));
  std::vector<std::optional<R>> out(n);
  std::vector<std::exception_ptr> errs(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i; (i = next++) < n;) {
      try {
        out[i].emplace(f(i));
      } catch (...) {
        errs[i] = std::current_exception();
      }
    }
  };
  const std::size_t nt = std::min<std::size_t>(n, std::size_t(std::max(1, jobs)));
  if (nt <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < nt; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
  std::vector<R> r;
  r.reserve(n);
  for (auto& o : out) r.push_back(std::move(*o));
  return r;
}

/// One figure of the plotting script: x against one or more y columns of a
/// CSV, optionally split into curves by the value of `group` column.
struct PlotSpec {
  std::string csv;
  std::string x;
  std::vector<std::string> y;
  std::string group;
  std::string xlabel, ylabel, title;
  bool logx = false, logy = false;
};

struct EmittedFile {
  std::string name;  // relative to the run directory
  std::string sha1;
  std::uintmax_t bytes = 0;
};

struct RunManifest {
  ScenarioConfig config;
  std::filesystem::path run_dir;
  json seeds = json::array();
  json summary = json::object();
  std::vector<PlotSpec> plots;
  std::vector<EmittedFile> files;
  double wall_clock_s = 0.0;
};

struct RunOptions {
  int jobs = 1;
};

namespace detail {

class Params {
 public:
  explicit Params(const json& j) : j_(j) {}
  double real(const char* k) const { return j_.at(k).get<double>(); }
  int integer(const char* k) const { return j_.at(k).get<int>(); }
  std::size_t size(const char* k) const { return j_.at(k).get<std::size_t>(); }
  std::vector<double> reals(const char* k) const { return j_.at(k).get<std::vector<double>>(); }
  std::vector<int> integers(const char* k) const { return j_.at(k).get<std::vector<int>>(); }

 private:
  const json& j_;
};

// Per-run bookkeeping handed to the scenario bodies.
struct Run {
  RunManifest& m;
  int jobs;
  std::vector<std::pair<std::string, CsvTable>> tables;

  std::uint64_t seed(std::uint64_t index) {
    const std::uint64_t s = derive_seed(m.config.master_seed, to_string(m.config.id), index);
    m.seeds.push_back({{"task", index}, {"seed", s}});
    return s;
  }
  std::vector<std::uint64_t> seeds(std::size_t n) {
    std::vector<std::uint64_t> v;
    for (std::size_t i = 0; i < n; ++i) v.push_back(seed(i));
    return v;
  }
  void table(std::string name, CsvTable t) { tables.emplace_back(std::move(name), std::move(t)); }
  void plot(PlotSpec p) { m.plots.push_back(std::move(p)); }
};

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / double(v.size());
}

inline double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * double(v.size() - 1);
  const auto i = std::size_t(std::floor(pos));
  const double f = pos - double(i);
  return i + 1 < v.size() ? v[i] * (1.0 - f) + v[i + 1] * f : v[i];
}

inline void add_pattern_columns(CsvTable& t, const std::vector<const RealField*>& fields) {
  const Grid& g = fields.front()->grid;
  for (std::size_t k = 0; k < g.n_points; ++k) {
    std::vector<double> row{g.coord(k)};
    for (const auto* f : fields) row.push_back(f->values[k]);
    t.add(std::move(row));
  }
}

// (max - min) / mean across curves at each abscissa; rows are curves
inline json collapse_spread(const std::vector<std::vector<double>>& rows) {
  json out = json::array();
  for (std::size_t b = 0; b < rows.front().size(); ++b) {
    std::vector<double> col;
    for (const auto& row : rows) col.push_back(row[b]);
    const auto [lo, hi] = std::minmax_element(col.begin(), col.end());
    out.push_back((*hi - *lo) / mean_of(col));
  }
  return out;
}

inline void run_fig2(Run& r, const Params& p) {
  SpeckleCorrelationSetup s;
  s.n_points = p.size("n_points");
  s.coherence_fraction = p.real("coherence_fraction");
  s.phase_rms = p.real("phase_rms");
  const double K = p.real("schmidt_number");
  const auto seeds = r.seeds(p.size("seeds"));
  auto res = parallel_map(seeds.size(), r.jobs, [&](std::size_t i) { return speckle_patterns(K, seeds[i], s); });
  CsvTable corr({"seed_index", "correlation"}, {"1", "1"});
  std::vector<double> c;
  for (std::size_t i = 0; i < res.size(); ++i) {
    corr.add({double(i), res[i].correlation});
    c.push_back(res[i].correlation);
  }
  CsvTable pat({"q_sum", "pump", "coincidence", "in_mask"}, {"rad/m", "1", "1", "bool"});
  pat.notes.push_back("first diffuser; both patterns on the pump angular grid, idler at q = 0");
  const auto& f = res.front();
  for (std::size_t k = 0; k < f.pump.size(); ++k)
    pat.add({f.pump.grid.coord(k), f.pump.values[k], f.coinc.values[k], double(f.mask[k])});
  r.table("speckle_patterns.csv", std::move(pat));
  r.table("correlation.csv", std::move(corr));
  r.m.summary["median_correlation"] = quantile(c, 0.5);
  r.m.summary["schmidt_number"] = K;
  r.plot({"speckle_patterns.csv", "q_sum", {"pump", "coincidence"}, "", "q_s + q_i (rad/m)", "normalized signal",
          "Pump and two-photon speckle"});
}

inline void run_fig3(Run& r, const Params& p) {
  DynamicSetup d;
  d.segments = p.integer("segments");
  d.levels = p.integer("phase_levels");
  d.response_time = p.real("response_time");
  d.duration = p.real("duration");
  const double speed = d.shaping.coherence_length / (p.real("speed_factor") * d.segments * d.response_time);
  const auto seed = r.seed(0);
  auto traces = parallel_map(2, r.jobs, [&](std::size_t i) {
    FeedbackChannel fb = d.shaping.pump_feedback();
    fb.seed = derive_seed(seed, "feedback", i);
    if (i == 0) return dynamic_shaping_run(d, speed, fb, seed, {d.duration, {{0.0, p.real("optimizer_off")}}});
    fb.mode = FeedbackMode::coincidence_poisson;
    fb.integration_time = d.response_time;
    fb.rate_scale = p.real("coincidence_counts") / fb.integration_time;
    return dynamic_shaping_run(d, speed, fb, seed, {d.duration, {}});
  });
  r.table("trace_pump_feedback.csv", trace_table(traces[0]));
  r.table("trace_coincidence_feedback.csv", trace_table(traces[1]));
  const double off = p.real("optimizer_off");
  const auto [sp, sc] = mean_enhancement(traces[0], 0.5 * off, off);
  r.m.summary["speed_m_per_s"] = speed;
  r.m.summary["pump_feedback_sustained_eta_pump"] = sp;
  r.m.summary["pump_feedback_sustained_eta_coinc"] = sc;
  r.m.summary["coincidence_feedback_final_eta_coinc"] = traces[1].eta_coinc;
  for (const char* f : {"trace_pump_feedback.csv", "trace_coincidence_feedback.csv"})
    r.plot({f, "time_s", {"eta_pump", "eta_coinc"}, "", "time (s)", "enhancement", f});
}

inline void run_fig4b(Run& r, const Params& p) {
  ShapingSetup s;
  s.plane.b = p.real("pair_correlation");
  const int N = p.integer("segments");
  const auto seeds = r.seeds(p.size("seeds"));
  const auto ts = p.reals("transmissions");
  const BetaRelation ab = absorption_relation(s, seeds.front(), ts);
  CsvTable a({"transmission", "beta_pump", "beta_coinc"}, {"1", "1", "1"});
  a.notes.push_back("betas relative to the lossless reference");
  for (std::size_t i = 0; i < ts.size(); ++i) a.add({ts[i], ab.beta_pump[i], ab.beta_coinc[i]});
  auto rel = parallel_map(seeds.size(), r.jobs, [&](std::size_t i) { return scattering_relation(s, N, seeds[i]); });
  CsvTable sc({"seed_index", "step", "beta_pump", "beta_coinc"}, {"1", "1", "1", "1"});
  json exps = json::array();
  for (std::size_t i = 0; i < rel.size(); ++i) {
    for (std::size_t k = 0; k < rel[i].beta_pump.size(); ++k)
      sc.add({double(i), double(k), rel[i].beta_pump[k], rel[i].beta_coinc[k]});
    exps.push_back(rel[i].fit.slope);
  }
  r.table("absorption.csv", std::move(a));
  r.table("scattering.csv", std::move(sc));
  r.m.summary["absorption_exponent"] = ab.fit.slope;
  r.m.summary["scattering_exponents"] = exps;
  r.plot({"absorption.csv", "beta_pump", {"beta_coinc"}, "", "beta pump", "beta coincidence", "Absorption", true, true});
  r.plot({"scattering.csv", "beta_pump", {"beta_coinc"}, "seed_index", "beta pump", "beta coincidence",
          "Scattering optimization", true, true});
}

inline void run_fig4c(Run& r, const Params& p) {
  SpeckleCorrelationSetup s;
  s.n_points = p.size("n_points");
  s.coherence_fraction = p.real("coherence_fraction");
  const auto Ks = p.reals("schmidt_numbers");
  const std::size_t ns = p.size("seeds");
  const auto seeds = r.seeds(ns);
  auto c = parallel_map(Ks.size() * ns, r.jobs,
                        [&](std::size_t t) { return speckle_pattern_correlation(Ks[t / ns], seeds[t % ns], s); });
  CsvTable samples({"schmidt_number", "seed_index", "correlation"}, {"1", "1", "1"});
  CsvTable curve({"schmidt_number", "median", "q25", "q75"}, {"1", "1", "1", "1"});
  json med = json::array();
  for (std::size_t k = 0; k < Ks.size(); ++k) {
    std::vector<double> v(c.begin() + std::ptrdiff_t(k * ns), c.begin() + std::ptrdiff_t((k + 1) * ns));
    for (std::size_t i = 0; i < ns; ++i) samples.add({Ks[k], double(i), v[i]});
    curve.add({Ks[k], quantile(v, 0.5), quantile(v, 0.25), quantile(v, 0.75)});
    med.push_back(quantile(v, 0.5));
  }
  r.table("corr_vs_K.csv", std::move(curve));
  r.table("samples.csv", std::move(samples));
  r.m.summary["median_correlation"] = med;
  r.plot({"corr_vs_K.csv", "schmidt_number", {"median", "q25", "q75"}, "", "Schmidt number K",
          "pump/coincidence correlation", "Correlation versus K", true, false});
}

inline void run_fig5b(Run& r, const Params& p) {
  VolumeStudySetup s;
  const double d = p.real("coherence_length");
  const double gap = p.real("gap_over_zrd") * diffuser_rayleigh_length(d, s.plane.pump_wavelength);
  const auto shifts = p.integers("idler_shifts");
  const auto seeds = r.seeds(p.size("seeds"));
  auto scans = parallel_map(2 * seeds.size(), r.jobs, [&](std::size_t t) {
    return idler_displacement_scan(d, t % 2 ? 0.0 : gap, seeds[t / 2], shifts, s);
  });
  const double dq = s.plane.grid().reciprocal().spacing();
  const double k = 2.0 * std::numbers::pi / s.plane.photon_wavelength();
  CsvTable t({"idler_shift", "idler_angle", "beta_coinc", "beta_coinc_single_layer"}, {"samples", "rad", "1", "1"});
  t.notes.push_back("coincidence fraction at the momentum-conjugate signal sample, mean over media");
  std::vector<double> mean_gap(shifts.size(), 0.0);
  for (std::size_t j = 0; j < shifts.size(); ++j) {
    double a = 0.0, b = 0.0;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      a += scans[2 * i][j];
      b += scans[2 * i + 1][j];
    }
    mean_gap[j] = a / double(seeds.size());
    t.add({double(shifts[j]), shifts[j] * dq / k, mean_gap[j], b / double(seeds.size())});
  }
  r.table("idler_scan.csv", std::move(t));
  r.m.summary["gap_m"] = gap;
  r.m.summary["beta_coinc"] = mean_gap;
  r.plot({"idler_scan.csv", "idler_angle", {"beta_coinc", "beta_coinc_single_layer"}, "", "idler displacement (rad)",
          "beta coincidence", "Idler displacement"});
}

inline LinkSetup link_setup(const Params& p) {
  LinkSetup s;
  s.n_points = p.size("n_points");
  s.extent = p.real("extent");
  s.waist = p.real("waist");
  s.screens = p.integer("screens");
  s.outer_scale = p.real("outer_scale");
  s.inner_scale = p.real("inner_scale");
  require(p.real("length_min") < p.real("length_max"), ErrorCode::config, "length_min: must be below length_max");
  return s;
}

inline std::vector<LinkSweepResult> link_sweeps(Run& r, const Params& p, const std::vector<double>& cn2) {
  const LinkSetup s = link_setup(p);
  const ScreenGenerator gen = s.generator();
  const auto z = log_lengths(p.real("length_min"), p.real("length_max"), p.size("lengths"));
  const LinkSweepConfig cfg{p.size("seeds"), r.seed(0), 0.1};
  return parallel_map(cn2.size(), r.jobs, [&](std::size_t i) { return link_length_sweep(s, gen, cn2[i], z, cfg); });
}

inline CsvTable link_table(const std::vector<LinkSweepResult>& res) {
  CsvTable t({"cn2", "length", "beta_optimized", "beta_unoptimized"}, {"m^-2/3", "m", "1", "1"});
  t.notes.push_back("coincidence target fraction relative to free space, mean over screen realizations");
  for (const auto& r : res)
    for (std::size_t k = 0; k < r.lengths.size(); ++k)
      t.add({r.Cn2, r.lengths[k], r.beta_optimized[k], r.beta_unoptimized[k]});
  return t;
}

inline json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline void run_link_single(Run& r, const Params& p) {
  const auto res = link_sweeps(r, p, {p.real("cn2")});
  r.table("link.csv", link_table(res));
  const auto& s = res.front();
  r.m.summary["z_o"] = optional_json(s.z_o);
  r.m.summary["z_no"] = optional_json(s.z_no);
  r.m.summary["ratio"] = s.z_o && s.z_no ? json(*s.z_o / *s.z_no) : json(nullptr);
  r.plot({"link.csv", "length", {"beta_optimized", "beta_unoptimized"}, "", "link length (m)", "beta / beta free",
          "Link sweep", true, false});
}

inline void run_figS7(Run& r, const Params& p) {
  const auto cn2 = p.reals("cn2");
  const auto res = link_sweeps(r, p, cn2);
  r.table("link.csv", link_table(res));
  CsvTable t({"cn2", "cn2_5_11", "z_o", "z_no", "ratio"}, {"m^-2/3", "1", "m", "m", "1"});
  std::vector<double> x, y;
  for (const auto& s : res) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const double ratio = s.z_o && s.z_no ? *s.z_o / *s.z_no : nan;
    t.add({s.Cn2, std::pow(s.Cn2, 5.0 / 11.0), s.z_o.value_or(nan), s.z_no.value_or(nan), ratio});
    if (std::isfinite(ratio)) {
      x.push_back(std::pow(s.Cn2, 5.0 / 11.0));
      y.push_back(ratio);
    }
  }
  r.table("scaling.csv", std::move(t));
  if (x.size() >= 2) {
    const LinearFit f = fit_line(x, y);
    r.m.summary["fit_slope"] = f.slope;
    r.m.summary["fit_intercept"] = f.intercept;
    r.m.summary["fit_r_squared"] = f.r_squared;
  }
  r.plot({"scaling.csv", "cn2_5_11", {"ratio"}, "", "Cn2^(5/11)", "z_o / z_no", "Link extension scaling"});
  r.plot({"link.csv", "length", {"beta_optimized"}, "cn2", "link length (m)", "beta / beta free", "Optimized links",
          true, false});
}

inline void run_figS1(Run& r, const Params& p) {
  PiStepSetup s;
  s.n_points = p.size("n_points");
  const PiStepResult res = pi_step_study(p.real("schmidt_number"), s);
  CsvTable t({"q", "pump_bare", "pump_masked", "singles_separable_bare", "singles_separable_masked",
              "coinc_slice_bare", "coinc_slice_masked"},
             {"rad/m", "1", "1", "1", "1", "1", "1"});
  t.notes.push_back("coincidence slices for the entangled state with the idler at q = 0");
  add_pattern_columns(t, {&res.pump_bare, &res.pump_masked, &res.singles_separable_bare,
                          &res.singles_separable_masked, &res.coinc_slice_bare, &res.coinc_slice_masked});
  r.table("patterns.csv", std::move(t));
  r.m.summary["coincidence_correlation"] = res.coinc_corr_high_k;
  r.m.summary["singles_correlation_entangled"] = res.singles_corr_high_k;
  r.m.summary["singles_correlation_separable"] = res.singles_corr_separable;
  r.m.summary["pump_correlation"] = res.pump_corr;
  r.plot({"patterns.csv", "q", {"singles_separable_bare", "singles_separable_masked"}, "", "q (rad/m)", "singles",
          "Separable photon"});
  r.plot({"patterns.csv", "q", {"coinc_slice_bare", "coinc_slice_masked"}, "", "q (rad/m)", "coincidences",
          "Entangled pair"});
}

inline void run_figS2(Run& r, const Params& p) {
  const VolumeStudySetup s;
  const auto ds = p.reals("coherence_lengths");
  const auto zs = p.reals("z_over_zrd");
  const std::size_t ns = p.size("seeds");
  const auto seeds = r.seeds(ns);
  const std::size_t per_d = zs.size() * ns;
  auto f = parallel_map(ds.size() * per_d, r.jobs, [&](std::size_t t) {
    const double d = ds[t / per_d];
    const double z = zs[(t % per_d) / ns] * diffuser_rayleigh_length(d, s.plane.pump_wavelength);
    return volume_focus(d, z, seeds[t % ns], s);
  });
  CsvTable t({"coherence_length", "z_over_zrd", "beta_pump", "beta_coinc"}, {"m", "1", "1", "1"});
  std::vector<std::vector<double>> bc(ds.size(), std::vector<double>(zs.size(), 0.0));
  for (std::size_t a = 0; a < ds.size(); ++a)
    for (std::size_t b = 0; b < zs.size(); ++b) {
      double bp = 0.0;
      for (std::size_t i = 0; i < ns; ++i) {
        bp += f[a * per_d + b * ns + i].pump;
        bc[a][b] += f[a * per_d + b * ns + i].coinc / double(ns);
      }
      t.add({ds[a], zs[b], bp / double(ns), bc[a][b]});
    }
  r.table("collapse.csv", std::move(t));
  r.m.summary["relative_spread"] = collapse_spread(bc);
  json fall = json::array();
  for (const auto& row : bc) fall.push_back(row.front() / row.back());
  r.m.summary["first_over_last"] = fall;
  r.plot({"collapse.csv", "z_over_zrd", {"beta_coinc"}, "coherence_length", "z / z_rd", "optimized beta coincidence",
          "Volume diffuser collapse", true, true});
}

inline void run_figS3(Run& r, const Params& p) {
  const double d = p.real("coherence_length"), gap = p.real("gap");
  const double lambda = 808e-9;
  const Grid g(16384, 16384 * 2.5e-6);
  auto tilts = p.reals("tilts");
  tilts.insert(tilts.begin(), 0.0);
  const auto probe = gaussian_mode(g, 5e-3, lambda);
  const double opd = lambda / (2.0 * std::numbers::pi);
  const Grid qg = g.reciprocal();
  const double spread = 2 * std::numbers::sqrt2 / d;
  std::vector<std::uint8_t> mask(g.n_points);
  for (std::size_t i = 0; i < g.n_points; ++i) {
    const double q = std::abs(qg.coord(i));
    mask[i] = q > 2e3 && q < 0.5 * spread;
  }
  const auto seeds = r.seeds(p.size("seeds"));
  auto curves = parallel_map(2 * seeds.size(), r.jobs, [&](std::size_t t) -> std::vector<double> {
    const auto s = seeds[t / 2];
    const auto first = synth_diffuser({d, opd, 0.0, derive_seed(s, "first", 0)}, g);
    if (t % 2) return memory_effect_curve(thin_path(first, lambda), probe, tilts, mask);
    const VolumeDiffuser v{first, synth_diffuser({d, opd, 0.0, derive_seed(s, "second", 0)}, g), gap};
    return memory_effect_curve(volume_path(v, lambda), probe, tilts, mask);
  });
  CsvTable t({"tilt", "double_layer", "single_layer"}, {"rad", "1", "1"});
  t.notes.push_back("median speckle correlation after undoing the tilt shift");
  for (std::size_t k = 0; k < tilts.size(); ++k) {
    std::vector<double> a, b;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      a.push_back(curves[2 * i][k]);
      b.push_back(curves[2 * i + 1][k]);
    }
    t.add({tilts[k], quantile(a, 0.5), quantile(b, 0.5)});
  }
  r.table("memory_effect.csv", std::move(t));
  r.m.summary["geometric_estimate_rad"] = d / gap;
  r.plot({"memory_effect.csv", "tilt", {"double_layer", "single_layer"}, "", "tilt (rad)", "correlation",
          "Memory effect"});
}

inline void run_figS4(Run& r, const Params& p) {
  LinkSetup s;
  const ScreenGenerator gen = s.generator();
  const auto r0s = p.reals("fried_parameters");
  const auto zs = p.reals("z_over_zra");
  const std::size_t ns = p.size("seeds");
  const std::uint64_t master = r.seed(0);
  auto b = parallel_map(r0s.size() * zs.size(), r.jobs, [&](std::size_t t) {
    return zra_scaled_focus(s, gen, r0s[t / zs.size()], zs[t % zs.size()], ns, master);
  });
  CsvTable t({"fried_parameter", "z_over_zra", "beta_optimized"}, {"m", "1", "1"});
  std::vector<std::vector<double>> rows(r0s.size());
  for (std::size_t i = 0; i < b.size(); ++i) {
    t.add({r0s[i / zs.size()], zs[i % zs.size()], b[i]});
    rows[i / zs.size()].push_back(b[i]);
  }
  r.table("collapse.csv", std::move(t));
  r.m.summary["relative_spread"] = collapse_spread(rows);
  r.plot({"collapse.csv", "z_over_zra", {"beta_optimized"}, "fried_parameter", "z / z_ra", "beta / beta free",
          "Turbulence collapse", true, false});
}

inline void run_figS5(Run& r, const Params& p) {
  const auto ss = p.reals("loss_strengths");
  const int N = p.integer("segments");
  const std::size_t ns = p.size("seeds");
  const auto seeds = r.seeds(ns);
  auto f = parallel_map(ss.size() * ns, r.jobs, [&](std::size_t t) {
    ShapingSetup s;
    s.loss_strength = ss[t / ns];
    return lossy_perfect_correction(s, seeds[t % ns]);
  });
  auto traces = parallel_map(ss.size(), r.jobs, [&](std::size_t i) {
    ShapingSetup s;
    s.loss_strength = ss[i];
    return enhancement_run(s, N, seeds.front());
  });
  CsvTable t({"loss_strength", "pump_efficiency", "coinc_efficiency"}, {"1", "1", "1"});
  t.notes.push_back("per-sample phase conjugation relative to the same medium without loss");
  json ce = json::array();
  for (std::size_t i = 0; i < ss.size(); ++i) {
    double a = 0.0, b = 0.0;
    for (std::size_t k = 0; k < ns; ++k) {
      a += f[i * ns + k].pump_efficiency;
      b += f[i * ns + k].coinc_efficiency;
    }
    t.add({ss[i], a / double(ns), b / double(ns)});
    ce.push_back(b / double(ns));
  }
  CsvTable tr({"loss_strength", "step", "beta_pump", "beta_coinc"}, {"1", "1", "1", "1"});
  for (std::size_t i = 0; i < ss.size(); ++i)
    for (const auto& e : traces[i].iterations) tr.add({ss[i], double(e.iteration), e.beta_pump, e.beta_coinc});
  r.table("perfect_correction.csv", std::move(t));
  r.table("optimization.csv", std::move(tr));
  r.m.summary["coinc_efficiency"] = ce;
  r.plot({"perfect_correction.csv", "loss_strength", {"pump_efficiency", "coinc_efficiency"}, "", "loss strength s",
          "efficiency", "Lossy diffuser"});
  r.plot({"optimization.csv", "step", {"beta_coinc"}, "loss_strength", "segment", "beta coincidence",
          "Optimization through lossy diffusers"});
}

inline void run_schmidt(Run& r, const Params& p) {
  const double K = p.real("schmidt_number");
  const auto dg = DoubleGaussianParams::from_schmidt(K, p.real("pump_width"));
  const JointAmplitude psi = build_double_gaussian(dg, default_photon_grid(dg));
  const SchmidtEstimate e = estimate_schmidt(psi);
  const RealField slice = coincidence_slice(psi, 0.0), singles = singles_pattern(psi);
  CsvTable t({"q", "coincidence_slice", "singles"}, {"rad/m", "1", "1"});
  add_pattern_columns(t, {&slice, &singles});
  CsvTable est({"schmidt_true", "schmidt_estimate", "uncertainty", "sigma", "b"}, {"1", "1", "1", "rad/m", "m"});
  est.add({K, e.K, e.uncertainty, e.sigma, e.b});
  r.table("patterns.csv", std::move(t));
  r.table("estimate.csv", std::move(est));
  r.m.summary["schmidt_estimate"] = e.K;
  r.m.summary["uncertainty"] = e.uncertainty;
  r.plot({"patterns.csv", "q", {"coincidence_slice", "singles"}, "", "q (rad/m)", "normalized", "Widths", false, true});
}

inline json plot_json(const PlotSpec& p) {
  return {{"csv", p.csv},       {"x", p.x},           {"y", p.y},         {"group", p.group}, {"xlabel", p.xlabel},
          {"ylabel", p.ylabel}, {"title", p.title},   {"logx", p.logx},   {"logy", p.logy}};
}

inline std::string python_literal(const std::string& s) { return json(s).dump(); }

}  // namespace detail

/// Writes a matplotlib script next to the CSVs. It reads only the CSVs
/// listed in the manifest and writes one PNG per plot, overwriting earlier
/// output.
inline std::filesystem::path emit_plot_script(const RunManifest& m) {
  require(!m.plots.empty(), ErrorCode::invalid_argument, "manifest has no plots");
  for (const auto& p : m.plots) {
    const bool listed = std::any_of(m.files.begin(), m.files.end(), [&](const EmittedFile& f) { return f.name == p.csv; });
    require(listed, ErrorCode::io, "plot refers to unlisted CSV " + p.csv);
    require(std::filesystem::exists(m.run_dir / p.csv), ErrorCode::io, "missing CSV " + (m.run_dir / p.csv).string());
  }
  std::string s =
      "#!/usr/bin/env python3\n"
      "# Regenerates the figures of this run from its CSV files (numpy + matplotlib).\n"
      "import json\n"
      "from pathlib import Path\n\n"
      "import matplotlib\n"
      "matplotlib.use('Agg')\n"
      "import matplotlib.pyplot as plt\n"
      "import numpy as np\n\n"
      "HERE = Path(__file__).resolve().parent\n"
      "PLOTS = json.loads(" +
      detail::python_literal([&] {
        json a = json::array();
        for (const auto& p : m.plots) a.push_back(detail::plot_json(p));
        return a.dump();
      }()) +
      ")\n\n"
      "for n, p in enumerate(PLOTS):\n"
      "    lines = [l for l in (HERE / p['csv']).read_text().splitlines() if not l.startswith('#')]\n"
      "    d = np.atleast_1d(np.genfromtxt(lines, delimiter=',', names=True))\n"
      "    fig, ax = plt.subplots(figsize=(5, 3.6))\n"
      "    groups = sorted(set(d[p['group']])) if p['group'] else [None]\n"
      "    for g in groups:\n"
      "        sel = d if g is None else d[d[p['group']] == g]\n"
      "        for y in p['y']:\n"
      "            label = y if g is None else f\"{p['group']}={g:g}\"\n"
      "            ax.plot(sel[p['x']], sel[y], marker='.', label=label)\n"
      "    if p['logx']:\n"
      "        ax.set_xscale('log')\n"
      "    if p['logy']:\n"
      "        ax.set_yscale('log')\n"
      "    ax.set_xlabel(p['xlabel'])\n"
      "    ax.set_ylabel(p['ylabel'])\n"
      "    ax.set_title(p['title'])\n"
      "    ax.legend(fontsize=7)\n"
      "    fig.tight_layout()\n"
      "    fig.savefig(HERE / f\"plot_{n}.png\", dpi=120)\n"
      "    plt.close(fig)\n";
  const auto path = m.run_dir / "plot.py";
  write_text(path, s);
  return path;
}

inline json manifest_json(const RunManifest& m) {
  json files = json::array();
  for (const auto& f : m.files) files.push_back({{"name", f.name}, {"sha1", f.sha1}, {"bytes", f.bytes}});
  json plots = json::array();
  for (const auto& p : m.plots) plots.push_back(detail::plot_json(p));
  return {{"scenario_id", to_string(m.config.id)},
          {"config", m.config.raw},
          {"resolved_parameters", m.config.parameters},
          {"master_seed", m.config.master_seed},
          {"seeds", m.seeds},
          {"library_version", library_version},
          {"wall_clock_s", m.wall_clock_s},
          {"files", files},
          {"plots", plots},
          {"summary", m.summary}};
}

/// Runs the scenario, writes its CSVs, the plotting script and finally
/// manifest.json into <output_dir>/<scenario_id>/. Library errors are
/// rethrown with the scenario name prefixed.
inline RunManifest run_scenario(const ScenarioConfig& cfg, const RunOptions& opt = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  RunManifest m;
  m.config = cfg;
  m.run_dir = cfg.output_dir / to_string(cfg.id);
  detail::Run run{m, opt.jobs, {}};
  const detail::Params p(cfg.parameters);
  try {
    switch (cfg.id) {
      case ScenarioId::fig2_speckle_identity: detail::run_fig2(run, p); break;
      case ScenarioId::fig3_dynamic: detail::run_fig3(run, p); break;
      case ScenarioId::fig4b_beta_relation: detail::run_fig4b(run, p); break;
      case ScenarioId::fig4c_corr_vs_K: detail::run_fig4c(run, p); break;
      case ScenarioId::fig5b_double_diffuser: detail::run_fig5b(run, p); break;
      case ScenarioId::fig5d_link_sweep:
      case ScenarioId::figS8_waist15cm: detail::run_link_single(run, p); break;
      case ScenarioId::figS1_pi_step: detail::run_figS1(run, p); break;
      case ScenarioId::figS2_zrd_collapse: detail::run_figS2(run, p); break;
      case ScenarioId::figS3_memory_effect: detail::run_figS3(run, p); break;
      case ScenarioId::figS4_zra_collapse: detail::run_figS4(run, p); break;
      case ScenarioId::figS5_lossy: detail::run_figS5(run, p); break;
      case ScenarioId::figS7_scaling: detail::run_figS7(run, p); break;
      case ScenarioId::schmidt_estimate: detail::run_schmidt(run, p); break;
    }
    std::sort(run.tables.begin(), run.tables.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [name, table] : run.tables) {
      const std::string text = to_csv(table);
      write_text(m.run_dir / name, text);
      m.files.push_back({name, sha1_hex(text), text.size()});
    }
    const auto script = emit_plot_script(m);
    m.files.push_back({script.filename().string(), sha1_file(script), std::filesystem::file_size(script)});
  } catch (const Error& e) {
    throw Error(e.code(), "scenario " + to_string(cfg.id) + ": " + e.what());
  }
  m.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_text(m.run_dir / "manifest.json", manifest_json(m).dump(2) + "\n");
  return m;
}

}  // namespace pairwfs
