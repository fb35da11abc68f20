// Acceptance run: one PASS/FAIL line per criterion with the measured values
// and the runtime against its budget. Exit status is the number of failures.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "pairwfs/experiments.hpp"

using namespace pairwfs;

namespace {

const int kJobs = int(std::max(1u, std::thread::hardware_concurrency()));

struct Outcome {
  bool pass = false;
  std::string detail;
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size()); }

std::string fmt(double v) { return format_number(v); }

std::filesystem::path out_root() {
  const char* env = std::getenv("PAIRWFS_OUT");
  return env && *env ? std::filesystem::path(env) / "acceptance"
                     : std::filesystem::temp_directory_path() / "pairwfs_acceptance";
}

RunManifest run(const json& raw) {
  ScenarioConfig c = validate_config(raw);
  c.output_dir = out_root();
  return run_scenario(c, {kJobs});
}

// criteria 1 and 2 share the runs
struct LawRuns {
  std::vector<int> Ns{8, 16, 32, 64};
  std::vector<double> mean_eta;
  std::vector<double> median_ratio;
};

const LawRuns& law_runs() {
  static const LawRuns r = [] {
    LawRuns out;
    const ShapingSetup s;
    for (int N : out.Ns) {
      const auto traces = parallel_map(20, kJobs, [&](std::size_t seed) { return enhancement_run(s, N, seed); });
      std::vector<double> ep, ratio;
      for (const auto& t : traces) {
        ep.push_back(t.eta_pump);
        ratio.push_back(t.eta_coinc / t.eta_pump);
      }
      out.mean_eta.push_back(mean(ep));
      out.median_ratio.push_back(median(ratio));
    }
    return out;
  }();
  return r;
}

Outcome enhancement_law() {
  const auto& r = law_runs();
  Outcome o{true, ""};
  for (std::size_t k = 0; k < r.Ns.size(); ++k) {
    const double expect = std::numbers::pi / 4.0 * (r.Ns[k] - 1) + 1.0;
    const double rel = r.mean_eta[k] / expect - 1.0;
    o.pass = o.pass && std::abs(rel) < 0.15;
    o.detail += "N=" + std::to_string(r.Ns[k]) + " eta=" + fmt(r.mean_eta[k]) + " (law " + fmt(expect) + ") ";
  }
  return o;
}

Outcome channel_equality() {
  const auto& r = law_runs();
  const double K = schmidt_number_numeric(
      joint_amplitude(PairSource{ImagePlaneSetup{512, 1e-6, 256, 404e-9, ShapingSetup{}.plane.b}.pump(),
                                 ShapingSetup{}.plane.b}));
  Outcome o{K >= 200.0, "K(512-sample window)=" + fmt(K) + " "};
  for (std::size_t k = 0; k < r.Ns.size(); ++k) {
    o.pass = o.pass && std::abs(r.median_ratio[k] - 1.0) < 0.1;
    o.detail += "N=" + std::to_string(r.Ns[k]) + " median eta_c/eta_p=" + fmt(r.median_ratio[k]) + " ";
  }
  return o;
}

Outcome beta_relations() {
  const auto m = run({{"scenario_id", "fig4b_beta_relation"}});
  const double a = m.summary["absorption_exponent"].get<double>();
  const auto e = m.summary["scattering_exponents"].get<std::vector<double>>();
  const double worst = *std::max_element(e.begin(), e.end(), [](double x, double y) {
    return std::abs(x - 1.0) < std::abs(y - 1.0);
  });
  return {std::abs(a - 2.0) <= 0.02 && std::abs(worst - 1.0) <= 0.1,
          "absorption exponent " + fmt(a) + ", scattering exponents median " + fmt(median(e)) + " worst " +
              fmt(worst) + " over " + std::to_string(e.size()) + " media"};
}

Outcome corr_vs_k() {
  const auto m = run({{"scenario_id", "fig4c_corr_vs_K"}});
  const auto K = m.config.parameters["schmidt_numbers"].get<std::vector<double>>();
  const auto c = m.summary["median_correlation"].get<std::vector<double>>();
  bool ok = std::abs(c.front()) < 0.2 && std::is_sorted(c.begin(), c.end());
  std::string d;
  for (std::size_t k = 0; k < K.size(); ++k) {
    if (K[k] >= 200.0) ok = ok && c[k] > 0.9;
    d += "K=" + fmt(K[k]) + ":" + fmt(c[k]) + " ";
  }
  return {ok, d + "(20-seed medians)"};
}

Outcome oracle_equivalence() {
  // 512-sample grid: the dense joint is 512 x 512
  ShapingSetup s;
  s.plane = ImagePlaneSetup{512, 1e-6, 256, 404e-9, 0.5e-6};
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto medium = s.medium(seed);
    const ForwardModel m = thin_medium_model(s, medium);
    Rng rng(splitmix64(seed + 100));
    std::uniform_real_distribution<double> u(-std::numbers::pi, std::numbers::pi);
    std::vector<double> segs(16);
    for (auto& v : segs) v = u(rng);
    const auto mask = s.slm(16).expand(segs);
    const RealField fast = normalized(m.coincidence(mask));
    ComplexField p = s.plane.pump();
    for (std::size_t i = 0; i < p.size(); ++i) p.values[i] *= std::polar(1.0, mask[i]);
    const RealField dense = coincidence_slice(
        apply_diffuser_joint(joint_amplitude(PairSource{p, s.plane.b}), transmission_at(medium, s.plane.photon_wavelength()))
            .psi,
        0.0);
    const double peak = *std::max_element(dense.values.begin(), dense.values.end());
    for (std::size_t k = 0; k < dense.size(); ++k)
      worst = std::max(worst, std::abs(fast.values[k] - dense.values[k]) / peak);
  }
  return {worst < 1e-6, "max |fast - dense| / peak = " + fmt(worst) + " over 10 diffusers"};
}

Outcome schmidt_machinery() {
  bool ok = true;
  std::string d;
  for (double K : {1.0, 10.0, 100.0}) {
    const auto p = DoubleGaussianParams::from_schmidt(K, 1.0);
    const double Kn = schmidt_number_numeric(build_double_gaussian(p, default_photon_grid(p)));
    const double rel = std::abs(Kn / schmidt_number_analytic(p) - 1.0);
    ok = ok && rel < 0.01;
    d += "SVD K(" + fmt(K) + ")=" + fmt(Kn) + " ";
  }
  const auto m = run({{"scenario_id", "schmidt_estimate"}});
  const double e = m.summary["schmidt_estimate"].get<double>();
  ok = ok && std::abs(e / 680.0 - 1.0) < 0.1;
  return {ok, d + "width estimate of K=680: " + fmt(e)};
}

Outcome pi_step() {
  const PiStepResult r = pi_step_study(200.0);
  // singles splitting is a single-photon (K = 1) effect; at K = 200 the
  // singles are too incoherent on the pump scale to see the step
  const bool ok = r.coinc_corr_high_k > 0.99 && r.singles_corr_separable < 0.9 && r.pump_corr > 0.999;
  return {ok, "coincidence corr (K=200) " + fmt(r.coinc_corr_high_k) + ", singles corr (K=1) " +
                  fmt(r.singles_corr_separable) + ", singles corr (K=200) " + fmt(r.singles_corr_high_k) +
                  ", pump corr " + fmt(r.pump_corr)};
}

Outcome lossy() {
  ShapingSetup s;
  s.loss_strength = 1.0;
  const auto f = parallel_map(20, kJobs, [&](std::size_t seed) { return lossy_perfect_correction(s, seed + 1); });
  std::vector<double> c;
  for (const auto& x : f) c.push_back(x.coinc_efficiency);
  const double m = mean(c);
  const double b1 = phase_only_efficiency_bound(0.5, std::sqrt(1.0 / 12.0));
  const double b2 = phase_only_efficiency_bound(1.0 / 3.0, std::sqrt(4.0 / 45.0));
  const bool ok = m <= 5.0 / 9.0 + 0.05 && m >= 0.45 && std::abs(b1 - 0.75) < 1e-15 && std::abs(b2 - 5.0 / 9.0) < 1e-15;
  return {ok, "s=1 coincidence efficiency " + fmt(m) + " (20 media), bounds " + fmt(b1) + " and " + fmt(b2)};
}

Outcome volume_collapse() {
  const auto m = run({{"scenario_id", "figS2_zrd_collapse"},
                      {"parameters", {{"z_over_zrd", {0.1, 1.0, 10.0}}, {"seeds", 40}}}});
  const double spread = m.summary["relative_spread"][1].get<double>();
  const auto fall = m.summary["first_over_last"].get<std::vector<double>>();
  const double least = *std::min_element(fall.begin(), fall.end());
  return {spread < 0.25 && least >= 5.0, "spread at z=z_rd " + fmt(spread) + ", beta(0.1 z_rd)/beta(10 z_rd) >= " +
                                             fmt(least) + " (d = 8, 12, 18 um, 40 media)"};
}

double structure_ratio(const ScreenGenerator& gen, const Grid& g, double r0, std::size_t lag, int seeds) {
  const std::size_t n = g.n_points;
  double acc = 0.0;
  for (int s = 0; s < seeds; ++s) {
    Rng rng(splitmix64(std::uint64_t(s) + 7));
    const RealField ph = gen(r0, rng);
    double d = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double x = ph.values[(i + lag) * n + j] - ph.values[i * n + j];
        d += x * x;
      }
    acc += d / double((n - lag) * n);
  }
  return acc / seeds / kolmogorov_structure_function(double(lag) * g.spacing(), r0);
}

Outcome phase_screens() {
  const Grid g(256, 2.0);
  const double r0 = 0.1;
  const ScreenGenerator with(g, 2, 1e4, 1e-4, 10), without(g, 2, 1e4, 1e-4, 0);
  bool ok = true;
  std::string d = "D/6.88(r/r0)^5/3 at lags";
  for (std::size_t lag : {4, 8, 16, 32, 64}) {
    const double r = structure_ratio(with, g, r0, lag, 50);
    ok = ok && std::abs(r - 1.0) < 0.1;
    d += " " + std::to_string(lag) + ":" + fmt(r);
  }
  const double ctrl = structure_ratio(without, g, r0, 64, 50);
  const bool control_fails = std::abs(ctrl - 1.0) >= 0.1;
  return {ok && control_fails, d + "; no subharmonics at lag 64: " + fmt(ctrl)};
}

Outcome turbulence_scaling() {
  const auto s4 = run({{"scenario_id", "figS4_zra_collapse"}});
  const auto zs = s4.config.parameters["z_over_zra"].get<std::vector<double>>();
  const auto spread = s4.summary["relative_spread"].get<std::vector<double>>();
  const auto at_one = std::find(zs.begin(), zs.end(), 1.0) - zs.begin();
  const double worst = *std::max_element(spread.begin(), spread.end());
  const auto s7 = run({{"scenario_id", "figS7_scaling"}});
  const double r2 = s7.summary["fit_r_squared"].get<double>();
  const auto d5 = run({{"scenario_id", "fig5d_link_sweep"}});
  const bool has_ratio = d5.summary["ratio"].is_number();
  const double ratio = has_ratio ? d5.summary["ratio"].get<double>() : 0.0;

  // refractivity-scaled screens for the photons, as a diagnostic only
  LinkSetup refr;
  refr.options.dispersion = Dispersion::refractivity;
  const ScreenGenerator gen = refr.generator();
  std::string diag;
  for (double r0 : {0.01, 0.08}) diag += " r0=" + fmt(r0) + ":" + fmt(zra_scaled_focus(refr, gen, r0, 1.0, 10, 1));

  const bool ok = spread[std::size_t(at_one)] < 0.25 && r2 > 0.95 && ratio >= 10.0 && ratio <= 1000.0;
  return {ok, "z_ra collapse spread at z=z_ra " + fmt(spread[std::size_t(at_one)]) + " (worst " + fmt(worst) +
                  "), z_o/z_no vs Cn2^(5/11) R^2 " + fmt(r2) + ", fig5d z_o/z_no " + fmt(ratio) +
                  "; beta_opt at z=z_ra with refractivity-scaled photon screens" + diag};
}

Outcome dynamic() {
  DynamicSetup d;
  d.duration = 300.0;
  const double speed = d.shaping.coherence_length / (100.0 * d.segments * d.response_time);
  const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  struct R {
    double eta_static, sustained_p, sustained_c, starved;
  };
  const auto rs = parallel_map(seeds.size(), kJobs, [&](std::size_t i) {
    const auto seed = seeds[i];
    FeedbackChannel fb = d.shaping.pump_feedback();
    fb.seed = seed;
    const double eta_static = enhancement_run(d.shaping, d.segments, seed).eta_pump;
    const auto t = dynamic_shaping_run(d, speed, fb, seed, {d.duration, {}});
    const auto [p, c] = mean_enhancement(t, d.duration / 2, d.duration + 1.0);
    FeedbackChannel cf = fb;
    cf.mode = FeedbackMode::coincidence_poisson;
    cf.integration_time = d.response_time;
    cf.rate_scale = 4.0 / cf.integration_time;  // 4 expected counts per probe at beta = 1
    const auto starved = dynamic_shaping_run(d, speed, cf, seed, {d.duration, {}});
    return R{eta_static, p, c, starved.eta_coinc};
  });
  std::vector<double> frac, ratio, starved;
  for (const auto& r : rs) {
    frac.push_back(r.sustained_p / r.eta_static);
    ratio.push_back(r.sustained_c / r.sustained_p);
    starved.push_back(r.starved);
  }
  const double worst_frac = *std::min_element(frac.begin(), frac.end());
  const double worst_ratio = *std::max_element(ratio.begin(), ratio.end(), [](double a, double b) {
    return std::abs(a - 1.0) < std::abs(b - 1.0);
  });
  const bool ok = worst_frac > 0.5 && std::abs(worst_ratio - 1.0) < 0.2 && median(starved) < 2.0;
  return {ok, "sustained eta_pump/eta_static min " + fmt(worst_frac) + ", eta_c/eta_p worst " + fmt(worst_ratio) +
                  ", coincidence feedback at 4 counts final eta median " + fmt(median(starved)) + " (5 seeds)"};
}

Outcome not_reproducible() {
  const auto m = run({{"scenario_id", "fig2_speckle_identity"}});
  return {true, "no numeric target: experimental correlation 0.83, count rates and hardware timing are outside a "
                "noise-free simulation; simulated fig2 correlation " +
                    fmt(m.summary["median_correlation"].get<double>())};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> check;
  };
  const std::vector<Criterion> criteria{
      {1, "enhancement law", 300, enhancement_law},
      {2, "channel equality", 300, channel_equality},
      {3, "beta relations", 300, beta_relations},
      {4, "correlation vs K", 600, corr_vs_k},
      {5, "oracle equivalence", 120, oracle_equivalence},
      {6, "Schmidt machinery", 600, schmidt_machinery},
      {7, "pi step", 600, pi_step},
      {8, "lossy diffuser", 600, lossy},
      {9, "volume collapse", 900, volume_collapse},
      {10, "phase screens", 300, phase_screens},
      {11, "turbulence scaling", 3600, turbulence_scaling},
      {12, "dynamic run", 600, dynamic},
      {13, "not reproducible", 600, not_reproducible},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_budget = dt <= c.budget_s;
    const bool pass = o.pass && in_budget;
    failures += !pass;
    std::printf("%s criterion %d (%s): %s [%.1f s, budget %.0f s%s]\n", pass ? "PASS" : "FAIL", c.id, c.name,
                o.detail.c_str(), dt, c.budget_s, in_budget ? "" : ", over budget");
    std::fflush(stdout);
  }
  return failures;
}
