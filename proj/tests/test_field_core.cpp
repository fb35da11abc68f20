#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "pairwfs/fit.hpp"
#include "pairwfs/optics.hpp"
#include "pairwfs/random.hpp"

using namespace pairwfs;

namespace {

ComplexField gaussian(const Grid& g, double w, double lambda, int rank = 1) {
  ComplexField f(g, rank, lambda);
  const std::size_t n = g.n_points;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double x = g.coord(rank == 1 ? i : i / n);
    const double y = rank == 1 ? 0.0 : g.coord(i % n);
    f.values[i] = std::exp(-(x * x + y * y) / (w * w));
  }
  return f;
}

ComplexField random_field(const Grid& g, int rank, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> d;
  ComplexField f(g, rank, 500e-9);
  for (auto& v : f.values) v = {d(rng), d(rng)};
  return f;
}

double max_abs_diff(const std::vector<cplx>& a, const std::vector<cplx>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double max_abs(const std::vector<cplx>& a) {
  double m = 0.0;
  for (const auto& v : a) m = std::max(m, std::abs(v));
  return m;
}

RealField fully_developed_speckle(const Grid& g, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 2.0 * std::numbers::pi);
  ComplexField f(g, 1, 800e-9);
  for (auto& v : f.values) v = std::polar(1.0, u(rng));
  return intensity(far_field(f));
}

}  // namespace

TEST(Grid, AcceptsAnySizeFromTwo) {
  EXPECT_THROW(Grid(1, 1.0), Error);
  EXPECT_THROW(Grid(8, 0.0), Error);
  const Grid g(3, 3.0);
  EXPECT_DOUBLE_EQ(g.spacing(), 1.0);
  EXPECT_DOUBLE_EQ(g.coord(1), 0.0);
  EXPECT_NEAR(g.reciprocal().reciprocal().extent, 3.0, 1e-12);
}

TEST(FarField, GaussianMapsToWidthTwoOverW) {
  const double w = 1e-3;
  const Grid g(1024, 16e-3);
  const auto A = far_field(gaussian(g, w, 800e-9), 0.2);
  const auto fit = fit_gaussian(intensity(A));
  EXPECT_NEAR(fit.half_width, 2.0 / w, 1e-6 * 2.0 / w);
  EXPECT_NEAR(fit.center, 0.0, 1e-6);
  EXPECT_EQ(A.domain, Domain::angular);
}

TEST(FarField, ImpulseGivesFlatMagnitude) {
  const Grid g(256, 1.0);
  ComplexField f(g, 1, 1e-6);
  f.values[77] = 1.0;
  const auto A = far_field(f);
  for (const auto& v : A.values) EXPECT_NEAR(std::abs(v), std::abs(A.values[0]), 1e-12);
}

TEST(FarField, ParsevalOneAndTwoDimensions) {
  for (int rank : {1, 2}) {
    for (std::size_t n : {64u, 100u, 129u}) {
      const auto f = random_field(Grid(n, 2e-3), rank, 11 + n);
      const double p0 = power(f);
      EXPECT_NEAR(power(far_field(f)) / p0, 1.0, 1e-10) << "rank " << rank << " n " << n;
    }
  }
}

TEST(FarField, RejectsNonFiniteInput) {
  ComplexField f(Grid(16, 1.0), 1, 1e-6);
  f.values[3] = {std::nan(""), 0.0};
  EXPECT_THROW(far_field(f), Error);
  f.values[3] = {0.0, 0.0};
  f.domain = Domain::angular;
  EXPECT_THROW(far_field(f), Error);
}

TEST(FarField, TwiceIsCoordinateInversion) {
  for (int rank : {1, 2}) {
    for (std::size_t n : {64u, 65u}) {
      const auto f = random_field(Grid(n, 1.0), rank, 5);
      auto once = far_field(f);
      once.domain = Domain::position;
      const auto twice = far_field(once);
      double m = 0.0;
      for (std::size_t i = 0; i < f.size(); ++i) {
        // coordinate (i - n/2) -> -(i - n/2), i.e. index (2*(n/2) - i) mod n
        auto inv = [&](std::size_t a) { return (2 * (n / 2) + n - a) % n; };
        std::size_t j = rank == 1 ? inv(i) : inv(i / n) * n + inv(i % n);
        m = std::max(m, std::abs(twice.values[i] - f.values[j]));
      }
      EXPECT_LT(m, 1e-10 * max_abs(f.values));
    }
  }
}

TEST(Propagation, ZeroDistanceIsIdentity) {
  const auto f = random_field(Grid(128, 1e-3), 1, 3);
  const auto g = propagate_angular_spectrum(f, 0.0);
  EXPECT_EQ(g.values, f.values);
}

TEST(Propagation, GaussianBeamWaistLaw) {
  const double w0 = 0.2e-3, lambda = 633e-9;
  const double zr = std::numbers::pi * w0 * w0 / lambda;
  const Grid g(2048, 8e-3);
  for (double z : {0.5 * zr, zr, 3.0 * zr}) {
    const auto out = propagate_angular_spectrum(gaussian(g, w0, lambda), z);
    const double w = fit_gaussian(intensity(out)).half_width;
    EXPECT_NEAR(w / (w0 * std::sqrt(1.0 + (z / zr) * (z / zr))), 1.0, 5e-3);
  }
}

TEST(Propagation, TwoDimensionalGaussianBeam) {
  const double w0 = 0.1e-3, lambda = 800e-9;
  const double zr = std::numbers::pi * w0 * w0 / lambda;
  const Grid g(256, 2e-3);
  const auto out = propagate_angular_spectrum(gaussian(g, w0, lambda, 2), 2.0 * zr);
  std::vector<double> row(g.n_points);
  for (std::size_t j = 0; j < g.n_points; ++j) row[j] = std::norm(out.at(g.n_points / 2, j));
  const auto x = g.coords();
  const double w = fit_gaussian(x, row).half_width;
  EXPECT_NEAR(w / (w0 * std::sqrt(5.0)), 1.0, 5e-3);
}

TEST(Propagation, PowerAndComposition) {
  const Grid g(512, 4e-3);
  auto f = gaussian(g, 0.3e-3, 500e-9);
  Rng rng(2);
  std::uniform_real_distribution<double> u(0.0, 6.28);
  for (auto& v : f.values) v *= std::polar(1.0, u(rng) * 0.2);
  const double z1 = 0.05, z2 = 0.13;
  const auto a = propagate_angular_spectrum(propagate_angular_spectrum(f, z1), z2);
  const auto b = propagate_angular_spectrum(f, z1 + z2);
  EXPECT_NEAR(power(a) / power(f), 1.0, 1e-10);
  EXPECT_LT(max_abs_diff(a.values, b.values), 1e-10 * max_abs(b.values));
}

TEST(Propagation, EvanescentClippingIsReported) {
  // sample spacing below lambda/2: the outer spectrum is evanescent
  const double lambda = 1e-6;
  const auto f = random_field(Grid(256, 256 * 0.2e-6), 1, 9);
  PropagationDiagnostics d;
  const auto out = propagate_angular_spectrum(ComplexField(f.grid, 1, f.values, lambda), 1e-6, {}, &d);
  EXPECT_GT(d.clipped_power_fraction, 0.1);
  EXPECT_NEAR(power(out) / power(f), 1.0 - d.clipped_power_fraction, 1e-10);
}

TEST(Propagation, GuardBandViolationThrows) {
  const Grid g(256, 1e-3);
  const auto f = gaussian(g, 0.05e-3, 800e-9);
  PropagationOptions opt;
  opt.max_edge_power = 1e-3;
  EXPECT_NO_THROW(propagate_angular_spectrum(f, 1e-4, opt));
  EXPECT_THROW(propagate_angular_spectrum(f, 0.2, opt), Error);
}

TEST(Pearson, IdentityAffineSymmetry) {
  Rng rng(4);
  const Grid g(512, 1.0);
  const auto a = fully_developed_speckle(g, rng);
  const auto b = fully_developed_speckle(g, rng);
  EXPECT_NEAR(pearson_correlation(a, a), 1.0, 1e-12);
  RealField c = a;
  for (auto& v : c.values) v = 2.0 * v + 5.0;
  EXPECT_NEAR(pearson_correlation(a, c), 1.0, 1e-12);
  EXPECT_NEAR(pearson_correlation(a, b), pearson_correlation(b, a), 1e-15);
  RealField d = b;
  for (auto& v : d.values) v = 0.3 * v + 1.0;
  EXPECT_NEAR(pearson_correlation(a, d), pearson_correlation(a, b), 1e-12);
}

TEST(Pearson, ZeroVarianceIsAnError) {
  const Grid g(16, 1.0);
  RealField a(g, 1, std::vector<double>(16, 1.0));
  RealField b(g, 1, std::vector<double>(16, 0.0));
  b.values[2] = 1.0;
  EXPECT_THROW(pearson_correlation(a, b), Error);
}

TEST(Pearson, MaskRestrictsSamples) {
  const Grid g(4, 1.0);
  RealField a(g, 1, {1.0, 2.0, 3.0, 100.0});
  RealField b(g, 1, {2.0, 4.0, 6.0, -50.0});
  const std::vector<std::uint8_t> m{1, 1, 1, 0};
  EXPECT_NEAR(pearson_correlation(a, b, m), 1.0, 1e-12);
}

TEST(Pearson, IndependentSpeckleNullDistribution) {
  const Grid g(1024, 1.0);
  const double bound = 3.0 / std::sqrt(double(g.n_points));
  int inside = 0;
  const int seeds = 200;
  for (int s = 0; s < seeds; ++s) {
    Rng rng(1000 + s);
    const auto a = fully_developed_speckle(g, rng);
    const auto b = fully_developed_speckle(g, rng);
    if (std::abs(pearson_correlation(a, b)) < bound) ++inside;
  }
  EXPECT_GE(inside, 198);
}

TEST(SpeckleContrast, ConstantRayleighAndAveraged) {
  const Grid g(16384, 1.0);
  EXPECT_DOUBLE_EQ(speckle_contrast(RealField(g, 1, std::vector<double>(g.n_points, 3.0))), 0.0);
  Rng rng(8);
  EXPECT_NEAR(speckle_contrast(fully_developed_speckle(g, rng)), 1.0, 0.05);
  const int M = 16;
  RealField sum(g, 1, std::vector<double>(g.n_points, 0.0));
  for (int m = 0; m < M; ++m) {
    const auto s = fully_developed_speckle(g, rng);
    for (std::size_t i = 0; i < g.n_points; ++i) sum.values[i] += s.values[i];
  }
  EXPECT_NEAR(speckle_contrast(sum) * std::sqrt(double(M)), 1.0, 0.2);
  EXPECT_THROW(speckle_contrast(RealField(g, 1, std::vector<double>(g.n_points, 0.0))), Error);
}

TEST(RandomField, UnitVarianceAndCorrelationWidth) {
  const Grid g(8192, 8192.0);
  const double d = 10.0;
  double var = 0.0, c_at_d = 0.0;
  const int seeds = 20;
  for (int s = 0; s < seeds; ++s) {
    Rng rng(s);
    const auto f = gaussian_correlated_field(g, 1, d, rng);
    double v = 0.0, c = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      v += f[i] * f[i];
      c += f[i] * f[(i + 10) % f.size()];
    }
    var += v / double(f.size());
    c_at_d += c / double(f.size());
  }
  EXPECT_NEAR(var / seeds, 1.0, 0.05);
  EXPECT_NEAR(c_at_d / var, std::exp(-1.0), 0.05);
}

TEST(Seeds, DerivationIsDeterministicAndSpread) {
  EXPECT_EQ(derive_seed(1, "fig4c_corr_vs_K", 3), derive_seed(1, "fig4c_corr_vs_K", 3));
  EXPECT_NE(derive_seed(1, "fig4c_corr_vs_K", 3), derive_seed(1, "fig4c_corr_vs_K", 4));
  EXPECT_NE(derive_seed(1, "fig4c_corr_vs_K", 3), derive_seed(2, "fig4c_corr_vs_K", 3));
  EXPECT_NE(derive_seed(1, "a", 0), derive_seed(1, "b", 0));
}
