#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "pairwfs/fft.hpp"
#include "pairwfs/field.hpp"

namespace pairwfs {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Child seed for task `index` of scenario `tag` under `master`.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag, std::uint64_t index) {
  return splitmix64(splitmix64(master ^ fnv1a(tag)) + splitmix64(index + 0x632be59bd9b4e019ULL));
}

inline std::vector<double> standard_normals(Rng& rng, std::size_t n) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

/// Zero-mean, unit-variance stationary Gaussian field whose autocorrelation
/// is exp(-r^2/d^2). White noise is filtered by exp(-q^2 d^2/8) per axis and
/// divided by the filter's theoretical rms, so the variance does not depend
/// on the realization.
inline std::vector<double> gaussian_correlated_field(const Grid& g, int rank, double d, Rng& rng) {
  require(d > 0.0, ErrorCode::invalid_argument, "correlation length must be positive");
  const std::size_t n = g.n_points;
  const std::size_t total = rank == 1 ? n : n * n;
  const auto white = standard_normals(rng, total);
  std::vector<cplx> v(white.begin(), white.end());
  fft::centered(v, rank, n, fft::Direction::forward);
  const auto q = g.reciprocal().coords();
  std::vector<double> h(n);
  double h2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    h[i] = std::exp(-q[i] * q[i] * d * d / 8.0);
    h2 += h[i] * h[i];
  }
  h2 /= double(n);
  double var = rank == 1 ? h2 : h2 * h2;
  if (rank == 1) {
    for (std::size_t i = 0; i < n; ++i) v[i] *= h[i];
  } else {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) v[i * n + j] *= h[i] * h[j];
  }
  fft::centered(v, rank, n, fft::Direction::inverse);
  std::vector<double> out(total);
  const double s = 1.0 / std::sqrt(var);
  for (std::size_t i = 0; i < total; ++i) out[i] = v[i].real() * s;
  return out;
}

}  // namespace pairwfs
