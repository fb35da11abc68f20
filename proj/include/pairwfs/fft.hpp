#pragma once

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <span>
#include <tuple>
#include <vector>

#include "pairwfs/field.hpp"

namespace pairwfs::fft {

enum class Direction { forward = FFTW_FORWARD, inverse = FFTW_BACKWARD };

namespace detail {

class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }
  PlanCache(const PlanCache&) = delete;
  PlanCache& operator=(const PlanCache&) = delete;

  // Plans are created unaligned and out-of-place so any buffer pair works.
  fftw_plan get(int rank, std::size_t n, Direction dir) {
    std::lock_guard lock(mutex_);
    auto key = std::make_tuple(rank, n, static_cast<int>(dir));
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    const std::size_t total = rank == 1 ? n : n * n;
    auto* in = fftw_alloc_complex(total);
    auto* out = fftw_alloc_complex(total);
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    const int ni = static_cast<int>(n);
    fftw_plan p = rank == 1 ? fftw_plan_dft_1d(ni, in, out, static_cast<int>(dir), flags)
                            : fftw_plan_dft_2d(ni, ni, in, out, static_cast<int>(dir), flags);
    fftw_free(in);
    fftw_free(out);
    plans_.emplace(key, p);
    return p;
  }

 private:
  PlanCache() = default;
  ~PlanCache() {
    for (auto& [k, p] : plans_) fftw_destroy_plan(p);
  }
  std::mutex mutex_;
  std::map<std::tuple<int, std::size_t, int>, fftw_plan> plans_;
};

inline fftw_complex* as_fftw(cplx* p) { return reinterpret_cast<fftw_complex*>(p); }

}  // namespace detail

/// Unitary DFT with the zero coordinate at index n/2 on both sides.
/// Operates on a rank-1 or rank-2 (square, row-major) array.
inline void centered(std::span<cplx> data, int rank, std::size_t n, Direction dir) {
  const std::size_t c = n / 2;
  std::vector<cplx> in(data.size()), out(data.size());
  if (rank == 1) {
    for (std::size_t m = 0; m < n; ++m) in[m] = data[(m + c) % n];
  } else {
    for (std::size_t a = 0; a < n; ++a) {
      const std::size_t ra = (a + c) % n;
      for (std::size_t b = 0; b < n; ++b) in[a * n + b] = data[ra * n + (b + c) % n];
    }
  }
  fftw_execute_dft(detail::PlanCache::instance().get(rank, n, dir), detail::as_fftw(in.data()),
                   detail::as_fftw(out.data()));
  const double scale = rank == 1 ? 1.0 / std::sqrt(double(n)) : 1.0 / double(n);
  if (rank == 1) {
    for (std::size_t k = 0; k < n; ++k) data[k] = out[(k + n - c) % n] * scale;
  } else {
    for (std::size_t a = 0; a < n; ++a) {
      const std::size_t ra = (a + n - c) % n;
      for (std::size_t b = 0; b < n; ++b) data[a * n + b] = out[ra * n + (b + n - c) % n] * scale;
    }
  }
}

inline std::vector<cplx> forward(std::vector<cplx> v) {
  centered(v, 1, v.size(), Direction::forward);
  return v;
}

inline std::vector<cplx> inverse(std::vector<cplx> v) {
  centered(v, 1, v.size(), Direction::inverse);
  return v;
}

/// Raw (unnormalized, uncentered) DFT used by screen synthesis.
inline std::vector<cplx> raw(std::vector<cplx> v, int rank, std::size_t n, Direction dir) {
  std::vector<cplx> out(v.size());
  fftw_execute_dft(detail::PlanCache::instance().get(rank, n, dir), detail::as_fftw(v.data()),
                   detail::as_fftw(out.data()));
  return out;
}

}  // namespace pairwfs::fft
