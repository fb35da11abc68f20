#pragma once

// Flat binary container for frozen media. Layout (native little-endian):
//
//   char[4]  magic "PWFS"
//   u32      format version (1)
//   u32      kind: 1 = thin diffuser, 2 = phase-screen stack
//   u32      rank (1 or 2)
//   u64      grid points per axis n
//   f64      grid extent, m
//   kind 1:  f64 d, f64 opd_rms, f64 loss_strength, u64 seed,
//            f64 opd[count], f64 amplitude[count]
//   kind 2:  f64 reference_wavelength, u64 layers, then per layer
//            f64 position, f64 r0, f64 phase[count]
//
// count = n for rank 1 and n*n for rank 2.

#include <array>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "pairwfs/media.hpp"
#include "pairwfs/turbulence.hpp"

namespace pairwfs {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

namespace container {

inline constexpr std::array<char, 4> magic{'P', 'W', 'F', 'S'};
inline constexpr std::uint32_t version = 1;
enum class Kind : std::uint32_t { diffuser = 1, screen_stack = 2 };

namespace detail {

class Writer {
 public:
  explicit Writer(const std::filesystem::path& p) : out_(p, std::ios::binary) {
    require(bool(out_), ErrorCode::io, "cannot open " + p.string() + " for writing");
  }
  template <class T>
  void put(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void put(const std::vector<double>& v) {
    out_.write(reinterpret_cast<const char*>(v.data()), std::streamsize(v.size() * sizeof(double)));
  }
  void finish(const std::filesystem::path& p) {
    out_.flush();
    require(bool(out_), ErrorCode::io, "write to " + p.string() + " failed");
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& p) : in_(p, std::ios::binary), path_(p.string()) {
    require(bool(in_), ErrorCode::io, "cannot open " + path_);
  }
  template <class T>
  T get() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    require(bool(in_), ErrorCode::io, path_ + ": truncated container");
    return v;
  }
  std::vector<double> get_array(std::size_t count) {
    std::vector<double> v(count);
    in_.read(reinterpret_cast<char*>(v.data()), std::streamsize(count * sizeof(double)));
    require(bool(in_), ErrorCode::io, path_ + ": truncated container");
    return v;
  }
  void expect_end() {
    in_.peek();
    require(in_.eof(), ErrorCode::io, path_ + ": trailing bytes after container payload");
  }
  const std::string& path() const { return path_; }

 private:
  std::ifstream in_;
  std::string path_;
};

inline void put_header(Writer& w, Kind kind, int rank, const Grid& g) {
  w.put(magic);
  w.put(version);
  w.put(static_cast<std::uint32_t>(kind));
  w.put(static_cast<std::uint32_t>(rank));
  w.put(static_cast<std::uint64_t>(g.n_points));
  w.put(g.extent);
}

struct Header {
  int rank;
  Grid grid;
};

inline Header get_header(Reader& r, Kind expected) {
  const auto m = r.get<std::array<char, 4>>();
  require(m == magic, ErrorCode::io, r.path() + ": not a pairwfs container");
  const auto v = r.get<std::uint32_t>();
  require(v == version, ErrorCode::io, r.path() + ": unsupported container version " + std::to_string(v));
  const auto k = r.get<std::uint32_t>();
  require(k == static_cast<std::uint32_t>(expected), ErrorCode::io, r.path() + ": unexpected container kind");
  const auto rank = r.get<std::uint32_t>();
  require(rank == 1 || rank == 2, ErrorCode::io, r.path() + ": bad rank");
  const auto n = r.get<std::uint64_t>();
  const auto extent = r.get<double>();
  return {int(rank), Grid(std::size_t(n), extent)};
}

}  // namespace detail

inline void save(const DiffuserRealization& r, const std::filesystem::path& p) {
  detail::Writer w(p);
  detail::put_header(w, Kind::diffuser, r.rank, r.grid);
  w.put(r.spec.coherence_length);
  w.put(r.spec.opd_rms);
  w.put(r.spec.loss_strength);
  w.put(r.spec.seed);
  w.put(r.opd);
  w.put(r.amplitude);
  w.finish(p);
}

inline DiffuserRealization load_diffuser(const std::filesystem::path& p) {
  detail::Reader rd(p);
  const auto h = detail::get_header(rd, Kind::diffuser);
  DiffuserRealization r;
  r.grid = h.grid;
  r.rank = h.rank;
  r.spec.coherence_length = rd.get<double>();
  r.spec.opd_rms = rd.get<double>();
  r.spec.loss_strength = rd.get<double>();
  r.spec.seed = rd.get<std::uint64_t>();
  const std::size_t count = ComplexField::count(h.grid, h.rank);
  r.opd = rd.get_array(count);
  r.amplitude = rd.get_array(count);
  rd.expect_end();
  return r;
}

inline void save(const PhaseScreenStack& s, const std::filesystem::path& p) {
  require(!s.screens.empty(), ErrorCode::invalid_argument, "cannot store an empty screen stack");
  detail::Writer w(p);
  const auto& first = s.screens.front().phase;
  detail::put_header(w, Kind::screen_stack, first.rank, first.grid);
  w.put(s.reference_wavelength);
  w.put(static_cast<std::uint64_t>(s.screens.size()));
  for (const auto& l : s.screens) {
    require(l.phase.grid == first.grid && l.phase.rank == first.rank, ErrorCode::grid_mismatch,
            "screens in a stack must share one grid");
    w.put(l.position);
    w.put(l.r0);
    w.put(l.phase.values);
  }
  w.finish(p);
}

inline PhaseScreenStack load_screen_stack(const std::filesystem::path& p) {
  detail::Reader rd(p);
  const auto h = detail::get_header(rd, Kind::screen_stack);
  PhaseScreenStack s;
  s.reference_wavelength = rd.get<double>();
  const auto layers = rd.get<std::uint64_t>();
  const std::size_t count = ComplexField::count(h.grid, h.rank);
  for (std::uint64_t k = 0; k < layers; ++k) {
    PhaseScreenLayer l;
    l.position = rd.get<double>();
    l.r0 = rd.get<double>();
    l.phase = RealField(h.grid, h.rank, rd.get_array(count), s.reference_wavelength, Domain::position);
    s.screens.push_back(std::move(l));
  }
  rd.expect_end();
  return s;
}

}  // namespace container
}  // namespace pairwfs
