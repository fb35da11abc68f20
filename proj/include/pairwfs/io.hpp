#pragma once

// Tabular output and content hashing for scenario runs.

#include <openssl/evp.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "pairwfs/error.hpp"
#include "pairwfs/shaping.hpp"

namespace pairwfs {

inline constexpr int csv_schema_version = 1;

/// Numeric table written as CSV behind a '#' comment block holding the
/// schema version, the units of every column and free-form notes.
struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::string> units;
  std::vector<std::string> notes;
  std::vector<std::vector<double>> rows;

  CsvTable(std::vector<std::string> cols, std::vector<std::string> u) : columns(std::move(cols)), units(std::move(u)) {
    require(columns.size() == units.size(), ErrorCode::invalid_argument, "one unit per column");
  }
  void add(std::vector<double> row) {
    require(row.size() == columns.size(), ErrorCode::invalid_argument, "row width does not match the columns");
    rows.push_back(std::move(row));
  }
};

// %.12g keeps output stable across platforms and short enough to diff.
inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

inline std::string to_csv(const CsvTable& t) {
  std::ostringstream os;
  os << "# pairwfs-csv " << csv_schema_version << '\n';
  os << "# units:";
  for (std::size_t c = 0; c < t.columns.size(); ++c) os << (c ? ", " : " ") << t.columns[c] << " [" << t.units[c] << ']';
  os << '\n';
  for (const auto& n : t.notes) os << "# " << n << '\n';
  for (std::size_t c = 0; c < t.columns.size(); ++c) os << (c ? "," : "") << t.columns[c];
  os << '\n';
  for (const auto& r : t.rows) {
    for (std::size_t c = 0; c < r.size(); ++c) os << (c ? "," : "") << format_number(r[c]);
    os << '\n';
  }
  return os.str();
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  require(bool(f), ErrorCode::io, "cannot open " + p.string() + " for writing");
  f << text;
  require(bool(f), ErrorCode::io, "write failed for " + p.string());
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  require(bool(f), ErrorCode::io, "cannot read " + p.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline void write_csv(const std::filesystem::path& p, const CsvTable& t) { write_text(p, to_csv(t)); }

/// Lowercase hex SHA-1 of a byte string.
inline std::string sha1_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  require(EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha1(), nullptr) == 1, ErrorCode::io,
          "SHA-1 digest failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

inline std::string sha1_file(const std::filesystem::path& p) { return sha1_hex(read_text(p)); }

/// Optimization trace as a table; enhancement columns are filled when the
/// trace carries a baseline.
inline CsvTable trace_table(const OptimizationTrace& t) {
  CsvTable tab({"time_s", "iteration", "feedback", "beta_pump", "beta_coinc", "eta_pump", "eta_coinc", "optimizing"},
               {"s", "1", "counts or fraction", "1", "1", "1", "1", "bool"});
  for (const auto& e : t.iterations)
    tab.add({e.time, double(e.iteration), e.feedback, e.beta_pump, e.beta_coinc,
             t.baseline_pump > 0.0 ? e.beta_pump / t.baseline_pump : 0.0,
             t.baseline_coinc > 0.0 ? e.beta_coinc / t.baseline_coinc : 0.0, e.optimizing ? 1.0 : 0.0});
  return tab;
}

}  // namespace pairwfs
