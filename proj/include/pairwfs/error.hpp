#pragma once

#include <stdexcept>
#include <string>

namespace pairwfs {

/// Error categories used across the library. The CLI prints the code name
/// in its machine-readable error line.
enum class ErrorCode {
  invalid_argument,
  non_finite,
  grid_mismatch,
  under_resolved,
  aliasing,
  not_normalized,
  regime_violation,
  fit_failed,
  zero_variance,
  zero_total,
  config,
  io
};

inline const char* to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::non_finite: return "non_finite";
    case ErrorCode::grid_mismatch: return "grid_mismatch";
    case ErrorCode::under_resolved: return "under_resolved";
    case ErrorCode::aliasing: return "aliasing";
    case ErrorCode::not_normalized: return "not_normalized";
    case ErrorCode::regime_violation: return "regime_violation";
    case ErrorCode::fit_failed: return "fit_failed";
    case ErrorCode::zero_variance: return "zero_variance";
    case ErrorCode::zero_total: return "zero_total";
    case ErrorCode::config: return "config";
    case ErrorCode::io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool ok, ErrorCode code, const std::string& msg) {
  if (!ok) throw Error(code, msg);
}

}  // namespace pairwfs
