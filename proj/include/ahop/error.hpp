#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ahop {

enum class ErrorCode {
  DegreeExhausted,
  InvalidBound,
  InvalidArgument,
  SizeOverflow,
  DimensionMismatch,
  EmptyVector,
  NonPositiveNormalizer,
  SingleMemory,
  InvalidParams,
  InfeasiblePlant,
  CostCapExceeded,
  OutOfDomain,
  InfeasibleStorage,
  IoError,
};

constexpr std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::DegreeExhausted: return "DegreeExhausted";
    case ErrorCode::InvalidBound: return "InvalidBound";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::SizeOverflow: return "SizeOverflow";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptyVector: return "EmptyVector";
    case ErrorCode::NonPositiveNormalizer: return "NonPositiveNormalizer";
    case ErrorCode::SingleMemory: return "SingleMemory";
    case ErrorCode::InvalidParams: return "InvalidParams";
    case ErrorCode::InfeasiblePlant: return "InfeasiblePlant";
    case ErrorCode::CostCapExceeded: return "CostCapExceeded";
    case ErrorCode::OutOfDomain: return "OutOfDomain";
    case ErrorCode::InfeasibleStorage: return "InfeasibleStorage";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Library-wide exception. `code()` identifies the failure class; `what()`
/// carries the human readable detail.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  std::string_view name() const noexcept { return error_name(code_); }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace ahop
