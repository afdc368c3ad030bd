#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace plt {

enum class ErrorKind {
  NotPSD,
  Asymmetric,
  DimMismatch,
  NumericOverflow,
  Divergence,
  UnstableStep,
  NonpositiveTheta,
  BadDelta,
  BadEpsilon,
  EmptyTrace,
  ZeroVariance,
  UnknownMethod,
  InvalidArgument,
  Parse,
  Io,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NotPSD: return "NotPSD";
    case ErrorKind::Asymmetric: return "Asymmetric";
    case ErrorKind::DimMismatch: return "DimMismatch";
    case ErrorKind::NumericOverflow: return "NumericOverflow";
    case ErrorKind::Divergence: return "Divergence";
    case ErrorKind::UnstableStep: return "UnstableStep";
    case ErrorKind::NonpositiveTheta: return "NonpositiveTheta";
    case ErrorKind::BadDelta: return "BadDelta";
    case ErrorKind::BadEpsilon: return "BadEpsilon";
    case ErrorKind::EmptyTrace: return "EmptyTrace";
    case ErrorKind::ZeroVariance: return "ZeroVariance";
    case ErrorKind::UnknownMethod: return "UnknownMethod";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::Parse: return "Parse";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-checkable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool condition, ErrorKind kind, const std::string& what) {
  if (!condition) fail(kind, what);
}

}  // namespace plt
