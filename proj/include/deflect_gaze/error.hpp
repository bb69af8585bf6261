#pragma once

#include <stdexcept>
#include <string>

namespace deflect_gaze {

enum class ErrorCode {
  DegenerateBisector,
  DegenerateBundle,
  InvalidArgument,
  ParseError,
  InvariantViolation,
  OutOfRange,
  NoRidge,
  ShiftCountMismatch,
  InvalidSeed,
  InvalidAnchor,
  EmptyField,
  InsufficientLines,
  SecondCenterNotFound,
  AmbiguousRadii,
  CentersTooClose,
  UnreliableLoss,
  NoDescent,
  EmptyMap,
  Io,
  AbortedPositions,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DegenerateBisector: return "degenerate-bisector";
    case ErrorCode::DegenerateBundle: return "degenerate-bundle";
    case ErrorCode::InvalidArgument: return "invalid-argument";
    case ErrorCode::ParseError: return "parse-error";
    case ErrorCode::InvariantViolation: return "invariant-violation";
    case ErrorCode::OutOfRange: return "out-of-range";
    case ErrorCode::NoRidge: return "no-ridge";
    case ErrorCode::ShiftCountMismatch: return "shift-count-mismatch";
    case ErrorCode::InvalidSeed: return "invalid-seed";
    case ErrorCode::InvalidAnchor: return "invalid-anchor";
    case ErrorCode::EmptyField: return "empty-field";
    case ErrorCode::InsufficientLines: return "insufficient-lines";
    case ErrorCode::SecondCenterNotFound: return "second-center-not-found";
    case ErrorCode::AmbiguousRadii: return "ambiguous-radii";
    case ErrorCode::CentersTooClose: return "centers-too-close";
    case ErrorCode::UnreliableLoss: return "unreliable-loss";
    case ErrorCode::NoDescent: return "no-descent";
    case ErrorCode::EmptyMap: return "empty-map";
    case ErrorCode::Io: return "io";
    case ErrorCode::AbortedPositions: return "aborted-positions";
  }
  return "unknown";
}

/// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace deflect_gaze
