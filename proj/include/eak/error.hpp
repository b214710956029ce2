#pragma once

#include <stdexcept>
#include <string>

namespace eak {

/// Failure categories. The CLI maps each onto an exit code (see exit_code()).
enum class ErrorKind {
  Config,            // bad flags, bad config or design files, schema errors
  UnsupportedDatatype,
  CorruptHeader,
  DimensionMismatch,
  NonIntegerLabels,
  NonFinite,
  UnknownLabel,
  EmptyRegion,
  OutOfBounds,
  WindowOutOfRange,
  TrIncompatible,
  SingleClassInput,
  NonLinearKernel,
  TooFewSamples,
  TooFewFolds,
  OverlapError,
  DigestMismatch,
  SchemaError,
  BandOutOfRange,
  BandEmpty,
  GroupTooSmall,
  EmptyConfusion,
  InsufficientUnits,
  TooShortForAlff,
  Numerical,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::Config: return "ConfigError";
    case ErrorKind::UnsupportedDatatype: return "UnsupportedDatatype";
    case ErrorKind::CorruptHeader: return "CorruptHeader";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NonIntegerLabels: return "NonIntegerLabels";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::UnknownLabel: return "UnknownLabel";
    case ErrorKind::EmptyRegion: return "EmptyRegion";
    case ErrorKind::OutOfBounds: return "OutOfBounds";
    case ErrorKind::WindowOutOfRange: return "WindowOutOfRange";
    case ErrorKind::TrIncompatible: return "TrIncompatible";
    case ErrorKind::SingleClassInput: return "SingleClassInput";
    case ErrorKind::NonLinearKernel: return "NonLinearKernel";
    case ErrorKind::TooFewSamples: return "TooFewSamples";
    case ErrorKind::TooFewFolds: return "TooFewFolds";
    case ErrorKind::OverlapError: return "OverlapError";
    case ErrorKind::DigestMismatch: return "DigestMismatch";
    case ErrorKind::SchemaError: return "SchemaError";
    case ErrorKind::BandOutOfRange: return "BandOutOfRange";
    case ErrorKind::BandEmpty: return "BandEmpty";
    case ErrorKind::GroupTooSmall: return "GroupTooSmall";
    case ErrorKind::EmptyConfusion: return "EmptyConfusion";
    case ErrorKind::InsufficientUnits: return "InsufficientUnits";
    case ErrorKind::TooShortForAlff: return "TooShortForAlff";
    case ErrorKind::Numerical: return "NumericalFailure";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// 2 = configuration, 3 = data, 4 = numerical failure.
inline int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::Config:
    case ErrorKind::SchemaError:
    case ErrorKind::TooFewFolds:
    case ErrorKind::BandOutOfRange:
    case ErrorKind::WindowOutOfRange:
    case ErrorKind::TrIncompatible:
      return 2;
    case ErrorKind::Numerical:
    case ErrorKind::BandEmpty:
      return 4;
    default:
      return 3;
  }
}

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace eak
