#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace wgpfr {

enum class ErrorCode {
  DimensionMismatch,
  NotTangent,
  AntipodalPoints,
  DegenerateConfiguration,
  EmptyInput,
  GridMismatch,
  NotPositiveDefinite,
  AllRestartsFailed,
  ParallelVector,
  LengthMismatch,
  EmptyCurve,
  OutOfRange,
  TooFewRecords,
  ConfigInvalid,
  FileNotFound,
  SchemaViolation,
};

std::string_view to_string(ErrorCode code);

/// Exception carrying a machine-readable code. The CLI maps the code to its
/// exit status and to the `error` field of its stderr JSON line.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NotTangent: return "NotTangent";
    case ErrorCode::AntipodalPoints: return "AntipodalPoints";
    case ErrorCode::DegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::GridMismatch: return "GridMismatch";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::AllRestartsFailed: return "AllRestartsFailed";
    case ErrorCode::ParallelVector: return "ParallelVector";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::EmptyCurve: return "EmptyCurve";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::TooFewRecords: return "TooFewRecords";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::FileNotFound: return "FileNotFound";
    case ErrorCode::SchemaViolation: return "SchemaViolation";
  }
  return "Unknown";
}

}  // namespace wgpfr
