#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace myotorque {

enum class ErrorCode {
  InvalidArgument,
  NonFiniteValue,
  TargetOutsideSupport,
  DegenerateSeries,
  ZeroVariance,
  InvalidCutoff,
  InvalidOrder,
  InvalidBand,
  SeriesTooShort,
  MissingChannel,
  AlignmentError,
  NoMotionDetected,
  DimensionMismatch,
  NotPositiveDefinite,
  TooFewUnits,
  LengthMismatch,
  NonPositiveBaseline,
  DegenerateTarget,
  InvalidSpec,
  ParseError,
  IoError,
  VersionMismatch,
  ConfigMismatch,
};

std::string_view to_string(ErrorCode code);

// All library failures are reported through this type; `code()` identifies
// the failure class so callers (the CLI in particular) can map it to an exit
// status without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  // The message without the code prefix.
  const std::string& detail() const noexcept { return detail_; }

  // Same code, message prefixed with `context` (e.g. the take being processed).
  Error with_context(std::string_view context) const {
    return Error(code_, std::string(context) + ": " + detail_);
  }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace myotorque
