#include "myotorque/error.hpp"

namespace myotorque {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::TargetOutsideSupport: return "TargetOutsideSupport";
    case ErrorCode::DegenerateSeries: return "DegenerateSeries";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::InvalidCutoff: return "InvalidCutoff";
    case ErrorCode::InvalidOrder: return "InvalidOrder";
    case ErrorCode::InvalidBand: return "InvalidBand";
    case ErrorCode::SeriesTooShort: return "SeriesTooShort";
    case ErrorCode::MissingChannel: return "MissingChannel";
    case ErrorCode::AlignmentError: return "AlignmentError";
    case ErrorCode::NoMotionDetected: return "NoMotionDetected";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::TooFewUnits: return "TooFewUnits";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::NonPositiveBaseline: return "NonPositiveBaseline";
    case ErrorCode::DegenerateTarget: return "DegenerateTarget";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::ConfigMismatch: return "ConfigMismatch";
  }
  return "Unknown";
}

}  // namespace myotorque
