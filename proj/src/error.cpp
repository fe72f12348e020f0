#include "enav/error.hpp"

namespace enav {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonPositivePeriod: return "NonPositivePeriod";
    case ErrorCode::EndBeforeStart: return "EndBeforeStart";
    case ErrorCode::IOFailure: return "IOFailure";
    case ErrorCode::GridMismatch: return "GridMismatch";
    case ErrorCode::UnknownSensor: return "UnknownSensor";
    case ErrorCode::KindMismatch: return "KindMismatch";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::UnparseableTimestamp: return "UnparseableTimestamp";
    case ErrorCode::UnknownTimezone: return "UnknownTimezone";
    case ErrorCode::SyntaxError: return "SyntaxError";
    case ErrorCode::UnresolvedReference: return "UnresolvedReference";
    case ErrorCode::CyclicReference: return "CyclicReference";
    case ErrorCode::DuplicateDefinition: return "DuplicateDefinition";
    case ErrorCode::TypeMismatch: return "TypeMismatch";
    case ErrorCode::IncompleteBinding: return "IncompleteBinding";
    case ErrorCode::PeriodMismatch: return "PeriodMismatch";
    case ErrorCode::EmptyRange: return "EmptyRange";
    case ErrorCode::UnknownSection: return "UnknownSection";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::Locked: return "Locked";
  }
  return "Unknown";
}

}  // namespace enav
