#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace enav {

enum class ErrorCode {
  NonPositivePeriod,
  EndBeforeStart,
  IOFailure,
  GridMismatch,
  UnknownSensor,
  KindMismatch,
  InvalidArgument,
  MalformedRow,
  UnparseableTimestamp,
  UnknownTimezone,
  SyntaxError,
  UnresolvedReference,
  CyclicReference,
  DuplicateDefinition,
  TypeMismatch,
  IncompleteBinding,
  PeriodMismatch,
  EmptyRange,
  UnknownSection,
  ConfigError,
  Locked,
};

std::string_view to_string(ErrorCode code);

// Domain failure. Carries a machine-checkable code next to the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace enav
