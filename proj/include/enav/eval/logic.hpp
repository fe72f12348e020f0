#pragma once

#include <cstdint>
#include <string_view>

#include "enav/timeseries.hpp"

namespace enav::eval {

/// Pointwise value of a rule.
enum class BoolValue : std::uint8_t { True, False, Missing, Undefined };

std::string_view to_string(BoolValue v);

// Strong Kleene with UNDEFINED dominating MISSING.
constexpr BoolValue logic_and(BoolValue a, BoolValue b) {
  if (a == BoolValue::False || b == BoolValue::False) return BoolValue::False;
  if (a == BoolValue::Undefined || b == BoolValue::Undefined) return BoolValue::Undefined;
  if (a == BoolValue::Missing || b == BoolValue::Missing) return BoolValue::Missing;
  return BoolValue::True;
}

constexpr BoolValue logic_or(BoolValue a, BoolValue b) {
  if (a == BoolValue::True || b == BoolValue::True) return BoolValue::True;
  if (a == BoolValue::Undefined || b == BoolValue::Undefined) return BoolValue::Undefined;
  if (a == BoolValue::Missing || b == BoolValue::Missing) return BoolValue::Missing;
  return BoolValue::False;
}

constexpr BoolValue logic_not(BoolValue a) {
  if (a == BoolValue::True) return BoolValue::False;
  if (a == BoolValue::False) return BoolValue::True;
  return a;
}

constexpr BoolValue logic_implies(BoolValue a, BoolValue b) { return logic_or(logic_not(a), b); }

/// TRUE is VALID 1.0, FALSE is VALID 0.0.
BoolValue to_bool(const Sample& s);
Sample to_sample(BoolValue v);

}  // namespace enav::eval
