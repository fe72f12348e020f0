#pragma once

#include <string>

#include "enav/lang/ast.hpp"

namespace enav::lang {

/// Canonical source text; parse(format(f)) is structurally equal to f.
std::string format(const Fragment& fragment);
std::string format(const Decl& decl);
/// Expression text with the minimal parentheses the precedence rules need.
std::string format(const Expr& expr);

/// Shortest text that parses back to exactly `v`.
std::string format_number(double v);
/// `15min`, `1h`, `7s`.
std::string format_period(Duration seconds);

}  // namespace enav::lang
