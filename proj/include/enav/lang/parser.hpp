#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "enav/lang/ast.hpp"

namespace enav::lang {

struct ParseResult {
  Fragment fragment;
  std::vector<Diagnostic> diagnostics;

  bool ok() const { return !has_errors(diagnostics); }
};

/// Parses one `.afs` source. Syntax errors are reported with positions and
/// parsing resumes after the next `;`, so one pass reports every broken
/// declaration.
ParseResult parse(std::string_view text, const std::string& filename);

/// Words that can never be identifiers.
bool is_reserved_word(std::string_view word);

}  // namespace enav::lang
