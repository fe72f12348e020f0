#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "enav/error.hpp"
#include "enav/time.hpp"

namespace enav::lang {

struct SourceSpan {
  std::string file;
  int line = 0;
  int column = 0;
};

enum class Severity { Error, Warning };

struct Diagnostic {
  Severity severity = Severity::Error;
  ErrorCode code = ErrorCode::SyntaxError;
  std::string message;
  SourceSpan span;

  /// `file:line:col: error: message`
  std::string format() const;
};

bool has_errors(const std::vector<Diagnostic>& diags);

enum class ExprType { Unknown, Numeric, Boolean };
std::string_view to_string(ExprType t);

enum class ExprKind {
  Number,      // numeric literal, optional unit
  Bool,        // true / false
  Name,        // bare identifier as parsed
  Param,       // resolved formal parameter
  RoutineRef,  // resolved time routine used as a Boolean series
  SensorRef,   // concrete sensor after template instantiation
  Call,        // artifact or builtin applied to arguments
  Unary,
  Binary,
  Conditional  // args: condition, then, else
};

enum class UnaryOp { Not, Negate };
enum class BinaryOp { Mul, Div, Add, Sub, Lt, Le, Gt, Ge, Eq, Ne, And, Or, Implies };

std::string_view to_string(BinaryOp op);
bool is_comparison(BinaryOp op);
bool is_logical(BinaryOp op);

struct Expr {
  ExprKind kind = ExprKind::Number;
  double number = 0.0;
  std::string unit;
  std::string name;
  UnaryOp unary = UnaryOp::Not;
  BinaryOp binary = BinaryOp::Add;
  std::vector<Expr> args;
  SourceSpan span;
  ExprType type = ExprType::Unknown;

  static Expr number_lit(double v, std::string unit = {});
  static Expr bool_lit(bool v);
  static Expr name_ref(std::string name);
  static Expr call(std::string name, std::vector<Expr> args);
  static Expr unary_op(UnaryOp op, Expr operand);
  static Expr binary_op(BinaryOp op, Expr lhs, Expr rhs);
  static Expr conditional(Expr c, Expr a, Expr b);
};

/// Structural equality ignoring spans, inferred types, and whether a name
/// has been classified by resolution.
bool same_structure(const Expr& a, const Expr& b);

struct SensorDecl {
  std::string id;
  std::string unit;
  Duration period = 900;
  SourceSpan span;
};

struct FunctionDecl {
  std::string id;
  std::vector<std::string> params;
  Expr body;
  SourceSpan span;
};

struct RuleDecl {
  std::string id;
  std::vector<std::string> params;
  std::optional<std::string> when;
  Expr body;
  SourceSpan span;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

struct CharacteristicDecl {
  std::string id;
  std::string x_param;
  std::optional<std::string> y_param;  // present for the rule form
  std::optional<std::vector<Point>> lower;
  std::optional<std::vector<Point>> upper;
  SourceSpan span;

  bool is_rule() const { return y_param.has_value(); }
  std::vector<std::string> params() const;
};

enum class Quantization { Day, Week, Month, Quarter, Year };
std::string_view to_string(Quantization q);

struct MetricDecl {
  std::string id;
  std::string base_fn;
  std::string context;
  Quantization quantization = Quantization::Day;
  std::optional<double> coverage;
  SourceSpan span;

  double coverage_threshold() const { return coverage.value_or(0.9); }
};

enum class CalendarField { Year, Month, Day, Hour, Minute, Second, Weekday };
std::string_view to_string(CalendarField f);
/// Inclusive value bounds of a field.
std::pair<int, int> field_bounds(CalendarField f);

struct ValueSpan {
  int lo = 0;
  int hi = 0;
  friend bool operator==(const ValueSpan&, const ValueSpan&) = default;
};

/// Field constraint: the field value lies in any of the spans.
struct FieldPattern {
  CalendarField field = CalendarField::Hour;
  std::vector<ValueSpan> spans;
  friend bool operator==(const FieldPattern&, const FieldPattern&) = default;
};

/// Conjunction of field constraints.
struct TimeRange {
  std::vector<FieldPattern> fields;
  friend bool operator==(const TimeRange&, const TimeRange&) = default;
};

struct TimeRoutineDecl {
  std::string id;
  std::vector<TimeRange> ranges;
  std::vector<std::string> includes;
  std::vector<std::string> excludes;
  SourceSpan span;
};

struct ApplyDecl {
  std::string template_id;
  std::string instance_id;
  std::vector<std::pair<std::string, std::string>> bindings;  // formal -> concrete
  SourceSpan span;
};

using Decl = std::variant<SensorDecl, FunctionDecl, RuleDecl, CharacteristicDecl, MetricDecl,
                          TimeRoutineDecl, ApplyDecl>;

/// Identifier a declaration introduces (instance id for `apply`).
const std::string& decl_id(const Decl& d);
const SourceSpan& decl_span(const Decl& d);
std::string_view decl_kind_name(const Decl& d);
/// Formal sensor parameters of a template-capable declaration.
std::vector<std::string> decl_params(const Decl& d);

bool same_structure(const Decl& a, const Decl& b);

/// Declarations of one source file in order.
struct Fragment {
  std::string file;
  std::vector<Decl> decls;
};

bool same_structure(const Fragment& a, const Fragment& b);

}  // namespace enav::lang
