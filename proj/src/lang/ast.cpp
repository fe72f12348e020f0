#include "enav/lang/ast.hpp"

#include <fmt/format.h>

namespace enav::lang {

std::string Diagnostic::format() const {
  return fmt::format("{}:{}:{}: {}: {}", span.file.empty() ? "<input>" : span.file, span.line, span.column,
                     severity == Severity::Error ? "error" : "warning", message);
}

bool has_errors(const std::vector<Diagnostic>& diags) {
  for (const auto& d : diags) {
    if (d.severity == Severity::Error) return true;
  }
  return false;
}

std::string_view to_string(ExprType t) {
  switch (t) {
    case ExprType::Numeric: return "NUMERIC";
    case ExprType::Boolean: return "BOOLEAN";
    case ExprType::Unknown: break;
  }
  return "UNKNOWN";
}

std::string_view to_string(BinaryOp op) {
  switch (op) {
    case BinaryOp::Mul: return "*";
    case BinaryOp::Div: return "/";
    case BinaryOp::Add: return "+";
    case BinaryOp::Sub: return "-";
    case BinaryOp::Lt: return "<";
    case BinaryOp::Le: return "<=";
    case BinaryOp::Gt: return ">";
    case BinaryOp::Ge: return ">=";
    case BinaryOp::Eq: return "==";
    case BinaryOp::Ne: return "!=";
    case BinaryOp::And: return "and";
    case BinaryOp::Or: return "or";
    case BinaryOp::Implies: return "implies";
  }
  return "?";
}

bool is_comparison(BinaryOp op) {
  switch (op) {
    case BinaryOp::Lt:
    case BinaryOp::Le:
    case BinaryOp::Gt:
    case BinaryOp::Ge:
    case BinaryOp::Eq:
    case BinaryOp::Ne:
      return true;
    default:
      return false;
  }
}

bool is_logical(BinaryOp op) {
  return op == BinaryOp::And || op == BinaryOp::Or || op == BinaryOp::Implies;
}

Expr Expr::number_lit(double v, std::string unit) {
  Expr e;
  e.kind = ExprKind::Number;
  e.number = v;
  e.unit = std::move(unit);
  return e;
}

Expr Expr::bool_lit(bool v) {
  Expr e;
  e.kind = ExprKind::Bool;
  e.number = v ? 1.0 : 0.0;
  return e;
}

Expr Expr::name_ref(std::string name) {
  Expr e;
  e.kind = ExprKind::Name;
  e.name = std::move(name);
  return e;
}

Expr Expr::call(std::string name, std::vector<Expr> args) {
  Expr e;
  e.kind = ExprKind::Call;
  e.name = std::move(name);
  e.args = std::move(args);
  return e;
}

Expr Expr::unary_op(UnaryOp op, Expr operand) {
  Expr e;
  e.kind = ExprKind::Unary;
  e.unary = op;
  e.args.push_back(std::move(operand));
  return e;
}

Expr Expr::binary_op(BinaryOp op, Expr lhs, Expr rhs) {
  Expr e;
  e.kind = ExprKind::Binary;
  e.binary = op;
  e.args.push_back(std::move(lhs));
  e.args.push_back(std::move(rhs));
  return e;
}

Expr Expr::conditional(Expr c, Expr a, Expr b) {
  Expr e;
  e.kind = ExprKind::Conditional;
  e.args.push_back(std::move(c));
  e.args.push_back(std::move(a));
  e.args.push_back(std::move(b));
  return e;
}

namespace {

bool is_plain_name(ExprKind k) {
  return k == ExprKind::Name || k == ExprKind::Param || k == ExprKind::RoutineRef;
}

}  // namespace

bool same_structure(const Expr& a, const Expr& b) {
  if (is_plain_name(a.kind) && is_plain_name(b.kind)) return a.name == b.name;
  if (a.kind != b.kind || a.args.size() != b.args.size()) return false;
  switch (a.kind) {
    case ExprKind::Number:
      if (a.number != b.number || a.unit != b.unit) return false;
      break;
    case ExprKind::Bool:
      if (a.number != b.number) return false;
      break;
    case ExprKind::SensorRef:
    case ExprKind::Call:
      if (a.name != b.name) return false;
      break;
    case ExprKind::Unary:
      if (a.unary != b.unary) return false;
      break;
    case ExprKind::Binary:
      if (a.binary != b.binary) return false;
      break;
    default:
      break;
  }
  for (std::size_t i = 0; i < a.args.size(); ++i) {
    if (!same_structure(a.args[i], b.args[i])) return false;
  }
  return true;
}

std::vector<std::string> CharacteristicDecl::params() const {
  std::vector<std::string> out{x_param};
  if (y_param) out.push_back(*y_param);
  return out;
}

std::string_view to_string(Quantization q) {
  switch (q) {
    case Quantization::Day: return "day";
    case Quantization::Week: return "week";
    case Quantization::Month: return "month";
    case Quantization::Quarter: return "quarter";
    case Quantization::Year: return "year";
  }
  return "?";
}

std::string_view to_string(CalendarField f) {
  switch (f) {
    case CalendarField::Year: return "year";
    case CalendarField::Month: return "month";
    case CalendarField::Day: return "day";
    case CalendarField::Hour: return "hour";
    case CalendarField::Minute: return "minute";
    case CalendarField::Second: return "second";
    case CalendarField::Weekday: return "weekday";
  }
  return "?";
}

std::pair<int, int> field_bounds(CalendarField f) {
  switch (f) {
    case CalendarField::Year: return {1, 9999};
    case CalendarField::Month: return {1, 12};
    case CalendarField::Day: return {1, 31};
    case CalendarField::Hour: return {0, 23};
    case CalendarField::Minute: return {0, 59};
    case CalendarField::Second: return {0, 59};
    case CalendarField::Weekday: return {1, 7};
  }
  return {0, 0};
}

const std::string& decl_id(const Decl& d) {
  return std::visit(
      [](const auto& x) -> const std::string& {
        if constexpr (std::is_same_v<std::decay_t<decltype(x)>, ApplyDecl>) {
          return x.instance_id;
        } else {
          return x.id;
        }
      },
      d);
}

const SourceSpan& decl_span(const Decl& d) {
  return std::visit([](const auto& x) -> const SourceSpan& { return x.span; }, d);
}

std::string_view decl_kind_name(const Decl& d) {
  static constexpr std::string_view kNames[] = {"sensor", "function", "rule", "characteristic",
                                                "metric", "timeroutine", "apply"};
  return kNames[d.index()];
}

std::vector<std::string> decl_params(const Decl& d) {
  if (const auto* f = std::get_if<FunctionDecl>(&d)) return f->params;
  if (const auto* r = std::get_if<RuleDecl>(&d)) return r->params;
  if (const auto* c = std::get_if<CharacteristicDecl>(&d)) return c->params();
  return {};
}

bool same_structure(const Decl& a, const Decl& b) {
  if (a.index() != b.index()) return false;
  return std::visit(
      [&](const auto& x) -> bool {
        using T = std::decay_t<decltype(x)>;
        const T& y = std::get<T>(b);
        if constexpr (std::is_same_v<T, SensorDecl>) {
          return x.id == y.id && x.unit == y.unit && x.period == y.period;
        } else if constexpr (std::is_same_v<T, FunctionDecl>) {
          return x.id == y.id && x.params == y.params && same_structure(x.body, y.body);
        } else if constexpr (std::is_same_v<T, RuleDecl>) {
          return x.id == y.id && x.params == y.params && x.when == y.when && same_structure(x.body, y.body);
        } else if constexpr (std::is_same_v<T, CharacteristicDecl>) {
          return x.id == y.id && x.x_param == y.x_param && x.y_param == y.y_param && x.lower == y.lower &&
                 x.upper == y.upper;
        } else if constexpr (std::is_same_v<T, MetricDecl>) {
          return x.id == y.id && x.base_fn == y.base_fn && x.context == y.context &&
                 x.quantization == y.quantization && x.coverage == y.coverage;
        } else if constexpr (std::is_same_v<T, TimeRoutineDecl>) {
          return x.id == y.id && x.ranges == y.ranges && x.includes == y.includes && x.excludes == y.excludes;
        } else {
          return x.template_id == y.template_id && x.instance_id == y.instance_id && x.bindings == y.bindings;
        }
      },
      a);
}

bool same_structure(const Fragment& a, const Fragment& b) {
  if (a.decls.size() != b.decls.size()) return false;
  for (std::size_t i = 0; i < a.decls.size(); ++i) {
    if (!same_structure(a.decls[i], b.decls[i])) return false;
  }
  return true;
}

}  // namespace enav::lang
