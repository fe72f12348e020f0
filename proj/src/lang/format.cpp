#include "enav/lang/format.hpp"

#include <array>

#include <fmt/format.h>

namespace enav::lang {

namespace {

// Binding strength; higher binds tighter.
constexpr int kCondPrec = 0;
constexpr int kUnaryPrec = 7;
constexpr int kPrimaryPrec = 8;

int precedence(const Expr& e) {
  switch (e.kind) {
    case ExprKind::Conditional:
      return kCondPrec;
    case ExprKind::Unary:
      return kUnaryPrec;
    case ExprKind::Binary:
      switch (e.binary) {
        case BinaryOp::Implies: return 1;
        case BinaryOp::Or: return 2;
        case BinaryOp::And: return 3;
        case BinaryOp::Mul:
        case BinaryOp::Div: return 6;
        case BinaryOp::Add:
        case BinaryOp::Sub: return 5;
        default: return 4;  // comparisons
      }
    default:
      return kPrimaryPrec;
  }
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

void emit(const Expr& e, std::string& out);

void emit_child(const Expr& child, bool parens, std::string& out) {
  if (parens) out.push_back('(');
  emit(child, out);
  if (parens) out.push_back(')');
}

void emit(const Expr& e, std::string& out) {
  switch (e.kind) {
    case ExprKind::Number:
      out += format_number(e.number);
      if (!e.unit.empty()) {
        out.push_back(' ');
        out += quote(e.unit);
      }
      return;
    case ExprKind::Bool:
      out += e.number != 0.0 ? "true" : "false";
      return;
    case ExprKind::Name:
    case ExprKind::Param:
    case ExprKind::RoutineRef:
    case ExprKind::SensorRef:
      out += e.name;
      return;
    case ExprKind::Call:
      out += e.name;
      out.push_back('(');
      for (std::size_t i = 0; i < e.args.size(); ++i) {
        if (i) out += ", ";
        emit(e.args[i], out);
      }
      out.push_back(')');
      return;
    case ExprKind::Unary: {
      out += e.unary == UnaryOp::Not ? "not " : "-";
      const Expr& inner = e.args[0];
      const bool parens = precedence(inner) < kUnaryPrec ||
                          (e.unary == UnaryOp::Negate && inner.kind == ExprKind::Number && inner.number < 0);
      emit_child(inner, parens, out);
      return;
    }
    case ExprKind::Binary: {
      const int p = precedence(e);
      const bool right_assoc = e.binary == BinaryOp::Implies;
      const bool non_assoc = is_comparison(e.binary);
      const int lp = precedence(e.args[0]);
      const int rp = precedence(e.args[1]);
      emit_child(e.args[0], lp < p || (lp == p && (right_assoc || non_assoc)), out);
      out.push_back(' ');
      out += to_string(e.binary);
      out.push_back(' ');
      emit_child(e.args[1], rp < p || (rp == p && !right_assoc), out);
      return;
    }
    case ExprKind::Conditional:
      out += "if ";
      emit(e.args[0], out);
      out += " then ";
      emit(e.args[1], out);
      out += " else ";
      emit(e.args[2], out);
      return;
  }
}

std::string format_points(const std::vector<Point>& pts) {
  std::string out = "[";
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (i) out += ", ";
    out += fmt::format("({}, {})", format_number(pts[i].x), format_number(pts[i].y));
  }
  out += "]";
  return out;
}

std::string format_field_value(CalendarField f, int v) {
  static constexpr std::array<const char*, 7> kDays = {"Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"};
  if (f == CalendarField::Weekday && v >= 1 && v <= 7) return kDays[static_cast<std::size_t>(v - 1)];
  return std::to_string(v);
}

std::string format_span(CalendarField f, const ValueSpan& s) {
  if (s.lo == s.hi) return format_field_value(f, s.lo);
  return format_field_value(f, s.lo) + ".." + format_field_value(f, s.hi);
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ", ";
    out += items[i];
  }
  return out;
}

}  // namespace

std::string format_number(double v) {
  std::string s = fmt::format("{}", v);
  return s;
}

std::string format_period(Duration seconds) {
  if (seconds % 3600 == 0) return fmt::format("{}h", seconds / 3600);
  if (seconds % 60 == 0) return fmt::format("{}min", seconds / 60);
  return fmt::format("{}s", seconds);
}

std::string format(const Expr& expr) {
  std::string out;
  emit(expr, out);
  return out;
}

std::string format(const Decl& decl) {
  return std::visit(
      [](const auto& d) -> std::string {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, SensorDecl>) {
          return fmt::format("sensor {} : {} @ {};", d.id, quote(d.unit), format_period(d.period));
        } else if constexpr (std::is_same_v<T, FunctionDecl>) {
          return fmt::format("function {}({}) = {};", d.id, join(d.params), format(d.body));
        } else if constexpr (std::is_same_v<T, RuleDecl>) {
          return fmt::format("rule {}({}){} = {};", d.id, join(d.params), d.when ? " when " + *d.when : "",
                             format(d.body));
        } else if constexpr (std::is_same_v<T, CharacteristicDecl>) {
          std::string out = fmt::format("characteristic {}({})", d.id, join(d.params()));
          if (d.lower) out += " lower " + format_points(*d.lower);
          if (d.upper) out += " upper " + format_points(*d.upper);
          return out + ";";
        } else if constexpr (std::is_same_v<T, MetricDecl>) {
          std::string out = fmt::format("metric {} = {}({}) per {}", d.id, d.base_fn, d.context,
                                        to_string(d.quantization));
          if (d.coverage) out += " coverage " + format_number(*d.coverage);
          return out + ";";
        } else if constexpr (std::is_same_v<T, TimeRoutineDecl>) {
          std::vector<std::string> ranges;
          for (const auto& r : d.ranges) {
            std::string text;
            for (const auto& fp : r.fields) {
              if (!text.empty()) text.push_back(' ');
              text += to_string(fp.field);
              text.push_back(' ');
              if (fp.spans.size() == 1) {
                text += format_span(fp.field, fp.spans[0]);
              } else {
                std::vector<std::string> items;
                for (const auto& s : fp.spans) items.push_back(format_span(fp.field, s));
                text += "[" + join(items) + "]";
              }
            }
            ranges.push_back(std::move(text));
          }
          std::string out = fmt::format("timeroutine {} = {{{}}}", d.id,
                                        ranges.empty() ? std::string() : " " + join(ranges) + " ");
          if (!d.includes.empty()) out += " include " + join(d.includes);
          if (!d.excludes.empty()) out += " exclude " + join(d.excludes);
          return out + ";";
        } else {
          std::vector<std::string> binds;
          for (const auto& [f, a] : d.bindings) binds.push_back(f + " = " + a);
          return fmt::format("apply {} as {} with ({});", d.template_id, d.instance_id, join(binds));
        }
      },
      decl);
}

std::string format(const Fragment& fragment) {
  std::string out;
  for (const auto& d : fragment.decls) {
    out += format(d);
    out.push_back('\n');
  }
  return out;
}

}  // namespace enav::lang
