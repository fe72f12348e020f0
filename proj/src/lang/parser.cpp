#include "enav/lang/parser.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <optional>

#include <fmt/format.h>

namespace enav::lang {

namespace {

enum class Tok { Ident, Number, String, Punct, End };

struct Token {
  Tok kind = Tok::End;
  std::string text;
  double number = 0.0;
  SourceSpan span;
};

constexpr std::array<std::string_view, 9> kReserved = {"and", "or",   "not",  "implies", "if",
                                                       "then", "else", "true", "false"};

class Lexer {
 public:
  Lexer(std::string_view src, std::string file, std::vector<Diagnostic>& diags)
      : src_(src), file_(std::move(file)), diags_(diags) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    for (;;) {
      skip_space_and_comments();
      Token t;
      t.span = {file_, line_, col_};
      if (pos_ >= src_.size()) {
        t.kind = Tok::End;
        out.push_back(std::move(t));
        return out;
      }
      const char c = src_[pos_];
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        const std::size_t b = pos_;
        while (pos_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
          advance();
        }
        t.kind = Tok::Ident;
        t.text = std::string(src_.substr(b, pos_ - b));
      } else if (std::isdigit(static_cast<unsigned char>(c)) ||
                 (c == '.' && pos_ + 1 < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
        lex_number(t);
      } else if (c == '"') {
        lex_string(t);
      } else {
        static constexpr std::array<std::string_view, 6> kTwo = {"==", "!=", "<=", ">=", "..", "->"};
        t.kind = Tok::Punct;
        const std::string_view two = src_.substr(pos_, 2);
        if (std::find(kTwo.begin(), kTwo.end(), two) != kTwo.end()) {
          t.text = std::string(two);
          advance();
          advance();
        } else if (std::string_view("(){}[],;:@=<>+-*/").find(c) != std::string_view::npos) {
          t.text = std::string(1, c);
          advance();
        } else {
          diags_.push_back({Severity::Error, ErrorCode::SyntaxError,
                            fmt::format("unexpected character '{}'", c), t.span});
          advance();
          continue;
        }
      }
      out.push_back(std::move(t));
    }
  }

 private:
  void advance() {
    if (src_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  void skip_space_and_comments() {
    while (pos_ < src_.size()) {
      const char c = src_[pos_];
      if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else if (c == '/' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '/') {
        while (pos_ < src_.size() && src_[pos_] != '\n') advance();
      } else {
        break;
      }
    }
  }

  void lex_number(Token& t) {
    const std::size_t b = pos_;
    auto digits = [&] {
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) advance();
    };
    digits();
    if (pos_ + 1 < src_.size() && src_[pos_] == '.' && std::isdigit(static_cast<unsigned char>(src_[pos_ + 1]))) {
      advance();
      digits();
    }
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      std::size_t look = pos_ + 1;
      if (look < src_.size() && (src_[look] == '+' || src_[look] == '-')) ++look;
      if (look < src_.size() && std::isdigit(static_cast<unsigned char>(src_[look]))) {
        while (pos_ < look) advance();
        digits();
      }
    }
    t.kind = Tok::Number;
    t.text = std::string(src_.substr(b, pos_ - b));
    const auto res = std::from_chars(t.text.data(), t.text.data() + t.text.size(), t.number);
    if (res.ec != std::errc() || !std::isfinite(t.number)) {
      diags_.push_back({Severity::Error, ErrorCode::SyntaxError, "number out of range: " + t.text, t.span});
      t.number = 0.0;
    }
  }

  void lex_string(Token& t) {
    advance();
    std::string value;
    while (pos_ < src_.size() && src_[pos_] != '"' && src_[pos_] != '\n') {
      if (src_[pos_] == '\\' && pos_ + 1 < src_.size() && (src_[pos_ + 1] == '"' || src_[pos_ + 1] == '\\')) {
        advance();
      }
      value.push_back(src_[pos_]);
      advance();
    }
    if (pos_ < src_.size() && src_[pos_] == '"') {
      advance();
    } else {
      diags_.push_back({Severity::Error, ErrorCode::SyntaxError, "unterminated string", t.span});
    }
    t.kind = Tok::String;
    t.text = std::move(value);
  }

  std::string_view src_;
  std::string file_;
  std::vector<Diagnostic>& diags_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

struct SyntaxFailure {};

std::string describe(const Token& t) {
  switch (t.kind) {
    case Tok::End: return "end of input";
    case Tok::String: return fmt::format("string \"{}\"", t.text);
    case Tok::Number: return fmt::format("number '{}'", t.text);
    default: return fmt::format("'{}'", t.text);
  }
}

std::optional<CalendarField> field_named(std::string_view s) {
  static constexpr std::array<std::pair<std::string_view, CalendarField>, 7> kFields = {{
      {"year", CalendarField::Year},
      {"month", CalendarField::Month},
      {"day", CalendarField::Day},
      {"hour", CalendarField::Hour},
      {"minute", CalendarField::Minute},
      {"second", CalendarField::Second},
      {"weekday", CalendarField::Weekday},
  }};
  for (const auto& [name, f] : kFields) {
    if (name == s) return f;
  }
  return std::nullopt;
}

std::optional<int> weekday_named(std::string_view s) {
  static constexpr std::array<std::string_view, 7> kDays = {"mon", "tue", "wed", "thu", "fri", "sat", "sun"};
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  for (std::size_t i = 0; i < kDays.size(); ++i) {
    if (kDays[i] == lower) return static_cast<int>(i) + 1;
  }
  return std::nullopt;
}

class Parser {
 public:
  Parser(std::vector<Token> toks, std::string file, std::vector<Diagnostic>& diags)
      : toks_(std::move(toks)), file_(std::move(file)), diags_(diags) {}

  Fragment run() {
    Fragment frag;
    frag.file = file_;
    while (peek().kind != Tok::End) {
      try {
        frag.decls.push_back(declaration());
      } catch (const SyntaxFailure&) {
        recover();
      }
    }
    return frag;
  }

 private:
  const Token& peek(std::size_t ahead = 0) const {
    return toks_[std::min(pos_ + ahead, toks_.size() - 1)];
  }
  const Token& next() {
    const Token& t = toks_[pos_];
    if (pos_ + 1 < toks_.size()) ++pos_;
    return t;
  }
  bool at_punct(std::string_view p) const { return peek().kind == Tok::Punct && peek().text == p; }
  bool at_word(std::string_view w) const { return peek().kind == Tok::Ident && peek().text == w; }
  bool accept_punct(std::string_view p) {
    if (!at_punct(p)) return false;
    next();
    return true;
  }
  bool accept_word(std::string_view w) {
    if (!at_word(w)) return false;
    next();
    return true;
  }

  [[noreturn]] void fail(const SourceSpan& at, std::string message) {
    diags_.push_back({Severity::Error, ErrorCode::SyntaxError, std::move(message), at});
    throw SyntaxFailure{};
  }
  [[noreturn]] void expected(std::string_view what) {
    fail(peek().span, fmt::format("expected {}, found {}", what, describe(peek())));
  }
  void semantic_error(const SourceSpan& at, std::string message) {
    diags_.push_back({Severity::Error, ErrorCode::InvalidArgument, std::move(message), at});
  }

  void expect_punct(std::string_view p) {
    if (!accept_punct(p)) expected(fmt::format("'{}'", p));
  }
  void expect_word(std::string_view w) {
    if (!accept_word(w)) expected(fmt::format("'{}'", w));
  }

  std::string identifier(std::string_view what = "identifier") {
    if (peek().kind != Tok::Ident || is_reserved_word(peek().text)) expected(what);
    return next().text;
  }

  double number() {
    if (peek().kind != Tok::Number) expected("number");
    return next().number;
  }

  double signed_number() {
    const bool neg = accept_punct("-");
    const double v = number();
    return neg ? -v : v;
  }

  // Skips to just after the next ';'.
  void recover() {
    while (peek().kind != Tok::End) {
      if (next().kind == Tok::Punct && toks_[pos_ - 1].text == ";") return;
    }
  }

  Decl declaration() {
    const Token& kw = peek();
    if (kw.kind != Tok::Ident) expected("declaration keyword");
    const SourceSpan span = kw.span;
    const std::string word = kw.text;
    if (word == "sensor") return sensor(span);
    if (word == "function") return function(span);
    if (word == "rule") return rule(span);
    if (word == "characteristic") return characteristic(span);
    if (word == "metric") return metric(span);
    if (word == "timeroutine") return timeroutine(span);
    if (word == "apply") return apply(span);
    expected("one of 'sensor', 'function', 'rule', 'characteristic', 'metric', 'timeroutine', 'apply'");
  }

  SensorDecl sensor(const SourceSpan& span) {
    next();
    SensorDecl d;
    d.span = span;
    d.id = identifier("sensor name");
    expect_punct(":");
    if (peek().kind != Tok::String) expected("unit string");
    d.unit = next().text;
    expect_punct("@");
    const SourceSpan at = peek().span;
    const double amount = number();
    if (peek().kind != Tok::Ident) expected("period unit 's', 'min' or 'h'");
    const std::string unit = next().text;
    double scale = 0;
    if (unit == "s") {
      scale = 1;
    } else if (unit == "min") {
      scale = 60;
    } else if (unit == "h") {
      scale = 3600;
    } else {
      fail(at, "period unit must be 's', 'min' or 'h', found '" + unit + "'");
    }
    const double seconds = amount * scale;
    if (seconds < 1 || seconds != std::floor(seconds) || seconds > 1e9) {
      semantic_error(at, "period must be a whole number of seconds >= 1");
    }
    d.period = static_cast<Duration>(seconds);
    expect_punct(";");
    return d;
  }

  std::vector<std::string> params() {
    std::vector<std::string> out;
    expect_punct("(");
    if (!at_punct(")")) {
      do {
        const SourceSpan at = peek().span;
        std::string p = identifier("parameter name");
        if (std::find(out.begin(), out.end(), p) != out.end()) fail(at, "duplicate parameter '" + p + "'");
        out.push_back(std::move(p));
      } while (accept_punct(","));
    }
    expect_punct(")");
    return out;
  }

  FunctionDecl function(const SourceSpan& span) {
    next();
    FunctionDecl d;
    d.span = span;
    d.id = identifier("function name");
    d.params = params();
    expect_punct("=");
    d.body = expression();
    expect_punct(";");
    return d;
  }

  RuleDecl rule(const SourceSpan& span) {
    next();
    RuleDecl d;
    d.span = span;
    d.id = identifier("rule name");
    d.params = params();
    if (accept_word("when")) d.when = identifier("time routine name");
    expect_punct("=");
    d.body = expression();
    expect_punct(";");
    return d;
  }

  std::vector<Point> points() {
    std::vector<Point> out;
    const SourceSpan at = peek().span;
    expect_punct("[");
    do {
      expect_punct("(");
      Point p;
      p.x = signed_number();
      expect_punct(",");
      p.y = signed_number();
      expect_punct(")");
      out.push_back(p);
    } while (accept_punct(","));
    expect_punct("]");
    if (out.size() < 2) semantic_error(at, "a characteristic needs at least two points");
    for (std::size_t i = 1; i < out.size(); ++i) {
      if (!(out[i].x > out[i - 1].x)) {
        semantic_error(at, "characteristic points must be strictly increasing in x");
        break;
      }
    }
    return out;
  }

  CharacteristicDecl characteristic(const SourceSpan& span) {
    next();
    CharacteristicDecl d;
    d.span = span;
    d.id = identifier("characteristic name");
    expect_punct("(");
    d.x_param = identifier("parameter name");
    if (accept_punct(",")) {
      const SourceSpan at = peek().span;
      d.y_param = identifier("parameter name");
      if (*d.y_param == d.x_param) fail(at, "duplicate parameter '" + d.x_param + "'");
    }
    expect_punct(")");
    if (accept_word("lower")) d.lower = points();
    if (accept_word("upper")) d.upper = points();
    if (!d.lower && !d.upper) expected("'lower' or 'upper' point list");
    if (!d.is_rule() && d.lower && d.upper) {
      semantic_error(span, "a function-form characteristic takes exactly one point list");
    }
    expect_punct(";");
    return d;
  }

  MetricDecl metric(const SourceSpan& span) {
    next();
    MetricDecl d;
    d.span = span;
    d.id = identifier("metric name");
    expect_punct("=");
    d.base_fn = identifier("base function");
    expect_punct("(");
    d.context = identifier("context sensor or instance");
    expect_punct(")");
    expect_word("per");
    const std::string q = identifier("quantization");
    if (q == "day") {
      d.quantization = Quantization::Day;
    } else if (q == "week") {
      d.quantization = Quantization::Week;
    } else if (q == "month") {
      d.quantization = Quantization::Month;
    } else if (q == "quarter") {
      d.quantization = Quantization::Quarter;
    } else if (q == "year") {
      d.quantization = Quantization::Year;
    } else {
      fail(toks_[pos_ - 1].span, "quantization must be day, week, month, quarter or year");
    }
    if (accept_word("coverage")) {
      const SourceSpan at = peek().span;
      d.coverage = number();
      if (*d.coverage < 0.0 || *d.coverage > 1.0) semantic_error(at, "coverage must lie in [0, 1]");
    }
    expect_punct(";");
    return d;
  }

  int field_value(CalendarField field) {
    const SourceSpan at = peek().span;
    int v = 0;
    if (field == CalendarField::Weekday && peek().kind == Tok::Ident) {
      auto wd = weekday_named(peek().text);
      if (!wd) fail(at, "unknown weekday '" + peek().text + "'");
      next();
      v = *wd;
    } else {
      const double x = number();
      if (x != std::floor(x)) fail(at, "calendar values must be integers");
      v = static_cast<int>(x);
    }
    const auto [lo, hi] = field_bounds(field);
    if (v < lo || v > hi) {
      semantic_error(at, fmt::format("{} value {} outside [{}, {}]", to_string(field), v, lo, hi));
    }
    return v;
  }

  ValueSpan value_span(CalendarField field) {
    const SourceSpan at = peek().span;
    ValueSpan s;
    s.lo = field_value(field);
    s.hi = accept_punct("..") ? field_value(field) : s.lo;
    if (s.hi < s.lo) semantic_error(at, "span bounds must be ascending");
    return s;
  }

  FieldPattern field_pattern() {
    FieldPattern p;
    p.field = *field_named(next().text);
    if (accept_punct("[")) {
      do p.spans.push_back(value_span(p.field));
      while (accept_punct(","));
      expect_punct("]");
    } else {
      p.spans.push_back(value_span(p.field));
    }
    return p;
  }

  bool at_field() const { return peek().kind == Tok::Ident && field_named(peek().text).has_value(); }

  std::vector<std::string> idlist() {
    std::vector<std::string> out;
    do out.push_back(identifier("time routine name"));
    while (accept_punct(","));
    return out;
  }

  TimeRoutineDecl timeroutine(const SourceSpan& span) {
    next();
    TimeRoutineDecl d;
    d.span = span;
    d.id = identifier("time routine name");
    expect_punct("=");
    expect_punct("{");
    if (!at_punct("}")) {
      do {
        TimeRange r;
        if (!at_field()) expected("calendar field (year, month, day, hour, minute, second, weekday)");
        while (at_field()) r.fields.push_back(field_pattern());
        d.ranges.push_back(std::move(r));
      } while (accept_punct(","));
    }
    expect_punct("}");
    if (accept_word("include")) d.includes = idlist();
    if (accept_word("exclude")) d.excludes = idlist();
    expect_punct(";");
    return d;
  }

  ApplyDecl apply(const SourceSpan& span) {
    next();
    ApplyDecl d;
    d.span = span;
    d.template_id = identifier("template name");
    expect_word("as");
    d.instance_id = identifier("instance name");
    expect_word("with");
    expect_punct("(");
    if (!at_punct(")")) {
      do {
        const SourceSpan at = peek().span;
        std::string formal = identifier("formal parameter");
        expect_punct("=");
        std::string actual = identifier("sensor or instance name");
        for (const auto& [f, a] : d.bindings) {
          if (f == formal) fail(at, "parameter '" + formal + "' bound twice");
        }
        d.bindings.emplace_back(std::move(formal), std::move(actual));
      } while (accept_punct(","));
    }
    expect_punct(")");
    expect_punct(";");
    return d;
  }

  // Expressions, lowest precedence first:
  //   conditional < implies < or < and < comparison < + - < * / < not, unary -
  bool starts_operand() const {
    const Token& t = peek();
    if (t.kind == Tok::Number || t.kind == Tok::String) return t.kind == Tok::Number;
    if (t.kind == Tok::Ident) {
      return !is_reserved_word(t.text) || t.text == "not" || t.text == "if" || t.text == "true" ||
             t.text == "false";
    }
    return t.kind == Tok::Punct && (t.text == "(" || t.text == "-");
  }

  Expr operand_after(const Token& op, int level) {
    if (!starts_operand()) {
      fail(op.span, fmt::format("missing right operand for '{}' (found {})", op.text, describe(peek())));
    }
    return level_expr(level);
  }

  Expr expression() {
    if (at_word("if")) {
      const SourceSpan span = next().span;
      Expr c = expression();
      expect_word("then");
      Expr a = expression();
      expect_word("else");
      Expr b = expression();
      Expr e = Expr::conditional(std::move(c), std::move(a), std::move(b));
      e.span = span;
      return e;
    }
    return level_expr(0);
  }

  // level 0 implies (right-assoc), 1 or, 2 and, 3 comparison, 4 additive, 5 multiplicative
  Expr level_expr(int level) {
    if (level == 6) return unary();
    if (level == 0) {
      Expr lhs = level_expr(1);
      if (at_word("implies")) {
        const Token op = next();
        Expr rhs = !starts_operand() ? operand_after(op, 0) : (at_word("if") ? expression() : level_expr(0));
        Expr e = Expr::binary_op(BinaryOp::Implies, std::move(lhs), std::move(rhs));
        e.span = op.span;
        return e;
      }
      return lhs;
    }
    Expr lhs = level_expr(level + 1);
    for (;;) {
      std::optional<BinaryOp> op = match_op(level);
      if (!op) return lhs;
      const Token tok = next();
      Expr rhs = at_word("if") ? expression() : operand_after(tok, level + 1);
      Expr e = Expr::binary_op(*op, std::move(lhs), std::move(rhs));
      e.span = tok.span;
      lhs = std::move(e);
      if (level == 3) {
        if (match_op(3)) fail(peek().span, "comparisons cannot be chained; add parentheses");
        return lhs;
      }
    }
  }

  std::optional<BinaryOp> match_op(int level) const {
    const Token& t = peek();
    switch (level) {
      case 1:
        if (t.kind == Tok::Ident && t.text == "or") return BinaryOp::Or;
        break;
      case 2:
        if (t.kind == Tok::Ident && t.text == "and") return BinaryOp::And;
        break;
      case 3:
        if (t.kind != Tok::Punct) break;
        if (t.text == "<") return BinaryOp::Lt;
        if (t.text == "<=") return BinaryOp::Le;
        if (t.text == ">") return BinaryOp::Gt;
        if (t.text == ">=") return BinaryOp::Ge;
        if (t.text == "==") return BinaryOp::Eq;
        if (t.text == "!=") return BinaryOp::Ne;
        break;
      case 4:
        if (t.kind == Tok::Punct && t.text == "+") return BinaryOp::Add;
        if (t.kind == Tok::Punct && t.text == "-") return BinaryOp::Sub;
        break;
      case 5:
        if (t.kind == Tok::Punct && t.text == "*") return BinaryOp::Mul;
        if (t.kind == Tok::Punct && t.text == "/") return BinaryOp::Div;
        break;
      default:
        break;
    }
    return std::nullopt;
  }

  Expr unary() {
    if (at_word("not") || at_punct("-")) {
      const Token op = next();
      Expr inner = at_word("if") ? expression() : operand_after(op, 6);
      Expr e = Expr::unary_op(op.text == "not" ? UnaryOp::Not : UnaryOp::Negate, std::move(inner));
      e.span = op.span;
      return e;
    }
    return primary();
  }

  Expr primary() {
    const Token& t = peek();
    const SourceSpan span = t.span;
    if (t.kind == Tok::Number) {
      const double v = next().number;
      std::string unit;
      if (peek().kind == Tok::String) unit = next().text;
      Expr e = Expr::number_lit(v, std::move(unit));
      e.span = span;
      return e;
    }
    if (accept_word("true") || accept_word("false")) {
      Expr e = Expr::bool_lit(toks_[pos_ - 1].text == "true");
      e.span = span;
      return e;
    }
    if (accept_punct("(")) {
      Expr e = expression();
      expect_punct(")");
      return e;
    }
    if (t.kind == Tok::Ident && !is_reserved_word(t.text)) {
      std::string name = next().text;
      if (accept_punct("(")) {
        std::vector<Expr> args;
        if (!at_punct(")")) {
          do args.push_back(expression());
          while (accept_punct(","));
        }
        expect_punct(")");
        Expr e = Expr::call(std::move(name), std::move(args));
        e.span = span;
        return e;
      }
      Expr e = Expr::name_ref(std::move(name));
      e.span = span;
      return e;
    }
    expected("expression");
  }

  std::vector<Token> toks_;
  std::string file_;
  std::vector<Diagnostic>& diags_;
  std::size_t pos_ = 0;
};

}  // namespace

bool is_reserved_word(std::string_view word) {
  return std::find(kReserved.begin(), kReserved.end(), word) != kReserved.end();
}

ParseResult parse(std::string_view text, const std::string& filename) {
  ParseResult result;
  auto tokens = Lexer(text, filename, result.diagnostics).run();
  result.fragment = Parser(std::move(tokens), filename, result.diagnostics).run();
  result.fragment.file = filename;
  return result;
}

}  // namespace enav::lang
