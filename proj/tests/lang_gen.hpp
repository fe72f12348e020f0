#pragma once

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "enav/lang/ast.hpp"

namespace enav::test {

// Random well-typed specifications for round-trip checks.
class SpecGen {
 public:
  explicit SpecGen(unsigned seed) : rng_(seed) {}

  enav::lang::Fragment fragment() {
    using namespace enav::lang;
    Fragment f;
    f.file = "gen.afs";
    names_.clear();
    template_.clear();
    template_params_.clear();
    const int nsensors = pick(1, 4);
    std::vector<std::string> sensors;
    for (int i = 0; i < nsensors; ++i) {
      SensorDecl s;
      s.id = fresh("S");
      s.unit = i == 0 ? "degC" : pick_of<std::string>({"degC", "bar", "kW", "%", "bool"});
      s.period = pick_of<enav::Duration>({60, 300, 900, 3600, 7});
      sensors.push_back(s.id);
      f.decls.emplace_back(s);
    }
    std::vector<std::string> routines;
    for (int i = 0, n = pick(0, 2); i < n; ++i) {
      TimeRoutineDecl r;
      r.id = fresh("tr");
      for (int k = 0, nr = pick(0, 2); k < nr; ++k) r.ranges.push_back(range());
      if (!routines.empty() && coin()) r.includes.push_back(routines.back());
      if (!routines.empty() && coin()) r.excludes.push_back(routines.front());
      routines.push_back(r.id);
      f.decls.emplace_back(r);
    }
    routines_ = routines;
    for (int i = 0, n = pick(1, 3); i < n; ++i) {
      FunctionDecl d;
      d.id = fresh("f");
      d.params = params();
      params_ = d.params;
      d.body = expr(enav::lang::ExprType::Numeric, 3);
      if (template_.empty()) {
        template_ = d.id;
        template_params_ = d.params;
      }
      f.decls.emplace_back(d);
    }
    for (int i = 0, n = pick(1, 3); i < n; ++i) {
      RuleDecl d;
      d.id = fresh("r");
      d.params = params();
      params_ = d.params;
      if (!routines.empty() && coin()) d.when = routines[static_cast<std::size_t>(pick(0, static_cast<int>(routines.size()) - 1))];
      d.body = expr(enav::lang::ExprType::Boolean, 3);
      f.decls.emplace_back(d);
    }
    for (int i = 0, n = pick(0, 2); i < n; ++i) {
      CharacteristicDecl c;
      c.id = fresh("ch");
      c.x_param = "x";
      if (coin()) {
        c.y_param = "y";
        if (coin()) c.lower = points();
        if (!c.lower || coin()) c.upper = points();
      } else {
        c.upper = points();
      }
      f.decls.emplace_back(c);
    }
    for (int i = 0, n = pick(0, 2); i < n; ++i) {
      MetricDecl m;
      m.id = fresh("m");
      m.base_fn = pick_of<std::string>({"AVERAGE", "MINIMUM", "MAXIMUM", "SUM", "COUNT", "STDDEV"});
      m.context = sensors.front();
      m.quantization = pick_of({Quantization::Day, Quantization::Week, Quantization::Month,
                                Quantization::Quarter, Quantization::Year});
      if (coin()) m.coverage = pick(0, 100) / 100.0;
      f.decls.emplace_back(m);
    }
    for (int i = 0, n = pick(0, 2); i < n; ++i) {
      ApplyDecl a;
      a.template_id = template_;
      a.instance_id = fresh("inst");
      for (const auto& p : template_params_) a.bindings.emplace_back(p, sensors.front());
      f.decls.emplace_back(a);
    }
    return f;
  }

 private:
  int pick(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  bool coin() { return pick(0, 1) == 1; }
  template <typename T>
  T pick_of(std::initializer_list<T> xs) {
    return *(xs.begin() + pick(0, static_cast<int>(xs.size()) - 1));
  }
  std::string fresh(const std::string& prefix) {
    const std::string id = prefix + std::to_string(++counter_);
    names_.push_back(id);
    return id;
  }

  std::vector<std::string> params() {
    std::vector<std::string> out;
    for (int i = 0, n = pick(1, 3); i < n; ++i) out.push_back("p" + std::to_string(i));
    return out;
  }

  double literal() {
    switch (pick(0, 3)) {
      case 0: return pick(0, 100);
      case 1: return pick(0, 10000) / 100.0;
      case 2: return std::uniform_real_distribution<double>(0.0, 1e6)(rng_);
      default: return 0.1 * pick(0, 50);
    }
  }

  std::vector<enav::lang::Point> points() {
    std::vector<enav::lang::Point> out;
    double x = pick(0, 10);
    for (int i = 0, n = pick(2, 5); i < n; ++i) {
      out.push_back({x, literal()});
      x += pick(1, 20) + 0.5 * pick(0, 1);
    }
    return out;
  }

  enav::lang::TimeRange range() {
    using namespace enav::lang;
    TimeRange r;
    std::vector<CalendarField> fields = {CalendarField::Year,   CalendarField::Month,  CalendarField::Day,
                                         CalendarField::Hour,   CalendarField::Minute, CalendarField::Second,
                                         CalendarField::Weekday};
    std::shuffle(fields.begin(), fields.end(), rng_);
    for (int i = 0, n = pick(1, 3); i < n; ++i) {
      FieldPattern p;
      p.field = fields[static_cast<std::size_t>(i)];
      const auto [lo, hi] = field_bounds(p.field);
      int at = lo;
      for (int k = 0, ns = pick(1, 3); k < ns && at <= hi; ++k) {
        const int a = std::min(hi, at + pick(0, 3));
        const int b = std::min(hi, a + pick(0, 4));
        p.spans.push_back({a, b});
        at = b + 2;
      }
      r.fields.push_back(p);
    }
    return r;
  }

  enav::lang::Expr leaf(enav::lang::ExprType t) {
    using namespace enav::lang;
    if (t == ExprType::Numeric) {
      if (coin()) return Expr::name_ref(params_[static_cast<std::size_t>(pick(0, static_cast<int>(params_.size()) - 1))]);
      return Expr::number_lit(literal(), coin() ? "" : pick_of<std::string>({"degC", "bar", "m3/h"}));
    }
    if (!routines_.empty() && pick(0, 2) == 0) {
      return Expr::name_ref(routines_[static_cast<std::size_t>(pick(0, static_cast<int>(routines_.size()) - 1))]);
    }
    return Expr::bool_lit(coin());
  }

  enav::lang::Expr expr(enav::lang::ExprType t, int depth) {
    using namespace enav::lang;
    if (depth == 0 || pick(0, 4) == 0) return leaf(t);
    const auto N = ExprType::Numeric;
    const auto B = ExprType::Boolean;
    if (t == N) {
      switch (pick(0, 3)) {
        case 0:
          return Expr::binary_op(pick_of({BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul, BinaryOp::Div}),
                                 expr(N, depth - 1), expr(N, depth - 1));
        case 1: return Expr::unary_op(UnaryOp::Negate, expr(N, depth - 1));
        case 2: return Expr::conditional(expr(B, depth - 1), expr(N, depth - 1), expr(N, depth - 1));
        default: {
          std::vector<Expr> args;
          const std::string fn = pick_of<std::string>({"MIN", "MAX", "ABS", "AVERAGE", "SUM"});
          for (int i = 0, n = fn == "ABS" ? 1 : pick(1, 3); i < n; ++i) args.push_back(expr(N, depth - 1));
          return Expr::call(fn, std::move(args));
        }
      }
    }
    switch (pick(0, 3)) {
      case 0:
        return Expr::binary_op(pick_of({BinaryOp::And, BinaryOp::Or, BinaryOp::Implies}), expr(B, depth - 1),
                               expr(B, depth - 1));
      case 1: return Expr::unary_op(UnaryOp::Not, expr(B, depth - 1));
      case 2: return Expr::conditional(expr(B, depth - 1), expr(B, depth - 1), expr(B, depth - 1));
      default:
        return Expr::binary_op(
            pick_of({BinaryOp::Lt, BinaryOp::Le, BinaryOp::Gt, BinaryOp::Ge, BinaryOp::Eq, BinaryOp::Ne}),
            expr(N, depth - 1), expr(N, depth - 1));
    }
  }

  std::mt19937 rng_;
  int counter_ = 0;
  std::vector<std::string> names_;
  std::vector<std::string> params_;
  std::vector<std::string> routines_;
  std::string template_;
  std::vector<std::string> template_params_;
};

}  // namespace enav::test
