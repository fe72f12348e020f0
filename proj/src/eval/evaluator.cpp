#include "enav/eval/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include <fmt/format.h>

#include "enav/error.hpp"
#include "enav/eval/logic.hpp"
#include "enav/lang/format.hpp"

namespace enav::eval {

std::string_view to_string(BoolValue v) {
  switch (v) {
    case BoolValue::True: return "TRUE";
    case BoolValue::False: return "FALSE";
    case BoolValue::Missing: return "MISSING";
    case BoolValue::Undefined: return "UNDEFINED";
  }
  return "?";
}

BoolValue to_bool(const Sample& s) {
  switch (s.quality) {
    case Quality::Valid: return s.value != 0.0 ? BoolValue::True : BoolValue::False;
    case Quality::Missing: return BoolValue::Missing;
    case Quality::Undefined: return BoolValue::Undefined;
  }
  return BoolValue::Undefined;
}

Sample to_sample(BoolValue v) {
  switch (v) {
    case BoolValue::True: return Sample::valid(1.0);
    case BoolValue::False: return Sample::valid(0.0);
    case BoolValue::Missing: return Sample::missing();
    case BoolValue::Undefined: return Sample::undefined();
  }
  return Sample::undefined();
}

std::optional<double> interpolate(const std::vector<lang::Point>& pts, double x) {
  if (pts.empty() || std::isnan(x) || x < pts.front().x || x > pts.back().x) return std::nullopt;
  const auto hi = std::lower_bound(pts.begin(), pts.end(), x,
                                   [](const lang::Point& p, double v) { return p.x < v; });
  if (hi->x == x) return hi->y;
  const auto lo = hi - 1;
  return lo->y + (hi->y - lo->y) * (x - lo->x) / (hi->x - lo->x);
}

namespace {

bool own_ranges_match(const lang::TimeRoutineDecl& tr, const CivilTime& ct) {
  for (const auto& range : tr.ranges) {
    bool all = true;
    for (const auto& fp : range.fields) {
      int v = 0;
      switch (fp.field) {
        case lang::CalendarField::Year: v = ct.year; break;
        case lang::CalendarField::Month: v = ct.month; break;
        case lang::CalendarField::Day: v = ct.day; break;
        case lang::CalendarField::Hour: v = ct.hour; break;
        case lang::CalendarField::Minute: v = ct.minute; break;
        case lang::CalendarField::Second: v = ct.second; break;
        case lang::CalendarField::Weekday: v = ct.weekday; break;
      }
      const bool hit = std::any_of(fp.spans.begin(), fp.spans.end(),
                                   [v](const lang::ValueSpan& s) { return s.lo <= v && v <= s.hi; });
      if (!hit) {
        all = false;
        break;
      }
    }
    if (all) return true;
  }
  return false;
}

const lang::TimeRoutineDecl& routine_named(const lang::SpecModel* model, const std::string& id) {
  const lang::TimeRoutineDecl* r = model ? model->find_as<lang::TimeRoutineDecl>(id) : nullptr;
  if (!r) throw Error(ErrorCode::UnresolvedReference, fmt::format("unknown time routine '{}'", id));
  return *r;
}

bool member(const lang::TimeRoutineDecl& tr, const CivilTime& ct, const lang::SpecModel* model) {
  bool in = own_ranges_match(tr, ct);
  for (std::size_t i = 0; !in && i < tr.includes.size(); ++i) {
    in = member(routine_named(model, tr.includes[i]), ct, model);
  }
  if (!in) return false;
  for (const auto& ex : tr.excludes) {
    if (member(routine_named(model, ex), ct, model)) return false;
  }
  return true;
}

using Column = std::vector<Sample>;

struct Value {
  std::shared_ptr<const Column> col;
  bool boolean = false;
};

using Env = std::map<std::string, Value>;

Sample arith(lang::BinaryOp op, const Sample& a, const Sample& b) {
  if (a.quality == Quality::Undefined || b.quality == Quality::Undefined) return Sample::undefined();
  if (a.quality == Quality::Missing || b.quality == Quality::Missing) return Sample::missing();
  switch (op) {
    case lang::BinaryOp::Add: return Sample::valid(a.value + b.value);
    case lang::BinaryOp::Sub: return Sample::valid(a.value - b.value);
    case lang::BinaryOp::Mul: return Sample::valid(a.value * b.value);
    case lang::BinaryOp::Div:
      if (b.value == 0.0) return Sample::undefined();
      return Sample::valid(a.value / b.value);
    default: return Sample::undefined();
  }
}

BoolValue compare(lang::BinaryOp op, const Sample& a, const Sample& b, double eps) {
  if (a.quality == Quality::Undefined || b.quality == Quality::Undefined) return BoolValue::Undefined;
  if (a.quality == Quality::Missing || b.quality == Quality::Missing) return BoolValue::Missing;
  bool r = false;
  switch (op) {
    case lang::BinaryOp::Lt: r = a.value < b.value; break;
    case lang::BinaryOp::Le: r = a.value <= b.value; break;
    case lang::BinaryOp::Gt: r = a.value > b.value; break;
    case lang::BinaryOp::Ge: r = a.value >= b.value; break;
    case lang::BinaryOp::Eq: r = std::fabs(a.value - b.value) <= eps; break;
    case lang::BinaryOp::Ne: r = !(std::fabs(a.value - b.value) <= eps); break;
    default: return BoolValue::Undefined;
  }
  return r ? BoolValue::True : BoolValue::False;
}

// Depth offset for nodes inside called declarations; those are not traced.
constexpr int kCallee = 1 << 20;

class Engine {
 public:
  explicit Engine(const EvalContext& ctx) : ctx_(ctx), n_(ctx.grid.count) {}

  Env top_env() const {
    Env env;
    for (const auto& [name, s] : ctx_.inputs) {
      if (!s) continue;
      if (!(s->grid() == ctx_.grid)) {
        throw Error(ErrorCode::GridMismatch,
                    fmt::format("series '{}' (period {} s, start {}, {} samples) is not on the evaluation grid "
                                "(period {} s, start {}, {} samples)",
                                name, s->grid().period, format_iso8601_utc(s->grid().start), s->grid().count,
                                ctx_.grid.period, format_iso8601_utc(ctx_.grid.start), ctx_.grid.count));
      }
      // Non-owning view; inputs outlive the evaluation.
      env[name] = Value{std::shared_ptr<const Column>(std::shared_ptr<const Column>(), &s->samples()),
                        s->kind() == SeriesKind::Boolean};
    }
    return env;
  }

  Value eval(const lang::Expr& e, const Env& env, int depth) {
    Value v = eval_node(e, env, depth);
    if (ctx_.trace && depth < kCallee) {
      ctx_.trace->emplace_back(lang::format(e),
                               Series(lang::format(e), ctx_.grid,
                                      v.boolean ? SeriesKind::Boolean : SeriesKind::Numeric, *v.col));
    }
    return v;
  }

  Value routine(const std::string& id) {
    if (const auto it = routines_.find(id); it != routines_.end()) return it->second;
    const Series s = eval_timeroutine(routine_named(ctx_.model, id), ctx_.grid, ctx_.tz, ctx_.model);
    Value v{std::make_shared<const Column>(s.samples()), true};
    routines_[id] = v;
    return v;
  }

  Value apply_rule(const lang::RuleDecl& rule, const Env& env, int depth) {
    Value body = eval(rule.body, env, depth);
    if (!rule.when) return body;
    const Value mask = routine(*rule.when);
    auto out = std::make_shared<Column>(*body.col);
    for (std::size_t i = 0; i < n_; ++i) {
      if ((*mask.col)[i].value == 0.0) (*out)[i] = Sample::valid(1.0);
    }
    return {out, true};
  }

  Value apply_characteristic(const lang::CharacteristicDecl& ch, const Column& x, const Column* y) {
    auto out = std::make_shared<Column>(n_);
    if (!ch.is_rule()) {
      const auto& pts = ch.lower ? *ch.lower : *ch.upper;
      for (std::size_t i = 0; i < n_; ++i) {
        if (x[i].quality != Quality::Valid) {
          (*out)[i] = x[i].quality == Quality::Missing ? Sample::missing() : Sample::undefined();
          continue;
        }
        const auto v = interpolate(pts, x[i].value);
        (*out)[i] = v ? Sample::valid(*v) : Sample::undefined();
      }
      return {out, false};
    }
    for (std::size_t i = 0; i < n_; ++i) {
      const Sample& a = x[i];
      const Sample& b = (*y)[i];
      if (a.quality == Quality::Undefined || b.quality == Quality::Undefined) {
        (*out)[i] = Sample::undefined();
        continue;
      }
      if (a.quality == Quality::Missing || b.quality == Quality::Missing) {
        (*out)[i] = Sample::missing();
        continue;
      }
      double lo = -std::numeric_limits<double>::infinity();
      double hi = std::numeric_limits<double>::infinity();
      bool defined = true;
      if (ch.lower) {
        const auto v = interpolate(*ch.lower, a.value);
        defined = defined && v.has_value();
        if (v) lo = *v;
      }
      if (ch.upper) {
        const auto v = interpolate(*ch.upper, a.value);
        defined = defined && v.has_value();
        if (v) hi = *v;
      }
      if (!defined) {
        (*out)[i] = Sample::undefined();
        continue;
      }
      const bool ok = lo - ctx_.eps <= b.value && b.value <= hi + ctx_.eps;
      (*out)[i] = to_sample(ok ? BoolValue::True : BoolValue::False);
    }
    return {out, true};
  }

 private:
  Value eval_node(const lang::Expr& e, const Env& env, int depth) {
    using lang::ExprKind;
    switch (e.kind) {
      case ExprKind::Number:
        return {std::make_shared<const Column>(n_, Sample::valid(e.number)), false};
      case ExprKind::Bool:
        return {std::make_shared<const Column>(n_, Sample::valid(e.number != 0.0 ? 1.0 : 0.0)), true};
      case ExprKind::RoutineRef:
        return routine(e.name);
      case ExprKind::Name:
      case ExprKind::Param:
      case ExprKind::SensorRef: {
        if (const auto it = env.find(e.name); it != env.end()) return it->second;
        if (ctx_.model && ctx_.model->find_as<lang::TimeRoutineDecl>(e.name)) return routine(e.name);
        throw Error(ErrorCode::UnresolvedReference, fmt::format("no series bound to '{}'", e.name));
      }
      case ExprKind::Unary: {
        const Value a = eval(e.args[0], env, depth + 1);
        auto out = std::make_shared<Column>(n_);
        if (e.unary == lang::UnaryOp::Not) {
          for (std::size_t i = 0; i < n_; ++i) (*out)[i] = to_sample(logic_not(to_bool((*a.col)[i])));
          return {out, true};
        }
        for (std::size_t i = 0; i < n_; ++i) {
          const Sample& s = (*a.col)[i];
          (*out)[i] = s.quality == Quality::Valid ? Sample::valid(-s.value) : s;
        }
        return {out, false};
      }
      case ExprKind::Binary: {
        const Value a = eval(e.args[0], env, depth + 1);
        const Value b = eval(e.args[1], env, depth + 1);
        auto out = std::make_shared<Column>(n_);
        const Column& ca = *a.col;
        const Column& cb = *b.col;
        if (lang::is_logical(e.binary)) {
          for (std::size_t i = 0; i < n_; ++i) {
            const BoolValue x = to_bool(ca[i]);
            const BoolValue y = to_bool(cb[i]);
            BoolValue r = BoolValue::Undefined;
            if (e.binary == lang::BinaryOp::And) r = logic_and(x, y);
            if (e.binary == lang::BinaryOp::Or) r = logic_or(x, y);
            if (e.binary == lang::BinaryOp::Implies) r = logic_implies(x, y);
            (*out)[i] = to_sample(r);
          }
          return {out, true};
        }
        if (lang::is_comparison(e.binary)) {
          for (std::size_t i = 0; i < n_; ++i) (*out)[i] = to_sample(compare(e.binary, ca[i], cb[i], ctx_.eps));
          return {out, true};
        }
        for (std::size_t i = 0; i < n_; ++i) (*out)[i] = arith(e.binary, ca[i], cb[i]);
        return {out, false};
      }
      case ExprKind::Conditional: {
        const Value c = eval(e.args[0], env, depth + 1);
        const Value a = eval(e.args[1], env, depth + 1);
        const Value b = eval(e.args[2], env, depth + 1);
        auto out = std::make_shared<Column>(n_);
        for (std::size_t i = 0; i < n_; ++i) {
          switch (to_bool((*c.col)[i])) {
            case BoolValue::True: (*out)[i] = (*a.col)[i]; break;
            case BoolValue::False: (*out)[i] = (*b.col)[i]; break;
            case BoolValue::Missing: (*out)[i] = Sample::missing(); break;
            case BoolValue::Undefined: (*out)[i] = Sample::undefined(); break;
          }
        }
        return {out, a.boolean};
      }
      case ExprKind::Call:
        return call(e, env, depth);
    }
    throw Error(ErrorCode::InvalidArgument, "unknown expression node");
  }

  Value call(const lang::Expr& e, const Env& env, int depth) {
    std::vector<Value> args;
    for (const auto& a : e.args) args.push_back(eval(a, env, depth + 1));
    const lang::Decl* d = ctx_.model ? ctx_.model->find(e.name) : nullptr;
    if (d) {
      const std::vector<std::string> params = lang::decl_params(*d);
      if (params.size() != args.size()) {
        throw Error(ErrorCode::TypeMismatch,
                    fmt::format("'{}' expects {} argument(s), got {}", e.name, params.size(), args.size()));
      }
      if (const auto* ch = std::get_if<lang::CharacteristicDecl>(d)) {
        return apply_characteristic(*ch, *args[0].col, args.size() > 1 ? args[1].col.get() : nullptr);
      }
      Env callee;
      for (std::size_t i = 0; i < params.size(); ++i) callee[params[i]] = args[i];
      if (const auto* fn = std::get_if<lang::FunctionDecl>(d)) return eval(fn->body, callee, depth + kCallee);
      if (const auto* rule = std::get_if<lang::RuleDecl>(d)) return apply_rule(*rule, callee, depth + kCallee);
      throw Error(ErrorCode::UnresolvedReference, fmt::format("'{}' cannot be called", e.name));
    }
    return builtin(e.name, args);
  }

  Value builtin(const std::string& name, const std::vector<Value>& args) {
    if (args.empty()) throw Error(ErrorCode::TypeMismatch, fmt::format("'{}' needs arguments", name));
    auto out = std::make_shared<Column>(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      bool undefined = false;
      bool missing = false;
      for (const auto& a : args) {
        undefined = undefined || (*a.col)[i].quality == Quality::Undefined;
        missing = missing || (*a.col)[i].quality == Quality::Missing;
      }
      if (undefined) {
        (*out)[i] = Sample::undefined();
        continue;
      }
      if (missing) {
        (*out)[i] = Sample::missing();
        continue;
      }
      double acc = (*args[0].col)[i].value;
      if (name == "ABS") {
        acc = std::fabs(acc);
      } else if (name == "MIN" || name == "MINIMUM") {
        for (std::size_t k = 1; k < args.size(); ++k) acc = std::min(acc, (*args[k].col)[i].value);
      } else if (name == "MAX" || name == "MAXIMUM") {
        for (std::size_t k = 1; k < args.size(); ++k) acc = std::max(acc, (*args[k].col)[i].value);
      } else if (name == "SUM" || name == "AVERAGE") {
        for (std::size_t k = 1; k < args.size(); ++k) acc += (*args[k].col)[i].value;
        if (name == "AVERAGE") acc /= static_cast<double>(args.size());
      } else {
        throw Error(ErrorCode::UnresolvedReference, fmt::format("unknown function '{}'", name));
      }
      (*out)[i] = Sample::valid(acc);
    }
    return {out, false};
  }

  const EvalContext& ctx_;
  std::size_t n_;
  std::map<std::string, Value> routines_;
};

Series to_series(const std::string& id, const TimeGrid& grid, const Value& v) {
  return Series(id, grid, v.boolean ? SeriesKind::Boolean : SeriesKind::Numeric, *v.col);
}

}  // namespace

bool routine_matches(const lang::TimeRoutineDecl& tr, const CivilTime& ct) { return own_ranges_match(tr, ct); }

Series eval_timeroutine(const lang::TimeRoutineDecl& tr, const TimeGrid& grid, const TimeZone& tz,
                        const lang::SpecModel* model) {
  Series out(tr.id, grid, SeriesKind::Boolean);
  CivilClock clock(tz);
  auto& s = out.mutable_samples();
  for (std::size_t i = 0; i < grid.count; ++i) {
    s[i] = Sample::valid(member(tr, clock(grid.timestamp(i)), model) ? 1.0 : 0.0);
  }
  return out;
}

Series eval_expr(const lang::Expr& e, const EvalContext& ctx) {
  Engine engine(ctx);
  return to_series(lang::format(e), ctx.grid, engine.eval(e, engine.top_env(), 0));
}

Series eval_function(const lang::FunctionDecl& fn, const EvalContext& ctx) {
  Engine engine(ctx);
  Value v = engine.eval(fn.body, engine.top_env(), 0);
  v.boolean = false;
  return to_series(fn.id, ctx.grid, v);
}

Series eval_rule(const lang::RuleDecl& rule, const EvalContext& ctx) {
  Engine engine(ctx);
  Value v = engine.apply_rule(rule, engine.top_env(), 0);
  v.boolean = true;
  return to_series(rule.id, ctx.grid, v);
}

Series eval_characteristic(const lang::CharacteristicDecl& ch, const EvalContext& ctx) {
  Engine engine(ctx);
  const Env env = engine.top_env();
  auto column = [&](const std::string& name) -> const Column& {
    const auto it = env.find(name);
    if (it == env.end()) throw Error(ErrorCode::UnresolvedReference, fmt::format("no series bound to '{}'", name));
    return *it->second.col;
  };
  const Column& x = column(ch.x_param);
  const Column* y = ch.y_param ? &column(*ch.y_param) : nullptr;
  return to_series(ch.id, ctx.grid, engine.apply_characteristic(ch, x, y));
}

Series eval_instance(const lang::Instance& inst, const lang::SpecModel& model,
                     const std::map<std::string, const Series*>& inputs, const TimeGrid& grid,
                     const TimeZone& tz, double eps, std::vector<std::pair<std::string, Series>>* trace) {
  EvalContext ctx;
  ctx.grid = grid;
  ctx.model = &model;
  ctx.tz = tz;
  ctx.eps = eps;
  ctx.trace = trace;
  for (const auto& [formal, actual] : inst.binding) {
    const auto it = inputs.find(actual);
    if (it == inputs.end() || !it->second) {
      throw Error(ErrorCode::UnknownSensor, fmt::format("no data for '{}' bound to '{}'", actual, formal));
    }
    ctx.inputs[actual] = it->second;
  }
  Series out = std::visit(
      [&](const auto& d) -> Series {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, lang::FunctionDecl>) {
          return eval_function(d, ctx);
        } else if constexpr (std::is_same_v<T, lang::RuleDecl>) {
          return eval_rule(d, ctx);
        } else if constexpr (std::is_same_v<T, lang::CharacteristicDecl>) {
          return eval_characteristic(d, ctx);
        } else {
          throw Error(ErrorCode::InvalidArgument, fmt::format("'{}' is not evaluable", inst.id));
        }
      },
      inst.artifact);
  out.set_sensor_id(inst.virtual_sensor_id());
  return out;
}

}  // namespace enav::eval
