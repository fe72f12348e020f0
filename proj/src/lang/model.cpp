#include "enav/lang/model.hpp"

#include <algorithm>
#include <array>
#include <functional>

#include <fmt/format.h>

namespace enav::lang {

std::optional<Aggregate> metric_aggregate(std::string_view name) {
  if (name == "AVERAGE") return Aggregate::Average;
  if (name == "MINIMUM") return Aggregate::Minimum;
  if (name == "MAXIMUM") return Aggregate::Maximum;
  if (name == "SUM") return Aggregate::Sum;
  if (name == "COUNT") return Aggregate::Count;
  if (name == "STDDEV") return Aggregate::StdDev;
  return std::nullopt;
}

bool is_expression_builtin(std::string_view name) {
  static constexpr std::array<std::string_view, 7> kNames = {"MIN", "MAX", "ABS", "AVERAGE",
                                                             "SUM", "MAXIMUM", "MINIMUM"};
  return std::find(kNames.begin(), kNames.end(), name) != kNames.end();
}

SeriesKind sensor_kind(const SensorDecl& s) {
  return (s.unit == "bool" || s.unit == "boolean") ? SeriesKind::Boolean : SeriesKind::Numeric;
}

std::string Instance::virtual_sensor_id() const {
  return (kind == SeriesKind::Boolean ? "rule:" : "fn:") + id;
}

const Decl* SpecModel::find(const std::string& id) const {
  const auto it = artifacts.find(id);
  return it == artifacts.end() ? nullptr : &it->second;
}

bool SpecModel::is_instance(const std::string& id) const {
  return find_as<ApplyDecl>(id) != nullptr;
}

std::optional<Duration> SpecModel::period_of(const std::string& id) const {
  if (const auto it = sensors.find(id); it != sensors.end()) return it->second.period;
  if (const auto it = instances.find(id); it != instances.end() && it->second.period > 0) return it->second.period;
  return std::nullopt;
}

std::optional<SeriesKind> SpecModel::kind_of(const std::string& id) const {
  if (const auto it = sensors.find(id); it != sensors.end()) return sensor_kind(it->second);
  if (const auto it = instances.find(id); it != instances.end()) return it->second.kind;
  return std::nullopt;
}

std::vector<std::string> SpecModel::topological_order() const {
  std::vector<std::string> out;
  std::set<std::string> seen;
  std::function<void(const std::string&)> visit = [&](const std::string& id) {
    if (!artifacts.count(id) || broken.count(id) || !seen.insert(id).second) return;
    if (const auto it = dependencies.find(id); it != dependencies.end()) {
      for (const auto& dep : it->second) visit(dep);
    }
    out.push_back(id);
  };
  for (const auto& [id, decl] : artifacts) visit(id);
  return out;
}

Fragment SpecModel::workspace_fragment() const {
  Fragment f;
  for (const auto& id : order) {
    const auto o = origin.find(id);
    if (o == origin.end() || o->second != Origin::Workspace) continue;
    if (const auto s = sensors.find(id); s != sensors.end()) {
      f.decls.emplace_back(s->second);
    } else if (const Decl* d = find(id)) {
      f.decls.push_back(*d);
    }
  }
  return f;
}

namespace {

std::string where(const SourceSpan& s) { return fmt::format("{}:{}:{}", s.file, s.line, s.column); }

Diagnostic error(ErrorCode code, std::string msg, const SourceSpan& span) {
  return {Severity::Error, code, std::move(msg), span};
}

Diagnostic warning(ErrorCode code, std::string msg, const SourceSpan& span) {
  return {Severity::Warning, code, std::move(msg), span};
}

void sort_diagnostics(std::vector<Diagnostic>& diags) {
  std::stable_sort(diags.begin(), diags.end(), [](const Diagnostic& a, const Diagnostic& b) {
    return std::tie(a.span.file, a.span.line, a.span.column, a.message) <
           std::tie(b.span.file, b.span.line, b.span.column, b.message);
  });
  diags.erase(std::unique(diags.begin(), diags.end(),
                          [](const Diagnostic& a, const Diagnostic& b) {
                            return a.message == b.message && a.span.file == b.span.file &&
                                   a.span.line == b.span.line && a.span.column == b.span.column;
                          }),
              diags.end());
}

// Binds names inside a body and records artifact dependencies.
class Binder {
 public:
  Binder(const SpecModel& m, std::vector<Diagnostic>& diags) : m_(m), diags_(diags) {}

  bool bind(Expr& e, const std::vector<std::string>& params, std::set<std::string>& deps) {
    bool ok = true;
    switch (e.kind) {
      case ExprKind::Name:
      case ExprKind::Param:
      case ExprKind::RoutineRef:
        if (std::find(params.begin(), params.end(), e.name) != params.end()) {
          e.kind = ExprKind::Param;
        } else if (m_.find_as<TimeRoutineDecl>(e.name)) {
          e.kind = ExprKind::RoutineRef;
          deps.insert(e.name);
        } else if (m_.is_sensor(e.name)) {
          diags_.push_back(error(ErrorCode::UnresolvedReference,
                                 fmt::format("sensor '{}' used directly; declarations must take sensors as "
                                             "parameters and be bound with 'apply'",
                                             e.name),
                                 e.span));
          ok = false;
        } else {
          diags_.push_back(error(ErrorCode::UnresolvedReference,
                                 fmt::format("unresolved name '{}'", e.name), e.span));
          ok = false;
        }
        break;
      case ExprKind::Call:
        if (const Decl* d = m_.find(e.name)) {
          if (std::holds_alternative<FunctionDecl>(*d) || std::holds_alternative<RuleDecl>(*d) ||
              std::holds_alternative<CharacteristicDecl>(*d)) {
            deps.insert(e.name);
          } else {
            diags_.push_back(error(ErrorCode::UnresolvedReference,
                                   fmt::format("{} '{}' cannot be called", decl_kind_name(*d), e.name), e.span));
            ok = false;
          }
        } else if (!is_expression_builtin(e.name)) {
          diags_.push_back(error(ErrorCode::UnresolvedReference,
                                 fmt::format("unresolved function or rule '{}'", e.name), e.span));
          ok = false;
        }
        break;
      default:
        break;
    }
    for (Expr& a : e.args) ok = bind(a, params, deps) && ok;
    return ok;
  }

 private:
  const SpecModel& m_;
  std::vector<Diagnostic>& diags_;
};

bool bindable_value(const SpecModel& m, const std::string& id) {
  return m.is_sensor(id) || m.is_instance(id);
}

void propagate_broken(SpecModel& m, std::vector<Diagnostic>& diags) {
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& [id, deps] : m.dependencies) {
      if (m.broken.count(id)) continue;
      for (const auto& dep : deps) {
        if (m.broken.count(dep)) {
          m.broken.insert(id);
          const Decl* d = m.find(id);
          diags.push_back(warning(ErrorCode::UnresolvedReference,
                                  fmt::format("'{}' skipped: depends on invalid '{}'", id, dep),
                                  d ? decl_span(*d) : SourceSpan{}));
          changed = true;
          break;
        }
      }
    }
  }
}

void detect_cycles(SpecModel& m, std::vector<Diagnostic>& diags) {
  enum class Color { White, Grey, Black };
  std::map<std::string, Color> color;
  std::vector<std::string> stack;
  std::set<std::vector<std::string>> reported;
  std::function<void(const std::string&)> dfs = [&](const std::string& id) {
    color[id] = Color::Grey;
    stack.push_back(id);
    if (const auto it = m.dependencies.find(id); it != m.dependencies.end()) {
      for (const auto& dep : it->second) {
        if (!m.artifacts.count(dep)) continue;
        const Color c = color.count(dep) ? color[dep] : Color::White;
        if (c == Color::White) {
          dfs(dep);
        } else if (c == Color::Grey) {
          const auto from = std::find(stack.begin(), stack.end(), dep);
          std::vector<std::string> cycle(from, stack.end());
          std::vector<std::string> key = cycle;
          std::rotate(key.begin(), std::min_element(key.begin(), key.end()), key.end());
          if (!reported.insert(key).second) continue;
          std::string path;
          for (const auto& n : cycle) path += n + " -> ";
          path += cycle.front();
          const Decl* d = m.find(cycle.front());
          diags.push_back(error(ErrorCode::CyclicReference, "cyclic reference: " + path,
                                d ? decl_span(*d) : SourceSpan{}));
          for (const auto& n : cycle) m.broken.insert(n);
        }
      }
    }
    stack.pop_back();
    color[id] = Color::Black;
  };
  for (const auto& [id, decl] : m.artifacts) {
    if (!color.count(id)) dfs(id);
  }
}

// Union-find over type variables; roots may be bound to a concrete type.
class Inference {
 public:
  Inference() {
    numeric_ = fresh(ExprType::Numeric);
    boolean_ = fresh(ExprType::Boolean);
  }

  int fresh(ExprType t = ExprType::Unknown) {
    parent_.push_back(static_cast<int>(parent_.size()));
    type_.push_back(t);
    return parent_.back();
  }
  int numeric() const { return numeric_; }
  int boolean() const { return boolean_; }
  int of(ExprType t) { return t == ExprType::Numeric ? numeric_ : t == ExprType::Boolean ? boolean_ : fresh(); }

  int find(int v) {
    while (parent_[static_cast<std::size_t>(v)] != v) {
      parent_[static_cast<std::size_t>(v)] = parent_[static_cast<std::size_t>(parent_[static_cast<std::size_t>(v)])];
      v = parent_[static_cast<std::size_t>(v)];
    }
    return v;
  }
  ExprType type(int v) { return type_[static_cast<std::size_t>(find(v))]; }

  bool unify(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return true;
    const ExprType ta = type_[static_cast<std::size_t>(a)];
    const ExprType tb = type_[static_cast<std::size_t>(b)];
    if (ta != ExprType::Unknown && tb != ExprType::Unknown && ta != tb) return false;
    if (ta == ExprType::Unknown) {
      parent_[static_cast<std::size_t>(a)] = b;
    } else {
      parent_[static_cast<std::size_t>(b)] = a;
    }
    return true;
  }

 private:
  std::vector<int> parent_;
  std::vector<ExprType> type_;
  int numeric_ = 0;
  int boolean_ = 0;
};

class Typer {
 public:
  Typer(const SpecModel& m, std::vector<Diagnostic>& diags, std::vector<std::string> params)
      : m_(m), diags_(diags), params_(std::move(params)) {
    for (std::size_t i = 0; i < params_.size(); ++i) param_vars_.push_back(inf_.fresh());
  }

  int visit(Expr& e) {
    const int v = infer(e);
    nodes_.emplace_back(&e, v);
    return v;
  }

  bool expect(int v, ExprType want, const Expr& at, std::string_view context = {}) {
    if (inf_.unify(v, inf_.of(want))) return true;
    const ExprType found = want == ExprType::Numeric ? ExprType::Boolean : ExprType::Numeric;
    diags_.push_back(error(ErrorCode::TypeMismatch,
                           fmt::format("type mismatch{}{}: expected {}, found {}", context.empty() ? "" : " in ",
                                       context, to_string(want), to_string(found)),
                           at.span));
    ok_ = false;
    return false;
  }

  // Finalizes node and parameter types; unconstrained parameters are NUMERIC.
  std::vector<ExprType> finish() {
    std::vector<ExprType> out;
    for (const int v : param_vars_) {
      if (inf_.type(v) == ExprType::Unknown) inf_.unify(v, inf_.numeric());
      out.push_back(inf_.type(v));
    }
    for (auto& [node, v] : nodes_) {
      if (inf_.type(v) == ExprType::Unknown) inf_.unify(v, inf_.numeric());
      node->type = inf_.type(v);
    }
    return out;
  }

  bool ok() const { return ok_; }

 private:
  int infer(Expr& e) {
    switch (e.kind) {
      case ExprKind::Number:
        return inf_.numeric();
      case ExprKind::Bool:
      case ExprKind::RoutineRef:
        return inf_.boolean();
      case ExprKind::Name:
      case ExprKind::Param: {
        const auto it = std::find(params_.begin(), params_.end(), e.name);
        if (it == params_.end()) return inf_.fresh();
        return param_vars_[static_cast<std::size_t>(it - params_.begin())];
      }
      case ExprKind::SensorRef: {
        const auto k = m_.kind_of(e.name);
        return k == SeriesKind::Boolean ? inf_.boolean() : inf_.numeric();
      }
      case ExprKind::Unary: {
        const int a = visit(e.args[0]);
        if (e.unary == UnaryOp::Not) {
          expect(a, ExprType::Boolean, e.args[0], "operand of 'not'");
          return inf_.boolean();
        }
        expect(a, ExprType::Numeric, e.args[0], "operand of unary '-'");
        return inf_.numeric();
      }
      case ExprKind::Binary: {
        const int a = visit(e.args[0]);
        const int b = visit(e.args[1]);
        const std::string ctx = fmt::format("operand of '{}'", to_string(e.binary));
        if (is_logical(e.binary)) {
          expect(a, ExprType::Boolean, e.args[0], ctx);
          expect(b, ExprType::Boolean, e.args[1], ctx);
          return inf_.boolean();
        }
        expect(a, ExprType::Numeric, e.args[0], ctx);
        expect(b, ExprType::Numeric, e.args[1], ctx);
        return is_comparison(e.binary) ? inf_.boolean() : inf_.numeric();
      }
      case ExprKind::Conditional: {
        const int c = visit(e.args[0]);
        expect(c, ExprType::Boolean, e.args[0], "condition of 'if'");
        const int a = visit(e.args[1]);
        const int b = visit(e.args[2]);
        if (!inf_.unify(a, b)) {
          diags_.push_back(error(ErrorCode::TypeMismatch,
                                 fmt::format("branches of 'if' differ: then is {}, else is {}",
                                             to_string(inf_.type(a)), to_string(inf_.type(b))),
                                 e.span));
          ok_ = false;
        }
        return a;
      }
      case ExprKind::Call:
        return call(e);
    }
    return inf_.fresh();
  }

  int call(Expr& e) {
    std::vector<int> args;
    for (Expr& a : e.args) args.push_back(visit(a));
    const Decl* d = m_.find(e.name);
    if (!d) {
      // Builtin.
      const bool unary = e.name == "ABS";
      if ((unary && args.size() != 1) || args.empty()) {
        arity_error(e, unary ? "1" : "at least 1");
        return inf_.numeric();
      }
      for (std::size_t i = 0; i < args.size(); ++i) {
        expect(args[i], ExprType::Numeric, e.args[i], "argument of " + e.name);
      }
      return inf_.numeric();
    }
    const auto sig = m_.signatures.find(e.name);
    if (sig == m_.signatures.end()) {
      // Callee failed its own check; dependents are skipped elsewhere.
      ok_ = false;
      return inf_.fresh();
    }
    if (sig->second.params.size() != args.size()) {
      arity_error(e, std::to_string(sig->second.params.size()));
      return inf_.of(sig->second.result);
    }
    for (std::size_t i = 0; i < args.size(); ++i) {
      expect(args[i], sig->second.params[i], e.args[i], fmt::format("argument {} of {}", i + 1, e.name));
    }
    return inf_.of(sig->second.result);
  }

  void arity_error(const Expr& e, const std::string& want) {
    diags_.push_back(error(ErrorCode::TypeMismatch,
                           fmt::format("'{}' expects {} argument(s), got {}", e.name, want, e.args.size()), e.span));
    ok_ = false;
  }

  const SpecModel& m_;
  std::vector<Diagnostic>& diags_;
  std::vector<std::string> params_;
  std::vector<int> param_vars_;
  Inference inf_;
  std::vector<std::pair<Expr*, int>> nodes_;
  bool ok_ = true;
};

// Unit of an expression when it is evident; differing units in a
// comparison produce a warning.
std::optional<std::string> check_units(const Expr& e, const SpecModel& m, const std::string& owner,
                                       std::vector<Diagnostic>& diags) {
  std::vector<std::optional<std::string>> sub;
  for (const Expr& a : e.args) sub.push_back(check_units(a, m, owner, diags));
  switch (e.kind) {
    case ExprKind::Number:
      if (e.unit.empty()) return std::nullopt;
      return e.unit;
    case ExprKind::SensorRef:
      if (const auto it = m.sensors.find(e.name); it != m.sensors.end() && !it->second.unit.empty()) {
        return it->second.unit;
      }
      return std::nullopt;
    case ExprKind::Binary:
      if (is_comparison(e.binary)) {
        if (sub[0] && sub[1] && *sub[0] != *sub[1]) {
          diags.push_back(warning(ErrorCode::TypeMismatch,
                                  fmt::format("'{}' compares unit \"{}\" with unit \"{}\"", owner, *sub[0], *sub[1]),
                                  e.span));
        }
        return std::nullopt;
      }
      if ((e.binary == BinaryOp::Add || e.binary == BinaryOp::Sub) && sub[0] && sub[1] && *sub[0] == *sub[1]) {
        return sub[0];
      }
      if ((e.binary == BinaryOp::Add || e.binary == BinaryOp::Sub) && (sub[0].has_value() != sub[1].has_value())) {
        return sub[0] ? sub[0] : sub[1];
      }
      return std::nullopt;
    case ExprKind::Unary:
      return e.unary == UnaryOp::Negate ? sub[0] : std::nullopt;
    case ExprKind::Conditional:
      if (sub[1] && sub[2] && *sub[1] == *sub[2]) return sub[1];
      return std::nullopt;
    default:
      return std::nullopt;
  }
}

void substitute(Expr& e, const std::map<std::string, std::string>& binding) {
  if (e.kind == ExprKind::Param || e.kind == ExprKind::Name) {
    if (const auto it = binding.find(e.name); it != binding.end()) {
      e.kind = ExprKind::SensorRef;
      e.name = it->second;
    }
  }
  for (Expr& a : e.args) substitute(a, binding);
}

}  // namespace

AnalysisResult resolve(const std::vector<Fragment>& workspace, const std::vector<Fragment>& library) {
  AnalysisResult res;
  SpecModel& m = res.model;
  auto& diags = res.diagnostics;

  auto sorted = [](std::vector<Fragment> frags) {
    std::stable_sort(frags.begin(), frags.end(), [](const Fragment& a, const Fragment& b) { return a.file < b.file; });
    return frags;
  };

  std::map<std::string, SourceSpan> first_seen;
  auto add = [&](const Decl& d, Origin o) {
    const std::string& id = decl_id(d);
    const SourceSpan& span = decl_span(d);
    const bool exists = m.sensors.count(id) || m.artifacts.count(id);
    if (exists) {
      if (m.origin[id] == Origin::Library && o == Origin::Workspace) {
        diags.push_back(warning(ErrorCode::DuplicateDefinition,
                                fmt::format("'{}' shadows the library definition at {}", id, where(first_seen[id])),
                                span));
        m.sensors.erase(id);
        m.artifacts.erase(id);
        m.order.erase(std::find(m.order.begin(), m.order.end(), id));
      } else {
        diags.push_back(error(ErrorCode::DuplicateDefinition,
                              fmt::format("duplicate definition of '{}' (first declared at {})", id,
                                          where(first_seen[id])),
                              span));
        m.broken.insert(id);
        return;
      }
    } else if (o == Origin::Workspace && (is_expression_builtin(id) || metric_aggregate(id))) {
      diags.push_back(warning(ErrorCode::DuplicateDefinition, fmt::format("'{}' shadows a builtin", id), span));
    }
    first_seen[id] = span;
    m.origin[id] = o;
    m.order.push_back(id);
    if (const auto* s = std::get_if<SensorDecl>(&d)) {
      m.sensors[id] = *s;
    } else {
      m.artifacts[id] = d;
    }
  };
  for (const auto& f : sorted(library)) {
    for (const auto& d : f.decls) add(d, Origin::Library);
  }
  for (const auto& f : sorted(workspace)) {
    for (const auto& d : f.decls) add(d, Origin::Workspace);
  }

  Binder binder(m, diags);
  for (auto& [id, decl] : m.artifacts) {
    std::set<std::string>& deps = m.dependencies[id];
    bool ok = true;
    auto need = [&](const std::string& ref, bool good, const std::string& what, const SourceSpan& span) {
      if (good) {
        if (m.artifacts.count(ref)) deps.insert(ref);
        return;
      }
      diags.push_back(error(ErrorCode::UnresolvedReference, fmt::format("unresolved {} '{}'", what, ref), span));
      ok = false;
    };
    std::visit(
        [&](auto& d) {
          using T = std::decay_t<decltype(d)>;
          if constexpr (std::is_same_v<T, FunctionDecl>) {
            ok = binder.bind(d.body, d.params, deps);
          } else if constexpr (std::is_same_v<T, RuleDecl>) {
            ok = binder.bind(d.body, d.params, deps);
            if (d.when) need(*d.when, m.find_as<TimeRoutineDecl>(*d.when) != nullptr, "time routine", d.span);
          } else if constexpr (std::is_same_v<T, TimeRoutineDecl>) {
            for (const auto& r : d.includes) need(r, m.find_as<TimeRoutineDecl>(r) != nullptr, "time routine", d.span);
            for (const auto& r : d.excludes) need(r, m.find_as<TimeRoutineDecl>(r) != nullptr, "time routine", d.span);
          } else if constexpr (std::is_same_v<T, MetricDecl>) {
            if (!metric_aggregate(d.base_fn)) {
              diags.push_back(error(ErrorCode::UnresolvedReference,
                                    fmt::format("unknown metric base function '{}' (expected AVERAGE, MINIMUM, "
                                                "MAXIMUM, SUM, COUNT or STDDEV)",
                                                d.base_fn),
                                    d.span));
              ok = false;
            }
            need(d.context, bindable_value(m, d.context), "metric context (sensor or instance)", d.span);
          } else if constexpr (std::is_same_v<T, ApplyDecl>) {
            const Decl* t = m.find(d.template_id);
            const bool is_template = t && (std::holds_alternative<FunctionDecl>(*t) ||
                                           std::holds_alternative<RuleDecl>(*t) ||
                                           std::holds_alternative<CharacteristicDecl>(*t));
            need(d.template_id, is_template, "template", d.span);
            for (const auto& [formal, actual] : d.bindings) {
              need(actual, bindable_value(m, actual), "sensor or instance", d.span);
            }
          }
        },
        decl);
    if (!ok) m.broken.insert(id);
  }

  detect_cycles(m, diags);
  propagate_broken(m, diags);
  sort_diagnostics(diags);
  return res;
}

Instance instantiate(const Decl& tpl, const std::vector<std::pair<std::string, std::string>>& binding,
                     const std::string& instance_id, const SpecModel& model) {
  const std::vector<std::string> formals = decl_params(tpl);
  std::map<std::string, std::string> bind;
  for (const auto& [f, a] : binding) {
    if (std::find(formals.begin(), formals.end(), f) == formals.end()) {
      throw Error(ErrorCode::IncompleteBinding,
                  fmt::format("'{}' is not a parameter of template '{}'", f, decl_id(tpl)));
    }
    bind[f] = a;
  }
  std::vector<std::string> missing;
  for (const auto& f : formals) {
    if (!bind.count(f)) missing.push_back(f);
  }
  if (!missing.empty()) {
    std::string names;
    for (const auto& n : missing) names += (names.empty() ? "" : ", ") + n;
    throw Error(ErrorCode::IncompleteBinding,
                fmt::format("binding of '{}' leaves parameter(s) unbound: {}", decl_id(tpl), names));
  }

  Instance inst;
  inst.id = instance_id;
  inst.template_id = decl_id(tpl);
  inst.binding = binding;

  const auto sig = model.signatures.find(inst.template_id);
  std::optional<Duration> period;
  std::string period_source;
  for (std::size_t i = 0; i < formals.size(); ++i) {
    const std::string& actual = bind[formals[i]];
    if (!model.is_sensor(actual) && !model.instances.count(actual)) {
      throw Error(ErrorCode::UnresolvedReference, fmt::format("'{}' is not a sensor or instance", actual));
    }
    const auto kind = model.kind_of(actual);
    if (sig != model.signatures.end() && kind) {
      const ExprType want = sig->second.params[i];
      const ExprType have = *kind == SeriesKind::Boolean ? ExprType::Boolean : ExprType::Numeric;
      if (want != have) {
        throw Error(ErrorCode::TypeMismatch,
                    fmt::format("parameter '{}' of '{}' is {}, but '{}' is {}", formals[i], inst.template_id,
                                to_string(want), actual, to_string(have)));
      }
    }
    if (const auto p = model.period_of(actual)) {
      if (period && *period != *p) {
        throw Error(ErrorCode::PeriodMismatch,
                    fmt::format("'{}' samples every {} s but '{}' every {} s", actual, *p, period_source, *period));
      }
      period = p;
      period_source = actual;
    }
  }
  inst.period = period.value_or(0);

  inst.artifact = tpl;
  std::visit(
      [&](auto& d) {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, FunctionDecl>) {
          d.id = instance_id;
          substitute(d.body, bind);
          d.params.clear();
          inst.kind = SeriesKind::Numeric;
        } else if constexpr (std::is_same_v<T, RuleDecl>) {
          d.id = instance_id;
          substitute(d.body, bind);
          d.params.clear();
          inst.kind = SeriesKind::Boolean;
        } else if constexpr (std::is_same_v<T, CharacteristicDecl>) {
          d.id = instance_id;
          d.x_param = bind[d.x_param];
          if (d.y_param) d.y_param = bind[*d.y_param];
          inst.kind = d.is_rule() ? SeriesKind::Boolean : SeriesKind::Numeric;
        } else {
          throw Error(ErrorCode::UnresolvedReference,
                      fmt::format("'{}' is a {} and cannot be instantiated", decl_id(tpl), decl_kind_name(tpl)));
        }
      },
      inst.artifact);
  return inst;
}

AnalysisResult typecheck(SpecModel model) {
  AnalysisResult res;
  res.model = std::move(model);
  SpecModel& m = res.model;
  auto& diags = res.diagnostics;

  for (const std::string& id : m.topological_order()) {
    bool skip = false;
    for (const auto& dep : m.dependencies[id]) {
      if (m.broken.count(dep)) {
        diags.push_back(warning(ErrorCode::UnresolvedReference,
                                fmt::format("'{}' skipped: depends on invalid '{}'", id, dep),
                                decl_span(m.artifacts[id])));
        skip = true;
        break;
      }
    }
    if (skip) {
      m.broken.insert(id);
      continue;
    }
    Decl& decl = m.artifacts[id];
    bool ok = true;
    if (auto* f = std::get_if<FunctionDecl>(&decl)) {
      Typer typer(m, diags, f->params);
      const int v = typer.visit(f->body);
      typer.expect(v, ExprType::Numeric, f->body, "function body");
      Signature sig;
      sig.params = typer.finish();
      sig.result = ExprType::Numeric;
      ok = typer.ok();
      if (ok) m.signatures[id] = sig;
    } else if (auto* r = std::get_if<RuleDecl>(&decl)) {
      Typer typer(m, diags, r->params);
      const int v = typer.visit(r->body);
      typer.expect(v, ExprType::Boolean, r->body, "rule body");
      Signature sig;
      sig.params = typer.finish();
      sig.result = ExprType::Boolean;
      ok = typer.ok();
      if (ok) m.signatures[id] = sig;
    } else if (auto* c = std::get_if<CharacteristicDecl>(&decl)) {
      Signature sig;
      sig.params.assign(c->params().size(), ExprType::Numeric);
      sig.result = c->is_rule() ? ExprType::Boolean : ExprType::Numeric;
      m.signatures[id] = sig;
    } else if (auto* a = std::get_if<ApplyDecl>(&decl)) {
      try {
        Instance inst = instantiate(m.artifacts.at(a->template_id), a->bindings, a->instance_id, m);
        if (const auto* body_fn = std::get_if<FunctionDecl>(&inst.artifact)) {
          check_units(body_fn->body, m, inst.id, diags);
        } else if (const auto* body_rule = std::get_if<RuleDecl>(&inst.artifact)) {
          check_units(body_rule->body, m, inst.id, diags);
        }
        m.instances[inst.id] = std::move(inst);
      } catch (const Error& e) {
        diags.push_back(error(e.code(), e.what(), a->span));
        ok = false;
      }
    }
    if (!ok) m.broken.insert(id);
  }
  // Literal-only unit clashes inside templates.
  for (const auto& [id, decl] : m.artifacts) {
    if (const auto* f = std::get_if<FunctionDecl>(&decl)) check_units(f->body, m, id, diags);
    if (const auto* r = std::get_if<RuleDecl>(&decl)) check_units(r->body, m, id, diags);
  }
  m.typed = true;
  sort_diagnostics(diags);
  return res;
}

AnalysisResult analyze(const std::vector<Fragment>& workspace, const std::vector<Fragment>& library) {
  AnalysisResult resolved = resolve(workspace, library);
  AnalysisResult typed = typecheck(std::move(resolved.model));
  typed.diagnostics.insert(typed.diagnostics.begin(), resolved.diagnostics.begin(), resolved.diagnostics.end());
  sort_diagnostics(typed.diagnostics);
  return typed;
}

}  // namespace enav::lang
