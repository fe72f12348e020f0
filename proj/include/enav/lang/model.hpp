#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "enav/lang/ast.hpp"
#include "enav/timeseries.hpp"

namespace enav::lang {

enum class Origin { Builtin, Library, Workspace };

/// Time aggregates usable as metric base functions.
enum class Aggregate { Average, Minimum, Maximum, Sum, Count, StdDev };

std::optional<Aggregate> metric_aggregate(std::string_view name);
/// Pointwise builtins available in expressions: MIN, MAX, ABS, AVERAGE,
/// SUM, MAXIMUM, MINIMUM.
bool is_expression_builtin(std::string_view name);

/// Sensors whose unit is "bool" or "boolean" carry Boolean series.
SeriesKind sensor_kind(const SensorDecl& s);

struct Signature {
  std::vector<ExprType> params;
  ExprType result = ExprType::Unknown;
};

/// A template bound to concrete sensors.
struct Instance {
  std::string id;
  std::string template_id;
  std::vector<std::pair<std::string, std::string>> binding;  // formal -> sensor or instance id
  Decl artifact;        // Function/Rule/CharacteristicDecl named `id`, formals replaced
  Duration period = 0;  // 0 when nothing is bound (workspace default applies)
  SeriesKind kind = SeriesKind::Numeric;

  /// Virtual sensor id: `rule:<id>` or `fn:<id>`.
  std::string virtual_sensor_id() const;
};

/// Resolved (and, after typecheck, typed) set of declarations.
class SpecModel {
 public:
  std::map<std::string, SensorDecl> sensors;
  std::map<std::string, Decl> artifacts;  // everything except sensors
  std::map<std::string, Origin> origin;
  std::vector<std::string> order;          // declaration order, sensors included
  std::set<std::string> broken;            // failed analysis, or depend on something that did
  std::map<std::string, std::set<std::string>> dependencies;
  std::map<std::string, Signature> signatures;
  std::map<std::string, Instance> instances;
  bool typed = false;

  const Decl* find(const std::string& id) const;
  template <typename T>
  const T* find_as(const std::string& id) const {
    const Decl* d = find(id);
    return d ? std::get_if<T>(d) : nullptr;
  }
  bool is_sensor(const std::string& id) const { return sensors.count(id) > 0; }
  bool is_instance(const std::string& id) const;
  bool usable(const std::string& id) const { return broken.count(id) == 0; }

  /// Sampling period of a sensor or instance, if known.
  std::optional<Duration> period_of(const std::string& id) const;
  std::optional<SeriesKind> kind_of(const std::string& id) const;

  /// Non-broken artifact ids with every dependency before its dependents.
  std::vector<std::string> topological_order() const;

  /// Workspace declarations as a fragment, in declaration order.
  Fragment workspace_fragment() const;
};

struct AnalysisResult {
  SpecModel model;
  std::vector<Diagnostic> diagnostics;

  bool ok() const { return !has_errors(diagnostics); }
};

/// Merges fragments, binds references, and rejects duplicates and cycles.
/// Fragments are processed in file-name order, so input order never
/// changes the outcome. Workspace declarations shadow library ones with a
/// warning.
AnalysisResult resolve(const std::vector<Fragment>& workspace, const std::vector<Fragment>& library = {});

/// Assigns NUMERIC/BOOLEAN to every expression, infers parameter types,
/// instantiates every `apply`, and warns about comparisons of differing
/// literal/sensor units.
AnalysisResult typecheck(SpecModel model);

/// resolve followed by typecheck.
AnalysisResult analyze(const std::vector<Fragment>& workspace, const std::vector<Fragment>& library = {});

/// Binds a template's formals to concrete sensors or instances. Throws
/// IncompleteBinding, PeriodMismatch, TypeMismatch or UnresolvedReference.
Instance instantiate(const Decl& tpl, const std::vector<std::pair<std::string, std::string>>& binding,
                     const std::string& instance_id, const SpecModel& model);

}  // namespace enav::lang
