#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "enav/lang/model.hpp"
#include "enav/time.hpp"
#include "enav/timeseries.hpp"

namespace enav::eval {

struct EvalContext {
  TimeGrid grid;
  /// Formal parameter, sensor or instance id -> series on `grid`.
  std::map<std::string, const Series*> inputs;
  /// Needed for calls and time routines; may be null for self-contained bodies.
  const lang::SpecModel* model = nullptr;
  TimeZone tz = TimeZone::utc();
  /// Absolute tolerance of == and != and of characteristic bounds.
  double eps = 0.0;
  /// When set, receives one series per evaluated sub-expression.
  std::vector<std::pair<std::string, Series>>* trace = nullptr;
};

/// Evaluates any expression pointwise on ctx.grid. Throws GridMismatch when
/// an input lives on a different grid and UnresolvedReference for unbound
/// names.
Series eval_expr(const lang::Expr& e, const EvalContext& ctx);

Series eval_function(const lang::FunctionDecl& fn, const EvalContext& ctx);
/// Timestamps outside the `when` routine evaluate to TRUE.
Series eval_rule(const lang::RuleDecl& rule, const EvalContext& ctx);
Series eval_characteristic(const lang::CharacteristicDecl& ch, const EvalContext& ctx);

/// Piecewise-linear value of a sorted point list; nullopt outside its domain.
std::optional<double> interpolate(const std::vector<lang::Point>& pts, double x);

/// Two-valued membership series of a routine on `grid`, in civil time of `tz`.
/// Included and excluded routines are looked up in `model`.
Series eval_timeroutine(const lang::TimeRoutineDecl& tr, const TimeGrid& grid, const TimeZone& tz,
                        const lang::SpecModel* model = nullptr);
bool routine_matches(const lang::TimeRoutineDecl& tr, const CivilTime& ct);

/// Evaluates an instance over its bound series. `inputs` is keyed by sensor
/// or instance id; the result carries the instance's virtual sensor id.
Series eval_instance(const lang::Instance& inst, const lang::SpecModel& model,
                     const std::map<std::string, const Series*>& inputs, const TimeGrid& grid,
                     const TimeZone& tz, double eps = 0.0,
                     std::vector<std::pair<std::string, Series>>* trace = nullptr);

}  // namespace enav::eval
