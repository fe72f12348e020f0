#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "enav/lang/format.hpp"
#include "enav/lang/model.hpp"
#include "enav/lang/parser.hpp"
#include "lang_gen.hpp"

using namespace enav;
using namespace enav::lang;

namespace {

Fragment parse_ok(const std::string& text, const std::string& file = "t.afs") {
  auto r = parse(text, file);
  for (const auto& d : r.diagnostics) MESSAGE(d.format());
  REQUIRE(r.ok());
  return r.fragment;
}

AnalysisResult analyze_text(const std::string& text, const std::string& lib = {}) {
  std::vector<Fragment> library;
  if (!lib.empty()) library.push_back(parse_ok(lib, "lib.afs"));
  return analyze({parse_ok(text)}, library);
}

bool has_code(const std::vector<Diagnostic>& ds, ErrorCode c, Severity s = Severity::Error) {
  return std::any_of(ds.begin(), ds.end(), [&](const Diagnostic& d) { return d.code == c && d.severity == s; });
}

const Diagnostic* first_error(const std::vector<Diagnostic>& ds) {
  for (const auto& d : ds) {
    if (d.severity == Severity::Error) return &d;
  }
  return nullptr;
}

}  // namespace

TEST_CASE("parse function declaration") {
  const Fragment f = parse_ok("function spread(s1, s2) = s1 - s2;");
  REQUIRE(f.decls.size() == 1);
  const auto& fn = std::get<FunctionDecl>(f.decls[0]);
  CHECK(fn.id == "spread");
  CHECK(fn.params == std::vector<std::string>{"s1", "s2"});
  CHECK(same_structure(fn.body, Expr::binary_op(BinaryOp::Sub, Expr::name_ref("s1"), Expr::name_ref("s2"))));
  CHECK(fn.span.line == 1);
  CHECK(fn.span.column == 1);
}

TEST_CASE("parse empty input") {
  for (const char* text : {"", "   \n\n", "// nothing here\n"}) {
    const auto r = parse(text, "e.afs");
    CHECK(r.diagnostics.empty());
    CHECK(r.fragment.decls.empty());
  }
}

TEST_CASE("dangling operator is reported at the operator") {
  const auto r = parse("rule r(a) = a >", "bad.afs");
  REQUIRE_FALSE(r.ok());
  const Diagnostic* d = first_error(r.diagnostics);
  REQUIRE(d);
  CHECK(d->code == ErrorCode::SyntaxError);
  CHECK(d->span.file == "bad.afs");
  CHECK(d->span.line == 1);
  CHECK(d->span.column == 15);
  CHECK(d->format().rfind("bad.afs:1:15: error:", 0) == 0);
}

TEST_CASE("grammar error fixtures carry positions") {
  struct Fixture {
    const char* text;
    int line;
    int column;
  };
  const Fixture fixtures[] = {
      {"rule r(a) = a >", 1, 15},
      {"function f(a) = a +;", 1, 19},
      {"function f(a) = (a + 1;", 1, 23},
      {"sensor T1 : \"degC\" @ 15;", 1, 24},
      {"sensor T1 : \"degC\" @ 15 fortnights;", 1, 22},
      {"rule r(a) = a < 1 < 2;", 1, 19},
      {"\n\n  bogus x;", 3, 3},
      {"rule and(a) = true;", 1, 6},
      {"metric m = AVERAGE(T1) per decade;", 1, 28},
      {"timeroutine t = { hour 25 };", 1, 24},
      {"timeroutine t = { weekday Mon..Funday };", 1, 32},
      {"characteristic c(x, y);", 1, 23},
      {"characteristic c(x) upper [(0, 1)];", 1, 27},
      {"characteristic c(x, y) lower [(5, 1), (1, 2)];", 1, 30},
      {"metric m = AVERAGE(T1) per day coverage 1.5;", 1, 41},
      {"apply t as i with (a = S1, a = S2);", 1, 28},
      {"function f(a) = a $ 2;", 1, 19},
      {"rule r(a) = if a then 1;", 1, 24},
      {"sensor S : \"unterminated @ 1h;", 1, 12},
  };
  for (const auto& fx : fixtures) {
    const std::string text = fx.text;
    CAPTURE(text);
    const auto r = parse(fx.text, "fx.afs");
    REQUIRE_FALSE(r.ok());
    const Diagnostic* d = first_error(r.diagnostics);
    REQUIRE(d);
    CHECK(d->span.file == "fx.afs");
    CHECK(d->span.line == fx.line);
    CHECK(d->span.column == fx.column);
  }
}

TEST_CASE("parser recovers after a broken declaration") {
  const auto r = parse("function a(x) = x +;\nfunction b(x) = x * 2;\nrule c(x) = x >;\nrule d(x) = x > 1;\n",
                       "rec.afs");
  int errors = 0;
  for (const auto& d : r.diagnostics) errors += d.severity == Severity::Error;
  CHECK(errors == 2);
  REQUIRE(r.fragment.decls.size() == 2);
  CHECK(decl_id(r.fragment.decls[0]) == "b");
  CHECK(decl_id(r.fragment.decls[1]) == "d");
}

TEST_CASE("precedence") {
  const auto body = [](const std::string& e) {
    return std::get<FunctionDecl>(parse_ok("function f(a, b, c) = " + e + ";").decls[0]).body;
  };
  const auto rbody = [](const std::string& e) {
    return std::get<RuleDecl>(parse_ok("rule r(a, b, c) = " + e + ";").decls[0]).body;
  };
  const Expr a = Expr::name_ref("a");
  const Expr b = Expr::name_ref("b");
  const Expr c = Expr::name_ref("c");
  CHECK(same_structure(body("a + b * c"),
                       Expr::binary_op(BinaryOp::Add, a, Expr::binary_op(BinaryOp::Mul, b, c))));
  CHECK(same_structure(body("a - b - c"),
                       Expr::binary_op(BinaryOp::Sub, Expr::binary_op(BinaryOp::Sub, a, b), c)));
  CHECK(same_structure(rbody("a implies b implies c"),
                       Expr::binary_op(BinaryOp::Implies, a, Expr::binary_op(BinaryOp::Implies, b, c))));
  CHECK(same_structure(rbody("not a and b or c"),
                       Expr::binary_op(BinaryOp::Or,
                                       Expr::binary_op(BinaryOp::And, Expr::unary_op(UnaryOp::Not, a), b), c)));
  CHECK(same_structure(rbody("a > 1 and b <= 2"),
                       Expr::binary_op(BinaryOp::And, Expr::binary_op(BinaryOp::Gt, a, Expr::number_lit(1)),
                                       Expr::binary_op(BinaryOp::Le, b, Expr::number_lit(2)))));
  CHECK(same_structure(body("-a * b"), Expr::binary_op(BinaryOp::Mul, Expr::unary_op(UnaryOp::Negate, a), b)));
}

TEST_CASE("format normalizes redundant parentheses") {
  const Fragment f = parse_ok("function f(a, b, c) = ((a) + ((b * c)));\nrule r(a, b) = (((a > b)) and (true));");
  CHECK(format(f) == "function f(a, b, c) = a + b * c;\nrule r(a, b) = a > b and true;\n");
  CHECK(same_structure(parse_ok(format(f)), f));

  const Fragment g = parse_ok("function g(a, b, c) = (a - (b - c)) / (a * b);");
  CHECK(format(g) == "function g(a, b, c) = (a - (b - c)) / (a * b);\n");
  CHECK(format(Fragment{}) == "");
}

TEST_CASE("format round-trip of each declaration kind") {
  const std::string text =
      "sensor AHU1_supply : \"degC\" @ 15min;\n"
      "sensor occupied : \"bool\" @ 1h;\n"
      "sensor pulse : \"m3\" @ 7s;\n"
      "function spread(s1, s2) = s1 - s2;\n"
      "rule heating(vl, rl) when working_hours = spread(vl, rl) > 5 \"K\" implies vl > 30;\n"
      "characteristic curve(x, y) lower [(0, 10), (10, 20)] upper [(0, 15), (10, 30.5)];\n"
      "characteristic lookup(x) upper [(-10, 60), (20, 30)];\n"
      "metric daily = AVERAGE(AHU1_supply) per day coverage 0.75;\n"
      "metric weekly = STDDEV(AHU1_supply) per quarter;\n"
      "timeroutine working_hours = { weekday Mon..Fri hour [7..11, 13..17], month 12 day 24 } "
      "include extra exclude holidays;\n"
      "timeroutine extra = {};\n"
      "timeroutine holidays = { year 2011 month 12 day 26 };\n"
      "apply heating as ahu1 with (vl = AHU1_supply, rl = AHU1_supply);\n"
      "function g(t) = if t > 0 then t else -t;\n";
  const Fragment f = parse_ok(text);
  CHECK(f.decls.size() == 14);
  const std::string once = format(f);
  const Fragment g = parse_ok(once);
  CHECK(same_structure(f, g));
  CHECK(format(g) == once);
}

TEST_CASE("parse-format round-trip on generated specifications") {
  test::SpecGen gen(20111226);
  for (int i = 0; i < 200; ++i) {
    const Fragment f = gen.fragment();
    const std::string text = format(f);
    CAPTURE(text);
    const auto r = parse(text, "gen.afs");
    for (const auto& d : r.diagnostics) MESSAGE(d.format());
    REQUIRE(r.ok());
    CHECK(same_structure(f, r.fragment));
    const auto analysis = analyze({r.fragment});
    for (const auto& d : analysis.diagnostics) {
      if (d.severity == Severity::Error) MESSAGE(d.format());
    }
    CHECK(analysis.ok());
  }
}

TEST_CASE("resolve binds builtins and library") {
  const auto a = analyze_text("rule warm(a, b) = AVERAGE(a, b) > 20;");
  CHECK(a.ok());
  const auto a2 = analyze_text("rule r(a, b) = dev(a, b) > 2;", "function dev(x, y) = ABS(x - y);");
  CHECK(a2.ok());
  CHECK(a2.model.origin.at("dev") == Origin::Library);
  CHECK(a2.model.dependencies.at("r").count("dev") == 1);
}

TEST_CASE("resolve reports cycles with their path") {
  const auto a = analyze_text("rule A(x) = B(x);\nrule B(x) = A(x);\nrule C(x) = x > 1;");
  REQUIRE_FALSE(a.ok());
  const auto it = std::find_if(a.diagnostics.begin(), a.diagnostics.end(),
                               [](const Diagnostic& d) { return d.code == ErrorCode::CyclicReference; });
  REQUIRE(it != a.diagnostics.end());
  CHECK(it->message.find("A -> B -> A") != std::string::npos);
  CHECK(a.model.broken.count("A"));
  CHECK(a.model.broken.count("B"));
  CHECK(a.model.usable("C"));
}

TEST_CASE("resolve rejects duplicates and unresolved names") {
  const auto dup = analyze_text("function spread(a, b) = a - b;\nfunction spread(a, b) = b - a;");
  CHECK(has_code(dup.diagnostics, ErrorCode::DuplicateDefinition));
  CHECK(dup.model.broken.count("spread"));

  const auto unres = analyze_text("rule r(a) = a > limit;\nrule s(a) = nope(a);");
  CHECK(has_code(unres.diagnostics, ErrorCode::UnresolvedReference));
  CHECK(unres.model.broken.count("r"));
  CHECK(unres.model.broken.count("s"));

  const auto shadow = analyze_text("function dev(x, y) = x - y;", "function dev(x, y) = ABS(x - y);");
  CHECK(shadow.ok());
  CHECK(has_code(shadow.diagnostics, ErrorCode::DuplicateDefinition, Severity::Warning));
  CHECK(shadow.model.origin.at("dev") == Origin::Workspace);

  const auto dependent = analyze_text("function bad(a) = a + zz;\nrule uses(a) = bad(a) > 1;\nrule ok(a) = a > 1;");
  CHECK(dependent.model.broken.count("uses"));
  CHECK(dependent.model.usable("ok"));
}

TEST_CASE("resolution is order independent") {
  const std::vector<std::string> files = {
      "sensor T : \"degC\" @ 15min;\nfunction spread(a, b) = a - b;",
      "rule hot(a, b) = spread(a, b) > 5;\nrule A(x) = B(x);",
      "rule B(x) = A(x);\nfunction spread(a, b) = b - a;\napply hot as h1 with (a = T, b = T);",
  };
  std::vector<Fragment> frags;
  for (std::size_t i = 0; i < files.size(); ++i) {
    frags.push_back(parse(files[i], "f" + std::to_string(i) + ".afs").fragment);
  }
  const auto base = analyze(frags);
  std::vector<std::string> base_msgs;
  for (const auto& d : base.diagnostics) base_msgs.push_back(d.format());
  std::mt19937 rng(7);
  for (int i = 0; i < 20; ++i) {
    std::shuffle(frags.begin(), frags.end(), rng);
    const auto r = analyze(frags);
    std::vector<std::string> msgs;
    for (const auto& d : r.diagnostics) msgs.push_back(d.format());
    CHECK(msgs == base_msgs);
    CHECK(r.model.broken == base.model.broken);
    CHECK(r.model.topological_order() == base.model.topological_order());
    CHECK(same_structure(r.model.workspace_fragment(), base.model.workspace_fragment()));
  }
}

TEST_CASE("accepted models are acyclic on random reference graphs") {
  std::mt19937 rng(42);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = std::uniform_int_distribution<int>(2, 9)(rng);
    std::map<int, std::set<int>> edges;
    std::string text;
    for (int i = 0; i < n; ++i) {
      std::string body = "x > 0";
      for (int j = 0; j < n; ++j) {
        if (std::uniform_int_distribution<int>(0, 3)(rng) == 0) {
          edges[i].insert(j);
          body += " and R" + std::to_string(j) + "(x)";
        }
      }
      text += "rule R" + std::to_string(i) + "(x) = " + body + ";\n";
    }
    const auto a = analyze({parse_ok(text)});
    // Oracle: a node is acceptable iff no cycle is reachable from it.
    std::function<bool(int, std::set<int>&)> reaches_cycle = [&](int v, std::set<int>& path) {
      if (path.count(v)) return true;
      path.insert(v);
      for (int w : edges[v]) {
        if (reaches_cycle(w, path)) return true;
      }
      path.erase(v);
      return false;
    };
    bool any_cycle = false;
    for (int i = 0; i < n; ++i) {
      std::set<int> path;
      const bool bad = reaches_cycle(i, path);
      any_cycle = any_cycle || bad;
      CHECK(a.model.usable("R" + std::to_string(i)) == !bad);
    }
    CHECK(a.ok() == !any_cycle);
    // Topological order respects every edge among accepted nodes.
    const auto order = a.model.topological_order();
    std::map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < order.size(); ++i) pos[order[i]] = i;
    for (const auto& [from, tos] : edges) {
      const std::string f = "R" + std::to_string(from);
      if (!pos.count(f)) continue;
      for (int to : tos) {
        const std::string t = "R" + std::to_string(to);
        REQUIRE(pos.count(t));
        CHECK(pos[t] < pos[f]);
      }
    }
  }
}

TEST_CASE("typecheck") {
  const auto numeric_rule = analyze_text("rule r(a, b) = a - b;");
  REQUIRE_FALSE(numeric_rule.ok());
  const Diagnostic* d = first_error(numeric_rule.diagnostics);
  CHECK(d->code == ErrorCode::TypeMismatch);
  CHECK(d->message.find("expected BOOLEAN, found NUMERIC") != std::string::npos);

  const auto cond = analyze_text("function setpoint(occupied) = if occupied then 21.0 else 17.0;");
  REQUIRE(cond.ok());
  const auto& body = cond.model.find_as<FunctionDecl>("setpoint")->body;
  CHECK(body.type == ExprType::Numeric);
  CHECK(body.args[0].type == ExprType::Boolean);
  CHECK(cond.model.signatures.at("setpoint").params == std::vector<ExprType>{ExprType::Boolean});

  const auto branches = analyze_text("function f(c) = if c then 1 else true;");
  CHECK(has_code(branches.diagnostics, ErrorCode::TypeMismatch));

  const auto cmp = analyze_text("rule r(a, b) = (a > b) > 1;");
  CHECK(has_code(cmp.diagnostics, ErrorCode::TypeMismatch));

  const auto callee = analyze_text("rule inner(x) = x;\nrule outer(a) = inner(a > 1);\nrule bad(a) = inner(a + 1);");
  CHECK(cond.ok());
  CHECK(callee.model.usable("outer"));
  CHECK(callee.model.broken.count("bad"));
  CHECK(callee.model.signatures.at("inner").params == std::vector<ExprType>{ExprType::Boolean});

  const auto arity = analyze_text("function f(a, b) = a + b;\nfunction g(a) = f(a);");
  CHECK(has_code(arity.diagnostics, ErrorCode::TypeMismatch));
}

TEST_CASE("unit mismatches are warnings") {
  const auto a = analyze_text(
      "sensor T : \"degC\" @ 15min;\n"
      "rule over(t) = t > 3 \"bar\";\n"
      "apply over as o1 with (t = T);");
  CHECK(a.ok());
  CHECK(has_code(a.diagnostics, ErrorCode::TypeMismatch, Severity::Warning));
  const auto lit = analyze_text("rule r(t) = 1 \"degC\" < 2 \"bar\";");
  CHECK(lit.ok());
  CHECK(has_code(lit.diagnostics, ErrorCode::TypeMismatch, Severity::Warning));
  const auto same = analyze_text("sensor T : \"degC\" @ 15min;\nrule over(t) = t > 3 \"degC\";\napply over as o1 with (t = T);");
  CHECK_FALSE(has_code(same.diagnostics, ErrorCode::TypeMismatch, Severity::Warning));
}

TEST_CASE("instantiate heating template") {
  const auto a = analyze_text(
      "sensor AHU1_supply : \"degC\" @ 15min;\n"
      "sensor AHU1_return : \"degC\" @ 15min;\n"
      "rule heating(vl, rl) = vl - rl > 5;\n"
      "apply heating as ahu1 with (vl = AHU1_supply, rl = AHU1_return);");
  REQUIRE(a.ok());
  const Instance& inst = a.model.instances.at("ahu1");
  CHECK(inst.template_id == "heating");
  CHECK(inst.period == 900);
  CHECK(inst.kind == SeriesKind::Boolean);
  CHECK(inst.virtual_sensor_id() == "rule:ahu1");
  const auto& rule = std::get<RuleDecl>(inst.artifact);
  CHECK(rule.id == "ahu1");
  CHECK(format(rule.body) == "AHU1_supply - AHU1_return > 5");
  CHECK(rule.body.args[0].args[0].kind == ExprKind::SensorRef);
  // Template itself is untouched.
  CHECK(format(a.model.find_as<RuleDecl>("heating")->body) == "vl - rl > 5");
}

TEST_CASE("instantiate is capture free") {
  // A formal named like a sensor must not capture the sensor bound to another formal.
  const auto a = analyze_text(
      "sensor a : \"degC\" @ 15min;\n"
      "sensor b : \"degC\" @ 15min;\n"
      "function swap(a, b) = a - b;\n"
      "apply swap as s with (a = b, b = a);");
  REQUIRE(a.ok());
  CHECK(format(std::get<FunctionDecl>(a.model.instances.at("s").artifact).body) == "b - a");
}

TEST_CASE("instantiate edge cases") {
  const auto none = analyze_text("rule always() = true;\napply always as copy with ();");
  REQUIRE(none.ok());
  const Instance& inst = none.model.instances.at("copy");
  CHECK(std::get<RuleDecl>(inst.artifact).id == "copy");
  CHECK(same_structure(std::get<RuleDecl>(inst.artifact).body, Expr::bool_lit(true)));
  CHECK(inst.period == 0);

  const auto missing = analyze_text(
      "sensor S1 : \"degC\" @ 15min;\n"
      "rule heating(vl, rl) = vl > rl;\n"
      "apply heating as h with (vl = S1);");
  REQUIRE_FALSE(missing.ok());
  const Diagnostic* d = first_error(missing.diagnostics);
  CHECK(d->code == ErrorCode::IncompleteBinding);
  CHECK(d->message.find("rl") != std::string::npos);

  const auto period = analyze_text(
      "sensor S1 : \"degC\" @ 15min;\nsensor S2 : \"degC\" @ 1h;\n"
      "rule heating(vl, rl) = vl > rl;\napply heating as h with (vl = S1, rl = S2);");
  CHECK(first_error(period.diagnostics)->code == ErrorCode::PeriodMismatch);

  const auto kind = analyze_text(
      "sensor S1 : \"degC\" @ 15min;\nsensor occ : \"bool\" @ 15min;\n"
      "rule heating(vl, rl) = vl > rl;\napply heating as h with (vl = S1, rl = occ);");
  CHECK(first_error(kind.diagnostics)->code == ErrorCode::TypeMismatch);

  const auto chained = analyze_text(
      "sensor S1 : \"degC\" @ 15min;\n"
      "function spread(a, b) = a - b;\n"
      "rule big(x) = x > 5;\n"
      "apply spread as sp with (a = S1, b = S1);\n"
      "apply big as bg with (x = sp);\n"
      "metric m = AVERAGE(sp) per day;");
  REQUIRE(chained.ok());
  CHECK(chained.model.instances.at("bg").period == 900);

  const auto chars = analyze_text(
      "sensor X : \"degC\" @ 15min;\nsensor Y : \"degC\" @ 15min;\n"
      "characteristic band(x, y) lower [(0, 0), (10, 10)];\n"
      "apply band as b1 with (x = X, y = Y);");
  REQUIRE(chars.ok());
  const auto& cd = std::get<CharacteristicDecl>(chars.model.instances.at("b1").artifact);
  CHECK(cd.x_param == "X");
  CHECK(*cd.y_param == "Y");
}

TEST_CASE("instantiate throws directly") {
  const auto a = analyze_text("sensor S1 : \"degC\" @ 15min;\nrule heating(vl, rl) = vl > rl;");
  const Decl& tpl = *a.model.find("heating");
  CHECK_THROWS_AS(instantiate(tpl, {{"vl", "S1"}}, "x", a.model), Error);
  try {
    instantiate(tpl, {{"vl", "S1"}}, "x", a.model);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::IncompleteBinding);
    CHECK(std::string(e.what()).find("rl") != std::string::npos);
  }
  const Instance ok = instantiate(tpl, {{"vl", "S1"}, {"rl", "S1"}}, "x", a.model);
  CHECK(ok.binding.size() == 2);
}

TEST_CASE("metric and apply references") {
  const auto bad_metric = analyze_text("sensor T : \"degC\" @ 15min;\nmetric m = MEDIAN(T) per day;");
  CHECK(has_code(bad_metric.diagnostics, ErrorCode::UnresolvedReference));
  const auto bad_ctx = analyze_text("metric m = AVERAGE(nowhere) per day;");
  CHECK(has_code(bad_ctx.diagnostics, ErrorCode::UnresolvedReference));
  const auto bad_apply = analyze_text("sensor T : \"degC\" @ 15min;\napply nothing as n with (a = T);");
  CHECK(has_code(bad_apply.diagnostics, ErrorCode::UnresolvedReference));
  const auto sensor_in_body = analyze_text("sensor T : \"degC\" @ 15min;\nrule r(a) = T > a;");
  CHECK(has_code(sensor_in_body.diagnostics, ErrorCode::UnresolvedReference));
}
