#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "enav/error.hpp"
#include "enav/eval/evaluator.hpp"
#include "enav/eval/logic.hpp"
#include "enav/eval/metric.hpp"
#include "enav/lang/format.hpp"
#include "enav/lang/model.hpp"
#include "enav/lang/parser.hpp"
#include "eval_oracles.hpp"

using namespace enav;
using namespace enav::eval;
using enav::test::Tv;

namespace {

constexpr Timestamp kJan2011 = 1293840000;  // 2011-01-01T00:00:00Z

const BoolValue kAll[] = {BoolValue::True, BoolValue::False, BoolValue::Missing, BoolValue::Undefined};

Tv letter(BoolValue v) { return "TFMU"[static_cast<int>(v)]; }

lang::Expr expr_of(const std::string& text) {
  const auto r = lang::parse("function f(a, b, c, x, y) = " + text + ";", "e.afs");
  REQUIRE(r.ok());
  return std::get<lang::FunctionDecl>(r.fragment.decls[0]).body;
}

lang::Fragment parse_ok(const std::string& text) {
  const auto r = lang::parse(text, "t.afs");
  for (const auto& d : r.diagnostics) MESSAGE(d.format());
  REQUIRE(r.ok());
  return r.fragment;
}

Series numeric(const std::string& id, const TimeGrid& g, const std::vector<Sample>& s) {
  return Series(id, g, SeriesKind::Numeric, s);
}

Series boolean(const std::string& id, const TimeGrid& g, const std::string& tfmu) {
  std::vector<Sample> s;
  for (const char c : tfmu) {
    s.push_back(c == 'T' ? Sample::valid(1) : c == 'F' ? Sample::valid(0) : c == 'M' ? Sample::missing() : Sample::undefined());
  }
  return Series(id, g, SeriesKind::Boolean, s);
}

std::string letters(const Series& s) {
  std::string out;
  for (const auto& x : s.samples()) out.push_back(test::tv_of(x));
  return out;
}

}  // namespace

TEST_CASE("truth tables match the stated tables") {
  // Rows: left operand T, F, M, U; columns: right operand T, F, M, U.
  const char* const and_table[] = {"TFMU", "FFFF", "MFMU", "UFUU"};
  const char* const or_table[] = {"TTTT", "TFMU", "TMMU", "TUUU"};
  const char* const implies_table[] = {"TFMU", "TTTT", "TMMU", "TUUU"};
  const char* const not_table = "FTMU";
  for (int i = 0; i < 4; ++i) {
    CHECK(letter(logic_not(kAll[i])) == not_table[i]);
    for (int j = 0; j < 4; ++j) {
      CAPTURE(i);
      CAPTURE(j);
      CHECK(letter(logic_and(kAll[i], kAll[j])) == and_table[i][j]);
      CHECK(letter(logic_or(kAll[i], kAll[j])) == or_table[i][j]);
      CHECK(letter(logic_implies(kAll[i], kAll[j])) == implies_table[i][j]);
    }
  }
}

TEST_CASE("logic laws over all pairs") {
  for (const BoolValue a : kAll) {
    CHECK(logic_not(logic_not(a)) == a);
    for (const BoolValue b : kAll) {
      CHECK(logic_and(a, b) == logic_and(b, a));
      CHECK(logic_or(a, b) == logic_or(b, a));
      CHECK(logic_not(logic_and(a, b)) == logic_or(logic_not(a), logic_not(b)));
      CHECK(logic_not(logic_or(a, b)) == logic_and(logic_not(a), logic_not(b)));
      CHECK(logic_implies(a, b) == logic_or(logic_not(a), b));
    }
  }
  for (const bool x : {true, false}) {
    const BoolValue a = x ? BoolValue::True : BoolValue::False;
    CHECK((logic_not(a) == BoolValue::True) == !x);
    for (const bool y : {true, false}) {
      const BoolValue b = y ? BoolValue::True : BoolValue::False;
      CHECK((logic_and(a, b) == BoolValue::True) == (x && y));
      CHECK((logic_or(a, b) == BoolValue::True) == (x || y));
      CHECK((logic_implies(a, b) == BoolValue::True) == (!x || y));
      CHECK(logic_and(a, b) != BoolValue::Missing);
      CHECK(logic_or(a, b) != BoolValue::Undefined);
    }
  }
}

TEST_CASE("series operators follow the truth tables") {
  const TimeGrid g = make_grid(kJan2011, kJan2011 + 16 * 900, 900);
  std::string left;
  std::string right;
  for (const char x : std::string("TFMU")) {
    for (const char y : std::string("TFMU")) {
      left.push_back(x);
      right.push_back(y);
    }
  }
  const Series a = boolean("a", g, left);
  const Series b = boolean("b", g, right);
  EvalContext ctx;
  ctx.grid = g;
  ctx.inputs = {{"a", &a}, {"b", &b}};
  const auto check = [&](const std::string& text, auto op) {
    const Series out = eval_expr(expr_of(text), ctx);
    CHECK(out.kind() == SeriesKind::Boolean);
    std::string expected;
    for (std::size_t i = 0; i < 16; ++i) expected.push_back(op(left[i], right[i]));
    CHECK(letters(out) == expected);
  };
  check("a and b", test::table_and);
  check("a or b", test::table_or);
  check("a implies b", [](Tv x, Tv y) { return test::table_or(test::table_not(x), y); });
  check("not a", [](Tv x, Tv) { return test::table_not(x); });
  check("if a then b else not b", [](Tv x, Tv y) {
    if (x == 'T') return y;
    if (x == 'F') return test::table_not(y);
    return x;
  });
}

TEST_CASE("function examples") {
  const auto frag = parse_ok("function spread(s1, s2) = s1 - s2;\nfunction ratio(x, y) = x / y;");
  const auto& spread = std::get<lang::FunctionDecl>(frag.decls[0]);
  const auto& ratio = std::get<lang::FunctionDecl>(frag.decls[1]);
  const TimeGrid g = make_grid(kJan2011, kJan2011 + 3 * 900, 900);
  const Series s1 = numeric("s1", g, {Sample::valid(60.0), Sample::valid(60.0), Sample::undefined()});
  const Series s2 = numeric("s2", g, {Sample::valid(45.0), Sample::missing(), Sample::missing()});
  EvalContext ctx;
  ctx.grid = g;
  ctx.inputs = {{"s1", &s1}, {"s2", &s2}};
  const Series out = eval_function(spread, ctx);
  CHECK(out.grid() == g);
  CHECK(out[0] == Sample::valid(15.0));
  CHECK(out[1] == Sample::missing());
  CHECK(out[2] == Sample::undefined());

  const Series x = numeric("x", g, {Sample::valid(1.0), Sample::valid(0.0), Sample::valid(-3.0)});
  const Series y = numeric("y", g, {Sample::valid(0.0), Sample::valid(0.0), Sample::valid(2.0)});
  ctx.inputs = {{"x", &x}, {"y", &y}};
  const Series q = eval_function(ratio, ctx);
  CHECK(q[0] == Sample::undefined());
  CHECK(q[1] == Sample::undefined());
  CHECK(q[2] == Sample::valid(-1.5));
}

TEST_CASE("rule examples") {
  const TimeGrid g = make_grid(kJan2011, kJan2011 + 3 * 900, 900);
  const Series spread = numeric("spread", g, {Sample::valid(15.0), Sample::undefined(), Sample::valid(2.0)});
  EvalContext ctx;
  ctx.grid = g;
  ctx.inputs = {{"a", &spread}};
  CHECK(letters(eval_expr(expr_of("a > 5"), ctx)) == "TUF");

  // Equality tolerance.
  const Series v = numeric("v", g, {Sample::valid(1.0), Sample::valid(1.05), Sample::valid(1.2)});
  ctx.inputs = {{"a", &v}};
  CHECK(letters(eval_expr(expr_of("a == 1"), ctx)) == "TFF");
  ctx.eps = 0.1;
  CHECK(letters(eval_expr(expr_of("a == 1"), ctx)) == "TTF");
  CHECK(letters(eval_expr(expr_of("a != 1"), ctx)) == "FFT");
}

TEST_CASE("when clause yields TRUE outside the routine") {
  const auto analysis = lang::analyze({parse_ok(
      "sensor T : \"degC\" @ 1h;\n"
      "timeroutine office = { weekday Mon..Fri hour 7..17 };\n"
      "rule warm(t) when office = t > 20;\n"
      "apply warm as w with (t = T);")});
  REQUIRE(analysis.ok());
  // 2011-01-01 is a Saturday; 2011-01-03 a Monday.
  const TimeGrid g = make_grid(kJan2011, kJan2011 + 4 * 86400, 3600);
  Series t("T", g);
  for (std::size_t i = 0; i < g.count; ++i) t[i] = Sample::valid(10.0);
  const Series out = eval_instance(analysis.model.instances.at("w"), analysis.model, {{"T", &t}}, g, TimeZone::utc());
  CHECK(out.sensor_id() == "rule:w");
  for (std::size_t i = 0; i < g.count; ++i) {
    const CivilTime ct = civil_from_seconds(g.timestamp(i));
    const bool in = ct.weekday <= 5 && ct.hour >= 7 && ct.hour <= 17;
    CHECK(test::tv_of(out[i]) == (in ? 'F' : 'T'));
  }
}

TEST_CASE("grid mismatch is rejected") {
  const TimeGrid g = make_grid(kJan2011, kJan2011 + 4 * 900, 900);
  const TimeGrid h = make_grid(kJan2011, kJan2011 + 4 * 3600, 3600);
  const Series a("a", g);
  const Series b("b", h);
  EvalContext ctx;
  ctx.grid = g;
  ctx.inputs = {{"a", &a}, {"b", &b}};
  try {
    eval_expr(expr_of("a + b"), ctx);
    FAIL("expected GridMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::GridMismatch);
  }
}

namespace {

lang::Expr random_expr(std::mt19937& rng, bool want_bool, int depth) {
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  if (depth == 0 || pick(0, 3) == 0) {
    if (want_bool) return pick(0, 3) == 0 ? lang::Expr::bool_lit(pick(0, 1) == 1) : lang::Expr::name_ref("c");
    if (pick(0, 2) == 0) return lang::Expr::number_lit(pick(0, 4));
    return lang::Expr::name_ref(pick(0, 1) ? "a" : "b");
  }
  if (want_bool) {
    switch (pick(0, 3)) {
      case 0:
        return lang::Expr::binary_op(
            std::array{lang::BinaryOp::And, lang::BinaryOp::Or, lang::BinaryOp::Implies}[static_cast<std::size_t>(pick(0, 2))],
            random_expr(rng, true, depth - 1), random_expr(rng, true, depth - 1));
      case 1: return lang::Expr::unary_op(lang::UnaryOp::Not, random_expr(rng, true, depth - 1));
      case 2:
        return lang::Expr::conditional(random_expr(rng, true, depth - 1), random_expr(rng, true, depth - 1),
                                       random_expr(rng, true, depth - 1));
      default:
        return lang::Expr::binary_op(
            std::array{lang::BinaryOp::Lt, lang::BinaryOp::Le, lang::BinaryOp::Gt, lang::BinaryOp::Ge,
                       lang::BinaryOp::Eq, lang::BinaryOp::Ne}[static_cast<std::size_t>(pick(0, 5))],
            random_expr(rng, false, depth - 1), random_expr(rng, false, depth - 1));
    }
  }
  switch (pick(0, 3)) {
    case 0:
      return lang::Expr::binary_op(
          std::array{lang::BinaryOp::Add, lang::BinaryOp::Sub, lang::BinaryOp::Mul, lang::BinaryOp::Div}[static_cast<std::size_t>(pick(0, 3))],
          random_expr(rng, false, depth - 1), random_expr(rng, false, depth - 1));
    case 1: return lang::Expr::unary_op(lang::UnaryOp::Negate, random_expr(rng, false, depth - 1));
    case 2:
      return lang::Expr::conditional(random_expr(rng, true, depth - 1), random_expr(rng, false, depth - 1),
                                     random_expr(rng, false, depth - 1));
    default: {
      const char* fns[] = {"MIN", "MAX", "ABS", "SUM", "AVERAGE"};
      const std::string fn = fns[pick(0, 4)];
      std::vector<lang::Expr> args;
      for (int i = 0, n = fn == "ABS" ? 1 : pick(1, 3); i < n; ++i) args.push_back(random_expr(rng, false, depth - 1));
      return lang::Expr::call(fn, std::move(args));
    }
  }
}

Sample random_sample(std::mt19937& rng, bool boolean) {
  const int r = std::uniform_int_distribution<int>(0, 9)(rng);
  if (r == 0) return Sample::missing();
  if (r == 1) return Sample::undefined();
  if (boolean) return Sample::valid(r % 2 ? 1.0 : 0.0);
  return Sample::valid(std::uniform_int_distribution<int>(-3, 4)(rng));
}

}  // namespace

TEST_CASE("random rules: pointwise oracle, grid preservation, permutation") {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const Duration period = std::array<Duration, 4>{60, 300, 900, 3600}[static_cast<std::size_t>(trial % 4)];
    const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 200)(rng);
    const Timestamp start = kJan2011 + std::uniform_int_distribution<int>(0, 1000)(rng) * period;
    const TimeGrid g{start, period, n};
    std::vector<Sample> va(n), vb(n), vc(n);
    for (std::size_t i = 0; i < n; ++i) {
      va[i] = random_sample(rng, false);
      vb[i] = random_sample(rng, false);
      vc[i] = random_sample(rng, true);
    }
    const Series a("a", g, SeriesKind::Numeric, va);
    const Series b("b", g, SeriesKind::Numeric, vb);
    const Series c("c", g, SeriesKind::Boolean, vc);
    lang::RuleDecl rule;
    rule.id = "r";
    rule.params = {"a", "b", "c"};
    rule.body = random_expr(rng, true, 4);
    CAPTURE(lang::format(rule.body));
    EvalContext ctx;
    ctx.grid = g;
    ctx.inputs = {{"a", &a}, {"b", &b}, {"c", &c}};
    const Series out = eval_rule(rule, ctx);
    CHECK(out.grid() == g);
    CHECK(out.kind() == SeriesKind::Boolean);
    REQUIRE(out.size() == n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::map<std::string, test::Scalar> at = {{"a", {va[i].quality, va[i].value}},
                                                      {"b", {vb[i].quality, vb[i].value}},
                                                      {"c", {vc[i].quality, vc[i].value}}};
      CHECK(test::tv_of(out[i]) == test::scalar_tv(test::scalar_eval(rule.body, at)));
    }
    // Permuting slots permutes the output identically.
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Sample> pa(n), pb(n), pc(n);
    for (std::size_t i = 0; i < n; ++i) {
      pa[i] = va[perm[i]];
      pb[i] = vb[perm[i]];
      pc[i] = vc[perm[i]];
    }
    const Series a2("a", g, SeriesKind::Numeric, pa);
    const Series b2("b", g, SeriesKind::Numeric, pb);
    const Series c2("c", g, SeriesKind::Boolean, pc);
    ctx.inputs = {{"a", &a2}, {"b", &b2}, {"c", &c2}};
    const Series permuted = eval_rule(rule, ctx);
    for (std::size_t i = 0; i < n; ++i) CHECK(permuted[i] == out[perm[i]]);
  }
}

TEST_CASE("trace exposes sub-expressions") {
  const TimeGrid g = make_grid(kJan2011, kJan2011 + 2 * 900, 900);
  const Series a = numeric("a", g, {Sample::valid(60.0), Sample::valid(40.0)});
  const Series b = numeric("b", g, {Sample::valid(45.0), Sample::valid(45.0)});
  std::vector<std::pair<std::string, Series>> trace;
  EvalContext ctx;
  ctx.grid = g;
  ctx.inputs = {{"a", &a}, {"b", &b}};
  ctx.trace = &trace;
  eval_expr(expr_of("a - b > 5"), ctx);
  std::vector<std::string> names;
  for (const auto& [n, s] : trace) names.push_back(n);
  CHECK(names == std::vector<std::string>{"a", "b", "a - b", "5", "a - b > 5"});
  CHECK(trace[2].second[0] == Sample::valid(15.0));
  CHECK(trace[2].second[1] == Sample::valid(-5.0));
}

TEST_CASE("characteristic examples") {
  const auto frag = parse_ok(
      "characteristic line(x) upper [(0, 10), (10, 20)];\n"
      "characteristic band(x, y) lower [(0, 0), (10, 10)] upper [(0, 5), (10, 15)];");
  const auto& line = std::get<lang::CharacteristicDecl>(frag.decls[0]);
  const auto& band = std::get<lang::CharacteristicDecl>(frag.decls[1]);
  const TimeGrid g = make_grid(kJan2011, kJan2011 + 4 * 900, 900);
  const Series x = numeric("x", g, {Sample::valid(5), Sample::valid(-1), Sample::valid(4), Sample::missing()});
  const Series y = numeric("y", g, {Sample::valid(20), Sample::valid(0), Sample::valid(6), Sample::valid(1)});
  EvalContext ctx;
  ctx.grid = g;
  ctx.inputs = {{"x", &x}, {"y", &y}};
  const Series f = eval_characteristic(line, ctx);
  CHECK(f[0] == Sample::valid(15.0));
  CHECK(f[1] == Sample::undefined());
  CHECK(f[2] == Sample::valid(14.0));
  CHECK(f[3] == Sample::missing());
  const Series r = eval_characteristic(band, ctx);
  CHECK(letters(r) == "FUTM");
}

TEST_CASE("characteristic rule form against an interpolation oracle") {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> coord(-5.0, 25.0);
  for (int trial = 0; trial < 10; ++trial) {
    lang::CharacteristicDecl ch;
    ch.id = "c";
    ch.x_param = "x";
    ch.y_param = "y";
    auto make = [&]() {
      std::vector<lang::Point> pts;
      double px = std::uniform_real_distribution<double>(-2.0, 2.0)(rng);
      for (int i = 0, n = std::uniform_int_distribution<int>(2, 6)(rng); i < n; ++i) {
        pts.push_back({px, coord(rng)});
        px += std::uniform_real_distribution<double>(0.5, 6.0)(rng);
      }
      return pts;
    };
    const int form = trial % 3;
    if (form != 1) ch.lower = make();
    if (form != 0) ch.upper = make();
    const double eps = trial % 2 ? 0.25 : 0.0;
    const std::size_t n = 100;
    const TimeGrid g{kJan2011, 900, n};
    std::vector<Sample> xs(n), ys(n);
    for (std::size_t i = 0; i < n; ++i) {
      xs[i] = Sample::valid(coord(rng));
      ys[i] = Sample::valid(coord(rng));
    }
    // Probe exact breakpoints and bound values too.
    if (ch.lower) {
      xs[0] = Sample::valid(ch.lower->front().x);
      ys[0] = Sample::valid(ch.lower->front().y);
      xs[1] = Sample::valid(ch.lower->back().x);
    }
    const Series x("x", g, SeriesKind::Numeric, xs);
    const Series y("y", g, SeriesKind::Numeric, ys);
    EvalContext ctx;
    ctx.grid = g;
    ctx.eps = eps;
    ctx.inputs = {{"x", &x}, {"y", &y}};
    const Series out = eval_characteristic(ch, ctx);
    for (std::size_t i = 0; i < n; ++i) {
      const double px = xs[i].value;
      const double py = ys[i].value;
      std::optional<double> lo;
      std::optional<double> hi;
      bool defined = true;
      if (ch.lower) {
        lo = test::brute_interp(*ch.lower, px);
        defined = defined && lo.has_value();
      }
      if (ch.upper) {
        hi = test::brute_interp(*ch.upper, px);
        defined = defined && hi.has_value();
      }
      CAPTURE(i);
      if (!defined) {
        CHECK(test::tv_of(out[i]) == 'U');
        continue;
      }
      const bool ok = (!lo || *lo - eps <= py) && (!hi || py <= *hi + eps);
      CHECK(test::tv_of(out[i]) == (ok ? 'T' : 'F'));
    }
  }
}

TEST_CASE("characteristic with lower == upper accepts exactly the curve") {
  lang::CharacteristicDecl ch;
  ch.id = "c";
  ch.x_param = "x";
  ch.y_param = "y";
  ch.lower = std::vector<lang::Point>{{0, 0}, {4, 8}, {10, 2}};
  ch.upper = ch.lower;
  const TimeGrid g{kJan2011, 900, 5};
  const Series x = numeric("x", g, {Sample::valid(2), Sample::valid(2), Sample::valid(7), Sample::valid(7), Sample::valid(11)});
  const Series y = numeric("y", g, {Sample::valid(4), Sample::valid(4.2), Sample::valid(5), Sample::valid(5.05), Sample::valid(0)});
  EvalContext ctx;
  ctx.grid = g;
  ctx.inputs = {{"x", &x}, {"y", &y}};
  CHECK(letters(eval_characteristic(ch, ctx)) == "TFTFU");
  ctx.eps = 0.1;
  CHECK(letters(eval_characteristic(ch, ctx)) == "TFTTU");
}

namespace {

lang::SpecModel routines_model(const std::string& text) {
  const auto a = lang::analyze({parse_ok(text)});
  for (const auto& d : a.diagnostics) MESSAGE(d.format());
  REQUIRE(a.ok());
  return a.model;
}

}  // namespace

TEST_CASE("time routine examples") {
  const auto m = routines_model(
      "timeroutine nothing = {};\n"
      "timeroutine office = { weekday Mon..Fri hour 7..17 };\n"
      "timeroutine holidays = { month 12 day 24..31 };\n"
      "timeroutine school_days = { weekday Mon..Fri } exclude holidays;\n");
  const TimeZone tz = TimeZone::load("Europe/Berlin");
  const TimeGrid month = make_grid(tz.to_utc({2011, 12, 1, 0, 0, 0, 0}), tz.to_utc({2012, 1, 1, 0, 0, 0, 0}), 900);
  const Series none = eval_timeroutine(*m.find_as<lang::TimeRoutineDecl>("nothing"), month, tz, &m);
  CHECK(none.count(Quality::Valid) == month.count);
  CHECK(std::all_of(none.samples().begin(), none.samples().end(), [](const Sample& s) { return s.value == 0.0; }));

  // Saturday 2011-01-08 09:00 local.
  const Timestamp sat = tz.to_utc({2011, 1, 8, 9, 0, 0, 0});
  const Series office = eval_timeroutine(*m.find_as<lang::TimeRoutineDecl>("office"), TimeGrid{sat, 900, 1}, tz, &m);
  CHECK(test::tv_of(office[0]) == 'F');
  const Timestamp mon = tz.to_utc({2011, 1, 10, 9, 0, 0, 0});
  CHECK(test::tv_of(eval_timeroutine(*m.find_as<lang::TimeRoutineDecl>("office"), TimeGrid{mon, 900, 1}, tz, &m)[0]) == 'T');

  // 2011-12-26 is a Monday but a holiday.
  const Series school = eval_timeroutine(*m.find_as<lang::TimeRoutineDecl>("school_days"), month, tz, &m);
  for (std::size_t i = 0; i < month.count; ++i) {
    const CivilTime ct = tz.to_civil(month.timestamp(i));
    if (ct.day == 26) CHECK(test::tv_of(school[i]) == 'F');
    if (ct.day == 19) CHECK(test::tv_of(school[i]) == 'T');
  }
}

TEST_CASE("time routines match brute-force field matching") {
  std::mt19937 rng(99);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  const TimeZone tz = TimeZone::load("Europe/Berlin");
  auto random_routine = [&](const std::string& id) {
    lang::TimeRoutineDecl r;
    r.id = id;
    const lang::CalendarField fields[] = {lang::CalendarField::Month, lang::CalendarField::Day,
                                          lang::CalendarField::Hour, lang::CalendarField::Minute,
                                          lang::CalendarField::Weekday, lang::CalendarField::Year};
    for (int k = 0, nr = pick(1, 3); k < nr; ++k) {
      lang::TimeRange range;
      std::set<int> used;
      for (int f = 0, nf = pick(1, 3); f < nf; ++f) {
        const int which = pick(0, 5);
        if (!used.insert(which).second) continue;
        lang::FieldPattern fp;
        fp.field = fields[which];
        const auto [lo, hi] = lang::field_bounds(fp.field);
        const int top = fp.field == lang::CalendarField::Year ? 2013 : hi;
        int at = fp.field == lang::CalendarField::Year ? 2010 : lo;
        for (int s = 0, ns = pick(1, 3); s < ns && at <= top; ++s) {
          const int a = std::min(top, at + pick(0, 4));
          const int b = std::min(top, a + pick(0, fp.field == lang::CalendarField::Minute ? 20 : 6));
          fp.spans.push_back({a, b});
          at = b + 2;
        }
        range.fields.push_back(fp);
      }
      r.ranges.push_back(range);
    }
    return r;
  };
  for (int trial = 0; trial < 50; ++trial) {
    lang::SpecModel m;
    lang::TimeRoutineDecl main = random_routine("main");
    const lang::TimeRoutineDecl inc = random_routine("inc");
    const lang::TimeRoutineDecl exc = random_routine("exc");
    main.includes = {"inc"};
    main.excludes = {"exc"};
    m.artifacts["main"] = main;
    m.artifacts["inc"] = inc;
    m.artifacts["exc"] = exc;
    // One month; March and October include a DST change.
    const int month = trial % 12 + 1;
    const Timestamp from = tz.to_utc({2011, month, 1, 0, 0, 0, 0});
    const Timestamp to = tz.to_utc({month == 12 ? 2012 : 2011, month == 12 ? 1 : month + 1, 1, 0, 0, 0, 0});
    const TimeGrid g = make_grid(from, to, trial % 2 ? 900 : 300);
    const Series out = eval_timeroutine(main, g, tz, &m);
    REQUIRE(out.size() == g.count);
    std::size_t mismatches = 0;
    for (std::size_t i = 0; i < g.count; ++i) {
      const CivilTime ct = tz.to_civil(g.timestamp(i));
      const bool expect = (test::brute_own_match(main, ct) || test::brute_own_match(inc, ct)) &&
                          !test::brute_own_match(exc, ct);
      mismatches += (test::tv_of(out[i]) == 'T') != expect;
    }
    CHECK(mismatches == 0);
  }
}

TEST_CASE("metric examples") {
  const TimeZone utc = TimeZone::utc();
  const TimeGrid day = make_grid(kJan2011, kJan2011 + 86400, 900);
  Series constant("c", day);
  for (std::size_t i = 0; i < day.count; ++i) constant[i] = Sample::valid(5.0);
  auto ms = eval_metric("m", lang::Aggregate::Average, lang::Quantization::Day, 0.9, constant, day.start, day.end(), utc);
  REQUIRE(ms.buckets.size() == 1);
  CHECK(*ms.buckets[0].value == 5.0);
  CHECK(ms.buckets[0].coverage == 1.0);

  Series partial = constant;
  for (std::size_t i = 80; i < 96; ++i) partial[i] = Sample::missing();
  ms = eval_metric("m", lang::Aggregate::Average, lang::Quantization::Day, 0.9, partial, day.start, day.end(), utc);
  CHECK_FALSE(ms.buckets[0].value.has_value());
  CHECK(ms.buckets[0].coverage == doctest::Approx(80.0 / 96.0));
  CHECK(metric_csv(ms, utc) ==
        "bucket_start,bucket_end,value,coverage\n2011-01-01T00:00:00Z,2011-01-02T00:00:00Z,,0.8333333333333334\n");

  const TimeGrid jan = make_grid(kJan2011, kJan2011 + 31 * 86400, 900);
  Series ones("o", jan);
  for (std::size_t i = 0; i < jan.count; ++i) ones[i] = Sample::valid(1.0);
  ms = eval_metric("m", lang::Aggregate::Sum, lang::Quantization::Month, 0.9, ones, jan.start, jan.end(), utc);
  REQUIRE(ms.buckets.size() == 1);
  CHECK(*ms.buckets[0].value == 31 * 96);

  CHECK_THROWS_AS(
      eval_metric("m", lang::Aggregate::Sum, lang::Quantization::Month, 0.9, ones, jan.start, jan.start, utc), Error);

  // Local buckets: Berlin days start at 23:00Z in winter, so the range
  // 2011-01-01T00:00Z..01-03T00:00Z spans three local days.
  const TimeZone berlin = TimeZone::load("Europe/Berlin");
  ms = eval_metric("m", lang::Aggregate::Count, lang::Quantization::Day, 0.0, ones, jan.start, jan.start + 2 * 86400,
                   berlin);
  REQUIRE(ms.buckets.size() == 3);
  CHECK(*ms.buckets[0].value == 92);
  CHECK(*ms.buckets[1].value == 96);
  CHECK(*ms.buckets[2].value == 4);
  CHECK(berlin.format_iso8601(ms.buckets[0].start) == "2011-01-01T01:00:00+01:00");
  CHECK(berlin.format_iso8601(ms.buckets[1].start) == "2011-01-02T00:00:00+01:00");
}

TEST_CASE("stddev uses the sample denominator") {
  CHECK(*aggregate(lang::Aggregate::StdDev, {2, 4, 4, 4, 5, 5, 7, 9}) == doctest::Approx(2.138089935299395));
  CHECK_FALSE(aggregate(lang::Aggregate::StdDev, {3}).has_value());
  CHECK_FALSE(aggregate(lang::Aggregate::Average, {}).has_value());
  CHECK(*aggregate(lang::Aggregate::Count, {}) == 0.0);
}

TEST_CASE("metrics match a partition-and-aggregate oracle") {
  std::mt19937 rng(2011);
  const TimeZone tz = TimeZone::load("Europe/Berlin");
  const lang::Aggregate fns[] = {lang::Aggregate::Average, lang::Aggregate::Minimum, lang::Aggregate::Maximum,
                                 lang::Aggregate::Sum,     lang::Aggregate::Count,   lang::Aggregate::StdDev};
  const lang::Quantization qs[] = {lang::Quantization::Day, lang::Quantization::Week, lang::Quantization::Month,
                                   lang::Quantization::Quarter, lang::Quantization::Year};
  const double thresholds[] = {0.0, 0.5, 0.9, 1.0};
  std::size_t compared = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Duration period = std::array<Duration, 3>{900, 1800, 3600}[static_cast<std::size_t>(trial % 3)];
    const Timestamp from = kJan2011 + std::uniform_int_distribution<int>(0, 24 * 365)(rng) * 3600;
    const int days = std::uniform_int_distribution<int>(1, trial % 10 == 0 ? 500 : 80)(rng);
    const Timestamp to = from + days * 86400 + std::uniform_int_distribution<int>(0, 3)(rng) * period;
    const TimeGrid g = make_grid(from, to, period);
    Series s("s", g);
    const double p_missing = std::uniform_real_distribution<double>(0.0, 0.4)(rng);
    std::uniform_real_distribution<double> value(-50.0, 50.0);
    for (std::size_t i = 0; i < g.count; ++i) {
      if (std::uniform_real_distribution<double>(0, 1)(rng) < p_missing) continue;
      s[i] = Sample::valid(value(rng));
    }
    // Occasional long outage.
    if (trial % 4 == 0 && g.count > 200) {
      const std::size_t at = std::uniform_int_distribution<std::size_t>(0, g.count - 200)(rng);
      for (std::size_t i = at; i < at + 200; ++i) s[i] = Sample::missing();
    }
    const double threshold = thresholds[trial % 4];
    std::vector<CivilTime> civil(g.count);
    for (std::size_t i = 0; i < g.count; ++i) civil[i] = tz.to_civil(g.timestamp(i));

    for (const auto q : qs) {
      // Oracle: group the slots in [from, to) by bucket key in order.
      std::vector<std::tuple<int, int, int>> keys;
      std::map<std::tuple<int, int, int>, test::BruteBucket> groups;
      std::map<std::tuple<int, int, int>, std::vector<Timestamp>> members;
      for (std::size_t i = 0; i < g.count; ++i) {
        const Timestamp t = g.timestamp(i);
        if (t < from || t >= to) continue;
        const auto key = test::brute_bucket_key(civil[i], q);
        if (!groups.count(key)) keys.push_back(key);
        auto& b = groups[key];
        ++b.slots;
        if (s[i].is_valid()) b.values.push_back(s[i].value);
        members[key].push_back(t);
      }
      for (const auto fn : fns) {
        const MetricSeries ms = eval_metric("m", fn, q, threshold, s, from, to, tz);
        std::vector<MetricBucket> nonempty;
        for (const auto& b : ms.buckets) {
          if (b.expected > 0) nonempty.push_back(b);
        }
        REQUIRE(nonempty.size() == keys.size());
        for (std::size_t k = 0; k < keys.size(); ++k) {
          const auto& ob = groups[keys[k]];
          const MetricBucket& b = nonempty[k];
          CHECK(b.start <= members[keys[k]].front());
          CHECK(members[keys[k]].back() < b.end);
          CHECK(b.expected == ob.slots);
          CHECK(b.valid == ob.values.size());
          const double coverage = static_cast<double>(ob.values.size()) / static_cast<double>(ob.slots);
          CHECK(b.coverage == coverage);
          std::optional<double> expect;
          const auto& v = ob.values;
          if (coverage >= threshold) {
            double sum = 0;
            for (double x : v) sum += x;
            switch (fn) {
              case lang::Aggregate::Count: expect = static_cast<double>(v.size()); break;
              case lang::Aggregate::Sum: expect = sum; break;
              case lang::Aggregate::Average:
                if (!v.empty()) expect = sum / static_cast<double>(v.size());
                break;
              case lang::Aggregate::Minimum:
                if (!v.empty()) {
                  double m = v[0];
                  for (double x : v) m = x < m ? x : m;
                  expect = m;
                }
                break;
              case lang::Aggregate::Maximum:
                if (!v.empty()) {
                  double m = v[0];
                  for (double x : v) m = x > m ? x : m;
                  expect = m;
                }
                break;
              case lang::Aggregate::StdDev:
                if (v.size() >= 2) {
                  const double mean = sum / static_cast<double>(v.size());
                  double ss = 0;
                  for (double x : v) ss += (x - mean) * (x - mean);
                  expect = std::sqrt(ss / static_cast<double>(v.size() - 1));
                }
                break;
            }
          }
          REQUIRE(b.value.has_value() == expect.has_value());
          if (expect) {
            const double scale = std::max(1.0, std::fabs(*expect));
            CHECK(std::fabs(*b.value - *expect) <= 1e-9 * scale);
          }
          ++compared;
        }
      }
    }
  }
  CHECK(compared > 1000);
}

TEST_CASE("conformance counts") {
  const TimeGrid g{kJan2011, 900, 96};
  CHECK(conformance(boolean("r", g, std::string(96, 'T'))).green() == 1.0);
  std::string alt;
  for (int i = 0; i < 96; ++i) alt.push_back(i % 2 ? 'F' : 'T');
  const Conformance c = conformance(boolean("r", g, alt));
  CHECK(c.green() == 0.5);
  CHECK(c.red() == 0.5);
  const Conformance ten = conformance(boolean("r", g, std::string(10, 'F') + std::string(86, 'T')));
  CHECK(ten.red() == 10.0 / 96.0);
  CHECK(ten.false_count == 10);
  CHECK_THROWS_AS(conformance(Series("n", g)), Error);
}

TEST_CASE("instances chain through virtual sensors") {
  const auto a = lang::analyze({parse_ok(
      "sensor AHU1_supply : \"degC\" @ 15min;\n"
      "sensor AHU1_return : \"degC\" @ 15min;\n"
      "function spread(s1, s2) = s1 - s2;\n"
      "rule heating(vl, rl) = spread(vl, rl) > 5;\n"
      "rule big(x) = x > 10;\n"
      "apply spread as sp with (s1 = AHU1_supply, s2 = AHU1_return);\n"
      "apply heating as ahu1 with (vl = AHU1_supply, rl = AHU1_return);\n"
      "apply big as bg with (x = sp);")});
  REQUIRE(a.ok());
  const TimeGrid g{kJan2011, 900, 3};
  const Series vl = numeric("AHU1_supply", g, {Sample::valid(60), Sample::valid(50), Sample::missing()});
  const Series rl = numeric("AHU1_return", g, {Sample::valid(45), Sample::valid(47), Sample::valid(40)});
  const std::map<std::string, const Series*> inputs = {{"AHU1_supply", &vl}, {"AHU1_return", &rl}};
  const Series heating = eval_instance(a.model.instances.at("ahu1"), a.model, inputs, g, TimeZone::utc());
  CHECK(letters(heating) == "TFM");
  const Series sp = eval_instance(a.model.instances.at("sp"), a.model, inputs, g, TimeZone::utc());
  CHECK(sp.sensor_id() == "fn:sp");
  CHECK(sp[0] == Sample::valid(15));
  const std::map<std::string, const Series*> chained = {{"sp", &sp}};
  CHECK(letters(eval_instance(a.model.instances.at("bg"), a.model, chained, g, TimeZone::utc())) == "TFM");
}
