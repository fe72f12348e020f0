#include "enav/eval/metric.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "enav/error.hpp"
#include "enav/eval/logic.hpp"

namespace enav::eval {

namespace {

CivilTime midnight(int year, int month, int day) {
  CivilTime ct;
  ct.year = year;
  ct.month = month;
  ct.day = day;
  return ct;
}

CivilTime shift_days(const CivilDate& d, std::int64_t n) {
  const CivilDate r = civil_from_days(days_from_civil(d.year, d.month, d.day) + n);
  return midnight(r.year, r.month, r.day);
}

CivilTime shift_months(const CivilDate& d, int n) {
  const int m0 = d.year * 12 + (d.month - 1) + n;
  return midnight(m0 / 12, m0 % 12 + 1, 1);
}

// Number of k with origin + k*period in [a, b).
std::size_t slots_in(Timestamp origin, Duration period, Timestamp a, Timestamp b) {
  if (b <= a) return 0;
  const std::int64_t first = -floor_div(-(a - origin), period);  // ceil
  const std::int64_t last = -floor_div(-(b - origin), period);   // ceil, exclusive
  return static_cast<std::size_t>(std::max<std::int64_t>(0, last - first));
}

}  // namespace

Timestamp bucket_floor(Timestamp t, lang::Quantization q, const TimeZone& tz) {
  const CivilTime ct = tz.to_civil(t);
  switch (q) {
    case lang::Quantization::Day: return tz.to_utc(midnight(ct.year, ct.month, ct.day));
    case lang::Quantization::Week: return tz.to_utc(shift_days(ct.date(), -(ct.weekday - 1)));
    case lang::Quantization::Month: return tz.to_utc(midnight(ct.year, ct.month, 1));
    case lang::Quantization::Quarter: return tz.to_utc(midnight(ct.year, (ct.month - 1) / 3 * 3 + 1, 1));
    case lang::Quantization::Year: return tz.to_utc(midnight(ct.year, 1, 1));
  }
  return t;
}

Timestamp bucket_next(Timestamp start, lang::Quantization q, const TimeZone& tz) {
  // The bucket start may fall in a gap, so work from its civil date.
  const CivilDate d = tz.to_civil(start).date();
  switch (q) {
    case lang::Quantization::Day: return tz.to_utc(shift_days(d, 1));
    case lang::Quantization::Week: return tz.to_utc(shift_days(d, 7));
    case lang::Quantization::Month: return tz.to_utc(shift_months(d, 1));
    case lang::Quantization::Quarter: return tz.to_utc(shift_months(d, 3));
    case lang::Quantization::Year: return tz.to_utc(midnight(d.year + 1, 1, 1));
  }
  return start;
}

std::optional<double> aggregate(lang::Aggregate fn, const std::vector<double>& values) {
  const std::size_t n = values.size();
  switch (fn) {
    case lang::Aggregate::Count: return static_cast<double>(n);
    case lang::Aggregate::Sum: {
      double s = 0.0;
      for (const double v : values) s += v;
      return s;
    }
    case lang::Aggregate::Average: {
      if (n == 0) return std::nullopt;
      double s = 0.0;
      for (const double v : values) s += v;
      return s / static_cast<double>(n);
    }
    case lang::Aggregate::Minimum:
      if (n == 0) return std::nullopt;
      return *std::min_element(values.begin(), values.end());
    case lang::Aggregate::Maximum:
      if (n == 0) return std::nullopt;
      return *std::max_element(values.begin(), values.end());
    case lang::Aggregate::StdDev: {
      if (n < 2) return std::nullopt;
      double s = 0.0;
      for (const double v : values) s += v;
      const double mean = s / static_cast<double>(n);
      double ss = 0.0;
      for (const double v : values) ss += (v - mean) * (v - mean);
      return std::sqrt(ss / static_cast<double>(n - 1));
    }
  }
  return std::nullopt;
}

MetricSeries eval_metric(const std::string& metric_id, lang::Aggregate fn, lang::Quantization q, double threshold,
                         const Series& context, Timestamp from, Timestamp to, const TimeZone& tz) {
  if (to <= from) {
    throw Error(ErrorCode::EmptyRange,
                fmt::format("metric range [{}, {}) is empty", format_iso8601_utc(from), format_iso8601_utc(to)));
  }
  const TimeGrid& g = context.grid();
  MetricSeries out;
  out.metric_id = metric_id;
  std::vector<double> values;
  for (Timestamp b = bucket_floor(from, q, tz); b < to; b = bucket_next(b, q, tz)) {
    const Timestamp lo = std::max(b, from);
    const Timestamp hi = std::min(bucket_next(b, q, tz), to);
    MetricBucket bucket;
    bucket.start = lo;
    bucket.end = hi;
    bucket.expected = slots_in(g.start, g.period, lo, hi);
    values.clear();
    if (g.count > 0) {
      const std::int64_t first = std::max<std::int64_t>(0, -floor_div(-(lo - g.start), g.period));
      const std::int64_t last =
          std::min<std::int64_t>(static_cast<std::int64_t>(g.count), -floor_div(-(hi - g.start), g.period));
      for (std::int64_t i = first; i < last; ++i) {
        const Sample& s = context[static_cast<std::size_t>(i)];
        if (s.is_valid()) values.push_back(s.value);
      }
    }
    bucket.valid = values.size();
    bucket.coverage =
        bucket.expected ? static_cast<double>(bucket.valid) / static_cast<double>(bucket.expected) : 0.0;
    if (bucket.expected > 0 && bucket.coverage >= threshold) bucket.value = aggregate(fn, values);
    out.buckets.push_back(bucket);
  }
  return out;
}

MetricSeries eval_metric(const lang::MetricDecl& m, const Series& context, Timestamp from, Timestamp to,
                         const TimeZone& tz) {
  const auto fn = lang::metric_aggregate(m.base_fn);
  if (!fn) throw Error(ErrorCode::UnresolvedReference, fmt::format("unknown metric base function '{}'", m.base_fn));
  return eval_metric(m.id, *fn, m.quantization, m.coverage_threshold(), context, from, to, tz);
}

std::string metric_csv(const MetricSeries& ms, const TimeZone& tz) {
  std::string out = "bucket_start,bucket_end,value,coverage\n";
  for (const auto& b : ms.buckets) {
    out += fmt::format("{},{},{},{}\n", tz.format_iso8601(b.start), tz.format_iso8601(b.end),
                       b.value ? fmt::format("{}", *b.value) : std::string(), b.coverage);
  }
  return out;
}

Conformance conformance(const Series& rule_series) {
  if (rule_series.kind() != SeriesKind::Boolean) {
    throw Error(ErrorCode::KindMismatch,
                fmt::format("conformance needs a Boolean series, '{}' is numeric", rule_series.sensor_id()));
  }
  Conformance c;
  for (const Sample& s : rule_series.samples()) {
    switch (to_bool(s)) {
      case BoolValue::True: ++c.true_count; break;
      case BoolValue::False: ++c.false_count; break;
      case BoolValue::Missing: ++c.missing_count; break;
      case BoolValue::Undefined: ++c.undefined_count; break;
    }
  }
  return c;
}

}  // namespace enav::eval
