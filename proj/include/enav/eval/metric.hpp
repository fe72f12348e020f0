#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "enav/lang/ast.hpp"
#include "enav/lang/model.hpp"
#include "enav/time.hpp"
#include "enav/timeseries.hpp"

namespace enav::eval {

struct MetricBucket {
  Timestamp start = 0;
  Timestamp end = 0;
  std::optional<double> value;  // nullopt: MISSING
  double coverage = 0.0;
  std::size_t valid = 0;
  std::size_t expected = 0;
};

struct MetricSeries {
  std::string metric_id;
  std::vector<MetricBucket> buckets;
};

/// Start of the calendar bucket containing t (tz-local; weeks start Monday).
Timestamp bucket_floor(Timestamp t, lang::Quantization q, const TimeZone& tz);
/// Start of the bucket after the one starting at `start`.
Timestamp bucket_next(Timestamp start, lang::Quantization q, const TimeZone& tz);

/// Aggregate of the VALID values; nullopt when undefined for the sample count
/// (no samples, or fewer than two for STDDEV).
std::optional<double> aggregate(lang::Aggregate fn, const std::vector<double>& values);

/// Calendar buckets of [from, to), clipped to the range. A bucket's coverage
/// is VALID samples over grid slots in the bucket; below `threshold` its
/// value is MISSING. Throws EmptyRange when to <= from.
MetricSeries eval_metric(const std::string& metric_id, lang::Aggregate fn, lang::Quantization q,
                         double threshold, const Series& context, Timestamp from, Timestamp to,
                         const TimeZone& tz);
MetricSeries eval_metric(const lang::MetricDecl& m, const Series& context, Timestamp from, Timestamp to,
                         const TimeZone& tz);

/// `bucket_start,bucket_end,value,coverage` with local ISO-8601 times.
std::string metric_csv(const MetricSeries& ms, const TimeZone& tz);

struct Conformance {
  std::size_t true_count = 0;
  std::size_t false_count = 0;
  std::size_t missing_count = 0;
  std::size_t undefined_count = 0;

  std::size_t total() const { return true_count + false_count + missing_count + undefined_count; }
  double fraction(std::size_t n) const { return total() ? static_cast<double>(n) / static_cast<double>(total()) : 0.0; }
  double green() const { return fraction(true_count); }
  double red() const { return fraction(false_count); }
};

/// Throws KindMismatch for numeric series.
Conformance conformance(const Series& rule_series);

}  // namespace enav::eval
