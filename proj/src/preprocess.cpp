#include "enav/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "enav/error.hpp"

namespace enav {

namespace {

constexpr double kMadScale = 1.4826;

double median_of(std::vector<double>& v) {
  const std::size_t n = v.size();
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  const double upper = *mid;
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), mid);
  return 0.5 * (lower + upper);
}

void require_numeric(const Series& s, const char* op) {
  if (s.kind() != SeriesKind::Numeric) {
    throw Error(ErrorCode::KindMismatch, std::string(op) + " needs a numeric series, got boolean " + s.sensor_id());
  }
}

}  // namespace

void PreprocessConfig::validate() const {
  if (period <= 0) throw Error(ErrorCode::NonPositivePeriod, "preprocess period must be positive");
  if (outlier_window < 3 || outlier_window % 2 == 0) {
    throw Error(ErrorCode::InvalidArgument, "outlier_window must be odd and >= 3");
  }
  if (!(outlier_k > 0.0)) throw Error(ErrorCode::InvalidArgument, "outlier_k must be positive");
  if (max_interp_gap < 0) throw Error(ErrorCode::InvalidArgument, "max_interp_gap must be >= 0");
  if (halfwidth() < 0) throw Error(ErrorCode::InvalidArgument, "snap_halfwidth must be >= 0");
}

std::string PreprocessReport::to_json_line() const {
  nlohmann::ordered_json j;
  j["sensor_id"] = sensor_id;
  j["snapped"] = snapped;
  j["rejected"] = rejected;
  j["interpolated"] = interpolated;
  j["first"] = first ? nlohmann::ordered_json(format_iso8601_utc(*first)) : nlohmann::ordered_json();
  j["last"] = last ? nlohmann::ordered_json(format_iso8601_utc(*last)) : nlohmann::ordered_json();
  auto& rej = j["rejections"] = nlohmann::ordered_json::array();
  for (const auto& r : rejections) {
    rej.push_back({{"timestamp", format_iso8601_utc(r.timestamp)},
                   {"value", r.value},
                   {"median", r.median},
                   {"mad", r.mad}});
  }
  return j.dump();
}

Series resample(const RawSeries& raw, const TimeGrid& grid, Duration snap_halfwidth, std::size_t* snapped) {
  Series out(raw.sensor_id, grid, SeriesKind::Numeric);
  if (snapped) *snapped = 0;
  if (grid.empty()) return out;

  // Per slot: distance and time of the current claimant.
  std::vector<Duration> best(grid.count, std::numeric_limits<Duration>::max());
  std::vector<Timestamp> best_time(grid.count, 0);
  const auto last = static_cast<Timestamp>(grid.count - 1);
  for (const auto& [t, value] : raw.points) {
    if (!std::isfinite(value)) continue;
    const Timestamp d = t - grid.start;
    Timestamp k = floor_div(d, grid.period);
    if (2 * (d - k * grid.period) > grid.period) ++k;  // exact midpoint stays on the earlier slot
    k = std::clamp<Timestamp>(k, 0, last);
    const Duration dist = std::abs(t - grid.timestamp(static_cast<std::size_t>(k)));
    if (dist > snap_halfwidth) continue;
    const auto slot = static_cast<std::size_t>(k);
    if (dist < best[slot]) {
      best[slot] = dist;
      best_time[slot] = t;
      out[slot] = Sample::valid(value);
    }
  }
  if (snapped) {
    for (std::size_t i = 0; i < grid.count; ++i) {
      if (out[i].is_valid() && best_time[i] != grid.timestamp(i)) ++*snapped;
    }
  }
  return out;
}

Series filter_outliers(const Series& series, int window, double k, std::vector<OutlierRejection>* log) {
  require_numeric(series, "filter_outliers");
  if (window < 1 || window % 2 == 0) throw Error(ErrorCode::InvalidArgument, "outlier window must be odd");
  Series out = series;
  const std::size_t n = series.size();
  const std::size_t half = static_cast<std::size_t>(window / 2);
  std::vector<double> vals;
  std::vector<double> devs;
  vals.reserve(static_cast<std::size_t>(window));
  devs.reserve(static_cast<std::size_t>(window));
  for (std::size_t i = 0; i < n; ++i) {
    if (!series[i].is_valid()) continue;
    vals.clear();
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(n, i + half + 1);
    for (std::size_t j = lo; j < hi; ++j) {
      if (series[j].is_valid()) vals.push_back(series[j].value);
    }
    const double m = median_of(vals);
    devs.clear();
    for (const double v : vals) devs.push_back(std::abs(v - m));
    const double mad = median_of(devs);
    const double x = series[i].value;
    if (mad > 0.0 && std::abs(x - m) > k * kMadScale * mad) {
      out[i] = Sample::missing();
      if (log) log->push_back({i, series.grid().timestamp(i), x, m, mad});
    }
  }
  return out;
}

Series interpolate_gaps(const Series& series, int max_gap, std::size_t* filled) {
  require_numeric(series, "interpolate_gaps");
  Series out = series;
  if (filled) *filled = 0;
  const std::size_t n = series.size();
  std::size_t i = 0;
  while (i < n) {
    if (series[i].quality != Quality::Missing) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && series[j].quality == Quality::Missing) ++j;
    const std::size_t len = j - i;
    if (i > 0 && j < n && series[i - 1].is_valid() && series[j].is_valid() &&
        len <= static_cast<std::size_t>(std::max(max_gap, 0))) {
      const double v0 = series[i - 1].value;
      const double v1 = series[j].value;
      const double span = static_cast<double>(len + 1);
      for (std::size_t m = i; m < j; ++m) {
        out[m] = Sample::valid(v0 + (v1 - v0) * static_cast<double>(m - i + 1) / span);
      }
      if (filled) *filled += len;
    }
    i = j;
  }
  return out;
}

Series preprocess(const RawSeries& raw, const PreprocessConfig& config, const TimeGrid& grid,
                  PreprocessReport* report) {
  config.validate();
  if (grid.period != config.period) {
    throw Error(ErrorCode::GridMismatch, "preprocess grid period differs from configured period");
  }
  for (std::size_t i = 1; i < raw.points.size(); ++i) {
    if (raw.points[i].first <= raw.points[i - 1].first) {
      throw Error(ErrorCode::InvalidArgument, "raw timestamps of " + raw.sensor_id + " are not strictly increasing");
    }
  }
  std::size_t snapped = 0;
  std::size_t filled = 0;
  std::vector<OutlierRejection> rejections;
  Series s = resample(raw, grid, config.halfwidth(), &snapped);
  s = filter_outliers(s, config.outlier_window, config.outlier_k, &rejections);
  s = interpolate_gaps(s, config.max_interp_gap, &filled);
  if (report) {
    report->sensor_id = raw.sensor_id;
    report->snapped = snapped;
    report->rejected = rejections.size();
    report->interpolated = filled;
    report->first = raw.points.empty() ? std::nullopt : std::optional(raw.points.front().first);
    report->last = raw.points.empty() ? std::nullopt : std::optional(raw.points.back().first);
    report->rejections = std::move(rejections);
  }
  return s;
}

Series preprocess(const RawSeries& raw, const PreprocessConfig& config, PreprocessReport* report) {
  config.validate();
  TimeGrid grid{0, config.period, 0};
  if (!raw.points.empty()) {
    grid = make_grid(raw.points.front().first, raw.points.back().first + 1, config.period);
  }
  return preprocess(raw, config, grid, report);
}

}  // namespace enav
