#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "enav/timeseries.hpp"

namespace enav {

/// Irregular logger points before grid alignment.
struct RawSeries {
  std::string sensor_id;
  std::vector<std::pair<Timestamp, double>> points;  // strictly increasing time
};

struct PreprocessConfig {
  Duration period = kDefaultPeriod;
  std::optional<Duration> snap_halfwidth;  // defaults to period / 2
  int outlier_window = 13;
  double outlier_k = 3.0;
  int max_interp_gap = 4;

  Duration halfwidth() const { return snap_halfwidth.value_or(period / 2); }
  /// Throws InvalidArgument when a parameter is out of range.
  void validate() const;
};

/// One sample rejected by the Hampel filter, kept for audit.
struct OutlierRejection {
  std::size_t index;
  Timestamp timestamp;
  double value;
  double median;
  double mad;
};

struct PreprocessReport {
  std::string sensor_id;
  std::size_t snapped = 0;
  std::size_t rejected = 0;
  std::size_t interpolated = 0;
  std::optional<Timestamp> first;
  std::optional<Timestamp> last;
  std::vector<OutlierRejection> rejections;

  /// Single-line JSON record for `logs/preprocess.jsonl`.
  std::string to_json_line() const;
};

/// Assigns each raw point to its nearest grid slot within the halfwidth;
/// each slot keeps its nearest claimant (ties go to the earlier point).
/// `snapped` receives the number of values taken from off-grid points.
Series resample(const RawSeries& raw, const TimeGrid& grid, Duration snap_halfwidth,
                std::size_t* snapped = nullptr);

/// Hampel filter: VALID samples further than k * 1.4826 * MAD from the
/// centered window median become MISSING. Windows shrink at the edges.
Series filter_outliers(const Series& series, int window, double k,
                       std::vector<OutlierRejection>* log = nullptr);

/// Linear interpolation across interior MISSING runs of at most max_gap slots.
Series interpolate_gaps(const Series& series, int max_gap, std::size_t* filled = nullptr);

/// resample, then filter_outliers, then interpolate_gaps.
Series preprocess(const RawSeries& raw, const PreprocessConfig& config, const TimeGrid& grid,
                  PreprocessReport* report = nullptr);
/// As above on the grid spanning the raw points.
Series preprocess(const RawSeries& raw, const PreprocessConfig& config, PreprocessReport* report = nullptr);

}  // namespace enav
