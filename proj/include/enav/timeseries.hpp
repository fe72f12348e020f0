#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "enav/time.hpp"

namespace enav {

constexpr Duration kDefaultPeriod = 900;

/// Equidistant timestamps: start + i * period for i in [0, count).
struct TimeGrid {
  Timestamp start = 0;
  Duration period = kDefaultPeriod;
  std::size_t count = 0;

  Timestamp timestamp(std::size_t i) const { return start + static_cast<Timestamp>(i) * period; }
  /// One past the last slot.
  Timestamp end() const { return timestamp(count); }
  bool empty() const { return count == 0; }
  /// Index of an exact grid timestamp, if it lies on the grid.
  std::optional<std::size_t> index_of(Timestamp t) const;
  /// Whether both grids have the same period and phase.
  bool aligned_with(const TimeGrid& other) const;

  friend bool operator==(const TimeGrid&, const TimeGrid&) = default;
};

/// Builds the grid covering [start, end). The start snaps down to a period
/// multiple when the period divides a day, so grids anchor at UTC midnight.
TimeGrid make_grid(Timestamp start, Timestamp end, Duration period);

/// Grid phase for a period: 0 for day-dividing periods, else `hint mod period`.
Timestamp grid_phase(Duration period, Timestamp hint);

enum class Quality : std::uint8_t { Valid = 0, Missing = 1, Undefined = 2 };

struct Sample {
  double value = std::numeric_limits<double>::quiet_NaN();
  Quality quality = Quality::Missing;

  static Sample valid(double v) { return {v, Quality::Valid}; }
  static Sample missing() { return {}; }
  static Sample undefined() { return {std::numeric_limits<double>::quiet_NaN(), Quality::Undefined}; }

  bool is_valid() const { return quality == Quality::Valid; }

  /// Equality that treats non-valid samples as equal regardless of payload.
  friend bool operator==(const Sample& a, const Sample& b) {
    if (a.quality != b.quality) return false;
    return a.quality != Quality::Valid || a.value == b.value ||
           (std::isnan(a.value) && std::isnan(b.value));
  }
};

enum class SeriesKind : std::uint8_t { Numeric = 0, Boolean = 1 };

/// Equidistant sequence of samples for one real or virtual sensor.
class Series {
 public:
  Series() = default;
  /// All samples MISSING.
  Series(std::string sensor_id, TimeGrid grid, SeriesKind kind = SeriesKind::Numeric);
  Series(std::string sensor_id, TimeGrid grid, SeriesKind kind, std::vector<Sample> samples);

  const std::string& sensor_id() const { return sensor_id_; }
  const TimeGrid& grid() const { return grid_; }
  SeriesKind kind() const { return kind_; }
  std::size_t size() const { return samples_.size(); }

  const std::vector<Sample>& samples() const { return samples_; }
  std::vector<Sample>& mutable_samples() { return samples_; }
  const Sample& operator[](std::size_t i) const { return samples_[i]; }
  Sample& operator[](std::size_t i) { return samples_[i]; }

  void set_sensor_id(std::string id) { sensor_id_ = std::move(id); }

  /// Samples on `target`, MISSING where this series has no slot. Grids
  /// must be aligned.
  Series slice(const TimeGrid& target) const;

  /// Count of samples with quality `q`.
  std::size_t count(Quality q) const;

  friend bool operator==(const Series&, const Series&) = default;

 private:
  std::string sensor_id_;
  TimeGrid grid_;
  SeriesKind kind_ = SeriesKind::Numeric;
  std::vector<Sample> samples_;
};

/// Timestamped mode labels logged by the BMS.
struct MarkerSeries {
  std::string sensor_id;
  std::vector<std::pair<Timestamp, std::string>> events;

  friend bool operator==(const MarkerSeries&, const MarkerSeries&) = default;
};

}  // namespace enav
