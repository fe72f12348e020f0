#include "enav/timeseries.hpp"

#include <algorithm>

#include "enav/error.hpp"

namespace enav {

std::optional<std::size_t> TimeGrid::index_of(Timestamp t) const {
  if (t < start || t >= end()) return std::nullopt;
  const Timestamp delta = t - start;
  if (delta % period != 0) return std::nullopt;
  return static_cast<std::size_t>(delta / period);
}

bool TimeGrid::aligned_with(const TimeGrid& other) const {
  return period == other.period && floor_mod(start - other.start, period) == 0;
}

Timestamp grid_phase(Duration period, Timestamp hint) {
  if (kSecondsPerDay % period == 0) return 0;
  return floor_mod(hint, period);
}

TimeGrid make_grid(Timestamp start, Timestamp end, Duration period) {
  if (period <= 0) throw Error(ErrorCode::NonPositivePeriod, "period must be positive");
  if (end < start) throw Error(ErrorCode::EndBeforeStart, "grid end precedes start");
  TimeGrid grid;
  grid.period = period;
  grid.start = start;
  if (kSecondsPerDay % period == 0) grid.start = floor_div(start, period) * period;
  if (end > start) {
    grid.count = static_cast<std::size_t>(floor_div(end - grid.start + period - 1, period));
  }
  return grid;
}

Series::Series(std::string sensor_id, TimeGrid grid, SeriesKind kind)
    : sensor_id_(std::move(sensor_id)), grid_(grid), kind_(kind), samples_(grid.count) {}

Series::Series(std::string sensor_id, TimeGrid grid, SeriesKind kind, std::vector<Sample> samples)
    : sensor_id_(std::move(sensor_id)), grid_(grid), kind_(kind), samples_(std::move(samples)) {
  if (samples_.size() != grid_.count) {
    throw Error(ErrorCode::InvalidArgument, "sample count does not match grid for " + sensor_id_);
  }
}

Series Series::slice(const TimeGrid& target) const {
  if (!target.aligned_with(grid_) && !grid_.empty() && !target.empty()) {
    throw Error(ErrorCode::GridMismatch, "cannot slice " + sensor_id_ + " onto a misaligned grid");
  }
  Series out(sensor_id_, target, kind_);
  if (grid_.empty() || target.empty()) return out;
  const Timestamp lo = std::max(target.start, grid_.start);
  const Timestamp hi = std::min(target.end(), grid_.end());
  for (Timestamp t = lo; t < hi; t += grid_.period) {
    out.samples_[static_cast<std::size_t>((t - target.start) / target.period)] =
        samples_[static_cast<std::size_t>((t - grid_.start) / grid_.period)];
  }
  return out;
}

std::size_t Series::count(Quality q) const {
  return static_cast<std::size_t>(
      std::count_if(samples_.begin(), samples_.end(), [q](const Sample& s) { return s.quality == q; }));
}

}  // namespace enav
