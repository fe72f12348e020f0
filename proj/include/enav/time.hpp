#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace enav {

/// Seconds since the Unix epoch, always UTC.
using Timestamp = std::int64_t;
/// Length of a time span in seconds.
using Duration = std::int64_t;

constexpr std::int64_t kSecondsPerDay = 86400;

constexpr std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

constexpr std::int64_t floor_mod(std::int64_t a, std::int64_t b) {
  return a - floor_div(a, b) * b;
}

struct CivilDate {
  int year = 1970;
  int month = 1;  // 1..12
  int day = 1;    // 1..31

  friend bool operator==(const CivilDate&, const CivilDate&) = default;
};

/// Broken-down wall-clock time. weekday is ISO: 1 = Monday .. 7 = Sunday.
struct CivilTime {
  int year = 1970;
  int month = 1;
  int day = 1;
  int hour = 0;
  int minute = 0;
  int second = 0;
  int weekday = 4;

  CivilDate date() const { return {year, month, day}; }
};

// Proleptic Gregorian day counting (days relative to 1970-01-01).
std::int64_t days_from_civil(int year, int month, int day);
CivilDate civil_from_days(std::int64_t days);
int days_in_month(int year, int month);
/// ISO weekday of a day number, 1 = Monday.
int weekday_from_days(std::int64_t days);

/// Interprets the civil fields as UTC (or as a "local seconds" count).
std::int64_t seconds_from_civil(const CivilTime& ct);
CivilTime civil_from_seconds(std::int64_t seconds);

/// Parses an ISO-8601 instant `YYYY-MM-DDTHH:MM[:SS[.fff]]` followed by `Z`
/// or a numeric offset. Without an offset the text is rejected unless
/// `assume_utc` is set. Fractional seconds are truncated.
std::optional<Timestamp> parse_iso8601(std::string_view text, bool assume_utc = false);

std::string format_iso8601_utc(Timestamp t);
/// Compact form used in file names: `20110101T000000Z`.
std::string format_compact_utc(Timestamp t);

/// A period with constant UTC offset. [begin, end) in UTC.
struct OffsetSpan {
  Timestamp begin;
  Timestamp end;
  std::int32_t offset;  // seconds east of UTC
};

/// IANA time zone backed by the system's compiled TZif files.
class TimeZone {
 public:
  /// Loads `name` (e.g. "Europe/Berlin") from `zoneinfo_dir`.
  static TimeZone load(const std::string& name,
                       const std::filesystem::path& zoneinfo_dir = "/usr/share/zoneinfo");
  static TimeZone utc();

  const std::string& name() const;

  std::int32_t offset_at(Timestamp t) const;
  /// The constant-offset span containing t; lets hot loops skip lookups.
  OffsetSpan span_at(Timestamp t) const;

  CivilTime to_civil(Timestamp t) const;
  /// Converts a local wall-clock time to UTC. Ambiguous times pick the
  /// earlier instant; non-existent times map to the end of the gap.
  Timestamp to_utc(const CivilTime& local) const;

  std::string format_iso8601(Timestamp t) const;

  struct Impl;

 private:
  explicit TimeZone(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<const Impl> impl_;
};

/// Caches the current offset span while walking timestamps in order.
class CivilClock {
 public:
  explicit CivilClock(const TimeZone& tz) : tz_(&tz) {}
  CivilTime operator()(Timestamp t);
  std::int32_t offset(Timestamp t);

 private:
  const TimeZone* tz_;
  OffsetSpan span_{1, 0, 0};
};

}  // namespace enav
