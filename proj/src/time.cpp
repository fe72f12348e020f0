#include "enav/time.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <iterator>
#include <limits>

#include "enav/error.hpp"

namespace enav {

// Day arithmetic after H. Hinnant's civil calendar algorithms.
std::int64_t days_from_civil(int year, int month, int day) {
  const std::int64_t y = static_cast<std::int64_t>(year) - (month <= 2 ? 1 : 0);
  const std::int64_t era = floor_div(y, 400);
  const std::int64_t yoe = y - era * 400;
  const std::int64_t mp = (month + 9) % 12;
  const std::int64_t doy = (153 * mp + 2) / 5 + day - 1;
  const std::int64_t doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + doe - 719468;
}

CivilDate civil_from_days(std::int64_t days) {
  const std::int64_t z = days + 719468;
  const std::int64_t era = floor_div(z, 146097);
  const std::int64_t doe = z - era * 146097;
  const std::int64_t yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const std::int64_t mp = (5 * doy + 2) / 153;
  const int d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
  const int m = static_cast<int>(mp < 10 ? mp + 3 : mp - 9);
  const int y = static_cast<int>(yoe + era * 400 + (m <= 2 ? 1 : 0));
  return {y, m, d};
}

int days_in_month(int year, int month) {
  static constexpr std::array<int, 12> kDays{31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (month == 2) {
    const bool leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
    return leap ? 29 : 28;
  }
  return kDays[static_cast<std::size_t>(month - 1)];
}

int weekday_from_days(std::int64_t days) {
  // 1970-01-01 was a Thursday (ISO 4).
  return static_cast<int>(floor_mod(days + 3, 7)) + 1;
}

std::int64_t seconds_from_civil(const CivilTime& ct) {
  return days_from_civil(ct.year, ct.month, ct.day) * kSecondsPerDay + ct.hour * 3600 +
         ct.minute * 60 + ct.second;
}

CivilTime civil_from_seconds(std::int64_t seconds) {
  const std::int64_t days = floor_div(seconds, kSecondsPerDay);
  const std::int64_t sod = seconds - days * kSecondsPerDay;
  const CivilDate date = civil_from_days(days);
  CivilTime ct;
  ct.year = date.year;
  ct.month = date.month;
  ct.day = date.day;
  ct.hour = static_cast<int>(sod / 3600);
  ct.minute = static_cast<int>((sod / 60) % 60);
  ct.second = static_cast<int>(sod % 60);
  ct.weekday = weekday_from_days(days);
  return ct;
}

namespace {

bool read_digits(std::string_view text, std::size_t& pos, std::size_t n, int& out) {
  if (pos + n > text.size()) return false;
  int value = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const char c = text[pos + i];
    if (c < '0' || c > '9') return false;
    value = value * 10 + (c - '0');
  }
  pos += n;
  out = value;
  return true;
}

bool expect(std::string_view text, std::size_t& pos, char c) {
  if (pos < text.size() && text[pos] == c) {
    ++pos;
    return true;
  }
  return false;
}

}  // namespace

std::optional<Timestamp> parse_iso8601(std::string_view text, bool assume_utc) {
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) text.remove_prefix(1);
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);

  std::size_t pos = 0;
  CivilTime ct;
  if (!read_digits(text, pos, 4, ct.year) || !expect(text, pos, '-') ||
      !read_digits(text, pos, 2, ct.month) || !expect(text, pos, '-') ||
      !read_digits(text, pos, 2, ct.day)) {
    return std::nullopt;
  }
  if (!(expect(text, pos, 'T') || expect(text, pos, 't') || expect(text, pos, ' '))) return std::nullopt;
  if (!read_digits(text, pos, 2, ct.hour) || !expect(text, pos, ':') ||
      !read_digits(text, pos, 2, ct.minute)) {
    return std::nullopt;
  }
  if (expect(text, pos, ':')) {
    if (!read_digits(text, pos, 2, ct.second)) return std::nullopt;
    if (expect(text, pos, '.') || expect(text, pos, ',')) {
      const std::size_t begin = pos;
      while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) ++pos;
      if (pos == begin) return std::nullopt;
    }
  }
  if (ct.month < 1 || ct.month > 12 || ct.day < 1 || ct.day > days_in_month(ct.year, ct.month) ||
      ct.hour > 23 || ct.minute > 59 || ct.second > 59) {
    return std::nullopt;
  }

  std::int64_t offset = 0;
  if (pos == text.size()) {
    if (!assume_utc) return std::nullopt;
  } else if (expect(text, pos, 'Z') || expect(text, pos, 'z')) {
  } else if (text[pos] == '+' || text[pos] == '-') {
    const int sign = text[pos] == '-' ? -1 : 1;
    ++pos;
    int hh = 0;
    int mm = 0;
    if (!read_digits(text, pos, 2, hh)) return std::nullopt;
    if (pos < text.size()) {
      expect(text, pos, ':');
      if (!read_digits(text, pos, 2, mm)) return std::nullopt;
    }
    if (hh > 23 || mm > 59) return std::nullopt;
    offset = sign * (hh * 3600 + mm * 60);
  } else {
    return std::nullopt;
  }
  if (pos != text.size()) return std::nullopt;
  return seconds_from_civil(ct) - offset;
}

std::string format_iso8601_utc(Timestamp t) {
  const CivilTime ct = civil_from_seconds(t);
  return fmt::format("{:04}-{:02}-{:02}T{:02}:{:02}:{:02}Z", ct.year, ct.month, ct.day, ct.hour,
                     ct.minute, ct.second);
}

std::string format_compact_utc(Timestamp t) {
  const CivilTime ct = civil_from_seconds(t);
  return fmt::format("{:04}{:02}{:02}T{:02}{:02}{:02}Z", ct.year, ct.month, ct.day, ct.hour,
                     ct.minute, ct.second);
}

// ---------------------------------------------------------------------------
// TZif

namespace {

constexpr Timestamp kMinTime = std::numeric_limits<Timestamp>::min() / 2;
constexpr Timestamp kMaxTime = std::numeric_limits<Timestamp>::max() / 2;

// One transition date of a POSIX TZ rule (Mm.w.d, Jn or n).
struct RuleDate {
  enum class Kind { MonthWeekDay, JulianNoLeap, JulianZero } kind = Kind::MonthWeekDay;
  int month = 0;
  int week = 0;
  int weekday = 0;  // 0 = Sunday
  int day = 0;
  std::int32_t time = 7200;  // local seconds after midnight

  std::int64_t day_number(int year) const {
    switch (kind) {
      case Kind::MonthWeekDay: {
        const std::int64_t first = days_from_civil(year, month, 1);
        const int first_wd = weekday_from_days(first) % 7;  // 0 = Sunday
        int dom = 1 + (weekday - first_wd + 7) % 7 + (week - 1) * 7;
        while (dom > days_in_month(year, month)) dom -= 7;
        return first + dom - 1;
      }
      case Kind::JulianNoLeap: {
        std::int64_t d = days_from_civil(year, 1, 1) + day - 1;
        if (days_in_month(year, 2) == 29 && day >= 60) ++d;
        return d;
      }
      case Kind::JulianZero:
        return days_from_civil(year, 1, 1) + day;
    }
    return 0;
  }
};

struct PosixRule {
  std::int32_t std_offset = 0;
  std::int32_t dst_offset = 0;
  bool has_dst = false;
  RuleDate start;
  RuleDate end;
};

class PosixParser {
 public:
  explicit PosixParser(std::string_view s) : s_(s) {}

  std::optional<PosixRule> parse() {
    PosixRule rule;
    if (!name()) return std::nullopt;
    auto std_off = offset();
    if (!std_off) return std::nullopt;
    rule.std_offset = -*std_off;
    if (at_end()) return rule;
    if (!name()) return std::nullopt;
    rule.has_dst = true;
    rule.dst_offset = rule.std_offset + 3600;
    if (!at_end() && peek() != ',') {
      auto dst_off = offset();
      if (!dst_off) return std::nullopt;
      rule.dst_offset = -*dst_off;
    }
    if (at_end()) {
      // US default rules.
      rule.start = {RuleDate::Kind::MonthWeekDay, 3, 2, 0, 0, 7200};
      rule.end = {RuleDate::Kind::MonthWeekDay, 11, 1, 0, 0, 7200};
      return rule;
    }
    if (!eat(',')) return std::nullopt;
    auto start = date();
    if (!start || !eat(',')) return std::nullopt;
    auto end = date();
    if (!end || !at_end()) return std::nullopt;
    rule.start = *start;
    rule.end = *end;
    return rule;
  }

 private:
  bool at_end() const { return pos_ >= s_.size(); }
  char peek() const { return s_[pos_]; }
  bool eat(char c) {
    if (!at_end() && peek() == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  bool name() {
    if (eat('<')) {
      while (!at_end() && peek() != '>') ++pos_;
      return eat('>');
    }
    const std::size_t begin = pos_;
    while (!at_end() && std::isalpha(static_cast<unsigned char>(peek()))) ++pos_;
    return pos_ - begin >= 3;
  }

  std::optional<int> number() {
    const std::size_t begin = pos_;
    int v = 0;
    while (!at_end() && std::isdigit(static_cast<unsigned char>(peek()))) v = v * 10 + (s_[pos_++] - '0');
    if (pos_ == begin) return std::nullopt;
    return v;
  }

  // [+-]hh[:mm[:ss]] in seconds, sign as written.
  std::optional<std::int32_t> offset() {
    int sign = 1;
    if (eat('-')) {
      sign = -1;
    } else {
      eat('+');
    }
    auto h = number();
    if (!h) return std::nullopt;
    std::int32_t total = *h * 3600;
    if (eat(':')) {
      auto m = number();
      if (!m) return std::nullopt;
      total += *m * 60;
      if (eat(':')) {
        auto sec = number();
        if (!sec) return std::nullopt;
        total += *sec;
      }
    }
    return sign * total;
  }

  std::optional<RuleDate> date() {
    RuleDate d;
    if (eat('M')) {
      auto m = number();
      if (!m || !eat('.')) return std::nullopt;
      auto w = number();
      if (!w || !eat('.')) return std::nullopt;
      auto wd = number();
      if (!wd) return std::nullopt;
      d.kind = RuleDate::Kind::MonthWeekDay;
      d.month = *m;
      d.week = *w;
      d.weekday = *wd;
      if (d.month < 1 || d.month > 12 || d.week < 1 || d.week > 5 || d.weekday > 6) return std::nullopt;
    } else if (eat('J')) {
      auto n = number();
      if (!n) return std::nullopt;
      d.kind = RuleDate::Kind::JulianNoLeap;
      d.day = *n;
    } else {
      auto n = number();
      if (!n) return std::nullopt;
      d.kind = RuleDate::Kind::JulianZero;
      d.day = *n;
    }
    if (eat('/')) {
      auto t = offset();
      if (!t) return std::nullopt;
      d.time = *t;
    }
    return d;
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

std::uint32_t be32(const unsigned char* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) |
         std::uint32_t{p[3]};
}

std::int64_t be64(const unsigned char* p) {
  return static_cast<std::int64_t>((std::uint64_t{be32(p)} << 32) | be32(p + 4));
}

}  // namespace

struct TimeZone::Impl {
  std::string name;
  std::vector<Timestamp> transitions;
  std::vector<std::int32_t> offsets;  // offset in effect from transitions[i]
  std::int32_t initial_offset = 0;
  std::optional<PosixRule> footer;

  OffsetSpan footer_span(Timestamp t, Timestamp floor) const {
    const PosixRule& r = *footer;
    if (!r.has_dst) return {floor, kMaxTime, r.std_offset};
    const int year = civil_from_seconds(t + r.std_offset).year;
    // Instants where the rule switches, for the surrounding years.
    std::vector<std::pair<Timestamp, std::int32_t>> points;
    for (int y = year - 1; y <= year + 1; ++y) {
      points.emplace_back(r.start.day_number(y) * kSecondsPerDay + r.start.time - r.std_offset,
                          r.dst_offset);
      points.emplace_back(r.end.day_number(y) * kSecondsPerDay + r.end.time - r.dst_offset,
                          r.std_offset);
    }
    std::sort(points.begin(), points.end());
    for (std::size_t i = 0; i + 1 < points.size(); ++i) {
      if (points[i].first <= t && t < points[i + 1].first) {
        return {std::max(points[i].first, floor), points[i + 1].first, points[i].second};
      }
    }
    // Outside the three-year window cannot happen for t inside `year`.
    return {floor, kMaxTime, r.std_offset};
  }

  OffsetSpan span(Timestamp t) const {
    if (transitions.empty()) {
      if (footer) return footer_span(t, kMinTime);
      return {kMinTime, kMaxTime, initial_offset};
    }
    if (t < transitions.front()) return {kMinTime, transitions.front(), initial_offset};
    const auto it = std::upper_bound(transitions.begin(), transitions.end(), t);
    const auto idx = static_cast<std::size_t>(std::distance(transitions.begin(), it) - 1);
    if (idx + 1 < transitions.size()) {
      return {transitions[idx], transitions[idx + 1], offsets[idx]};
    }
    if (footer) return footer_span(t, transitions.back());
    return {transitions.back(), kMaxTime, offsets.back()};
  }
};

TimeZone TimeZone::utc() {
  auto impl = std::make_shared<Impl>();
  impl->name = "UTC";
  return TimeZone(std::move(impl));
}

TimeZone TimeZone::load(const std::string& name, const std::filesystem::path& zoneinfo_dir) {
  if (name == "UTC" || name == "Etc/UTC" || name == "Z") return utc();
  if (name.empty() || name.find("..") != std::string::npos || name.front() == '/') {
    throw Error(ErrorCode::UnknownTimezone, "invalid time zone name '" + name + "'");
  }
  std::ifstream in(zoneinfo_dir / name, std::ios::binary);
  if (!in) throw Error(ErrorCode::UnknownTimezone, "unknown time zone '" + name + "'");
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  auto fail = [&]() -> Error {
    return Error(ErrorCode::UnknownTimezone, "corrupt TZif data for '" + name + "'");
  };
  if (bytes.size() < 44 || bytes[0] != 'T' || bytes[1] != 'Z' || bytes[2] != 'i' || bytes[3] != 'f') {
    throw fail();
  }

  struct Counts {
    std::uint32_t isut, isstd, leap, time, type, chars;
  };
  auto counts_at = [&](std::size_t off) -> Counts {
    if (off + 44 > bytes.size()) throw fail();
    const unsigned char* p = bytes.data() + off + 20;
    return {be32(p), be32(p + 4), be32(p + 8), be32(p + 12), be32(p + 16), be32(p + 20)};
  };

  const char version = static_cast<char>(bytes[4]);
  std::size_t off = 0;
  Counts c = counts_at(0);
  std::size_t time_size = 4;
  if (version >= '2') {
    const std::size_t v1_len = c.time * 5 + c.type * 6 + c.chars + c.leap * 8 + c.isstd + c.isut;
    off = 44 + v1_len;
    c = counts_at(off);
    time_size = 8;
  }
  std::size_t p = off + 44;
  const std::size_t data_len =
      c.time * (time_size + 1) + c.type * 6 + c.chars + c.leap * (time_size + 4) + c.isstd + c.isut;
  if (p + data_len > bytes.size() || c.type == 0) throw fail();

  auto impl = std::make_shared<Impl>();
  impl->name = name;
  std::vector<Timestamp> times(c.time);
  for (std::uint32_t i = 0; i < c.time; ++i) {
    times[i] = time_size == 8 ? be64(&bytes[p]) : static_cast<std::int32_t>(be32(&bytes[p]));
    p += time_size;
  }
  std::vector<std::uint8_t> idx(bytes.begin() + static_cast<std::ptrdiff_t>(p),
                                bytes.begin() + static_cast<std::ptrdiff_t>(p + c.time));
  p += c.time;
  std::vector<std::int32_t> type_offsets(c.type);
  std::vector<bool> type_dst(c.type);
  for (std::uint32_t i = 0; i < c.type; ++i) {
    type_offsets[i] = static_cast<std::int32_t>(be32(&bytes[p]));
    type_dst[i] = bytes[p + 4] != 0;
    p += 6;
  }
  p += c.chars + c.leap * (time_size + 4) + c.isstd + c.isut;

  impl->initial_offset = type_offsets[0];
  for (std::uint32_t i = 0; i < c.time; ++i) {
    if (idx[i] >= c.type) throw fail();
    impl->transitions.push_back(times[i]);
    impl->offsets.push_back(type_offsets[idx[i]]);
  }

  if (version >= '2' && p < bytes.size() && bytes[p] == '\n') {
    const auto nl = std::find(bytes.begin() + static_cast<std::ptrdiff_t>(p + 1), bytes.end(), '\n');
    const std::string tz(bytes.begin() + static_cast<std::ptrdiff_t>(p + 1), nl);
    if (!tz.empty()) {
      impl->footer = PosixParser(tz).parse();
      if (!impl->footer) throw fail();
    }
  }
  return TimeZone(std::move(impl));
}

const std::string& TimeZone::name() const { return impl_->name; }

std::int32_t TimeZone::offset_at(Timestamp t) const { return impl_->span(t).offset; }

OffsetSpan TimeZone::span_at(Timestamp t) const { return impl_->span(t); }

CivilTime TimeZone::to_civil(Timestamp t) const { return civil_from_seconds(t + offset_at(t)); }

Timestamp TimeZone::to_utc(const CivilTime& local) const {
  const std::int64_t l = seconds_from_civil(local);
  std::int32_t a = offset_at(l - kSecondsPerDay);
  std::int32_t b = offset_at(l + kSecondsPerDay);
  if (a > b) std::swap(a, b);
  // Larger offset gives the earlier instant.
  for (const std::int32_t o : {b, a}) {
    const Timestamp candidate = l - o;
    if (offset_at(candidate) == o) return candidate;
  }
  // Gap: the local time was skipped; land on the transition.
  return span_at(l - b).end;
}

std::string TimeZone::format_iso8601(Timestamp t) const {
  const std::int32_t off = offset_at(t);
  const CivilTime ct = civil_from_seconds(t + off);
  if (off == 0 && impl_->name == "UTC") {
    return format_iso8601_utc(t);
  }
  const char sign = off < 0 ? '-' : '+';
  const std::int32_t a = off < 0 ? -off : off;
  return fmt::format("{:04}-{:02}-{:02}T{:02}:{:02}:{:02}{}{:02}:{:02}", ct.year, ct.month, ct.day,
                     ct.hour, ct.minute, ct.second, sign, a / 3600, (a / 60) % 60);
}

CivilTime CivilClock::operator()(Timestamp t) { return civil_from_seconds(t + offset(t)); }

std::int32_t CivilClock::offset(Timestamp t) {
  if (t < span_.begin || t >= span_.end) span_ = tz_->span_at(t);
  return span_.offset;
}

}  // namespace enav
