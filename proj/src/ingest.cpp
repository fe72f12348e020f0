#include "enav/ingest.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "enav/store.hpp"
#include "enav/time.hpp"

namespace enav {

namespace {

std::string read_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(ErrorCode::IOFailure, fmt::format("cannot read {}", file.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

// Walks data rows, handing (line number, fields) to `row`.
template <typename F>
void for_each_row(const std::string& text, const std::vector<std::string>& header, ImportReport& report, F&& row) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  bool seen_header = false;
  std::vector<std::string> fields;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (trim(line).empty()) continue;
    if (!seen_header) {
      std::vector<std::string> got;
      if (!split_csv_line(line, got)) got.clear();
      for (auto& g : got) g = std::string(trim(g));
      if (got != header) {
        std::string want;
        for (const auto& h : header) want += (want.empty() ? "" : ",") + h;
        throw Error(ErrorCode::MalformedRow,
                    fmt::format("{}:{}: expected header '{}'", report.file, lineno, want));
      }
      seen_header = true;
      continue;
    }
    ++report.total;
    if (!split_csv_line(line, fields)) {
      ++report.rejected;
      report.issues.push_back({lineno, ErrorCode::MalformedRow, "unterminated quoted field"});
      continue;
    }
    if (fields.size() != header.size()) {
      ++report.rejected;
      report.issues.push_back({lineno, ErrorCode::MalformedRow,
                               fmt::format("expected {} fields, found {}", header.size(), fields.size())});
      continue;
    }
    row(lineno, fields);
  }
  if (!seen_header && !text.empty() && !trim(text).empty()) {
    throw Error(ErrorCode::MalformedRow, fmt::format("{}: missing header", report.file));
  }
}

// Shared checks of the first two columns; returns the mapping entry or null
// after recording the row as rejected/skipped.
const MappingEntry* classify(std::size_t lineno, const std::vector<std::string>& fields, const ImportMapping& mapping,
                             std::map<std::string, Timestamp>& last, ImportReport& report, Timestamp& t) {
  const std::string point(trim(fields[1]));
  const auto it = mapping.entries.find(point);
  if (it == mapping.entries.end()) {
    ++report.skipped;
    ++report.skipped_points[point];
    return nullptr;
  }
  const auto ts = parse_iso8601(trim(fields[0]));
  if (!ts) {
    ++report.rejected;
    report.issues.push_back({lineno, ErrorCode::UnparseableTimestamp,
                             fmt::format("unparseable timestamp '{}' (ISO-8601 with Z or offset required)",
                                         std::string(trim(fields[0])))});
    return nullptr;
  }
  const auto prev = last.find(it->second.sensor);
  if (prev != last.end() && *ts <= prev->second) {
    ++report.rejected;
    report.issues.push_back({lineno, ErrorCode::MalformedRow,
                             fmt::format("timestamp {} for sensor '{}' is not after {}", format_iso8601_utc(*ts),
                                         it->second.sensor, format_iso8601_utc(prev->second))});
    return nullptr;
  }
  t = *ts;
  return &it->second;
}

}  // namespace

ImportMapping ImportMapping::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, fmt::format("mapping is not valid JSON: {}", e.what()));
  }
  if (!j.is_object()) throw Error(ErrorCode::ConfigError, "mapping must be a JSON object");
  ImportMapping m;
  for (const auto& [point, v] : j.items()) {
    if (!v.is_object()) throw Error(ErrorCode::ConfigError, fmt::format("mapping for '{}' must be an object", point));
    MappingEntry e;
    for (const auto& [key, val] : v.items()) {
      if (key == "sensor" && val.is_string()) {
        e.sensor = val.get<std::string>();
      } else if (key == "scale" && val.is_number()) {
        e.scale = val.get<double>();
      } else if (key == "offset" && val.is_number()) {
        e.offset = val.get<double>();
      } else {
        throw Error(ErrorCode::ConfigError, fmt::format("mapping for '{}': unknown or mistyped key '{}'", point, key));
      }
    }
    if (e.sensor.empty()) throw Error(ErrorCode::ConfigError, fmt::format("mapping for '{}' lacks \"sensor\"", point));
    if (e.scale == 0.0) throw Error(ErrorCode::ConfigError, fmt::format("mapping for '{}': scale must not be 0", point));
    validate_sensor_id(e.sensor);
    m.entries[point] = e;
  }
  return m;
}

ImportMapping ImportMapping::load(const std::filesystem::path& file) { return from_json(read_file(file)); }

void ImportMapping::check_sensors(const std::set<std::string>& declared) const {
  for (const auto& [point, e] : entries) {
    if (!declared.count(e.sensor)) {
      throw Error(ErrorCode::UnknownSensor,
                  fmt::format("point '{}' maps to undeclared sensor '{}'", point, e.sensor));
    }
  }
}

std::string ImportReport::to_json_line() const {
  nlohmann::ordered_json j;
  j["file"] = file;
  j["total"] = total;
  j["accepted"] = accepted;
  j["rejected"] = rejected;
  j["skipped"] = skipped;
  j["skipped_points"] = nlohmann::ordered_json::object();
  for (const auto& [p, n] : skipped_points) j["skipped_points"][p] = n;
  j["issues"] = nlohmann::ordered_json::array();
  for (const auto& i : issues) {
    j["issues"].push_back({{"line", i.line}, {"code", std::string(to_string(i.code))}, {"message", i.message}});
  }
  return j.dump();
}

bool split_csv_line(const std::string& line, std::vector<std::string>& fields) {
  fields.clear();
  std::string cur;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"' && trim(cur).empty() && !was_quoted) {
      cur.clear();
      quoted = true;
      was_quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
      was_quoted = false;
    } else if (c == '\r' && i + 1 == line.size()) {
      break;
    } else {
      cur.push_back(c);
    }
  }
  if (quoted) return false;
  fields.push_back(std::move(cur));
  return true;
}

ImportResult import_csv_text(const std::string& text, const ImportMapping& mapping, const std::string& name) {
  ImportResult res;
  res.report.file = name;
  std::map<std::string, RawSeries> by_sensor;
  std::map<std::string, Timestamp> last;
  for_each_row(text, {"timestamp", "point", "value"}, res.report,
               [&](std::size_t lineno, const std::vector<std::string>& f) {
                 Timestamp t = 0;
                 const MappingEntry* e = classify(lineno, f, mapping, last, res.report, t);
                 if (!e) return;
                 double v = 0.0;
                 if (!parse_double(f[2], v)) {
                   ++res.report.rejected;
                   res.report.issues.push_back(
                       {lineno, ErrorCode::MalformedRow, fmt::format("unparseable value '{}'", f[2])});
                   return;
                 }
                 last[e->sensor] = t;
                 RawSeries& rs = by_sensor[e->sensor];
                 rs.sensor_id = e->sensor;
                 rs.points.emplace_back(t, e->scale * v + e->offset);
                 ++res.report.accepted;
               });
  for (auto& [id, rs] : by_sensor) res.series.push_back(std::move(rs));
  return res;
}

ImportResult import_csv(const std::filesystem::path& file, const ImportMapping& mapping) {
  return import_csv_text(read_file(file), mapping, file.filename().string());
}

MarkerImportResult import_markers_text(const std::string& text, const ImportMapping& mapping,
                                       const std::string& name) {
  MarkerImportResult res;
  res.report.file = name;
  std::map<std::string, MarkerSeries> by_sensor;
  std::map<std::string, Timestamp> last;
  for_each_row(text, {"timestamp", "point", "label"}, res.report,
               [&](std::size_t lineno, const std::vector<std::string>& f) {
                 Timestamp t = 0;
                 const MappingEntry* e = classify(lineno, f, mapping, last, res.report, t);
                 if (!e) return;
                 last[e->sensor] = t;
                 MarkerSeries& ms = by_sensor[e->sensor];
                 ms.sensor_id = e->sensor;
                 ms.events.emplace_back(t, f[2]);
                 ++res.report.accepted;
               });
  for (auto& [id, ms] : by_sensor) res.markers.push_back(std::move(ms));
  return res;
}

MarkerImportResult import_markers(const std::filesystem::path& file, const ImportMapping& mapping) {
  return import_markers_text(read_file(file), mapping, file.filename().string());
}

std::string export_csv(const std::vector<RawSeries>& series) {
  std::string out = "timestamp,point,value\n";
  for (const auto& rs : series) {
    for (const auto& [t, v] : rs.points) out += fmt::format("{},{},{}\n", format_iso8601_utc(t), rs.sensor_id, v);
  }
  return out;
}

std::string export_csv(const Series& series) {
  RawSeries rs;
  rs.sensor_id = series.sensor_id();
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (series[i].is_valid()) rs.points.emplace_back(series.grid().timestamp(i), series[i].value);
  }
  return export_csv(std::vector<RawSeries>{rs});
}

}  // namespace enav
