#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "enav/error.hpp"
#include "enav/preprocess.hpp"
#include "enav/timeseries.hpp"

namespace enav {

struct MappingEntry {
  std::string sensor;
  double scale = 1.0;
  double offset = 0.0;
};

/// Source point name -> sensor, with value' = scale * value + offset.
struct ImportMapping {
  std::map<std::string, MappingEntry> entries;

  /// `{ "<point>": {"sensor": "<id>", "scale": 1.0, "offset": 0.0} }`.
  /// Throws ConfigError on unknown keys, missing sensors or zero scale.
  static ImportMapping from_json(const std::string& text);
  static ImportMapping load(const std::filesystem::path& file);

  /// Throws UnknownSensor if a mapped sensor is not in `declared`.
  void check_sensors(const std::set<std::string>& declared) const;
};

struct RowIssue {
  std::size_t line = 0;
  ErrorCode code = ErrorCode::MalformedRow;
  std::string message;
};

/// Per-file outcome. total = accepted + rejected + skipped.
struct ImportReport {
  std::string file;
  std::size_t total = 0;
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t skipped = 0;
  std::map<std::string, std::size_t> skipped_points;
  std::vector<RowIssue> issues;

  /// One JSON object for `logs/import.jsonl`.
  std::string to_json_line() const;
};

struct ImportResult {
  std::vector<RawSeries> series;  // ordered by sensor id
  ImportReport report;
};

struct MarkerImportResult {
  std::vector<MarkerSeries> markers;  // ordered by sensor id
  ImportReport report;
};

/// Long-format CSV `timestamp,point,value`. Bad rows are rejected one by
/// one (MalformedRow, UnparseableTimestamp, or a timestamp not after the
/// previous accepted one of the same sensor); unmapped points are skipped.
/// Only a missing or wrong header throws.
ImportResult import_csv_text(const std::string& text, const ImportMapping& mapping, const std::string& name = {});
ImportResult import_csv(const std::filesystem::path& file, const ImportMapping& mapping);

/// `timestamp,point,label`, same row rules as import_csv.
MarkerImportResult import_markers_text(const std::string& text, const ImportMapping& mapping,
                                       const std::string& name = {});
MarkerImportResult import_markers(const std::filesystem::path& file, const ImportMapping& mapping);

/// Rows `timestamp,point,value` for the given series, point = sensor id,
/// UTC timestamps, shortest round-trip values.
std::string export_csv(const std::vector<RawSeries>& series);
/// VALID samples of a stored series in the same format.
std::string export_csv(const Series& series);

/// Splits one CSV record; handles double-quoted fields with "" escapes.
/// Returns false on an unterminated quote.
bool split_csv_line(const std::string& line, std::vector<std::string>& fields);

}  // namespace enav
