#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "enav/timeseries.hpp"

namespace enav {

/// Header of one `.ens` chunk file.
struct ChunkHeader {
  SeriesKind kind = SeriesKind::Numeric;
  std::string sensor_id;
  Duration period = 0;
  Timestamp start = 0;
  std::uint32_t count = 0;
};

/// Serializes a chunk in the little-endian `ENAV1` layout.
std::vector<std::uint8_t> encode_chunk(const ChunkHeader& header, const std::vector<Sample>& samples);
/// Inverse of encode_chunk; throws IOFailure on malformed input.
std::pair<ChunkHeader, std::vector<Sample>> decode_chunk(const std::vector<std::uint8_t>& bytes);

/// File-backed per-sensor series store: `<root>/data/<sensor_id>/<YYYY-MM>.ens`,
/// one chunk per sensor and UTC calendar month.
///
/// Readers may run concurrently. Writes to one sensor are serialized by a
/// `.lock` file in the sensor directory; a second writer fails with Locked.
class SeriesStore {
 public:
  explicit SeriesStore(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }

  /// Persists `series`; overlapping samples are replaced, gaps between old
  /// and new data become MISSING.
  void write(const Series& series) const;

  /// Series over the grid covering [from, to); unpersisted slots are MISSING.
  Series load(const std::string& sensor_id, Timestamp from, Timestamp to) const;

  bool contains(const std::string& sensor_id) const;
  std::optional<Duration> period_of(const std::string& sensor_id) const;
  std::vector<std::string> sensors() const;

  std::filesystem::path sensor_dir(const std::string& sensor_id) const;

  void write_markers(const MarkerSeries& markers) const;
  MarkerSeries load_markers(const std::string& sensor_id) const;

 private:
  std::optional<ChunkHeader> any_header(const std::string& sensor_id) const;

  std::filesystem::path root_;
};

void store_write(const std::filesystem::path& store_root, const Series& series);
Series store_load(const std::filesystem::path& store_root, const std::string& sensor_id,
                  Timestamp from, Timestamp to);

/// Rejects ids that cannot be used as a single path component.
void validate_sensor_id(const std::string& id);

}  // namespace enav
