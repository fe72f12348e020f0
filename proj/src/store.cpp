#include "enav/store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "enav/error.hpp"

namespace enav {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[5] = {'E', 'N', 'A', 'V', '1'};

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::uint8_t>(u & 0xFFu));
    u = static_cast<U>(u >> 8);
  }
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    using U = std::make_unsigned_t<T>;
    U u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<U>(U{bytes_[pos_ + i]} << (8 * i));
    pos_ += sizeof(T);
    return static_cast<T>(u);
  }

  std::string take(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw Error(ErrorCode::IOFailure, "truncated chunk file");
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IOFailure, "cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IOFailure, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::IOFailure, "short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IOFailure, "cannot rename " + tmp.string() + ": " + ec.message());
}

// Exclusive per-sensor writer lock.
class LockFile {
 public:
  explicit LockFile(fs::path path) : path_(std::move(path)) {
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0) {
      if (errno == EEXIST) throw Error(ErrorCode::Locked, "sensor is locked by another writer: " + path_.string());
      throw Error(ErrorCode::IOFailure, "cannot create lock " + path_.string() + ": " + std::strerror(errno));
    }
  }
  ~LockFile() {
    ::close(fd_);
    std::error_code ec;
    fs::remove(path_, ec);
  }
  LockFile(const LockFile&) = delete;
  LockFile& operator=(const LockFile&) = delete;

 private:
  fs::path path_;
  int fd_ = -1;
};

// UTC month start of the month containing t, and of the next month.
std::pair<Timestamp, Timestamp> month_bounds(Timestamp t) {
  const CivilTime ct = civil_from_seconds(t);
  const Timestamp begin = days_from_civil(ct.year, ct.month, 1) * kSecondsPerDay;
  const int ny = ct.month == 12 ? ct.year + 1 : ct.year;
  const int nm = ct.month == 12 ? 1 : ct.month + 1;
  return {begin, days_from_civil(ny, nm, 1) * kSecondsPerDay};
}

std::string month_name(Timestamp t) {
  const CivilTime ct = civil_from_seconds(t);
  return fmt::format("{:04}-{:02}.ens", ct.year, ct.month);
}

// First timestamp >= t on the grid with the given phase.
Timestamp ceil_to_grid(Timestamp t, Duration period, Timestamp phase) {
  return t + floor_mod(phase - t, period);
}

}  // namespace

std::vector<std::uint8_t> encode_chunk(const ChunkHeader& header, const std::vector<Sample>& samples) {
  std::vector<std::uint8_t> out;
  out.reserve(5 + 1 + 2 + header.sensor_id.size() + 4 + 8 + 4 + samples.size() * 9);
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  out.push_back(static_cast<std::uint8_t>(header.kind));
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(header.sensor_id.size()));
  out.insert(out.end(), header.sensor_id.begin(), header.sensor_id.end());
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(header.period));
  put_le<std::int64_t>(out, header.start);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(samples.size()));
  for (const Sample& s : samples) {
    const double v = s.is_valid() ? s.value : std::numeric_limits<double>::quiet_NaN();
    put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    out.push_back(static_cast<std::uint8_t>(s.quality));
  }
  return out;
}

std::pair<ChunkHeader, std::vector<Sample>> decode_chunk(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (r.take(5) != std::string(kMagic, 5)) throw Error(ErrorCode::IOFailure, "bad chunk magic");
  ChunkHeader h;
  const auto kind = r.get<std::uint8_t>();
  if (kind > 1) throw Error(ErrorCode::IOFailure, "bad chunk kind");
  h.kind = static_cast<SeriesKind>(kind);
  h.sensor_id = r.take(r.get<std::uint16_t>());
  h.period = r.get<std::uint32_t>();
  h.start = r.get<std::int64_t>();
  h.count = r.get<std::uint32_t>();
  if (h.period == 0) throw Error(ErrorCode::IOFailure, "chunk with zero period");
  std::vector<Sample> samples(h.count);
  for (Sample& s : samples) {
    s.value = std::bit_cast<double>(r.get<std::uint64_t>());
    const auto q = r.get<std::uint8_t>();
    if (q > 2) throw Error(ErrorCode::IOFailure, "bad sample quality");
    s.quality = static_cast<Quality>(q);
  }
  if (!r.done()) throw Error(ErrorCode::IOFailure, "trailing bytes in chunk");
  return {std::move(h), std::move(samples)};
}

void validate_sensor_id(const std::string& id) {
  if (id.empty() || id == "." || id == ".." || id.find('/') != std::string::npos ||
      id.find('\0') != std::string::npos || id.find('\\') != std::string::npos) {
    throw Error(ErrorCode::InvalidArgument, "invalid sensor id '" + id + "'");
  }
}

SeriesStore::SeriesStore(fs::path root) : root_(std::move(root)) {}

fs::path SeriesStore::sensor_dir(const std::string& sensor_id) const {
  validate_sensor_id(sensor_id);
  return root_ / "data" / sensor_id;
}

std::optional<ChunkHeader> SeriesStore::any_header(const std::string& sensor_id) const {
  const fs::path dir = sensor_dir(sensor_id);
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) return std::nullopt;
  std::vector<fs::path> chunks;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".ens") chunks.push_back(entry.path());
  }
  if (chunks.empty()) return std::nullopt;
  std::sort(chunks.begin(), chunks.end());
  return decode_chunk(read_file(chunks.front())).first;
}

bool SeriesStore::contains(const std::string& sensor_id) const {
  return any_header(sensor_id).has_value();
}

std::optional<Duration> SeriesStore::period_of(const std::string& sensor_id) const {
  auto h = any_header(sensor_id);
  if (!h) return std::nullopt;
  return h->period;
}

std::vector<std::string> SeriesStore::sensors() const {
  std::vector<std::string> out;
  std::error_code ec;
  const fs::path data = root_ / "data";
  if (!fs::is_directory(data, ec)) return out;
  for (const auto& entry : fs::directory_iterator(data)) {
    if (entry.is_directory()) out.push_back(entry.path().filename().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void SeriesStore::write(const Series& series) const {
  const fs::path dir = sensor_dir(series.sensor_id());
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IOFailure, "cannot create " + dir.string() + ": " + ec.message());

  LockFile lock(dir / ".lock");
  const TimeGrid& grid = series.grid();
  if (auto existing = any_header(series.sensor_id())) {
    if (existing->period != grid.period || floor_mod(existing->start - grid.start, grid.period) != 0) {
      throw Error(ErrorCode::GridMismatch,
                  fmt::format("sensor {} is stored with period {} s; cannot write period {} s",
                              series.sensor_id(), existing->period, grid.period));
    }
    if (existing->kind != series.kind()) {
      throw Error(ErrorCode::KindMismatch, "sensor " + series.sensor_id() + " is stored with another kind");
    }
  }
  if (grid.empty()) return;

  Timestamp t = grid.start;
  while (t < grid.end()) {
    const auto [month_begin, month_end] = month_bounds(t);
    const Timestamp new_lo = t;
    const Timestamp new_hi = std::min(grid.end(), ceil_to_grid(month_end, grid.period, grid.start));
    const fs::path path = dir / month_name(t);

    Timestamp lo = new_lo;
    Timestamp hi = new_hi;
    std::optional<std::pair<ChunkHeader, std::vector<Sample>>> old;
    if (fs::exists(path)) {
      old = decode_chunk(read_file(path));
      if (old->first.count > 0) {
        lo = std::min(lo, old->first.start);
        hi = std::max(hi, old->first.start + static_cast<Timestamp>(old->first.count) * grid.period);
      }
    }
    std::vector<Sample> merged(static_cast<std::size_t>((hi - lo) / grid.period));
    if (old) {
      const auto off = static_cast<std::size_t>((old->first.start - lo) / grid.period);
      std::copy(old->second.begin(), old->second.end(), merged.begin() + static_cast<std::ptrdiff_t>(off));
    }
    const auto src = static_cast<std::ptrdiff_t>((new_lo - grid.start) / grid.period);
    const auto len = static_cast<std::ptrdiff_t>((new_hi - new_lo) / grid.period);
    std::copy(series.samples().begin() + src, series.samples().begin() + src + len,
              merged.begin() + static_cast<std::ptrdiff_t>((new_lo - lo) / grid.period));

    ChunkHeader h{series.kind(), series.sensor_id(), grid.period, lo, static_cast<std::uint32_t>(merged.size())};
    write_file_atomic(path, encode_chunk(h, merged));
    t = new_hi;
  }
}

Series SeriesStore::load(const std::string& sensor_id, Timestamp from, Timestamp to) const {
  const auto header = any_header(sensor_id);
  if (!header) throw Error(ErrorCode::UnknownSensor, "no stored data for sensor '" + sensor_id + "'");
  if (to < from) throw Error(ErrorCode::EndBeforeStart, "load range end precedes start");
  const Duration period = header->period;
  TimeGrid grid;
  grid.period = period;
  grid.start = from - floor_mod(from - header->start, period);
  grid.count = to > from ? static_cast<std::size_t>(floor_div(to - grid.start + period - 1, period)) : 0;
  Series out(sensor_id, grid, header->kind);
  if (grid.empty()) return out;

  const fs::path dir = sensor_dir(sensor_id);
  Timestamp t = grid.start;
  while (t < grid.end()) {
    const auto [month_begin, month_end] = month_bounds(t);
    const fs::path path = dir / month_name(t);
    if (fs::exists(path)) {
      auto [h, samples] = decode_chunk(read_file(path));
      const Timestamp lo = std::max(grid.start, h.start);
      const Timestamp hi = std::min(grid.end(), h.start + static_cast<Timestamp>(h.count) * period);
      for (Timestamp u = lo; u < hi; u += period) {
        out[static_cast<std::size_t>((u - grid.start) / period)] =
            samples[static_cast<std::size_t>((u - h.start) / period)];
      }
    }
    t = ceil_to_grid(month_end, period, grid.start);
  }
  return out;
}

void SeriesStore::write_markers(const MarkerSeries& markers) const {
  validate_sensor_id(markers.sensor_id);
  const fs::path dir = root_ / "markers";
  fs::create_directories(dir);
  std::ostringstream os;
  for (const auto& [t, label] : markers.events) os << format_iso8601_utc(t) << ',' << label << '\n';
  const std::string text = os.str();
  write_file_atomic(dir / (markers.sensor_id + ".csv"), std::vector<std::uint8_t>(text.begin(), text.end()));
}

MarkerSeries SeriesStore::load_markers(const std::string& sensor_id) const {
  validate_sensor_id(sensor_id);
  MarkerSeries out{sensor_id, {}};
  std::ifstream in(root_ / "markers" / (sensor_id + ".csv"));
  std::string line;
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    if (comma == std::string::npos) continue;
    if (auto t = parse_iso8601(line.substr(0, comma))) out.events.emplace_back(*t, line.substr(comma + 1));
  }
  return out;
}

void store_write(const fs::path& store_root, const Series& series) { SeriesStore(store_root).write(series); }

Series store_load(const fs::path& store_root, const std::string& sensor_id, Timestamp from, Timestamp to) {
  return SeriesStore(store_root).load(sensor_id, from, to);
}

}  // namespace enav
