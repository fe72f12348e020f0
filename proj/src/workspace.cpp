#include "enav/workspace.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "enav/error.hpp"
#include "enav/eval/evaluator.hpp"
#include "enav/eval/metric.hpp"
#include "enav/lang/parser.hpp"
#include "enav/report.hpp"
#include "enav/tickets.hpp"

namespace enav::ws {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

std::string read_text(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(ErrorCode::IOFailure, fmt::format("cannot read {}", file.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_atomic(const fs::path& file, const std::string& text) {
  std::error_code ec;
  fs::create_directories(file.parent_path(), ec);
  const fs::path tmp = file.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw Error(ErrorCode::IOFailure, fmt::format("cannot write {}", tmp.string()));
  }
  fs::rename(tmp, file, ec);
  if (ec) throw Error(ErrorCode::IOFailure, fmt::format("cannot replace {}: {}", file.string(), ec.message()));
}

void append_line(const fs::path& file, const std::string& line) {
  std::error_code ec;
  fs::create_directories(file.parent_path(), ec);
  std::ofstream out(file, std::ios::binary | std::ios::app);
  out << line << '\n';
  if (!out) throw Error(ErrorCode::IOFailure, fmt::format("cannot append to {}", file.string()));
}

std::vector<fs::path> afs_files(const fs::path& dir) {
  std::vector<fs::path> out;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) return out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".afs") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (const char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

Duration parse_period(const ojson& v) {
  if (v.is_number_integer()) return v.get<Duration>();
  if (!v.is_string()) throw Error(ErrorCode::ConfigError, "period must be seconds or a string like \"15min\"");
  const std::string s = v.get<std::string>();
  std::size_t pos = 0;
  long long n = 0;
  try {
    n = std::stoll(s, &pos);
  } catch (const std::exception&) {
    throw Error(ErrorCode::ConfigError, fmt::format("bad period '{}'", s));
  }
  const std::string unit = s.substr(pos);
  if (unit == "s" || unit.empty()) return n;
  if (unit == "min") return n * 60;
  if (unit == "h") return n * 3600;
  throw Error(ErrorCode::ConfigError, fmt::format("bad period unit in '{}'", s));
}

Duration period_or(Duration p, const WorkspaceConfig& c) { return p > 0 ? p : c.period; }

// Raw points of a sensor file, keyed by time.
std::map<Timestamp, double> read_raw(const fs::path& file, const std::string& sensor) {
  std::map<Timestamp, double> out;
  std::error_code ec;
  if (!fs::exists(file, ec)) return out;
  ImportMapping ident;
  ident.entries[sensor] = {sensor, 1.0, 0.0};
  const auto r = import_csv_text(read_text(file), ident, file.string());
  if (r.report.rejected > 0) {
    throw Error(ErrorCode::IOFailure, fmt::format("{}: {} unreadable rows", file.string(), r.report.rejected));
  }
  for (const auto& s : r.series) {
    for (const auto& [t, v] : s.points) out[t] = v;
  }
  return out;
}

fs::path raw_file(const Workspace& ws, const std::string& sensor) {
  validate_sensor_id(sensor);
  return ws.path("raw") / (sensor + ".csv");
}

// Rows of a metric CSV keyed by bucket start; the header is dropped.
std::map<Timestamp, std::string> metric_rows(const std::string& csv) {
  std::map<Timestamp, std::string> rows;
  std::istringstream in(csv);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      header = false;
      continue;
    }
    if (line.empty()) continue;
    if (const auto t = parse_iso8601(line.substr(0, line.find(',')))) rows[*t] = line;
  }
  return rows;
}

}  // namespace

// ---------------------------------------------------------------- config

WorkspaceConfig WorkspaceConfig::from_json(const std::string& text) {
  ojson j;
  try {
    j = ojson::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, fmt::format("config is not valid JSON: {}", e.what()));
  }
  if (!j.is_object()) throw Error(ErrorCode::ConfigError, "config must be a JSON object");
  WorkspaceConfig c;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "timezone") {
        c.timezone = v.get<std::string>();
      } else if (key == "period") {
        c.period = parse_period(v);
        if (c.period <= 0) throw Error(ErrorCode::ConfigError, "period must be positive");
      } else if (key == "preprocess") {
        if (!v.is_object()) throw Error(ErrorCode::ConfigError, "preprocess must be an object");
        for (const auto& [pk, pv] : v.items()) {
          if (pk == "snap_halfwidth") {
            c.preprocess.snap_halfwidth = parse_period(pv);
          } else if (pk == "outlier_window") {
            c.preprocess.outlier_window = pv.get<int>();
          } else if (pk == "outlier_k") {
            c.preprocess.outlier_k = pv.get<double>();
          } else if (pk == "max_interp_gap") {
            c.preprocess.max_interp_gap = pv.get<int>();
          } else {
            throw Error(ErrorCode::ConfigError, fmt::format("unknown preprocess key '{}'", pk));
          }
        }
      } else if (key == "ticket_min_steps") {
        const auto n = v.get<long long>();
        if (n < 1) throw Error(ErrorCode::ConfigError, "ticket_min_steps must be at least 1");
        c.ticket_min_steps = static_cast<std::size_t>(n);
      } else if (key == "coverage_threshold") {
        c.coverage_threshold = v.get<double>();
        if (!(c.coverage_threshold >= 0.0 && c.coverage_threshold <= 1.0)) {
          throw Error(ErrorCode::ConfigError, "coverage_threshold must lie in [0, 1]");
        }
      } else if (key == "library") {
        c.library = v.get<std::string>();
      } else if (key == "eps") {
        c.eps = v.get<double>();
        if (!(c.eps >= 0.0)) throw Error(ErrorCode::ConfigError, "eps must be non-negative");
      } else {
        throw Error(ErrorCode::ConfigError, fmt::format("unknown config key '{}'", key));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, fmt::format("config: {}", e.what()));
  }
  try {
    PreprocessConfig check = c.preprocess;
    check.period = c.period;
    check.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, fmt::format("config preprocess: {}", e.what()));
  }
  return c;
}

WorkspaceConfig WorkspaceConfig::load(const fs::path& file) {
  std::error_code ec;
  if (!fs::exists(file, ec)) return {};
  return from_json(read_text(file));
}

// ------------------------------------------------------------- workspace

Workspace Workspace::open(const fs::path& root, const std::optional<fs::path>& config_file) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) {
    throw Error(ErrorCode::IOFailure, fmt::format("workspace {} is not a directory", root.string()));
  }
  Workspace ws;
  ws.root_ = root;
  if (config_file) {
    if (!fs::exists(*config_file, ec)) {
      throw Error(ErrorCode::ConfigError, fmt::format("config file {} not found", config_file->string()));
    }
    ws.config_ = WorkspaceConfig::load(*config_file);
  } else {
    ws.config_ = WorkspaceConfig::load(root / "config.json");
  }
  ws.tz_ = ws.config_.timezone == "UTC" ? TimeZone::utc() : TimeZone::load(ws.config_.timezone);
  return ws;
}

fs::path Workspace::library_dir() const {
  const fs::path lib(config_.library);
  return lib.is_absolute() ? lib : root_ / lib;
}

SpecState Workspace::load_spec(const std::vector<fs::path>& files) const {
  const auto display = [&](const fs::path& p) {
    const fs::path rel = p.lexically_relative(root_);
    if (rel.empty() || *rel.begin() == "..") return p.string();
    return rel.string();
  };
  SpecState st;
  std::vector<lang::Fragment> work;
  std::vector<lang::Fragment> lib;
  const auto parse_all = [&](const std::vector<fs::path>& paths, std::vector<lang::Fragment>& into) {
    for (const auto& p : paths) {
      auto r = lang::parse(read_text(p), display(p));
      st.diagnostics.insert(st.diagnostics.end(), r.diagnostics.begin(), r.diagnostics.end());
      into.push_back(std::move(r.fragment));
    }
  };
  parse_all(files.empty() ? afs_files(path("spec")) : files, work);
  parse_all(afs_files(library_dir()), lib);
  st.analysis = lang::analyze(work, lib);
  st.diagnostics.insert(st.diagnostics.end(), st.analysis.diagnostics.begin(), st.analysis.diagnostics.end());
  return st;
}

Series Workspace::load_series(const lang::SpecModel& model, const std::string& id, Timestamp from,
                              Timestamp to) const {
  if (const auto it = model.sensors.find(id); it != model.sensors.end()) {
    const SeriesStore store = data();
    if (store.contains(id)) return store.load(id, from, to);
    return Series(id, make_grid(from, to, it->second.period), lang::sensor_kind(it->second));
  }
  std::string inst_id = id;
  for (const std::string prefix : {"rule:", "fn:"}) {
    if (id.rfind(prefix, 0) == 0) inst_id = id.substr(prefix.size());
  }
  const auto it = model.instances.find(inst_id);
  if (it == model.instances.end()) {
    throw Error(ErrorCode::UnresolvedReference, fmt::format("unknown series '{}'", id));
  }
  const lang::Instance& inst = it->second;
  const std::string vid = inst.virtual_sensor_id();
  const SeriesStore store = virtuals();
  if (store.contains(vid)) return store.load(vid, from, to);
  return Series(vid, make_grid(from, to, period_or(inst.period, config_)), inst.kind);
}

// ------------------------------------------------------------------ lock

WorkspaceLock::WorkspaceLock(const fs::path& root) : path_(root / ".enav.lock") {
  fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd_ < 0) {
    if (errno == EEXIST) {
      throw Error(ErrorCode::Locked, fmt::format("workspace is locked ({} exists)", path_.string()));
    }
    throw Error(ErrorCode::IOFailure, fmt::format("cannot create {}: {}", path_.string(), std::strerror(errno)));
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] const auto n = ::write(fd_, pid.data(), pid.size());
}

WorkspaceLock::~WorkspaceLock() {
  if (fd_ >= 0) {
    ::close(fd_);
    std::error_code ec;
    fs::remove(path_, ec);
  }
}

// ---------------------------------------------------------------- import

ImportReport import_into(const Workspace& ws, const fs::path& csv, const ImportMapping& mapping) {
  const ImportResult r = import_csv(csv, mapping);
  for (const auto& rs : r.series) {
    const fs::path file = raw_file(ws, rs.sensor_id);
    auto merged = read_raw(file, rs.sensor_id);
    for (const auto& [t, v] : rs.points) merged[t] = v;
    RawSeries out{rs.sensor_id, {merged.begin(), merged.end()}};
    write_text_atomic(file, export_csv(std::vector<RawSeries>{out}));
  }
  append_line(ws.path("logs") / "import.jsonl", r.report.to_json_line());
  return r.report;
}

RawSeries load_raw(const Workspace& ws, const std::string& sensor, Timestamp from, Timestamp to) {
  const auto all = read_raw(raw_file(ws, sensor), sensor);
  RawSeries out{sensor, {}};
  for (auto it = all.lower_bound(from); it != all.end() && it->first < to; ++it) out.points.emplace_back(*it);
  return out;
}

Timestamp parse_cli_time(const std::string& text, const TimeZone& tz) {
  if (const auto t = parse_iso8601(text)) return *t;
  std::optional<Timestamp> local;
  if (text.size() == 10) {
    local = parse_iso8601(text + "T00:00:00", true);
  } else {
    local = parse_iso8601(text, true);
  }
  if (!local) throw Error(ErrorCode::InvalidArgument, fmt::format("cannot parse time '{}'", text));
  return tz.to_utc(civil_from_seconds(*local));
}

// ------------------------------------------------------------------- run

namespace {

struct Runner {
  const Workspace& ws;
  const lang::SpecModel& model;
  Timestamp from;
  Timestamp to;
  std::ostream& err;
  RunSummary& sum;

  void fail(const std::string& id, const std::string& what) {
    err << fmt::format("{}: {}\n", id, what);
    sum.failed.push_back(id);
  }

  void import_pending() {
    const fs::path inbox = ws.path("raw") / "inbox";
    std::vector<fs::path> csvs;
    std::error_code ec;
    if (fs::is_directory(inbox, ec)) {
      for (const auto& e : fs::directory_iterator(inbox)) {
        if (e.is_regular_file() && e.path().extension() == ".csv") csvs.push_back(e.path());
      }
    }
    if (csvs.empty()) return;
    std::sort(csvs.begin(), csvs.end());
    const fs::path mapping_file = inbox / "mapping.json";
    if (!fs::exists(mapping_file, ec)) {
      fail("raw/inbox", "mapping.json missing; pending files not imported");
      return;
    }
    const ImportMapping mapping = ImportMapping::load(mapping_file);
    std::set<std::string> declared;
    for (const auto& [id, s] : model.sensors) declared.insert(id);
    try {
      mapping.check_sensors(declared);
    } catch (const Error& e) {
      fail("raw/inbox", e.what());
      return;
    }
    const fs::path manifest = ws.path("logs") / "imported.jsonl";
    std::set<std::string> done;
    if (fs::exists(manifest, ec)) {
      std::istringstream in(read_text(manifest));
      std::string line;
      while (std::getline(in, line)) {
        if (!line.empty()) done.insert(line);
      }
    }
    for (const auto& csv : csvs) {
      ojson entry;
      entry["file"] = csv.filename().string();
      entry["hash"] = fmt::format("{:016x}", fnv1a(read_text(csv)));
      const std::string key = entry.dump();
      if (done.count(key)) continue;
      const ImportReport rep = import_into(ws, csv, mapping);
      for (const auto& issue : rep.issues) {
        err << fmt::format("{}:{}: {}: {}\n", csv.string(), issue.line, to_string(issue.code), issue.message);
      }
      append_line(manifest, key);
      ++sum.imported_files;
    }
  }

  void preprocess_sensors() {
    const auto& cfg = ws.config().preprocess;
    for (const auto& [id, decl] : model.sensors) {
      try {
        const fs::path file = raw_file(ws, id);
        std::error_code ec;
        if (!fs::exists(file, ec)) continue;
        const Duration p = decl.period;
        const TimeGrid grid = make_grid(from, to, p);
        PreprocessConfig pc = cfg;
        pc.period = p;
        const Duration hw = pc.halfwidth();
        Series out;
        PreprocessReport rep;
        if (lang::sensor_kind(decl) == SeriesKind::Boolean) {
          const RawSeries raw = load_raw(ws, id, grid.start - hw, grid.end() + hw);
          if (raw.points.empty()) continue;
          const Series r = resample(raw, grid, hw, &rep.snapped);
          std::vector<Sample> samples = r.samples();
          for (auto& s : samples) {
            if (s.is_valid()) s.value = s.value != 0.0 ? 1.0 : 0.0;
          }
          out = Series(id, grid, SeriesKind::Boolean, std::move(samples));
        } else {
          // Context outside the range keeps the filter and gap filling
          // independent of how a period is split into runs.
          const Duration margin =
              static_cast<Duration>(std::max(pc.outlier_window / 2, pc.max_interp_gap + 1)) * p;
          const TimeGrid ext = make_grid(grid.start - margin, grid.end() + margin, p);
          const RawSeries raw = load_raw(ws, id, ext.start - hw, ext.end() + hw);
          if (raw.points.empty()) continue;
          out = preprocess(raw, pc, ext, &rep).slice(grid);
          out.set_sensor_id(id);
        }
        rep.sensor_id = id;
        ws.data().write(out);
        append_line(ws.path("logs") / "preprocess.jsonl", rep.to_json_line());
        ++sum.preprocessed;
      } catch (const Error& e) {
        fail(id, e.what());
      }
    }
  }

  std::map<std::string, Series> evaluate() {
    std::map<std::string, Series> results;
    std::map<std::string, Series> sensors;
    std::set<std::string> failed;
    for (const auto& id : model.topological_order()) {
      const auto it = model.instances.find(id);
      if (it == model.instances.end()) continue;
      const lang::Instance& inst = it->second;
      const TimeGrid grid = make_grid(from, to, period_or(inst.period, ws.config()));
      try {
        std::map<std::string, const Series*> inputs;
        for (const auto& [formal, actual] : inst.binding) {
          if (model.is_sensor(actual)) {
            auto s = sensors.find(actual);
            if (s == sensors.end()) s = sensors.emplace(actual, ws.load_series(model, actual, from, to)).first;
            inputs[actual] = &s->second;
          } else if (const auto r = results.find(actual); r != results.end()) {
            inputs[actual] = &r->second;
          } else {
            throw Error(ErrorCode::UnresolvedReference, fmt::format("input '{}' was not evaluated", actual));
          }
        }
        Series s = eval::eval_instance(inst, model, inputs, grid, ws.tz(), ws.config().eps);
        ws.virtuals().write(s);
        results.emplace(id, std::move(s));
        ++sum.evaluated;
      } catch (const Error& e) {
        fail(id, e.what());
      }
    }
    return results;
  }

  void metrics() {
    const TimeZone& tz = ws.tz();
    for (const auto& [id, decl] : model.artifacts) {
      const auto* m = std::get_if<lang::MetricDecl>(&decl);
      if (!m || !model.usable(id)) continue;
      try {
        const auto agg = lang::metric_aggregate(m->base_fn);
        if (!agg) throw Error(ErrorCode::UnresolvedReference, fmt::format("unknown aggregate '{}'", m->base_fn));
        const Timestamp bfrom = eval::bucket_floor(from, m->quantization, tz);
        const Timestamp bto = eval::bucket_next(eval::bucket_floor(to - 1, m->quantization, tz), m->quantization, tz);
        const Series ctx = ws.load_series(model, m->context, bfrom, bto);
        const double thr = m->coverage.value_or(ws.config().coverage_threshold);
        const auto ms = eval::eval_metric(id, *agg, m->quantization, thr, ctx, bfrom, bto, tz);
        const std::string fresh = eval::metric_csv(ms, tz);
        const fs::path file = ws.path("metrics") / (id + ".csv");
        std::error_code ec;
        auto rows = fs::exists(file, ec) ? metric_rows(read_text(file)) : std::map<Timestamp, std::string>{};
        for (auto& [t, line] : metric_rows(fresh)) rows[t] = line;
        std::string text = fresh.substr(0, fresh.find('\n') + 1);
        for (const auto& [t, line] : rows) text += line + "\n";
        write_text_atomic(file, text);
        ++sum.metrics;
      } catch (const Error& e) {
        fail(id, e.what());
      }
    }
  }

  void tickets(const std::map<std::string, Series>& results) {
    TicketStore store = TicketStore::open(ws.path("tickets"));
    const std::size_t min_steps = ws.config().ticket_min_steps;
    for (const auto& [id, series] : results) {
      if (series.kind() != SeriesKind::Boolean) continue;
      try {
        const lang::Instance& inst = model.instances.at(id);
        const Duration p = series.grid().period;
        const Timestamp look = series.grid().start - static_cast<Duration>(min_steps - 1) * p;
        const Series scan = ws.load_series(model, id, look, to);
        std::vector<Series> inputs;
        for (const auto& [formal, actual] : inst.binding) inputs.push_back(ws.load_series(model, actual, look, to));
        std::vector<const Series*> ptrs;
        for (const auto& s : inputs) ptrs.push_back(&s);
        const std::size_t before = store.pending_events().size();
        upsert_tickets(store, scan_violations(scan, min_steps), id, ptrs, series.grid());
        sum.tickets_changed += store.pending_events().size() - before;
      } catch (const Error& e) {
        fail(id, e.what());
      }
    }
    store.flush();
  }

  void summaries(const std::map<std::string, Series>& results) {
    const TimeZone& tz = ws.tz();
    const Timestamp dfrom = eval::bucket_floor(from, lang::Quantization::Day, tz);
    const Timestamp dto = eval::bucket_next(eval::bucket_floor(to - 1, lang::Quantization::Day, tz),
                                            lang::Quantization::Day, tz);
    for (const auto& [id, series] : results) {
      if (series.kind() != SeriesKind::Boolean) continue;
      try {
        const auto rows = daily_quality(ws.load_series(model, id, dfrom, dto), tz);
        const fs::path file = ws.path("summaries") / (id + ".csv");
        std::error_code ec;
        auto existing = fs::exists(file, ec) ? parse_quality_csv(read_text(file)) : std::vector<QualityRow>{};
        write_text_atomic(file, quality_csv(merge_quality(std::move(existing), rows)));
      } catch (const Error& e) {
        fail(id, e.what());
      }
    }
  }
};

}  // namespace

RunSummary run(const Workspace& ws, Timestamp from, Timestamp to, std::ostream& err) {
  if (to <= from) throw Error(ErrorCode::EmptyRange, "run range is empty");
  RunSummary sum;
  const SpecState spec = ws.load_spec();
  for (const auto& d : spec.diagnostics) err << d.format() << '\n';
  sum.spec_errors = !spec.ok();
  for (const auto& id : spec.model().broken) sum.failed.push_back(id);

  Runner r{ws, spec.model(), from, to, err, sum};
  r.import_pending();
  r.preprocess_sensors();
  const auto results = r.evaluate();
  r.metrics();
  r.tickets(results);
  r.summaries(results);

  if (sum.imported_files || sum.preprocessed || sum.evaluated || sum.metrics || sum.tickets_changed ||
      !sum.failed.empty()) {
    ojson j;
    j["from"] = format_iso8601_utc(from);
    j["to"] = format_iso8601_utc(to);
    j["imported"] = sum.imported_files;
    j["preprocessed"] = sum.preprocessed;
    j["evaluated"] = sum.evaluated;
    j["metrics"] = sum.metrics;
    j["tickets_changed"] = sum.tickets_changed;
    j["failed"] = sum.failed;
    append_line(ws.path("logs") / "run.jsonl", j.dump());
  }
  return sum;
}

// -------------------------------------------------------------- commands

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::IOFailure:
    case ErrorCode::Locked:
    case ErrorCode::ConfigError:
    case ErrorCode::UnknownTimezone:
      return 2;
    default:
      return 1;
  }
}

namespace {

template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const Error& e) {
    err << "enav: " << to_string(e.code()) << ": " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "enav: " << e.what() << '\n';
    return 2;
  }
}

std::pair<Timestamp, Timestamp> cli_range(const Workspace& ws, const std::string& from, const std::string& to) {
  const Timestamp f = parse_cli_time(from, ws.tz());
  const Timestamp t = parse_cli_time(to, ws.tz());
  if (t <= f) throw Error(ErrorCode::EmptyRange, fmt::format("empty range {} .. {}", from, to));
  return {f, t};
}

fs::path report_dir(const Workspace& ws, const std::string& report_id) {
  validate_sensor_id(report_id);
  return ws.path("reports") / report_id;
}

class WorkspaceSource : public report::ReportSource {
 public:
  WorkspaceSource(const Workspace& ws, const lang::SpecModel& model) : ws_(ws), model_(model) {}

  Series series(const std::string& id, Timestamp from, Timestamp to) const override {
    return ws_.load_series(model_, id, from, to);
  }

  eval::MetricSeries metric(const std::string& id, Timestamp from, Timestamp to) const override {
    const auto* m = model_.find_as<lang::MetricDecl>(id);
    if (!m || !model_.usable(id)) throw Error(ErrorCode::UnresolvedReference, fmt::format("unknown metric '{}'", id));
    const auto agg = lang::metric_aggregate(m->base_fn);
    if (!agg) throw Error(ErrorCode::UnresolvedReference, fmt::format("unknown aggregate '{}'", m->base_fn));
    const Series ctx = ws_.load_series(model_, m->context, from, to);
    return eval::eval_metric(id, *agg, m->quantization, m->coverage.value_or(ws_.config().coverage_threshold), ctx,
                             from, to, ws_.tz());
  }

  const TimeZone& tz() const override { return ws_.tz(); }

 private:
  const Workspace& ws_;
  const lang::SpecModel& model_;
};

}  // namespace

int cmd_check(const fs::path& root, const std::optional<fs::path>& config, const std::vector<fs::path>& files,
              std::ostream&, std::ostream& err) {
  return guarded(err, [&] {
    const Workspace ws = Workspace::open(root, config);
    const SpecState st = ws.load_spec(files);
    for (const auto& d : st.diagnostics) err << d.format() << '\n';
    return st.ok() ? 0 : 1;
  });
}

int cmd_import(const fs::path& root, const std::optional<fs::path>& config, const fs::path& csv,
               const fs::path& mapping_file, bool markers, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const WorkspaceLock lock(root);
    const Workspace ws = Workspace::open(root, config);
    const ImportMapping mapping = ImportMapping::load(mapping_file);
    const SpecState st = ws.load_spec();
    std::set<std::string> declared;
    for (const auto& [id, s] : st.model().sensors) declared.insert(id);
    mapping.check_sensors(declared);
    ImportReport rep;
    if (markers) {
      const MarkerImportResult r = import_markers(csv, mapping);
      const SeriesStore store = ws.data();
      for (const auto& ms : r.markers) {
        std::map<Timestamp, std::string> merged;
        for (const auto& [t, label] : store.load_markers(ms.sensor_id).events) merged[t] = label;
        for (const auto& [t, label] : ms.events) merged[t] = label;
        store.write_markers(MarkerSeries{ms.sensor_id, {merged.begin(), merged.end()}});
      }
      append_line(ws.path("logs") / "import.jsonl", r.report.to_json_line());
      rep = r.report;
    } else {
      rep = import_into(ws, csv, mapping);
    }
    for (const auto& issue : rep.issues) {
      err << fmt::format("{}:{}: {}: {}\n", csv.string(), issue.line, to_string(issue.code), issue.message);
    }
    out << fmt::format("{}: {} rows, {} accepted, {} rejected, {} skipped\n", csv.string(), rep.total, rep.accepted,
                       rep.rejected, rep.skipped);
    return rep.rejected > 0 ? 1 : 0;
  });
}

int cmd_run(const fs::path& root, const std::optional<fs::path>& config, const std::string& from,
            const std::string& to, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const WorkspaceLock lock(root);
    const Workspace ws = Workspace::open(root, config);
    const auto [f, t] = cli_range(ws, from, to);
    const RunSummary s = run(ws, f, t, err);
    out << fmt::format("imported {} files, preprocessed {} sensors, evaluated {} artifacts, {} metrics, {} ticket "
                       "changes, {} failed\n",
                       s.imported_files, s.preprocessed, s.evaluated, s.metrics, s.tickets_changed, s.failed.size());
    return s.failed.empty() && !s.spec_errors ? 0 : 1;
  });
}

int cmd_report(const fs::path& root, const std::optional<fs::path>& config, const std::string& report_id,
               const std::string& from, const std::string& to, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Workspace ws = Workspace::open(root, config);
    const auto [f, t] = cli_range(ws, from, to);
    const fs::path dir = report_dir(ws, report_id);
    const auto tpl = report::ReportTemplate::load(dir / "template.json");
    const auto comments = report::CommentStore::load(dir / "comments.json");
    const SpecState st = ws.load_spec();
    const WorkspaceSource source(ws, st.model());
    const auto rendered = report::render_report(tpl, source, comments, f, t);
    out << report::write_report(dir, rendered, f, t).string() << '\n';
    return 0;
  });
}

int cmd_comment(const fs::path& root, const std::optional<fs::path>& config, const std::string& report_id,
                const std::string& section, const std::string& author, const std::string& text, std::ostream& out,
                std::ostream& err) {
  return guarded(err, [&] {
    const WorkspaceLock lock(root);
    const Workspace ws = Workspace::open(root, config);
    const fs::path dir = report_dir(ws, report_id);
    const auto tpl = report::ReportTemplate::load(dir / "template.json");
    auto comments = report::CommentStore::load(dir / "comments.json");
    std::string who = author;
    if (who.empty()) {
      const char* user = std::getenv("USER");
      who = user && *user ? user : "anonymous";
    }
    report::add_comment(comments, tpl, section, who, text, static_cast<Timestamp>(std::time(nullptr)));
    comments.save(dir / "comments.json");
    out << fmt::format("comment by {} added to {}/{}\n", who, report_id, section);
    return 0;
  });
}

int cmd_export(const fs::path& root, const std::optional<fs::path>& config, const std::string& id,
               const std::string& from, const std::string& to, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Workspace ws = Workspace::open(root, config);
    const auto [f, t] = cli_range(ws, from, to);
    const SpecState st = ws.load_spec();
    Series s = ws.load_series(st.model(), id, f, t);
    for (std::size_t i = 0; i < s.size(); ++i) {
      const Timestamp ts = s.grid().timestamp(i);
      if (ts < f || ts >= t) s[i] = Sample::missing();
    }
    out << export_csv(s);
    return 0;
  });
}

}  // namespace enav::ws
