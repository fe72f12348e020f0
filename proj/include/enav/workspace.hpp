#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "enav/ingest.hpp"
#include "enav/lang/model.hpp"
#include "enav/preprocess.hpp"
#include "enav/store.hpp"
#include "enav/time.hpp"

namespace enav::ws {

/// `config.json`. Unknown keys are rejected.
struct WorkspaceConfig {
  std::string timezone = "UTC";
  /// Grid period for artifacts bound to no sensor.
  Duration period = kDefaultPeriod;
  /// Only the outlier and gap settings apply; periods come from sensors.
  PreprocessConfig preprocess;
  std::size_t ticket_min_steps = 4;
  /// Coverage threshold of metrics that do not set their own.
  double coverage_threshold = 0.9;
  /// Library directory, relative to the workspace root unless absolute.
  std::string library = "library";
  double eps = 0.0;

  /// Throws ConfigError.
  static WorkspaceConfig from_json(const std::string& text);
  /// Defaults when the file does not exist.
  static WorkspaceConfig load(const std::filesystem::path& file);
};

/// Parsed and analysed spec of a workspace.
struct SpecState {
  lang::AnalysisResult analysis;
  /// Parse diagnostics followed by analysis diagnostics.
  std::vector<lang::Diagnostic> diagnostics;
  bool ok() const { return !lang::has_errors(diagnostics); }
  const lang::SpecModel& model() const { return analysis.model; }
};

/// Directory layout:
///   spec/ library/ raw/ raw/inbox/ data/ virtual/ metrics/ summaries/
///   tickets/ reports/ logs/ config.json
class Workspace {
 public:
  /// Throws ConfigError or UnknownTimezone.
  static Workspace open(const std::filesystem::path& root,
                        const std::optional<std::filesystem::path>& config_file = {});

  const std::filesystem::path& root() const { return root_; }
  const WorkspaceConfig& config() const { return config_; }
  const TimeZone& tz() const { return tz_; }

  std::filesystem::path path(const std::string& rel) const { return root_ / rel; }
  std::filesystem::path library_dir() const;

  /// Physical sensors: `data/<id>/...`.
  SeriesStore data() const { return SeriesStore(root_); }
  /// Virtual sensors: `virtual/data/<rule:id|fn:id>/...`.
  SeriesStore virtuals() const { return SeriesStore(root_ / "virtual"); }

  /// `.afs` files under spec/ (or `files` when given) plus the library.
  /// Throws IOFailure when a listed file cannot be read.
  SpecState load_spec(const std::vector<std::filesystem::path>& files = {}) const;

  /// Series of a sensor, instance or virtual sensor id over [from, to);
  /// never-written ids give all-MISSING series on the declared grid.
  /// Throws UnresolvedReference for unknown ids.
  Series load_series(const lang::SpecModel& model, const std::string& id, Timestamp from, Timestamp to) const;

 private:
  std::filesystem::path root_;
  WorkspaceConfig config_;
  TimeZone tz_ = TimeZone::utc();
};

/// Exclusive `.enav.lock` in the workspace root. Throws Locked.
class WorkspaceLock {
 public:
  explicit WorkspaceLock(const std::filesystem::path& root);
  ~WorkspaceLock();
  WorkspaceLock(const WorkspaceLock&) = delete;
  WorkspaceLock& operator=(const WorkspaceLock&) = delete;

 private:
  std::filesystem::path path_;
  int fd_ = -1;
};

/// Accepted points merged into `raw/<sensor>.csv` (new values win on equal
/// timestamps). The report line is appended to `logs/import.jsonl`.
ImportReport import_into(const Workspace& ws, const std::filesystem::path& csv, const ImportMapping& mapping);

/// Points of `raw/<sensor>.csv` within [from, to).
RawSeries load_raw(const Workspace& ws, const std::string& sensor, Timestamp from, Timestamp to);

/// ISO-8601 with offset, `YYYY-MM-DD` (local midnight) or a local
/// `YYYY-MM-DDTHH:MM[:SS]`. Throws InvalidArgument.
Timestamp parse_cli_time(const std::string& text, const TimeZone& tz);

struct RunSummary {
  std::size_t imported_files = 0;
  std::size_t preprocessed = 0;
  std::size_t evaluated = 0;
  std::size_t metrics = 0;
  std::size_t tickets_changed = 0;
  std::vector<std::string> failed;  // artifact ids
  bool spec_errors = false;
};

/// import-pending, preprocess, evaluate, metrics, tickets, summaries over
/// [from, to). Per-artifact failures are reported to `err` and recorded;
/// other artifacts proceed.
RunSummary run(const Workspace& ws, Timestamp from, Timestamp to, std::ostream& err);

// Command entry points. Return 0 on success, 1 on domain errors, 2 on
// environment errors (I/O, configuration, locks).
int cmd_check(const std::filesystem::path& root, const std::optional<std::filesystem::path>& config,
              const std::vector<std::filesystem::path>& files, std::ostream& out, std::ostream& err);
int cmd_import(const std::filesystem::path& root, const std::optional<std::filesystem::path>& config,
               const std::filesystem::path& csv, const std::filesystem::path& mapping, bool markers,
               std::ostream& out, std::ostream& err);
int cmd_run(const std::filesystem::path& root, const std::optional<std::filesystem::path>& config,
            const std::string& from, const std::string& to, std::ostream& out, std::ostream& err);
int cmd_report(const std::filesystem::path& root, const std::optional<std::filesystem::path>& config,
               const std::string& report_id, const std::string& from, const std::string& to, std::ostream& out,
               std::ostream& err);
int cmd_comment(const std::filesystem::path& root, const std::optional<std::filesystem::path>& config,
                const std::string& report_id, const std::string& section, const std::string& author,
                const std::string& text, std::ostream& out, std::ostream& err);
int cmd_export(const std::filesystem::path& root, const std::optional<std::filesystem::path>& config,
               const std::string& id, const std::string& from, const std::string& to, std::ostream& out,
               std::ostream& err);

/// Exit code for a failure with `code`.
int exit_code_for(ErrorCode code);

}  // namespace enav::ws
