#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "enav/eval/metric.hpp"
#include "enav/time.hpp"
#include "enav/timeseries.hpp"

namespace enav::report {

enum class PlotKind { Line, Scatter, Carpet, Conformance };

std::string_view to_string(PlotKind k);
std::optional<PlotKind> plot_kind_from(std::string_view s);

struct PlotOptions {
  int width = 800;
  int height = 240;
  std::string title;
  /// Prefix of element ids, so several plots can share one HTML page.
  std::string id = "plot";
  /// Carpet colour scale; defaults to the data min/max.
  std::optional<double> color_min;
  std::optional<double> color_max;
};

/// SVG document. LINE, CARPET and CONFORMANCE take one or more series on
/// one grid, SCATTER exactly two. MISSING is left blank, UNDEFINED is
/// hatched. Output depends only on the arguments.
///
/// Throws KindMismatch (CONFORMANCE over numeric data), GridMismatch,
/// InvalidArgument (wrong series count).
std::string emit_plot(PlotKind kind, const std::vector<const Series*>& series, const TimeZone& tz,
                      const PlotOptions& options = {});

struct Section {
  enum class Type { Text, MetricTable, Plot, RuleSummary };
  std::string id;
  Type type = Type::Text;
  std::string title;
  std::string text;               // Text
  std::vector<std::string> refs;  // metric, series or rule ids
  PlotKind plot = PlotKind::Line;
  PlotOptions options;
};

/// `reports/<id>/template.json`.
struct ReportTemplate {
  std::string id;
  std::string title;
  std::vector<Section> sections;

  const Section* find(const std::string& section_id) const;

  /// Throws ConfigError on unknown keys, bad types or duplicate section ids.
  static ReportTemplate from_json(const std::string& text);
  static ReportTemplate load(const std::filesystem::path& file);
};

struct Comment {
  std::string author;
  Timestamp at = 0;
  std::string text;

  friend bool operator==(const Comment&, const Comment&) = default;
};

/// `reports/<id>/comments.json`: section id -> comments in insertion order.
struct CommentStore {
  std::map<std::string, std::vector<Comment>> sections;

  std::string to_json() const;
  static CommentStore from_json(const std::string& text);
  /// Missing file = empty store.
  static CommentStore load(const std::filesystem::path& file);
  void save(const std::filesystem::path& file) const;
};

/// Throws UnknownSection if the template has no such section.
void add_comment(CommentStore& store, const ReportTemplate& tpl, const std::string& section_id,
                 const std::string& author, const std::string& text, Timestamp at);

/// What a report needs from the workspace. Lookups of unknown ids throw
/// UnresolvedReference.
class ReportSource {
 public:
  virtual ~ReportSource() = default;
  virtual Series series(const std::string& id, Timestamp from, Timestamp to) const = 0;
  virtual eval::MetricSeries metric(const std::string& id, Timestamp from, Timestamp to) const = 0;
  virtual const TimeZone& tz() const = 0;
};

struct RenderedReport {
  std::string html;
  /// File name -> SVG, one per plot section.
  std::map<std::string, std::string> plots;
};

/// Self-contained HTML; each section's comments follow its content, and
/// comments on sections the template no longer has go to an appendix.
RenderedReport render_report(const ReportTemplate& tpl, const ReportSource& source, const CommentStore& comments,
                             Timestamp from, Timestamp to);

/// `<from>_<to>` in compact UTC form.
std::string range_name(Timestamp from, Timestamp to);

/// Writes `<report_dir>/out/<range>.html` and `<report_dir>/out/plots/<range>_*.svg`.
/// Returns the HTML path.
std::filesystem::path write_report(const std::filesystem::path& report_dir, const RenderedReport& r,
                                   Timestamp from, Timestamp to);

std::string html_escape(const std::string& s);

}  // namespace enav::report
