#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "enav/error.hpp"
#include "enav/report.hpp"

namespace enav::report {

namespace {

using ojson = nlohmann::ordered_json;

std::string read_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(ErrorCode::IOFailure, fmt::format("cannot read {}", file.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& file, const std::string& text) {
  std::error_code ec;
  std::filesystem::create_directories(file.parent_path(), ec);
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Error(ErrorCode::IOFailure, fmt::format("cannot write {}", file.string()));
}

[[noreturn]] void config_error(const std::string& msg) { throw Error(ErrorCode::ConfigError, msg); }

std::vector<std::string> string_list(const ojson& v, const std::string& where) {
  if (!v.is_array()) config_error(fmt::format("{}: expected a list of ids", where));
  std::vector<std::string> out;
  for (const auto& x : v) {
    if (!x.is_string()) config_error(fmt::format("{}: expected a list of ids", where));
    out.push_back(x.get<std::string>());
  }
  return out;
}

Section parse_section(const ojson& j, std::size_t index) {
  if (!j.is_object()) config_error(fmt::format("section {} is not an object", index));
  Section s;
  if (!j.contains("id") || !j["id"].is_string() || j["id"].get<std::string>().empty()) {
    config_error(fmt::format("section {} needs a string \"id\"", index));
  }
  s.id = j["id"].get<std::string>();
  if (!j.contains("type") || !j["type"].is_string()) config_error(fmt::format("section '{}' needs a \"type\"", s.id));
  const std::string type = j["type"].get<std::string>();
  std::set<std::string> allowed{"id", "type", "title"};
  if (type == "text") {
    s.type = Section::Type::Text;
    allowed.insert("text");
  } else if (type == "metric-table") {
    s.type = Section::Type::MetricTable;
    allowed.insert("metrics");
  } else if (type == "plot") {
    s.type = Section::Type::Plot;
    allowed.insert({"kind", "series", "width", "height", "color_min", "color_max"});
  } else if (type == "rule-summary") {
    s.type = Section::Type::RuleSummary;
    allowed.insert("rules");
  } else {
    config_error(fmt::format("section '{}': unknown type '{}'", s.id, type));
  }
  for (const auto& [key, val] : j.items()) {
    if (!allowed.count(key)) config_error(fmt::format("section '{}': unknown key '{}'", s.id, key));
  }
  const std::string where = fmt::format("section '{}'", s.id);
  try {
    if (j.contains("title")) s.title = j["title"].get<std::string>();
    if (j.contains("text")) s.text = j["text"].get<std::string>();
    if (j.contains("metrics")) s.refs = string_list(j["metrics"], where);
    if (j.contains("rules")) s.refs = string_list(j["rules"], where);
    if (j.contains("series")) s.refs = string_list(j["series"], where);
    if (s.type == Section::Type::Plot) {
      const auto kind = plot_kind_from(j.value("kind", std::string("line")));
      if (!kind) config_error(fmt::format("{}: unknown plot kind", where));
      s.plot = *kind;
      s.options.width = j.value("width", s.options.width);
      s.options.height = j.value("height", s.options.height);
      if (s.options.width < 100 || s.options.height < 80) config_error(fmt::format("{}: plot too small", where));
      if (j.contains("color_min")) s.options.color_min = j["color_min"].get<double>();
      if (j.contains("color_max")) s.options.color_max = j["color_max"].get<double>();
      if (s.refs.empty()) config_error(fmt::format("{}: plot needs \"series\"", where));
    }
  } catch (const nlohmann::json::exception& e) {
    config_error(fmt::format("{}: {}", where, e.what()));
  }
  s.options.title = s.title;
  std::string pid = "s-";
  for (const char c : s.id) pid.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' ? c : '_');
  s.options.id = pid;
  return s;
}

std::string pct(double f) { return fmt::format("{:.1f}%", 100.0 * f); }

std::string render_comments(const std::vector<Comment>& cs) {
  if (cs.empty()) return {};
  std::string out = "<div class=\"comments\">\n";
  for (const auto& c : cs) {
    out += fmt::format("<div class=\"comment\"><p class=\"meta\">{} ({})</p><div class=\"comment-text\">{}</div></div>\n",
                       html_escape(c.author), format_iso8601_utc(c.at), html_escape(c.text));
  }
  out += "</div>\n";
  return out;
}

constexpr const char* kStyle =
    "body{font-family:sans-serif;max-width:60em;margin:2em auto;color:#222}"
    "table{border-collapse:collapse;margin:0.5em 0}td,th{border:1px solid #ccc;padding:2px 8px;text-align:right}"
    "th:first-child,td:first-child{text-align:left}"
    ".comments{border-left:3px solid #999;padding-left:1em;margin:1em 0}"
    ".comment-text{white-space:pre-wrap}.meta{color:#666;font-size:small;margin:0}"
    ".green{color:#2ca02c}.red{color:#d62728}";

}  // namespace

const Section* ReportTemplate::find(const std::string& section_id) const {
  for (const auto& s : sections) {
    if (s.id == section_id) return &s;
  }
  return nullptr;
}

ReportTemplate ReportTemplate::from_json(const std::string& text) {
  ojson j;
  try {
    j = ojson::parse(text);
  } catch (const nlohmann::json::exception& e) {
    config_error(fmt::format("report template is not valid JSON: {}", e.what()));
  }
  if (!j.is_object()) config_error("report template must be a JSON object");
  ReportTemplate t;
  for (const auto& [key, val] : j.items()) {
    if (key == "id" && val.is_string()) {
      t.id = val.get<std::string>();
    } else if (key == "title" && val.is_string()) {
      t.title = val.get<std::string>();
    } else if (key == "sections" && val.is_array()) {
      for (std::size_t i = 0; i < val.size(); ++i) t.sections.push_back(parse_section(val[i], i));
    } else {
      config_error(fmt::format("report template: unknown or mistyped key '{}'", key));
    }
  }
  std::set<std::string> seen;
  for (const auto& s : t.sections) {
    if (!seen.insert(s.id).second) config_error(fmt::format("duplicate section id '{}'", s.id));
  }
  return t;
}

ReportTemplate ReportTemplate::load(const std::filesystem::path& file) { return from_json(read_file(file)); }

std::string CommentStore::to_json() const {
  ojson j = ojson::object();
  for (const auto& [sid, cs] : sections) {
    ojson arr = ojson::array();
    for (const auto& c : cs) arr.push_back({{"author", c.author}, {"at", format_iso8601_utc(c.at)}, {"text", c.text}});
    j[sid] = arr;
  }
  return j.dump(2) + "\n";
}

CommentStore CommentStore::from_json(const std::string& text) {
  CommentStore s;
  try {
    const ojson j = ojson::parse(text);
    if (!j.is_object()) throw Error(ErrorCode::IOFailure, "comments file must be a JSON object");
    for (const auto& [sid, arr] : j.items()) {
      auto& list = s.sections[sid];
      for (const auto& c : arr) {
        const auto at = parse_iso8601(c.at("at").get<std::string>());
        if (!at) throw Error(ErrorCode::IOFailure, fmt::format("comment in '{}' has a bad timestamp", sid));
        list.push_back({c.at("author").get<std::string>(), *at, c.at("text").get<std::string>()});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::IOFailure, fmt::format("malformed comments file: {}", e.what()));
  }
  return s;
}

CommentStore CommentStore::load(const std::filesystem::path& file) {
  if (!std::filesystem::exists(file)) return {};
  return from_json(read_file(file));
}

void CommentStore::save(const std::filesystem::path& file) const {
  const auto tmp = std::filesystem::path(file.string() + ".tmp");
  write_file(tmp, to_json());
  std::error_code ec;
  std::filesystem::rename(tmp, file, ec);
  if (ec) throw Error(ErrorCode::IOFailure, fmt::format("cannot replace {}: {}", file.string(), ec.message()));
}

void add_comment(CommentStore& store, const ReportTemplate& tpl, const std::string& section_id,
                 const std::string& author, const std::string& text, Timestamp at) {
  if (!tpl.find(section_id)) {
    throw Error(ErrorCode::UnknownSection,
                fmt::format("report '{}' has no section '{}'", tpl.id, section_id));
  }
  store.sections[section_id].push_back({author, at, text});
}

RenderedReport render_report(const ReportTemplate& tpl, const ReportSource& source, const CommentStore& comments,
                             Timestamp from, Timestamp to) {
  const TimeZone& tz = source.tz();
  RenderedReport r;
  std::string& h = r.html;
  const std::string title = tpl.title.empty() ? tpl.id : tpl.title;
  h += "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\">";
  h += fmt::format("<title>{}</title><style>{}</style></head>\n<body>\n", html_escape(title), kStyle);
  h += fmt::format("<h1>{}</h1>\n<p class=\"range\">{} to {}</p>\n", html_escape(title), tz.format_iso8601(from),
                   tz.format_iso8601(to));

  for (const Section& s : tpl.sections) {
    h += fmt::format("<section id=\"{}\">\n", s.options.id);
    if (!s.title.empty()) h += fmt::format("<h2>{}</h2>\n", html_escape(s.title));
    switch (s.type) {
      case Section::Type::Text:
        h += fmt::format("<p>{}</p>\n", html_escape(s.text));
        break;
      case Section::Type::MetricTable:
        for (const auto& id : s.refs) {
          const eval::MetricSeries ms = source.metric(id, from, to);
          h += fmt::format("<table class=\"metric\"><caption>{}</caption>\n", html_escape(id));
          h += "<tr><th>from</th><th>to</th><th>value</th><th>coverage</th></tr>\n";
          for (const auto& b : ms.buckets) {
            h += fmt::format("<tr><td>{}</td><td>{}</td><td>{}</td><td>{}</td></tr>\n", tz.format_iso8601(b.start),
                             tz.format_iso8601(b.end), b.value ? fmt::format("{:.6g}", *b.value) : std::string(),
                             pct(b.coverage));
          }
          h += "</table>\n";
        }
        break;
      case Section::Type::Plot: {
        std::vector<Series> data;
        for (const auto& id : s.refs) data.push_back(source.series(id, from, to));
        std::vector<const Series*> ptrs;
        for (const auto& d : data) ptrs.push_back(&d);
        std::string svg = emit_plot(s.plot, ptrs, tz, s.options);
        h += "<figure>\n" + svg + "</figure>\n";
        r.plots[s.options.id + ".svg"] = std::move(svg);
        break;
      }
      case Section::Type::RuleSummary:
        h += "<table class=\"rules\">\n<tr><th>rule</th><th>TRUE</th><th>FALSE</th><th>MISSING</th>"
             "<th>UNDEFINED</th></tr>\n";
        for (const auto& id : s.refs) {
          const eval::Conformance c = eval::conformance(source.series(id, from, to));
          h += fmt::format(
              "<tr><td>{}</td><td class=\"green\">{}</td><td class=\"red\">{}</td><td>{}</td><td>{}</td></tr>\n",
              html_escape(id), pct(c.green()), pct(c.red()), pct(c.fraction(c.missing_count)),
              pct(c.fraction(c.undefined_count)));
        }
        h += "</table>\n";
        break;
    }
    if (const auto it = comments.sections.find(s.id); it != comments.sections.end()) h += render_comments(it->second);
    h += "</section>\n";
  }

  std::string orphans;
  for (const auto& [sid, cs] : comments.sections) {
    if (tpl.find(sid) || cs.empty()) continue;
    orphans += fmt::format("<h3>{}</h3>\n", html_escape(sid)) + render_comments(cs);
  }
  if (!orphans.empty()) h += "<section id=\"orphaned-comments\">\n<h2>Orphaned comments</h2>\n" + orphans + "</section>\n";
  h += "</body></html>\n";
  return r;
}

std::string range_name(Timestamp from, Timestamp to) {
  return format_compact_utc(from) + "_" + format_compact_utc(to);
}

std::filesystem::path write_report(const std::filesystem::path& report_dir, const RenderedReport& r,
                                   Timestamp from, Timestamp to) {
  const auto out = report_dir / "out";
  const std::string range = range_name(from, to);
  for (const auto& [name, svg] : r.plots) write_file(out / "plots" / (range + "_" + name), svg);
  const auto html = out / (range + ".html");
  write_file(html, r.html);
  return html;
}

}  // namespace enav::report
