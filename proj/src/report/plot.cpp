#include <algorithm>
#include <cmath>
#include <map>

#include <fmt/format.h>

#include "enav/error.hpp"
#include "enav/eval/logic.hpp"
#include "enav/report.hpp"

namespace enav::report {

namespace {

constexpr int kLeft = 64;
constexpr int kRight = 16;
constexpr int kTop = 36;
constexpr int kBottom = 28;

constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"};

struct Frame {
  double x0, y0, w, h;
};

std::string num(double v) { return fmt::format("{:.2f}", v); }
std::string label(double v) { return fmt::format("{:.4g}", v); }

class Svg {
 public:
  Svg(const PlotOptions& o) : o_(o) {
    out_ = fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\" "
        "font-family=\"monospace\" font-size=\"11\">\n",
        o.width, o.height);
    out_ += fmt::format(
        "<defs><pattern id=\"{}-hatch\" width=\"6\" height=\"6\" patternUnits=\"userSpaceOnUse\" "
        "patternTransform=\"rotate(45)\"><rect width=\"6\" height=\"6\" fill=\"#ffffff\"/>"
        "<line x1=\"0\" y1=\"0\" x2=\"0\" y2=\"6\" stroke=\"#555555\" stroke-width=\"2\"/></pattern></defs>\n",
        o.id);
    out_ += fmt::format("<rect width=\"{}\" height=\"{}\" fill=\"#ffffff\"/>\n", o.width, o.height);
    if (!o.title.empty()) {
      out_ += fmt::format("<text x=\"{}\" y=\"16\" font-size=\"13\">{}</text>\n", kLeft, html_escape(o.title));
    }
  }

  Frame frame() const {
    return {static_cast<double>(kLeft), static_cast<double>(kTop), static_cast<double>(o_.width - kLeft - kRight),
            static_cast<double>(o_.height - kTop - kBottom)};
  }

  std::string hatch() const { return fmt::format("url(#{}-hatch)", o_.id); }

  void raw(const std::string& s) { out_ += s; }

  void text(double x, double y, const std::string& s, const char* anchor = "start") {
    out_ += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"{}\">{}</text>\n", num(x), num(y), anchor,
                        html_escape(s));
  }

  void rect(double x, double y, double w, double h, const std::string& fill, const char* cls) {
    out_ += fmt::format("<rect class=\"{}\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"/>\n", cls, num(x),
                        num(y), num(w), num(h), fill);
  }

  void border(const Frame& f) {
    out_ += fmt::format("<rect class=\"frame\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" "
                        "stroke=\"#333333\"/>\n",
                        num(f.x0), num(f.y0), num(f.w), num(f.h));
  }

  std::string finish() {
    out_ += "</svg>\n";
    return std::move(out_);
  }

 private:
  const PlotOptions& o_;
  std::string out_;
};

void require_same_grid(const std::vector<const Series*>& series) {
  for (const Series* s : series) {
    if (!(s->grid() == series[0]->grid())) {
      throw Error(ErrorCode::GridMismatch, fmt::format("series '{}' and '{}' are on different grids",
                                                       series[0]->sensor_id(), s->sensor_id()));
    }
  }
}

// Range of VALID values; degenerate ranges are widened by one unit.
std::pair<double, double> value_range(const std::vector<const Series*>& series) {
  double lo = INFINITY, hi = -INFINITY;
  for (const Series* s : series) {
    for (const Sample& x : s->samples()) {
      if (!x.is_valid()) continue;
      lo = std::min(lo, x.value);
      hi = std::max(hi, x.value);
    }
  }
  if (lo > hi) return {0.0, 1.0};
  if (lo == hi) return {lo - 1.0, hi + 1.0};
  return {lo, hi};
}

void time_axis(Svg& svg, const Frame& f, const TimeGrid& g, const TimeZone& tz) {
  if (g.empty()) return;
  svg.text(f.x0, f.y0 + f.h + 16, tz.format_iso8601(g.start));
  svg.text(f.x0 + f.w, f.y0 + f.h + 16, tz.format_iso8601(g.end()), "end");
}

void legend(Svg& svg, const std::vector<const Series*>& series) {
  double x = kLeft;
  for (std::size_t i = 0; i < series.size(); ++i) {
    svg.raw(fmt::format("<text x=\"{}\" y=\"30\" fill=\"{}\">{}</text>\n", num(x), kPalette[i % 6],
                        html_escape(series[i]->sensor_id())));
    x += 8.0 * static_cast<double>(series[i]->sensor_id().size()) + 16.0;
  }
}

std::string line_plot(const std::vector<const Series*>& series, const TimeZone& tz, const PlotOptions& o) {
  require_same_grid(series);
  Svg svg(o);
  const Frame f = svg.frame();
  const TimeGrid& g = series[0]->grid();
  const auto [lo, hi] = value_range(series);
  const double n = static_cast<double>(std::max<std::size_t>(g.count, 1));
  const double slot = f.w / n;
  auto X = [&](std::size_t i) { return f.x0 + slot * (static_cast<double>(i) + 0.5); };
  auto Y = [&](double v) { return f.y0 + f.h - (v - lo) / (hi - lo) * f.h; };

  for (const Series* s : series) {
    for (std::size_t i = 0; i < s->size(); ++i) {
      if ((*s)[i].quality == Quality::Undefined) svg.rect(X(i) - slot / 2, f.y0, slot, f.h, svg.hatch(), "undef");
    }
  }
  for (std::size_t k = 0; k < series.size(); ++k) {
    const Series& s = *series[k];
    const char* color = kPalette[k % 6];
    std::size_t i = 0;
    while (i < s.size()) {
      if (!s[i].is_valid()) {
        ++i;
        continue;
      }
      std::size_t j = i;
      std::string pts;
      while (j < s.size() && s[j].is_valid()) {
        if (!pts.empty()) pts += ' ';
        pts += num(X(j)) + "," + num(Y(s[j].value));
        ++j;
      }
      if (j - i == 1) {
        svg.raw(fmt::format("<circle cx=\"{}\" cy=\"{}\" r=\"1.5\" fill=\"{}\"/>\n", num(X(i)), num(Y(s[i].value)),
                            color));
      } else {
        svg.raw(fmt::format("<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.2\"/>\n", pts,
                            color));
      }
      i = j;
    }
  }
  svg.border(f);
  svg.text(f.x0 - 4, f.y0 + 4, label(hi), "end");
  svg.text(f.x0 - 4, f.y0 + f.h, label(lo), "end");
  time_axis(svg, f, g, tz);
  legend(svg, series);
  return svg.finish();
}

std::string scatter_plot(const std::vector<const Series*>& series, const PlotOptions& o) {
  if (series.size() != 2) {
    throw Error(ErrorCode::InvalidArgument, fmt::format("scatter plot takes 2 series, got {}", series.size()));
  }
  require_same_grid(series);
  Svg svg(o);
  const Frame f = svg.frame();
  const Series& xs = *series[0];
  const Series& ys = *series[1];
  const auto [xlo, xhi] = value_range({&xs});
  const auto [ylo, yhi] = value_range({&ys});
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!xs[i].is_valid() || !ys[i].is_valid()) continue;
    const double x = f.x0 + (xs[i].value - xlo) / (xhi - xlo) * f.w;
    const double y = f.y0 + f.h - (ys[i].value - ylo) / (yhi - ylo) * f.h;
    svg.raw(fmt::format("<circle cx=\"{}\" cy=\"{}\" r=\"2\" fill=\"{}\" fill-opacity=\"0.6\"/>\n", num(x), num(y),
                        kPalette[0]));
  }
  svg.border(f);
  svg.text(f.x0 - 4, f.y0 + 4, label(yhi), "end");
  svg.text(f.x0 - 4, f.y0 + f.h, label(ylo), "end");
  svg.text(f.x0, f.y0 + f.h + 16, label(xlo));
  svg.text(f.x0 + f.w, f.y0 + f.h + 16, label(xhi), "end");
  svg.text(f.x0 + f.w / 2, f.y0 + f.h + 16, xs.sensor_id() + " vs " + ys.sensor_id(), "middle");
  return svg.finish();
}

// Three-stop blue-yellow-red ramp.
std::string ramp(double t) {
  static const double stops[3][3] = {{49, 54, 149}, {255, 255, 191}, {165, 0, 38}};
  t = std::clamp(t, 0.0, 1.0);
  const int k = t < 0.5 ? 0 : 1;
  const double u = t < 0.5 ? t * 2 : (t - 0.5) * 2;
  int c[3];
  for (int i = 0; i < 3; ++i) c[i] = static_cast<int>(std::lround(stops[k][i] + u * (stops[k + 1][i] - stops[k][i])));
  return fmt::format("#{:02x}{:02x}{:02x}", c[0], c[1], c[2]);
}

std::string carpet_plot(const std::vector<const Series*>& series, const TimeZone& tz, const PlotOptions& o) {
  require_same_grid(series);
  Svg svg(o);
  const Frame f = svg.frame();
  const TimeGrid& g = series[0]->grid();
  const auto range = value_range(series);
  const double lo = o.color_min.value_or(range.first);
  const double hi = o.color_max.value_or(range.second);

  // Columns are local calendar days, rows are time-of-day slots.
  std::vector<std::pair<std::size_t, std::size_t>> cell(g.count);
  std::size_t days = 0;
  {
    CivilClock clock(tz);
    std::int64_t prev_day = 0;
    for (std::size_t i = 0; i < g.count; ++i) {
      const CivilTime ct = clock(g.timestamp(i));
      const std::int64_t d = days_from_civil(ct.year, ct.month, ct.day);
      if (i == 0 || d != prev_day) ++days;
      prev_day = d;
      const std::int64_t sod = ct.hour * 3600 + ct.minute * 60 + ct.second;
      cell[i] = {days - 1, static_cast<std::size_t>(sod / g.period)};
    }
  }
  const std::size_t rows = static_cast<std::size_t>((kSecondsPerDay + g.period - 1) / g.period);
  const double cw = f.w / static_cast<double>(std::max<std::size_t>(days, 1));
  const double panel = f.h / static_cast<double>(series.size());
  const double ch = panel / static_cast<double>(rows);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const Series& s = *series[k];
    const double top = f.y0 + panel * static_cast<double>(k);
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double x = f.x0 + cw * static_cast<double>(cell[i].first);
      const double y = top + ch * static_cast<double>(cell[i].second);
      if (s[i].is_valid()) {
        svg.rect(x, y, cw, ch, ramp(hi > lo ? (s[i].value - lo) / (hi - lo) : 0.5), "cell");
      } else if (s[i].quality == Quality::Undefined) {
        svg.rect(x, y, cw, ch, svg.hatch(), "cell undef");
      }
    }
    svg.text(f.x0 - 4, top + 10, s.sensor_id(), "end");
  }
  svg.border(f);
  svg.text(f.x0 + f.w, 30, fmt::format("{} .. {}", label(lo), label(hi)), "end");
  time_axis(svg, f, g, tz);
  return svg.finish();
}

std::string conformance_plot(const std::vector<const Series*>& series, const TimeZone& tz, const PlotOptions& o) {
  for (const Series* s : series) {
    if (s->kind() != SeriesKind::Boolean) {
      throw Error(ErrorCode::KindMismatch,
                  fmt::format("conformance plot needs Boolean series, '{}' is numeric", s->sensor_id()));
    }
  }
  require_same_grid(series);
  Svg svg(o);
  const Frame f = svg.frame();
  const TimeGrid& g = series[0]->grid();
  const double slot = f.w / static_cast<double>(std::max<std::size_t>(g.count, 1));
  const double row = f.h / static_cast<double>(series.size());
  for (std::size_t k = 0; k < series.size(); ++k) {
    const Series& s = *series[k];
    const double top = f.y0 + row * static_cast<double>(k);
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double x = f.x0 + slot * static_cast<double>(i);
      switch (eval::to_bool(s[i])) {
        case eval::BoolValue::True: svg.rect(x, top, slot, row, "#2ca02c", "c-true"); break;
        case eval::BoolValue::False: svg.rect(x, top, slot, row, "#d62728", "c-false"); break;
        case eval::BoolValue::Missing: svg.rect(x, top, slot, row, "#bbbbbb", "c-missing"); break;
        case eval::BoolValue::Undefined: svg.rect(x, top, slot, row, svg.hatch(), "c-undefined"); break;
      }
    }
    svg.text(f.x0 - 4, top + row / 2 + 4, s.sensor_id(), "end");
  }
  svg.border(f);
  time_axis(svg, f, g, tz);
  return svg.finish();
}

}  // namespace

std::string_view to_string(PlotKind k) {
  switch (k) {
    case PlotKind::Line: return "line";
    case PlotKind::Scatter: return "scatter";
    case PlotKind::Carpet: return "carpet";
    case PlotKind::Conformance: return "conformance";
  }
  return "line";
}

std::optional<PlotKind> plot_kind_from(std::string_view s) {
  for (const auto k : {PlotKind::Line, PlotKind::Scatter, PlotKind::Carpet, PlotKind::Conformance}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

std::string emit_plot(PlotKind kind, const std::vector<const Series*>& series, const TimeZone& tz,
                      const PlotOptions& options) {
  if (series.empty()) throw Error(ErrorCode::InvalidArgument, "plot needs at least one series");
  switch (kind) {
    case PlotKind::Line: return line_plot(series, tz, options);
    case PlotKind::Scatter: return scatter_plot(series, options);
    case PlotKind::Carpet: return carpet_plot(series, tz, options);
    case PlotKind::Conformance: return conformance_plot(series, tz, options);
  }
  return {};
}

std::string html_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (const char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&#39;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

}  // namespace enav::report
