// Minimal deterministic SVG line charts with a mean +- std band per series.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace rpolab {

struct BandSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> mean;
  std::vector<double> std;
};

/// Pixel geometry shared by every chart.
struct ChartLayout {
  double width = 640.0;
  double height = 400.0;
  double left = 70.0;
  double right = 20.0;
  double top = 30.0;
  double bottom = 45.0;

  double plot_width() const { return width - left - right; }
  double plot_height() const { return height - top - bottom; }
};

/// Data-space bounds; y covers every band edge.
struct ChartRange {
  double x_min = 0.0, x_max = 1.0, y_min = 0.0, y_max = 1.0;

  static ChartRange of(const std::vector<BandSeries>& series) {
    ChartRange r{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
                 std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (const auto& s : series) {
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        if (!std::isfinite(s.mean[i])) continue;
        r.x_min = std::min(r.x_min, s.x[i]);
        r.x_max = std::max(r.x_max, s.x[i]);
        r.y_min = std::min(r.y_min, s.mean[i] - s.std[i]);
        r.y_max = std::max(r.y_max, s.mean[i] + s.std[i]);
      }
    }
    if (!std::isfinite(r.x_min)) return ChartRange{};
    if (r.x_max == r.x_min) {
      r.x_min -= 0.5;
      r.x_max += 0.5;
    }
    if (r.y_max == r.y_min) {
      r.y_min -= 1.0;
      r.y_max += 1.0;
    }
    return r;
  }
};

inline double chart_px_x(const ChartLayout& l, const ChartRange& r, double x) {
  return l.left + (x - r.x_min) / (r.x_max - r.x_min) * l.plot_width();
}

inline double chart_px_y(const ChartLayout& l, const ChartRange& r, double y) {
  return l.top + (r.y_max - y) / (r.y_max - r.y_min) * l.plot_height();
}

namespace detail {

inline std::string fmt_num(double v, const char* spec = "%.2f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline const char* palette(std::size_t i) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                 "#9467bd", "#8c564b", "#e377c2", "#17becf"};
  return colors[i % 8];
}

}  // namespace detail

/// Renders series as polylines over translucent polygons (the +-1 std band).
/// Points with a non-finite mean are skipped.
inline std::string render_svg_chart(const std::vector<BandSeries>& series,
                                    const std::string& title, const std::string& x_label,
                                    const std::string& y_label, const ChartLayout& layout = {}) {
  using detail::fmt_num;
  const ChartRange range = ChartRange::of(series);
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt_num(layout.width, "%.0f")
      << "\" height=\"" << fmt_num(layout.height, "%.0f") << "\">\n";
  svg << "<rect x=\"0\" y=\"0\" width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << fmt_num(layout.width / 2) << "\" y=\"18\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"14\">" << detail::xml_escape(title)
      << "</text>\n";
  svg << "<rect class=\"frame\" x=\"" << fmt_num(layout.left) << "\" y=\"" << fmt_num(layout.top)
      << "\" width=\"" << fmt_num(layout.plot_width()) << "\" height=\""
      << fmt_num(layout.plot_height()) << "\" fill=\"none\" stroke=\"#444\"/>\n";

  for (int k = 0; k <= 4; ++k) {
    const double xv = range.x_min + (range.x_max - range.x_min) * k / 4.0;
    const double yv = range.y_min + (range.y_max - range.y_min) * k / 4.0;
    svg << "<text x=\"" << fmt_num(chart_px_x(layout, range, xv)) << "\" y=\""
        << fmt_num(layout.height - layout.bottom + 16) << "\" text-anchor=\"middle\" "
        << "font-family=\"sans-serif\" font-size=\"10\">" << fmt_num(xv, "%.4g") << "</text>\n";
    svg << "<text x=\"" << fmt_num(layout.left - 6) << "\" y=\""
        << fmt_num(chart_px_y(layout, range, yv) + 3) << "\" text-anchor=\"end\" "
        << "font-family=\"sans-serif\" font-size=\"10\">" << fmt_num(yv, "%.4g") << "</text>\n";
  }
  svg << "<text x=\"" << fmt_num(layout.left + layout.plot_width() / 2) << "\" y=\""
      << fmt_num(layout.height - 8) << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
      << "font-size=\"12\">" << detail::xml_escape(x_label) << "</text>\n";
  svg << "<text x=\"14\" y=\"" << fmt_num(layout.top + layout.plot_height() / 2)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
      << "transform=\"rotate(-90 14 " << fmt_num(layout.top + layout.plot_height() / 2) << ")\">"
      << detail::xml_escape(y_label) << "</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const BandSeries& ser = series[s];
    const char* color = detail::palette(s);
    std::ostringstream upper, lower, line;
    std::vector<std::string> lower_pts;
    for (std::size_t i = 0; i < ser.x.size(); ++i) {
      if (!std::isfinite(ser.mean[i])) continue;
      const std::string px = fmt_num(chart_px_x(layout, range, ser.x[i]));
      upper << px << ',' << fmt_num(chart_px_y(layout, range, ser.mean[i] + ser.std[i])) << ' ';
      lower_pts.push_back(px + ',' +
                          fmt_num(chart_px_y(layout, range, ser.mean[i] - ser.std[i])));
      line << px << ',' << fmt_num(chart_px_y(layout, range, ser.mean[i])) << ' ';
    }
    for (auto it = lower_pts.rbegin(); it != lower_pts.rend(); ++it) lower << *it << ' ';
    svg << "<polygon class=\"band\" data-series=\"" << detail::xml_escape(ser.label)
        << "\" points=\"" << upper.str() << lower.str() << "\" fill=\"" << color
        << "\" fill-opacity=\"0.2\" stroke=\"none\"/>\n";
    svg << "<polyline class=\"mean\" data-series=\"" << detail::xml_escape(ser.label)
        << "\" points=\"" << line.str() << "\" fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"1.5\"/>\n";
    svg << "<text x=\"" << fmt_num(layout.left + 8) << "\" y=\""
        << fmt_num(layout.top + 14 + 14.0 * static_cast<double>(s)) << "\" fill=\"" << color
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << detail::xml_escape(ser.label)
        << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace rpolab
