#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "pcvae/dataio.hpp"

namespace pcvae {

struct SvgSeries {
  std::string label;
  std::vector<double> xs;
  std::vector<double> ys;
};

/// Hand-emitted line chart: axes, tick labels, one polyline per series and
/// a small legend. Good enough for regression artifacts.
inline std::string render_line_svg(const std::vector<SvgSeries>& series,
                                   const std::string& x_label,
                                   const std::string& y_label,
                                   const std::string& provenance) {
  const double width = 640, height = 440;
  const double left = 70, right = 20, top = 20, bottom = 60;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c",
                                  "#9467bd", "#ff7f0e", "#8c564b"};

  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  bool any = false;
  for (const SvgSeries& s : series)
    for (std::size_t i = 0; i < s.xs.size(); ++i) {
      if (!any) {
        xmin = xmax = s.xs[i];
        ymin = ymax = s.ys[i];
        any = true;
      }
      xmin = std::min(xmin, s.xs[i]);
      xmax = std::max(xmax, s.xs[i]);
      ymin = std::min(ymin, s.ys[i]);
      ymax = std::max(ymax, s.ys[i]);
    }
  if (xmax <= xmin) xmax = xmin + 1;
  if (ymax <= ymin) ymax = ymin + 1e-9;
  double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * plot_w; };
  auto py = [&](double y) {
    return top + (1.0 - (y - ymin) / (ymax - ymin)) * plot_h;
  };

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg << "<!-- " << provenance << " -->\n";
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << ' '
      << height << "\">\n";
  svg << "  <rect width=\"" << width << "\" height=\"" << height
      << "\" fill=\"white\"/>\n";
  // axes
  svg << "  <line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\""
      << left + plot_w << "\" y2=\"" << top + plot_h
      << "\" stroke=\"black\"/>\n";
  svg << "  <line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left
      << "\" y2=\"" << top + plot_h << "\" stroke=\"black\"/>\n";
  // ticks
  for (int t = 0; t <= 4; ++t) {
    double fx = xmin + (xmax - xmin) * t / 4.0;
    double fy = ymin + (ymax - ymin) * t / 4.0;
    svg << "  <text x=\"" << px(fx) << "\" y=\"" << top + plot_h + 18
        << "\" font-size=\"11\" text-anchor=\"middle\">" << format_double(
               std::round(fx * 1000.0) / 1000.0)
        << "</text>\n";
    svg << "  <text x=\"" << left - 8 << "\" y=\"" << py(fy) + 4
        << "\" font-size=\"11\" text-anchor=\"end\">"
        << format_double(std::round(fy * 10000.0) / 10000.0) << "</text>\n";
  }
  // axis labels
  svg << "  <text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 16
      << "\" font-size=\"13\" text-anchor=\"middle\">" << x_label
      << "</text>\n";
  svg << "  <text x=\"18\" y=\"" << top + plot_h / 2
      << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 "
         "18 "
      << top + plot_h / 2 << ")\">" << y_label << "</text>\n";
  // series
  for (std::size_t k = 0; k < series.size(); ++k) {
    const SvgSeries& s = series[k];
    const char* color = palette[k % 6];
    svg << "  <polyline fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.xs.size(); ++i) {
      if (i) svg << ' ';
      svg << px(s.xs[i]) << ',' << py(s.ys[i]);
    }
    svg << "\"/>\n";
    svg << "  <text x=\"" << left + plot_w - 6 << "\" y=\""
        << top + 16 + 16 * static_cast<double>(k)
        << "\" font-size=\"12\" text-anchor=\"end\" fill=\"" << color << "\">"
        << s.label << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace pcvae
