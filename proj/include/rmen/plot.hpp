#pragma once

// Minimal SVG line charts for decomposed curves.

#include <algorithm>
#include <cstdio>
#include <string>
#include <vector>

namespace rmen::plot {

struct Series {
  std::string label;
  std::string color;
  const std::vector<double>* values = nullptr;
};

/// One panel per series, stacked vertically, x axis in seconds.
inline std::string line_chart(const std::vector<Series>& series, double fps, const std::string& title) {
  constexpr double width = 800.0, panel = 160.0, margin = 40.0;
  const double height = margin * 2.0 + panel * static_cast<double>(series.size());
  std::string svg;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" viewBox=\"0 0 %.0f %.0f\">\n",
                width, height, width, height);
  svg += buf;
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf, "<text x=\"%.0f\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">", margin);
  svg += buf + title + "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const auto& v = *series[s].values;
    const double top = margin + panel * static_cast<double>(s), plot_h = panel - 30.0, plot_w = width - 2.0 * margin;
    std::snprintf(buf, sizeof buf, "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"none\" stroke=\"#ccc\"/>\n",
                  margin, top, plot_w, plot_h);
    svg += buf;
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" font-family=\"sans-serif\" font-size=\"12\" fill=\"%s\">",
                  margin + 4.0, top + 14.0, series[s].color.c_str());
    svg += buf + series[s].label + "</text>\n";
    if (v.empty()) continue;
    const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
    const double lo = *lo_it, range = *hi_it > *lo_it ? *hi_it - *lo_it : 1.0;
    const double dx = v.size() > 1 ? plot_w / static_cast<double>(v.size() - 1) : 0.0;
    svg += "<polyline fill=\"none\" stroke=\"" + series[s].color + "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < v.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%s%.2f,%.2f", i ? " " : "", margin + dx * static_cast<double>(i),
                    top + plot_h - (v[i] - lo) / range * plot_h);
      svg += buf;
    }
    svg += "\"/>\n";
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.1f\" y=\"%.1f\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">%.1f s</text>\n",
                  margin + plot_w, top + plot_h + 14.0, static_cast<double>(v.size() - 1) / fps);
    svg += buf;
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace rmen::plot
