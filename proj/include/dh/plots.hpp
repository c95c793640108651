#pragma once

// Minimal deterministic SVG line plots for loss curves, metric bars, and
// trajectory overlays.

#include <string>
#include <vector>

namespace dh {

struct PlotSeries {
    std::string name;
    std::vector<double> xs;
    std::vector<double> ys;
};

void write_line_plot_svg(const std::string& path, const std::string& title,
                         const std::string& x_label, const std::string& y_label,
                         const std::vector<PlotSeries>& series);

void write_bar_chart_svg(const std::string& path, const std::string& title,
                         const std::vector<std::pair<std::string, double>>& bars);

}  // namespace dh
