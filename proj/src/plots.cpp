#include "dh/plots.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dh {

namespace {

constexpr int kW = 720, kH = 420;
constexpr int kMargin = 60;

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                         "#9467bd", "#8c564b", "#7f7f7f"};

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

}  // namespace

void write_line_plot_svg(const std::string& path, const std::string& title,
                         const std::string& x_label, const std::string& y_label,
                         const std::vector<PlotSeries>& series) {
    if (series.empty()) throw std::invalid_argument("write_line_plot_svg: no series");
    double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
    bool any = false;
    for (const auto& s : series)
        for (size_t i = 0; i < s.xs.size(); ++i) {
            x0 = std::min(x0, s.xs[i]);
            x1 = std::max(x1, s.xs[i]);
            y0 = std::min(y0, s.ys[i]);
            y1 = std::max(y1, s.ys[i]);
            any = true;
        }
    if (!any) throw std::invalid_argument("write_line_plot_svg: empty series");
    if (x1 - x0 < 1e-12) x1 = x0 + 1.0;
    if (y1 - y0 < 1e-12) y1 = y0 + 1.0;

    auto px = [&](double x) { return kMargin + (x - x0) / (x1 - x0) * (kW - 2 * kMargin); };
    auto py = [&](double y) { return kH - kMargin - (y - y0) / (y1 - y0) * (kH - 2 * kMargin); };

    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_line_plot_svg: cannot open " + path);
    f << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kW << "' height='" << kH
      << "' viewBox='0 0 " << kW << " " << kH << "'>\n";
    f << "<rect width='100%' height='100%' fill='white'/>\n";
    f << "<text x='" << kW / 2 << "' y='24' text-anchor='middle' font-size='16'>" << title
      << "</text>\n";
    // axes
    f << "<line x1='" << kMargin << "' y1='" << kH - kMargin << "' x2='" << kW - kMargin
      << "' y2='" << kH - kMargin << "' stroke='black'/>\n";
    f << "<line x1='" << kMargin << "' y1='" << kMargin << "' x2='" << kMargin << "' y2='"
      << kH - kMargin << "' stroke='black'/>\n";
    f << "<text x='" << kW / 2 << "' y='" << kH - 16
      << "' text-anchor='middle' font-size='12'>" << x_label << "</text>\n";
    f << "<text x='16' y='" << kH / 2 << "' text-anchor='middle' font-size='12' transform='rotate(-90 16 "
      << kH / 2 << ")'>" << y_label << "</text>\n";
    // range labels
    f << "<text x='" << kMargin << "' y='" << kH - kMargin + 16 << "' font-size='10'>"
      << fmt(x0) << "</text>\n";
    f << "<text x='" << kW - kMargin << "' y='" << kH - kMargin + 16
      << "' text-anchor='end' font-size='10'>" << fmt(x1) << "</text>\n";
    f << "<text x='" << kMargin - 4 << "' y='" << kH - kMargin
      << "' text-anchor='end' font-size='10'>" << fmt(y0) << "</text>\n";
    f << "<text x='" << kMargin - 4 << "' y='" << kMargin + 4
      << "' text-anchor='end' font-size='10'>" << fmt(y1) << "</text>\n";

    int ci = 0;
    for (const auto& s : series) {
        const char* color = kColors[ci % 7];
        f << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='";
        for (size_t i = 0; i < s.xs.size(); ++i)
            f << fmt(px(s.xs[i])) << "," << fmt(py(s.ys[i])) << " ";
        f << "'/>\n";
        f << "<text x='" << kW - kMargin + 4 << "' y='" << kMargin + 16 * ci
          << "' font-size='11' fill='" << color << "'>" << s.name << "</text>\n";
        ++ci;
    }
    f << "</svg>\n";
}

void write_bar_chart_svg(const std::string& path, const std::string& title,
                         const std::vector<std::pair<std::string, double>>& bars) {
    if (bars.empty()) throw std::invalid_argument("write_bar_chart_svg: no bars");
    double vmax = 0.0;
    for (const auto& [k, v] : bars) vmax = std::max(vmax, std::abs(v));
    if (vmax <= 0.0) vmax = 1.0;

    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_bar_chart_svg: cannot open " + path);
    f << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kW << "' height='" << kH
      << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
    f << "<text x='" << kW / 2 << "' y='24' text-anchor='middle' font-size='16'>" << title
      << "</text>\n";
    double bw = static_cast<double>(kW - 2 * kMargin) / bars.size();
    for (size_t i = 0; i < bars.size(); ++i) {
        double h = std::abs(bars[i].second) / vmax * (kH - 2 * kMargin);
        double x = kMargin + i * bw;
        f << "<rect x='" << fmt(x + bw * 0.1) << "' y='" << fmt(kH - kMargin - h) << "' width='"
          << fmt(bw * 0.8) << "' height='" << fmt(h) << "' fill='" << kColors[i % 7]
          << "'/>\n";
        f << "<text x='" << fmt(x + bw / 2) << "' y='" << kH - kMargin + 14
          << "' text-anchor='middle' font-size='10'>" << bars[i].first << "</text>\n";
        f << "<text x='" << fmt(x + bw / 2) << "' y='" << fmt(kH - kMargin - h - 4)
          << "' text-anchor='middle' font-size='10'>" << fmt(bars[i].second) << "</text>\n";
    }
    f << "</svg>\n";
}

}  // namespace dh
