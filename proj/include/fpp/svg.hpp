#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "fpp/errors.hpp"

namespace fpp {

struct SvgSeries {
    std::string name;
    std::vector<std::pair<double, double>> points;
};

// Minimal line chart, enough to eyeball study output.
inline void write_line_chart(const std::string& path, const std::string& title,
                             const std::string& xlabel, const std::string& ylabel,
                             const std::vector<SvgSeries>& series, bool log_x = false,
                             bool log_y = false) {
    const int W = 720, H = 480, ML = 70, MR = 20, MT = 40, MB = 50;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    auto tx = [&](double v) { return log_x ? std::log10(v) : v; };
    auto ty = [&](double v) { return log_y ? std::log10(std::abs(v) + 1e-300) : v; };
    for (const auto& s : series) {
        for (const auto& [x, y] : s.points) {
            xmin = std::min(xmin, tx(x));
            xmax = std::max(xmax, tx(x));
            ymin = std::min(ymin, ty(y));
            ymax = std::max(ymax, ty(y));
        }
    }
    if (!(xmin < xmax)) xmax = xmin + 1;
    if (!(ymin < ymax)) ymax = ymin + 1;
    auto px = [&](double v) { return ML + (tx(v) - xmin) / (xmax - xmin) * (W - ML - MR); };
    auto py = [&](double v) { return H - MB - (ty(v) - ymin) / (ymax - ymin) * (H - MT - MB); };

    static const char* colors[] = {"#1f6fb2", "#c23b22", "#2e8b57", "#8b5e83"};
    std::ofstream out(path);
    if (!out) throw Error("cannot open svg output " + path);
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n";
    out << "<rect width='100%' height='100%' fill='white'/>\n";
    out << "<text x='" << W / 2 << "' y='24' text-anchor='middle' font-size='16'>" << title
        << "</text>\n";
    out << "<line x1='" << ML << "' y1='" << H - MB << "' x2='" << W - MR << "' y2='" << H - MB
        << "' stroke='black'/>\n";
    out << "<line x1='" << ML << "' y1='" << MT << "' x2='" << ML << "' y2='" << H - MB
        << "' stroke='black'/>\n";
    out << "<text x='" << (ML + W - MR) / 2 << "' y='" << H - 12
        << "' text-anchor='middle' font-size='12'>" << xlabel << (log_x ? " (log10)" : "")
        << "</text>\n";
    out << "<text x='16' y='" << (MT + H - MB) / 2 << "' font-size='12' transform='rotate(-90 16 "
        << (MT + H - MB) / 2 << ")' text-anchor='middle'>" << ylabel << (log_y ? " (log10)" : "")
        << "</text>\n";
    int ci = 0;
    for (const auto& s : series) {
        const char* color = colors[ci % 4];
        out << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='";
        for (const auto& [x, y] : s.points) out << px(x) << ',' << py(y) << ' ';
        out << "'/>\n";
        for (const auto& [x, y] : s.points)
            out << "<circle cx='" << px(x) << "' cy='" << py(y) << "' r='2.5' fill='" << color
                << "'/>\n";
        out << "<text x='" << W - MR - 150 << "' y='" << MT + 16 * ci
            << "' font-size='12' fill='" << color << "'>" << s.name << "</text>\n";
        ++ci;
    }
    out << "</svg>\n";
}

}  // namespace fpp
