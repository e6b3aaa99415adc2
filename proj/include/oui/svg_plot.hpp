#pragma once

// Minimal static SVG line plots. Output depends only on the input data, so
// repeated renders are byte-identical.

#include "oui/trajectory_io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace oui {

struct PlotSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    std::vector<double> lower;  // optional band, same length as y
    std::vector<double> upper;
    bool right_axis = false;
};

struct PlotSpec {
    std::string title;
    std::string x_label = "step";
    std::string y_label;
    std::string y2_label;  // used when any series sits on the right axis
    bool log_y = false;
    std::vector<PlotSeries> series;
};

namespace detail {

inline constexpr std::array<const char*, 10> palette = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                                        "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

inline std::string svg_num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline std::string tick_label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

inline std::string escape_xml(const std::string& s) {
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

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();

    void include(double v) {
        if (!std::isfinite(v)) return;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    void settle() {
        if (!(lo <= hi)) lo = 0.0, hi = 1.0;
        if (lo == hi) lo -= 0.5, hi += 0.5;
    }
};

}  // namespace detail

inline std::string render_svg(const PlotSpec& spec) {
    constexpr double width = 720, height = 420;
    constexpr double left = 70, right = 70, top = 40, bottom = 55;
    const double pw = width - left - right;
    const double ph = height - top - bottom;

    auto ty = [&](double v) { return spec.log_y ? std::log10(std::max(v, 1e-300)) : v; };

    detail::Range xr, yr, y2r;
    bool has_right = false;
    for (const auto& s : spec.series) {
        for (double v : s.x) xr.include(v);
        auto& r = s.right_axis ? y2r : yr;
        has_right = has_right || s.right_axis;
        for (double v : s.y) r.include(ty(v));
        for (double v : s.lower) r.include(ty(v));
        for (double v : s.upper) r.include(ty(v));
    }
    xr.settle();
    yr.settle();
    y2r.settle();

    auto px = [&](double x) { return left + (x - xr.lo) / (xr.hi - xr.lo) * pw; };
    auto py = [&](double y, bool right_axis) {
        const auto& r = right_axis ? y2r : yr;
        return top + ph - (ty(y) - r.lo) / (r.hi - r.lo) * ph;
    };
    using detail::svg_num;

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
       << "\" viewBox=\"0 0 " << width << ' ' << height << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
       << detail::escape_xml(spec.title) << "</text>\n";
    os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
       << "\" fill=\"none\" stroke=\"#333\"/>\n";

    for (int i = 0; i <= 5; ++i) {
        const double fx = xr.lo + (xr.hi - xr.lo) * i / 5.0;
        const double x = px(fx);
        os << "<line x1=\"" << svg_num(x) << "\" y1=\"" << top + ph << "\" x2=\"" << svg_num(x) << "\" y2=\""
           << top + ph + 4 << "\" stroke=\"#333\"/>"
           << "<text x=\"" << svg_num(x) << "\" y=\"" << top + ph + 16 << "\" text-anchor=\"middle\">"
           << detail::tick_label(fx) << "</text>\n";
        const double fy = yr.lo + (yr.hi - yr.lo) * i / 5.0;
        const double y = top + ph - ph * i / 5.0;
        os << "<line x1=\"" << left - 4 << "\" y1=\"" << svg_num(y) << "\" x2=\"" << left << "\" y2=\""
           << svg_num(y) << "\" stroke=\"#333\"/>"
           << "<text x=\"" << left - 6 << "\" y=\"" << svg_num(y + 4) << "\" text-anchor=\"end\">"
           << detail::tick_label(spec.log_y ? std::pow(10.0, fy) : fy) << "</text>\n";
        if (has_right) {
            const double fy2 = y2r.lo + (y2r.hi - y2r.lo) * i / 5.0;
            os << "<text x=\"" << left + pw + 6 << "\" y=\"" << svg_num(y + 4) << "\">"
               << detail::tick_label(spec.log_y ? std::pow(10.0, fy2) : fy2) << "</text>\n";
        }
    }
    os << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 12 << "\" text-anchor=\"middle\">"
       << detail::escape_xml(spec.x_label) << "</text>\n";
    os << "<text transform=\"translate(16," << top + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
       << detail::escape_xml(spec.y_label) << "</text>\n";
    if (has_right)
        os << "<text transform=\"translate(" << width - 14 << "," << top + ph / 2
           << ") rotate(90)\" text-anchor=\"middle\">" << detail::escape_xml(spec.y2_label) << "</text>\n";

    for (std::size_t i = 0; i < spec.series.size(); ++i) {
        const auto& s = spec.series[i];
        const char* color = detail::palette[i % detail::palette.size()];
        const std::size_t n = std::min(s.x.size(), s.y.size());
        if (!s.lower.empty() && s.lower.size() == n && s.upper.size() == n && n > 0) {
            os << "<polygon fill=\"" << color << "\" fill-opacity=\"0.18\" stroke=\"none\" points=\"";
            for (std::size_t k = 0; k < n; ++k)
                os << svg_num(px(s.x[k])) << ',' << svg_num(py(s.upper[k], s.right_axis)) << ' ';
            for (std::size_t k = n; k-- > 0;)
                os << svg_num(px(s.x[k])) << ',' << svg_num(py(s.lower[k], s.right_axis)) << ' ';
            os << "\"/>\n";
        }
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.4\""
           << (s.right_axis ? " stroke-dasharray=\"5,3\"" : "") << " points=\"";
        for (std::size_t k = 0; k < n; ++k) {
            if (!std::isfinite(ty(s.y[k]))) continue;
            os << svg_num(px(s.x[k])) << ',' << svg_num(py(s.y[k], s.right_axis)) << ' ';
        }
        os << "\"/>\n";
        const double ly = top + 14 + 14 * static_cast<double>(i);
        os << "<line x1=\"" << left + 10 << "\" y1=\"" << svg_num(ly - 4) << "\" x2=\"" << left + 28 << "\" y2=\""
           << svg_num(ly - 4) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>"
           << "<text x=\"" << left + 32 << "\" y=\"" << svg_num(ly) << "\">" << detail::escape_xml(s.label)
           << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

inline PlotSeries series_from_log(const std::string& label, const Series& s) {
    PlotSeries p;
    p.label = label;
    for (std::size_t k = 0; k < s.size(); ++k) {
        p.x.push_back(static_cast<double>(s.steps[k]));
        p.y.push_back(s.values[k]);
    }
    return p;
}

}  // namespace oui
