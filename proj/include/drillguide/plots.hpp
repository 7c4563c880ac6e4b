#pragma once

// Minimal SVG box and radar plots over report data. Numbers are printed with
// fixed precision so files are byte-stable.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "drillguide/report.hpp"

namespace drillguide {

struct BoxStats {
    double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
};

/// Quartiles by linear interpolation between order statistics.
inline BoxStats box_stats(std::vector<double> v) {
    if (v.empty()) throw invalid_input("box_stats of an empty sample");
    std::sort(v.begin(), v.end());
    auto q = [&](double p) {
        const double pos = p * static_cast<double>(v.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const std::size_t hi = std::min(lo + 1, v.size() - 1);
        return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
    };
    return {v.front(), q(0.25), q(0.5), q(0.75), v.back()};
}

namespace detail {
inline std::string f2(double v) { return fixed(v, 2); }

inline std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            default: out += c;
        }
    }
    return out;
}
}  // namespace detail

/// Box plot of subject means per condition.
inline std::string box_plot_svg(const MetricBlock& block, const std::vector<std::string>& conditions) {
    using detail::f2;
    constexpr double W = 480, H = 320, left = 60, right = 20, top = 30, bottom = 40;
    double hi = 0.0;
    for (const auto& col : block.subject_means) {
        for (double v : col) hi = std::max(hi, v);
    }
    if (!(hi > 0.0)) hi = 1.0;
    hi *= 1.05;
    auto y = [&](double v) { return top + (H - top - bottom) * (1.0 - v / hi); };
    const double slot = (W - left - right) / static_cast<double>(std::max<std::size_t>(1, conditions.size()));

    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"320\" viewBox=\"0 0 480 320\">\n";
    s += "<rect width=\"480\" height=\"320\" fill=\"#ffffff\"/>\n";
    s += "<text x=\"240\" y=\"18\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">" +
         detail::xml_escape(block.metric) + "</text>\n";
    s += "<line x1=\"" + f2(left) + "\" y1=\"" + f2(top) + "\" x2=\"" + f2(left) + "\" y2=\"" + f2(H - bottom) +
         "\" stroke=\"#000000\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double v = hi * i / 4.0;
        s += "<text x=\"" + f2(left - 6) + "\" y=\"" + f2(y(v) + 4) +
             "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" + fixed(v, 2) + "</text>\n";
    }
    for (std::size_t c = 0; c < conditions.size() && c < block.subject_means.size(); ++c) {
        const BoxStats b = box_stats(block.subject_means[c]);
        const double cx = left + slot * (static_cast<double>(c) + 0.5);
        const double hw = slot * 0.25;
        s += "<g>\n";
        s += "<line x1=\"" + f2(cx) + "\" y1=\"" + f2(y(b.min)) + "\" x2=\"" + f2(cx) + "\" y2=\"" + f2(y(b.max)) +
             "\" stroke=\"#333333\"/>\n";
        s += "<rect x=\"" + f2(cx - hw) + "\" y=\"" + f2(y(b.q3)) + "\" width=\"" + f2(2 * hw) + "\" height=\"" +
             f2(y(b.q1) - y(b.q3)) + "\" fill=\"#ffd700\" stroke=\"#333333\"/>\n";
        s += "<line x1=\"" + f2(cx - hw) + "\" y1=\"" + f2(y(b.median)) + "\" x2=\"" + f2(cx + hw) + "\" y2=\"" +
             f2(y(b.median)) + "\" stroke=\"#e01010\" stroke-width=\"2\"/>\n";
        s += "<text x=\"" + f2(cx) + "\" y=\"" + f2(H - bottom + 16) +
             "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" +
             detail::xml_escape(conditions[c]) + "</text>\n";
        s += "</g>\n";
    }
    s += "</svg>\n";
    return s;
}

/// One polygon per condition over the radar axes.
inline std::string radar_svg(const StatsReport& r) {
    using detail::f2;
    constexpr double cx = 240, cy = 240, radius = 170;
    static constexpr const char* kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"};
    const std::size_t axes = r.radar_axes.size();
    int top = 1;
    for (const auto& row : r.radar) {
        for (int v : row) top = std::max(top, v);
    }
    auto xy = [&](std::size_t axis, double frac) {
        const double a = 2.0 * std::numbers::pi * static_cast<double>(axis) / static_cast<double>(axes) -
                         std::numbers::pi / 2.0;
        return std::pair{cx + radius * frac * std::cos(a), cy + radius * frac * std::sin(a)};
    };
    auto point = [&](std::size_t axis, double frac) {
        const auto [x, y] = xy(axis, frac);
        return f2(x) + "," + f2(y);
    };
    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"520\" viewBox=\"0 0 480 520\">\n";
    s += "<rect width=\"480\" height=\"520\" fill=\"#ffffff\"/>\n";
    if (axes >= 3) {
        for (int ring = 1; ring <= top; ++ring) {
            s += "<polygon points=\"";
            for (std::size_t a = 0; a < axes; ++a) s += (a ? " " : "") + point(a, static_cast<double>(ring) / top);
            s += "\" fill=\"none\" stroke=\"#cccccc\"/>\n";
        }
        for (std::size_t a = 0; a < axes; ++a) {
            const auto [ex, ey] = xy(a, 1.0);
            s += "<line x1=\"" + f2(cx) + "\" y1=\"" + f2(cy) + "\" x2=\"" + f2(ex) + "\" y2=\"" + f2(ey) +
                 "\" stroke=\"#cccccc\"/>\n";
            const auto [lx, ly] = xy(a, 1.12);
            s += "<text x=\"" + f2(lx) + "\" y=\"" + f2(ly + 4) +
                 "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" +
                 detail::xml_escape(r.radar_axes[a]) + "</text>\n";
        }
        for (std::size_t c = 0; c < r.radar.size(); ++c) {
            const char* color = kColors[c % std::size(kColors)];
            s += "<polygon points=\"";
            for (std::size_t a = 0; a < axes; ++a) {
                s += (a ? " " : "") + point(a, static_cast<double>(r.radar[c][a]) / top);
            }
            s += "\" fill=\"" + std::string(color) + "\" fill-opacity=\"0.15\" stroke=\"" + color + "\"/>\n";
        }
    }
    for (std::size_t c = 0; c < r.conditions.size(); ++c) {
        const double ly = 450 + 16.0 * static_cast<double>(c);
        s += "<rect x=\"20\" y=\"" + f2(ly - 9) + "\" width=\"10\" height=\"10\" fill=\"" +
             kColors[c % std::size(kColors)] + "\"/>\n";
        s += "<text x=\"36\" y=\"" + f2(ly) + "\" font-family=\"sans-serif\" font-size=\"11\">" +
             detail::xml_escape(r.conditions[c]) + "</text>\n";
    }
    s += "</svg>\n";
    return s;
}

}  // namespace drillguide
