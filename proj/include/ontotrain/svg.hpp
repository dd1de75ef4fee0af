#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "ontotrain/model.hpp"

namespace ontotrain {

struct Series {
    std::string name;
    std::vector<std::pair<double, double>> points;  // (x, y); non-finite y is skipped
};

namespace detail {

inline std::string xml_escape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

inline std::string fmt_num(double v) {
    std::ostringstream ss;
    ss << std::setprecision(6) << v;
    return ss.str();
}

inline const std::vector<std::string>& curve_palette() {
    static const std::vector<std::string> palette = {"#1b7837", "#762a83", "#2166ac", "#b2182b",
                                                     "#e08214", "#35978f", "#8c510a", "#c51b7d",
                                                     "#4d4d4d", "#80cdc1"};
    return palette;
}

// white -> dark green, v in [0, 1]
inline std::string heat_color(double v) {
    v = std::min(1.0, std::max(0.0, v));
    const int r = static_cast<int>(std::lround(255.0 + (27.0 - 255.0) * v));
    const int g = static_cast<int>(std::lround(255.0 + (94.0 - 255.0) * v));
    const int b = static_cast<int>(std::lround(255.0 + (32.0 - 255.0) * v));
    std::ostringstream ss;
    ss << "rgb(" << r << ',' << g << ',' << b << ')';
    return ss.str();
}

}  // namespace detail

// One polyline per series over shared axes. Y spans [0, 1] when the data fits
// there (metric curves), otherwise the data range.
inline std::string svg_curves(const std::vector<Series>& series, const std::string& title,
                              const std::string& x_label, const std::string& y_label) {
    const double width = 800, height = 500;
    const double ml = 64, mr = 24, mt = 48, mb = 56;
    double x_min = std::numeric_limits<double>::infinity(), x_max = -x_min;
    double y_min = std::numeric_limits<double>::infinity(), y_max = -y_min;
    for (const auto& s : series)
        for (const auto& [x, y] : s.points) {
            if (!std::isfinite(y)) continue;
            x_min = std::min(x_min, x);
            x_max = std::max(x_max, x);
            y_min = std::min(y_min, y);
            y_max = std::max(y_max, y);
        }
    if (!std::isfinite(x_min)) {
        x_min = 0;
        x_max = 1;
        y_min = 0;
        y_max = 1;
    }
    if (x_max == x_min) x_max = x_min + 1;
    if (y_min >= 0.0 && y_max <= 1.0) {
        y_min = 0.0;
        y_max = 1.0;
    } else {
        const double pad = (y_max - y_min) * 0.05 + 1e-12;
        y_min -= pad;
        y_max += pad;
    }

    auto px = [&](double x) { return ml + (x - x_min) / (x_max - x_min) * (width - ml - mr); };
    auto py = [&](double y) { return height - mb - (y - y_min) / (y_max - y_min) * (height - mt - mb); };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\" "
           "font-family=\"sans-serif\">"
        << detail::xml_escape(title) << "</text>\n";

    for (int i = 0; i <= 5; ++i) {
        const double fx = x_min + (x_max - x_min) * i / 5.0;
        const double fy = y_min + (y_max - y_min) * i / 5.0;
        svg << "<line x1=\"" << px(fx) << "\" y1=\"" << py(y_min) << "\" x2=\"" << px(fx)
            << "\" y2=\"" << py(y_min) + 4 << "\" stroke=\"black\"/>\n";
        svg << "<text x=\"" << px(fx) << "\" y=\"" << py(y_min) + 18
            << "\" text-anchor=\"middle\" font-size=\"11\" font-family=\"sans-serif\">"
            << detail::fmt_num(fx) << "</text>\n";
        svg << "<line x1=\"" << px(x_min) - 4 << "\" y1=\"" << py(fy) << "\" x2=\"" << px(x_max)
            << "\" y2=\"" << py(fy) << "\" stroke=\"#dddddd\"/>\n";
        svg << "<text x=\"" << px(x_min) - 8 << "\" y=\"" << py(fy) + 4
            << "\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">"
            << detail::fmt_num(fy) << "</text>\n";
    }
    svg << "<line x1=\"" << px(x_min) << "\" y1=\"" << py(y_min) << "\" x2=\"" << px(x_max)
        << "\" y2=\"" << py(y_min) << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << px(x_min) << "\" y1=\"" << py(y_min) << "\" x2=\"" << px(x_min)
        << "\" y2=\"" << py(y_max) << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << width / 2 << "\" y=\"" << height - 12
        << "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\">"
        << detail::xml_escape(x_label) << "</text>\n";
    svg << "<text x=\"16\" y=\"" << height / 2
        << "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\" "
           "transform=\"rotate(-90 16 "
        << height / 2 << ")\">" << detail::xml_escape(y_label) << "</text>\n";

    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto& color = detail::curve_palette()[i % detail::curve_palette().size()];
        std::ostringstream pts;
        for (const auto& [x, y] : series[i].points) {
            if (!std::isfinite(y)) continue;
            pts << px(x) << ',' << py(y) << ' ';
        }
        svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\""
            << pts.str() << "\"/>\n";
        const double ly = mt + 16 * static_cast<double>(i);
        svg << "<line x1=\"" << width - mr - 150 << "\" y1=\"" << ly << "\" x2=\""
            << width - mr - 130 << "\" y2=\"" << ly << "\" stroke=\"" << color
            << "\" stroke-width=\"2\"/>\n";
        svg << "<text x=\"" << width - mr - 124 << "\" y=\"" << ly + 4
            << "\" font-size=\"11\" font-family=\"sans-serif\">"
            << detail::xml_escape(series[i].name) << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

// A grid of per-head heatmaps for one layer. Every head panel carries exactly
// seq_len * seq_len cells marked class="cell"; queries run top-down, keys
// left-right, darker green = stronger attention.
inline std::string svg_attention_layer(const std::vector<std::string>& tokens,
                                       const AttentionMaps& maps, int layer) {
    if (layer < 0 || layer >= maps.layers) throw ShapeError("layer index out of range");
    const int s = maps.seq_len;
    if (static_cast<int>(tokens.size()) != s)
        throw ShapeError("token count does not match attention size");
    const double cell = std::max(10.0, std::min(22.0, 360.0 / s));
    const double label_space = 58;
    const double panel_w = label_space + s * cell + 12;
    const double panel_h = label_space + s * cell + 28;
    const int cols = std::min(4, maps.heads);
    const int rows = (maps.heads + cols - 1) / cols;
    const double width = 20 + panel_w * cols;
    const double height = 40 + panel_h * rows;

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\" "
           "font-family=\"sans-serif\">layer "
        << layer << "</text>\n";

    for (int h = 0; h < maps.heads; ++h) {
        const double ox = 20 + panel_w * (h % cols) + label_space;
        const double oy = 40 + panel_h * (h / cols) + label_space;
        svg << "<text x=\"" << ox + s * cell / 2 << "\" y=\"" << oy - label_space + 14
            << "\" text-anchor=\"middle\" font-size=\"12\" font-family=\"sans-serif\">head " << h
            << "</text>\n";
        const Mat& m = maps.at(layer, h);
        for (int q = 0; q < s; ++q)
            for (int k = 0; k < s; ++k)
                svg << "<rect class=\"cell\" x=\"" << ox + k * cell << "\" y=\"" << oy + q * cell
                    << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\""
                    << detail::heat_color(m(q, k)) << "\" stroke=\"#f0f0f0\" stroke-width=\"0.5\"/>"
                    << '\n';
        for (int t = 0; t < s; ++t) {
            svg << "<text x=\"" << ox - 4 << "\" y=\"" << oy + t * cell + cell * 0.7
                << "\" text-anchor=\"end\" font-size=\"8\" font-family=\"monospace\">"
                << detail::xml_escape(tokens[static_cast<std::size_t>(t)]) << "</text>\n";
            const double tx = ox + t * cell + cell * 0.7;
            const double ty = oy - 4;
            svg << "<text x=\"" << tx << "\" y=\"" << ty
                << "\" text-anchor=\"start\" font-size=\"8\" font-family=\"monospace\" "
                   "transform=\"rotate(-60 "
                << tx << ' ' << ty << ")\">" << detail::xml_escape(tokens[static_cast<std::size_t>(t)])
                << "</text>\n";
        }
    }
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace ontotrain
