#include "propwatch/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace propwatch {

namespace {

constexpr double kWidth = 720, kHeight = 400;
constexpr double kLeft = 60, kRight = 20, kTop = 40, kBottom = 90;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string tick_label(double v) {
    char buf[32];
    if (std::abs(v) >= 100 || v == std::floor(v))
        std::snprintf(buf, sizeof buf, "%.0f", v);
    else
        std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

std::string header(const std::string& title) {
    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" +
                    num(kHeight) + "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) +
                    "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s += "<text x=\"" + num(kWidth / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" +
         xml_escape(title) + "</text>\n";
    return s;
}

// Axes plus 5 horizontal grid lines between lo and hi.
std::string axes(double lo, double hi) {
    std::string s;
    double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
    for (int i = 0; i <= 5; ++i) {
        double v = lo + (hi - lo) * i / 5.0;
        double y = y0 - (y0 - y1) * i / 5.0;
        s += "<line x1=\"" + num(x0) + "\" y1=\"" + num(y) + "\" x2=\"" + num(x1) + "\" y2=\"" + num(y) +
             "\" stroke=\"#e0e0e0\"/>\n";
        s += "<text x=\"" + num(x0 - 6) + "\" y=\"" + num(y + 4) + "\" text-anchor=\"end\">" + tick_label(v) +
             "</text>\n";
    }
    s += "<line x1=\"" + num(x0) + "\" y1=\"" + num(y0) + "\" x2=\"" + num(x1) + "\" y2=\"" + num(y0) +
         "\" stroke=\"black\"/>\n";
    s += "<line x1=\"" + num(x0) + "\" y1=\"" + num(y0) + "\" x2=\"" + num(x0) + "\" y2=\"" + num(y1) +
         "\" stroke=\"black\"/>\n";
    return s;
}

std::pair<double, double> range_of(const std::vector<double>& v) {
    double lo = 0, hi = 0;
    for (double x : v)
        if (std::isfinite(x)) lo = std::min(lo, x), hi = std::max(hi, x);
    if (hi == lo) hi = lo + 1;
    return {lo, hi};
}

std::string x_label(double x, const std::string& text) {
    double y = kHeight - kBottom + 12;
    return "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" text-anchor=\"end\" transform=\"rotate(-45 " + num(x) +
           " " + num(y) + ")\">" + xml_escape(text) + "</text>\n";
}

}  // namespace

std::string xml_escape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
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

std::string bar_chart_svg(const std::string& title, const std::vector<std::string>& labels,
                          const std::vector<double>& values) {
    auto [lo, hi] = range_of(values);
    std::string s = header(title) + axes(lo, hi);
    double plot_w = kWidth - kLeft - kRight, y0 = kHeight - kBottom, plot_h = y0 - kTop;
    double slot = values.empty() ? plot_w : plot_w / static_cast<double>(values.size());
    auto y_of = [&](double v) { return y0 - plot_h * (v - lo) / (hi - lo); };
    for (std::size_t i = 0; i < values.size(); ++i) {
        double v = std::isfinite(values[i]) ? values[i] : 0.0;
        double x = kLeft + slot * static_cast<double>(i) + slot * 0.1;
        double top = std::min(y_of(v), y_of(0)), h = std::abs(y_of(v) - y_of(0));
        s += "<rect x=\"" + num(x) + "\" y=\"" + num(top) + "\" width=\"" + num(slot * 0.8) + "\" height=\"" +
             num(h) + "\" fill=\"" + kPalette[0] + "\"><title>" +
             xml_escape(i < labels.size() ? labels[i] : "") + ": " + tick_label(v) + "</title></rect>\n";
        // Label every bar while they fit, otherwise about 30 of them.
        std::size_t every = std::max<std::size_t>(1, values.size() / 30);
        if (i < labels.size() && i % every == 0) s += x_label(x + slot * 0.4, labels[i]);
    }
    return s + "</svg>\n";
}

std::string line_chart_svg(const std::string& title, const std::vector<std::string>& x_labels,
                           const std::vector<Series>& series) {
    std::vector<double> all;
    std::size_t n = x_labels.size();
    for (const auto& sr : series) {
        all.insert(all.end(), sr.y.begin(), sr.y.end());
        n = std::max(n, sr.y.size());
    }
    auto [lo, hi] = range_of(all);
    std::string s = header(title) + axes(lo, hi);
    double plot_w = kWidth - kLeft - kRight, y0 = kHeight - kBottom, plot_h = y0 - kTop;
    auto x_of = [&](std::size_t i) {
        return n <= 1 ? kLeft + plot_w / 2 : kLeft + plot_w * static_cast<double>(i) / static_cast<double>(n - 1);
    };
    auto y_of = [&](double v) { return y0 - plot_h * (v - lo) / (hi - lo); };
    std::size_t every = std::max<std::size_t>(1, x_labels.size() / 12);
    for (std::size_t i = 0; i < x_labels.size(); i += every) s += x_label(x_of(i), x_labels[i]);
    for (std::size_t k = 0; k < series.size(); ++k) {
        const char* color = kPalette[k % std::size(kPalette)];
        std::string pts;
        for (std::size_t i = 0; i < series[k].y.size(); ++i) {
            double v = std::isfinite(series[k].y[i]) ? series[k].y[i] : 0.0;
            pts += (i ? " " : "") + num(x_of(i)) + "," + num(y_of(v));
        }
        s += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"" + pts +
             "\"><title>" + xml_escape(series[k].name) + "</title></polyline>\n";
        // Legend down the right edge.
        double ly = kTop + 14.0 * static_cast<double>(k);
        s += "<text x=\"" + num(kWidth - kRight) + "\" y=\"" + num(ly) + "\" text-anchor=\"end\" fill=\"" + color +
             "\">" + xml_escape(series[k].name) + "</text>\n";
    }
    return s + "</svg>\n";
}

}  // namespace propwatch
