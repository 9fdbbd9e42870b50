#pragma once

#include <string>
#include <vector>

namespace propwatch {

struct Series {
    std::string name;
    std::vector<double> y;
};

/// Static SVG charts. Output is a pure function of the arguments (fixed-precision numbers),
/// so reruns are byte-identical.
std::string bar_chart_svg(const std::string& title, const std::vector<std::string>& labels,
                          const std::vector<double>& values);

/// One polyline per series over a shared x axis; `x_labels` are printed at a few ticks.
std::string line_chart_svg(const std::string& title, const std::vector<std::string>& x_labels,
                           const std::vector<Series>& series);

std::string xml_escape(const std::string& s);

}  // namespace propwatch
