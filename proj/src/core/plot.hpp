// SPDX-License-Identifier: Apache-2.0
//
// Minimal SVG curve rendering for loss and metric logs. No external
// dependencies; output is a standalone .svg file.
#pragma once

#include <string>
#include <vector>

namespace ugcemt {

struct Curve {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

void render_svg_curves(const std::string& path, const std::string& title,
                       const std::string& x_label, const std::string& y_label,
                       const std::vector<Curve>& curves);

// Lays out several charts vertically in one file (Fig-style panels).
struct Panel {
    std::string title;
    std::string y_label;
    std::vector<Curve> curves;
};
void render_svg_panels(const std::string& path, const std::string& x_label,
                       const std::vector<Panel>& panels);

// CSV helpers for the logs this project writes (header + numeric rows).
struct CsvTable {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;  // non-numeric cells become NaN
};
CsvTable read_csv(const std::string& path);
std::vector<double> csv_column(const CsvTable& t, const std::string& name);

}  // namespace ugcemt
