// SPDX-License-Identifier: Apache-2.0
#include "core/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "core/errors.hpp"

namespace ugcemt {

namespace {

const char* kPalette[6] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"};

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    void include(double v) {
        if (!std::isfinite(v)) return;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    void pad() {
        if (!std::isfinite(lo)) {
            lo = 0.0;
            hi = 1.0;
        }
        if (hi - lo < 1e-12) {
            lo -= 0.5;
            hi += 0.5;
        }
        const double m = 0.05 * (hi - lo);
        lo -= m;
        hi += m;
    }
};

std::string fnum(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

void draw_panel(std::ostream& os, double ox, double oy, double w, double h,
                const std::string& title, const std::string& x_label,
                const std::string& y_label, const std::vector<Curve>& curves) {
    Range xr, yr;
    for (const auto& c : curves)
        for (size_t i = 0; i < c.x.size(); ++i) {
            xr.include(c.x[i]);
            yr.include(c.y[i]);
        }
    xr.pad();
    yr.pad();
    auto px = [&](double x) { return ox + (x - xr.lo) / (xr.hi - xr.lo) * w; };
    auto py = [&](double y) { return oy + h - (y - yr.lo) / (yr.hi - yr.lo) * h; };

    os << "<rect x='" << ox << "' y='" << oy << "' width='" << w << "' height='" << h
       << "' fill='none' stroke='#444'/>\n";
    // axis ticks: 5 per axis
    for (int i = 0; i <= 4; ++i) {
        const double tx = xr.lo + (xr.hi - xr.lo) * i / 4.0;
        const double ty = yr.lo + (yr.hi - yr.lo) * i / 4.0;
        os << "<line x1='" << px(tx) << "' y1='" << oy + h << "' x2='" << px(tx) << "' y2='"
           << oy + h + 4 << "' stroke='#444'/>\n";
        os << "<text x='" << px(tx) << "' y='" << oy + h + 16
           << "' font-size='10' text-anchor='middle'>" << fnum(tx) << "</text>\n";
        os << "<line x1='" << ox - 4 << "' y1='" << py(ty) << "' x2='" << ox << "' y2='"
           << py(ty) << "' stroke='#444'/>\n";
        os << "<text x='" << ox - 6 << "' y='" << py(ty) + 3
           << "' font-size='10' text-anchor='end'>" << fnum(ty) << "</text>\n";
    }
    os << "<text x='" << ox + w / 2 << "' y='" << oy - 6
       << "' font-size='13' text-anchor='middle'>" << title << "</text>\n";
    os << "<text x='" << ox + w / 2 << "' y='" << oy + h + 32
       << "' font-size='11' text-anchor='middle'>" << x_label << "</text>\n";
    os << "<text x='" << ox - 44 << "' y='" << oy + h / 2
       << "' font-size='11' text-anchor='middle' transform='rotate(-90 " << ox - 44 << " "
       << oy + h / 2 << ")'>" << y_label << "</text>\n";

    for (size_t ci = 0; ci < curves.size(); ++ci) {
        const Curve& c = curves[ci];
        std::ostringstream pts;
        bool pen_down = false;
        std::string dstr;
        for (size_t i = 0; i < c.x.size(); ++i) {
            if (!std::isfinite(c.y[i])) {
                pen_down = false;
                continue;
            }
            dstr += (pen_down ? "L" : "M");
            dstr += fnum(px(c.x[i]));
            dstr += " ";
            dstr += fnum(py(c.y[i]));
            pen_down = true;
        }
        if (!dstr.empty())
            os << "<path d='" << dstr << "' fill='none' stroke='" << kPalette[ci % 6]
               << "' stroke-width='1.5'/>\n";
        // legend
        const double lx = ox + w - 110;
        const double ly = oy + 14 + 14 * double(ci);
        os << "<line x1='" << lx << "' y1='" << ly - 4 << "' x2='" << lx + 18 << "' y2='"
           << ly - 4 << "' stroke='" << kPalette[ci % 6] << "' stroke-width='2'/>\n";
        os << "<text x='" << lx + 22 << "' y='" << ly << "' font-size='10'>" << c.label
           << "</text>\n";
    }
}

}  // namespace

void render_svg_panels(const std::string& path, const std::string& x_label,
                       const std::vector<Panel>& panels) {
    if (panels.empty()) throw ConfigError("no panels to render");
    const double pw = 460, ph = 240, margin_x = 70, margin_y = 40, gap = 60;
    const double width = pw + margin_x + 30;
    const double height = margin_y + double(panels.size()) * (ph + gap);
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
       << "' viewBox='0 0 " << width << " " << height << "'>\n";
    os << "<rect width='100%' height='100%' fill='white'/>\n";
    for (size_t i = 0; i < panels.size(); ++i)
        draw_panel(os, margin_x, margin_y + double(i) * (ph + gap), pw, ph, panels[i].title,
                   x_label, panels[i].y_label, panels[i].curves);
    os << "</svg>\n";
    if (!os) throw IoError("write failed: " + path);
}

void render_svg_curves(const std::string& path, const std::string& title,
                       const std::string& x_label, const std::string& y_label,
                       const std::vector<Curve>& curves) {
    render_svg_panels(path, x_label, {{title, y_label, curves}});
}

CsvTable read_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open: " + path);
    CsvTable t;
    std::string line;
    if (!std::getline(is, line)) throw FormatError(path + ": empty CSV");
    {
        std::istringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) t.columns.push_back(cell);
    }
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string cell;
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) {
            try {
                row.push_back(std::stod(cell));
            } catch (...) {
                row.push_back(std::numeric_limits<double>::quiet_NaN());
            }
        }
        if (row.size() != t.columns.size())
            throw FormatError(path + ": ragged CSV row: " + line);
        t.rows.push_back(std::move(row));
    }
    return t;
}

std::vector<double> csv_column(const CsvTable& t, const std::string& name) {
    const auto it = std::find(t.columns.begin(), t.columns.end(), name);
    if (it == t.columns.end()) throw FormatError("CSV has no column named " + name);
    const size_t idx = size_t(it - t.columns.begin());
    std::vector<double> out;
    out.reserve(t.rows.size());
    for (const auto& r : t.rows) out.push_back(r[idx]);
    return out;
}

}  // namespace ugcemt
