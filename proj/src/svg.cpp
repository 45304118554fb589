#include "nbp/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "nbp/common.hpp"
#include "nbp/taskio.hpp"

namespace nbp::io {

namespace {

struct csv_table {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    std::size_t col(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw invalid_argument("csv: missing column '" + name + "'");
    }
};

csv_table read_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw io_error("cannot open '" + path + "'");
    csv_table t;
    std::string line;
    if (!std::getline(f, line)) throw invalid_argument("csv '" + path + "' is empty");
    std::stringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) t.header.push_back(cell);
    std::size_t lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ls(line);
        std::vector<double> row;
        while (std::getline(ls, cell, ',')) {
            try {
                row.push_back(std::stod(cell));
            } catch (...) {
                throw invalid_argument("csv '" + path + "' line " + std::to_string(lineno) +
                                       ": non-numeric cell '" + cell + "'");
            }
        }
        if (row.size() != t.header.size())
            throw invalid_argument("csv '" + path + "' line " + std::to_string(lineno) + ": wrong column count");
        t.rows.push_back(std::move(row));
    }
    return t;
}

constexpr double width = 720, height = 480;
constexpr double ml = 60, mr = 20, mt = 20, mb = 45;

struct viewport {
    double x_lo = 0, x_hi = 1, y_lo = 0, y_hi = 1;

    void fit_x(double v) {
        x_lo = std::min(x_lo, v);
        x_hi = std::max(x_hi, v);
    }
    void fit_y(double v) {
        y_lo = std::min(y_lo, v);
        y_hi = std::max(y_hi, v);
    }
    void init(double x, double y) { x_lo = x_hi = x, y_lo = y_hi = y; }
    void pad() {
        const double dx = (x_hi - x_lo) * 0.05 + 1e-9;
        const double dy = (y_hi - y_lo) * 0.05 + 1e-9;
        x_lo -= dx, x_hi += dx, y_lo -= dy, y_hi += dy;
    }
    double px(double x) const { return ml + (x - x_lo) / (x_hi - x_lo) * (width - ml - mr); }
    double py(double y) const { return height - mb - (y - y_lo) / (y_hi - y_lo) * (height - mt - mb); }
};

std::string fmt(double v) {
    char b[48];
    std::snprintf(b, sizeof b, "%.4g", v);
    return b;
}

void open_svg(std::ostream& f) {
    f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << " " << height << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

void draw_axes(std::ostream& f, const viewport& vp, const std::string& xlabel, const std::string& ylabel) {
    f << "<g stroke=\"black\" fill=\"none\" stroke-width=\"1\">\n"
      << "<line x1=\"" << ml << "\" y1=\"" << height - mb << "\" x2=\"" << width - mr << "\" y2=\""
      << height - mb << "\"/>\n"
      << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << height - mb << "\"/>\n"
      << "</g>\n";
    f << "<g font-family=\"sans-serif\" font-size=\"12\" fill=\"black\">\n"
      << "<text x=\"" << ml << "\" y=\"" << height - mb + 16 << "\">" << fmt(vp.x_lo) << "</text>\n"
      << "<text x=\"" << width - mr - 40 << "\" y=\"" << height - mb + 16 << "\">" << fmt(vp.x_hi) << "</text>\n"
      << "<text x=\"4\" y=\"" << height - mb << "\">" << fmt(vp.y_lo) << "</text>\n"
      << "<text x=\"4\" y=\"" << mt + 12 << "\">" << fmt(vp.y_hi) << "</text>\n"
      << "<text x=\"" << (width / 2 - 20) << "\" y=\"" << height - 8 << "\">" << xlabel << "</text>\n"
      << "<text x=\"4\" y=\"" << (height / 2) << "\" transform=\"rotate(-90 12 " << (height / 2) << ")\">"
      << ylabel << "</text>\n"
      << "</g>\n";
}

void polyline(std::ostream& f, const viewport& vp, const std::vector<std::pair<double, double>>& pts,
              const std::string& cls, const std::string& color, double sw) {
    f << "<polyline class=\"" << cls << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << sw
      << "\" points=\"";
    for (const auto& [x, y] : pts) f << fmt(vp.px(x)) << "," << fmt(vp.py(y)) << " ";
    f << "\"/>\n";
}

}  // namespace

void plot_samples_svg(const std::string& samples_csv, const std::string& task_file, int task_index,
                      const std::string& out_svg) {
    auto t = read_csv(samples_csv);
    const std::size_t c_sample = t.col("sample");
    const std::size_t c_point = t.col("point");
    const std::size_t c_x = t.col("x0");
    const std::size_t c_y = t.col("y0");

    // per-sample curves, each sorted by x
    std::map<long, std::vector<std::pair<double, double>>> curves;
    std::map<long, std::pair<double, long>> by_point;  // point index -> (sum y, count)
    std::map<long, double> point_x;
    viewport vp;
    bool first = true;
    for (const auto& row : t.rows) {
        const double x = row[c_x], y = row[c_y];
        curves[static_cast<long>(row[c_sample])].push_back({x, y});
        auto& acc = by_point[static_cast<long>(row[c_point])];
        acc.first += y;
        acc.second += 1;
        point_x[static_cast<long>(row[c_point])] = x;
        if (first) vp.init(x, y), first = false;
        vp.fit_x(x);
        vp.fit_y(y);
    }
    if (first) throw invalid_argument("plot: no rows in '" + samples_csv + "'");

    std::vector<data::task> tasks;
    if (!task_file.empty()) {
        tasks = read_tasks(task_file);
        if (task_index < 0 || static_cast<std::size_t>(task_index) >= tasks.size())
            throw invalid_argument("plot: task index out of range");
        const auto& tk = tasks[static_cast<std::size_t>(task_index)];
        for (std::size_t i = 0; i < tk.n_points(); ++i) {
            vp.fit_x(tk.x[i * tk.x.shape()[1]]);
            vp.fit_y(tk.y[i * tk.y.shape()[1]]);
        }
    }
    vp.pad();

    std::ofstream f(out_svg, std::ios::binary);
    if (!f) throw io_error("cannot open '" + out_svg + "' for writing");
    open_svg(f);
    draw_axes(f, vp, "x", "y");
    for (auto& [sid, pts] : curves) {
        std::sort(pts.begin(), pts.end());
        polyline(f, vp, pts, "sample", "#4477cc", 1.0);
    }
    std::vector<std::pair<double, double>> mean_pts;
    for (const auto& [pid, acc] : by_point)
        mean_pts.push_back({point_x[pid], acc.first / static_cast<double>(acc.second)});
    std::sort(mean_pts.begin(), mean_pts.end());
    polyline(f, vp, mean_pts, "mean", "black", 2.0);

    if (!tasks.empty()) {
        const auto& tk = tasks[static_cast<std::size_t>(task_index)];
        const std::size_t dx = tk.x.shape()[1], dy = tk.y.shape()[1];
        for (std::size_t i = 0; i < tk.n_points(); ++i) {
            const double px = vp.px(tk.x[i * dx]);
            const double py = vp.py(tk.y[i * dy]);
            if (tk.context_mask[i]) {
                f << "<circle class=\"context\" cx=\"" << fmt(px) << "\" cy=\"" << fmt(py)
                  << "\" r=\"4\" fill=\"none\" stroke=\"#cc3333\" stroke-width=\"1.5\"/>\n";
            } else {
                f << "<g class=\"target\" stroke=\"#22aa44\" stroke-width=\"1.5\">"
                  << "<line x1=\"" << fmt(px - 4) << "\" y1=\"" << fmt(py - 4) << "\" x2=\"" << fmt(px + 4)
                  << "\" y2=\"" << fmt(py + 4) << "\"/>"
                  << "<line x1=\"" << fmt(px - 4) << "\" y1=\"" << fmt(py + 4) << "\" x2=\"" << fmt(px + 4)
                  << "\" y2=\"" << fmt(py - 4) << "\"/></g>\n";
            }
        }
    }
    f << "</svg>\n";
    if (!f) throw io_error("write failed for '" + out_svg + "'");
}

void plot_losses_svg(const std::vector<std::string>& metrics_csvs, const std::vector<std::string>& labels,
                     const std::string& out_svg) {
    if (metrics_csvs.empty()) throw invalid_argument("plot: no metrics files given");
    if (!labels.empty() && labels.size() != metrics_csvs.size())
        throw invalid_argument("plot: label count must match file count");
    static const char* colors[] = {"#2266bb", "#dd8822", "#22aa44", "#cc3333", "#8844cc", "#777777"};

    std::vector<std::vector<std::pair<double, double>>> curves;
    viewport vp;
    bool first = true;
    for (const auto& path : metrics_csvs) {
        auto t = read_csv(path);
        const std::size_t cs = t.col("step");
        const std::size_t cl = t.col("train_loss");
        std::vector<std::pair<double, double>> pts;
        for (const auto& row : t.rows) {
            pts.push_back({row[cs], row[cl]});
            if (first) vp.init(row[cs], row[cl]), first = false;
            vp.fit_x(row[cs]);
            vp.fit_y(row[cl]);
        }
        curves.push_back(std::move(pts));
    }
    if (first) throw invalid_argument("plot: metrics files contain no rows");
    vp.pad();

    std::ofstream f(out_svg, std::ios::binary);
    if (!f) throw io_error("cannot open '" + out_svg + "' for writing");
    open_svg(f);
    draw_axes(f, vp, "step", "train loss");
    for (std::size_t i = 0; i < curves.size(); ++i)
        polyline(f, vp, curves[i], "loss", colors[i % 6], 1.5);
    f << "<g font-family=\"sans-serif\" font-size=\"12\">\n";
    for (std::size_t i = 0; i < labels.size(); ++i)
        f << "<text class=\"legend\" x=\"" << width - mr - 150 << "\" y=\"" << mt + 16 + 16 * i << "\" fill=\""
          << colors[i % 6] << "\">" << labels[i] << "</text>\n";
    f << "</g>\n</svg>\n";
    if (!f) throw io_error("write failed for '" + out_svg + "'");
}

}  // namespace nbp::io
