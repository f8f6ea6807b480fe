#include "rfqmm/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "rfqmm/csv.hpp"

namespace rfqmm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const char* const kFigureNames[] = {
    "value_heatmap", "offset_R",       "offset_q",   "pnl_R",
    "pnl_drift",     "drift_portrait", "relaxation", "bifurcation",
};

const char* const kPalette[] = {
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd",
    "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
};

std::string px(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

// ---------------------------------------------------------------------------
// input plumbing
// ---------------------------------------------------------------------------

struct Input {
    std::string path;
    CsvTable table;
};

Input load_input(const std::string& path,
                 const std::vector<std::string>& required_columns) {
    Input in;
    in.path = path;
    in.table = read_csv(path);
    for (const std::string& col : required_columns) {
        bool found = false;
        for (const std::string& have : in.table.columns)
            if (have == col) found = true;
        if (!found)
            throw std::runtime_error(path + ": missing column '" + col + "'");
    }
    if (in.table.rows.empty())
        throw std::runtime_error(path + ": no data rows");
    return in;
}

std::string source_hash(const Input& in) {
    const auto it = in.table.metadata.find("config_hash");
    return it == in.table.metadata.end() ? std::string("unknown") : it->second;
}

double metadata_number(const Input& in, const std::string& key) {
    const auto it = in.table.metadata.find(key);
    if (it == in.table.metadata.end()) return kNaN;
    try {
        return std::stod(it->second);
    } catch (const std::exception&) {
        return kNaN;
    }
}

// ---------------------------------------------------------------------------
// deterministic SVG line/scatter plots
// ---------------------------------------------------------------------------

struct Series {
    std::string label;
    std::string color;
    bool dashed = false;
    bool markers_only = false;
    bool open_markers = false;
    std::vector<std::pair<double, double>> points;
};

struct Plot {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<Series> series;
    std::vector<double> h_lines;  // dotted horizontal guides (data units)
    std::vector<double> v_lines;  // dotted vertical guides (data units)
};

struct Axis {
    double lo = 0.0, hi = 1.0;
    bool log = false;

    double transform(double v) const { return log ? std::log10(v) : v; }
    double frac(double v) const {
        const double t = transform(v);
        return (t - lo) / (hi - lo);
    }
};

void grow_range(double v, bool log, double& lo, double& hi) {
    if (std::isnan(v)) return;
    if (log && !(v > 0.0)) return;
    const double t = log ? std::log10(v) : v;
    lo = std::min(lo, t);
    hi = std::max(hi, t);
}

Axis make_axis(double data_lo, double data_hi, double style_lo,
               double style_hi, bool log) {
    Axis ax;
    ax.log = log;
    double lo = data_lo, hi = data_hi;
    if (!std::isnan(style_lo)) lo = log ? std::log10(style_lo) : style_lo;
    if (!std::isnan(style_hi)) hi = log ? std::log10(style_hi) : style_hi;
    if (!(lo < hi)) {
        const double mid = std::isfinite(lo) ? lo : 0.0;
        lo = mid - 0.5;
        hi = mid + 0.5;
    }
    const double pad = 0.04 * (hi - lo);
    ax.lo = lo - pad;
    ax.hi = hi + pad;
    return ax;
}

struct Tick {
    double value;  // transformed units (log10 when log axis)
    std::string label;
};

std::string linear_tick_label(double v, double step) {
    const int dec =
        step >= 1.0 ? 0
                    : static_cast<int>(std::ceil(-std::log10(step) - 1e-9));
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.*f", dec, v);
    // normalize the sign of a zero so -0.0 never leaks into the output
    if (buf[0] == '-') {
        bool all_zero = true;
        for (const char* p = buf + 1; *p; ++p)
            if (*p != '0' && *p != '.') all_zero = false;
        if (all_zero) return buf + 1;
    }
    return buf;
}

std::vector<Tick> make_ticks(const Axis& ax) {
    std::vector<Tick> out;
    if (ax.log) {
        const int k_lo = static_cast<int>(std::ceil(ax.lo - 1e-9));
        const int k_hi = static_cast<int>(std::floor(ax.hi + 1e-9));
        const bool sparse = k_hi - k_lo < 2;
        for (int k = k_lo - 1; k <= k_hi + 1; ++k) {
            for (int m : {1, 2, 5}) {
                if (m != 1 && !sparse) continue;
                const double v = m * std::pow(10.0, k);
                const double t = std::log10(v);
                if (t < ax.lo - 1e-9 || t > ax.hi + 1e-9) continue;
                out.push_back({t, format_double(v)});
            }
        }
        return out;
    }
    const double span = ax.hi - ax.lo;
    const double raw = span / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    const double norm = raw / mag;
    const double step =
        mag * (norm < 1.5 ? 1.0 : norm < 3.5 ? 2.0 : norm < 7.5 ? 5.0 : 10.0);
    const double first = std::ceil(ax.lo / step - 1e-9) * step;
    for (int i = 0; i < 12; ++i) {
        double v = first + i * step;
        v = std::round(v / step) * step;
        if (v > ax.hi + 1e-9 * span) break;
        out.push_back({v, linear_tick_label(v, step)});
    }
    return out;
}

struct Frame {
    int width, height;
    int left = 64, right = 20, top = 26, bottom = 46;
    Axis x, y;

    double plot_w() const { return width - left - right; }
    double plot_h() const { return height - top - bottom; }
    double sx(double v) const { return left + x.frac(v) * plot_w(); }
    double sy(double v) const {
        return height - bottom - y.frac(v) * plot_h();
    }
};

void svg_open(std::ostringstream& svg, int width, int height) {
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
        << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " "
        << height << "\" font-family=\"sans-serif\">\n";
    svg << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\""
        << height << "\" fill=\"#ffffff\"/>\n";
}

std::string escape_text(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '&')
            out += "&amp;";
        else if (c == '<')
            out += "&lt;";
        else if (c == '>')
            out += "&gt;";
        else
            out += c;
    }
    return out;
}

void svg_frame(std::ostringstream& svg, const Frame& f, const Plot& plot) {
    // plot border
    svg << "<rect x=\"" << px(f.left) << "\" y=\"" << px(f.top)
        << "\" width=\"" << px(f.plot_w()) << "\" height=\"" << px(f.plot_h())
        << "\" fill=\"none\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
    for (const Tick& t : make_ticks(f.x)) {
        const double X = f.left + (t.value - f.x.lo) / (f.x.hi - f.x.lo) *
                                      f.plot_w();
        svg << "<line x1=\"" << px(X) << "\" y1=\"" << px(f.height - f.bottom)
            << "\" x2=\"" << px(X) << "\" y2=\""
            << px(f.height - f.bottom + 5) << "\" stroke=\"#000000\"/>\n";
        svg << "<text x=\"" << px(X) << "\" y=\""
            << px(f.height - f.bottom + 18)
            << "\" font-size=\"11\" text-anchor=\"middle\">" << t.label
            << "</text>\n";
    }
    for (const Tick& t : make_ticks(f.y)) {
        const double Y = f.height - f.bottom -
                         (t.value - f.y.lo) / (f.y.hi - f.y.lo) * f.plot_h();
        svg << "<line x1=\"" << px(f.left - 5) << "\" y1=\"" << px(Y)
            << "\" x2=\"" << px(f.left) << "\" y2=\"" << px(Y)
            << "\" stroke=\"#000000\"/>\n";
        svg << "<text x=\"" << px(f.left - 8) << "\" y=\"" << px(Y + 4)
            << "\" font-size=\"11\" text-anchor=\"end\">" << t.label
            << "</text>\n";
    }
    if (!plot.title.empty())
        svg << "<text x=\"" << px(f.left) << "\" y=\"" << px(f.top - 9)
            << "\" font-size=\"13\">" << escape_text(plot.title)
            << "</text>\n";
    if (!plot.x_label.empty())
        svg << "<text x=\"" << px(f.left + f.plot_w() / 2) << "\" y=\""
            << px(f.height - 10)
            << "\" font-size=\"12\" text-anchor=\"middle\">"
            << escape_text(plot.x_label) << "</text>\n";
    if (!plot.y_label.empty())
        svg << "<text x=\"14\" y=\"" << px(f.top + f.plot_h() / 2)
            << "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
            << px(f.top + f.plot_h() / 2) << ")\">"
            << escape_text(plot.y_label) << "</text>\n";
}

std::string render_plot_svg(const Plot& plot, const FigureStyle& style) {
    double x_lo = std::numeric_limits<double>::infinity();
    double x_hi = -x_lo, y_lo = x_lo, y_hi = -x_lo;
    for (const Series& s : plot.series) {
        for (const auto& [xv, yv] : s.points) {
            if (std::isnan(xv) || std::isnan(yv)) continue;
            grow_range(xv, style.log_x, x_lo, x_hi);
            grow_range(yv, style.log_y, y_lo, y_hi);
        }
    }
    for (double v : plot.v_lines) grow_range(v, style.log_x, x_lo, x_hi);
    for (double v : plot.h_lines) grow_range(v, style.log_y, y_lo, y_hi);

    Frame f;
    f.width = style.width;
    f.height = style.height;
    f.x = make_axis(x_lo, x_hi, style.x_min, style.x_max, style.log_x);
    f.y = make_axis(y_lo, y_hi, style.y_min, style.y_max, style.log_y);

    std::ostringstream svg;
    svg_open(svg, f.width, f.height);
    svg_frame(svg, f, plot);

    for (double v : plot.h_lines) {
        if (style.log_y && !(v > 0.0)) continue;
        const double Y = f.sy(v);
        svg << "<line x1=\"" << px(f.left) << "\" y1=\"" << px(Y)
            << "\" x2=\"" << px(f.left + f.plot_w()) << "\" y2=\"" << px(Y)
            << "\" stroke=\"#555555\" stroke-dasharray=\"2,3\"/>\n";
    }
    for (double v : plot.v_lines) {
        if (style.log_x && !(v > 0.0)) continue;
        const double X = f.sx(v);
        svg << "<line x1=\"" << px(X) << "\" y1=\"" << px(f.top)
            << "\" x2=\"" << px(X) << "\" y2=\"" << px(f.top + f.plot_h())
            << "\" stroke=\"#555555\" stroke-dasharray=\"2,3\"/>\n";
    }

    for (const Series& s : plot.series) {
        if (s.markers_only) {
            for (const auto& [xv, yv] : s.points) {
                if (std::isnan(xv) || std::isnan(yv)) continue;
                if (style.log_x && !(xv > 0.0)) continue;
                if (style.log_y && !(yv > 0.0)) continue;
                svg << "<circle cx=\"" << px(f.sx(xv)) << "\" cy=\""
                    << px(f.sy(yv)) << "\" r=\"3.5\" fill=\""
                    << (s.open_markers ? "#ffffff" : s.color)
                    << "\" stroke=\"" << s.color << "\"/>\n";
            }
            continue;
        }
        // break the polyline at gaps (NaN points)
        std::vector<std::string> segment;
        auto flush = [&]() {
            if (segment.size() >= 2) {
                svg << "<polyline fill=\"none\" stroke=\"" << s.color
                    << "\" stroke-width=\"1.5\"";
                if (s.dashed) svg << " stroke-dasharray=\"6,3\"";
                svg << " points=\"";
                for (std::size_t i = 0; i < segment.size(); ++i)
                    svg << (i ? " " : "") << segment[i];
                svg << "\"/>\n";
            }
            segment.clear();
        };
        for (const auto& [xv, yv] : s.points) {
            const bool bad = std::isnan(xv) || std::isnan(yv) ||
                             (style.log_x && !(xv > 0.0)) ||
                             (style.log_y && !(yv > 0.0));
            if (bad) {
                flush();
                continue;
            }
            segment.push_back(px(f.sx(xv)) + "," + px(f.sy(yv)));
        }
        flush();
    }

    // legend, top-right inside the frame
    int row = 0;
    for (const Series& s : plot.series) {
        if (s.label.empty()) continue;
        const double X = f.left + f.plot_w() - 170;
        const double Y = f.top + 16 + 16 * row;
        if (s.markers_only) {
            svg << "<circle cx=\"" << px(X + 14) << "\" cy=\"" << px(Y - 4)
                << "\" r=\"3.5\" fill=\""
                << (s.open_markers ? "#ffffff" : s.color) << "\" stroke=\""
                << s.color << "\"/>\n";
        } else {
            svg << "<line x1=\"" << px(X) << "\" y1=\"" << px(Y - 4)
                << "\" x2=\"" << px(X + 28) << "\" y2=\"" << px(Y - 4)
                << "\" stroke=\"" << s.color << "\" stroke-width=\"1.5\"";
            if (s.dashed) svg << " stroke-dasharray=\"6,3\"";
            svg << "/>\n";
        }
        svg << "<text x=\"" << px(X + 34) << "\" y=\"" << px(Y)
            << "\" font-size=\"11\">" << escape_text(s.label) << "</text>\n";
        ++row;
    }

    svg << "</svg>\n";
    return svg.str();
}

// ---------------------------------------------------------------------------
// heatmap rendering
// ---------------------------------------------------------------------------

std::string viridis(double t) {
    static const int stops[9][3] = {
        {68, 1, 84},    {71, 44, 122},  {59, 81, 139},
        {44, 113, 142}, {33, 144, 141}, {39, 173, 129},
        {92, 200, 99},  {170, 220, 50}, {253, 231, 37},
    };
    t = std::min(1.0, std::max(0.0, t));
    const double pos = t * 8.0;
    const int i = std::min(7, static_cast<int>(pos));
    const double w = pos - i;
    char buf[8];
    std::snprintf(
        buf, sizeof(buf), "#%02x%02x%02x",
        static_cast<int>(std::lround(stops[i][0] * (1 - w) + stops[i + 1][0] * w)),
        static_cast<int>(std::lround(stops[i][1] * (1 - w) + stops[i + 1][1] * w)),
        static_cast<int>(std::lround(stops[i][2] * (1 - w) + stops[i + 1][2] * w)));
    return buf;
}

std::string render_heatmap_svg(const std::vector<double>& q_vals,
                               const std::vector<double>& r_vals,
                               const std::vector<std::vector<double>>& v,
                               double r0_line, const FigureStyle& style) {
    Frame f;
    f.width = style.width;
    f.height = style.height;
    f.right = 84;  // room for the colorbar
    f.x = make_axis(q_vals.front(), q_vals.back(), style.x_min, style.x_max,
                    false);
    f.y = make_axis(r_vals.front(), r_vals.back(), style.y_min, style.y_max,
                    false);

    double v_lo = std::numeric_limits<double>::infinity(), v_hi = -v_lo;
    for (const auto& row : v)
        for (double x : row)
            if (!std::isnan(x)) {
                v_lo = std::min(v_lo, x);
                v_hi = std::max(v_hi, x);
            }
    if (!(v_lo < v_hi)) {
        v_lo -= 0.5;
        v_hi += 0.5;
    }

    Plot plot;
    plot.title = "stationary value surface";
    plot.x_label = "inventory q (M)";
    plot.y_label = "win score R";

    std::ostringstream svg;
    svg_open(svg, f.width, f.height);

    const std::size_t nq = q_vals.size(), nr = r_vals.size();
    const double cw = f.plot_w() / static_cast<double>(nq);
    const double ch = f.plot_h() / static_cast<double>(nr);
    for (std::size_t ri = 0; ri < nr; ++ri) {
        for (std::size_t qi = 0; qi < nq; ++qi) {
            const double val = v[qi][ri];
            if (std::isnan(val)) continue;
            const double X = f.left + cw * static_cast<double>(qi);
            const double Y =
                f.height - f.bottom - ch * static_cast<double>(ri + 1);
            svg << "<rect x=\"" << px(X) << "\" y=\"" << px(Y)
                << "\" width=\"" << px(cw + 0.5) << "\" height=\""
                << px(ch + 0.5) << "\" fill=\""
                << viridis((val - v_lo) / (v_hi - v_lo)) << "\"/>\n";
        }
    }

    svg_frame(svg, f, plot);

    if (!std::isnan(r0_line)) {
        const double Y = f.sy(r0_line);
        svg << "<line x1=\"" << px(f.left) << "\" y1=\"" << px(Y)
            << "\" x2=\"" << px(f.left + f.plot_w()) << "\" y2=\"" << px(Y)
            << "\" stroke=\"#ffffff\" stroke-width=\"1.5\" stroke-dasharray=\"2,4\"/>\n";
        svg << "<text x=\"" << px(f.left + f.plot_w() - 6) << "\" y=\""
            << px(Y - 5)
            << "\" font-size=\"11\" fill=\"#ffffff\" text-anchor=\"end\">R0</text>\n";
    }

    // colorbar
    const double bar_x = f.width - f.right + 18;
    const double bar_h = f.plot_h();
    const int steps = 48;
    for (int i = 0; i < steps; ++i) {
        const double frac0 = static_cast<double>(i) / steps;
        const double Y = f.height - f.bottom - bar_h * (frac0 + 1.0 / steps);
        svg << "<rect x=\"" << px(bar_x) << "\" y=\"" << px(Y)
            << "\" width=\"14\" height=\"" << px(bar_h / steps + 0.5)
            << "\" fill=\"" << viridis((frac0 + 0.5 / steps)) << "\"/>\n";
    }
    svg << "<rect x=\"" << px(bar_x) << "\" y=\"" << px(f.top)
        << "\" width=\"14\" height=\"" << px(bar_h)
        << "\" fill=\"none\" stroke=\"#000000\"/>\n";
    svg << "<text x=\"" << px(bar_x + 18) << "\" y=\""
        << px(f.height - f.bottom)
        << "\" font-size=\"10\">" << format_double(v_lo) << "</text>\n";
    svg << "<text x=\"" << px(bar_x + 18) << "\" y=\"" << px(f.top + 10)
        << "\" font-size=\"10\">" << format_double(v_hi) << "</text>\n";

    svg << "</svg>\n";
    return svg.str();
}

// ---------------------------------------------------------------------------
// figure builders: each returns the output table + optional SVG body
// ---------------------------------------------------------------------------

struct Built {
    CsvTable csv;
    std::string svg;  // empty when style.svg is off
};

std::vector<double> sorted_unique(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

Built build_value_heatmap(const FigureSpec& spec) {
    const Input in = load_input(spec.inputs[0], {"q", "R", "v"});
    const std::size_t cq = in.table.column_index("q");
    const std::size_t cr = in.table.column_index("R");
    const std::size_t cv = in.table.column_index("v");

    std::vector<double> qs, rs;
    for (const auto& row : in.table.rows) {
        qs.push_back(row[cq]);
        rs.push_back(row[cr]);
    }
    qs = sorted_unique(qs);
    rs = sorted_unique(rs);
    if (qs.size() * rs.size() != in.table.rows.size())
        throw std::runtime_error(in.path +
                                 ": rows do not form a complete (q, R) grid");

    auto find = [](const std::vector<double>& axis, double v) {
        const auto it = std::lower_bound(axis.begin(), axis.end(), v);
        return static_cast<std::size_t>(it - axis.begin());
    };
    std::vector<std::vector<double>> grid(
        qs.size(), std::vector<double>(rs.size(), kNaN));
    for (const auto& row : in.table.rows)
        grid[find(qs, row[cq])][find(rs, row[cr])] = row[cv];

    Built out;
    out.csv.metadata["figure"] = "value_heatmap";
    out.csv.metadata["source_0"] = source_hash(in);
    out.csv.columns = {"q", "R", "v"};
    for (std::size_t ri = 0; ri < rs.size(); ++ri)
        for (std::size_t qi = 0; qi < qs.size(); ++qi)
            out.csv.rows.push_back({qs[qi], rs[ri], grid[qi][ri]});

    if (spec.style.svg) {
        double r0 = spec.style.r0_line;
        if (std::isnan(r0)) r0 = metadata_number(in, "gate_r0");
        out.svg = render_heatmap_svg(qs, rs, grid, r0, spec.style);
    }
    return out;
}

// tier-0 (gated) offsets at q = 0 for the largest quoted size, side-averaged
std::map<double, double> gated_offset_by_score(const Input& in) {
    const std::size_t cs = in.table.column_index("size");
    const std::size_t ct = in.table.column_index("tier");
    const std::size_t cq = in.table.column_index("q");
    const std::size_t cr = in.table.column_index("R");
    const std::size_t cd = in.table.column_index("delta");

    double z_max = -std::numeric_limits<double>::infinity();
    for (const auto& row : in.table.rows)
        if (row[ct] == 0.0 && row[cq] == 0.0 && !std::isnan(row[cd]))
            z_max = std::max(z_max, row[cs]);
    if (!std::isfinite(z_max))
        throw std::runtime_error(in.path +
                                 ": no gated quotes at zero inventory");

    std::map<double, std::pair<double, int>> acc;
    for (const auto& row : in.table.rows) {
        if (row[ct] != 0.0 || row[cq] != 0.0 || row[cs] != z_max) continue;
        if (std::isnan(row[cd])) continue;
        auto& slot = acc[row[cr]];
        slot.first += row[cd];
        slot.second += 1;
    }
    std::map<double, double> out;
    for (const auto& [r, slot] : acc) out[r] = slot.first / slot.second;
    return out;
}

Built build_offset_r(const FigureSpec& spec) {
    const std::vector<std::string> cols = {"size", "tier", "side",
                                           "q",    "R",    "delta", "y"};
    const Input feedback = load_input(spec.inputs[0], cols);
    const Input frozen = load_input(spec.inputs[1], cols);
    const auto d1 = gated_offset_by_score(feedback);
    const auto d0 = gated_offset_by_score(frozen);
    if (d1.size() != d0.size())
        throw std::runtime_error(
            "offset_R inputs disagree on the score grid");
    Built out;
    out.csv.metadata["figure"] = "offset_R";
    out.csv.metadata["source_0"] = source_hash(feedback);
    out.csv.metadata["source_1"] = source_hash(frozen);
    out.csv.columns = {"R", "delta_feedback", "delta_frozen"};
    auto it0 = d0.begin();
    for (const auto& [r, delta] : d1) {
        if (std::abs(it0->first - r) > 1e-9)
            throw std::runtime_error(
                "offset_R inputs disagree on the score grid");
        out.csv.rows.push_back({r, delta, it0->second});
        ++it0;
    }

    if (spec.style.svg) {
        Plot plot;
        plot.title = "gated top-ladder offset vs score, zero inventory";
        plot.x_label = "win score R";
        plot.y_label = "quote offset (bp)";
        Series a, b;
        a.label = "with score feedback";
        a.color = kPalette[0];
        b.label = "frozen score";
        b.color = kPalette[1];
        b.dashed = true;
        for (const auto& row : out.csv.rows) {
            a.points.emplace_back(row[0], row[1]);
            b.points.emplace_back(row[0], row[2]);
        }
        plot.series = {a, b};
        double r0 = spec.style.r0_line;
        if (std::isnan(r0)) r0 = metadata_number(feedback, "gate_r0");
        if (!std::isnan(r0)) plot.v_lines.push_back(r0);
        out.svg = render_plot_svg(plot, spec.style);
    }
    return out;
}

Built build_offset_q(const FigureSpec& spec) {
    const Input in = load_input(
        spec.inputs[0], {"size", "tier", "side", "q", "R", "delta", "y"});
    const std::size_t cs = in.table.column_index("size");
    const std::size_t ct = in.table.column_index("tier");
    const std::size_t cd_side = in.table.column_index("side");
    const std::size_t cq = in.table.column_index("q");
    const std::size_t cr = in.table.column_index("R");
    const std::size_t cd = in.table.column_index("delta");

    std::vector<double> rs;
    for (const auto& row : in.table.rows) rs.push_back(row[cr]);
    rs = sorted_unique(rs);

    double target = spec.style.r_slice;
    if (std::isnan(target)) target = metadata_number(in, "gate_r0");
    if (std::isnan(target)) target = rs[rs.size() / 2];
    double r_slice = rs.front();
    for (double r : rs)
        if (std::abs(r - target) < std::abs(r_slice - target)) r_slice = r;

    Built out;
    out.csv.metadata["figure"] = "offset_q";
    out.csv.metadata["source_0"] = source_hash(in);
    out.csv.metadata["r_slice"] = format_double(r_slice);
    out.csv.columns = {"size", "side", "q", "delta"};
    std::vector<std::vector<double>> rows;
    for (const auto& row : in.table.rows) {
        if (row[ct] != 0.0 || row[cr] != r_slice) continue;
        rows.push_back({row[cs], row[cd_side], row[cq], row[cd]});
    }
    if (rows.empty())
        throw std::runtime_error(in.path + ": no gated quotes at the score slice");
    std::sort(rows.begin(), rows.end());
    out.csv.rows = rows;

    if (spec.style.svg) {
        Plot plot;
        plot.title = "gated offsets vs inventory at R = " +
                     format_double(r_slice);
        plot.x_label = "inventory q (M)";
        plot.y_label = "quote offset (bp)";
        std::map<std::pair<double, double>, Series> series;
        int color = 0;
        for (const auto& row : rows) {
            auto key = std::make_pair(row[0], row[1]);
            auto it = series.find(key);
            if (it == series.end()) {
                Series s;
                s.label = "z = " + format_double(row[0]) +
                          (row[1] == 0.0 ? " bid" : " ask");
                s.color = kPalette[color % 8];
                s.dashed = row[1] == 0.0;
                if (row[1] != 0.0) ++color;
                it = series.emplace(key, s).first;
            }
            it->second.points.emplace_back(row[2], row[3]);
        }
        // same hue per size: assign colors by size order, dash for bid
        int idx = 0;
        std::map<double, std::string> size_color;
        for (auto& [key, s] : series) {
            auto found = size_color.find(key.first);
            if (found == size_color.end())
                found =
                    size_color.emplace(key.first, kPalette[idx++ % 8]).first;
            s.color = found->second;
            plot.series.push_back(s);
        }
        out.svg = render_plot_svg(plot, spec.style);
    }
    return out;
}

std::map<double, double> pnl_at_zero_inventory(const Input& in) {
    const std::size_t cq = in.table.column_index("q");
    const std::size_t cr = in.table.column_index("R");
    const std::size_t cp = in.table.column_index("Pi_A");
    std::map<double, double> out;
    for (const auto& row : in.table.rows)
        if (row[cq] == 0.0) out[row[cr]] = row[cp];
    if (out.empty())
        throw std::runtime_error(in.path + ": no rows at zero inventory");
    return out;
}

Built build_pnl_r(const FigureSpec& spec) {
    const Input in = load_input(spec.inputs[0], {"q", "R", "Pi_A"});
    const auto pnl = pnl_at_zero_inventory(in);

    Built out;
    out.csv.metadata["figure"] = "pnl_R";
    out.csv.metadata["source_0"] = source_hash(in);
    out.csv.columns = {"R", "Pi_A"};
    for (const auto& [r, p] : pnl) out.csv.rows.push_back({r, p});

    if (spec.style.svg) {
        Plot plot;
        plot.title = "gated-flow PnL rate vs score, zero inventory";
        plot.x_label = "win score R";
        plot.y_label = "PnL rate (bp M/day)";
        Series s;
        s.label = "";
        s.color = kPalette[0];
        for (const auto& row : out.csv.rows)
            s.points.emplace_back(row[0], row[1]);
        plot.series = {s};
        double r0 = spec.style.r0_line;
        if (std::isnan(r0)) r0 = metadata_number(in, "gate_r0");
        if (!std::isnan(r0)) plot.v_lines.push_back(r0);
        out.svg = render_plot_svg(plot, spec.style);
    }
    return out;
}

Built build_pnl_drift(const FigureSpec& spec) {
    const Input pnl_in = load_input(spec.inputs[0], {"q", "R", "Pi_A"});
    const Input drift_in = load_input(spec.inputs[1], {"R", "drift"});
    const auto pnl = pnl_at_zero_inventory(pnl_in);
    const std::size_t cr = drift_in.table.column_index("R");
    const std::size_t cd = drift_in.table.column_index("drift");

    Built out;
    out.csv.metadata["figure"] = "pnl_drift";
    out.csv.metadata["source_0"] = source_hash(pnl_in);
    out.csv.metadata["source_1"] = source_hash(drift_in);
    out.csv.columns = {"R", "drift", "Pi_A"};
    for (const auto& row : drift_in.table.rows) {
        const auto it = pnl.find(row[cr]);
        if (it == pnl.end())
            throw std::runtime_error(
                "pnl_drift inputs disagree on the score grid");
        out.csv.rows.push_back({row[cr], row[cd], it->second});
    }
    std::sort(out.csv.rows.begin(), out.csv.rows.end());

    if (spec.style.svg) {
        Plot plot;
        plot.title = "campaign/harvest loop";
        plot.x_label = "score drift (1/day)";
        plot.y_label = "PnL rate (bp M/day)";
        Series s;
        s.label = "path by increasing R";
        s.color = kPalette[0];
        Series ends;
        ends.label = "R endpoints";
        ends.color = kPalette[1];
        ends.markers_only = true;
        for (const auto& row : out.csv.rows)
            s.points.emplace_back(row[1], row[2]);
        if (!s.points.empty()) {
            ends.points.push_back(s.points.front());
            ends.points.push_back(s.points.back());
        }
        plot.series = {s, ends};
        plot.v_lines.push_back(0.0);
        out.svg = render_plot_svg(plot, spec.style);
    }
    return out;
}

Built build_drift_portrait(const FigureSpec& spec) {
    const Input in = load_input(spec.inputs[0],
                                {"R", "ybar", "drift", "drift_per_trade"});
    const std::size_t cr = in.table.column_index("R");
    const std::size_t cy = in.table.column_index("ybar");
    const std::size_t cd = in.table.column_index("drift");
    const std::size_t cp = in.table.column_index("drift_per_trade");

    Built out;
    out.csv.metadata["figure"] = "drift_portrait";
    out.csv.metadata["source_0"] = source_hash(in);
    out.csv.columns = {"R", "ybar", "drift", "drift_per_trade"};
    for (const auto& row : in.table.rows)
        out.csv.rows.push_back({row[cr], row[cy], row[cd], row[cp]});
    std::sort(out.csv.rows.begin(), out.csv.rows.end());

    if (spec.style.svg) {
        Plot plot;
        plot.title = "slow score drift field";
        plot.x_label = "win score R";
        plot.y_label = "drift (1/day)";
        Series s;
        s.label = "drift";
        s.color = kPalette[0];
        for (const auto& row : out.csv.rows)
            s.points.emplace_back(row[0], row[2]);
        // zeros of the drift: filled marker when the slope is stabilizing
        Series stable, unstable;
        stable.label = "stable zero";
        stable.color = kPalette[2];
        stable.markers_only = true;
        unstable.label = "unstable zero";
        unstable.color = kPalette[1];
        unstable.markers_only = true;
        unstable.open_markers = true;
        for (std::size_t i = 1; i < out.csv.rows.size(); ++i) {
            const double d0 = out.csv.rows[i - 1][2], d1 = out.csv.rows[i][2];
            if (std::isnan(d0) || std::isnan(d1)) continue;
            if (d0 == 0.0 || d0 * d1 >= 0.0) continue;
            const double r0v = out.csv.rows[i - 1][0];
            const double r1v = out.csv.rows[i][0];
            const double rz = r0v + (r1v - r0v) * (0.0 - d0) / (d1 - d0);
            (d1 < d0 ? stable : unstable).points.emplace_back(rz, 0.0);
        }
        plot.series = {s, stable, unstable};
        plot.h_lines.push_back(0.0);
        out.svg = render_plot_svg(plot, spec.style);
    }
    return out;
}

Built build_relaxation(const FigureSpec& spec) {
    const Input in = load_input(spec.inputs[0], {"start", "t", "R"});
    const std::size_t cs = in.table.column_index("start");
    const std::size_t ct = in.table.column_index("t");
    const std::size_t cr = in.table.column_index("R");

    Built out;
    out.csv.metadata["figure"] = "relaxation";
    out.csv.metadata["source_0"] = source_hash(in);
    out.csv.columns = {"start", "t", "R"};
    for (const auto& row : in.table.rows)
        out.csv.rows.push_back({row[cs], row[ct], row[cr]});
    std::sort(out.csv.rows.begin(), out.csv.rows.end());

    if (spec.style.svg) {
        Plot plot;
        plot.title = "score relaxation fan";
        plot.x_label = "t (days)";
        plot.y_label = "win score R";
        std::map<double, Series> fans;
        int idx = 0;
        for (const auto& row : out.csv.rows) {
            auto it = fans.find(row[0]);
            if (it == fans.end()) {
                Series s;
                s.label = "from " + format_double(row[0]);
                s.color = kPalette[idx++ % 8];
                it = fans.emplace(row[0], s).first;
            }
            it->second.points.emplace_back(row[1], row[2]);
        }
        for (const auto& [start, s] : fans) plot.series.push_back(s);
        out.svg = render_plot_svg(plot, spec.style);
    }
    return out;
}

Built build_bifurcation(const FigureSpec& spec) {
    const Input in = load_input(spec.inputs[0], {"beta", "R_star", "stability"});
    const std::size_t cb = in.table.column_index("beta");
    const std::size_t cr = in.table.column_index("R_star");
    const std::size_t cs = in.table.column_index("stability");

    Built out;
    out.csv.metadata["figure"] = "bifurcation";
    out.csv.metadata["source_0"] = source_hash(in);
    out.csv.columns = {"beta", "R_star", "stability"};
    for (const auto& row : in.table.rows)
        out.csv.rows.push_back({row[cb], row[cr], row[cs]});
    std::sort(out.csv.rows.begin(), out.csv.rows.end());

    if (spec.style.svg) {
        Plot plot;
        plot.title = "fixed-point branches vs gate steepness";
        plot.x_label = "gate steepness beta";
        plot.y_label = "fixed point R*";
        Series stable, unstable;
        stable.label = "stable";
        stable.color = kPalette[0];
        stable.markers_only = true;
        unstable.label = "unstable";
        unstable.color = kPalette[1];
        unstable.markers_only = true;
        unstable.open_markers = true;
        for (const auto& row : out.csv.rows)
            (row[2] != 0.0 ? stable : unstable)
                .points.emplace_back(row[0], row[1]);
        plot.series = {stable, unstable};
        out.svg = render_plot_svg(plot, spec.style);
    }
    return out;
}

}  // namespace

FigureStyle::FigureStyle()
    : x_min(kNaN),
      x_max(kNaN),
      y_min(kNaN),
      y_max(kNaN),
      r0_line(kNaN),
      r_slice(kNaN) {}

FigureId parse_figure_id(const std::string& name) {
    for (std::size_t i = 0; i < 8; ++i)
        if (name == kFigureNames[i]) return static_cast<FigureId>(i);
    std::string msg = "unknown figure '" + name + "'; valid figures:";
    for (std::size_t i = 0; i < 8; ++i)
        msg += std::string(" ") + kFigureNames[i];
    throw std::invalid_argument(msg);
}

std::string figure_id_name(FigureId id) {
    return kFigureNames[static_cast<std::size_t>(id)];
}

RenderOutput render(const FigureSpec& spec) {
    static const std::size_t kInputCount[] = {1, 2, 1, 1, 2, 1, 1, 1};
    const std::size_t want = kInputCount[static_cast<std::size_t>(spec.id)];
    if (spec.inputs.size() != want) {
        std::ostringstream os;
        os << figure_id_name(spec.id) << ": expected " << want << " input file"
           << (want == 1 ? "" : "s") << ", got " << spec.inputs.size();
        throw std::runtime_error(os.str());
    }
    if (spec.out_dir.empty())
        throw std::runtime_error("render: output directory not set");

    Built built;
    switch (spec.id) {
        case FigureId::ValueHeatmap: built = build_value_heatmap(spec); break;
        case FigureId::OffsetR: built = build_offset_r(spec); break;
        case FigureId::OffsetQ: built = build_offset_q(spec); break;
        case FigureId::PnlR: built = build_pnl_r(spec); break;
        case FigureId::PnlDrift: built = build_pnl_drift(spec); break;
        case FigureId::DriftPortrait: built = build_drift_portrait(spec); break;
        case FigureId::Relaxation: built = build_relaxation(spec); break;
        case FigureId::Bifurcation: built = build_bifurcation(spec); break;
    }

    // all inputs validated and outputs built; only now touch the filesystem
    std::filesystem::create_directories(spec.out_dir);
    const std::string base =
        spec.out_dir + "/" + figure_id_name(spec.id);
    RenderOutput out;
    write_csv(base + ".csv", built.csv);
    out.files.push_back(base + ".csv");
    if (!built.svg.empty()) {
        std::ofstream f(base + ".svg", std::ios::binary);
        if (!f) throw std::runtime_error("cannot open '" + base + ".svg'");
        f << built.svg;
        f.flush();
        if (!f) throw std::runtime_error("write failed for '" + base + ".svg'");
        out.files.push_back(base + ".svg");
    }
    return out;
}

}  // namespace rfqmm
