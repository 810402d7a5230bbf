#pragma once

// Plain SVG charts: chosen-k beeswarm, per-k curves, and exposure densities.

#include "vaems/core.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace vaems::report {

inline std::string timestamp_utc() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '<') out += "&lt;";
        else if (c == '>') out += "&gt;";
        else if (c == '&') out += "&amp;";
        else out += c;
    }
    return out;
}

inline const char* palette(std::size_t i) {
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
    return colors[i % 6];
}

/// Plot frame with linear axes; maps data coordinates to pixels.
class Canvas {
public:
    Canvas(double x0, double x1, double y0, double y1, std::string title, std::string xlabel, std::string ylabel)
        : x0_(x0), x1_(x1 > x0 ? x1 : x0 + 1), y0_(y0), y1_(y1 > y0 ? y1 : y0 + 1), title_(std::move(title)),
          xlabel_(std::move(xlabel)), ylabel_(std::move(ylabel)) {}

    double px(double x) const { return kLeft + (x - x0_) / (x1_ - x0_) * (kWidth - kLeft - kRight); }
    double py(double y) const { return kHeight - kBottom - (y - y0_) / (y1_ - y0_) * (kHeight - kTop - kBottom); }

    void add(const std::string& element) { body_ += element + "\n"; }

    void polyline(const std::vector<std::pair<double, double>>& pts, const char* color) {
        std::string d;
        for (const auto& [x, y] : pts) d += num(px(x)) + "," + num(py(y)) + " ";
        add("<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"" + d + "\"/>");
    }

    void circle(double x, double y, const char* color, double r = 4) {
        add("<circle cx=\"" + num(px(x)) + "\" cy=\"" + num(py(y)) + "\" r=\"" + num(r) + "\" fill=\"" + color +
            "\" fill-opacity=\"0.75\"/>");
    }

    void legend(const std::vector<std::string>& names) {
        for (std::size_t i = 0; i < names.size(); ++i) {
            const double y = kTop + 14 + 16 * static_cast<double>(i);
            add("<rect x=\"" + num(kWidth - kRight - 110) + "\" y=\"" + num(y - 9) + "\" width=\"10\" height=\"10\" fill=\"" +
                palette(i) + "\"/>");
            add("<text x=\"" + num(kWidth - kRight - 95) + "\" y=\"" + num(y) + "\" font-size=\"11\">" + escape(names[i]) +
                "</text>");
        }
    }

    void write(std::ostream& out, const std::vector<double>& xticks, const std::string& stamp) const {
        out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
        out << "<!-- generated " << stamp << " -->\n";
        out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
            << "\" font-family=\"sans-serif\">\n";
        out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
        out << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(title_)
            << "</text>\n";
        const double bx = px(x0_), by = py(y0_), tx = px(x1_), ty = py(y1_);
        out << "<path d=\"M" << num(bx) << ' ' << num(ty) << " V" << num(by) << " H" << num(tx)
            << "\" stroke=\"black\" fill=\"none\"/>\n";
        for (double t : xticks)
            out << "<text x=\"" << num(px(t)) << "\" y=\"" << num(by + 16) << "\" text-anchor=\"middle\" font-size=\"11\">"
                << num_short(t) << "</text>\n";
        for (int i = 0; i <= 4; ++i) {
            const double v = y0_ + (y1_ - y0_) * i / 4.0;
            out << "<text x=\"" << num(bx - 6) << "\" y=\"" << num(py(v) + 4)
                << "\" text-anchor=\"end\" font-size=\"11\">" << num_short(v) << "</text>\n";
        }
        out << "<text x=\"" << num((bx + tx) / 2) << "\" y=\"" << kHeight - 8 << "\" text-anchor=\"middle\" font-size=\"12\">"
            << escape(xlabel_) << "</text>\n";
        out << "<text transform=\"translate(14," << num((by + ty) / 2) << ") rotate(-90)\" text-anchor=\"middle\" font-size=\"12\">"
            << escape(ylabel_) << "</text>\n";
        out << body_;
        out << "</svg>\n";
    }

private:
    static std::string num_short(double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3g", v);
        return buf;
    }

    static constexpr double kWidth = 640, kHeight = 420, kLeft = 64, kRight = 20, kTop = 36, kBottom = 48;
    double x0_, x1_, y0_, y1_;
    std::string title_, xlabel_, ylabel_, body_;
};

/// Chosen number of signatures per split, one column of points per model.
inline void beeswarm(std::ostream& out, const std::map<std::string, std::vector<int>>& chosen, const std::string& stamp) {
    int kmin = std::numeric_limits<int>::max(), kmax = 0;
    for (const auto& [_, ks] : chosen)
        for (int k : ks) {
            kmin = std::min(kmin, k);
            kmax = std::max(kmax, k);
        }
    if (kmax == 0) kmin = kmax = 1;
    Canvas c(-0.5, static_cast<double>(chosen.size()) - 0.5, kmin - 0.5, kmax + 0.5,
             "Number of signatures selected per split", "model", "selected k");
    std::size_t m = 0;
    for (const auto& [name, ks] : chosen) {
        std::map<int, int> seen;
        for (int k : ks) {
            const int i = seen[k]++;
            const double offset = (i % 2 ? -1.0 : 1.0) * ((i + 1) / 2) * 0.06;
            c.circle(static_cast<double>(m) + offset, k, palette(m), 5);
        }
        c.add("<text x=\"" + num(c.px(static_cast<double>(m))) + "\" y=\"" + num(c.py(kmax + 0.5) + 14) +
              "\" text-anchor=\"middle\" font-size=\"12\">" + escape(name) + "</text>");
        ++m;
    }
    c.write(out, {}, stamp);
}

/// One line per named series of (k, value) points.
inline void curves(std::ostream& out, const std::map<std::string, std::vector<std::pair<double, double>>>& series,
                   const std::string& title, const std::string& ylabel, const std::string& stamp) {
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& [_, pts] : series)
        for (const auto& [x, y] : pts) {
            if (!std::isfinite(y)) continue;
            x0 = std::min(x0, x);
            x1 = std::max(x1, x);
            y0 = std::min(y0, y);
            y1 = std::max(y1, y);
        }
    if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    const double pad = (y1 - y0) * 0.05 + 1e-9;
    Canvas c(x0, x1, y0 - pad, y1 + pad, title, "number of signatures k", ylabel);
    std::vector<std::string> names;
    std::size_t i = 0;
    for (const auto& [name, pts] : series) {
        c.polyline(pts, palette(i));
        for (const auto& [x, y] : pts) c.circle(x, y, palette(i), 3);
        names.push_back(name);
        ++i;
    }
    c.legend(names);
    std::vector<double> ticks;
    for (double k = std::ceil(x0); k <= x1; k += 1) ticks.push_back(k);
    c.write(out, ticks, stamp);
}

/// Gaussian kernel density on a grid, Silverman bandwidth.
inline std::vector<std::pair<double, double>> kde(const std::vector<double>& xs, double lo, double hi, int grid = 200) {
    std::vector<std::pair<double, double>> out;
    if (xs.empty()) return out;
    double mean = 0, var = 0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= std::max<double>(1.0, static_cast<double>(xs.size()) - 1);
    const double h = std::max(1e-3, 1.06 * std::sqrt(var) * std::pow(static_cast<double>(xs.size()), -0.2));
    const double norm = 1.0 / (static_cast<double>(xs.size()) * h * std::sqrt(2 * M_PI));
    for (int g = 0; g <= grid; ++g) {
        const double t = lo + (hi - lo) * g / grid;
        double d = 0;
        for (double x : xs) d += std::exp(-0.5 * ((t - x) / h) * ((t - x) / h));
        out.emplace_back(t, d * norm);
    }
    return out;
}

/// Densities of log10(1 + exposure) for each named exposure set.
inline void exposure_density(std::ostream& out, const std::map<std::string, std::vector<double>>& exposures,
                             const std::string& stamp) {
    std::map<std::string, std::vector<double>> logs;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& [name, xs] : exposures) {
        auto& l = logs[name];
        for (double x : xs) {
            l.push_back(std::log10(1.0 + std::max(0.0, x)));
            lo = std::min(lo, l.back());
            hi = std::max(hi, l.back());
        }
    }
    if (!std::isfinite(lo)) lo = 0, hi = 1;
    std::map<std::string, std::vector<std::pair<double, double>>> dens;
    double ymax = 0;
    for (const auto& [name, l] : logs) {
        dens[name] = kde(l, lo, hi);
        for (const auto& [_, y] : dens[name]) ymax = std::max(ymax, y);
    }
    Canvas c(lo, hi, 0, ymax > 0 ? ymax * 1.05 : 1, "Exposure densities", "log10(1 + exposure)", "density");
    std::vector<std::string> names;
    std::size_t i = 0;
    for (const auto& [name, pts] : dens) {
        c.polyline(pts, palette(i++));
        names.push_back(name);
    }
    c.legend(names);
    std::vector<double> ticks;
    for (int t = 0; t <= 4; ++t) ticks.push_back(lo + (hi - lo) * t / 4.0);
    c.write(out, ticks, stamp);
}

}  // namespace vaems::report
