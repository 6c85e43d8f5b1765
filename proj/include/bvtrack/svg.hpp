#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "bvtrack/core.hpp"
#include "bvtrack/serialization.hpp"

namespace bvtrack::svg {

namespace detail {

constexpr double kWidth = 640, kHeight = 480, kLeft = 60, kRight = 170, kTop = 30, kBottom = 50;

inline const char* palette(std::size_t i) {
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                   "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#7f7f7f"};
    return colors[i % 10];
}

struct Frame {
    double x0, x1, y0, y1;
    double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
    double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

inline void header(std::ostringstream& os, const std::string& title) {
    os << R"(<svg xmlns="http://www.w3.org/2000/svg" width=")" << kWidth << R"(" height=")" << kHeight
       << R"(" font-family="sans-serif" font-size="12">)" << "\n";
    os << R"(<rect width="100%" height="100%" fill="white"/>)" << "\n";
    os << R"(<text x=")" << (kWidth - kRight + kLeft) / 2 << R"(" y="18" text-anchor="middle">)" << title << "</text>\n";
}

inline void axes(std::ostringstream& os, const Frame& f, const std::string& xlabel, const std::string& ylabel,
                 int xticks, int yticks, bool log_y = false) {
    os << R"(<rect x=")" << kLeft << R"(" y=")" << kTop << R"(" width=")" << kWidth - kLeft - kRight
       << R"(" height=")" << kHeight - kTop - kBottom << R"(" fill="none" stroke="black"/>)" << "\n";
    for (int k = 0; k <= xticks; ++k) {
        const double x = f.x0 + (f.x1 - f.x0) * k / xticks;
        os << R"(<text x=")" << f.px(x) << R"(" y=")" << kHeight - kBottom + 16 << R"(" text-anchor="middle">)"
           << format_double(std::round(x * 100) / 100) << "</text>\n";
    }
    for (int k = 0; k <= yticks; ++k) {
        const double y = f.y0 + (f.y1 - f.y0) * k / yticks;
        const double shown = log_y ? std::pow(10.0, y) : y;
        std::ostringstream lab;
        lab.precision(3);
        lab << shown;
        os << R"(<text x=")" << kLeft - 6 << R"(" y=")" << f.py(y) + 4 << R"(" text-anchor="end">)" << lab.str()
           << "</text>\n";
    }
    os << R"(<text x=")" << (kWidth - kRight + kLeft) / 2 << R"(" y=")" << kHeight - 12 << R"(" text-anchor="middle">)"
       << xlabel << "</text>\n";
    os << "<text x=\"14\" y=\"" << kHeight / 2 << "\" transform=\"rotate(-90 14 " << kHeight / 2
       << ")\" text-anchor=\"middle\">" << ylabel << "</text>\n";
}

/// Continuous pieces as polylines, jumps as dashed verticals.
inline void trajectory(std::ostringstream& os, const Frame& f, const TimeGrid& grid, const CadlagSamples& c,
                       const char* color, double width, bool dashed_jumps) {
    const std::size_t n = grid.size();
    os << R"(<g stroke=")" << color << R"(" stroke-width=")" << width << R"(" fill="none">)" << "\n";
    for (std::size_t j = 0; j + 1 < n; ++j)
        os << R"(<line x1=")" << f.px(grid[j]) << R"(" y1=")" << f.py(c.gamma_plus[j]) << R"(" x2=")"
           << f.px(grid[j + 1]) << R"(" y2=")" << f.py(c.gamma_minus[j + 1]) << R"("/>)" << "\n";
    for (std::size_t j = 1; j < n; ++j) {
        if (c.gamma_plus[j] == c.gamma_minus[j]) continue;
        os << R"(<line x1=")" << f.px(grid[j]) << R"(" y1=")" << f.py(c.gamma_minus[j]) << R"(" x2=")" << f.px(grid[j])
           << R"(" y2=")" << f.py(c.gamma_plus[j]) << '"' << (dashed_jumps ? R"( stroke-dasharray="4,3")" : "")
           << "/>\n";
    }
    os << "</g>\n";
}

} // namespace detail

/// Reconstructed trajectories (line width proportional to mass) over an optional ground truth.
inline std::string reconstruction_plot(const SparseDiracMeasure& recon, const TimeGrid& grid, const Domain1D& dom,
                                       const std::vector<CadlagSamples>& truth_curves, const std::string& title) {
    using namespace detail;
    std::ostringstream os;
    header(os, title);
    const Frame f{0.0, 1.0, dom.lo, dom.hi};
    axes(os, f, "t", "x", 5, 5);
    for (const auto& c : truth_curves) trajectory(os, f, grid, c, "#999999", 1.0, false);
    double max_mass = 0.0;
    for (const auto& a : recon.atoms) max_mass = std::max(max_mass, a.mass);
    for (std::size_t i = 0; i < recon.atoms.size(); ++i) {
        const auto& a = recon.atoms[i];
        const double width = max_mass > 0.0 ? 1.0 + 3.0 * a.mass / max_mass : 1.0;
        trajectory(os, f, grid, a.curve, palette(i), width, true);
        const double ly = kTop + 16 + 18.0 * static_cast<double>(i);
        os << R"(<line x1=")" << kWidth - kRight + 12 << R"(" y1=")" << ly - 4 << R"(" x2=")" << kWidth - kRight + 36
           << R"(" y2=")" << ly - 4 << R"(" stroke=")" << palette(i) << R"(" stroke-width=")" << width << R"("/>)"
           << "\n";
        std::ostringstream lab;
        lab.precision(4);
        lab << "w = " << a.mass;
        os << R"(<text x=")" << kWidth - kRight + 42 << R"(" y=")" << ly << R"(">)" << lab.str() << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

/// k -> r0(mu^k) on a log scale; zero residuals are skipped.
inline std::string residual_plot(const std::vector<double>& residuals, const std::string& title) {
    using namespace detail;
    std::vector<std::pair<double, double>> pts;
    for (std::size_t k = 0; k < residuals.size(); ++k)
        if (residuals[k] > 0.0) pts.emplace_back(static_cast<double>(k), std::log10(residuals[k]));
    double ylo = -1, yhi = 1;
    if (!pts.empty()) {
        ylo = std::floor(std::min_element(pts.begin(), pts.end(), [](auto a, auto b) { return a.second < b.second; })->second);
        yhi = std::ceil(std::max_element(pts.begin(), pts.end(), [](auto a, auto b) { return a.second < b.second; })->second);
        if (yhi <= ylo) yhi = ylo + 1;
    }
    const double xhi = std::max(1.0, static_cast<double>(residuals.size()) - 1.0);
    std::ostringstream os;
    header(os, title);
    const Frame f{0.0, xhi, ylo, yhi};
    axes(os, f, "k", "r0", std::min(10, static_cast<int>(xhi)), static_cast<int>(yhi - ylo), true);
    os << R"(<polyline fill="none" stroke="#1f77b4" stroke-width="2" points=")";
    for (const auto& [x, y] : pts) os << f.px(x) << "," << f.py(y) << " ";
    os << R"("/>)" << "\n";
    for (const auto& [x, y] : pts) os << R"(<circle cx=")" << f.px(x) << R"(" cy=")" << f.py(y) << R"(" r="3" fill="#1f77b4"/>)" << "\n";
    os << "</svg>\n";
    return os.str();
}

} // namespace bvtrack::svg
