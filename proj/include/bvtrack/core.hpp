#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bvtrack/errors.hpp"

namespace bvtrack {

/// Time discretization 0 = t_0 < ... < t_M = 1.
class TimeGrid {
public:
    TimeGrid() : TimeGrid(std::vector<double>{0.0, 1.0}) {}

    explicit TimeGrid(std::vector<double> points) : points_(std::move(points)) {
        detail::require(points_.size() >= 2, "TimeGrid: need at least two points");
        detail::require(points_.front() == 0.0 && points_.back() == 1.0,
                        "TimeGrid: endpoints must be exactly 0 and 1");
        for (std::size_t j = 1; j < points_.size(); ++j)
            detail::require(points_[j] > points_[j - 1], "TimeGrid: points must be strictly increasing");
    }

    const std::vector<double>& points() const { return points_; }
    double operator[](std::size_t j) const { return points_[j]; }
    /// Number of intervals.
    std::size_t M() const { return points_.size() - 1; }
    std::size_t size() const { return points_.size(); }

    bool operator==(const TimeGrid&) const = default;

private:
    std::vector<double> points_;
};

inline TimeGrid make_uniform_grid(std::size_t M) {
    detail::require(M >= 1, "make_uniform_grid: M must be positive");
    std::vector<double> pts(M + 1);
    for (std::size_t j = 0; j <= M; ++j) pts[j] = static_cast<double>(j) / static_cast<double>(M);
    return TimeGrid(std::move(pts));
}

/// Spatial interval Omega = [lo, hi].
struct Domain1D {
    double lo = 0.0;
    double hi = 1.0;

    Domain1D() = default;
    Domain1D(double lo_, double hi_) : lo(lo_), hi(hi_) {
        detail::require(std::isfinite(lo) && std::isfinite(hi) && lo < hi, "Domain1D: need finite lo < hi");
    }

    double diameter() const { return hi - lo; }
    bool contains(double x) const { return x >= lo && x <= hi; }
    bool operator==(const Domain1D&) const = default;
};

inline double clamp_to_domain(double x, const Domain1D& dom) { return std::min(std::max(x, dom.lo), dom.hi); }

/// Right and left traces of a cadlag curve at the grid points.
///
/// gamma_plus[j] is the value at t_j, gamma_minus[j] the left limit there. Index 0 has no
/// left limit, so sampled curves carry gamma_minus[0] == gamma_plus[0]; inside the optimizer
/// both entries are free and the variation penalty pulls them together.
struct CadlagSamples {
    std::vector<double> gamma_plus;
    std::vector<double> gamma_minus;

    CadlagSamples() = default;
    CadlagSamples(std::vector<double> plus, std::vector<double> minus)
        : gamma_plus(std::move(plus)), gamma_minus(std::move(minus)) {
        detail::require(gamma_plus.size() == gamma_minus.size() && !gamma_plus.empty(),
                        "CadlagSamples: trace vectors must be nonempty and of equal length");
    }

    static CadlagSamples constant(std::size_t n_points, double value) {
        return {std::vector<double>(n_points, value), std::vector<double>(n_points, value)};
    }

    std::size_t size() const { return gamma_plus.size(); }

    /// |gamma_plus[j] - gamma_minus[j]|.
    double jump_at(std::size_t j) const { return std::abs(gamma_plus[j] - gamma_minus[j]); }

    /// Largest jump over interior grid points 1..M-1 (t_0 has no left limit; the right trace at
    /// t_M is not observed by the default forward operator).
    double max_interior_jump() const {
        double m = 0.0;
        for (std::size_t j = 1; j + 1 < size(); ++j) m = std::max(m, jump_at(j));
        return m;
    }

    bool within(const Domain1D& dom) const {
        auto in = [&](double x) { return dom.contains(x); };
        return std::all_of(gamma_plus.begin(), gamma_plus.end(), in) &&
               std::all_of(gamma_minus.begin(), gamma_minus.end(), in);
    }

    /// Throws unless the traces match the grid, lie in the domain and anchor gamma_minus[0].
    void validate(const TimeGrid& grid, const Domain1D& dom) const {
        detail::require(gamma_plus.size() == grid.size() && gamma_minus.size() == grid.size(),
                        "CadlagSamples: length does not match the time grid");
        detail::require(within(dom), "CadlagSamples: trace entries outside the domain");
        detail::require(gamma_minus[0] == gamma_plus[0], "CadlagSamples: gamma_minus[0] must equal gamma_plus[0]");
    }

    bool operator==(const CadlagSamples&) const = default;
};

/// Left/right split of the temporal blur at each grid point.
struct ThetaWeights {
    std::vector<double> theta;

    ThetaWeights() = default;
    explicit ThetaWeights(std::vector<double> th) : theta(std::move(th)) {
        detail::require(theta.size() >= 2, "ThetaWeights: need at least two entries");
        detail::require(theta.front() == 0.0 && theta.back() == 1.0, "ThetaWeights: need theta_0 = 0 and theta_M = 1");
        for (double v : theta) detail::require(v >= 0.0 && v <= 1.0, "ThetaWeights: entries must lie in [0,1]");
    }

    /// theta_j = 0 for j < M and theta_M = 1: right traces everywhere except the final left trace.
    static ThetaWeights standard(const TimeGrid& grid) {
        std::vector<double> th(grid.size(), 0.0);
        th.back() = 1.0;
        return ThetaWeights(std::move(th));
    }

    std::size_t size() const { return theta.size(); }
    double operator[](std::size_t j) const { return theta[j]; }
    bool operator==(const ThetaWeights&) const = default;
};

struct Atom {
    double mass = 0.0;
    CadlagSamples curve;
    bool operator==(const Atom&) const = default;
};

/// mu = sum_i mass_i * delta_{curve_i}.
struct SparseDiracMeasure {
    std::vector<Atom> atoms;

    double total_mass() const {
        double s = 0.0;
        for (const auto& a : atoms) s += a.mass;
        return s;
    }
    std::size_t size() const { return atoms.size(); }
    bool empty() const { return atoms.empty(); }

    SparseDiracMeasure scaled(double factor) const {
        SparseDiracMeasure out = *this;
        for (auto& a : out.atoms) a.mass *= factor;
        return out;
    }

    bool operator==(const SparseDiracMeasure&) const = default;
};

/// Sensor readings, one row per sensor and one column per grid time.
struct Measurement {
    Eigen::MatrixXd values;

    Measurement() = default;
    explicit Measurement(Eigen::MatrixXd v) : values(std::move(v)) {}
    static Measurement zeros(std::size_t n_sensors, std::size_t n_times) {
        return Measurement(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_sensors), static_cast<Eigen::Index>(n_times)));
    }

    std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
    std::size_t cols() const { return static_cast<std::size_t>(values.cols()); }
    double operator()(std::size_t i, std::size_t j) const {
        return values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }

    bool operator==(const Measurement& o) const {
        return values.rows() == o.values.rows() && values.cols() == o.values.cols() && values == o.values;
    }
};

/// Gaussian sensor kernels Phi_i(x) = (C_i / sigma_i) exp(-(x - x_i)^2 / (2 sigma_i^2)).
struct SensorArray {
    std::vector<double> positions;
    std::vector<double> sigma2;
    std::vector<double> c;

    SensorArray() = default;
    SensorArray(std::vector<double> pos, std::vector<double> var, std::vector<double> scale)
        : positions(std::move(pos)), sigma2(std::move(var)), c(std::move(scale)) {
        detail::require(!positions.empty(), "SensorArray: need at least one sensor");
        detail::require(sigma2.size() == positions.size() && c.size() == positions.size(),
                        "SensorArray: positions, sigma2 and c must have equal length");
        for (double s : sigma2) detail::require(s > 0.0 && std::isfinite(s), "SensorArray: sigma2 must be positive");
        for (double x : positions) detail::require(std::isfinite(x), "SensorArray: non-finite position");
    }

    /// L equidistant sensors spanning the domain (both endpoints included) with shared parameters.
    static SensorArray equidistant(const Domain1D& dom, std::size_t L, double sigma2, double c) {
        detail::require(L >= 1, "SensorArray: need at least one sensor");
        std::vector<double> pos(L);
        if (L == 1) {
            pos[0] = 0.5 * (dom.lo + dom.hi);
        } else {
            for (std::size_t i = 0; i < L; ++i)
                pos[i] = dom.lo + dom.diameter() * static_cast<double>(i) / static_cast<double>(L - 1);
        }
        return SensorArray(std::move(pos), std::vector<double>(L, sigma2), std::vector<double>(L, c));
    }

    void validate(const Domain1D& dom) const {
        for (double x : positions) detail::require(dom.contains(x), "SensorArray: sensor outside the domain");
    }

    std::size_t size() const { return positions.size(); }
    double peak(std::size_t i) const { return c[i] / std::sqrt(sigma2[i]); }
    double max_peak() const {
        double m = 0.0;
        for (std::size_t i = 0; i < size(); ++i) m = std::max(m, std::abs(peak(i)));
        return m;
    }
    bool operator==(const SensorArray&) const = default;
};

struct AscentParams {
    int max_iters = 300;
    /// Largest per-coordinate displacement tried by the line search, as a fraction of diam(Omega).
    double init_step_fraction = 0.1;
    double armijo_c = 1e-4;
    double shrink = 0.5;
    /// Smallest displacement before the search is declared stalled.
    double min_step = 1e-12;
    /// Smoothing used for the exploratory ascent of every start (clamped below by eps_smooth).
    double coarse_eps = 1e-3;
    /// Number of best starts refined with smoothing decreasing by decades down to eps_smooth.
    int refine_top = 5;
    /// Ascent iterations per refinement stage.
    int refine_iters = 500;
};

/// How multi-start initializations are drawn.
///   iid:      both trace vectors with iid uniform entries
///   constant: one uniform level for the whole curve
///   mixed:    cycles iid, constant, and a single jump between two uniform levels at a uniform grid point
enum class StartFamily { iid, constant, mixed };

inline std::string to_string(StartFamily f) {
    switch (f) {
    case StartFamily::iid: return "iid";
    case StartFamily::constant: return "constant";
    case StartFamily::mixed: return "mixed";
    }
    return "mixed";
}

inline StartFamily start_family_from_string(const std::string& s) {
    if (s == "iid") return StartFamily::iid;
    if (s == "constant") return StartFamily::constant;
    if (s == "mixed") return StartFamily::mixed;
    throw ValidationError("unknown start family '" + s + "'");
}

struct CoefficientParams {
    int max_iters = 100000;
    double kkt_tol = 1e-10;
    int power_iters = 50;
};

struct SolverConfig {
    double alpha = 1.0;
    double beta = 1.0;
    double eps_stop = 1e-4;
    double eps_smooth = 1e-6;
    int q_starts = 150;
    StartFamily starts = StartFamily::mixed;
    int max_outer_iters = 50;
    AscentParams ascent;
    CoefficientParams coeff;
    double prune_tol = 1e-9;
    /// Atoms whose traces differ by at most this much are merged when that lowers the objective (0 disables).
    double merge_tol = 0.05;
    std::uint64_t seed = 1;
    Domain1D domain{0.0, 5.0};

    void validate() const {
        detail::require(alpha > 0.0 && std::isfinite(alpha), "SolverConfig: alpha must be positive");
        detail::require(beta > 0.0 && std::isfinite(beta), "SolverConfig: beta must be positive");
        detail::require(eps_stop >= 0.0, "SolverConfig: eps_stop must be nonnegative");
        detail::require(eps_smooth > 0.0, "SolverConfig: eps_smooth must be positive");
        detail::require(q_starts >= 1, "SolverConfig: q_starts must be at least 1");
        detail::require(max_outer_iters >= 1, "SolverConfig: max_outer_iters must be at least 1");
        detail::require(prune_tol >= 0.0, "SolverConfig: prune_tol must be nonnegative");
        detail::require(merge_tol >= 0.0, "SolverConfig: merge_tol must be nonnegative");
        detail::require(ascent.max_iters >= 0 && ascent.init_step_fraction > 0.0 && ascent.shrink > 0.0 &&
                            ascent.shrink < 1.0 && ascent.armijo_c > 0.0 && ascent.armijo_c < 1.0 &&
                            ascent.coarse_eps > 0.0 && ascent.refine_top >= 0 && ascent.refine_iters >= 0,
                        "SolverConfig: invalid ascent parameters");
        detail::require(coeff.max_iters >= 1 && coeff.kkt_tol > 0.0, "SolverConfig: invalid coefficient parameters");
    }
};

/// Right-continuous piecewise closed-form curve on [0,1].
///
/// pieces[p] is active on [breaks[p-1], breaks[p]) with breaks[-1] = 0 and the last piece
/// closed at t = 1. The declared jump times are exactly the interior breaks.
struct ParametricCurve {
    std::vector<double> breaks;
    std::vector<std::function<double(double)>> pieces;

    ParametricCurve() = default;
    ParametricCurve(std::vector<double> jump_times, std::vector<std::function<double(double)>> fns)
        : breaks(std::move(jump_times)), pieces(std::move(fns)) {
        validate();
    }
    /// Continuous curve: a single piece.
    static ParametricCurve smooth(std::function<double(double)> fn) { return ParametricCurve({}, {std::move(fn)}); }

    void validate() const {
        detail::require(pieces.size() == breaks.size() + 1, "ParametricCurve: need one more piece than jump times");
        for (std::size_t p = 0; p < breaks.size(); ++p) {
            detail::require(breaks[p] > 0.0 && breaks[p] < 1.0, "ParametricCurve: jump times must lie in (0,1)");
            if (p > 0) detail::require(breaks[p] > breaks[p - 1], "ParametricCurve: jump times must increase");
        }
        for (const auto& f : pieces) detail::require(static_cast<bool>(f), "ParametricCurve: empty piece");
    }

    /// Index of the piece active at t (right-continuous).
    std::size_t piece_at(double t) const {
        return static_cast<std::size_t>(std::upper_bound(breaks.begin(), breaks.end(), t) - breaks.begin());
    }
    /// Index of the piece active just before t.
    std::size_t piece_before(double t) const {
        return static_cast<std::size_t>(std::lower_bound(breaks.begin(), breaks.end(), t) - breaks.begin());
    }

    double operator()(double t) const { return pieces[piece_at(t)](t); }
    double left_limit(double t) const { return t <= 0.0 ? (*this)(t) : pieces[piece_before(t)](t); }
};

inline CadlagSamples sample_cadlag(const ParametricCurve& curve, const TimeGrid& grid) {
    curve.validate();
    std::vector<double> plus(grid.size()), minus(grid.size());
    for (std::size_t j = 0; j < grid.size(); ++j) {
        plus[j] = curve(grid[j]);
        minus[j] = j == 0 ? plus[0] : curve.left_limit(grid[j]);
        if (!std::isfinite(plus[j]) || !std::isfinite(minus[j]))
            throw ValidationError("sample_cadlag: curve is not finite on the grid");
    }
    return {std::move(plus), std::move(minus)};
}

/// As above, rejecting curves that leave the domain.
inline CadlagSamples sample_cadlag(const ParametricCurve& curve, const TimeGrid& grid, const Domain1D& dom) {
    CadlagSamples s = sample_cadlag(curve, grid);
    s.validate(grid, dom);
    return s;
}

} // namespace bvtrack
