#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <queue>
#include <span>
#include <variant>
#include <vector>

#include "bvtrack/core.hpp"
#include "bvtrack/forward.hpp"

namespace bvtrack {

struct MassPoint {
    double position = 0.0;
    double mass = 0.0;
    bool operator==(const MassPoint&) const = default;
};

namespace detail {
inline double total_mass(std::span<const MassPoint> a) {
    double s = 0.0;
    for (const auto& p : a) s += p.mass;
    return s;
}
inline void check_w1_inputs(std::span<const MassPoint> a, std::span<const MassPoint> b) {
    for (const auto& p : a) require(p.mass >= 0.0 && std::isfinite(p.position), "w1: invalid atom");
    for (const auto& p : b) require(p.mass >= 0.0 && std::isfinite(p.position), "w1: invalid atom");
    const double ta = total_mass(a), tb = total_mass(b);
    require(std::abs(ta - tb) <= 1e-12 * std::max(1.0, std::max(ta, tb)), "w1: total masses differ");
}
} // namespace detail

/// Exact W1 between two equal-mass atomic measures on the line: integral of |F_a - F_b|.
inline double w1_1d(std::span<const MassPoint> a, std::span<const MassPoint> b) {
    detail::check_w1_inputs(a, b);
    struct Event {
        double x;
        double dm; // +mass for a, -mass for b
    };
    std::vector<Event> ev;
    ev.reserve(a.size() + b.size());
    for (const auto& p : a) ev.push_back({p.position, p.mass});
    for (const auto& p : b) ev.push_back({p.position, -p.mass});
    std::sort(ev.begin(), ev.end(), [](const Event& l, const Event& r) { return l.x < r.x; });
    double cdf_diff = 0.0, w = 0.0;
    for (std::size_t k = 0; k < ev.size(); ++k) {
        cdf_diff += ev[k].dm;
        if (k + 1 < ev.size()) w += std::abs(cdf_diff) * (ev[k + 1].x - ev[k].x);
    }
    return w;
}

/// Optimal transport cost |x - y| by the transportation simplex (north-west corner start,
/// MODI pricing, stepping-stone pivots). Independent of the CDF formula in w1_1d.
inline double w1_lp_oracle(std::span<const MassPoint> a_in, std::span<const MassPoint> b_in) {
    detail::require(a_in.size() <= 8 && b_in.size() <= 8, "w1_lp_oracle: at most 8 atoms per side");
    detail::check_w1_inputs(a_in, b_in);
    std::vector<MassPoint> a, b;
    for (const auto& p : a_in)
        if (p.mass > 0.0) a.push_back(p);
    for (const auto& p : b_in)
        if (p.mass > 0.0) b.push_back(p);
    if (a.empty() || b.empty()) return 0.0;
    const std::size_t m = a.size(), n = b.size();

    std::vector<std::vector<double>> cost(m, std::vector<double>(n)), x(m, std::vector<double>(n, 0.0));
    std::vector<std::vector<bool>> basic(m, std::vector<bool>(n, false));
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) cost[i][j] = std::abs(a[i].position - b[j].position);

    // North-west corner: exactly m + n - 1 basic cells (zeros kept for degenerate steps).
    {
        std::vector<double> ra(m), rb(n);
        for (std::size_t i = 0; i < m; ++i) ra[i] = a[i].mass;
        for (std::size_t j = 0; j < n; ++j) rb[j] = b[j].mass;
        std::size_t i = 0, j = 0;
        for (;;) {
            const double q = std::min(ra[i], rb[j]);
            x[i][j] = q;
            basic[i][j] = true;
            ra[i] -= q;
            rb[j] -= q;
            if (i == m - 1 && j == n - 1) break;
            if (i == m - 1)
                ++j;
            else if (j == n - 1)
                ++i;
            else if (ra[i] <= rb[j])
                ++i;
            else
                ++j;
        }
    }

    // Nodes 0..m-1 are rows, m..m+n-1 columns; basic cells are tree edges.
    auto tree_path = [&](std::size_t from, std::size_t to) {
        std::vector<int> parent(m + n, -1);
        std::vector<bool> seen(m + n, false);
        std::queue<std::size_t> qu;
        qu.push(from);
        seen[from] = true;
        while (!qu.empty()) {
            const std::size_t u = qu.front();
            qu.pop();
            if (u == to) break;
            auto visit = [&](std::size_t w) {
                if (!seen[w]) {
                    seen[w] = true;
                    parent[w] = static_cast<int>(u);
                    qu.push(w);
                }
            };
            if (u < m) {
                for (std::size_t j = 0; j < n; ++j)
                    if (basic[u][j]) visit(m + j);
            } else {
                for (std::size_t i = 0; i < m; ++i)
                    if (basic[i][u - m]) visit(i);
            }
        }
        std::vector<std::size_t> nodes;
        for (int v = static_cast<int>(to); v != -1; v = parent[static_cast<std::size_t>(v)]) nodes.push_back(static_cast<std::size_t>(v));
        std::reverse(nodes.begin(), nodes.end());
        return nodes; // from ... to
    };

    for (int iter = 0;; ++iter) {
        if (iter > 10000) throw NumericalError("w1_lp_oracle: pivot limit exceeded");
        // Potentials u_i + v_j = c_ij on basic cells.
        std::vector<double> u(m, 0.0), v(n, 0.0);
        std::vector<bool> ku(m, false), kv(n, false);
        ku[0] = true;
        for (bool changed = true; changed;) {
            changed = false;
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    if (!basic[i][j]) continue;
                    if (ku[i] && !kv[j]) {
                        v[j] = cost[i][j] - u[i];
                        kv[j] = changed = true;
                    } else if (!ku[i] && kv[j]) {
                        u[i] = cost[i][j] - v[j];
                        ku[i] = changed = true;
                    }
                }
        }
        double best = -1e-13;
        std::size_t ei = m, ej = n;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                if (basic[i][j]) continue;
                const double d = cost[i][j] - u[i] - v[j];
                if (d < best) {
                    best = d;
                    ei = i;
                    ej = j;
                }
            }
        if (ei == m) break;

        // Cycle: entering (+), then tree path from column ej back to row ei with alternating signs.
        const std::vector<std::size_t> path = tree_path(m + ej, ei);
        std::vector<std::pair<std::size_t, std::size_t>> cells;
        for (std::size_t k = 0; k + 1 < path.size(); ++k) {
            const std::size_t p = path[k], q = path[k + 1];
            cells.emplace_back(p < m ? p : q, p < m ? q - m : p - m);
        }
        double theta = std::numeric_limits<double>::infinity();
        std::size_t leave = 0;
        for (std::size_t k = 0; k < cells.size(); k += 2) {
            const auto [i, j] = cells[k];
            if (x[i][j] < theta) {
                theta = x[i][j];
                leave = k;
            }
        }
        for (std::size_t k = 0; k < cells.size(); ++k) {
            const auto [i, j] = cells[k];
            x[i][j] += (k % 2 == 0) ? -theta : theta;
        }
        x[ei][ej] = theta;
        basic[ei][ej] = true;
        basic[cells[leave].first][cells[leave].second] = false;
        x[cells[leave].first][cells[leave].second] = 0.0;
    }

    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (basic[i][j]) total += std::max(0.0, x[i][j]) * cost[i][j];
    return total;
}

/// Continuous-time cadlag curve from trace vectors: on [t_j, t_{j+1}) it runs linearly from
/// gamma^{j,+} to gamma^{j+1,-}; its traces at the grid are exactly the samples.
inline double cadlag_interpolant(const CadlagSamples& c, const TimeGrid& grid, double s) {
    const auto& t = grid.points();
    if (s >= 1.0) return c.gamma_plus.back();
    if (s <= 0.0) return c.gamma_plus.front();
    const auto j = static_cast<std::size_t>(std::upper_bound(t.begin(), t.end(), s) - t.begin()) - 1;
    const double r = (s - t[j]) / (t[j + 1] - t[j]);
    return c.gamma_plus[j] + (c.gamma_minus[j + 1] - c.gamma_plus[j]) * r;
}

/// Finite temporal blur: (K~ gamma)_ij = int phi_j(s) Phi_i(gamma(s)) ds.
///
/// phi_j is a pair of tents: mass theta_j on [t_j - delta, t_j] and 1 - theta_j on [t_j, t_j + delta],
/// each peaking at the middle of its half. It is continuous, nonnegative and splits exactly
/// (theta_j, 1 - theta_j) about t_j. Each half is integrated by the composite midpoint rule.
inline Measurement forward_blurred(const SensorArray& sensors, const TimeGrid& grid, const ThetaWeights& theta,
                                   double delta, const std::function<double(double)>& curve, int panels = 400) {
    detail::check_forward_dims(sensors, grid, theta);
    detail::require(delta > 0.0 && panels >= 1, "forward_blurred: need delta > 0 and panels >= 1");
    for (std::size_t j = 0; j + 1 < grid.size(); ++j)
        detail::require(2.0 * delta <= grid[j + 1] - grid[j], "forward_blurred: blur supports overlap");

    Measurement out = Measurement::zeros(sensors.size(), grid.size());
    const double hp = delta / panels;
    auto half = [&](std::size_t j, double start, double mass) {
        // Tent on [start, start + delta] with total mass `mass`.
        const double height = 2.0 * mass / delta;
        for (int p = 0; p < panels; ++p) {
            const double s = start + (p + 0.5) * hp;
            const double r = (s - start) / delta;
            const double weight = height * (r < 0.5 ? 2.0 * r : 2.0 * (1.0 - r)) * hp;
            const double g = curve(s);
            for (std::size_t i = 0; i < sensors.size(); ++i)
                out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) += weight * kernel_eval(sensors, i, g);
        }
    };
    for (std::size_t j = 0; j < grid.size(); ++j) {
        if (theta[j] > 0.0) half(j, grid[j] - delta, theta[j]);
        if (theta[j] < 1.0) half(j, grid[j], 1.0 - theta[j]);
    }
    return out;
}

inline Measurement forward_blurred(const SensorArray& sensors, const TimeGrid& grid, const ThetaWeights& theta,
                                   double delta, const CadlagSamples& curve, int panels = 400) {
    detail::check_curve_dims(grid, curve);
    return forward_blurred(sensors, grid, theta, delta,
                           [&](double s) { return cadlag_interpolant(curve, grid, s); }, panels);
}

/// Central differences per coordinate.
inline std::vector<double> finite_diff_gradient(const std::function<double(std::span<const double>)>& fn,
                                                std::span<const double> point, double h) {
    detail::require(h > 0.0, "finite_diff_gradient: h must be positive");
    std::vector<double> x(point.begin(), point.end()), g(point.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double orig = x[k];
        x[k] = orig + h;
        const double fp = fn(x);
        x[k] = orig - h;
        const double fm = fn(x);
        x[k] = orig;
        g[k] = (fp - fm) / (2.0 * h);
    }
    return g;
}

using GroundTruth = std::variant<SparseDiracMeasure, IntervalMeasureSpec>;

/// Mass points of a measure at grid time t_j (right traces).
inline std::vector<MassPoint> slice_at(const SparseDiracMeasure& mu, std::size_t j) {
    std::vector<MassPoint> out;
    for (const auto& a : mu.atoms) out.push_back({a.curve.gamma_plus[j], a.mass});
    return out;
}

/// Unit-density interval [lo, hi] as `pieces` equal-mass atoms at cell midpoints.
inline std::vector<MassPoint> discretize_interval(double lo, double hi, int pieces = 64) {
    std::vector<MassPoint> out;
    const double len = hi - lo;
    if (len <= 0.0) return out;
    for (int k = 0; k < pieces; ++k) out.push_back({lo + (k + 0.5) * len / pieces, len / pieces});
    return out;
}

/// W1 after rescaling both slices to the smaller mass, plus |mass gap| * diam(Omega).
inline double unbalanced_w1(std::vector<MassPoint> a, std::vector<MassPoint> b, double diameter) {
    const double ma = detail::total_mass(a), mb = detail::total_mass(b);
    const double common = std::min(ma, mb);
    double w = 0.0;
    if (common > 0.0) {
        for (auto& p : a) p.mass *= common / ma;
        for (auto& p : b) p.mass *= common / mb;
        // Rescaled totals can differ in the last bits.
        const double ta = detail::total_mass(a), tb = detail::total_mass(b);
        if (!b.empty()) b.back().mass += ta - tb;
        w = w1_1d(a, b);
    }
    return w + std::abs(ma - mb) * diameter;
}

/// (1/(M+1)) sum_j of the unbalanced W1 between the reconstruction and the truth at t_j.
inline double sampled_w1_error(const SparseDiracMeasure& recon, const GroundTruth& truth, const TimeGrid& grid,
                               const Domain1D& dom) {
    std::vector<std::pair<CadlagSamples, CadlagSamples>> bounds;
    if (const auto* spec = std::get_if<IntervalMeasureSpec>(&truth)) bounds.push_back(spec->sample(grid, dom));
    double total = 0.0;
    for (std::size_t j = 0; j < grid.size(); ++j) {
        std::vector<MassPoint> t;
        if (const auto* mu = std::get_if<SparseDiracMeasure>(&truth))
            t = slice_at(*mu, j);
        else
            t = discretize_interval(bounds[0].first.gamma_plus[j], bounds[0].second.gamma_plus[j]);
        total += unbalanced_w1(slice_at(recon, j), std::move(t), dom.diameter());
    }
    return total / static_cast<double>(grid.size());
}

} // namespace bvtrack
