#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <span>
#include <thread>
#include <vector>

#include "bvtrack/core.hpp"
#include "bvtrack/forward.hpp"
#include "bvtrack/objective.hpp"
#include "bvtrack/rng.hpp"

namespace bvtrack {

/// eta_eps(z) = sqrt(z^2 + eps), the smooth stand-in for |z| used by the ascent.
inline double smoothed_abs(double z, double eps) { return std::sqrt(z * z + eps); }
inline double smoothed_abs_derivative(double z, double eps) { return z / std::sqrt(z * z + eps); }

/// The insertion functional D0 for a fixed residual gradient, with exact and smoothed variants.
///
/// Decision variables are laid out as [gamma_plus (M+1), gamma_minus (M+1)].
class CertificateModel {
public:
    CertificateModel(const ResidualGradient& g, const SensorArray& sensors, const TimeGrid& grid,
                     const ThetaWeights& theta, double alpha, double beta, double eps)
        : n_(grid.size()), L_(sensors.size()), alpha_(alpha), beta_(beta), eps_(eps), theta_(theta.theta),
          pos_(sensors.positions), inv_var_(L_), half_inv_var_(L_), peak_(L_), w_(g.w) {
        detail::check_forward_dims(sensors, grid, theta);
        detail::require(g.w.rows() == static_cast<Eigen::Index>(L_) && g.w.cols() == static_cast<Eigen::Index>(n_),
                        "CertificateModel: residual gradient has the wrong shape");
        detail::require(alpha > 0.0 && beta >= 0.0, "CertificateModel: need alpha > 0 and beta >= 0");
        detail::require(eps > 0.0, "CertificateModel: eps must be positive");
        for (std::size_t i = 0; i < L_; ++i) {
            inv_var_[i] = 1.0 / sensors.sigma2[i];
            half_inv_var_[i] = 0.5 / sensors.sigma2[i];
            peak_[i] = sensors.peak(i);
        }
    }

    std::size_t n_points() const { return n_; }
    std::size_t n_vars() const { return 2 * n_; }

    /// -<w, K0 gamma>_F.
    double data_term(const CadlagSamples& c) const {
        double s = 0.0;
        for (std::size_t j = 0; j < n_; ++j) {
            const double th = theta_[j];
            if (th != 1.0) s += (1.0 - th) * column(j, c.gamma_plus[j]);
            if (th != 0.0) s += th * column(j, c.gamma_minus[j]);
        }
        return -s;
    }

    double exact(const CadlagSamples& c) const { return data_term(c) / (alpha_ + beta_ * discrete_variation(c)); }

    double smoothed_variation(const CadlagSamples& c) const {
        double v = 0.0;
        for (std::size_t j = 0; j + 1 < n_; ++j)
            v += smoothed_abs(c.gamma_plus[j] - c.gamma_minus[j + 1], eps_) +
                 smoothed_abs(c.gamma_plus[j] - c.gamma_minus[j], eps_);
        return v;
    }

    double smoothed(const CadlagSamples& c) const {
        return data_term(c) / (alpha_ + beta_ * smoothed_variation(c));
    }

    /// Smoothed value; gradient written into grad (size 2(M+1)).
    double smoothed_with_gradient(const CadlagSamples& c, std::vector<double>& grad) const {
        grad.assign(2 * n_, 0.0);
        double s = 0.0;
        for (std::size_t j = 0; j < n_; ++j) {
            const double th = theta_[j];
            double d = 0.0;
            if (th != 1.0) {
                s += (1.0 - th) * column(j, c.gamma_plus[j], &d);
                grad[j] = -(1.0 - th) * d;
            }
            if (th != 0.0) {
                s += th * column(j, c.gamma_minus[j], &d);
                grad[n_ + j] = -th * d;
            }
        }
        const double S = -s;

        std::vector<double> dv(2 * n_, 0.0);
        double v = 0.0;
        for (std::size_t j = 0; j + 1 < n_; ++j) {
            const double z1 = c.gamma_plus[j] - c.gamma_minus[j + 1];
            const double z2 = c.gamma_plus[j] - c.gamma_minus[j];
            v += smoothed_abs(z1, eps_) + smoothed_abs(z2, eps_);
            const double d1 = smoothed_abs_derivative(z1, eps_);
            const double d2 = smoothed_abs_derivative(z2, eps_);
            dv[j] += d1 + d2;
            dv[n_ + j + 1] -= d1;
            dv[n_ + j] -= d2;
        }
        const double a = 1.0 / (alpha_ + beta_ * v);
        const double coupling = beta_ * a * a * S;
        for (std::size_t k = 0; k < 2 * n_; ++k) grad[k] = a * grad[k] - coupling * dv[k];
        return a * S;
    }

private:
    /// sum_i w_ij Phi_i(x), optionally with its x-derivative.
    double column(std::size_t j, double x, double* deriv = nullptr) const {
        const double* wcol = w_.data() + static_cast<std::ptrdiff_t>(j * L_);
        double val = 0.0, der = 0.0;
        for (std::size_t i = 0; i < L_; ++i) {
            const double d = x - pos_[i];
            const double e = wcol[i] * peak_[i] * std::exp(-d * d * half_inv_var_[i]);
            val += e;
            der -= d * inv_var_[i] * e;
        }
        if (deriv) *deriv = der;
        return val;
    }

    std::size_t n_, L_;
    double alpha_, beta_, eps_;
    std::vector<double> theta_, pos_, inv_var_, half_inv_var_, peak_;
    Eigen::MatrixXd w_; // column-major: column j is contiguous
};

inline double certificate_smoothed(const ResidualGradient& g, const SensorArray& sensors, const TimeGrid& grid,
                                   const ThetaWeights& theta, double alpha, double beta, double eps,
                                   const CadlagSamples& curve) {
    detail::check_curve_dims(grid, curve);
    return CertificateModel(g, sensors, grid, theta, alpha, beta, eps).smoothed(curve);
}

/// Gradient of certificate_smoothed with respect to [gamma_plus, gamma_minus].
inline std::vector<double> certificate_gradient(const ResidualGradient& g, const SensorArray& sensors,
                                                const TimeGrid& grid, const ThetaWeights& theta, double alpha,
                                                double beta, double eps, const CadlagSamples& curve) {
    detail::check_curve_dims(grid, curve);
    std::vector<double> grad;
    CertificateModel(g, sensors, grid, theta, alpha, beta, eps).smoothed_with_gradient(curve, grad);
    return grad;
}

struct AscentResult {
    CadlagSamples curve;
    double value = 0.0; ///< smoothed certificate at curve
    int iterations = 0;
};

/// Projected gradient ascent on the smoothed certificate with Armijo backtracking.
///
/// Each iteration tries a displacement of at most init_step_fraction * diam(Omega) along the
/// projected gradient (scaled by its max-norm), starting from twice the last accepted displacement,
/// and halves until the Armijo condition holds. Iterates are clamped to Omega.
inline AscentResult gradient_ascent(const CertificateModel& model, const CadlagSamples& init, const Domain1D& dom,
                                    const AscentParams& params) {
    const std::size_t n = model.n_points();
    detail::require(init.size() == n, "gradient_ascent: curve length does not match the model");
    detail::require(init.within(dom), "gradient_ascent: initial curve outside the domain");

    CadlagSamples x = init;
    std::vector<double> grad;
    double value = model.smoothed_with_gradient(x, grad);
    if (!std::isfinite(value)) throw NumericalError("gradient_ascent: non-finite certificate");

    const double cap = params.init_step_fraction * dom.diameter();
    double last = cap;
    CadlagSamples trial = x;
    int it = 0;
    for (; it < params.max_iters; ++it) {
        auto coord = [&](CadlagSamples& c, std::size_t k) -> double& {
            return k < n ? c.gamma_plus[k] : c.gamma_minus[k - n];
        };
        // Drop components pushing against an active bound.
        double gmax = 0.0;
        for (std::size_t k = 0; k < 2 * n; ++k) {
            const double xv = coord(x, k);
            if ((xv <= dom.lo && grad[k] < 0.0) || (xv >= dom.hi && grad[k] > 0.0)) grad[k] = 0.0;
            gmax = std::max(gmax, std::abs(grad[k]));
        }
        if (gmax == 0.0 || !std::isfinite(gmax)) break;

        double disp = std::min(cap, 2.0 * last);
        bool accepted = false;
        double trial_value = value;
        while (disp >= params.min_step) {
            const double t = disp / gmax;
            double slope = 0.0;
            for (std::size_t k = 0; k < 2 * n; ++k) {
                const double nv = clamp_to_domain(coord(x, k) + t * grad[k], dom);
                coord(trial, k) = nv;
                slope += grad[k] * (nv - coord(x, k));
            }
            trial_value = model.smoothed(trial);
            if (!std::isfinite(trial_value)) throw NumericalError("gradient_ascent: non-finite certificate");
            if (trial_value >= value + params.armijo_c * slope && slope > 0.0) {
                accepted = true;
                break;
            }
            disp *= params.shrink;
        }
        if (!accepted) break;
        last = disp;
        x = trial;
        value = model.smoothed_with_gradient(x, grad);
    }
    return {std::move(x), value, it};
}

namespace detail {
inline double minmod(double a, double b) {
    if (a * b <= 0.0) return 0.0;
    return a > 0.0 ? std::min(a, b) : std::max(a, b);
}
} // namespace detail

/// Fixes the trace entries that neither the data nor the exact variation can distinguish.
///
/// With theta_j = 0 at an interior point, gamma^{j,-} only enters the variation through
/// |gamma^{j-1,+} - gamma^{j,-}| + |gamma^{j,+} - gamma^{j,-}|, which is minimal on the whole
/// segment between the two right traces. The left limit is placed on that segment by continuing
/// the local trend (minmod of the neighbouring slopes); the remainder of the step is a jump.
/// gamma^{0,-} is set to gamma^{0,+}, and gamma^{M,+} to gamma^{M,-} when theta_M = 1.
/// The exact certificate never decreases.
inline void canonicalize_traces(CadlagSamples& c, const ThetaWeights& theta) {
    const std::size_t n = c.size();
    if (n < 2) return;
    const std::size_t M = n - 1;
    auto observed = [&](std::size_t j) { return j == M && theta[M] == 1.0 ? c.gamma_minus[M] : c.gamma_plus[j]; };
    if (theta[0] == 0.0) c.gamma_minus[0] = c.gamma_plus[0];
    for (std::size_t j = 1; j < M; ++j) {
        if (theta[j] != 0.0) continue;
        const double left = c.gamma_plus[j - 1];
        const double right = c.gamma_plus[j];
        const bool has_l = j >= 2;
        const bool has_r = j + 1 <= M;
        double slope = 0.0;
        if (has_l && has_r)
            slope = detail::minmod(left - c.gamma_plus[j - 2], observed(j + 1) - right);
        else if (has_l)
            slope = left - c.gamma_plus[j - 2];
        else if (has_r)
            slope = observed(j + 1) - right;
        const double lo = std::min(left, right), hi = std::max(left, right);
        c.gamma_minus[j] = std::clamp(left + slope, lo, hi);
    }
    if (theta[M] == 1.0) c.gamma_plus[M] = c.gamma_minus[M];
}

/// Initial curve of start q. Every family draws its values uniformly in dom.
inline CadlagSamples draw_start(StartFamily family, std::size_t q, Rng& rng, std::size_t n, const Domain1D& dom) {
    const bool jump = family == StartFamily::mixed && q % 3 == 2 && n >= 3;
    if (family == StartFamily::mixed) family = q % 3 == 0 ? StartFamily::iid : StartFamily::constant;
    std::vector<double> plus(n), minus(n);
    if (family == StartFamily::iid) {
        for (auto& v : plus) v = rng.uniform(dom.lo, dom.hi);
        for (auto& v : minus) v = rng.uniform(dom.lo, dom.hi);
        return {std::move(plus), std::move(minus)};
    }
    const double a = rng.uniform(dom.lo, dom.hi);
    double b = a;
    std::size_t at = n;
    if (jump) {
        b = rng.uniform(dom.lo, dom.hi);
        at = 1 + std::min(n - 3, static_cast<std::size_t>(rng.uniform() * static_cast<double>(n - 2)));
    }
    for (std::size_t j = 0; j < n; ++j) {
        plus[j] = j < at ? a : b;
        minus[j] = j <= at ? a : b;
    }
    return {std::move(plus), std::move(minus)};
}

struct InsertionResult {
    CadlagSamples curve;
    double value = 0.0; ///< exact certificate of curve
    int best_start = -1;
    std::vector<double> start_values; ///< exact certificate per start, by start index
};

/// Smoothing levels of the refinement phase: decades below coarse, ending at eps_smooth.
inline std::vector<double> refinement_schedule(double coarse, double eps_smooth) {
    std::vector<double> out;
    if (eps_smooth >= coarse) return out;
    for (double e = coarse / 10.0; e > eps_smooth * (1.0 + 1e-12); e /= 10.0) out.push_back(e);
    out.push_back(eps_smooth);
    return out;
}

/// Multi-start insertion: Q random initializations (see StartFamily) followed by the curves in
/// `extra` (typically the active atoms), exploratory ascent with smoothing ascent.coarse_eps,
/// refinement of the extra starts and the best ascent.refine_top random starts along
/// refinement_schedule, and selection by exact certificate (ties broken by lowest start index).
///
/// Start q draws from its own stream derived from (seed, q), so the result does not depend on
/// how starts are scheduled across threads.
inline InsertionResult multi_start_insertion(const ResidualGradient& g, const SensorArray& sensors,
                                             const TimeGrid& grid, const ThetaWeights& theta,
                                             const SolverConfig& config, std::uint64_t seed,
                                             unsigned n_threads = 0,
                                             std::span<const CadlagSamples> extra = {}) {
    config.validate();
    const double coarse = std::max(config.ascent.coarse_eps, config.eps_smooth);
    const CertificateModel model(g, sensors, grid, theta, config.alpha, config.beta, coarse);
    const std::size_t n = grid.size();
    const auto n_random = static_cast<std::size_t>(config.q_starts);
    const std::size_t Q = n_random + extra.size();
    const Domain1D dom = config.domain;
    for (const auto& c : extra) {
        detail::check_curve_dims(grid, c);
        detail::require(c.within(dom), "multi_start_insertion: extra start outside the domain");
    }

    std::vector<CadlagSamples> curves(Q);
    std::vector<double> values(Q, -std::numeric_limits<double>::infinity());

    auto run_start = [&](std::size_t q) {
        CadlagSamples init;
        if (q < n_random) {
            Rng rng(derive_seed(seed, 0x1234, q));
            init = draw_start(config.starts, q, rng, n, dom);
        } else {
            init = extra[q - n_random];
        }
        AscentResult r = gradient_ascent(model, init, dom, config.ascent);
        canonicalize_traces(r.curve, theta);
        values[q] = model.exact(r.curve);
        curves[q] = std::move(r.curve);
    };

    if (n_threads == 0) n_threads = std::max(1u, std::thread::hardware_concurrency());
    n_threads = static_cast<unsigned>(std::min<std::size_t>(n_threads, Q));
    if (n_threads <= 1) {
        for (std::size_t q = 0; q < Q; ++q) run_start(q);
    } else {
        std::atomic<std::size_t> next{0};
        std::exception_ptr failure;
        std::atomic<bool> failed{false};
        {
            std::vector<std::jthread> pool;
            for (unsigned t = 0; t < n_threads; ++t)
                pool.emplace_back([&] {
                    for (std::size_t q = next++; q < Q && !failed; q = next++) {
                        try {
                            run_start(q);
                        } catch (...) {
                            if (!failed.exchange(true)) failure = std::current_exception();
                        }
                    }
                });
        }
        if (failure) std::rethrow_exception(failure);
    }

    const auto schedule = refinement_schedule(coarse, config.eps_smooth);
    if (!schedule.empty() && (config.ascent.refine_top > 0 || !extra.empty()) && config.ascent.refine_iters > 0) {
        std::vector<std::size_t> order(n_random);
        for (std::size_t q = 0; q < n_random; ++q) order[q] = q;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
        order.resize(std::min<std::size_t>(n_random, static_cast<std::size_t>(config.ascent.refine_top)));
        for (std::size_t q = n_random; q < Q; ++q) order.push_back(q);
        AscentParams stage = config.ascent;
        stage.max_iters = config.ascent.refine_iters;
        std::vector<CertificateModel> models;
        for (double e : schedule) models.emplace_back(g, sensors, grid, theta, config.alpha, config.beta, e);
        for (std::size_t q : order) {
            CadlagSamples c = curves[q];
            for (const auto& m : models) {
                c = gradient_ascent(m, c, dom, stage).curve;
                canonicalize_traces(c, theta);
            }
            const double v = model.exact(c);
            if (v > values[q]) {
                values[q] = v;
                curves[q] = std::move(c);
            }
        }
    }

    std::size_t best = 0;
    for (std::size_t q = 1; q < Q; ++q)
        if (values[q] > values[best]) best = q;
    InsertionResult out;
    out.curve = curves[best];
    out.value = certificate_value(g, sensors, grid, theta, config.alpha, config.beta, out.curve);
    out.best_start = static_cast<int>(best);
    out.start_values = std::move(values);
    return out;
}

} // namespace bvtrack
