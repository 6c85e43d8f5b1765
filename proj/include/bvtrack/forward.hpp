#pragma once

#include <cmath>
#include <numbers>

#include "bvtrack/core.hpp"

namespace bvtrack {

inline double kernel_eval(const SensorArray& sensors, std::size_t i, double x) {
    detail::require(i < sensors.size(), "kernel_eval: sensor index out of range");
    const double d = x - sensors.positions[i];
    return sensors.c[i] / std::sqrt(sensors.sigma2[i]) * std::exp(-d * d / (2.0 * sensors.sigma2[i]));
}

/// d/dx Phi_i(x) = -(x - x_i) / sigma_i^2 * Phi_i(x).
inline double kernel_derivative(const SensorArray& sensors, std::size_t i, double x) {
    return -(x - sensors.positions[i]) / sensors.sigma2[i] * kernel_eval(sensors, i, x);
}

/// Integral of Phi_i over [a, b] through the error function.
///
/// Phi_i integrates to C_i sqrt(pi/2) [erf(u_b) - erf(u_a)] with u = (x - x_i) / (sigma_i sqrt 2).
/// When both limits sit in the same tail the difference is taken between erfc values to avoid
/// cancellation.
inline double kernel_interval_integral(const SensorArray& sensors, std::size_t i, double a, double b) {
    detail::require(i < sensors.size(), "kernel_interval_integral: sensor index out of range");
    detail::require(a <= b, "kernel_interval_integral: need a <= b");
    if (a == b) return 0.0;
    const double scale = std::sqrt(2.0 * sensors.sigma2[i]);
    const double ua = (a - sensors.positions[i]) / scale;
    const double ub = (b - sensors.positions[i]) / scale;
    double diff = 0.0;
    if (ua >= 0.0)
        diff = std::erfc(ua) - std::erfc(ub);
    else if (ub <= 0.0)
        diff = std::erfc(-ub) - std::erfc(-ua);
    else
        diff = std::erf(ub) - std::erf(ua);
    return sensors.c[i] * std::sqrt(std::numbers::pi / 2.0) * diff;
}

namespace detail {

inline void check_forward_dims(const SensorArray& sensors, const TimeGrid& grid, const ThetaWeights& theta) {
    require(!sensors.positions.empty(), "forward: empty sensor array");
    require(theta.size() == grid.size(), "forward: theta length does not match the time grid");
}

inline void check_curve_dims(const TimeGrid& grid, const CadlagSamples& curve) {
    require(curve.gamma_plus.size() == grid.size() && curve.gamma_minus.size() == grid.size(),
            "forward: curve length does not match the time grid");
}

/// Adds weight * K0(curve) into out.
inline void accumulate_atom(const SensorArray& sensors, const ThetaWeights& theta, const CadlagSamples& curve,
                            double weight, Eigen::MatrixXd& out) {
    const auto L = static_cast<Eigen::Index>(sensors.size());
    for (std::size_t j = 0; j < theta.size(); ++j) {
        const double th = theta[j];
        const auto col = static_cast<Eigen::Index>(j);
        for (Eigen::Index i = 0; i < L; ++i) {
            const auto si = static_cast<std::size_t>(i);
            double v = 0.0;
            if (th != 0.0) v += th * kernel_eval(sensors, si, curve.gamma_minus[j]);
            if (th != 1.0) v += (1.0 - th) * kernel_eval(sensors, si, curve.gamma_plus[j]);
            out(i, col) += weight * v;
        }
    }
}

} // namespace detail

/// (K0 gamma)_ij = theta_j Phi_i(gamma^{j,-}) + (1 - theta_j) Phi_i(gamma^{j,+}).
inline Measurement forward_atom(const SensorArray& sensors, const TimeGrid& grid, const ThetaWeights& theta,
                                const CadlagSamples& curve) {
    detail::check_forward_dims(sensors, grid, theta);
    detail::check_curve_dims(grid, curve);
    Measurement out = Measurement::zeros(sensors.size(), grid.size());
    detail::accumulate_atom(sensors, theta, curve, 1.0, out.values);
    return out;
}

inline Measurement forward_measure(const SensorArray& sensors, const TimeGrid& grid, const ThetaWeights& theta,
                                   const SparseDiracMeasure& mu) {
    detail::check_forward_dims(sensors, grid, theta);
    Measurement out = Measurement::zeros(sensors.size(), grid.size());
    for (const auto& atom : mu.atoms) {
        detail::check_curve_dims(grid, atom.curve);
        detail::accumulate_atom(sensors, theta, atom.curve, atom.mass, out.values);
    }
    return out;
}

/// Unit-density ground truth supported on [zeta_lo(t), zeta_hi(t)].
struct IntervalMeasureSpec {
    ParametricCurve zeta_lo;
    ParametricCurve zeta_hi;

    /// Boundary traces on the grid; throws if they leave the domain or cross.
    std::pair<CadlagSamples, CadlagSamples> sample(const TimeGrid& grid, const Domain1D& dom) const {
        CadlagSamples lo = sample_cadlag(zeta_lo, grid);
        CadlagSamples hi = sample_cadlag(zeta_hi, grid);
        detail::require(lo.within(dom) && hi.within(dom), "IntervalMeasureSpec: boundary curves leave the domain");
        for (std::size_t j = 0; j < grid.size(); ++j)
            detail::require(lo.gamma_plus[j] <= hi.gamma_plus[j] && lo.gamma_minus[j] <= hi.gamma_minus[j],
                            "IntervalMeasureSpec: lower boundary exceeds upper boundary");
        return {std::move(lo), std::move(hi)};
    }
};

inline Measurement forward_interval_measure(const SensorArray& sensors, const TimeGrid& grid,
                                            const ThetaWeights& theta, const IntervalMeasureSpec& spec,
                                            const Domain1D& dom) {
    detail::check_forward_dims(sensors, grid, theta);
    const auto [lo, hi] = spec.sample(grid, dom);
    Measurement out = Measurement::zeros(sensors.size(), grid.size());
    for (std::size_t j = 0; j < grid.size(); ++j) {
        const double th = theta[j];
        for (std::size_t i = 0; i < sensors.size(); ++i) {
            double v = 0.0;
            if (th != 0.0) v += th * kernel_interval_integral(sensors, i, lo.gamma_minus[j], hi.gamma_minus[j]);
            if (th != 1.0) v += (1.0 - th) * kernel_interval_integral(sensors, i, lo.gamma_plus[j], hi.gamma_plus[j]);
            out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
        }
    }
    return out;
}

} // namespace bvtrack
