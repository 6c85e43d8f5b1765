#pragma once

#include <cmath>

#include "bvtrack/core.hpp"
#include "bvtrack/forward.hpp"

namespace bvtrack {

/// DF(K0 mu) for the current iterate; -w paired with K0 delta_gamma is the dual variable.
struct ResidualGradient {
    Eigen::MatrixXd w;
};

namespace detail {
inline void check_same_shape(const Measurement& a, const Measurement& b, const char* who) {
    require(a.values.rows() == b.values.rows() && a.values.cols() == b.values.cols(),
            std::string(who) + ": dimension mismatch");
}
} // namespace detail

/// F_f(y) = ||y - f||_F^2 / (2 (M+1)), with M+1 the number of time columns.
inline double fidelity(const Measurement& y, const Measurement& f) {
    detail::check_same_shape(y, f, "fidelity");
    return (y.values - f.values).squaredNorm() / (2.0 * static_cast<double>(y.cols()));
}

inline ResidualGradient fidelity_gradient(const Measurement& y, const Measurement& f) {
    detail::check_same_shape(y, f, "fidelity_gradient");
    return {(y.values - f.values) / static_cast<double>(y.cols())};
}

/// sum_{j<M} |gamma^{j,+} - gamma^{j+1,-}| + |gamma^{j,+} - gamma^{j,-}|.
inline double discrete_variation(const CadlagSamples& curve) {
    const auto& p = curve.gamma_plus;
    const auto& m = curve.gamma_minus;
    double v = 0.0;
    for (std::size_t j = 0; j + 1 < p.size(); ++j) v += std::abs(p[j] - m[j + 1]) + std::abs(p[j] - m[j]);
    return v;
}

inline double a0(double alpha, double beta, const CadlagSamples& curve) {
    return 1.0 / (alpha + beta * discrete_variation(curve));
}

/// <w, K0 gamma>_F without materializing K0 gamma.
inline double pair_with_atom(const ResidualGradient& g, const SensorArray& sensors, const ThetaWeights& theta,
                             const CadlagSamples& curve) {
    double s = 0.0;
    for (std::size_t j = 0; j < theta.size(); ++j) {
        const double th = theta[j];
        const auto col = static_cast<Eigen::Index>(j);
        for (std::size_t i = 0; i < sensors.size(); ++i) {
            double v = 0.0;
            if (th != 0.0) v += th * kernel_eval(sensors, i, curve.gamma_minus[j]);
            if (th != 1.0) v += (1.0 - th) * kernel_eval(sensors, i, curve.gamma_plus[j]);
            s += g.w(static_cast<Eigen::Index>(i), col) * v;
        }
    }
    return s;
}

/// D0(gamma) = -a0(gamma) <w, K0 gamma>_F.
inline double certificate_value(const ResidualGradient& g, const SensorArray& sensors, const TimeGrid& grid,
                                const ThetaWeights& theta, double alpha, double beta, const CadlagSamples& curve) {
    detail::check_forward_dims(sensors, grid, theta);
    detail::check_curve_dims(grid, curve);
    detail::require(g.w.rows() == static_cast<Eigen::Index>(sensors.size()) &&
                        g.w.cols() == static_cast<Eigen::Index>(grid.size()),
                    "certificate_value: residual gradient has the wrong shape");
    return -a0(alpha, beta, curve) * pair_with_atom(g, sensors, theta, curve);
}

/// sum_i mass_i (alpha + beta * variation_i).
inline double regularizer_value(const SparseDiracMeasure& mu, double alpha, double beta) {
    double r = 0.0;
    for (const auto& a : mu.atoms) r += a.mass * (alpha + beta * discrete_variation(a.curve));
    return r;
}

struct ObjectiveParts {
    double fidelity = 0.0;
    double regularizer = 0.0;
    double total() const { return fidelity + regularizer; }
};

inline ObjectiveParts objective_parts(const SparseDiracMeasure& mu, const Measurement& f, const SensorArray& sensors,
                                      const TimeGrid& grid, const ThetaWeights& theta, double alpha, double beta) {
    const Measurement y = forward_measure(sensors, grid, theta, mu);
    return {fidelity(y, f), regularizer_value(mu, alpha, beta)};
}

inline double objective_value(const SparseDiracMeasure& mu, const Measurement& f, const SensorArray& sensors,
                              const TimeGrid& grid, const ThetaWeights& theta, double alpha, double beta) {
    return objective_parts(mu, f, sensors, grid, theta, alpha, beta).total();
}

} // namespace bvtrack
