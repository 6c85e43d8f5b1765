#pragma once

#include <cmath>
#include <vector>

#include "bvtrack/core.hpp"
#include "bvtrack/forward.hpp"
#include "bvtrack/objective.hpp"

namespace bvtrack {

/// Columns a0(gamma_i) vec(K0 gamma_i), with vec stacking measurement columns.
struct AtomResponseMatrix {
    Eigen::MatrixXd columns;
};

inline Eigen::VectorXd vectorize(const Measurement& m) {
    return Eigen::Map<const Eigen::VectorXd>(m.values.data(), m.values.size());
}

inline AtomResponseMatrix assemble_atom_responses(const std::vector<CadlagSamples>& curves,
                                                  const SensorArray& sensors, const TimeGrid& grid,
                                                  const ThetaWeights& theta, double alpha, double beta) {
    detail::require(!curves.empty(), "assemble_atom_responses: empty curve list");
    const auto rows = static_cast<Eigen::Index>(sensors.size() * grid.size());
    AtomResponseMatrix G{Eigen::MatrixXd(rows, static_cast<Eigen::Index>(curves.size()))};
    for (std::size_t k = 0; k < curves.size(); ++k)
        G.columns.col(static_cast<Eigen::Index>(k)) =
            a0(alpha, beta, curves[k]) * vectorize(forward_atom(sensors, grid, theta, curves[k]));
    if (!G.columns.allFinite()) throw NumericalError("assemble_atom_responses: non-finite entries");
    return G;
}

/// Quadratic model of the coefficient problem:
///   phi(lambda) = ||G lambda - f||^2 / (2 n_cols) + sum(lambda) = 0.5 l'Hl + c'l + const.
struct CoefficientProblem {
    Eigen::MatrixXd H;
    Eigen::VectorXd c;
    double constant = 0.0;

    CoefficientProblem(const AtomResponseMatrix& G, const Measurement& f, std::size_t M) {
        const Eigen::VectorXd fv = vectorize(f);
        detail::require(G.columns.rows() == fv.size(), "solve_nonneg_l1: dimension mismatch");
        detail::require(fv.allFinite() && G.columns.allFinite(), "solve_nonneg_l1: non-finite data");
        const double scale = 1.0 / static_cast<double>(M + 1);
        H = scale * G.columns.transpose() * G.columns;
        c = -scale * (G.columns.transpose() * fv);
        c.array() += 1.0;
        constant = 0.5 * scale * fv.squaredNorm();
    }

    double value(const Eigen::VectorXd& l) const { return 0.5 * l.dot(H * l) + c.dot(l) + constant; }
    Eigen::VectorXd gradient(const Eigen::VectorXd& l) const { return H * l + c; }
};

inline double kkt_residual_from_gradient(const Eigen::VectorXd& lambda, const Eigen::VectorXd& grad) {
    double r = 0.0;
    for (Eigen::Index i = 0; i < lambda.size(); ++i)
        r = std::max(r, lambda(i) > 0.0 ? std::abs(grad(i)) : std::max(0.0, -grad(i)));
    return r;
}

/// Max KKT violation of lambda for the coefficient problem.
inline double kkt_residual(const AtomResponseMatrix& G, const Measurement& f, std::size_t M,
                           const Eigen::VectorXd& lambda) {
    detail::require((lambda.array() >= 0.0).all(), "kkt_residual: lambda must be nonnegative");
    const CoefficientProblem p(G, f, M);
    return kkt_residual_from_gradient(lambda, p.gradient(lambda));
}

inline double coefficient_objective(const AtomResponseMatrix& G, const Measurement& f, std::size_t M,
                                    const Eigen::VectorXd& lambda) {
    const Eigen::VectorXd r = G.columns * lambda - vectorize(f);
    return r.squaredNorm() / (2.0 * static_cast<double>(M + 1)) + lambda.sum();
}

struct CoefficientResult {
    Eigen::VectorXd lambda;
    double objective = 0.0;
    double kkt = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Nonnegative L1-penalized least squares by projected gradient (step 1/L from power iteration).
///
/// Every few iterations the current support is solved exactly; the result is kept when it stays
/// feasible and lowers the objective, which finishes degenerate instances that plain projected
/// gradient would crawl through. The objective never rises above the warm start's.
inline CoefficientResult solve_nonneg_l1(const AtomResponseMatrix& G, const Measurement& f, std::size_t M,
                                         const CoefficientParams& params, Eigen::VectorXd warm = {}) {
    const CoefficientProblem p(G, f, M);
    const Eigen::Index N = p.H.rows();
    if (warm.size() == 0) warm = Eigen::VectorXd::Zero(N);
    detail::require(warm.size() == N, "solve_nonneg_l1: warm start has the wrong length");
    Eigen::VectorXd l = warm.cwiseMax(0.0);

    // Largest eigenvalue of H.
    Eigen::VectorXd v = Eigen::VectorXd::Ones(N) / std::sqrt(static_cast<double>(N));
    double lip = 0.0;
    for (int k = 0; k < params.power_iters; ++k) {
        const Eigen::VectorXd hv = p.H * v;
        const double nrm = hv.norm();
        if (nrm == 0.0) break;
        lip = v.dot(hv);
        v = hv / nrm;
    }
    lip = std::max({lip, p.H.diagonal().maxCoeff(), 1e-300});
    // Power iteration underestimates; pad so the step stays below 1/L.
    const double step = 1.0 / (1.01 * lip);

    Eigen::VectorXd grad = p.gradient(l);
    // Change of the objective when moving from l to cand, without cancellation against the constant.
    auto change = [&](const Eigen::VectorXd& cand) {
        const Eigen::VectorXd d = cand - l;
        return grad.dot(d) + 0.5 * d.dot(p.H * d);
    };
    CoefficientResult out;
    // Exact minimizer on the current support. When it leaves the orthant, move towards it until the
    // first coordinate hits zero, drop that coordinate and retry (objective decreases along the way).
    auto polish = [&] {
        std::vector<Eigen::Index> support;
        for (Eigen::Index i = 0; i < N; ++i)
            if (l(i) > 0.0) support.push_back(i);
        while (!support.empty()) {
            const auto s = static_cast<Eigen::Index>(support.size());
            Eigen::MatrixXd Hs(s, s);
            Eigen::VectorXd cs(s), ls(s);
            for (Eigen::Index a = 0; a < s; ++a) {
                const auto ia = support[static_cast<std::size_t>(a)];
                cs(a) = p.c(ia);
                ls(a) = l(ia);
                for (Eigen::Index b = 0; b < s; ++b) Hs(a, b) = p.H(ia, support[static_cast<std::size_t>(b)]);
            }
            const Eigen::LDLT<Eigen::MatrixXd> ldlt(Hs);
            if (ldlt.info() != Eigen::Success) return;
            const Eigen::VectorXd xs = ldlt.solve(-cs);
            if (!xs.allFinite()) return;
            double tmax = 1.0;
            Eigen::Index hit = -1;
            for (Eigen::Index a = 0; a < s; ++a)
                if (xs(a) <= 0.0) {
                    const double t = ls(a) / (ls(a) - xs(a));
                    if (t < tmax) tmax = t, hit = a;
                }
            Eigen::VectorXd cand = Eigen::VectorXd::Zero(N);
            for (Eigen::Index a = 0; a < s; ++a)
                cand(support[static_cast<std::size_t>(a)]) = a == hit ? 0.0 : std::max(0.0, ls(a) + tmax * (xs(a) - ls(a)));
            if (!(change(cand) <= 0.0)) return;
            l = cand;
            grad = p.gradient(l);
            if (hit < 0) return;
            support.erase(support.begin() + hit);
        }
    };

    int it = 0;
    out.kkt = kkt_residual_from_gradient(l, grad);
    while (out.kkt > params.kkt_tol && it < params.max_iters) {
        const Eigen::VectorXd next = (l - step * grad).cwiseMax(0.0);
        const bool accepted = change(next) <= 0.0;
        if (accepted) {
            l = next;
            grad = p.gradient(l);
        }
        ++it;
        if (it % 20 == 0 || !accepted) polish();
        out.kkt = kkt_residual_from_gradient(l, grad);
    }
    out.lambda = l;
    out.objective = coefficient_objective(G, f, M, l);
    out.kkt = kkt_residual_from_gradient(l, grad);
    out.iterations = it;
    out.converged = out.kkt <= params.kkt_tol;
    return out;
}

} // namespace bvtrack
