#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <tuple>
#include <vector>

#include "bvtrack/coefficients.hpp"
#include "bvtrack/core.hpp"
#include "bvtrack/forward.hpp"
#include "bvtrack/insertion.hpp"
#include "bvtrack/objective.hpp"
#include "bvtrack/rng.hpp"

namespace bvtrack {

enum class StopReason { certificate, max_iters };

inline std::string to_string(StopReason r) { return r == StopReason::certificate ? "certificate" : "max_iters"; }
inline StopReason stop_reason_from_string(const std::string& s) {
    if (s == "certificate") return StopReason::certificate;
    if (s == "max_iters") return StopReason::max_iters;
    throw ValidationError("unknown stop_reason '" + s + "'");
}

/// State of iterate mu^k together with the insertion outcome computed from it.
struct IterationRecord {
    int k = 0;
    double fidelity = 0.0;
    double regularizer = 0.0;
    double objective = 0.0;
    double certificate_max = 0.0;
    int n_atoms = 0;
    int coeff_iterations = 0;
    double coeff_kkt = 0.0;
};

struct ReconstructionResult {
    SparseDiracMeasure measure;
    std::vector<double> lambdas;
    std::vector<IterationRecord> history;
    StopReason stop_reason = StopReason::max_iters;
    std::uint64_t seed = 0;
    double alpha = 0.0;
    double beta = 0.0;
    /// Insertion candidate from the final iteration and its certificate.
    CadlagSamples final_candidate;
    double final_certificate = 0.0;
};

/// Drops entries with lambda <= tol, keeping the order of the survivors.
template <class T>
std::pair<std::vector<T>, std::vector<double>> prune(const std::vector<T>& atoms, const std::vector<double>& lambdas,
                                                     double tol) {
    detail::require(atoms.size() == lambdas.size(), "prune: atoms and weights differ in length");
    std::pair<std::vector<T>, std::vector<double>> out;
    for (std::size_t i = 0; i < atoms.size(); ++i) {
        detail::require(lambdas[i] >= 0.0, "prune: weights must be nonnegative");
        if (lambdas[i] > tol) {
            out.first.push_back(atoms[i]);
            out.second.push_back(lambdas[i]);
        }
    }
    return out;
}

/// r0(mu^k) = J(mu^k) - J(mu^last).
inline std::vector<double> residual_log(const std::vector<IterationRecord>& history) {
    detail::require(!history.empty(), "residual_log: empty history");
    const double last = history.back().objective;
    std::vector<double> r(history.size());
    for (std::size_t k = 0; k < history.size(); ++k) r[k] = std::max(0.0, history[k].objective - last);
    return r;
}

/// Measure with effective masses m_i = lambda_i a0(gamma_i).
inline SparseDiracMeasure measure_from_weights(const std::vector<CadlagSamples>& curves,
                                               const std::vector<double>& lambdas, double alpha, double beta) {
    SparseDiracMeasure mu;
    for (std::size_t i = 0; i < curves.size(); ++i) mu.atoms.push_back({lambdas[i] * a0(alpha, beta, curves[i]), curves[i]});
    return mu;
}

/// Largest difference between the trace vectors of two curves.
inline double trace_distance(const CadlagSamples& a, const CadlagSamples& b) {
    double d = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j)
        d = std::max({d, std::abs(a.gamma_plus[j] - b.gamma_plus[j]), std::abs(a.gamma_minus[j] - b.gamma_minus[j])});
    return d;
}

/// Replaces groups of atoms whose traces lie within config.merge_tol of the group's first member
/// by their mass-weighted mean curve and re-solves the weights. The merge is kept only if the
/// objective does not increase, so outer monotonicity is preserved. Returns true if merged.
///
/// Inexact insertion tends to surround a good curve with near copies that share its weight;
/// they fit the data no better than one curve at their mean.
inline bool merge_close_atoms(std::vector<CadlagSamples>& curves, std::vector<double>& lambdas, const Measurement& f,
                              const SensorArray& sensors, const TimeGrid& grid, const ThetaWeights& theta,
                              const SolverConfig& config) {
    if (config.merge_tol <= 0.0 || curves.size() < 2) return false;
    const std::size_t n = curves.size();
    std::vector<int> group(n, -1);
    std::vector<CadlagSamples> merged;
    std::vector<double> warm;
    bool any = false;
    for (std::size_t a = 0; a < n; ++a) {
        if (group[a] >= 0) continue;
        std::vector<std::size_t> members{a};
        for (std::size_t b = a + 1; b < n; ++b)
            if (group[b] < 0 && trace_distance(curves[a], curves[b]) <= config.merge_tol) members.push_back(b);
        for (std::size_t m : members) group[m] = static_cast<int>(merged.size());
        if (members.size() == 1) {
            merged.push_back(curves[a]);
            warm.push_back(lambdas[a]);
            continue;
        }
        any = true;
        const std::size_t pts = curves[a].size();
        std::vector<double> plus(pts, 0.0), minus(pts, 0.0);
        double total_mass = 0.0, total_lambda = 0.0;
        for (std::size_t m : members) {
            const double mass = lambdas[m] * a0(config.alpha, config.beta, curves[m]);
            total_mass += mass;
            total_lambda += lambdas[m];
            for (std::size_t j = 0; j < pts; ++j) {
                plus[j] += mass * curves[m].gamma_plus[j];
                minus[j] += mass * curves[m].gamma_minus[j];
            }
        }
        for (std::size_t j = 0; j < pts; ++j) {
            plus[j] = clamp_to_domain(plus[j] / total_mass, config.domain);
            minus[j] = clamp_to_domain(minus[j] / total_mass, config.domain);
        }
        merged.emplace_back(std::move(plus), std::move(minus));
        warm.push_back(total_lambda);
    }
    if (!any) return false;

    const std::size_t M = grid.M();
    const AtomResponseMatrix G_old = assemble_atom_responses(curves, sensors, grid, theta, config.alpha, config.beta);
    const Eigen::VectorXd l_old = Eigen::Map<const Eigen::VectorXd>(lambdas.data(), static_cast<Eigen::Index>(n));
    const double before = coefficient_objective(G_old, f, M, l_old);

    const AtomResponseMatrix G = assemble_atom_responses(merged, sensors, grid, theta, config.alpha, config.beta);
    const Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(warm.data(), static_cast<Eigen::Index>(warm.size()));
    const CoefficientResult cr = solve_nonneg_l1(G, f, M, config.coeff, w);
    if (!(cr.objective <= before)) return false;
    std::vector<double> lam(cr.lambda.data(), cr.lambda.data() + cr.lambda.size());
    std::tie(curves, lambdas) = prune(merged, lam, config.prune_tol);
    return true;
}

using IterationCallback = std::function<void(const IterationRecord&, const InsertionResult&)>;

/// Fully-corrective conditional gradient loop.
///
/// Iteration k: residual gradient at mu^k, multi-start insertion (random starts plus the active
/// curves), stopping test (skipped at k = 0),
/// coefficient step over the old atoms plus the candidate warm-started from the previous weights,
/// pruning, merging of near-duplicate atoms. The insertion stream for iteration k is seeded from (config.seed, k).
inline ReconstructionResult fcgcg_solve(const Measurement& f, const SensorArray& sensors, const TimeGrid& grid,
                                        const ThetaWeights& theta, const SolverConfig& config,
                                        const IterationCallback& on_iteration = {}, unsigned n_threads = 0) {
    config.validate();
    detail::check_forward_dims(sensors, grid, theta);
    detail::require(f.rows() == sensors.size() && f.cols() == grid.size(),
                    "fcgcg_solve: data shape does not match sensors and grid");
    if (!f.values.allFinite()) throw NumericalError("fcgcg_solve: non-finite data");

    ReconstructionResult res;
    res.seed = config.seed;
    res.alpha = config.alpha;
    res.beta = config.beta;
    std::vector<CadlagSamples> curves;
    std::vector<double> lambdas;
    const std::size_t M = grid.M();

    for (int k = 0;; ++k) {
        const SparseDiracMeasure mu = measure_from_weights(curves, lambdas, config.alpha, config.beta);
        const Measurement y = forward_measure(sensors, grid, theta, mu);
        const ResidualGradient w = fidelity_gradient(y, f);

        IterationRecord rec;
        rec.k = k;
        rec.fidelity = fidelity(y, f);
        rec.regularizer = regularizer_value(mu, config.alpha, config.beta);
        rec.objective = rec.fidelity + rec.regularizer;
        rec.n_atoms = static_cast<int>(curves.size());

        InsertionResult ins = multi_start_insertion(w, sensors, grid, theta, config,
                                                    derive_seed(config.seed, static_cast<std::uint64_t>(k)), n_threads,
                                                    curves);
        rec.certificate_max = ins.value;
        if (!std::isfinite(ins.value)) throw NumericalError("fcgcg_solve: non-finite certificate");
        res.final_candidate = ins.curve;
        res.final_certificate = ins.value;

        const bool stop_cert = k >= 1 && ins.value <= 1.0 + config.eps_stop;
        const bool stop_iter = k >= config.max_outer_iters;
        if (stop_cert || stop_iter) {
            res.history.push_back(rec);
            if (on_iteration) on_iteration(rec, ins);
            res.stop_reason = stop_cert ? StopReason::certificate : StopReason::max_iters;
            res.measure = mu;
            res.lambdas = lambdas;
            return res;
        }

        std::vector<CadlagSamples> next = curves;
        next.push_back(ins.curve);
        Eigen::VectorXd warm(static_cast<Eigen::Index>(next.size()));
        for (std::size_t i = 0; i < lambdas.size(); ++i) warm(static_cast<Eigen::Index>(i)) = lambdas[i];
        warm(warm.size() - 1) = 0.0;
        const AtomResponseMatrix G = assemble_atom_responses(next, sensors, grid, theta, config.alpha, config.beta);
        const CoefficientResult cr = solve_nonneg_l1(G, f, M, config.coeff, warm);
        rec.coeff_iterations = cr.iterations;
        rec.coeff_kkt = cr.kkt;
        res.history.push_back(rec);
        if (on_iteration) on_iteration(rec, ins);

        std::vector<double> lam(cr.lambda.data(), cr.lambda.data() + cr.lambda.size());
        std::tie(curves, lambdas) = prune(next, lam, config.prune_tol);
        merge_close_atoms(curves, lambdas, f, sensors, grid, theta, config);
    }
}

} // namespace bvtrack
