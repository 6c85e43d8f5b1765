#pragma once

#include <cmath>
#include <filesystem>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "bvtrack/core.hpp"
#include "bvtrack/forward.hpp"
#include "bvtrack/objective.hpp"
#include "bvtrack/rng.hpp"
#include "bvtrack/serialization.hpp"
#include "bvtrack/solver.hpp"
#include "bvtrack/svg.hpp"
#include "bvtrack/validation.hpp"

namespace bvtrack {

/// Domain, time grid, sensors and blur split shared by a data set and its reconstruction.
struct ProblemSetup {
    Domain1D domain{0.0, 5.0};
    TimeGrid grid = make_uniform_grid(30);
    SensorArray sensors;
    ThetaWeights theta;

    void validate() const {
        sensors.validate(domain);
        detail::require(theta.size() == grid.size(), "ProblemSetup: theta does not match the grid");
    }
};

/// Omega = [0,5], M = 30, 100 equidistant sensors with sigma^2 = 0.02 and C = 1/sqrt(2 pi).
inline ProblemSetup standard_setup() {
    ProblemSetup s;
    s.domain = Domain1D(0.0, 5.0);
    s.grid = make_uniform_grid(30);
    s.sensors = SensorArray::equidistant(s.domain, 100, 0.02, 1.0 / std::sqrt(2.0 * std::numbers::pi));
    s.theta = ThetaWeights::standard(s.grid);
    return s;
}

inline const std::vector<std::string>& experiment_names() {
    static const std::vector<std::string> names{"three_curves", "three_curves_noisy", "crossing", "diffuse_mu",
                                                "diffuse_nu"};
    return names;
}

struct ExperimentSpec {
    std::string name;
    double alpha = 5.0;
    double beta = 2.0;
    double noise_std = 0.0;
    std::uint64_t seed = 1;

    /// Published parameters for each named experiment.
    static ExperimentSpec defaults(const std::string& name) {
        if (name == "three_curves") return {name, 5.0, 2.0, 0.0, 1};
        if (name == "three_curves_noisy") return {name, 5.0, 3.0, 0.2, 1};
        if (name == "crossing") return {name, 13.0, 5.0, 0.0, 1};
        if (name == "diffuse_mu") return {name, 3.0, 2.0, 0.0, 1};
        if (name == "diffuse_nu") return {name, 5.0, 2.0, 0.0, 1};
        throw ValidationError("unknown experiment '" + name + "'");
    }

    void validate() const {
        (void)defaults(name);
        detail::require(noise_std >= 0.0, "ExperimentSpec: noise_std must be nonnegative");
        detail::require(alpha > 0.0 && beta > 0.0, "ExperimentSpec: alpha and beta must be positive");
    }
};

/// Closed-form curves of the named ground truths (unit mass each).
inline std::vector<ParametricCurve> ground_truth_curves(const std::string& name) {
    if (name == "three_curves" || name == "three_curves_noisy")
        return {ParametricCurve::smooth([](double t) { return t + 3.5; }),
                ParametricCurve::smooth([](double t) { return std::sqrt(t) + 2.5; }),
                ParametricCurve({0.5}, {[](double t) { return 1.0 + t * t; }, [](double t) { return 2.0 + t * t; }})};
    if (name == "crossing")
        return {ParametricCurve::smooth([](double t) { return 1.0 + 3.0 * t; }),
                ParametricCurve::smooth([](double t) { return 4.0 - 3.0 * t; })};
    return {};
}

inline IntervalMeasureSpec interval_truth(const std::string& name) {
    if (name == "diffuse_mu")
        return {ParametricCurve::smooth([](double t) { return 1.0 + t; }),
                ParametricCurve::smooth([](double t) { return 4.0 - t; })};
    if (name == "diffuse_nu")
        return {ParametricCurve({0.5}, {[](double t) { return 1.0 + t; }, [](double t) { return 2.0 + t; }}),
                ParametricCurve({0.5}, {[](double t) { return 2.0 + t; }, [](double t) { return 3.0 + t; }})};
    throw ValidationError("'" + name + "' is not an interval ground truth");
}

inline GroundTruth ground_truth(const std::string& name, const ProblemSetup& setup) {
    (void)ExperimentSpec::defaults(name);
    if (name == "diffuse_mu" || name == "diffuse_nu") return interval_truth(name);
    SparseDiracMeasure mu;
    for (const auto& c : ground_truth_curves(name)) mu.atoms.push_back({1.0, sample_cadlag(c, setup.grid, setup.domain)});
    return mu;
}

inline Measurement forward_ground_truth(const GroundTruth& truth, const ProblemSetup& setup) {
    if (const auto* mu = std::get_if<SparseDiracMeasure>(&truth))
        return forward_measure(setup.sensors, setup.grid, setup.theta, *mu);
    return forward_interval_measure(setup.sensors, setup.grid, setup.theta, std::get<IntervalMeasureSpec>(truth),
                                    setup.domain);
}

/// f + N with N_ij iid normal(0, std^2), drawn row by row (sensor-major).
inline Measurement add_noise(const Measurement& f, double std_dev, std::uint64_t seed) {
    detail::require(std_dev >= 0.0, "add_noise: std must be nonnegative");
    if (std_dev == 0.0) return f;
    Rng rng(seed);
    Measurement out = f;
    for (Eigen::Index i = 0; i < out.values.rows(); ++i)
        for (Eigen::Index j = 0; j < out.values.cols(); ++j) out.values(i, j) += std_dev * rng.normal();
    return out;
}

/// A measurement with its setup and, for generated data, the truth that produced it.
struct SimulatedData {
    std::string name = "custom";
    ProblemSetup setup;
    Measurement measurement;
    std::optional<GroundTruth> truth;
    double noise_std = 0.0;
    std::uint64_t seed = 0;
};

inline SimulatedData simulate(const ExperimentSpec& spec, const ProblemSetup& setup = standard_setup()) {
    spec.validate();
    setup.validate();
    SimulatedData d;
    d.name = spec.name;
    d.setup = setup;
    d.truth = ground_truth(spec.name, setup);
    d.noise_std = spec.noise_std;
    d.seed = spec.seed;
    d.measurement = add_noise(forward_ground_truth(*d.truth, setup), spec.noise_std, spec.seed);
    return d;
}

/// Traces to draw for a ground truth: curves of a Dirac truth, boundaries of an interval truth.
inline std::vector<CadlagSamples> truth_traces(const GroundTruth& truth, const ProblemSetup& setup) {
    std::vector<CadlagSamples> out;
    if (const auto* mu = std::get_if<SparseDiracMeasure>(&truth)) {
        for (const auto& a : mu->atoms) out.push_back(a.curve);
    } else {
        auto [lo, hi] = std::get<IntervalMeasureSpec>(truth).sample(setup.grid, setup.domain);
        out.push_back(std::move(lo));
        out.push_back(std::move(hi));
    }
    return out;
}

inline json data_to_json(const SimulatedData& d) {
    json j{{"spec", d.name},
           {"noise_std", d.noise_std},
           {"seed", d.seed},
           {"domain", d.setup.domain},
           {"grid", d.setup.grid},
           {"theta", d.setup.theta},
           {"sensors", d.setup.sensors},
           {"measurement", d.measurement}};
    if (d.truth) {
        if (const auto* mu = std::get_if<SparseDiracMeasure>(&*d.truth)) {
            j["truth"] = json{{"kind", "atoms"}, {"atoms", mu->atoms}};
        } else {
            const auto tr = truth_traces(*d.truth, d.setup);
            j["truth"] = json{{"kind", "interval"}, {"zeta_lo", tr[0]}, {"zeta_hi", tr[1]}};
        }
    }
    return j;
}

/// Reads a data file. Interval truths are rebuilt from the experiment name; atom truths are read
/// as stored.
inline SimulatedData data_from_json(const json& j) {
    try {
        SimulatedData d;
        d.name = j.value("spec", std::string("custom"));
        d.noise_std = j.value("noise_std", 0.0);
        d.seed = j.value("seed", std::uint64_t{0});
        d.setup.domain = j.at("domain").get<Domain1D>();
        d.setup.grid = j.at("grid").get<TimeGrid>();
        d.setup.theta = j.contains("theta") ? j.at("theta").get<ThetaWeights>() : ThetaWeights::standard(d.setup.grid);
        d.setup.sensors = j.at("sensors").get<SensorArray>();
        d.setup.validate();
        d.measurement = j.at("measurement").get<Measurement>();
        detail::require(d.measurement.rows() == d.setup.sensors.size() && d.measurement.cols() == d.setup.grid.size(),
                        "data: measurement shape does not match sensors and grid");
        if (j.contains("truth")) {
            const auto& t = j.at("truth");
            if (t.at("kind") == "atoms")
                d.truth = GroundTruth(SparseDiracMeasure{t.at("atoms").get<std::vector<Atom>>()});
            else if (d.name == "diffuse_mu" || d.name == "diffuse_nu")
                d.truth = GroundTruth(interval_truth(d.name));
        }
        return d;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("data file: ") + e.what());
    }
}

/// J of the discretized ground truth; empty for interval truths.
inline std::optional<double> truth_objective(const SimulatedData& d, double alpha, double beta) {
    if (!d.truth) return std::nullopt;
    const auto* mu = std::get_if<SparseDiracMeasure>(&*d.truth);
    if (!mu) return std::nullopt;
    return objective_value(*mu, d.measurement, d.setup.sensors, d.setup.grid, d.setup.theta, alpha, beta);
}

struct ExperimentOutcome {
    ExperimentSpec spec;
    SolverConfig config;
    SimulatedData data;
    ReconstructionResult result;
    double objective = 0.0;
    std::optional<double> truth_objective;
};

inline std::string reconstruction_svg(const ReconstructionResult& r, const SimulatedData& d, const std::string& title) {
    std::vector<CadlagSamples> truth;
    if (d.truth) truth = truth_traces(*d.truth, d.setup);
    return svg::reconstruction_plot(r.measure, d.setup.grid, d.setup.domain, truth, title);
}

/// Generates data, solves, and (if out_dir is given) writes data.json, result.json,
/// iterations.csv, residuals.csv, reconstruction.svg and residuals.svg.
inline ExperimentOutcome run_experiment(const ExperimentSpec& spec, SolverConfig base,
                                        const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                                        unsigned n_threads = 0) {
    ExperimentOutcome out;
    out.spec = spec;
    out.data = simulate(spec);
    base.alpha = spec.alpha;
    base.beta = spec.beta;
    base.seed = spec.seed;
    base.domain = out.data.setup.domain;
    out.config = base;
    const auto& s = out.data.setup;
    out.result = fcgcg_solve(out.data.measurement, s.sensors, s.grid, s.theta, base, {}, n_threads);
    out.objective = objective_value(out.result.measure, out.data.measurement, s.sensors, s.grid, s.theta, spec.alpha,
                                    spec.beta);
    out.truth_objective = truth_objective(out.data, spec.alpha, spec.beta);

    if (out_dir) {
        std::filesystem::create_directories(*out_dir);
        const auto p = [&](const char* f) { return (*out_dir / f).string(); };
        write_json_file(p("data.json"), data_to_json(out.data));
        write_json_file(p("result.json"), json(out.result));
        write_text_file(p("iterations.csv"), iterations_to_csv(out.result.history));
        write_text_file(p("residuals.csv"), residuals_to_csv(out.result.history));
        std::ostringstream title;
        title << spec.name << " (alpha = " << spec.alpha << ", beta = " << spec.beta << ")";
        write_text_file(p("reconstruction.svg"), reconstruction_svg(out.result, out.data, title.str()));
        write_text_file(p("residuals.svg"), svg::residual_plot(residual_log(out.result.history), "residuals r0 (log scale)"));
    }
    return out;
}

} // namespace bvtrack
