// bvtrack command-line interface.
//
// Exit codes: 0 success, 2 invalid input, 3 numerical failure.

#include <cstdio>
#include <filesystem>
#include <future>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bvtrack/bvtrack.hpp"

namespace {

using namespace bvtrack;

constexpr int kOk = 0;
constexpr int kValidation = 2;
constexpr int kNumerical = 3;

std::vector<MassPoint> read_mass_points(const std::string& path) {
    const json j = read_json_file(path);
    try {
        if (j.is_object() && j.contains("points")) return j.at("points").get<std::vector<MassPoint>>();
        return j.get<std::vector<MassPoint>>();
    } catch (const json::exception& e) {
        throw ValidationError("'" + path + "': expected a list of {position, mass}: " + e.what());
    }
}

SimulatedData read_data(const std::string& path) { return data_from_json(read_json_file(path)); }

ReconstructionResult read_result(const std::string& path) {
    const json j = read_json_file(path);
    try {
        return j.get<ReconstructionResult>();
    } catch (const json::exception& e) {
        throw ValidationError("'" + path + "': " + e.what());
    }
}

struct SolveOptions {
    std::string data, out, log, residuals, config, starts_log;
    std::optional<double> alpha, beta, eps_stop, eps_smooth;
    std::optional<int> q, max_iters;
    std::optional<std::uint64_t> seed;
    unsigned threads = 0;
};

/// Config file first, then flags on top.
SolverConfig build_config(const std::string& config_path, const SolveOptions& o) {
    SolverConfig c;
    if (!config_path.empty()) {
        const json j = read_json_file(config_path);
        try {
            from_json(j, c);
        } catch (const json::exception& e) {
            throw ValidationError("config '" + config_path + "': " + e.what());
        }
        if (!j.contains("alpha") && !o.alpha) throw ValidationError("alpha is required (flag or config)");
        if (!j.contains("beta") && !o.beta) throw ValidationError("beta is required (flag or config)");
    } else if (!o.alpha || !o.beta) {
        throw ValidationError("--alpha and --beta are required without --config");
    }
    if (o.alpha) c.alpha = *o.alpha;
    if (o.beta) c.beta = *o.beta;
    if (o.eps_stop) c.eps_stop = *o.eps_stop;
    if (o.eps_smooth) c.eps_smooth = *o.eps_smooth;
    if (o.q) c.q_starts = *o.q;
    if (o.max_iters) c.max_outer_iters = *o.max_iters;
    if (o.seed) c.seed = *o.seed;
    c.validate();
    return c;
}

int run_solve(const SolveOptions& o) {
    const SimulatedData d = read_data(o.data);
    SolverConfig cfg = build_config(o.config, o);
    cfg.domain = d.setup.domain;
    std::string starts_csv = "k,rank,value\n";
    const auto& s = d.setup;
    const auto result = fcgcg_solve(
        d.measurement, s.sensors, s.grid, s.theta, cfg,
        [&](const IterationRecord& r, const InsertionResult& ins) {
            std::fprintf(stderr, "k=%d objective=%.10g certificate=%.10g atoms=%d\n", r.k, r.objective,
                         r.certificate_max, r.n_atoms);
            if (o.starts_log.empty()) return;
            auto v = ins.start_values;
            std::sort(v.rbegin(), v.rend());
            for (std::size_t i = 0; i < v.size(); ++i)
                starts_csv += std::to_string(r.k) + "," + std::to_string(i) + "," + format_double(v[i]) + "\n";
        },
        o.threads);
    write_json_file(o.out, json(result));
    if (!o.log.empty()) write_text_file(o.log, iterations_to_csv(result.history));
    if (!o.residuals.empty()) write_text_file(o.residuals, residuals_to_csv(result.history));
    if (!o.starts_log.empty()) write_text_file(o.starts_log, starts_csv);
    std::printf("stop_reason %s\niterations %zu\natoms %zu\nobjective %s\ncertificate %s\n",
                to_string(result.stop_reason).c_str(), result.history.size(), result.measure.atoms.size(),
                format_double(result.history.back().objective).c_str(), format_double(result.final_certificate).c_str());
    return kOk;
}

int run_certify(const std::string& data_path, const std::string& recon_path, double tol) {
    const SimulatedData d = read_data(data_path);
    const ReconstructionResult r = read_result(recon_path);
    const auto& s = d.setup;
    const Measurement y = forward_measure(s.sensors, s.grid, s.theta, r.measure);
    const ResidualGradient w = fidelity_gradient(y, d.measurement);
    const double cert = certificate_value(w, s.sensors, s.grid, s.theta, r.alpha, r.beta, r.final_candidate);
    const double J = objective_value(r.measure, d.measurement, s.sensors, s.grid, s.theta, r.alpha, r.beta);
    std::printf("objective %s\ncertificate %s\nlogged_certificate %s\n", format_double(J).c_str(),
                format_double(cert).c_str(), format_double(r.final_certificate).c_str());
    for (std::size_t i = 0; i < r.measure.atoms.size(); ++i)
        std::printf("atom %zu mass %s certificate %s\n", i, format_double(r.measure.atoms[i].mass).c_str(),
                    format_double(certificate_value(w, s.sensors, s.grid, s.theta, r.alpha, r.beta,
                                                    r.measure.atoms[i].curve))
                        .c_str());
    const bool ok = std::abs(cert - r.final_certificate) <= tol;
    std::printf("%s\n", ok ? "consistent" : "MISMATCH");
    return ok ? kOk : kValidation;
}

int run_plot(const std::string& recon_path, const std::string& data_path, const std::string& out,
             const std::string& residuals_out) {
    const ReconstructionResult r = read_result(recon_path);
    const SimulatedData d = read_data(data_path);
    std::ostringstream title;
    title << d.name << " (alpha = " << r.alpha << ", beta = " << r.beta << ")";
    write_text_file(out, reconstruction_svg(r, d, title.str()));
    if (!residuals_out.empty())
        write_text_file(residuals_out, svg::residual_plot(residual_log(r.history), "residuals r0 (log scale)"));
    return kOk;
}

int run_experiments(const std::vector<std::string>& names, const std::string& out_dir, const SolveOptions& o,
                    unsigned jobs) {
    std::vector<ExperimentSpec> specs;
    for (const auto& n : names) {
        if (n == "all") {
            for (const auto& e : experiment_names()) specs.push_back(ExperimentSpec::defaults(e));
        } else {
            specs.push_back(ExperimentSpec::defaults(n));
        }
    }
    SolverConfig base;
    if (!o.config.empty()) from_json(read_json_file(o.config), base);
    if (o.q) base.q_starts = *o.q;
    if (o.eps_stop) base.eps_stop = *o.eps_stop;
    if (o.eps_smooth) base.eps_smooth = *o.eps_smooth;
    if (o.max_iters) base.max_outer_iters = *o.max_iters;
    for (auto& s : specs) {
        if (o.alpha) s.alpha = *o.alpha;
        if (o.beta) s.beta = *o.beta;
        if (o.seed) s.seed = *o.seed;
    }
    auto run_one = [&](const ExperimentSpec& s) {
        return run_experiment(s, base, std::filesystem::path(out_dir) / s.name, jobs > 1 ? 1 : o.threads);
    };
    std::vector<ExperimentOutcome> outcomes(specs.size());
    if (jobs <= 1) {
        for (std::size_t i = 0; i < specs.size(); ++i) outcomes[i] = run_one(specs[i]);
    } else {
        for (std::size_t first = 0; first < specs.size(); first += jobs) {
            std::vector<std::future<ExperimentOutcome>> running;
            for (std::size_t i = first; i < std::min(specs.size(), first + jobs); ++i)
                running.push_back(std::async(std::launch::async, run_one, specs[i]));
            for (std::size_t i = 0; i < running.size(); ++i) outcomes[first + i] = running[i].get();
        }
    }
    for (const auto& e : outcomes) {
        std::printf("%-20s stop=%-11s iterations=%-3zu atoms=%-3zu objective=%.6f", e.spec.name.c_str(),
                    to_string(e.result.stop_reason).c_str(), e.result.history.size(), e.result.measure.atoms.size(),
                    e.objective);
        if (e.truth_objective) std::printf(" truth_objective=%.6f", *e.truth_objective);
        std::printf("\n");
    }
    return kOk;
}

void add_solver_flags(CLI::App* cmd, SolveOptions& o) {
    cmd->add_option("--config", o.config, "JSON file with solver settings; flags override it");
    cmd->add_option("--q", o.q, "number of random starts per insertion");
    cmd->add_option("--eps-stop", o.eps_stop, "stop once the certificate is at most 1 + eps");
    cmd->add_option("--eps-smooth", o.eps_smooth, "final smoothing of the variation during ascent");
    cmd->add_option("--max-iters", o.max_iters, "maximum number of outer iterations");
    cmd->add_option("--seed", o.seed, "master seed");
    cmd->add_option("--threads", o.threads, "worker threads for the random starts (0 = all cores)");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tracking of curves of bounded variation from blurred sensor data"};
    app.require_subcommand(1);

    std::string spec_name, out, data, recon, truth, log, a_path, b_path, residuals, csv;
    double noise_std = -1.0;
    std::optional<std::uint64_t> sim_seed;
    double certify_tol = 1e-12;
    SolveOptions solve_opts;
    std::vector<std::string> exp_names;
    unsigned jobs = 1;

    auto* sim = app.add_subcommand("simulate", "generate synthetic data for a named experiment");
    sim->add_option("--spec", spec_name, "experiment name")->required();
    sim->add_option("--out", out, "output data JSON")->required();
    sim->add_option("--noise-std", noise_std, "standard deviation of additive Gaussian noise");
    sim->add_option("--seed", sim_seed, "noise seed");
    sim->add_option("--csv", csv, "also write the measurement matrix as CSV");

    auto* solve = app.add_subcommand("solve", "reconstruct curves from a data file");
    solve->add_option("--data", solve_opts.data, "data JSON")->required();
    solve->add_option("--alpha", solve_opts.alpha, "mass penalty");
    solve->add_option("--beta", solve_opts.beta, "variation penalty");
    solve->add_option("--out", solve_opts.out, "result JSON")->required();
    solve->add_option("--log", solve_opts.log, "iteration log CSV");
    solve->add_option("--residuals", solve_opts.residuals, "residual CSV");
    solve->add_option("--starts-log", solve_opts.starts_log, "sorted start values per iteration (CSV)");
    add_solver_flags(solve, solve_opts);

    auto* certify = app.add_subcommand("certify", "re-evaluate the certificate stored in a result");
    certify->add_option("--data", data, "data JSON")->required();
    certify->add_option("--recon", recon, "result JSON")->required();
    certify->add_option("--tol", certify_tol, "allowed difference to the stored value");

    auto* plot = app.add_subcommand("plot", "draw a reconstruction over its ground truth");
    plot->add_option("--recon", recon, "result JSON")->required();
    plot->add_option("--truth", truth, "data JSON")->required();
    plot->add_option("--out", out, "output SVG")->required();
    plot->add_option("--residuals", residuals, "also draw the residual decay to this SVG");

    auto* w1 = app.add_subcommand("w1", "Wasserstein-1 distance of two weighted point sets on the line");
    w1->add_option("--a", a_path, "JSON list of {position, mass}")->required();
    w1->add_option("--b", b_path, "JSON list of {position, mass}")->required();

    auto* exp = app.add_subcommand("experiment", "simulate and solve named experiments, writing all artifacts");
    exp->add_option("--name", exp_names, "experiment names or 'all'")->required();
    exp->add_option("--out-dir", out, "output directory")->required();
    exp->add_option("--alpha", solve_opts.alpha, "override the experiment's alpha");
    exp->add_option("--beta", solve_opts.beta, "override the experiment's beta");
    exp->add_option("--jobs", jobs, "experiments run concurrently");
    add_solver_flags(exp, solve_opts);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // Usage errors count as validation failures; --help exits cleanly.
        return app.exit(e) == 0 ? kOk : kValidation;
    }

    try {
        if (*sim) {
            ExperimentSpec spec = ExperimentSpec::defaults(spec_name);
            if (noise_std >= 0.0) spec.noise_std = noise_std;
            else if (sim->count("--noise-std")) throw ValidationError("--noise-std must be nonnegative");
            if (sim_seed) spec.seed = *sim_seed;
            const SimulatedData d = simulate(spec);
            write_json_file(out, data_to_json(d));
            if (!csv.empty()) write_text_file(csv, measurement_to_csv(d.measurement));
            return kOk;
        }
        if (*solve) return run_solve(solve_opts);
        if (*certify) return run_certify(data, recon, certify_tol);
        if (*plot) return run_plot(recon, truth, out, residuals);
        if (*w1) {
            const auto a = read_mass_points(a_path);
            const auto b = read_mass_points(b_path);
            std::printf("%s\n", format_double(w1_1d(a, b)).c_str());
            return kOk;
        }
        if (*exp) return run_experiments(exp_names, out, solve_opts, std::max(1u, jobs));
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kValidation;
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return kNumerical;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kNumerical;
    }
    return kOk;
}
