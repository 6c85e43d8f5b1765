#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bvtrack/core.hpp"
#include "bvtrack/solver.hpp"
#include "bvtrack/validation.hpp"

namespace bvtrack {

using json = nlohmann::json;

// nlohmann prints doubles in shortest round-trip form, so values reload bit-exactly.

inline void to_json(json& j, const TimeGrid& g) { j = json{{"points", g.points()}, {"M", g.M()}}; }
inline void from_json(const json& j, TimeGrid& g) { g = TimeGrid(j.at("points").get<std::vector<double>>()); }

inline void to_json(json& j, const Domain1D& d) { j = json{{"lo", d.lo}, {"hi", d.hi}}; }
inline void from_json(const json& j, Domain1D& d) { d = Domain1D(j.at("lo").get<double>(), j.at("hi").get<double>()); }

inline void to_json(json& j, const CadlagSamples& c) {
    j = json{{"gamma_plus", c.gamma_plus}, {"gamma_minus", c.gamma_minus}};
}
inline void from_json(const json& j, CadlagSamples& c) {
    c = CadlagSamples(j.at("gamma_plus").get<std::vector<double>>(), j.at("gamma_minus").get<std::vector<double>>());
}

inline void to_json(json& j, const ThetaWeights& t) { j = json{{"theta", t.theta}}; }
inline void from_json(const json& j, ThetaWeights& t) { t = ThetaWeights(j.at("theta").get<std::vector<double>>()); }

/// Atoms are flat: {mass, gamma_plus, gamma_minus}.
inline void to_json(json& j, const Atom& a) {
    j = json{{"mass", a.mass}, {"gamma_plus", a.curve.gamma_plus}, {"gamma_minus", a.curve.gamma_minus}};
}
inline void from_json(const json& j, Atom& a) {
    a.mass = j.at("mass").get<double>();
    detail::require(a.mass >= 0.0, "Atom: mass must be nonnegative");
    a.curve = j.get<CadlagSamples>();
}

inline void to_json(json& j, const SparseDiracMeasure& m) { j = json{{"atoms", m.atoms}}; }
inline void from_json(const json& j, SparseDiracMeasure& m) { m.atoms = j.at("atoms").get<std::vector<Atom>>(); }

/// Nested arrays, one row per sensor.
inline void to_json(json& j, const Measurement& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.values.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.values.cols(); ++c) row.push_back(m.values(i, c));
        rows.push_back(std::move(row));
    }
    j = json{{"values", std::move(rows)}};
}
inline void from_json(const json& j, Measurement& m) {
    const auto rows = j.at("values").get<std::vector<std::vector<double>>>();
    detail::require(!rows.empty() && !rows[0].empty(), "Measurement: empty matrix");
    Eigen::MatrixXd v(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        detail::require(rows[i].size() == rows[0].size(), "Measurement: ragged rows");
        for (std::size_t c = 0; c < rows[i].size(); ++c)
            v(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
    }
    m = Measurement(std::move(v));
}

inline void to_json(json& j, const SensorArray& s) {
    j = json{{"positions", s.positions}, {"sigma2", s.sigma2}, {"c", s.c}};
}
inline void from_json(const json& j, SensorArray& s) {
    s = SensorArray(j.at("positions").get<std::vector<double>>(), j.at("sigma2").get<std::vector<double>>(),
                    j.at("c").get<std::vector<double>>());
}

inline void to_json(json& j, const AscentParams& a) {
    j = json{{"max_iters", a.max_iters},
             {"init_step_fraction", a.init_step_fraction},
             {"armijo_c", a.armijo_c},
             {"shrink", a.shrink},
             {"min_step", a.min_step},
             {"coarse_eps", a.coarse_eps},
             {"refine_top", a.refine_top},
             {"refine_iters", a.refine_iters}};
}
inline void from_json(const json& j, AscentParams& a) {
    a.max_iters = j.value("max_iters", a.max_iters);
    a.init_step_fraction = j.value("init_step_fraction", a.init_step_fraction);
    a.armijo_c = j.value("armijo_c", a.armijo_c);
    a.shrink = j.value("shrink", a.shrink);
    a.min_step = j.value("min_step", a.min_step);
    a.coarse_eps = j.value("coarse_eps", a.coarse_eps);
    a.refine_top = j.value("refine_top", a.refine_top);
    a.refine_iters = j.value("refine_iters", a.refine_iters);
}

inline void to_json(json& j, const CoefficientParams& c) {
    j = json{{"max_iters", c.max_iters}, {"kkt_tol", c.kkt_tol}, {"power_iters", c.power_iters}};
}
inline void from_json(const json& j, CoefficientParams& c) {
    c.max_iters = j.value("max_iters", c.max_iters);
    c.kkt_tol = j.value("kkt_tol", c.kkt_tol);
    c.power_iters = j.value("power_iters", c.power_iters);
}

inline void to_json(json& j, const SolverConfig& c) {
    j = json{{"alpha", c.alpha},         {"beta", c.beta},
             {"eps_stop", c.eps_stop},   {"eps_smooth", c.eps_smooth},
             {"q_starts", c.q_starts},   {"starts", to_string(c.starts)},
             {"max_outer_iters", c.max_outer_iters},
             {"ascent", c.ascent},       {"coeff", c.coeff},
             {"prune_tol", c.prune_tol}, {"merge_tol", c.merge_tol},
             {"seed", c.seed},
             {"domain", c.domain}};
}
/// Missing keys keep the values already in c, so a partial file overlays defaults.
inline void from_json(const json& j, SolverConfig& c) {
    c.alpha = j.value("alpha", c.alpha);
    c.beta = j.value("beta", c.beta);
    c.eps_stop = j.value("eps_stop", c.eps_stop);
    c.eps_smooth = j.value("eps_smooth", c.eps_smooth);
    c.q_starts = j.value("q_starts", c.q_starts);
    if (j.contains("starts")) c.starts = start_family_from_string(j.at("starts").get<std::string>());
    c.max_outer_iters = j.value("max_outer_iters", c.max_outer_iters);
    if (j.contains("ascent")) from_json(j.at("ascent"), c.ascent);
    if (j.contains("coeff")) from_json(j.at("coeff"), c.coeff);
    c.prune_tol = j.value("prune_tol", c.prune_tol);
    c.merge_tol = j.value("merge_tol", c.merge_tol);
    c.seed = j.value("seed", c.seed);
    if (j.contains("domain")) c.domain = j.at("domain").get<Domain1D>();
}

inline void to_json(json& j, const MassPoint& p) { j = json{{"position", p.position}, {"mass", p.mass}}; }
/// Accepts {"position", "mass"} objects or [position, mass] pairs.
inline void from_json(const json& j, MassPoint& p) {
    if (j.is_array()) {
        detail::require(j.size() == 2, "MassPoint: expected [position, mass]");
        p = {j[0].get<double>(), j[1].get<double>()};
    } else {
        p = {j.at("position").get<double>(), j.at("mass").get<double>()};
    }
}

inline void to_json(json& j, const IterationRecord& r) {
    j = json{{"k", r.k},
             {"fidelity", r.fidelity},
             {"regularizer", r.regularizer},
             {"objective", r.objective},
             {"certificate_max", r.certificate_max},
             {"n_atoms", r.n_atoms},
             {"coeff_iterations", r.coeff_iterations},
             {"coeff_kkt", r.coeff_kkt}};
}
inline void from_json(const json& j, IterationRecord& r) {
    r.k = j.at("k").get<int>();
    r.fidelity = j.at("fidelity").get<double>();
    r.regularizer = j.at("regularizer").get<double>();
    r.objective = j.at("objective").get<double>();
    r.certificate_max = j.at("certificate_max").get<double>();
    r.n_atoms = j.at("n_atoms").get<int>();
    r.coeff_iterations = j.value("coeff_iterations", 0);
    r.coeff_kkt = j.value("coeff_kkt", 0.0);
}

inline void to_json(json& j, const ReconstructionResult& r) {
    j = json{{"atoms", r.measure.atoms},
             {"lambdas", r.lambdas},
             {"history", r.history},
             {"stop_reason", to_string(r.stop_reason)},
             {"seed", r.seed},
             {"alpha", r.alpha},
             {"beta", r.beta},
             {"final_candidate", r.final_candidate},
             {"final_certificate", r.final_certificate}};
}
inline void from_json(const json& j, ReconstructionResult& r) {
    r.measure.atoms = j.at("atoms").get<std::vector<Atom>>();
    r.lambdas = j.at("lambdas").get<std::vector<double>>();
    r.history = j.at("history").get<std::vector<IterationRecord>>();
    r.stop_reason = stop_reason_from_string(j.at("stop_reason").get<std::string>());
    r.seed = j.at("seed").get<std::uint64_t>();
    r.alpha = j.at("alpha").get<double>();
    r.beta = j.at("beta").get<double>();
    r.final_candidate = j.at("final_candidate").get<CadlagSamples>();
    r.final_certificate = j.at("final_certificate").get<double>();
}

// ---- files ----

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ValidationError("malformed JSON in '" + path + "': " + e.what());
    }
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write '" + path + "'");
    out << text;
}

inline void write_json_file(const std::string& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// L rows x (M+1) columns, 17 significant digits.
inline std::string measurement_to_csv(const Measurement& m) {
    std::ostringstream os;
    for (Eigen::Index i = 0; i < m.values.rows(); ++i) {
        for (Eigen::Index c = 0; c < m.values.cols(); ++c) os << (c ? "," : "") << format_double(m.values(i, c));
        os << "\n";
    }
    return os.str();
}

inline Measurement measurement_from_csv(const std::string& text) {
    std::vector<std::vector<double>> rows;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw ValidationError("measurement CSV: bad cell '" + cell + "'");
            }
        }
        rows.push_back(std::move(row));
    }
    json j;
    j["values"] = rows;
    return j.get<Measurement>();
}

/// Rows (t_j, gamma_minus, gamma_plus).
inline std::string cadlag_to_csv(const CadlagSamples& c, const TimeGrid& grid) {
    detail::check_curve_dims(grid, c);
    std::ostringstream os;
    os << "t,gamma_minus,gamma_plus\n";
    for (std::size_t j = 0; j < grid.size(); ++j)
        os << format_double(grid[j]) << "," << format_double(c.gamma_minus[j]) << "," << format_double(c.gamma_plus[j])
           << "\n";
    return os.str();
}

inline std::string iterations_to_csv(const std::vector<IterationRecord>& history) {
    std::ostringstream os;
    os << "k,fidelity,regularizer,objective,certificate_max,n_atoms\n";
    for (const auto& r : history)
        os << r.k << "," << format_double(r.fidelity) << "," << format_double(r.regularizer) << ","
           << format_double(r.objective) << "," << format_double(r.certificate_max) << "," << r.n_atoms << "\n";
    return os.str();
}

inline std::string residuals_to_csv(const std::vector<IterationRecord>& history) {
    const auto r = residual_log(history);
    std::ostringstream os;
    os << "k,r0,r0_times_k_plus_1\n";
    for (std::size_t k = 0; k < r.size(); ++k)
        os << k << "," << format_double(r[k]) << "," << format_double(r[k] * static_cast<double>(k + 1)) << "\n";
    return os.str();
}

} // namespace bvtrack
