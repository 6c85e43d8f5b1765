// Acceptance run: property oracles plus full-size reconstructions of every named experiment.
// Prints one PASS/FAIL line per criterion and exits nonzero if any fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "bvtrack/bvtrack.hpp"

using namespace bvtrack;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
    bool pass = true;
    std::ostringstream detail;

    void require(bool cond, const std::string& what) {
        if (!cond) {
            pass = false;
            detail << " [failed: " << what << "]";
        }
    }
};

int failures = 0;

void report(int id, const std::string& name, const Verdict& v) {
    std::printf("%s criterion %d (%s):%s\n", v.pass ? "PASS" : "FAIL", id, name.c_str(), v.detail.str().c_str());
    std::fflush(stdout);
    if (!v.pass) ++failures;
}

CadlagSamples random_curve(Rng& rng, std::size_t n, double lo, double hi) {
    std::vector<double> p(n), m(n);
    for (std::size_t j = 0; j < n; ++j) {
        p[j] = rng.uniform(lo, hi);
        m[j] = j == 0 ? p[0] : rng.uniform(lo, hi);
    }
    return {p, m};
}

std::vector<MassPoint> random_points(Rng& rng, int n, double total) {
    std::vector<MassPoint> out(static_cast<std::size_t>(n));
    double s = 0.0;
    for (auto& p : out) {
        p.position = rng.uniform(0, 5);
        p.mass = rng.uniform(0.05, 1.0);
        s += p.mass;
    }
    for (auto& p : out) p.mass *= total / s;
    double t = 0.0;
    for (const auto& p : out) t += p.mass;
    out.back().mass += total - t;
    return out;
}

void match_totals(const std::vector<MassPoint>& a, std::vector<MassPoint>& b) {
    double ta = 0.0, tb = 0.0;
    for (const auto& p : a) ta += p.mass;
    for (const auto& p : b) tb += p.mass;
    b.back().mass += ta - tb;
}

// ---- oracle criteria ----

void gradient_oracle() {
    Verdict v;
    const auto t0 = Clock::now();
    const auto setup = standard_setup();
    const auto data = simulate(ExperimentSpec::defaults("three_curves"));
    const auto w0 = fidelity_gradient(Measurement::zeros(100, 31), data.measurement);
    Rng rng(101);
    const double eps = 1e-3, h = 1e-6;
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
        ResidualGradient g = w0;
        if (k % 2 == 1)
            for (Eigen::Index i = 0; i < g.w.size(); ++i) g.w.data()[i] = rng.normal() / 31.0;
        const auto c = random_curve(rng, 31, 0.0, 5.0);
        const auto an = certificate_gradient(g, setup.sensors, setup.grid, setup.theta, 5, 2, eps, c);
        std::vector<double> x(c.gamma_plus);
        x.insert(x.end(), c.gamma_minus.begin(), c.gamma_minus.end());
        // Central differences may step outside Omega; the smoothed certificate is defined everywhere.
        const auto fd = finite_diff_gradient(
            [&](std::span<const double> p) {
                const CadlagSamples cc(std::vector<double>(p.begin(), p.begin() + 31), std::vector<double>(p.begin() + 31, p.end()));
                return certificate_smoothed(g, setup.sensors, setup.grid, setup.theta, 5, 2, eps, cc);
            },
            x, h);
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < an.size(); ++i) {
            num += (an[i] - fd[i]) * (an[i] - fd[i]);
            den += fd[i] * fd[i];
        }
        worst = std::max(worst, std::sqrt(num / den));
    }
    const double t = seconds_since(t0);
    v.detail << " max relative error " << worst << " over 100 curves, " << t << " s";
    v.require(worst < 1e-5, "relative error < 1e-5");
    v.require(t < 10.0, "runtime < 10 s");
    report(1, "gradient oracle", v);
}

double brute_force_min(const Eigen::MatrixXd& G, const Eigen::VectorXd& f, std::size_t M) {
    const auto N = G.cols();
    const double s = 1.0 / static_cast<double>(M + 1);
    auto obj = [&](const Eigen::VectorXd& l) { return 0.5 * s * (G * l - f).squaredNorm() + l.sum(); };
    double best = obj(Eigen::VectorXd::Zero(N));
    for (int mask = 1; mask < (1 << N); ++mask) {
        std::vector<Eigen::Index> idx;
        for (Eigen::Index i = 0; i < N; ++i)
            if (mask & (1 << i)) idx.push_back(i);
        Eigen::MatrixXd Gs(G.rows(), static_cast<Eigen::Index>(idx.size()));
        for (std::size_t k = 0; k < idx.size(); ++k) Gs.col(static_cast<Eigen::Index>(k)) = G.col(idx[k]);
        const Eigen::MatrixXd A = s * Gs.transpose() * Gs;
        const Eigen::VectorXd b = s * Gs.transpose() * f - Eigen::VectorXd::Ones(static_cast<Eigen::Index>(idx.size()));
        const Eigen::VectorXd ls = A.fullPivLu().solve(b);
        if ((ls.array() < 0.0).any()) continue;
        Eigen::VectorXd l = Eigen::VectorXd::Zero(N);
        for (std::size_t k = 0; k < idx.size(); ++k) l(idx[k]) = ls(static_cast<Eigen::Index>(k));
        best = std::min(best, obj(l));
    }
    return best;
}

void coefficient_oracle() {
    Verdict v;
    Rng rng(202);
    double worst_gap = -1e300;
    for (int trial = 0; trial < 50; ++trial) {
        const auto N = static_cast<Eigen::Index>(1 + trial % 3);
        const Eigen::Index rows = 8, cols = 5;
        AtomResponseMatrix G{Eigen::MatrixXd(rows * cols, N)};
        for (Eigen::Index i = 0; i < G.columns.size(); ++i) G.columns.data()[i] = rng.uniform(0.0, 2.0);
        Eigen::VectorXd fv(rows * cols);
        for (Eigen::Index i = 0; i < fv.size(); ++i) fv(i) = rng.uniform(-1.0, 4.0);
        const Measurement f(Eigen::Map<const Eigen::MatrixXd>(fv.data(), rows, cols));
        const auto r = solve_nonneg_l1(G, f, static_cast<std::size_t>(cols - 1), CoefficientParams{});
        worst_gap = std::max(worst_gap, std::abs(r.objective - brute_force_min(G.columns, fv, static_cast<std::size_t>(cols - 1))));
    }
    const AtomResponseMatrix toy{Eigen::MatrixXd::Constant(1, 1, 2.0)};
    const auto r = solve_nonneg_l1(toy, Measurement(Eigen::MatrixXd::Constant(1, 1, 4.0)), 0, CoefficientParams{});
    const double toy_err = std::abs(r.lambda(0) - 1.75);
    v.detail << " max objective gap " << worst_gap << " on 50 instances; toy |lambda - 7/4| = " << toy_err;
    v.require(worst_gap <= 1e-8, "objective gap <= 1e-8");
    v.require(toy_err <= 1e-10, "toy lambda within 1e-10");
    report(2, "coefficient oracle", v);
}

void w1_oracle() {
    Verdict v;
    Rng rng(303);
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const double total = rng.uniform(0.5, 3.0);
        const auto a = random_points(rng, 1 + trial % 6, total);
        auto b = random_points(rng, 1 + (trial / 6) % 6, total);
        match_totals(a, b);
        worst = std::max(worst, std::abs(w1_1d(a, b) - w1_lp_oracle(a, b)));
    }
    int axiom_failures = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const auto a = random_points(rng, 1 + trial % 6, 1.0);
        auto b = random_points(rng, 1 + (trial + 2) % 6, 1.0);
        auto c = random_points(rng, 1 + (trial + 4) % 6, 1.0);
        match_totals(a, b);
        match_totals(a, c);
        const double ab = w1_1d(a, b), ba = w1_1d(b, a), bc = w1_1d(b, c), ac = w1_1d(a, c), aa = w1_1d(a, a);
        if (ab != ba || ab < 0.0 || aa != 0.0 || ac > ab + bc + 1e-12) ++axiom_failures;
    }
    v.detail << " max |w1_1d - LP| " << worst << " on 200 pairs; metric axiom violations " << axiom_failures << "/100";
    v.require(worst <= 1e-9, "agreement to 1e-9");
    v.require(axiom_failures == 0, "metric axioms");
    report(3, "W1 oracle equivalence", v);
}

void deblur() {
    Verdict v;
    const auto setup = standard_setup();
    const auto c = sample_cadlag(ground_truth_curves("three_curves")[2], setup.grid, setup.domain);
    const auto k0 = forward_atom(setup.sensors, setup.grid, setup.theta, c).values;
    const double dt = 1.0 / 30.0;
    std::vector<double> errs;
    for (double d : {dt / 10, dt / 100, dt / 1000})
        errs.push_back((forward_blurred(setup.sensors, setup.grid, setup.theta, d, c).values - k0).cwiseAbs().maxCoeff());
    v.detail << " sup errors " << errs[0] << ", " << errs[1] << ", " << errs[2];
    v.require(errs[1] < errs[0] && errs[2] < errs[1], "strict decrease");
    v.require(errs[2] < 1e-3, "< 1e-3 at the smallest delta");
    report(4, "deblur convergence", v);
}

// ---- experiments ----

struct Run {
    std::string label;
    ExperimentOutcome out;
    double seconds = 0.0;
};

Run run_named(const std::string& label, ExperimentSpec spec, const fs::path& root, unsigned threads) {
    Run r;
    r.label = label;
    const auto t0 = Clock::now();
    r.out = run_experiment(spec, SolverConfig{}, root / label, threads);
    r.seconds = seconds_since(t0);
    const auto& res = r.out.result;
    std::printf("  ran %s: %zu iterations, stop %s, %zu atoms, J = %.10g, %.1f s\n", label.c_str(), res.history.size(),
                to_string(res.stop_reason).c_str(), res.measure.atoms.size(), r.out.objective, r.seconds);
    std::fflush(stdout);
    return r;
}

double max_certificate_gap(const Run& r) {
    const auto& s = r.out.data.setup;
    const auto y = forward_measure(s.sensors, s.grid, s.theta, r.out.result.measure);
    const auto w = fidelity_gradient(y, r.out.data.measurement);
    double gap = 0.0;
    for (const auto& a : r.out.result.measure.atoms)
        gap = std::max(gap, std::abs(certificate_value(w, s.sensors, s.grid, s.theta, r.out.spec.alpha, r.out.spec.beta, a.curve) - 1.0));
    return gap;
}

void experiment1(const Run& r) {
    Verdict v;
    const auto& res = r.out.result;
    double best_jump = 0.0;
    for (const auto& a : res.measure.atoms) best_jump = std::max(best_jump, a.curve.jump_at(15));
    const double eps = r.out.config.eps_stop;
    v.detail << " stop " << to_string(res.stop_reason) << ", max certificate " << res.final_certificate << ", "
             << res.measure.atoms.size() << " atoms, largest jump at t=0.5 " << best_jump << ", J " << r.out.objective
             << " vs truth " << *r.out.truth_objective << ", " << r.seconds << " s";
    v.require(res.stop_reason == StopReason::certificate, "certificate stop");
    v.require(res.final_certificate <= 1.0 + eps, "max certificate <= 1 + eps_stop");
    v.require(res.measure.atoms.size() <= 6, "at most 6 atoms");
    v.require(best_jump >= 0.5, "jump >= 0.5 at t_15");
    v.require(r.out.objective <= *r.out.truth_objective, "J <= J(truth)");
    v.require(r.seconds < 600.0, "runtime < 10 min");
    report(5, "Experiment 1", v);
}

// Every recovered atom is assigned to the ground-truth curve closest in mean absolute right
// trace; the weights assigned to each truth curve are summed and compared. Total variation is the
// mass-weighted sum of the atoms' discrete variations.
void regularization_bias(const Run& ref, const Run& big) {
    Verdict v;
    const auto& truth = std::get<SparseDiracMeasure>(*ref.out.data.truth).atoms;
    auto dist = [](const CadlagSamples& x, const CadlagSamples& y) {
        double d = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) d += std::abs(x.gamma_plus[j] - y.gamma_plus[j]);
        return d / static_cast<double>(x.size());
    };
    auto per_truth = [&](const SparseDiracMeasure& mu) {
        std::vector<double> w(truth.size(), 0.0);
        for (const auto& atom : mu.atoms) {
            std::size_t best = 0;
            for (std::size_t i = 1; i < truth.size(); ++i)
                if (dist(atom.curve, truth[i].curve) < dist(atom.curve, truth[best].curve)) best = i;
            w[best] += atom.mass;
        }
        return w;
    };
    auto variation = [](const SparseDiracMeasure& mu) {
        double tv = 0.0;
        for (const auto& atom : mu.atoms) tv += atom.mass * discrete_variation(atom.curve);
        return tv;
    };
    const auto w_ref = per_truth(ref.out.result.measure);
    const auto w_big = per_truth(big.out.result.measure);
    bool all_smaller = true;
    v.detail << " weight per truth curve (alpha=12 vs alpha=5):";
    for (std::size_t i = 0; i < truth.size(); ++i) {
        v.detail << " " << w_big[i] << " < " << w_ref[i] << (i + 1 < truth.size() ? "," : "");
        all_smaller = all_smaller && w_big[i] < w_ref[i];
    }
    const double tv_ref = variation(ref.out.result.measure), tv_big = variation(big.out.result.measure);
    v.detail << "; total variation " << tv_big << " vs " << tv_ref;
    v.require(all_smaller, "every matched weight strictly smaller");
    v.require(tv_big < tv_ref, "smaller total variation");
    report(6, "regularization bias", v);
}

void noise_robustness(const Run& clean, const Run& noisy) {
    Verdict v;
    const auto& s = noisy.out.data.setup;
    const double e_noisy = sampled_w1_error(noisy.out.result.measure, *noisy.out.data.truth, s.grid, s.domain);
    const double e_zero = sampled_w1_error({}, *noisy.out.data.truth, s.grid, s.domain);
    const double e_clean = sampled_w1_error(clean.out.result.measure, *clean.out.data.truth, s.grid, s.domain);
    v.detail << " error " << e_noisy << " vs zero measure " << e_zero << " and 2 x noiseless " << 2 * e_clean;
    v.require(e_noisy < e_zero, "below the zero-measure error");
    v.require(e_noisy < 2 * e_clean, "below twice the noiseless error");
    report(7, "noise robustness", v);
}

void crossing(const Run& r) {
    Verdict v;
    v.detail << " J " << r.out.objective << " vs truth " << *r.out.truth_objective;
    v.require(r.out.objective <= *r.out.truth_objective, "J <= J(truth)");
    report(8, "crossing", v);
}

void diffuse(const Run& mu, const Run& nu) {
    Verdict v;
    double nu_jump = 0.0, mu_jump = 0.0;
    for (const auto& a : nu.out.result.measure.atoms) nu_jump = std::max(nu_jump, a.curve.jump_at(15));
    for (const auto& a : mu.out.result.measure.atoms)
        for (std::size_t j = 1; j < a.curve.size(); ++j) mu_jump = std::max(mu_jump, a.curve.jump_at(j));
    v.detail << " largest nu jump at t=0.5 " << nu_jump << "; largest mu jump " << mu_jump;
    v.require(nu_jump >= 0.5, "nu reconstruction jumps at t=0.5");
    v.require(mu_jump < 0.3, "mu reconstruction jump-free");
    report(9, "diffuse", v);
}

// r0(mu^k) (k+1) is compared with 2 r0(mu^0): the observed rate constant may not exceed twice the
// initial residual.
void outer_loop(const std::vector<const Run*>& runs) {
    Verdict v;
    for (const Run* r : runs) {
        const auto& h = r->out.result.history;
        double worst_rise = 0.0;
        for (std::size_t k = 1; k < h.size(); ++k) worst_rise = std::max(worst_rise, h[k].objective - h[k - 1].objective);
        const auto r0 = residual_log(h);
        double rate = 0.0;
        for (std::size_t k = 0; k < r0.size(); ++k) rate = std::max(rate, r0[k] * static_cast<double>(k + 1));
        const double bound = 2.0 * r0[0];
        const double gap = max_certificate_gap(*r);
        const double tol = std::max(r->out.config.eps_stop, 1e-6);
        v.detail << " " << r->label << ": rise " << worst_rise << ", max (k+1) r0 " << rate << " <= " << bound
                 << ", active |cert-1| " << gap << ";";
        v.require(worst_rise <= 1e-10, r->label + " objective nonincreasing");
        v.require(rate <= bound, r->label + " (k+1) r0 bounded");
        v.require(gap <= tol, r->label + " active certificates at 1");
    }
    report(10, "outer-loop properties", v);
}

void determinism(const Run& first, const fs::path& root) {
    Verdict v;
    // Different thread count on purpose: scheduling must not matter.
    const auto again = run_experiment(first.out.spec, SolverConfig{}, root / (first.label + "_rerun"), 2);
    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    const std::string a = slurp(root / first.label / "result.json");
    const std::string b = slurp(root / (first.label + "_rerun") / "result.json");
    v.detail << " " << first.label << " rerun: result.json " << a.size() << " bytes, " << (a == b ? "identical" : "different");
    v.require(!a.empty() && a == b, "byte-identical result JSON");
    report(11, "determinism", v);
}

} // namespace

int main(int argc, char** argv) {
    fs::path root = "acceptance_artifacts";
    unsigned threads = 0;
    for (int i = 1; i + 1 < argc; i += 2) {
        const std::string flag = argv[i];
        if (flag == "--out-dir") root = argv[i + 1];
        else if (flag == "--threads") threads = static_cast<unsigned>(std::stoul(argv[i + 1]));
        else {
            std::fprintf(stderr, "usage: acceptance [--out-dir DIR] [--threads N]\n");
            return 2;
        }
    }
    fs::create_directories(root);

    gradient_oracle();
    coefficient_oracle();
    w1_oracle();
    deblur();

    const Run exp1 = run_named("three_curves", ExperimentSpec::defaults("three_curves"), root, threads);
    experiment1(exp1);

    ExperimentSpec strong = ExperimentSpec::defaults("three_curves");
    strong.alpha = 12;
    strong.beta = 5;
    const Run exp1_strong = run_named("three_curves_alpha12", strong, root, threads);
    regularization_bias(exp1, exp1_strong);

    const Run noisy = run_named("three_curves_noisy", ExperimentSpec::defaults("three_curves_noisy"), root, threads);
    noise_robustness(exp1, noisy);

    const Run cross = run_named("crossing", ExperimentSpec::defaults("crossing"), root, threads);
    crossing(cross);

    const Run mu = run_named("diffuse_mu", ExperimentSpec::defaults("diffuse_mu"), root, threads);
    const Run nu = run_named("diffuse_nu", ExperimentSpec::defaults("diffuse_nu"), root, threads);
    diffuse(mu, nu);

    outer_loop({&exp1, &exp1_strong, &noisy, &cross, &mu, &nu});

    // Rerun the quickest experiment.
    const Run* quickest = &exp1;
    for (const Run* r : {&exp1_strong, &noisy, &cross, &mu, &nu})
        if (r->seconds < quickest->seconds) quickest = r;
    determinism(*quickest, root);

    std::printf("%d of 11 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
