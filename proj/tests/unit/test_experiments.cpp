#include <gtest/gtest.h>

#include <filesystem>

#include "bvtrack/experiments.hpp"

using namespace bvtrack;

TEST(Setup, Standard) {
    const auto s = standard_setup();
    EXPECT_EQ(s.sensors.size(), 100u);
    EXPECT_EQ(s.grid.M(), 30u);
    EXPECT_NEAR(s.sensors.positions[1] - s.sensors.positions[0], 5.0 / 99.0, 1e-15);
    EXPECT_EQ(s.sensors.positions.back(), 5.0);
    EXPECT_NEAR(s.sensors.peak(0), 2.820948, 1e-6);
}

TEST(Specs, Defaults) {
    const auto a = ExperimentSpec::defaults("three_curves");
    EXPECT_EQ(a.alpha, 5.0);
    EXPECT_EQ(a.beta, 2.0);
    const auto n = ExperimentSpec::defaults("three_curves_noisy");
    EXPECT_EQ(n.beta, 3.0);
    EXPECT_EQ(n.noise_std, 0.2);
    EXPECT_EQ(ExperimentSpec::defaults("crossing").alpha, 13.0);
    EXPECT_EQ(ExperimentSpec::defaults("diffuse_mu").alpha, 3.0);
    EXPECT_EQ(ExperimentSpec::defaults("diffuse_nu").beta, 2.0);
    EXPECT_THROW(ExperimentSpec::defaults("four_curves"), ValidationError);
    auto bad = a;
    bad.noise_std = -0.1;
    EXPECT_THROW(bad.validate(), ValidationError);
}

TEST(GroundTruth, ThreeCurvesAtStart) {
    const auto setup = standard_setup();
    const auto mu = std::get<SparseDiracMeasure>(ground_truth("three_curves", setup));
    ASSERT_EQ(mu.atoms.size(), 3u);
    EXPECT_EQ(mu.atoms[0].curve.gamma_plus[0], 3.5);
    EXPECT_EQ(mu.atoms[1].curve.gamma_plus[0], 2.5);
    EXPECT_EQ(mu.atoms[2].curve.gamma_plus[0], 1.0);
    for (const auto& a : mu.atoms) EXPECT_EQ(a.mass, 1.0);
}

TEST(GroundTruth, CrossingMeetsAtHalf) {
    const auto setup = standard_setup();
    const auto mu = std::get<SparseDiracMeasure>(ground_truth("crossing", setup));
    ASSERT_EQ(mu.atoms.size(), 2u);
    EXPECT_DOUBLE_EQ(mu.atoms[0].curve.gamma_plus[15], 2.5);
    EXPECT_DOUBLE_EQ(mu.atoms[1].curve.gamma_plus[15], 2.5);
}

TEST(GroundTruth, DiffuseNuJump) {
    const auto setup = standard_setup();
    const auto spec = std::get<IntervalMeasureSpec>(ground_truth("diffuse_nu", setup));
    const auto [lo, hi] = spec.sample(setup.grid, setup.domain);
    EXPECT_DOUBLE_EQ(lo.gamma_plus[15] - lo.gamma_minus[15], 1.0);
    EXPECT_DOUBLE_EQ(hi.gamma_plus[15] - hi.gamma_minus[15], 1.0);
    EXPECT_DOUBLE_EQ(hi.gamma_plus[3] - lo.gamma_plus[3], 1.0);
    EXPECT_THROW(interval_truth("crossing"), ValidationError);
}

TEST(Noise, Examples) {
    const auto setup = standard_setup();
    const auto f = forward_ground_truth(ground_truth("three_curves", setup), setup);
    EXPECT_EQ(add_noise(f, 0.0, 1).values, f.values);
    const auto a = add_noise(f, 0.2, 1), b = add_noise(f, 0.2, 1), c = add_noise(f, 0.2, 2);
    EXPECT_EQ(a.values, b.values);
    EXPECT_NE(a.values, c.values);
    const Eigen::MatrixXd n = a.values - f.values;
    EXPECT_LT(std::abs(n.mean()), 0.01);
    EXPECT_NEAR(std::sqrt(n.squaredNorm() / static_cast<double>(n.size())), 0.2, 0.01);
    EXPECT_THROW(add_noise(f, -1.0, 1), ValidationError);
}

TEST(Simulate, PureGivenSeed) {
    for (const auto& name : experiment_names()) {
        const auto spec = ExperimentSpec::defaults(name);
        EXPECT_EQ(simulate(spec).measurement.values, simulate(spec).measurement.values) << name;
    }
}

TEST(Simulate, DataJsonRoundTrip) {
    for (const auto& name : experiment_names()) {
        const auto d = simulate(ExperimentSpec::defaults(name));
        const auto back = data_from_json(json::parse(data_to_json(d).dump()));
        EXPECT_EQ(back.measurement.values, d.measurement.values) << name;
        EXPECT_EQ(back.setup.grid, d.setup.grid);
        EXPECT_EQ(back.setup.sensors, d.setup.sensors);
        EXPECT_EQ(back.name, name);
        ASSERT_TRUE(back.truth.has_value());
        EXPECT_EQ(back.truth->index(), d.truth->index());
    }
    EXPECT_THROW(data_from_json(json::parse(R"({"grid": {}})")), ValidationError);
}

TEST(Simulate, TruthObjective) {
    const auto d = simulate(ExperimentSpec::defaults("three_curves"));
    // Exact fit; masses 1 with variations 1, 1, 2.
    EXPECT_NEAR(*truth_objective(d, 5, 2), 23.0, 1e-12);
    const auto c = simulate(ExperimentSpec::defaults("crossing"));
    EXPECT_NEAR(*truth_objective(c, 13, 5), 2 * (13 + 5 * 3.0), 1e-12);
    EXPECT_FALSE(truth_objective(simulate(ExperimentSpec::defaults("diffuse_mu")), 3, 2).has_value());
}

TEST(RunExperiment, WritesArtifacts) {
    const auto dir = std::filesystem::temp_directory_path() / "bvtrack_run_experiment_test";
    std::filesystem::remove_all(dir);
    SolverConfig cfg;
    cfg.q_starts = 3;
    cfg.max_outer_iters = 2;
    const auto out = run_experiment(ExperimentSpec::defaults("three_curves"), cfg, dir, 1);
    for (const char* f : {"data.json", "result.json", "iterations.csv", "residuals.csv", "reconstruction.svg", "residuals.svg"})
        EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
    EXPECT_EQ(out.config.alpha, 5.0);
    EXPECT_EQ(out.config.beta, 2.0);
    EXPECT_EQ(out.result.history.size(), 3u);
    EXPECT_LT(out.objective, *out.truth_objective + 100.0);
    const auto back = read_json_file((dir / "result.json").string()).get<ReconstructionResult>();
    EXPECT_EQ(json(back).dump(), json(out.result).dump());
    const auto svg = svg::reconstruction_plot(out.result.measure, out.data.setup.grid, out.data.setup.domain, {}, "t");
    EXPECT_NE(svg.find("<svg"), std::string::npos);
    std::filesystem::remove_all(dir);
}
