#include "test_helpers.hpp"

#include <gtest/gtest.h>

#include <functional>

using namespace oui;

namespace {

// A one-module log whose OUI at step t is f(t), for t in [0, last].
TrajectoryLog synthetic_log(Step total, Step last, const std::function<double(Step)>& f, double accuracy = 0.5) {
    TrajectoryLog log("synthetic", "", total, 1);
    for (Step t = 0; t <= last; ++t) log.append(t, Metric::oui, 0, f(t));
    log.append(last, Metric::val_accuracy, std::nullopt, accuracy);
    return log;
}

ConfigLogs constant_config(double axis, std::vector<double> levels, Step total = 100) {
    ConfigLogs g{axis, {}};
    for (double v : levels) g.logs.push_back(synthetic_log(total, total - 1, [v](Step) { return v; }));
    return g;
}

// Oracle: ranks by counting, Pearson by the textbook formula.
double brute_force_spearman(const std::vector<double>& x, const std::vector<double>& y) {
    auto ranks = [](const std::vector<double>& v) {
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) {
            double less = 0, equal = 0;
            for (double w : v) {
                less += w < v[i] ? 1 : 0;
                equal += w == v[i] ? 1 : 0;
            }
            r[i] = less + (equal + 1) / 2;
        }
        return r;
    };
    const auto rx = ranks(x), ry = ranks(y);
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) mx += rx[i] / n, my += ry[i] / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

std::vector<double> tied_vector(std::mt19937_64& rng, std::size_t n) {
    std::uniform_int_distribution<int> level(0, static_cast<int>(n / 2 + 1));
    std::vector<double> v(n);
    do {
        for (double& x : v) x = level(rng) * 0.37;
    } while (std::all_of(v.begin(), v.end(), [&](double x) { return x == v[0]; }));
    return v;
}

ScreeningSettings default_settings() {
    ScreeningSettings s;
    s.smoothing_alpha = 0.1;
    return s;
}

}  // namespace

TEST(EarlyOui, ConstantLog) {
    const auto log = synthetic_log(100, 99, [](Step) { return 0.5; });
    for (double f : {0.1, 0.15, 0.5, 1.0}) EXPECT_DOUBLE_EQ(early_oui(log, f), 0.5);
}

TEST(EarlyOui, LinearRamp) {
    const Step T = 1000;
    const auto log = synthetic_log(T, T, [&](Step t) { return static_cast<double>(t) / T; });
    EXPECT_NEAR(early_oui(log, 1.0, {}, 1.0), 0.75, 1e-12);
}

TEST(EarlyOui, BeyondHorizon) {
    const auto log = synthetic_log(1000, 99, [](Step) { return 0.5; });
    EXPECT_THROW(early_oui(log, 0.15), SpecError);
    EXPECT_NO_THROW(early_oui(log, 0.1));
}

TEST(EarlyOui, TruncatedForDivergedRuns) {
    auto log = synthetic_log(1000, 40, [](Step) { return 0.3; });
    log.mark_diverged(41, "boom");
    EXPECT_DOUBLE_EQ(early_oui_truncated(log, 0.15, 0.1), 0.3);
    TrajectoryLog empty("e", "", 100, 1);
    EXPECT_EQ(early_oui_truncated(empty, 0.15, 0.1), 0.0);
}

TEST(RankCorrelation, Examples) {
    const std::vector<double> inc = {1, 2, 3, 4}, dec = {9, 7, 3, 1};
    EXPECT_DOUBLE_EQ(rank_correlation(inc, inc), 1.0);
    EXPECT_DOUBLE_EQ(rank_correlation(inc, dec), -1.0);
    EXPECT_DOUBLE_EQ(rank_correlation(std::vector<double>{1, 2, 3}, std::vector<double>{2, 1, 3}), 0.5);
    EXPECT_EQ(rank_correlation(inc, std::vector<double>{2, 2, 2, 2}), 0.0);
    EXPECT_THROW(rank_correlation(std::vector<double>{1}, std::vector<double>{1}), SpecError);
    EXPECT_THROW(rank_correlation(inc, std::vector<double>{1, 2, 3}), SpecError);
}

TEST(RankCorrelation, MatchesBruteForceWithTies) {
    std::mt19937_64 rng(909);
    std::uniform_int_distribution<std::size_t> len(2, 20);
    for (int i = 0; i < 500; ++i) {
        const std::size_t n = len(rng);
        const auto x = tied_vector(rng, n), y = tied_vector(rng, n);
        ASSERT_NEAR(rank_correlation(x, y), brute_force_spearman(x, y), 1e-12);
    }
}

TEST(RankCorrelation, MonotoneTransformInvariant) {
    std::mt19937_64 rng(910);
    for (int i = 0; i < 200; ++i) {
        const auto x = tied_vector(rng, 12), y = tied_vector(rng, 12);
        std::vector<double> tx;
        for (double v : x) tx.push_back(std::exp(3 * v) - 7);
        EXPECT_EQ(rank_correlation(x, y), rank_correlation(tx, y));
    }
    std::vector<double> distinct = {0.3, -1.0, 2.5, 0.9, 4.1};
    EXPECT_DOUBLE_EQ(rank_correlation(distinct, distinct), 1.0);
}

TEST(Separation, DisjointConstantLevels) {
    const auto report = separation_analysis({constant_config(1e-4, {0.2, 0.2}), constant_config(1e-2, {0.8, 0.8})},
                                            default_settings());
    ASSERT_TRUE(report.separation_step.has_value());
    EXPECT_EQ(*report.separation_step, 0);
    EXPECT_EQ(report.extremes_separation_step, report.separation_step);
    EXPECT_FALSE(report.low_confidence);
}

TEST(Separation, DuplicatesNotSeparated) {
    const auto report = separation_analysis({constant_config(1e-4, {0.4, 0.5}), constant_config(1e-2, {0.4, 0.5})},
                                            default_settings());
    EXPECT_FALSE(report.separation_step.has_value());
    EXPECT_FALSE(report.pairs.front().early_separated);
}

TEST(Separation, LateCrossing) {
    const Step T = 400;
    ConfigLogs a{1e-4, {}}, b{1e-2, {}};
    for (double offset : {-0.01, 0.01}) {
        a.logs.push_back(synthetic_log(T, T - 1, [=](Step) { return 0.5 + offset; }));
        b.logs.push_back(synthetic_log(T, T - 1, [=](Step t) { return (t < 100 ? 0.5 : 0.8) + offset; }));
    }
    const auto report = separation_analysis({a, b}, default_settings());
    ASSERT_TRUE(report.separation_step.has_value());
    EXPECT_GE(*report.separation_step, 100);
    EXPECT_LT(*report.separation_step, 130);
}

TEST(Separation, NeedsPersistence) {
    // Apart only for a brief blip shorter than the persistence window.
    const Step T = 1000;
    ConfigLogs a{1, {}}, b{2, {}};
    for (double offset : {-0.01, 0.01}) {
        a.logs.push_back(synthetic_log(T, T - 1, [=](Step) { return 0.5 + offset; }));
        b.logs.push_back(synthetic_log(T, T - 1, [=](Step t) { return (t >= 300 && t < 310 ? 0.9 : 0.5) + offset; }));
    }
    auto s = default_settings();
    s.smoothing_alpha = 1.0;
    EXPECT_FALSE(separation_analysis({a, b}, s).separation_step.has_value());
}

TEST(Separation, PermutationInvariant) {
    std::vector<ConfigLogs> groups = {constant_config(1e-3, {0.5, 0.52}), constant_config(1e-5, {0.2, 0.25}),
                                      constant_config(1e-1, {0.9, 0.88})};
    const auto base = to_json(separation_analysis(groups, default_settings())).dump();
    std::vector<ConfigLogs> reversed(groups.rbegin(), groups.rend());
    EXPECT_EQ(to_json(separation_analysis(reversed, default_settings())).dump(), base);
    std::swap(groups[0], groups[1]);
    EXPECT_EQ(to_json(separation_analysis(groups, default_settings())).dump(), base);
}

TEST(Separation, SingleSeedFallsBackToEpsilon) {
    auto s = default_settings();
    s.epsilon = 0.05;
    const auto close = separation_analysis({constant_config(1, {0.50}), constant_config(2, {0.53})}, s);
    EXPECT_TRUE(close.low_confidence);
    EXPECT_FALSE(close.separation_step.has_value());
    const auto far = separation_analysis({constant_config(1, {0.50}), constant_config(2, {0.60})}, s);
    EXPECT_TRUE(far.low_confidence);
    EXPECT_TRUE(far.separation_step.has_value());
}

TEST(Separation, NeedsTwoConfigs) {
    EXPECT_THROW(separation_analysis({constant_config(1, {0.5, 0.5})}, default_settings()), SpecError);
}

TEST(Regime, Classification) {
    const RegimeBands bands{0.3, 0.7};
    EXPECT_EQ(classify_value(0.05, bands), Regime::low_band);
    EXPECT_EQ(classify_value(0.5, bands), Regime::intermediate_band);
    EXPECT_EQ(classify_value(0.9, bands), Regime::high_band);
    EXPECT_EQ(classify_value(0.3, bands), Regime::low_band);
    EXPECT_EQ(classify_value(0.7, bands), Regime::intermediate_band);
    EXPECT_THROW(classify_value(0.5, RegimeBands{0.7, 0.3}), SpecError);
    const auto log = synthetic_log(100, 99, [](Step) { return 0.05; });
    EXPECT_EQ(classify_regime(log, bands), Regime::low_band);
}

namespace {

GridSpec toy_grid() {
    GridSpec g;
    g.base = testkit::small_run_config("toy");
    g.base.total_steps = 60;
    g.values = {1e-2, 1e-4};
    g.seeds = {2, 1};
    return g;
}

}  // namespace

TEST(RunGrid, CardinalityAndOrder) {
    const auto runs = run_grid(toy_grid());
    ASSERT_EQ(runs.size(), 4u);
    EXPECT_EQ(runs[0].axis_value, 1e-4);
    EXPECT_EQ(runs[0].seed, 1u);
    EXPECT_EQ(runs[1].seed, 2u);
    EXPECT_EQ(runs[3].axis_value, 1e-2);
    EXPECT_EQ(runs[2].config.run_id, "toy__wd_0.01__s1");
}

TEST(RunGrid, DeterministicAcrossJobCounts) {
    const auto a = run_grid(toy_grid(), 1), b = run_grid(toy_grid(), 3);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].result.log.records(), b[i].result.log.records());
}

TEST(RunGrid, SingleValueRejected) {
    auto g = toy_grid();
    g.values = {1e-3};
    EXPECT_THROW(run_grid(g), ConfigError);
}

TEST(RunGrid, DivergedRunsAreFlaggedNotFatal) {
    auto g = toy_grid();
    g.axis = GridAxis::learning_rate;
    g.values = {0.01, 1e6};
    const auto runs = run_grid(g);
    EXPECT_FALSE(runs[0].result.diverged());
    EXPECT_TRUE(runs[3].result.diverged());
    const auto report = separation_analysis(group_by_config(runs), g.screening, g.axis);
    EXPECT_EQ(report.configs[1].diverged, 2u);
    EXPECT_EQ(report.configs[1].final_accuracy_mean, 0.0);
}
