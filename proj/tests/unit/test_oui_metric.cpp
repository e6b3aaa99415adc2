#include "test_helpers.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

using namespace oui;

namespace {

// Naive re-implementation: exact rational p/q straight from the definition.
struct Rational {
    std::uint64_t p = 0;
    std::uint64_t q = 1;
};

Rational naive_oui(const std::vector<std::vector<int>>& m) {
    const std::size_t b = m.size(), d = m[0].size();
    std::uint64_t num = 0;
    for (std::size_t n = 0; n < d; ++n) {
        std::uint64_t on = 0, off = 0;
        for (std::size_t i = 0; i < b; ++i) (m[i][n] ? on : off) += 1;
        num += on < off ? on : off;
    }
    return {num, static_cast<std::uint64_t>(d) * (b / 2)};
}

double value_of(const ActivationMask& m) { return oui_of_mask(m, 0, 0).value; }

}  // namespace

TEST(OuiMetric, WorkedExamples) {
    EXPECT_EQ(value_of(ActivationMask::from_rows({{1, 0}, {0, 1}})), 1.0);
    EXPECT_EQ(value_of(ActivationMask::from_rows({{1, 1}, {1, 1}})), 0.0);
    EXPECT_EQ(value_of(ActivationMask::from_rows({{1}, {1}, {0}, {0}})), 1.0);
    EXPECT_EQ(value_of(ActivationMask::from_rows({{1}, {0}, {0}, {0}})), 0.5);
    EXPECT_EQ(value_of(ActivationMask::from_rows({{1}, {1}, {0}})), 1.0);  // odd B, floor(3/2) = 1
    EXPECT_EQ(value_of(ActivationMask::from_rows({{0, 0, 0}, {0, 0, 0}})), 0.0);
}

TEST(OuiMetric, ReferenceMask) {
    const auto m = ActivationMask::from_rows({{1, 0}, {0, 1}, {0, 1}, {0, 1}});
    EXPECT_EQ(activation_counts(m).s, (std::vector<std::size_t>{1, 3}));
    EXPECT_EQ(minority_counts(activation_counts(m)).u, (std::vector<std::size_t>{1, 1}));
    EXPECT_EQ(value_of(m), 0.5);
    const Matrix pre = Matrix::from_rows({{0.5, -0.1}, {-0.2, 1.0}, {-0.3, 0.9}, {-0.4, 0.8}});
    EXPECT_EQ(compute_masks(pre), m);
    EXPECT_EQ(oui_from_preactivations(pre, 0, 0).value, 0.5);
    EXPECT_EQ(oui_from_preactivations(Matrix(4, 3, -1.0), 0, 0).value, 0.0);
    EXPECT_EQ(minority_counts({{2}, 4}).u, (std::vector<std::size_t>{2}));
    EXPECT_EQ(minority_counts({{0}, 4}).u, (std::vector<std::size_t>{0}));
    EXPECT_EQ(value_of(ActivationMask::from_rows({{1}, {1}, {0}, {0}, {0}})), 1.0);
}

TEST(OuiMetric, CountsAndMinority) {
    const auto m = ActivationMask::from_rows({{1, 0, 1}, {1, 0, 0}, {1, 1, 0}, {0, 0, 0}});
    const auto s = activation_counts(m);
    EXPECT_EQ(s.s, (std::vector<std::size_t>{3, 1, 1}));
    const auto u = minority_counts(s);
    EXPECT_EQ(u.u, (std::vector<std::size_t>{1, 1, 1}));
    EXPECT_EQ(value_of(m), 3.0 / 6.0);
}

TEST(OuiMetric, ExactZeroIsInactive) {
    const Matrix pre = Matrix::from_rows({{0.0, -1.0}, {1e-300, 0.0}});
    const auto m = compute_masks(pre);
    EXPECT_FALSE(m.bit(0, 0));
    EXPECT_TRUE(m.bit(1, 0));
    EXPECT_FALSE(m.bit(1, 1));
}

TEST(OuiMetric, BatchOfOneRejected) {
    EXPECT_THROW(ActivationMask(1, 3), InvalidBatchError);
    EXPECT_THROW(compute_masks(Matrix(1, 4)), InvalidBatchError);
}

TEST(OuiMetric, NonFiniteNamesPosition) {
    Matrix pre(3, 2, 0.5);
    pre(2, 1) = std::numeric_limits<double>::quiet_NaN();
    try {
        compute_masks(pre);
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("row 2"), std::string::npos) << msg;
        EXPECT_NE(msg.find("column 1"), std::string::npos) << msg;
    }
}

TEST(OuiMetric, ExhaustiveSmallMasksMatchNaiveBitExact) {
    const std::vector<std::pair<std::size_t, std::size_t>> shapes = {
        {2, 1}, {2, 2}, {3, 2}, {4, 2}, {5, 1}, {6, 1}, {3, 3}, {4, 3}, {6, 2}};
    std::size_t checked = 0;
    for (auto [b, d] : shapes) {
        const std::size_t bits = b * d;
        for (std::uint64_t code = 0; code < (std::uint64_t{1} << bits); ++code) {
            std::vector<std::vector<int>> rows(b, std::vector<int>(d));
            for (std::size_t k = 0; k < bits; ++k) rows[k / d][k % d] = static_cast<int>((code >> k) & 1U);
            const Rational r = naive_oui(rows);
            const double expected = static_cast<double>(r.p) / static_cast<double>(r.q);
            ASSERT_EQ(value_of(ActivationMask::from_rows(rows)), expected) << "B=" << b << " d=" << d << " code=" << code;
            ++checked;
        }
    }
    EXPECT_GT(checked, 4000u);
}

TEST(OuiMetricProperty, RangeIsUnitInterval) {
    std::mt19937_64 rng(101);
    for (int trial = 0; trial < 1000; ++trial) {
        const double v = value_of(testkit::random_mask(rng));
        ASSERT_GE(v, 0.0);
        ASSERT_LE(v, 1.0);
    }
}

TEST(OuiMetricProperty, RowAndColumnPermutationInvariant) {
    std::mt19937_64 rng(202);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto m = testkit::random_mask(rng);
        std::vector<std::size_t> rp(m.batch_size()), cp(m.width());
        std::iota(rp.begin(), rp.end(), std::size_t{0});
        std::iota(cp.begin(), cp.end(), std::size_t{0});
        std::shuffle(rp.begin(), rp.end(), rng);
        std::shuffle(cp.begin(), cp.end(), rng);
        ActivationMask p(m.batch_size(), m.width());
        for (std::size_t i = 0; i < m.batch_size(); ++i)
            for (std::size_t n = 0; n < m.width(); ++n) p.set(i, n, m.bit(rp[i], cp[n]));
        ASSERT_EQ(value_of(m), value_of(p));
    }
}

TEST(OuiMetricProperty, ComplementSymmetric) {
    std::mt19937_64 rng(303);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto m = testkit::random_mask(rng);
        ASSERT_EQ(value_of(m), value_of(m.complemented()));
    }
}

TEST(OuiMetricProperty, PositiveScaleInvariant) {
    std::mt19937_64 rng(404);
    std::uniform_real_distribution<double> log_scale(-6.0, 6.0);
    std::uniform_int_distribution<std::size_t> bd(2, 16), dd(1, 12);
    for (int trial = 0; trial < 1000; ++trial) {
        const Matrix pre = testkit::random_matrix(rng, bd(rng), dd(rng));
        const double c = std::pow(10.0, log_scale(rng));
        Matrix scaled = pre;
        for (double& v : scaled.values()) v *= c;
        ASSERT_EQ(oui_from_preactivations(pre, 0, 0).value, oui_from_preactivations(scaled, 0, 0).value);
    }
}

TEST(OuiMetricProperty, ColumnAverage) {
    // OUI of a module is the mean of its single-column OUIs.
    std::mt19937_64 rng(505);
    for (int trial = 0; trial < 200; ++trial) {
        const auto m = testkit::random_mask(rng);
        double sum = 0.0;
        for (std::size_t n = 0; n < m.width(); ++n) {
            ActivationMask col(m.batch_size(), 1);
            for (std::size_t i = 0; i < m.batch_size(); ++i) col.set(i, 0, m.bit(i, n));
            sum += value_of(col);
        }
        ASSERT_NEAR(value_of(m), sum / static_cast<double>(m.width()), 1e-15);
    }
}

TEST(OuiMetric, CarriesModuleAndStep) {
    const auto v = oui_of_mask(ActivationMask::from_rows({{1}, {0}}), 3, 42);
    EXPECT_EQ(v.module_id, 3u);
    EXPECT_EQ(v.step, 42);
}
