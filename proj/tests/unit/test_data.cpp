#include "test_helpers.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>

using namespace oui;

namespace {

const std::string fixtures = OUI_FIXTURE_DIR;

// Full-batch gradient-descent logistic regression, used only as a yardstick.
double logistic_regression_accuracy(const Dataset& ds) {
    double w0 = 0, w1 = 0, b = 0;
    const double n = static_cast<double>(ds.size());
    for (int it = 0; it < 3000; ++it) {
        double g0 = 0, g1 = 0, gb = 0;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            const double z = w0 * ds.features(i, 0) + w1 * ds.features(i, 1) + b;
            const double p = 1.0 / (1.0 + std::exp(-z));
            const double e = p - ds.labels[i];
            g0 += e * ds.features(i, 0);
            g1 += e * ds.features(i, 1);
            gb += e;
        }
        w0 -= 0.5 * g0 / n;
        w1 -= 0.5 * g1 / n;
        b -= 0.5 * gb / n;
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const double z = w0 * ds.features(i, 0) + w1 * ds.features(i, 1) + b;
        correct += ((z > 0) ? 1 : 0) == ds.labels[i] ? 1 : 0;
    }
    return static_cast<double>(correct) / n;
}

}  // namespace

TEST(Blobs, Deterministic) {
    EXPECT_EQ(make_blobs(3, 4, 20, 0.5, 9), make_blobs(3, 4, 20, 0.5, 9));
    EXPECT_NE(make_blobs(3, 4, 20, 0.5, 9), make_blobs(3, 4, 20, 0.5, 10));
}

TEST(Blobs, Balanced) {
    const auto ds = make_blobs(2, 3, 50, 0.3, 1);
    EXPECT_EQ(ds.size(), 100u);
    EXPECT_EQ(std::count(ds.labels.begin(), ds.labels.end(), 0), 50);
    EXPECT_EQ(std::count(ds.labels.begin(), ds.labels.end(), 1), 50);
}

TEST(Blobs, NearestCentroidPerfectAtTinySpread) {
    const int k = 5;
    const auto ds = make_blobs(k, 3, 40, 1e-9, 21);
    Matrix centroid(k, 3);
    std::vector<double> count(k, 0.0);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (std::size_t j = 0; j < 3; ++j) centroid(ds.labels[i], j) += ds.features(i, j);
        count[ds.labels[i]] += 1;
    }
    for (int c = 0; c < k; ++c)
        for (std::size_t j = 0; j < 3; ++j) centroid(c, j) /= count[c];
    std::size_t correct = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) {
            double d = 0;
            for (std::size_t j = 0; j < 3; ++j) d += std::pow(ds.features(i, j) - centroid(c, j), 2);
            if (d < best_d) best_d = d, best = c;
        }
        correct += best == ds.labels[i] ? 1 : 0;
    }
    EXPECT_EQ(correct, ds.size());
}

TEST(Blobs, InvalidSizes) {
    EXPECT_THROW(make_blobs(1, 2, 10, 0.1, 1), SpecError);
    EXPECT_THROW(make_blobs(2, 0, 10, 0.1, 1), SpecError);
}

TEST(Spirals, Deterministic) {
    EXPECT_EQ(make_spirals(1.5, 100, 0.15, 4), make_spirals(1.5, 100, 0.15, 4));
}

TEST(Spirals, NoiselessClassesDisjoint) {
    const auto ds = make_spirals(2.0, 200, 0.0, 1);
    std::set<std::pair<double, double>> c0, c1;
    for (std::size_t i = 0; i < ds.size(); ++i)
        (ds.labels[i] == 0 ? c0 : c1).insert({ds.features(i, 0), ds.features(i, 1)});
    for (const auto& p : c0) EXPECT_FALSE(c1.count(p));
}

TEST(Spirals, NotLinearlySeparable) {
    for (double turns : {1.5, 2.0, 3.0}) {
        const auto ds = make_spirals(turns, 500, 0.15, 6);
        EXPECT_LT(logistic_regression_accuracy(ds), 0.75) << "turns=" << turns;
    }
}

TEST(Loader, ThreeRowFile) {
    DelimitedSchema schema{2, true, ',', std::nullopt, false};
    const auto ds = load_delimited(fixtures + "/three_rows.csv", schema);
    EXPECT_EQ(ds.size(), 3u);
    EXPECT_EQ(ds.dim(), 2u);
    EXPECT_EQ(ds.num_classes, 2);
    EXPECT_EQ(ds.features(1, 0), -1.5);
    EXPECT_EQ(ds.labels, (std::vector<int>{0, 1, 1}));
}

TEST(Loader, StandardizesWhenAsked) {
    DelimitedSchema schema{2, true, ',', std::nullopt, true};
    const auto ds = load_delimited(fixtures + "/three_rows.csv", schema);
    double mean = 0;
    for (std::size_t i = 0; i < 3; ++i) mean += ds.features(i, 0);
    EXPECT_NEAR(mean, 0.0, 1e-12);
}

TEST(Loader, NonNumericFeatureNamesLine) {
    DelimitedSchema schema{2, true, ',', std::nullopt, false};
    try {
        load_delimited(fixtures + "/bad_feature.csv", schema);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 3u);
        EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos) << e.what();
    }
}

TEST(Loader, HeaderOnlyIsEmpty) {
    DelimitedSchema schema{2, true, ',', std::nullopt, false};
    EXPECT_THROW(load_delimited(fixtures + "/header_only.csv", schema), IoError);
}

TEST(Loader, MissingFile) {
    EXPECT_THROW(load_delimited(fixtures + "/does_not_exist.csv", {}), IoError);
}

TEST(Loader, LabelOutOfRange) {
    DelimitedSchema schema{1, false, ',', 3, false};
    EXPECT_THROW(load_delimited(fixtures + "/label_out_of_range.csv", schema), ParseError);
}

TEST(Batching, ShortTailKeptWhenAtLeastTwo) {
    std::mt19937_64 rng(1);
    Dataset ds{testkit::random_matrix(rng, 10, 2), std::vector<int>(10, 0), 1};
    std::vector<std::size_t> sizes;
    for (const auto& b : batch_iter(ds, 4, 5)) sizes.push_back(b.labels.size());
    EXPECT_EQ(sizes, (std::vector<std::size_t>{4, 4, 2}));
}

TEST(Batching, TailOfOneDropped) {
    const auto idx = batch_indices(9, 4, 5);
    ASSERT_EQ(idx.size(), 2u);
    for (const auto& b : idx) EXPECT_EQ(b.size(), 4u);
}

TEST(Batching, SameSeedSameOrder) {
    EXPECT_EQ(batch_indices(50, 8, 3), batch_indices(50, 8, 3));
    EXPECT_NE(batch_indices(50, 8, 3), batch_indices(50, 8, 4));
}

TEST(Batching, EveryBatchHasAtLeastTwoRows) {
    for (std::size_t n = 2; n < 40; ++n)
        for (std::size_t b = 2; b <= n; ++b)
            for (const auto& batch : batch_indices(n, b, n * 31 + b)) ASSERT_GE(batch.size(), 2u);
}

TEST(Batching, Errors) {
    EXPECT_THROW(batch_indices(3, 4, 0), InvalidBatchError);
    EXPECT_THROW(batch_indices(10, 1, 0), InvalidBatchError);
}

TEST(Split, PartitionsRows) {
    const auto ds = make_blobs(2, 2, 50, 0.1, 3);
    const auto [train, val] = split_train_val(ds, 0.2, 7);
    EXPECT_EQ(val.size(), 20u);
    EXPECT_EQ(train.size(), 80u);
}

TEST(PrepareData, DelimitedUsesTrainingStatistics) {
    DatasetSpec spec;
    spec.kind = DatasetKind::delimited;
    spec.path = fixtures + "/three_rows.csv";
    spec.val_path = fixtures + "/three_rows.csv";
    spec.label_column = 2;
    spec.has_header = true;
    const auto data = prepare_data(spec);
    EXPECT_EQ(data.train.size(), 3u);
    double mean = 0;
    for (std::size_t i = 0; i < 3; ++i) mean += data.train.features(i, 1);
    EXPECT_NEAR(mean, 0.0, 1e-12);
    // same rows, same training statistics
    EXPECT_EQ(data.val.features, data.train.features);
}
