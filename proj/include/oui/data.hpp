#pragma once

#include "oui/errors.hpp"
#include "oui/matrix.hpp"
#include "oui/oui_metric.hpp"
#include "oui/random.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace oui {

struct Dataset {
    Matrix features;
    std::vector<int> labels;
    int num_classes = 0;

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t dim() const noexcept { return features.cols(); }

    bool operator==(const Dataset&) const = default;
};

inline void validate(const Dataset& ds) {
    if (ds.size() == 0) throw SpecError("dataset is empty");
    if (ds.features.rows() != ds.labels.size())
        throw ShapeError("dataset: " + std::to_string(ds.features.rows()) + " feature rows but " +
                         std::to_string(ds.labels.size()) + " labels");
    if (ds.num_classes < 1) throw SpecError("dataset: num_classes must be >= 1");
    for (std::size_t i = 0; i < ds.labels.size(); ++i)
        if (ds.labels[i] < 0 || ds.labels[i] >= ds.num_classes)
            throw SpecError("dataset: label " + std::to_string(ds.labels[i]) + " at row " +
                            std::to_string(i) + " outside [0, " +
                            std::to_string(ds.num_classes) + ")");
    if (!ds.features.all_finite()) throw NumericError("dataset: non-finite feature value");
}

inline Dataset subset(const Dataset& ds, std::span<const std::size_t> indices) {
    Dataset out{Matrix(indices.size(), ds.dim()), std::vector<int>(indices.size()), ds.num_classes};
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const auto src = ds.features.row(indices[i]);
        std::copy(src.begin(), src.end(), out.features.row(i).begin());
        out.labels[i] = ds.labels[indices[i]];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic generators
// ---------------------------------------------------------------------------

// k Gaussian classes around centers drawn uniformly from [-1, 1]^dim.
// Rows are grouped by class.
inline Dataset make_blobs(int k, std::size_t dim, std::size_t n_per_class, double spread,
                          std::uint64_t seed) {
    if (k < 2) throw SpecError("make_blobs: need k >= 2 classes");
    if (dim < 1) throw SpecError("make_blobs: need dim >= 1");
    if (n_per_class < 1) throw SpecError("make_blobs: need n_per_class >= 1");
    if (!(spread >= 0.0) || !std::isfinite(spread))
        throw SpecError("make_blobs: spread must be finite and nonnegative");

    Rng rng(seed);
    std::uniform_real_distribution<double> center_dist(-1.0, 1.0);
    std::normal_distribution<double> noise(0.0, 1.0);

    Matrix centers(static_cast<std::size_t>(k), dim);
    for (double& v : centers.values()) v = center_dist(rng);

    const std::size_t n = static_cast<std::size_t>(k) * n_per_class;
    Dataset ds{Matrix(n, dim), std::vector<int>(n), k};
    std::size_t row = 0;
    for (int c = 0; c < k; ++c) {
        for (std::size_t i = 0; i < n_per_class; ++i, ++row) {
            for (std::size_t j = 0; j < dim; ++j)
                ds.features(row, j) = centers(static_cast<std::size_t>(c), j) + spread * noise(rng);
            ds.labels[row] = c;
        }
    }
    return ds;
}

// Two interleaved Archimedean spirals r = theta / (2 pi), theta in
// (0, 2 pi turns]. Class 1 is class 0 rotated by pi. Sample positions along
// the arm follow sqrt spacing so density per unit area stays roughly even.
inline Dataset make_spirals(double turns, std::size_t n_per_class, double noise,
                            std::uint64_t seed) {
    if (!(turns > 0.0) || !std::isfinite(turns)) throw SpecError("make_spirals: turns must be > 0");
    if (n_per_class < 1) throw SpecError("make_spirals: need n_per_class >= 1");
    if (!(noise >= 0.0) || !std::isfinite(noise))
        throw SpecError("make_spirals: noise must be finite and nonnegative");

    Rng rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double two_pi = 2.0 * std::numbers::pi;

    Dataset ds{Matrix(2 * n_per_class, 2), std::vector<int>(2 * n_per_class), 2};
    std::size_t row = 0;
    for (int c = 0; c < 2; ++c) {
        for (std::size_t i = 0; i < n_per_class; ++i, ++row) {
            const double t = std::sqrt((static_cast<double>(i) + 0.5) / static_cast<double>(n_per_class));
            const double theta = two_pi * turns * t;
            const double r = theta / two_pi;
            const double phase = theta + (c == 1 ? std::numbers::pi : 0.0);
            ds.features(row, 0) = r * std::cos(phase) + noise * gauss(rng);
            ds.features(row, 1) = r * std::sin(phase) + noise * gauss(rng);
            ds.labels[row] = c;
        }
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Standardization
// ---------------------------------------------------------------------------

// Per-column z-score. Columns with zero variance are only centered.
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> scale;

    static Standardizer fit(const Matrix& x) {
        Standardizer s{std::vector<double>(x.cols(), 0.0), std::vector<double>(x.cols(), 1.0)};
        if (x.rows() == 0) return s;
        const double n = static_cast<double>(x.rows());
        for (std::size_t i = 0; i < x.rows(); ++i)
            for (std::size_t j = 0; j < x.cols(); ++j) s.mean[j] += x(i, j);
        for (double& m : s.mean) m /= n;
        std::vector<double> var(x.cols(), 0.0);
        for (std::size_t i = 0; i < x.rows(); ++i)
            for (std::size_t j = 0; j < x.cols(); ++j) {
                const double d = x(i, j) - s.mean[j];
                var[j] += d * d;
            }
        for (std::size_t j = 0; j < x.cols(); ++j) {
            const double sd = std::sqrt(var[j] / n);
            s.scale[j] = sd > 0.0 ? sd : 1.0;
        }
        return s;
    }

    void apply(Matrix& x) const {
        if (x.cols() != mean.size()) throw ShapeError("Standardizer: column count mismatch");
        for (std::size_t i = 0; i < x.rows(); ++i)
            for (std::size_t j = 0; j < x.cols(); ++j) x(i, j) = (x(i, j) - mean[j]) / scale[j];
    }
};

// ---------------------------------------------------------------------------
// Delimited text loader
// ---------------------------------------------------------------------------

// Comma-separated rows; one integer label column, every other column is a
// numeric feature. Blank lines are skipped.
struct DelimitedSchema {
    std::size_t label_column = 0;
    bool has_header = false;
    char delimiter = ',';
    std::optional<int> num_classes;  // inferred as max label + 1 when absent
    bool standardize = true;         // z-score with this file's statistics
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

inline std::vector<std::string_view> split_fields(std::string_view line, char delim) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(delim, start);
        out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::optional<double> parse_double(std::string_view s) {
    if (s.empty()) return std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

inline std::optional<long long> parse_int(std::string_view s) {
    if (s.empty()) return std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

}  // namespace detail

inline Dataset load_delimited(const std::string& path, const DelimitedSchema& schema) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset file '" + path + "'");

    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    std::vector<std::size_t> label_lines;
    std::size_t width = 0;
    std::size_t line_no = 0;
    bool header_pending = schema.has_header;
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        if (header_pending) {
            header_pending = false;
            continue;
        }
        const auto fields = detail::split_fields(line, schema.delimiter);
        if (schema.label_column >= fields.size())
            throw ParseError(path, line_no, "label column " + std::to_string(schema.label_column) +
                                                " missing (row has " +
                                                std::to_string(fields.size()) + " fields)");
        if (width == 0) {
            width = fields.size();
            if (width < 2) throw ParseError(path, line_no, "row needs a label and >= 1 feature");
        } else if (fields.size() != width) {
            throw ParseError(path, line_no, "expected " + std::to_string(width) + " fields, got " +
                                                std::to_string(fields.size()));
        }
        std::vector<double> feats;
        feats.reserve(width - 1);
        for (std::size_t j = 0; j < fields.size(); ++j) {
            if (j == schema.label_column) {
                const auto label = detail::parse_int(fields[j]);
                if (!label)
                    throw ParseError(path, line_no, "non-integer label '" + std::string(fields[j]) + "'");
                if (*label < 0 || (schema.num_classes && *label >= *schema.num_classes))
                    throw ParseError(path, line_no, "label " + std::to_string(*label) +
                                                        " outside [0, C)");
                labels.push_back(static_cast<int>(*label));
                label_lines.push_back(line_no);
                continue;
            }
            const auto v = detail::parse_double(fields[j]);
            if (!v || !std::isfinite(*v))
                throw ParseError(path, line_no, "non-numeric feature '" + std::string(fields[j]) +
                                                    "' in column " + std::to_string(j));
            feats.push_back(*v);
        }
        rows.push_back(std::move(feats));
    }
    if (rows.empty()) throw IoError("dataset file '" + path + "' contains no data rows");

    int classes = schema.num_classes.value_or(0);
    if (!schema.num_classes)
        classes = *std::max_element(labels.begin(), labels.end()) + 1;

    Dataset ds{Matrix(rows.size(), width - 1), std::move(labels), classes};
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy(rows[i].begin(), rows[i].end(), ds.features.row(i).begin());
    if (schema.standardize) Standardizer::fit(ds.features).apply(ds.features);
    return ds;
}

// ---------------------------------------------------------------------------
// Splitting and batching
// ---------------------------------------------------------------------------

struct TrainValSplit {
    Dataset train;
    Dataset val;
};

// Seeded shuffle, then the first round(val_fraction * n) rows go to validation.
inline TrainValSplit split_train_val(const Dataset& ds, double val_fraction, std::uint64_t seed) {
    if (!(val_fraction > 0.0 && val_fraction < 1.0))
        throw SpecError("split_train_val: val_fraction must be in (0, 1)");
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(ds.size())));
    if (n_val < 1 || n_val >= ds.size()) throw SpecError("split_train_val: split leaves an empty side");
    const std::span<const std::size_t> all(order);
    return {subset(ds, all.subspan(n_val)), subset(ds, all.first(n_val))};
}

struct Batch {
    Matrix features;
    std::vector<int> labels;
};

// One epoch of batches under a seeded permutation. A trailing short batch is
// kept when it still has >= 2 rows and dropped otherwise.
inline std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size,
                                                           std::uint64_t epoch_seed) {
    if (batch_size < min_batch_size)
        throw InvalidBatchError("batch size must be >= 2, got " + std::to_string(batch_size));
    if (batch_size > n)
        throw InvalidBatchError("batch size " + std::to_string(batch_size) +
                                " exceeds dataset size " + std::to_string(n));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(epoch_seed);
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<std::vector<std::size_t>> out;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t len = std::min(batch_size, n - start);
        if (len < min_batch_size) break;
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(start + len));
    }
    return out;
}

inline std::vector<Batch> batch_iter(const Dataset& ds, std::size_t batch_size,
                                     std::uint64_t epoch_seed) {
    std::vector<Batch> out;
    for (const auto& idx : batch_indices(ds.size(), batch_size, epoch_seed)) {
        Dataset part = subset(ds, idx);
        out.push_back({std::move(part.features), std::move(part.labels)});
    }
    return out;
}

// Endless stream of batches; epoch e is permuted with derive_seed(seed, e).
class BatchStream {
public:
    BatchStream(const Dataset& ds, std::size_t batch_size, std::uint64_t seed)
        : ds_(&ds), batch_size_(batch_size), seed_(seed) {
        batch_indices(ds.size(), batch_size, seed);  // validates sizes up front
    }

    Batch next() {
        if (pos_ >= epoch_.size()) {
            epoch_ = batch_indices(ds_->size(), batch_size_, derive_seed(seed_, epoch_count_++));
            pos_ = 0;
        }
        Dataset part = subset(*ds_, epoch_[pos_++]);
        return {std::move(part.features), std::move(part.labels)};
    }

    std::uint64_t epochs_started() const noexcept { return epoch_count_; }

private:
    const Dataset* ds_;
    std::size_t batch_size_;
    std::uint64_t seed_;
    std::uint64_t epoch_count_ = 0;
    std::vector<std::vector<std::size_t>> epoch_;
    std::size_t pos_ = 0;
};

}  // namespace oui
