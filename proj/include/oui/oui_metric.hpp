#pragma once

// Batch-based Overfitting-Underfitting Indicator.
//
// For a module with d units evaluated on a batch of B samples:
//   m[b][n] = 1{ a[b][n] > 0 }            activation mask
//   s[n]    = sum_b m[b][n]               activation count
//   u[n]    = min(s[n], B - s[n])         minority count
//   OUI     = (1/d) * sum_n u[n] / floor(B/2)
//
// Everything up to the final division is integer arithmetic, so the value is
// the correctly rounded double of the exact rational sum(u) / (d * floor(B/2)).

#include "oui/errors.hpp"
#include "oui/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace oui {

using Step = std::int64_t;
using ModuleId = std::size_t;

inline constexpr std::size_t min_batch_size = 2;

class ActivationMask {
public:
    ActivationMask(std::size_t batch_size, std::size_t width)
        : batch_size_(batch_size), width_(width) {
        if (batch_size < min_batch_size)
            throw InvalidBatchError("activation mask needs B >= 2, got B=" +
                                    std::to_string(batch_size));
        if (width < 1) throw ShapeError("activation mask needs at least one unit");
        bits_.assign(batch_size * width, 0);
    }

    static ActivationMask from_rows(const std::vector<std::vector<int>>& rows) {
        const std::size_t b = rows.size();
        const std::size_t d = b == 0 ? 0 : rows.front().size();
        ActivationMask m(b, d);
        for (std::size_t i = 0; i < b; ++i) {
            if (rows[i].size() != d) throw ShapeError("ActivationMask::from_rows: ragged rows");
            for (std::size_t n = 0; n < d; ++n) {
                if (rows[i][n] != 0 && rows[i][n] != 1)
                    throw ShapeError("ActivationMask::from_rows: entries must be 0 or 1");
                m.set(i, n, rows[i][n] == 1);
            }
        }
        return m;
    }

    std::size_t batch_size() const noexcept { return batch_size_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t bit_count() const noexcept { return bits_.size(); }

    bool bit(std::size_t b, std::size_t n) const noexcept { return bits_[b * width_ + n] != 0; }
    void set(std::size_t b, std::size_t n, bool on) noexcept {
        bits_[b * width_ + n] = on ? 1 : 0;
    }

    std::span<const std::uint8_t> bits() const noexcept { return bits_; }

    ActivationMask complemented() const {
        ActivationMask out = *this;
        for (auto& v : out.bits_) v = v ? 0 : 1;
        return out;
    }

    bool operator==(const ActivationMask&) const = default;

private:
    std::size_t batch_size_;
    std::size_t width_;
    std::vector<std::uint8_t> bits_;
};

struct ActivationCounts {
    std::vector<std::size_t> s;
    std::size_t batch_size = 0;
};

struct MinorityCounts {
    std::vector<std::size_t> u;
    std::size_t batch_size = 0;
};

struct OuiValue {
    double value = 0.0;
    ModuleId module_id = 0;
    Step step = 0;
};

inline ActivationMask compute_masks(const Matrix& preactivations) {
    const std::size_t b = preactivations.rows();
    const std::size_t d = preactivations.cols();
    if (b < min_batch_size)
        throw InvalidBatchError("compute_masks: batch size must be >= 2, got " + std::to_string(b));
    ActivationMask mask(b, d);
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t n = 0; n < d; ++n) {
            const double a = preactivations(i, n);
            if (!std::isfinite(a))
                throw NumericError("compute_masks: non-finite preactivation at (row " +
                                   std::to_string(i) + ", column " + std::to_string(n) + ")");
            mask.set(i, n, a > 0.0);
        }
    }
    return mask;
}

inline ActivationCounts activation_counts(const ActivationMask& mask) {
    ActivationCounts counts{std::vector<std::size_t>(mask.width(), 0), mask.batch_size()};
    for (std::size_t b = 0; b < mask.batch_size(); ++b)
        for (std::size_t n = 0; n < mask.width(); ++n)
            counts.s[n] += mask.bit(b, n) ? 1 : 0;
    return counts;
}

inline MinorityCounts minority_counts(const ActivationCounts& counts) {
    MinorityCounts out{std::vector<std::size_t>(counts.s.size(), 0), counts.batch_size};
    for (std::size_t n = 0; n < counts.s.size(); ++n) {
        const std::size_t s = counts.s[n];
        if (s > counts.batch_size)
            throw ShapeError("minority_counts: count " + std::to_string(s) + " exceeds batch size");
        out.u[n] = std::min(s, counts.batch_size - s);
    }
    return out;
}

inline OuiValue oui_of_mask(const ActivationMask& mask, ModuleId module_id, Step step) {
    if (mask.batch_size() < min_batch_size)
        throw InvalidBatchError("oui_of_mask: batch size must be >= 2");
    const MinorityCounts minority = minority_counts(activation_counts(mask));
    std::uint64_t total = 0;
    for (std::size_t u : minority.u) total += u;
    const std::uint64_t denom =
        static_cast<std::uint64_t>(mask.width()) * (mask.batch_size() / 2);
    return {static_cast<double>(total) / static_cast<double>(denom), module_id, step};
}

inline OuiValue oui_from_preactivations(const Matrix& preactivations, ModuleId module_id,
                                        Step step) {
    return oui_of_mask(compute_masks(preactivations), module_id, step);
}

}  // namespace oui
