#pragma once

#include "oui/errors.hpp"
#include "oui/network.hpp"
#include "oui/oui_metric.hpp"

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace oui {

// ---------------------------------------------------------------------------
// Smoothing
// ---------------------------------------------------------------------------

// y_0 = x_0, y_t = alpha * x_t + (1 - alpha) * y_{t-1}
class Ema {
public:
    explicit Ema(double alpha) : alpha_(alpha) {
        if (!(alpha > 0.0 && alpha <= 1.0)) throw SpecError("EMA alpha must be in (0, 1]");
    }

    double update(double x) noexcept {
        value_ = primed_ ? alpha_ * x + (1.0 - alpha_) * value_ : x;
        primed_ = true;
        return value_;
    }

    bool primed() const noexcept { return primed_; }
    double value() const noexcept { return value_; }
    double alpha() const noexcept { return alpha_; }

private:
    double alpha_;
    double value_ = 0.0;
    bool primed_ = false;
};

inline std::vector<double> smooth(std::span<const double> series, double alpha) {
    if (series.empty()) throw SpecError("smooth: empty series");
    Ema ema(alpha);
    std::vector<double> out;
    out.reserve(series.size());
    for (double x : series) out.push_back(ema.update(x));
    return out;
}

// ---------------------------------------------------------------------------
// Per-step observables
// ---------------------------------------------------------------------------

// One OUI reading per relu module, computed from that module's preactivations.
// Module ids are positions among the relu layers (0 = first hidden layer).
inline std::vector<OuiValue> record_oui(const Network& net, const ForwardTrace& trace, Step step) {
    const auto relu = net.relu_layers();
    if (relu.empty()) throw SpecError("record_oui: network has no relu layer");
    std::vector<OuiValue> out;
    out.reserve(relu.size());
    for (std::size_t m = 0; m < relu.size(); ++m)
        out.push_back(oui_from_preactivations(trace.preactivations[relu[m]], m, step));
    return out;
}

// Per-module masks on the fixed probe batch.
struct MaskSnapshot {
    Step step = 0;
    std::vector<ActivationMask> masks;
};

inline MaskSnapshot take_snapshot(const Network& net, const ForwardTrace& probe_trace, Step step) {
    MaskSnapshot snap{step, {}};
    for (std::size_t l : net.relu_layers())
        snap.masks.push_back(compute_masks(probe_trace.preactivations[l]));
    return snap;
}

// Fraction of mask bits (all modules, samples and units) that differ.
inline double mask_change_rate(const MaskSnapshot& prev, const MaskSnapshot& curr) {
    if (prev.masks.size() != curr.masks.size())
        throw ShapeError("mask_change_rate: snapshots have different module counts");
    std::uint64_t differing = 0;
    std::uint64_t total = 0;
    for (std::size_t m = 0; m < prev.masks.size(); ++m) {
        const auto& a = prev.masks[m];
        const auto& b = curr.masks[m];
        if (a.batch_size() != b.batch_size() || a.width() != b.width())
            throw ShapeError("mask_change_rate: module " + std::to_string(m) + " shape mismatch");
        const auto ab = a.bits();
        const auto bb = b.bits();
        for (std::size_t k = 0; k < ab.size(); ++k) differing += ab[k] != bb[k] ? 1 : 0;
        total += ab.size();
    }
    if (total == 0) throw ShapeError("mask_change_rate: empty snapshots");
    return static_cast<double>(differing) / static_cast<double>(total);
}

// Fraction of units never active on the batch (s_n = 0).
inline double dead_fraction(const ActivationMask& mask) {
    const auto counts = activation_counts(mask);
    const auto dead = std::count(counts.s.begin(), counts.s.end(), std::size_t{0});
    return static_cast<double>(dead) / static_cast<double>(mask.width());
}

// ---------------------------------------------------------------------------
// Trajectory log
// ---------------------------------------------------------------------------

enum class Metric {
    oui,               // per module, current OUI source (training batch by default)
    oui_smoothed,      // per module, EMA of oui
    probe_oui,         // per module, OUI on the fixed probe batch (snapshot cadence)
    dead_fraction,     // per module, probe batch
    mask_change_rate,  // network-wide, probe batch, between consecutive snapshots
    train_loss,
    val_loss,
    val_accuracy,
    weight_decay,      // per layer (all layers, including the head)
    controller_oui,    // per module, the smoothed signal the controller acted on
};

inline constexpr std::array all_metrics = {
    Metric::oui,          Metric::oui_smoothed, Metric::probe_oui,   Metric::dead_fraction,
    Metric::mask_change_rate, Metric::train_loss, Metric::val_loss, Metric::val_accuracy,
    Metric::weight_decay, Metric::controller_oui,
};

inline std::string_view to_string(Metric m) noexcept {
    switch (m) {
        case Metric::oui: return "oui";
        case Metric::oui_smoothed: return "oui_smoothed";
        case Metric::probe_oui: return "probe_oui";
        case Metric::dead_fraction: return "dead_fraction";
        case Metric::mask_change_rate: return "mask_change_rate";
        case Metric::train_loss: return "train_loss";
        case Metric::val_loss: return "val_loss";
        case Metric::val_accuracy: return "val_accuracy";
        case Metric::weight_decay: return "weight_decay";
        case Metric::controller_oui: return "controller_oui";
    }
    return "unknown";
}

inline std::optional<Metric> metric_from_string(std::string_view s) noexcept {
    for (Metric m : all_metrics)
        if (to_string(m) == s) return m;
    return std::nullopt;
}

// Metrics whose values must lie in [0, 1].
inline bool is_unit_interval(Metric m) noexcept {
    switch (m) {
        case Metric::oui:
        case Metric::oui_smoothed:
        case Metric::probe_oui:
        case Metric::dead_fraction:
        case Metric::mask_change_rate:
        case Metric::val_accuracy:
        case Metric::controller_oui: return true;
        default: return false;
    }
}

struct LogRecord {
    Step step = 0;
    Metric metric = Metric::oui;
    std::optional<ModuleId> module;  // nullopt for network-wide metrics
    double value = 0.0;

    bool operator==(const LogRecord&) const = default;
};

struct Series {
    std::vector<Step> steps;
    std::vector<double> values;

    std::size_t size() const noexcept { return steps.size(); }
    bool empty() const noexcept { return steps.empty(); }
};

// Append-only record of one run. Records arrive in nondecreasing step order;
// each (metric, module) series is strictly increasing in step.
class TrajectoryLog {
public:
    TrajectoryLog() = default;
    TrajectoryLog(std::string run_id, std::string fingerprint, Step total_steps, std::size_t module_count)
        : run_id_(std::move(run_id)), fingerprint_(std::move(fingerprint)),
          total_steps_(total_steps), module_count_(module_count) {}

    void append(const LogRecord& r) {
        if (!records_.empty() && r.step < records_.back().step)
            throw SpecError("TrajectoryLog: step " + std::to_string(r.step) + " after step " +
                            std::to_string(records_.back().step));
        const Key key{r.metric, r.module ? static_cast<std::int64_t>(*r.module) : -1};
        auto [it, inserted] = last_step_.try_emplace(key, r.step);
        if (!inserted) {
            if (r.step <= it->second)
                throw SpecError("TrajectoryLog: duplicate step " + std::to_string(r.step) + " for " +
                                std::string(to_string(r.metric)));
            it->second = r.step;
        }
        if (is_unit_interval(r.metric) && !(r.value >= 0.0 && r.value <= 1.0))
            throw SpecError("TrajectoryLog: " + std::string(to_string(r.metric)) + " value " +
                            std::to_string(r.value) + " outside [0, 1]");
        records_.push_back(r);
    }

    void append(Step step, Metric metric, std::optional<ModuleId> module, double value) {
        append(LogRecord{step, metric, module, value});
    }

    void mark_diverged(Step step, std::string message) {
        diverged_ = true;
        divergence_step_ = step;
        divergence_message_ = std::move(message);
    }

    Series series(Metric metric, std::optional<ModuleId> module = std::nullopt) const {
        Series s;
        for (const auto& r : records_)
            if (r.metric == metric && r.module == module) {
                s.steps.push_back(r.step);
                s.values.push_back(r.value);
            }
        return s;
    }

    std::optional<double> last_value(Metric metric, std::optional<ModuleId> module = std::nullopt) const {
        for (auto it = records_.rbegin(); it != records_.rend(); ++it)
            if (it->metric == metric && it->module == module) return it->value;
        return std::nullopt;
    }

    const std::vector<LogRecord>& records() const noexcept { return records_; }
    const std::string& run_id() const noexcept { return run_id_; }
    const std::string& fingerprint() const noexcept { return fingerprint_; }
    Step total_steps() const noexcept { return total_steps_; }
    std::size_t module_count() const noexcept { return module_count_; }
    bool diverged() const noexcept { return diverged_; }
    Step divergence_step() const noexcept { return divergence_step_; }
    const std::string& divergence_message() const noexcept { return divergence_message_; }

    void set_run_id(std::string id) { run_id_ = std::move(id); }

private:
    using Key = std::pair<Metric, std::int64_t>;

    std::string run_id_;
    std::string fingerprint_;
    Step total_steps_ = 0;
    std::size_t module_count_ = 0;
    bool diverged_ = false;
    Step divergence_step_ = -1;
    std::string divergence_message_;
    std::vector<LogRecord> records_;
    std::map<Key, Step> last_step_;
};

}  // namespace oui
