#pragma once

// Hyperparameter-grid screening from early OUI trajectories.
//
// A grid runs every (axis value, seed) pair. The report then asks two
// questions of the logs:
//   1. When do the seed-mean smoothed OUI curves of different configs
//      separate by more than the within-config seed noise, and stay apart?
//   2. Does the ordering of configs by early OUI (window [f/2, f] of the
//      budget) agree with their ordering by final validation accuracy?

#include "oui/config.hpp"
#include "oui/errors.hpp"
#include "oui/observers.hpp"
#include "oui/trainer.hpp"
#include "oui/trajectory_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <iomanip>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace oui {

// ---------------------------------------------------------------------------
// Grid execution
// ---------------------------------------------------------------------------

struct GridRun {
    double axis_value = 0.0;
    std::uint64_t seed = 0;
    RunConfig config;
    RunResult result;
};

inline std::string format_axis_value(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

inline RunConfig grid_point_config(const GridSpec& spec, double value, std::uint64_t seed) {
    RunConfig cfg = spec.base;
    cfg.seed = seed;
    if (spec.axis == GridAxis::weight_decay) cfg.optimizer.weight_decay = {value};
    else cfg.optimizer.learning_rate = value;
    cfg.run_id = spec.base.run_id + "__" + (spec.axis == GridAxis::weight_decay ? "wd" : "lr") + "_" +
                 format_axis_value(value) + "__s" + std::to_string(seed);
    return cfg;
}

// Runs are ordered by (axis value, seed) regardless of how many jobs execute
// them. Diverged runs come back flagged; other errors abort the grid.
inline std::vector<GridRun> run_grid(const GridSpec& spec, const TrainingData& data, std::size_t jobs = 1) {
    validate(spec);
    std::vector<double> values = spec.values;
    std::vector<std::uint64_t> seeds = spec.seeds;
    std::sort(values.begin(), values.end());
    std::sort(seeds.begin(), seeds.end());

    std::vector<GridRun> runs;
    for (double v : values)
        for (auto s : seeds) runs.push_back({v, s, grid_point_config(spec, v, s), {}});

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < runs.size(); i = next++) {
            try {
                runs[i].result = train_run(runs[i].config, data);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    jobs = std::clamp<std::size_t>(jobs, 1, runs.size());
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);
    return runs;
}

inline std::vector<GridRun> run_grid(const GridSpec& spec, std::size_t jobs = 1) {
    return run_grid(spec, prepare_data(spec.base.dataset), jobs);
}

// ---------------------------------------------------------------------------
// Early OUI
// ---------------------------------------------------------------------------

// Network-mean (or selected-module mean) of the EMA-smoothed OUI series.
// Series are aligned on the steps of the first selected module.
inline Series smoothed_oui(const TrajectoryLog& log, double alpha,
                           std::span<const ModuleId> modules = {}) {
    std::vector<ModuleId> selected(modules.begin(), modules.end());
    if (selected.empty())
        for (ModuleId m = 0; m < log.module_count(); ++m) selected.push_back(m);
    if (selected.empty()) throw SpecError("smoothed_oui: log has no modules");
    Series out;
    for (std::size_t i = 0; i < selected.size(); ++i) {
        const Series raw = log.series(Metric::oui, selected[i]);
        if (raw.empty()) return {};
        const auto sm = smooth(raw.values, alpha);
        if (i == 0) {
            out.steps = raw.steps;
            out.values.assign(raw.size(), 0.0);
        } else if (raw.steps != out.steps) {
            throw SpecError("smoothed_oui: modules have different step grids");
        }
        for (std::size_t k = 0; k < sm.size(); ++k) out.values[k] += sm[k];
    }
    for (double& v : out.values) v /= static_cast<double>(selected.size());
    return out;
}

struct EarlyWindow {
    double lo = 0.0;
    double hi = 0.0;
};

inline EarlyWindow early_window(Step total_steps, double fraction) {
    const double hi = fraction * static_cast<double>(total_steps);
    return {0.5 * hi, hi};
}

// Mean smoothed OUI over steps in [0.5 f T, f T].
inline double early_oui(const TrajectoryLog& log, double fraction, std::span<const ModuleId> modules = {},
                        double alpha = 0.1) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw SpecError("early_oui: fraction must be in (0, 1]");
    const Series s = smoothed_oui(log, alpha, modules);
    if (s.empty()) throw SpecError("early_oui: log has no OUI readings");
    const EarlyWindow w = early_window(log.total_steps(), fraction);
    if (w.hi > static_cast<double>(s.steps.back() + 1))
        throw SpecError("early_oui: window end " + std::to_string(w.hi) + " beyond logged horizon " +
                        std::to_string(s.steps.back()));
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < s.size(); ++k) {
        const auto step = static_cast<double>(s.steps[k]);
        if (step >= w.lo && step <= w.hi) {
            sum += s.values[k];
            ++n;
        }
    }
    if (n == 0) throw SpecError("early_oui: no readings inside the window");
    return sum / static_cast<double>(n);
}

// Diverged runs may stop before or inside the window: use whatever part of the
// window was logged, else the last smoothed value, else 0.
inline double early_oui_truncated(const TrajectoryLog& log, double fraction, double alpha) {
    const Series s = smoothed_oui(log, alpha);
    if (s.empty()) return 0.0;
    const EarlyWindow w = early_window(log.total_steps(), fraction);
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < s.size(); ++k) {
        const auto step = static_cast<double>(s.steps[k]);
        if (step >= w.lo && step <= w.hi) {
            sum += s.values[k];
            ++n;
        }
    }
    return n > 0 ? sum / static_cast<double>(n) : s.values.back();
}

// ---------------------------------------------------------------------------
// Rank correlation
// ---------------------------------------------------------------------------

// 1-based ranks; tied values share the average of their positions.
inline std::vector<double> average_ranks(std::span<const double> x) {
    std::vector<std::size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(x.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

// Spearman rho: Pearson correlation of average ranks. A constant input has
// no ordering to agree with and yields 0.
inline double rank_correlation(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw SpecError("rank_correlation: length mismatch");
    if (x.size() < 2) throw SpecError("rank_correlation: need at least 2 points");
    for (std::size_t i = 0; i < x.size(); ++i)
        if (std::isnan(x[i]) || std::isnan(y[i])) throw NumericError("rank_correlation: NaN input");
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    const double n = static_cast<double>(x.size());
    const double mean = (n + 1.0) / 2.0;  // mean rank is invariant under ties
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        const double dx = rx[i] - mean;
        const double dy = ry[i] - mean;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Regime classification
// ---------------------------------------------------------------------------

enum class Regime { low_band, intermediate_band, high_band };

inline const char* to_string(Regime r) noexcept {
    switch (r) {
        case Regime::low_band: return "low_band";
        case Regime::intermediate_band: return "intermediate_band";
        case Regime::high_band: return "high_band";
    }
    return "?";
}

// A value exactly on a threshold goes to the lower category.
inline Regime classify_value(double mean_oui, const RegimeBands& bands) {
    if (!(0.0 < bands.low && bands.low < bands.high && bands.high < 1.0))
        throw SpecError("classify_regime: bands must satisfy 0 < low < high < 1");
    if (mean_oui <= bands.low) return Regime::low_band;
    if (mean_oui <= bands.high) return Regime::intermediate_band;
    return Regime::high_band;
}

// Mean smoothed OUI over the last late_fraction of the logged horizon.
inline double late_oui(const TrajectoryLog& log, double late_fraction = 0.1, double alpha = 0.1) {
    const Series s = smoothed_oui(log, alpha);
    if (s.empty()) throw SpecError("late_oui: log has no OUI readings");
    const double from = static_cast<double>(s.steps.back()) - late_fraction * static_cast<double>(log.total_steps());
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < s.size(); ++k)
        if (static_cast<double>(s.steps[k]) >= from) {
            sum += s.values[k];
            ++n;
        }
    return sum / static_cast<double>(n);
}

inline Regime classify_regime(const TrajectoryLog& log, const RegimeBands& bands, double late_fraction = 0.1,
                              double alpha = 0.1) {
    return classify_value(late_oui(log, late_fraction, alpha), bands);
}

// ---------------------------------------------------------------------------
// Separation analysis
// ---------------------------------------------------------------------------

struct ConfigLogs {
    double axis_value = 0.0;
    std::vector<TrajectoryLog> logs;  // one per seed
};

struct ConfigSummary {
    double axis_value = 0.0;
    std::size_t seeds = 0;
    std::size_t diverged = 0;
    double early_oui_mean = 0.0;
    double early_oui_std = 0.0;
    double final_accuracy_mean = 0.0;
    double final_accuracy_std = 0.0;
    double late_oui_mean = 0.0;
    std::optional<Regime> regime;
};

struct PairSeparation {
    std::size_t a = 0;  // indices into RegimeReport::configs
    std::size_t b = 0;
    double early_gap = 0.0;
    double early_band = 0.0;
    bool early_separated = false;
    std::optional<Step> separation_step;
};

struct RegimeReport {
    std::string axis;
    Step budget = 0;
    double early_fraction = 0.15;
    double noise_multiplier = 2.0;
    Step persistence_steps = 0;
    bool low_confidence = false;
    std::vector<ConfigSummary> configs;  // ascending axis value
    std::vector<PairSeparation> pairs;
    std::optional<Step> separation_step;           // every pair apart at once
    std::optional<Step> extremes_separation_step;  // smallest vs largest axis value
    double rank_correlation = 0.0;                 // early OUI vs final accuracy
};

namespace detail {

inline double mean_of(std::span<const double> v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Sample standard deviation (n - 1); 0 for fewer than two values.
inline double sample_std(std::span<const double> v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

struct StepStats {
    double mean = 0.0;
    double std = 0.0;
    std::size_t n = 0;
};

// Per-step seed statistics of a config's smoothed network-mean OUI.
inline std::map<Step, StepStats> seed_stats(const ConfigLogs& cfg, double alpha) {
    std::map<Step, std::vector<double>> by_step;
    for (const auto& log : cfg.logs) {
        const Series s = smoothed_oui(log, alpha);
        for (std::size_t k = 0; k < s.size(); ++k) by_step[s.steps[k]].push_back(s.values[k]);
    }
    std::map<Step, StepStats> out;
    for (const auto& [step, vals] : by_step) out[step] = {mean_of(vals), sample_std(vals), vals.size()};
    return out;
}

// First step from which every pair in `members` stays apart for `persistence`
// steps. Only steps logged by every member are examined.
inline std::optional<Step> first_separation(const std::vector<std::map<Step, StepStats>>& stats,
                                            const std::vector<std::size_t>& members, double multiplier,
                                            double epsilon, Step persistence, bool& low_confidence) {
    std::vector<Step> steps;
    for (const auto& [step, st] : stats[members.front()]) {
        bool everywhere = true;
        for (std::size_t m : members) everywhere = everywhere && stats[m].count(step);
        if (everywhere) steps.push_back(step);
    }
    std::vector<bool> apart(steps.size(), false);
    for (std::size_t k = 0; k < steps.size(); ++k) {
        double max_std = 0.0;
        bool thin = false;
        for (std::size_t m : members) {
            const StepStats& st = stats[m].at(steps[k]);
            if (st.n < 2) thin = true;
            else max_std = std::max(max_std, st.std);
        }
        double band = multiplier * max_std;
        if (thin) {
            band = std::max(band, epsilon);
            low_confidence = true;
        }
        bool all = true;
        for (std::size_t i = 0; i < members.size() && all; ++i)
            for (std::size_t j = i + 1; j < members.size() && all; ++j)
                all = std::abs(stats[members[i]].at(steps[k]).mean - stats[members[j]].at(steps[k]).mean) > band;
        apart[k] = all;
    }
    if (steps.empty()) return std::nullopt;
    for (std::size_t k = 0; k < steps.size(); ++k) {
        if (!apart[k]) continue;
        if (steps[k] + persistence > steps.back()) return std::nullopt;
        std::size_t j = k;
        while (j < steps.size() && steps[j] <= steps[k] + persistence && apart[j]) ++j;
        if (j == steps.size() || steps[j] > steps[k] + persistence) return steps[k];
    }
    return std::nullopt;
}

}  // namespace detail

inline RegimeReport separation_analysis(std::vector<ConfigLogs> groups, const ScreeningSettings& settings,
                                        GridAxis axis = GridAxis::weight_decay) {
    validate(settings);
    if (groups.size() < 2) throw SpecError("separation_analysis: need at least 2 configs");
    for (const auto& g : groups)
        if (g.logs.empty()) throw SpecError("separation_analysis: config without logs");
    std::stable_sort(groups.begin(), groups.end(),
                     [](const ConfigLogs& a, const ConfigLogs& b) { return a.axis_value < b.axis_value; });

    RegimeReport report;
    report.axis = to_string(axis);
    report.budget = groups.front().logs.front().total_steps();
    report.early_fraction = settings.early_fraction;
    report.noise_multiplier = settings.noise_multiplier;
    report.persistence_steps =
        static_cast<Step>(std::ceil(settings.persistence_fraction * static_cast<double>(report.budget)));

    std::vector<std::vector<double>> early(groups.size());
    for (std::size_t c = 0; c < groups.size(); ++c) {
        ConfigSummary sum;
        sum.axis_value = groups[c].axis_value;
        sum.seeds = groups[c].logs.size();
        std::vector<double> acc, late;
        for (const auto& log : groups[c].logs) {
            if (log.diverged()) {
                ++sum.diverged;
                early[c].push_back(early_oui_truncated(log, settings.early_fraction, settings.smoothing_alpha));
                acc.push_back(0.0);
            } else {
                early[c].push_back(early_oui(log, settings.early_fraction, {}, settings.smoothing_alpha));
                acc.push_back(log.last_value(Metric::val_accuracy).value_or(0.0));
            }
            const Series s = smoothed_oui(log, settings.smoothing_alpha);
            if (!s.empty()) late.push_back(late_oui(log, settings.late_fraction, settings.smoothing_alpha));
        }
        sum.early_oui_mean = detail::mean_of(early[c]);
        sum.early_oui_std = detail::sample_std(early[c]);
        sum.final_accuracy_mean = detail::mean_of(acc);
        sum.final_accuracy_std = detail::sample_std(acc);
        sum.late_oui_mean = detail::mean_of(late);
        if (settings.bands) sum.regime = classify_value(sum.late_oui_mean, *settings.bands);
        if (sum.seeds < 2) report.low_confidence = true;
        report.configs.push_back(sum);
    }

    std::vector<std::map<Step, detail::StepStats>> stats;
    for (const auto& g : groups) stats.push_back(detail::seed_stats(g, settings.smoothing_alpha));

    std::vector<std::size_t> everyone(groups.size());
    std::iota(everyone.begin(), everyone.end(), std::size_t{0});
    report.separation_step = detail::first_separation(stats, everyone, settings.noise_multiplier, settings.epsilon,
                                                      report.persistence_steps, report.low_confidence);

    for (std::size_t a = 0; a < groups.size(); ++a) {
        for (std::size_t b = a + 1; b < groups.size(); ++b) {
            PairSeparation p;
            p.a = a;
            p.b = b;
            const auto& ca = report.configs[a];
            const auto& cb = report.configs[b];
            p.early_gap = std::abs(ca.early_oui_mean - cb.early_oui_mean);
            p.early_band = settings.noise_multiplier * std::max(ca.early_oui_std, cb.early_oui_std);
            if (ca.seeds < 2 || cb.seeds < 2) p.early_band = std::max(p.early_band, settings.epsilon);
            p.early_separated = p.early_gap > p.early_band;
            p.separation_step = detail::first_separation(stats, {a, b}, settings.noise_multiplier, settings.epsilon,
                                                         report.persistence_steps, report.low_confidence);
            if (a == 0 && b + 1 == groups.size()) report.extremes_separation_step = p.separation_step;
            report.pairs.push_back(p);
        }
    }

    std::vector<double> early_means, acc_means;
    for (const auto& c : report.configs) {
        early_means.push_back(c.early_oui_mean);
        acc_means.push_back(c.final_accuracy_mean);
    }
    report.rank_correlation = rank_correlation(early_means, acc_means);
    return report;
}

inline std::vector<ConfigLogs> group_by_config(const std::vector<GridRun>& runs) {
    std::vector<ConfigLogs> groups;
    for (const auto& r : runs) {
        auto it = std::find_if(groups.begin(), groups.end(),
                               [&](const ConfigLogs& g) { return g.axis_value == r.axis_value; });
        if (it == groups.end()) {
            groups.push_back({r.axis_value, {}});
            it = std::prev(groups.end());
        }
        it->logs.push_back(r.result.log);
    }
    return groups;
}

// ---------------------------------------------------------------------------
// Report output
// ---------------------------------------------------------------------------

inline json to_json(const RegimeReport& r) {
    auto opt_step = [](const std::optional<Step>& s) { return s ? json(*s) : json(nullptr); };
    json j;
    j["schema_version"] = 1;
    j["axis"] = r.axis;
    j["budget"] = r.budget;
    j["early_fraction"] = r.early_fraction;
    j["noise_multiplier"] = r.noise_multiplier;
    j["persistence_steps"] = r.persistence_steps;
    j["low_confidence"] = r.low_confidence;
    j["separated"] = r.separation_step.has_value();
    j["separation_step"] = opt_step(r.separation_step);
    j["extremes_separation_step"] = opt_step(r.extremes_separation_step);
    j["rank_correlation_early_oui_vs_final_accuracy"] = r.rank_correlation;
    j["configs"] = json::array();
    for (const auto& c : r.configs) {
        json cj{{"axis_value", c.axis_value},
                {"seeds", c.seeds},
                {"diverged", c.diverged},
                {"early_oui_mean", c.early_oui_mean},
                {"early_oui_std", c.early_oui_std},
                {"final_accuracy_mean", c.final_accuracy_mean},
                {"final_accuracy_std", c.final_accuracy_std},
                {"late_oui_mean", c.late_oui_mean}};
        cj["regime"] = c.regime ? json(to_string(*c.regime)) : json(nullptr);
        j["configs"].push_back(cj);
    }
    j["pairs"] = json::array();
    for (const auto& p : r.pairs)
        j["pairs"].push_back({{"a", r.configs[p.a].axis_value},
                              {"b", r.configs[p.b].axis_value},
                              {"early_gap", p.early_gap},
                              {"early_band", p.early_band},
                              {"early_separated", p.early_separated},
                              {"separation_step", opt_step(p.separation_step)}});
    return j;
}

inline std::string report_table(const RegimeReport& r) {
    std::ostringstream os;
    os << "axis: " << r.axis << "   budget: " << r.budget << " steps   early window: ["
       << 0.5 * r.early_fraction * static_cast<double>(r.budget) << ", "
       << r.early_fraction * static_cast<double>(r.budget) << "]\n\n";
    os << std::left << std::setw(12) << "value" << std::setw(7) << "seeds" << std::setw(9) << "diverged"
       << std::setw(20) << "early OUI" << std::setw(20) << "final val acc" << std::setw(11) << "late OUI"
       << "regime\n";
    os << std::fixed;
    for (const auto& c : r.configs) {
        std::ostringstream e, a;
        e << std::fixed << std::setprecision(4) << c.early_oui_mean << " +- " << c.early_oui_std;
        a << std::fixed << std::setprecision(4) << c.final_accuracy_mean << " +- " << c.final_accuracy_std;
        os << std::setw(12) << format_axis_value(c.axis_value) << std::setw(7) << c.seeds << std::setw(9)
           << c.diverged << std::setw(20) << e.str() << std::setw(20) << a.str() << std::setw(11)
           << std::setprecision(4) << c.late_oui_mean << (c.regime ? to_string(*c.regime) : "-") << "\n";
    }
    auto step_text = [](const std::optional<Step>& s) { return s ? std::to_string(*s) : std::string("not separated"); };
    os << "\nseparation step (all configs): " << step_text(r.separation_step) << "\n";
    os << "separation step (extremes):    " << step_text(r.extremes_separation_step) << "\n";
    os << "spearman(early OUI, final acc): " << std::setprecision(4) << r.rank_correlation << "\n";
    if (r.low_confidence) os << "low confidence: at least one config has a single seed\n";
    return os.str();
}

}  // namespace oui
