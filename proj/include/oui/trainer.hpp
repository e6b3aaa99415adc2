#pragma once

#include "oui/config.hpp"
#include "oui/data.hpp"
#include "oui/errors.hpp"
#include "oui/network.hpp"
#include "oui/observers.hpp"
#include "oui/random.hpp"
#include "oui/wd_controller.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace oui {

struct TrainingData {
    Dataset train;
    Dataset val;
};

inline TrainingData prepare_data(const DatasetSpec& spec) {
    switch (spec.kind) {
        case DatasetKind::spirals: {
            auto [train, val] = split_train_val(make_spirals(spec.turns, spec.n_per_class, spec.noise, spec.seed),
                                                spec.val_fraction, derive_seed(spec.seed, seed_streams::split));
            return {std::move(train), std::move(val)};
        }
        case DatasetKind::blobs: {
            auto [train, val] =
                split_train_val(make_blobs(spec.classes, spec.dim, spec.n_per_class, spec.spread, spec.seed),
                                spec.val_fraction, derive_seed(spec.seed, seed_streams::split));
            return {std::move(train), std::move(val)};
        }
        case DatasetKind::delimited: {
            DelimitedSchema schema{spec.label_column, spec.has_header, ',', spec.num_classes, false};
            Dataset all = load_delimited(spec.path, schema);
            TrainingData data;
            if (spec.val_path.empty()) {
                auto [train, val] = split_train_val(all, spec.val_fraction, derive_seed(spec.seed, seed_streams::split));
                data = {std::move(train), std::move(val)};
            } else {
                Dataset val = load_delimited(spec.val_path, schema);
                const int classes = std::max(all.num_classes, val.num_classes);
                all.num_classes = classes;
                val.num_classes = classes;
                data = {std::move(all), std::move(val)};
            }
            // z-score with training statistics only
            if (spec.standardize) {
                const auto stats = Standardizer::fit(data.train.features);
                stats.apply(data.train.features);
                stats.apply(data.val.features);
            }
            return data;
        }
    }
    throw SpecError("prepare_data: unknown dataset kind");
}

struct RunResult {
    TrajectoryLog log;
    Network network;
    Step steps_completed = 0;
    std::vector<double> final_weight_decay;

    bool diverged() const noexcept { return log.diverged(); }
};

// Fixed probe batch: the first probe_size rows of a seeded permutation of the
// training split.
inline Matrix make_probe_batch(const Dataset& train, std::size_t probe_size, std::uint64_t run_seed) {
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(run_seed, seed_streams::probe));
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(std::min(probe_size, order.size()));
    if (order.size() < min_batch_size) throw InvalidBatchError("probe batch needs >= 2 samples");
    return subset(train, order).features;
}

// One deterministic training run. Observations at step t describe the
// parameters before update t; step T holds the final probe snapshot and
// validation metrics. When cfg.controller is set, every relu layer's decay
// is driven by that layer's smoothed OUI.
inline RunResult train_run(const RunConfig& cfg, const TrainingData& data) {
    validate(cfg);
    validate(data.train);
    validate(data.val);
    if (cfg.widths.front() != data.train.dim())
        throw ConfigError("widths[0] = " + std::to_string(cfg.widths.front()) + " but dataset has " +
                          std::to_string(data.train.dim()) + " features");
    if (cfg.widths.back() != static_cast<std::size_t>(data.train.num_classes))
        throw ConfigError("output width " + std::to_string(cfg.widths.back()) + " but dataset has " +
                          std::to_string(data.train.num_classes) + " classes");
    if (cfg.batch_size > data.train.size())
        throw ConfigError("batch_size exceeds training set size " + std::to_string(data.train.size()));

    const auto specs = mlp_specs(cfg.widths);
    RunResult result;
    result.network = init_network(specs, cfg.seed);
    Network& net = result.network;
    OptimizerState opt = make_optimizer(net, cfg.optimizer.learning_rate, cfg.optimizer.momentum,
                                        cfg.optimizer.weight_decay);

    const auto relu = net.relu_layers();
    const std::size_t modules = relu.size();
    const ObserverSettings& obs = cfg.observers;
    const bool observing = obs.enabled;
    const bool controlled = cfg.controller.has_value();
    const bool probe_source = obs.oui_source == OuiSource::probe;

    result.log = TrajectoryLog(cfg.run_id, fingerprint(cfg), cfg.total_steps, modules);
    TrajectoryLog& log = result.log;

    BatchStream stream(data.train, cfg.batch_size, derive_seed(cfg.seed, seed_streams::batch));
    const Matrix probe = make_probe_batch(data.train, obs.probe_size, cfg.seed);

    std::vector<Ema> oui_ema(modules, Ema(obs.smoothing_alpha));
    std::vector<Ema> ctrl_ema;
    if (controlled) ctrl_ema.assign(modules, Ema(cfg.controller->alpha));
    std::optional<MaskSnapshot> prev_snapshot;

    auto observe_probe = [&](Step t, const ForwardTrace& probe_trace) {
        MaskSnapshot snap = take_snapshot(net, probe_trace, t);
        for (std::size_t m = 0; m < modules; ++m)
            log.append(t, Metric::probe_oui, m, oui_of_mask(snap.masks[m], m, t).value);
        for (std::size_t m = 0; m < modules; ++m)
            log.append(t, Metric::dead_fraction, m, dead_fraction(snap.masks[m]));
        if (prev_snapshot) log.append(t, Metric::mask_change_rate, std::nullopt, mask_change_rate(*prev_snapshot, snap));
        prev_snapshot = std::move(snap);
    };
    auto observe_val = [&](Step t) {
        const Evaluation ev = evaluate(net, data.val);
        log.append(t, Metric::val_loss, std::nullopt, ev.loss);
        log.append(t, Metric::val_accuracy, std::nullopt, ev.accuracy);
    };
    auto log_weight_decay = [&](Step t) {
        for (std::size_t l = 0; l < net.layers.size(); ++l)
            log.append(t, Metric::weight_decay, l, opt.weight_decay[l]);
    };

    Step t = 0;
    try {
        for (; t < cfg.total_steps; ++t) {
            const Batch batch = stream.next();
            const ForwardTrace trace = forward(net, batch.features);
            const bool snapshot_due = observing && t % obs.snapshot_every == 0;
            std::optional<ForwardTrace> probe_trace;
            if (snapshot_due || ((observing || controlled) && probe_source))
                probe_trace = forward(net, probe);

            std::vector<OuiValue> readings;
            if (observing || controlled)
                readings = record_oui(net, probe_source ? *probe_trace : trace, t);

            if (observing) {
                const double loss = loss_softmax_ce(trace.logits(), batch.labels).loss;
                if (!std::isfinite(loss)) throw DivergenceError("non-finite training loss");
                log.append(t, Metric::train_loss, std::nullopt, loss);
                for (const auto& r : readings) log.append(t, Metric::oui, r.module_id, r.value);
                for (const auto& r : readings)
                    log.append(t, Metric::oui_smoothed, r.module_id, oui_ema[r.module_id].update(r.value));
                if (snapshot_due) observe_probe(t, *probe_trace);
                if (t % obs.eval_every == 0) observe_val(t);
            }

            if (controlled) {
                for (const auto& r : readings) ctrl_ema[r.module_id].update(r.value);
                if (t > 0 && t % cfg.controller->cadence == 0) {
                    for (std::size_t m = 0; m < modules; ++m) {
                        const double signal = ctrl_ema[m].value();
                        opt.weight_decay[relu[m]] =
                            controller_step(opt.weight_decay[relu[m]], signal, *cfg.controller);
                        if (observing) log.append(t, Metric::controller_oui, m, signal);
                    }
                }
                if (observing) log_weight_decay(t);
            } else if (observing && t == 0) {
                log_weight_decay(t);
            }

            const GradientSet grads = backward(net, trace, batch.labels);
            sgd_step(net, grads, opt);
        }
        if (observing) {
            observe_probe(t, forward(net, probe));
            observe_val(t);
        }
    } catch (const DivergenceError& e) {
        log.mark_diverged(t, e.what());
    }
    result.steps_completed = t;
    result.final_weight_decay = opt.weight_decay;
    return result;
}

// Training with the weight-decay controller attached.
inline RunResult controlled_training(RunConfig cfg, const ControllerConfig& controller,
                                     const TrainingData& data) {
    cfg.controller = controller;
    return train_run(cfg, data);
}

// Largest absolute difference between corresponding parameters.
inline double max_parameter_difference(const Network& a, const Network& b) {
    if (a.specs() != b.specs()) throw ShapeError("max_parameter_difference: architectures differ");
    double diff = 0.0;
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        const auto wa = a.layers[l].weights.values();
        const auto wb = b.layers[l].weights.values();
        for (std::size_t k = 0; k < wa.size(); ++k) diff = std::max(diff, std::abs(wa[k] - wb[k]));
        for (std::size_t k = 0; k < a.layers[l].biases.size(); ++k)
            diff = std::max(diff, std::abs(a.layers[l].biases[k] - b.layers[l].biases[k]));
    }
    return diff;
}

}  // namespace oui
