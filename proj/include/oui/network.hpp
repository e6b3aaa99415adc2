#pragma once

#include "oui/data.hpp"
#include "oui/errors.hpp"
#include "oui/matrix.hpp"
#include "oui/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace oui {

enum class Activation { relu, identity };

inline std::string_view to_string(Activation a) noexcept {
    return a == Activation::relu ? "relu" : "identity";
}

struct LayerSpec {
    std::size_t input_dim = 0;
    std::size_t output_dim = 0;
    Activation activation = Activation::relu;

    bool operator==(const LayerSpec&) const = default;
};

struct DenseLayer {
    Matrix weights;               // output_dim x input_dim
    std::vector<double> biases;   // output_dim
    Activation activation = Activation::relu;

    std::size_t input_dim() const noexcept { return weights.cols(); }
    std::size_t output_dim() const noexcept { return weights.rows(); }

    bool operator==(const DenseLayer&) const = default;
};

struct Network {
    std::vector<DenseLayer> layers;
    std::uint64_t seed = 0;

    std::size_t parameter_count() const noexcept {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.weights.size() + l.biases.size();
        return n;
    }

    std::vector<LayerSpec> specs() const {
        std::vector<LayerSpec> out;
        for (const auto& l : layers) out.push_back({l.input_dim(), l.output_dim(), l.activation});
        return out;
    }

    // Indices of relu layers; these are the modules OUI is computed for.
    std::vector<std::size_t> relu_layers() const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < layers.size(); ++i)
            if (layers[i].activation == Activation::relu) out.push_back(i);
        return out;
    }

    bool operator==(const Network&) const = default;
};

inline void validate_specs(std::span<const LayerSpec> specs) {
    if (specs.empty()) throw SpecError("network needs at least one layer");
    for (std::size_t i = 0; i < specs.size(); ++i) {
        if (specs[i].input_dim < 1 || specs[i].output_dim < 1)
            throw SpecError("layer " + std::to_string(i) + ": dimensions must be >= 1");
        if (i > 0 && specs[i].input_dim != specs[i - 1].output_dim)
            throw SpecError("layer " + std::to_string(i) + ": input_dim " +
                            std::to_string(specs[i].input_dim) + " does not match previous output_dim " +
                            std::to_string(specs[i - 1].output_dim));
        if (specs[i].activation == Activation::identity && i + 1 != specs.size())
            throw SpecError("layer " + std::to_string(i) + ": identity activation only allowed on the last layer");
    }
}

// Widths [in, h1, ..., hk, out] -> relu hidden layers and an identity head.
inline std::vector<LayerSpec> mlp_specs(std::span<const std::size_t> widths) {
    if (widths.size() < 2) throw SpecError("architecture needs at least input and output widths");
    std::vector<LayerSpec> specs;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i)
        specs.push_back({widths[i], widths[i + 1],
                         i + 2 == widths.size() ? Activation::identity : Activation::relu});
    validate_specs(specs);
    return specs;
}

// He initialization: W ~ N(0, 2 / input_dim), zero biases.
inline Network init_network(std::span<const LayerSpec> specs, std::uint64_t seed) {
    validate_specs(specs);
    Network net;
    net.seed = seed;
    Rng rng(derive_seed(seed, seed_streams::init));
    for (const auto& s : specs) {
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(s.input_dim)));
        DenseLayer layer{Matrix(s.output_dim, s.input_dim), std::vector<double>(s.output_dim, 0.0),
                         s.activation};
        for (double& w : layer.weights.values()) w = dist(rng);
        net.layers.push_back(std::move(layer));
    }
    return net;
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

struct ForwardTrace {
    Matrix input;
    std::vector<Matrix> preactivations;  // B x d_l per layer
    std::vector<Matrix> outputs;         // post-activation per layer

    std::size_t batch_size() const noexcept { return input.rows(); }
    const Matrix& logits() const { return outputs.back(); }
};

inline ForwardTrace forward(const Network& net, const Matrix& batch) {
    if (net.layers.empty()) throw SpecError("forward: empty network");
    if (batch.cols() != net.layers.front().input_dim())
        throw ShapeError("forward: batch width " + std::to_string(batch.cols()) +
                         " does not match input_dim " + std::to_string(net.layers.front().input_dim()));
    if (!batch.all_finite()) throw NumericError("forward: non-finite input");

    ForwardTrace trace;
    trace.input = batch;
    const std::size_t b = batch.rows();
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const DenseLayer& layer = net.layers[l];
        const Matrix& in = l == 0 ? trace.input : trace.outputs.back();
        const std::size_t out_dim = layer.output_dim();
        const std::size_t in_dim = layer.input_dim();
        Matrix pre(b, out_dim);
        for (std::size_t i = 0; i < b; ++i) {
            const auto x = in.row(i);
            auto z = pre.row(i);
            for (std::size_t o = 0; o < out_dim; ++o) {
                const auto w = layer.weights.row(o);
                double acc = layer.biases[o];
                for (std::size_t k = 0; k < in_dim; ++k) acc += x[k] * w[k];
                z[o] = acc;
            }
        }
        if (!pre.all_finite())
            throw DivergenceError("forward: non-finite preactivation in layer " + std::to_string(l));
        Matrix post = pre;
        if (layer.activation == Activation::relu)
            for (double& v : post.values()) v = v > 0.0 ? v : 0.0;
        trace.preactivations.push_back(std::move(pre));
        trace.outputs.push_back(std::move(post));
    }
    return trace;
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

struct LossResult {
    double loss = 0.0;
    Matrix probs;
};

// Mean softmax cross-entropy, log-sum-exp with the row max subtracted.
inline LossResult loss_softmax_ce(const Matrix& logits, std::span<const int> labels) {
    if (logits.rows() != labels.size())
        throw ShapeError("loss: " + std::to_string(logits.rows()) + " logit rows vs " +
                         std::to_string(labels.size()) + " labels");
    if (logits.rows() == 0) throw ShapeError("loss: empty batch");
    const std::size_t c = logits.cols();
    LossResult out{0.0, Matrix(logits.rows(), c)};
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c)
            throw SpecError("loss: label " + std::to_string(labels[i]) + " outside [0, " +
                            std::to_string(c) + ")");
        const auto z = logits.row(i);
        const double zmax = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        auto p = out.probs.row(i);
        for (std::size_t k = 0; k < c; ++k) {
            p[k] = std::exp(z[k] - zmax);
            sum += p[k];
        }
        for (std::size_t k = 0; k < c; ++k) p[k] /= sum;
        out.loss += std::log(sum) - (z[static_cast<std::size_t>(labels[i])] - zmax);
    }
    out.loss /= static_cast<double>(logits.rows());
    return out;
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

struct LayerGradient {
    Matrix weights;
    std::vector<double> biases;
};

struct GradientSet {
    std::vector<LayerGradient> layers;
};

// Exact gradients of the mean loss. The relu derivative at 0 is 0, matching
// the strict a > 0 mask convention.
inline GradientSet backward(const Network& net, const ForwardTrace& trace, std::span<const int> labels) {
    const std::size_t n_layers = net.layers.size();
    if (trace.preactivations.size() != n_layers || trace.outputs.size() != n_layers)
        throw ShapeError("backward: trace has " + std::to_string(trace.preactivations.size()) +
                         " layers, network has " + std::to_string(n_layers));
    for (std::size_t l = 0; l < n_layers; ++l)
        if (trace.preactivations[l].cols() != net.layers[l].output_dim() ||
            trace.preactivations[l].rows() != trace.batch_size())
            throw ShapeError("backward: trace shape mismatch at layer " + std::to_string(l));
    if (trace.input.cols() != net.layers.front().input_dim())
        throw ShapeError("backward: trace input width mismatch");

    const std::size_t b = trace.batch_size();
    const LossResult lr = loss_softmax_ce(trace.logits(), labels);

    // delta = dL/dz for the current layer, B x out
    Matrix delta = lr.probs;
    const double inv_b = 1.0 / static_cast<double>(b);
    for (std::size_t i = 0; i < b; ++i) {
        delta(i, static_cast<std::size_t>(labels[i])) -= 1.0;
        for (double& v : delta.row(i)) v *= inv_b;
    }

    GradientSet grads;
    grads.layers.resize(n_layers);
    for (std::size_t l = n_layers; l-- > 0;) {
        const DenseLayer& layer = net.layers[l];
        const Matrix& in = l == 0 ? trace.input : trace.outputs[l - 1];
        const std::size_t out_dim = layer.output_dim();
        const std::size_t in_dim = layer.input_dim();

        LayerGradient g{Matrix(out_dim, in_dim), std::vector<double>(out_dim, 0.0)};
        for (std::size_t i = 0; i < b; ++i) {
            const auto d = delta.row(i);
            const auto x = in.row(i);
            for (std::size_t o = 0; o < out_dim; ++o) {
                const double dv = d[o];
                if (dv == 0.0) continue;
                g.biases[o] += dv;
                auto gw = g.weights.row(o);
                for (std::size_t k = 0; k < in_dim; ++k) gw[k] += dv * x[k];
            }
        }
        grads.layers[l] = std::move(g);

        if (l == 0) break;
        Matrix prev(b, in_dim);
        const Matrix& prev_pre = trace.preactivations[l - 1];
        const bool gate = net.layers[l - 1].activation == Activation::relu;
        for (std::size_t i = 0; i < b; ++i) {
            const auto d = delta.row(i);
            auto p = prev.row(i);
            for (std::size_t o = 0; o < out_dim; ++o) {
                const double dv = d[o];
                if (dv == 0.0) continue;
                const auto w = layer.weights.row(o);
                for (std::size_t k = 0; k < in_dim; ++k) p[k] += dv * w[k];
            }
            if (gate)
                for (std::size_t k = 0; k < in_dim; ++k)
                    if (!(prev_pre(i, k) > 0.0)) p[k] = 0.0;
        }
        delta = std::move(prev);
    }
    return grads;
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

// SGD with momentum and decoupled per-layer weight decay:
//   v <- momentum * v + g
//   w <- (1 - lr * wd_l) * w - lr * v      (weights only; biases skip decay)
struct OptimizerState {
    double learning_rate = 0.01;
    double momentum = 0.0;
    std::vector<double> weight_decay;  // one entry per layer
    GradientSet velocity;
};

inline OptimizerState make_optimizer(const Network& net, double learning_rate, double momentum,
                                     std::vector<double> weight_decay) {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
        throw SpecError("optimizer: learning rate must be finite and >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw SpecError("optimizer: momentum must be in [0, 1)");
    if (weight_decay.size() == 1 && net.layers.size() > 1)
        weight_decay.assign(net.layers.size(), weight_decay.front());
    if (weight_decay.size() != net.layers.size())
        throw SpecError("optimizer: expected " + std::to_string(net.layers.size()) +
                        " weight decay values, got " + std::to_string(weight_decay.size()));
    for (double wd : weight_decay)
        if (!(wd >= 0.0) || !std::isfinite(wd)) throw SpecError("optimizer: weight decay must be >= 0");

    OptimizerState st{learning_rate, momentum, std::move(weight_decay), {}};
    for (const auto& l : net.layers)
        st.velocity.layers.push_back({Matrix(l.output_dim(), l.input_dim()),
                                      std::vector<double>(l.output_dim(), 0.0)});
    return st;
}

inline void sgd_step(Network& net, const GradientSet& grads, OptimizerState& opt) {
    if (grads.layers.size() != net.layers.size() || opt.velocity.layers.size() != net.layers.size() ||
        opt.weight_decay.size() != net.layers.size())
        throw ShapeError("sgd_step: layer count mismatch");
    const double lr = opt.learning_rate;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        DenseLayer& layer = net.layers[l];
        const LayerGradient& g = grads.layers[l];
        LayerGradient& v = opt.velocity.layers[l];
        if (g.weights.rows() != layer.weights.rows() || g.weights.cols() != layer.weights.cols() ||
            g.biases.size() != layer.biases.size())
            throw ShapeError("sgd_step: gradient shape mismatch at layer " + std::to_string(l));

        const double keep = 1.0 - lr * opt.weight_decay[l];
        auto w = layer.weights.values();
        auto vw = v.weights.values();
        const auto gw = g.weights.values();
        bool finite = true;
        for (std::size_t k = 0; k < w.size(); ++k) {
            vw[k] = opt.momentum * vw[k] + gw[k];
            w[k] = keep * w[k] - lr * vw[k];
            finite = finite && std::isfinite(w[k]);
        }
        for (std::size_t k = 0; k < layer.biases.size(); ++k) {
            v.biases[k] = opt.momentum * v.biases[k] + g.biases[k];
            layer.biases[k] -= lr * v.biases[k];
            finite = finite && std::isfinite(layer.biases[k]);
        }
        if (!finite) throw DivergenceError("sgd_step: non-finite parameter in layer " + std::to_string(l));
    }
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct Evaluation {
    double loss = 0.0;
    double accuracy = 0.0;
};

// Full pass in chunks; argmax ties resolve to the lowest class index.
inline Evaluation evaluate(const Network& net, const Dataset& ds, std::size_t chunk = 512) {
    if (ds.size() == 0) throw SpecError("evaluate: empty dataset");
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < ds.size(); start += chunk) {
        const std::size_t len = std::min(chunk, ds.size() - start);
        std::vector<std::size_t> idx(len);
        for (std::size_t i = 0; i < len; ++i) idx[i] = start + i;
        const Dataset part = subset(ds, idx);
        const ForwardTrace trace = forward(net, part.features);
        const LossResult lr = loss_softmax_ce(trace.logits(), part.labels);
        loss_sum += lr.loss * static_cast<double>(len);
        for (std::size_t i = 0; i < len; ++i) {
            const auto z = trace.logits().row(i);
            const auto best = static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
            if (best == part.labels[i]) ++correct;
        }
    }
    return {loss_sum / static_cast<double>(ds.size()),
            static_cast<double>(correct) / static_cast<double>(ds.size())};
}

}  // namespace oui
