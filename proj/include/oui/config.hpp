#pragma once

// Run and grid configuration.
//
// Config files are JSON (comments allowed). Every object is read strictly:
// a key the reader does not consume is an error, so a typo in a sweep script
// fails loudly instead of silently falling back to a default.

#include "oui/data.hpp"
#include "oui/errors.hpp"
#include "oui/network.hpp"
#include "oui/wd_controller.hpp"

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace oui {

using json = nlohmann::json;

enum class DatasetKind { spirals, blobs, delimited };
enum class OuiSource { train_batch, probe };
enum class GridAxis { weight_decay, learning_rate };

struct DatasetSpec {
    DatasetKind kind = DatasetKind::spirals;
    std::uint64_t seed = 0;
    double val_fraction = 0.2;
    // spirals
    double turns = 1.5;
    double noise = 0.15;
    // spirals, blobs
    std::size_t n_per_class = 1000;
    // blobs
    int classes = 3;
    std::size_t dim = 2;
    double spread = 0.3;
    // delimited
    std::string path;
    std::string val_path;  // empty: split path with val_fraction
    std::size_t label_column = 0;
    bool has_header = false;
    std::optional<int> num_classes;
    bool standardize = true;

    bool operator==(const DatasetSpec&) const = default;
};

struct OptimizerSettings {
    double learning_rate = 0.05;
    double momentum = 0.9;
    std::vector<double> weight_decay{1e-4};  // one value, or one per layer

    bool operator==(const OptimizerSettings&) const = default;
};

struct ObserverSettings {
    bool enabled = true;
    std::size_t probe_size = 256;
    std::int64_t snapshot_every = 10;
    std::int64_t eval_every = 50;
    double smoothing_alpha = 0.1;
    OuiSource oui_source = OuiSource::train_batch;

    bool operator==(const ObserverSettings&) const = default;
};

struct RunConfig {
    std::string run_id = "run";
    DatasetSpec dataset;
    std::vector<std::size_t> widths{2, 64, 64, 2};
    OptimizerSettings optimizer;
    std::size_t batch_size = 64;
    std::int64_t total_steps = 4000;
    std::uint64_t seed = 1;
    ObserverSettings observers;
    std::optional<ControllerConfig> controller;
    std::string output_dir = "out";

    bool operator==(const RunConfig&) const = default;
};

struct RegimeBands {
    double low = 0.3;
    double high = 0.7;

    bool operator==(const RegimeBands&) const = default;
};

struct ScreeningSettings {
    double early_fraction = 0.15;
    double noise_multiplier = 2.0;
    double persistence_fraction = 0.05;
    double epsilon = 0.01;         // absolute noise band when a config has one seed
    double smoothing_alpha = 0.1;
    double late_fraction = 0.1;    // window for classify_regime
    std::optional<RegimeBands> bands;

    bool operator==(const ScreeningSettings&) const = default;
};

struct GridSpec {
    RunConfig base;
    GridAxis axis = GridAxis::weight_decay;
    std::vector<double> values;
    std::vector<std::uint64_t> seeds;
    ScreeningSettings screening;

    std::int64_t budget() const noexcept { return base.total_steps; }
    bool operator==(const GridSpec&) const = default;
};

// ---------------------------------------------------------------------------
// Enum names
// ---------------------------------------------------------------------------

inline const char* to_string(DatasetKind k) noexcept {
    switch (k) {
        case DatasetKind::spirals: return "spirals";
        case DatasetKind::blobs: return "blobs";
        case DatasetKind::delimited: return "delimited";
    }
    return "?";
}

inline const char* to_string(OuiSource s) noexcept {
    return s == OuiSource::train_batch ? "train_batch" : "probe";
}

inline const char* to_string(GridAxis a) noexcept {
    return a == GridAxis::weight_decay ? "weight_decay" : "learning_rate";
}

// ---------------------------------------------------------------------------
// Strict object reader
// ---------------------------------------------------------------------------

class ObjectReader {
public:
    ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    template <class T>
    T get(const std::string& key, T fallback) {
        if (!j_.contains(key)) return fallback;
        return required<T>(key);
    }

    template <class T>
    T required(const std::string& key) {
        if (!j_.contains(key)) throw ConfigError(path_ + ": missing required key '" + key + "'");
        used_.insert(key);
        try {
            return j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(path_ + "." + key + ": " + e.what());
        }
    }

    const json& child(const std::string& key) {
        used_.insert(key);
        return j_.at(key);
    }

    std::string child_path(const std::string& key) const { return path_ + "." + key; }

    void finish() const {
        for (const auto& [key, value] : j_.items())
            if (!used_.count(key)) throw ConfigError(path_ + ": unknown key '" + key + "'");
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> used_;
};

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline json to_json(const DatasetSpec& d) {
    json j;
    j["kind"] = to_string(d.kind);
    j["seed"] = d.seed;
    j["val_fraction"] = d.val_fraction;
    switch (d.kind) {
        case DatasetKind::spirals:
            j["turns"] = d.turns;
            j["noise"] = d.noise;
            j["n_per_class"] = d.n_per_class;
            break;
        case DatasetKind::blobs:
            j["classes"] = d.classes;
            j["dim"] = d.dim;
            j["spread"] = d.spread;
            j["n_per_class"] = d.n_per_class;
            break;
        case DatasetKind::delimited:
            j["path"] = d.path;
            if (!d.val_path.empty()) j["val_path"] = d.val_path;
            j["label_column"] = d.label_column;
            j["has_header"] = d.has_header;
            if (d.num_classes) j["num_classes"] = *d.num_classes;
            j["standardize"] = d.standardize;
            break;
    }
    return j;
}

inline DatasetSpec dataset_from_json(const json& j, const std::string& path) {
    ObjectReader r(j, path);
    DatasetSpec d;
    const auto kind = r.required<std::string>("kind");
    if (kind == "spirals") d.kind = DatasetKind::spirals;
    else if (kind == "blobs") d.kind = DatasetKind::blobs;
    else if (kind == "delimited") d.kind = DatasetKind::delimited;
    else throw ConfigError(path + ".kind: unknown dataset kind '" + kind + "'");
    d.seed = r.get("seed", d.seed);
    d.val_fraction = r.get("val_fraction", d.val_fraction);
    switch (d.kind) {
        case DatasetKind::spirals:
            d.turns = r.get("turns", d.turns);
            d.noise = r.get("noise", d.noise);
            d.n_per_class = r.get("n_per_class", d.n_per_class);
            break;
        case DatasetKind::blobs:
            d.classes = r.get("classes", d.classes);
            d.dim = r.get("dim", d.dim);
            d.spread = r.get("spread", d.spread);
            d.n_per_class = r.get("n_per_class", d.n_per_class);
            break;
        case DatasetKind::delimited:
            d.path = r.required<std::string>("path");
            d.val_path = r.get("val_path", d.val_path);
            d.label_column = r.get("label_column", d.label_column);
            d.has_header = r.get("has_header", d.has_header);
            if (r.has("num_classes")) d.num_classes = r.required<int>("num_classes");
            d.standardize = r.get("standardize", d.standardize);
            break;
    }
    r.finish();
    if (!(d.val_fraction > 0.0 && d.val_fraction < 1.0))
        throw ConfigError(path + ".val_fraction must be in (0, 1)");
    return d;
}

inline json to_json(const ControllerConfig& c) {
    return json{{"target", c.target}, {"eta", c.eta},         {"cadence", c.cadence},
                {"wd_min", c.wd_min}, {"wd_max", c.wd_max}, {"alpha", c.alpha}};
}

inline ControllerConfig controller_from_json(const json& j, const std::string& path) {
    ObjectReader r(j, path);
    ControllerConfig c;
    c.target = r.get("target", c.target);
    c.eta = r.get("eta", c.eta);
    c.cadence = r.get("cadence", c.cadence);
    c.wd_min = r.get("wd_min", c.wd_min);
    c.wd_max = r.get("wd_max", c.wd_max);
    c.alpha = r.get("alpha", c.alpha);
    r.finish();
    validate(c);
    return c;
}

inline json to_json(const RunConfig& c) {
    json j;
    j["run_id"] = c.run_id;
    j["dataset"] = to_json(c.dataset);
    j["widths"] = c.widths;
    j["optimizer"] = json{{"learning_rate", c.optimizer.learning_rate},
                          {"momentum", c.optimizer.momentum},
                          {"weight_decay", c.optimizer.weight_decay}};
    j["batch_size"] = c.batch_size;
    j["total_steps"] = c.total_steps;
    j["seed"] = c.seed;
    j["observers"] = json{{"enabled", c.observers.enabled},
                          {"probe_size", c.observers.probe_size},
                          {"snapshot_every", c.observers.snapshot_every},
                          {"eval_every", c.observers.eval_every},
                          {"smoothing_alpha", c.observers.smoothing_alpha},
                          {"oui_source", to_string(c.observers.oui_source)}};
    if (c.controller) j["controller"] = to_json(*c.controller);
    j["output_dir"] = c.output_dir;
    return j;
}

inline void validate(const RunConfig& c) {
    if (c.run_id.empty()) throw ConfigError("run_id must not be empty");
    if (c.widths.size() < 2) throw ConfigError("widths needs at least input and output sizes");
    for (auto w : c.widths)
        if (w < 1) throw ConfigError("widths must all be >= 1");
    if (c.widths.size() < 3) throw ConfigError("widths needs at least one hidden relu layer");
    const std::size_t layers = c.widths.size() - 1;
    const auto& wd = c.optimizer.weight_decay;
    if (wd.size() != 1 && wd.size() != layers)
        throw ConfigError("optimizer.weight_decay needs 1 or " + std::to_string(layers) + " values");
    for (double v : wd)
        if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("optimizer.weight_decay values must be >= 0");
    if (!(c.optimizer.learning_rate >= 0.0) || !std::isfinite(c.optimizer.learning_rate))
        throw ConfigError("optimizer.learning_rate must be >= 0");
    if (!(c.optimizer.momentum >= 0.0 && c.optimizer.momentum < 1.0))
        throw ConfigError("optimizer.momentum must be in [0, 1)");
    if (c.batch_size < 2) throw ConfigError("batch_size must be >= 2");
    if (c.total_steps < 1) throw ConfigError("total_steps must be >= 1");
    if (c.observers.probe_size < 2) throw ConfigError("observers.probe_size must be >= 2");
    if (c.observers.snapshot_every < 1) throw ConfigError("observers.snapshot_every must be >= 1");
    if (c.observers.eval_every < 1) throw ConfigError("observers.eval_every must be >= 1");
    if (!(c.observers.smoothing_alpha > 0.0 && c.observers.smoothing_alpha <= 1.0))
        throw ConfigError("observers.smoothing_alpha must be in (0, 1]");
    if (c.controller) {
        validate(*c.controller);
        for (std::size_t l = 0; l + 1 < layers; ++l) {
            const double v = wd.size() == 1 ? wd.front() : wd[l];
            if (v < c.controller->wd_min || v > c.controller->wd_max)
                throw ConfigError("initial weight decay " + std::to_string(v) + " of layer " +
                                  std::to_string(l) + " lies outside controller bounds");
        }
    }
}

inline RunConfig run_config_from_json(const json& j, const std::string& path = "config") {
    ObjectReader r(j, path);
    RunConfig c;
    c.run_id = r.get("run_id", c.run_id);
    if (r.has("dataset")) c.dataset = dataset_from_json(r.child("dataset"), r.child_path("dataset"));
    c.widths = r.get("widths", c.widths);
    if (r.has("optimizer")) {
        ObjectReader o(r.child("optimizer"), r.child_path("optimizer"));
        c.optimizer.learning_rate = o.get("learning_rate", c.optimizer.learning_rate);
        c.optimizer.momentum = o.get("momentum", c.optimizer.momentum);
        if (o.has("weight_decay")) {
            const json& wd = o.child("weight_decay");
            try {
                c.optimizer.weight_decay =
                    wd.is_array() ? wd.get<std::vector<double>>() : std::vector<double>{wd.get<double>()};
            } catch (const json::exception& e) {
                throw ConfigError(o.child_path("weight_decay") + ": " + e.what());
            }
        }
        o.finish();
    }
    c.batch_size = r.get("batch_size", c.batch_size);
    c.total_steps = r.get("total_steps", c.total_steps);
    c.seed = r.get("seed", c.seed);
    if (r.has("observers")) {
        ObjectReader o(r.child("observers"), r.child_path("observers"));
        auto& ob = c.observers;
        ob.enabled = o.get("enabled", ob.enabled);
        ob.probe_size = o.get("probe_size", ob.probe_size);
        ob.snapshot_every = o.get("snapshot_every", ob.snapshot_every);
        ob.eval_every = o.get("eval_every", ob.eval_every);
        ob.smoothing_alpha = o.get("smoothing_alpha", ob.smoothing_alpha);
        const auto src = o.get<std::string>("oui_source", to_string(ob.oui_source));
        if (src == "train_batch") ob.oui_source = OuiSource::train_batch;
        else if (src == "probe") ob.oui_source = OuiSource::probe;
        else throw ConfigError(o.child_path("oui_source") + ": expected 'train_batch' or 'probe'");
        o.finish();
    }
    if (r.has("controller"))
        c.controller = controller_from_json(r.child("controller"), r.child_path("controller"));
    c.output_dir = r.get("output_dir", c.output_dir);
    r.finish();
    validate(c);
    return c;
}

inline json to_json(const ScreeningSettings& s) {
    json j{{"early_fraction", s.early_fraction},         {"noise_multiplier", s.noise_multiplier},
           {"persistence_fraction", s.persistence_fraction}, {"epsilon", s.epsilon},
           {"smoothing_alpha", s.smoothing_alpha},       {"late_fraction", s.late_fraction}};
    if (s.bands) j["bands"] = json{{"low", s.bands->low}, {"high", s.bands->high}};
    return j;
}

inline void validate(const ScreeningSettings& s) {
    if (!(s.early_fraction > 0.0 && s.early_fraction <= 1.0))
        throw ConfigError("screening.early_fraction must be in (0, 1]");
    if (!(s.noise_multiplier >= 0.0)) throw ConfigError("screening.noise_multiplier must be >= 0");
    if (!(s.persistence_fraction >= 0.0 && s.persistence_fraction <= 1.0))
        throw ConfigError("screening.persistence_fraction must be in [0, 1]");
    if (!(s.epsilon >= 0.0)) throw ConfigError("screening.epsilon must be >= 0");
    if (!(s.smoothing_alpha > 0.0 && s.smoothing_alpha <= 1.0))
        throw ConfigError("screening.smoothing_alpha must be in (0, 1]");
    if (!(s.late_fraction > 0.0 && s.late_fraction <= 1.0))
        throw ConfigError("screening.late_fraction must be in (0, 1]");
    if (s.bands && !(0.0 < s.bands->low && s.bands->low < s.bands->high && s.bands->high < 1.0))
        throw ConfigError("screening.bands must satisfy 0 < low < high < 1");
}

inline json to_json(const GridSpec& g) {
    return json{{"base", to_json(g.base)},
                {"grid", json{{"axis", to_string(g.axis)}, {"values", g.values}, {"seeds", g.seeds}}},
                {"screening", to_json(g.screening)}};
}

inline void validate(const GridSpec& g) {
    validate(g.base);
    if (g.values.size() < 2) throw ConfigError("grid.values needs at least 2 entries");
    if (g.seeds.empty()) throw ConfigError("grid.seeds needs at least 1 entry");
    for (double v : g.values)
        if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("grid.values must be positive");
    validate(g.screening);
}

inline GridSpec grid_spec_from_json(const json& j, const std::string& path = "config") {
    ObjectReader r(j, path);
    GridSpec g;
    g.base = run_config_from_json(r.child("base"), r.child_path("base"));
    {
        ObjectReader gr(r.child("grid"), r.child_path("grid"));
        const auto axis = gr.required<std::string>("axis");
        if (axis == "weight_decay") g.axis = GridAxis::weight_decay;
        else if (axis == "learning_rate") g.axis = GridAxis::learning_rate;
        else throw ConfigError(gr.child_path("axis") + ": expected 'weight_decay' or 'learning_rate'");
        g.values = gr.required<std::vector<double>>("values");
        g.seeds = gr.required<std::vector<std::uint64_t>>("seeds");
        gr.finish();
    }
    if (r.has("screening")) {
        ObjectReader s(r.child("screening"), r.child_path("screening"));
        auto& sc = g.screening;
        sc.early_fraction = s.get("early_fraction", sc.early_fraction);
        sc.noise_multiplier = s.get("noise_multiplier", sc.noise_multiplier);
        sc.persistence_fraction = s.get("persistence_fraction", sc.persistence_fraction);
        sc.epsilon = s.get("epsilon", sc.epsilon);
        sc.smoothing_alpha = s.get("smoothing_alpha", sc.smoothing_alpha);
        sc.late_fraction = s.get("late_fraction", sc.late_fraction);
        if (s.has("bands")) {
            ObjectReader b(s.child("bands"), s.child_path("bands"));
            sc.bands = RegimeBands{b.required<double>("low"), b.required<double>("high")};
            b.finish();
        }
        s.finish();
    }
    r.finish();
    validate(g);
    return g;
}

// ---------------------------------------------------------------------------
// Files and fingerprints
// ---------------------------------------------------------------------------

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    try {
        return json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

inline RunConfig load_run_config(const std::string& path) {
    return run_config_from_json(read_json_file(path), path);
}

inline GridSpec load_grid_spec(const std::string& path) {
    return grid_spec_from_json(read_json_file(path), path);
}

// FNV-1a over the canonical (sorted-key) JSON of everything that affects the
// trajectory; run_id and output_dir are excluded.
inline std::string fingerprint(const RunConfig& c) {
    json j = to_json(c);
    j.erase("run_id");
    j.erase("output_dir");
    const std::string canonical = j.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : canonical) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

}  // namespace oui
