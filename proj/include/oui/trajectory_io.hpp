#pragma once

// On-disk formats.
//
// Run CSV (schema version 1):
//   header   step,metric,module_id,value
//   rows     one per LogRecord, in append order
//   module_id is empty for network-wide metrics
//   value is printed with 17 significant digits (printf "%.17g"), so parsing
//   it back yields the identical double
//
// JSON sidecar: run metadata, the config and its fingerprint.
//
// Checkpoint (version 1): an ASCII header terminated by the line "end-header",
// followed by every layer's weights (row-major, output x input) then biases,
// as IEEE-754 binary64 little-endian.

#include "oui/config.hpp"
#include "oui/data.hpp"
#include "oui/errors.hpp"
#include "oui/network.hpp"
#include "oui/observers.hpp"

#include <json.hpp>

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>

namespace oui {

inline constexpr int csv_schema_version = 1;
inline constexpr int checkpoint_version = 1;
inline constexpr const char* csv_header = "step,metric,module_id,value";

inline std::string format_double(double v) {
    std::array<char, 64> buf{};
    const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v,
                                         std::chars_format::general, 17);
    if (ec != std::errc{}) throw IoError("format_double: conversion failed");
    return std::string(buf.data(), ptr);
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

inline void write_csv(std::ostream& out, const TrajectoryLog& log) {
    out << csv_header << '\n';
    for (const auto& r : log.records()) {
        out << r.step << ',' << to_string(r.metric) << ',';
        if (r.module) out << *r.module;
        out << ',' << format_double(r.value) << '\n';
    }
}

inline std::string csv_string(const TrajectoryLog& log) {
    std::ostringstream os;
    write_csv(os, log);
    return os.str();
}

inline void ensure_parent_dir(const std::filesystem::path& p) {
    std::error_code ec;
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path(), ec);
    if (ec) throw IoError("cannot create directory '" + p.parent_path().string() + "': " + ec.message());
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    ensure_parent_dir(path);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

// Parses records into `log`, which carries the metadata (usually from the sidecar).
inline void read_csv(std::istream& in, const std::string& name, TrajectoryLog& log) {
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) throw ParseError(name, 1, "missing header");
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != csv_header) throw ParseError(name, line_no, "unexpected header '" + line + "'");
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = detail::split_fields(line, ',');
        if (fields.size() != 4)
            throw ParseError(name, line_no, "expected 4 fields, got " + std::to_string(fields.size()));
        const auto step = detail::parse_int(fields[0]);
        if (!step) throw ParseError(name, line_no, "bad step '" + std::string(fields[0]) + "'");
        const auto metric = metric_from_string(fields[1]);
        if (!metric) throw ParseError(name, line_no, "unknown metric '" + std::string(fields[1]) + "'");
        std::optional<ModuleId> module;
        if (!fields[2].empty()) {
            const auto m = detail::parse_int(fields[2]);
            if (!m || *m < 0) throw ParseError(name, line_no, "bad module_id '" + std::string(fields[2]) + "'");
            module = static_cast<ModuleId>(*m);
        }
        const auto value = detail::parse_double(fields[3]);
        if (!value) throw ParseError(name, line_no, "bad value '" + std::string(fields[3]) + "'");
        try {
            log.append(*step, *metric, module, *value);
        } catch (const SpecError& e) {
            throw ParseError(name, line_no, e.what());
        }
    }
}

// ---------------------------------------------------------------------------
// Sidecar
// ---------------------------------------------------------------------------

inline json sidecar_json(const TrajectoryLog& log, const json& config) {
    json j;
    j["schema_version"] = csv_schema_version;
    j["run_id"] = log.run_id();
    j["fingerprint"] = log.fingerprint();
    j["total_steps"] = log.total_steps();
    j["module_count"] = log.module_count();
    j["diverged"] = log.diverged();
    j["divergence_step"] = log.divergence_step();
    j["divergence_message"] = log.divergence_message();
    j["csv_columns"] = csv_header;
    j["value_format"] = "%.17g";
    j["config"] = config;
    return j;
}

struct RunFiles {
    std::filesystem::path csv;
    std::filesystem::path sidecar;
};

inline RunFiles run_files(const std::filesystem::path& dir, const std::string& run_id) {
    return {dir / (run_id + ".csv"), dir / (run_id + ".json")};
}

inline RunFiles write_run(const std::filesystem::path& dir, const TrajectoryLog& log, const json& config) {
    const RunFiles files = run_files(dir, log.run_id());
    write_text_file(files.csv, csv_string(log));
    write_text_file(files.sidecar, sidecar_json(log, config).dump(2) + "\n");
    return files;
}

// Loads a run CSV; metadata comes from the sidecar next to it when present.
inline TrajectoryLog read_run(const std::filesystem::path& csv_path) {
    std::filesystem::path sidecar = csv_path;
    sidecar.replace_extension(".json");
    TrajectoryLog log(csv_path.stem().string(), "", 0, 0);
    json meta;
    if (std::filesystem::exists(sidecar)) {
        try {
            meta = json::parse(read_text_file(sidecar));
            log = TrajectoryLog(meta.at("run_id").get<std::string>(),
                                meta.at("fingerprint").get<std::string>(),
                                meta.at("total_steps").get<Step>(),
                                meta.at("module_count").get<std::size_t>());
        } catch (const json::exception& e) {
            throw IoError(sidecar.string() + ": " + e.what());
        }
    }
    std::ifstream in(csv_path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + csv_path.string() + "'");
    read_csv(in, csv_path.string(), log);
    if (!meta.is_null() && meta.value("diverged", false))
        log.mark_diverged(meta.value("divergence_step", Step{-1}), meta.value("divergence_message", std::string{}));
    if (meta.is_null() && !log.records().empty()) {
        // No sidecar: infer what we can from the records.
        std::size_t modules = 0;
        for (const auto& r : log.records())
            if (r.metric == Metric::oui && r.module) modules = std::max(modules, *r.module + 1);
        TrajectoryLog inferred(log.run_id(), "", log.records().back().step, modules);
        for (const auto& r : log.records()) inferred.append(r);
        log = std::move(inferred);
    }
    return log;
}

// ---------------------------------------------------------------------------
// Checkpoint
// ---------------------------------------------------------------------------

namespace detail {

inline void write_le_double(std::ostream& out, double v) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    std::array<char, 8> bytes{};
    for (auto& b : bytes) {
        b = static_cast<char>(bits & 0xffU);
        bits >>= 8;
    }
    out.write(bytes.data(), bytes.size());
}

inline double read_le_double(std::istream& in) {
    std::array<unsigned char, 8> bytes{};
    in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
    if (!in) throw IoError("checkpoint: truncated parameter data");
    std::uint64_t bits = 0;
    for (std::size_t i = bytes.size(); i-- > 0;) bits = (bits << 8) | bytes[i];
    return std::bit_cast<double>(bits);
}

}  // namespace detail

inline void write_checkpoint(std::ostream& out, const Network& net, Step step) {
    out << "OUI-CHECKPOINT " << checkpoint_version << '\n'
        << "seed " << net.seed << '\n'
        << "step " << step << '\n'
        << "layers " << net.layers.size() << '\n';
    for (const auto& l : net.layers)
        out << l.input_dim() << ' ' << l.output_dim() << ' ' << to_string(l.activation) << '\n';
    out << "end-header\n";
    for (const auto& l : net.layers) {
        for (double w : l.weights.values()) detail::write_le_double(out, w);
        for (double b : l.biases) detail::write_le_double(out, b);
    }
}

inline void save_checkpoint(const std::filesystem::path& path, const Network& net, Step step) {
    ensure_parent_dir(path);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
    write_checkpoint(out, net, step);
    if (!out) throw IoError("write failed for checkpoint '" + path.string() + "'");
}

struct Checkpoint {
    Network network;
    Step step = 0;
};

inline Checkpoint read_checkpoint(std::istream& in, const std::string& name = "checkpoint") {
    auto expect_word = [&](const char* word) {
        std::string w;
        if (!(in >> w) || w != word) throw IoError(name + ": expected '" + std::string(word) + "'");
    };
    expect_word("OUI-CHECKPOINT");
    int version = 0;
    if (!(in >> version) || version != checkpoint_version)
        throw IoError(name + ": unsupported checkpoint version");
    Checkpoint ck;
    std::size_t n_layers = 0;
    expect_word("seed");
    in >> ck.network.seed;
    expect_word("step");
    in >> ck.step;
    expect_word("layers");
    in >> n_layers;
    if (!in) throw IoError(name + ": malformed header");
    std::vector<LayerSpec> specs;
    for (std::size_t i = 0; i < n_layers; ++i) {
        LayerSpec s;
        std::string act;
        if (!(in >> s.input_dim >> s.output_dim >> act)) throw IoError(name + ": malformed layer line");
        if (act == "relu") s.activation = Activation::relu;
        else if (act == "identity") s.activation = Activation::identity;
        else throw IoError(name + ": unknown activation '" + act + "'");
        specs.push_back(s);
    }
    expect_word("end-header");
    if (in.get() != '\n') throw IoError(name + ": header not newline-terminated");
    try {
        validate_specs(specs);
    } catch (const SpecError& e) {
        throw IoError(name + ": " + e.what());
    }
    for (const auto& s : specs) {
        DenseLayer layer{Matrix(s.output_dim, s.input_dim), std::vector<double>(s.output_dim), s.activation};
        for (double& w : layer.weights.values()) w = detail::read_le_double(in);
        for (double& b : layer.biases) b = detail::read_le_double(in);
        ck.network.layers.push_back(std::move(layer));
    }
    return ck;
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
    return read_checkpoint(in, path.string());
}

}  // namespace oui
