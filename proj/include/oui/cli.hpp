#pragma once

// Command-line front end: train | screen | control | report.
//
// Exit codes: 0 success, 1 config error, 2 IO error, 3 numeric divergence.

#include "oui/config.hpp"
#include "oui/errors.hpp"
#include "oui/screening.hpp"
#include "oui/svg_plot.hpp"
#include "oui/trainer.hpp"
#include "oui/trajectory_io.hpp"
#include "oui/wd_controller.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace oui::cli {

namespace fs = std::filesystem;

struct Options {
    std::string config;
    std::string out;
    std::size_t jobs = 1;
    std::optional<std::uint64_t> seed_override;
    std::string log_dir;
};

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainOutcome {
    RunResult result;
    RunFiles files;
    fs::path checkpoint;
};

inline TrainOutcome write_training_outputs(const RunConfig& cfg, RunResult result, const fs::path& out_dir) {
    TrainOutcome outcome;
    outcome.files = write_run(out_dir, result.log, to_json(cfg));
    outcome.checkpoint = out_dir / (cfg.run_id + ".ckpt");
    save_checkpoint(outcome.checkpoint, result.network, result.steps_completed);
    outcome.result = std::move(result);
    return outcome;
}

inline int cmd_train(const Options& opt, std::ostream& out, std::ostream& err) {
    RunConfig cfg = load_run_config(opt.config);
    if (opt.seed_override) cfg.seed = *opt.seed_override;
    if (!opt.out.empty()) cfg.output_dir = opt.out;
    validate(cfg);
    const TrainingData data = prepare_data(cfg.dataset);
    auto outcome = write_training_outputs(cfg, train_run(cfg, data), cfg.output_dir);
    const auto& log = outcome.result.log;
    out << "run " << cfg.run_id << ": " << outcome.result.steps_completed << " steps\n";
    if (auto acc = log.last_value(Metric::val_accuracy)) out << "final val accuracy " << *acc << "\n";
    out << "wrote " << outcome.files.csv.string() << "\n";
    if (log.diverged()) {
        err << "error: run diverged at step " << log.divergence_step() << ": " << log.divergence_message()
                  << "\n";
        return exit_codes::divergence;
    }
    return exit_codes::success;
}

// ---------------------------------------------------------------------------
// screen
// ---------------------------------------------------------------------------

inline PlotSpec grid_trajectory_plot(const GridSpec& spec, const std::vector<ConfigLogs>& groups) {
    PlotSpec plot;
    plot.title = "OUI trajectories (seed mean +- std) by " + std::string(to_string(spec.axis));
    plot.y_label = "smoothed OUI";
    for (const auto& g : groups) {
        const auto stats = detail::seed_stats(g, spec.screening.smoothing_alpha);
        PlotSeries s;
        s.label = std::string(spec.axis == GridAxis::weight_decay ? "wd=" : "lr=") + format_axis_value(g.axis_value);
        for (const auto& [step, st] : stats) {
            s.x.push_back(static_cast<double>(step));
            s.y.push_back(st.mean);
            s.lower.push_back(st.mean - st.std);
            s.upper.push_back(st.mean + st.std);
        }
        plot.series.push_back(std::move(s));
    }
    return plot;
}

inline int cmd_screen(const Options& opt, std::ostream& out, [[maybe_unused]] std::ostream& err) {
    GridSpec spec = load_grid_spec(opt.config);
    if (opt.seed_override) spec.seeds = {*opt.seed_override};
    const fs::path out_dir = opt.out.empty() ? fs::path(spec.base.output_dir) : fs::path(opt.out);
    validate(spec);

    const auto runs = run_grid(spec, opt.jobs);
    for (const auto& r : runs) {
        write_run(out_dir / "runs", r.result.log, to_json(r.config));
        if (r.result.diverged())
            out << "flagged: " << r.config.run_id << " diverged at step " << r.result.log.divergence_step() << "\n";
    }
    const auto groups = group_by_config(runs);
    const RegimeReport report = separation_analysis(groups, spec.screening, spec.axis);
    json rj = to_json(report);
    rj["grid"] = to_json(spec);
    rj["runs"] = json::array();
    for (const auto& r : runs)
        rj["runs"].push_back({{"run_id", r.config.run_id},
                              {"axis_value", r.axis_value},
                              {"seed", r.seed},
                              {"diverged", r.result.diverged()},
                              {"final_val_accuracy", r.result.diverged()
                                                         ? 0.0
                                                         : r.result.log.last_value(Metric::val_accuracy).value_or(0.0)}});
    write_text_file(out_dir / "report.json", rj.dump(2) + "\n");
    const std::string table = report_table(report);
    write_text_file(out_dir / "report.txt", table);
    write_text_file(out_dir / "oui_trajectories.svg", render_svg(grid_trajectory_plot(spec, groups)));
    out << table;
    return exit_codes::success;
}

// ---------------------------------------------------------------------------
// control
// ---------------------------------------------------------------------------

inline int cmd_control(const Options& opt, std::ostream& out, std::ostream& err) {
    RunConfig cfg = load_run_config(opt.config);
    if (!cfg.controller) throw ConfigError(opt.config + ": control needs a 'controller' section");
    if (opt.seed_override) cfg.seed = *opt.seed_override;
    if (!opt.out.empty()) cfg.output_dir = opt.out;
    validate(cfg);
    const fs::path out_dir = cfg.output_dir;
    const TrainingData data = prepare_data(cfg.dataset);

    RunConfig controlled_cfg = cfg;
    controlled_cfg.run_id = cfg.run_id + "_controlled";
    RunConfig baseline_cfg = cfg;
    baseline_cfg.run_id = cfg.run_id + "_baseline";
    baseline_cfg.controller.reset();

    auto controlled = write_training_outputs(controlled_cfg, train_run(controlled_cfg, data), out_dir);
    auto baseline = write_training_outputs(baseline_cfg, train_run(baseline_cfg, data), out_dir);

    const double diff = max_parameter_difference(controlled.result.network, baseline.result.network);
    const auto& clog = controlled.result.log;
    const auto& blog = baseline.result.log;
    json cmp;
    cmp["controller"] = to_json(*cfg.controller);
    cmp["sign_convention"] = sign_convention(*cfg.controller);
    cmp["max_parameter_difference"] = diff;
    cmp["parameters_bit_identical"] = controlled.result.network == baseline.result.network;
    cmp["controlled"] = {{"run_id", controlled_cfg.run_id},
                         {"diverged", clog.diverged()},
                         {"final_val_accuracy", clog.last_value(Metric::val_accuracy).value_or(0.0)},
                         {"final_val_loss", clog.last_value(Metric::val_loss).value_or(0.0)},
                         {"final_weight_decay", controlled.result.final_weight_decay}};
    cmp["baseline"] = {{"run_id", baseline_cfg.run_id},
                       {"diverged", blog.diverged()},
                       {"final_val_accuracy", blog.last_value(Metric::val_accuracy).value_or(0.0)},
                       {"final_val_loss", blog.last_value(Metric::val_loss).value_or(0.0)},
                       {"final_weight_decay", baseline.result.final_weight_decay}};
    write_text_file(out_dir / "comparison.json", cmp.dump(2) + "\n");

    PlotSpec wd_plot;
    wd_plot.title = "Layer-wise weight decay under OUI control";
    wd_plot.y_label = "weight decay";
    wd_plot.log_y = true;
    for (std::size_t l = 0; l + 1 < cfg.widths.size() - 1; ++l)
        wd_plot.series.push_back(series_from_log("layer " + std::to_string(l), clog.series(Metric::weight_decay, l)));
    write_text_file(out_dir / "weight_decay.svg", render_svg(wd_plot));

    out << "max parameter difference vs baseline: " << format_double(diff) << "\n";
    out << "controlled final val accuracy " << cmp["controlled"]["final_val_accuracy"].get<double>()
        << ", baseline " << cmp["baseline"]["final_val_accuracy"].get<double>() << "\n";
    if (clog.diverged() || blog.diverged()) {
        err << "error: a run diverged\n";
        return exit_codes::divergence;
    }
    return exit_codes::success;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

inline std::vector<fs::path> find_run_csvs(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError("log directory '" + dir.string() + "' does not exist");
    std::vector<fs::path> found;
    for (const auto& entry : fs::recursive_directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".csv") found.push_back(entry.path());
    std::sort(found.begin(), found.end());
    if (found.empty()) throw IoError("no run CSV files under '" + dir.string() + "'");
    return found;
}

// Fraction-of-maximum normalization so two observables share one axis.
inline PlotSeries normalized(PlotSeries s) {
    double peak = 0.0;
    for (double v : s.y) peak = std::max(peak, std::abs(v));
    if (peak > 0.0)
        for (double& v : s.y) v /= peak;
    return s;
}

inline int cmd_report(const Options& opt, std::ostream& out, [[maybe_unused]] std::ostream& err) {
    const fs::path log_dir = opt.log_dir;
    const auto csvs = find_run_csvs(log_dir);
    const fs::path out_dir = opt.out.empty() ? log_dir / "report" : fs::path(opt.out);

    std::vector<TrajectoryLog> logs;
    for (const auto& p : csvs) logs.push_back(read_run(p));

    std::ostringstream table;
    table << std::left << std::setw(48) << "run" << std::setw(9) << "steps" << std::setw(12) << "val acc"
          << std::setw(12) << "val loss" << std::setw(12) << "mean OUI" << "diverged\n";
    for (std::size_t i = 0; i < logs.size(); ++i) {
        const auto& log = logs[i];
        const std::string stem = csvs[i].stem().string();

        PlotSpec loss;
        loss.title = stem + ": loss";
        loss.y_label = "loss";
        loss.series.push_back(series_from_log("train loss", log.series(Metric::train_loss)));
        loss.series.push_back(series_from_log("val loss", log.series(Metric::val_loss)));
        write_text_file(out_dir / (stem + "_loss.svg"), render_svg(loss));

        PlotSpec oui_plot;
        oui_plot.title = stem + ": OUI per module";
        oui_plot.y_label = "OUI";
        for (ModuleId m = 0; m < log.module_count(); ++m) {
            oui_plot.series.push_back(series_from_log("module " + std::to_string(m), log.series(Metric::oui, m)));
            oui_plot.series.push_back(
                series_from_log("module " + std::to_string(m) + " smoothed", log.series(Metric::oui_smoothed, m)));
        }
        write_text_file(out_dir / (stem + "_oui.svg"), render_svg(oui_plot));

        PlotSpec conv;
        conv.title = stem + ": mask change rate vs loss";
        conv.y_label = "mask change rate";
        conv.y2_label = "loss / max loss";
        conv.series.push_back(series_from_log("mask change rate", log.series(Metric::mask_change_rate)));
        auto tl = normalized(series_from_log("train loss", log.series(Metric::train_loss)));
        auto vl = normalized(series_from_log("val loss", log.series(Metric::val_loss)));
        tl.right_axis = vl.right_axis = true;
        conv.series.push_back(std::move(tl));
        conv.series.push_back(std::move(vl));
        write_text_file(out_dir / (stem + "_convergence.svg"), render_svg(conv));

        double mean_oui = 0.0;
        std::size_t n = 0;
        for (ModuleId m = 0; m < log.module_count(); ++m)
            if (auto v = log.last_value(Metric::oui_smoothed, m)) {
                mean_oui += *v;
                ++n;
            }
        auto fmt = [](std::optional<double> v) {
            std::ostringstream os;
            if (v) os << std::fixed << std::setprecision(4) << *v;
            else os << "-";
            return os.str();
        };
        table << std::setw(48) << log.run_id() << std::setw(9)
              << (log.records().empty() ? 0 : log.records().back().step) << std::setw(12)
              << fmt(log.last_value(Metric::val_accuracy)) << std::setw(12) << fmt(log.last_value(Metric::val_loss))
              << std::setw(12) << fmt(n ? std::optional<double>(mean_oui / static_cast<double>(n)) : std::nullopt)
              << (log.diverged() ? "yes" : "no") << "\n";
    }
    write_text_file(out_dir / "summary.txt", table.str());
    out << table.str();
    out << "report written to " << out_dir.string() << "\n";
    return exit_codes::success;
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"OUI training instrumentation: train, screen, control, report"};
    app.require_subcommand(1);
    Options opt;
    std::uint64_t seed_override = 0;

    auto* train = app.add_subcommand("train", "Run one training configuration");
    auto* screen = app.add_subcommand("screen", "Run a hyperparameter grid and report regime separation");
    auto* control = app.add_subcommand("control", "Run OUI-controlled training plus an uncontrolled baseline");
    auto* report = app.add_subcommand("report", "Regenerate plots and tables from existing run CSVs");

    for (auto* sub : {train, screen, control}) {
        sub->add_option("--config", opt.config, "Config file (JSON)")->required();
        sub->add_option("--out", opt.out, "Output directory (overrides output_dir)");
        sub->add_option("--seed-override", seed_override, "Replace the run seed");
    }
    screen->add_option("--jobs", opt.jobs, "Concurrent runs")->check(CLI::PositiveNumber);
    report->add_option("log_dir", opt.log_dir, "Directory with run CSVs")->required();
    report->add_option("--out", opt.out, "Output directory (default <log_dir>/report)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? exit_codes::success : exit_codes::config;
    }
    for (auto* sub : {train, screen, control})
        if (sub->parsed() && sub->count("--seed-override")) opt.seed_override = seed_override;

    try {
        if (train->parsed()) return cmd_train(opt, out, err);
        if (screen->parsed()) return cmd_screen(opt, out, err);
        if (control->parsed()) return cmd_control(opt, out, err);
        return cmd_report(opt, out, err);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code(e);
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return exit_codes::io;
    }
}

}  // namespace oui::cli
