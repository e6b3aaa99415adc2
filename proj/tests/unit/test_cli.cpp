#include "test_helpers.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

using namespace oui;
namespace fs = std::filesystem;

namespace {

struct CliResult {
    int code;
    std::string out;
    std::string err;
};

CliResult run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "oui_cli");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string write_json(const fs::path& path, const json& j) {
    write_text_file(path, j.dump(2));
    return path.string();
}

std::string slurp(const fs::path& p) { return read_text_file(p); }

GridSpec toy_grid(const std::string& id) {
    GridSpec g;
    g.base = testkit::small_run_config(id);
    g.base.total_steps = 60;
    g.values = {1e-4, 1e-2};
    g.seeds = {1, 2};
    return g;
}

}  // namespace

TEST(CliTrain, WritesOutputs) {
    const auto dir = testkit::scratch_dir("cli_train");
    const auto cfg = write_json(dir / "run.json", to_json(testkit::small_run_config("demo")));
    const auto r = run_cli({"train", "--config", cfg, "--out", (dir / "out").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(dir / "out" / "demo.csv"));
    EXPECT_TRUE(fs::exists(dir / "out" / "demo.json"));
    EXPECT_TRUE(fs::exists(dir / "out" / "demo.ckpt"));
    const auto ck = load_checkpoint(dir / "out" / "demo.ckpt");
    EXPECT_EQ(ck.step, 120);
}

TEST(CliTrain, MissingConfigNamesPath) {
    const auto r = run_cli({"train", "--config", "/nonexistent/where.json"});
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.err.find("/nonexistent/where.json"), std::string::npos) << r.err;
}

TEST(CliTrain, RepeatedRunsByteIdentical) {
    const auto dir = testkit::scratch_dir("cli_repeat");
    const auto cfg = write_json(dir / "run.json", to_json(testkit::small_run_config("rep")));
    ASSERT_EQ(run_cli({"train", "--config", cfg, "--out", (dir / "a").string()}).code, 0);
    ASSERT_EQ(run_cli({"train", "--config", cfg, "--out", (dir / "b").string()}).code, 0);
    EXPECT_EQ(slurp(dir / "a" / "rep.csv"), slurp(dir / "b" / "rep.csv"));
    EXPECT_EQ(slurp(dir / "a" / "rep.ckpt"), slurp(dir / "b" / "rep.ckpt"));
}

TEST(CliTrain, SeedOverrideChangesRun) {
    const auto dir = testkit::scratch_dir("cli_seed");
    const auto cfg = write_json(dir / "run.json", to_json(testkit::small_run_config("s")));
    ASSERT_EQ(run_cli({"train", "--config", cfg, "--out", (dir / "a").string()}).code, 0);
    ASSERT_EQ(run_cli({"train", "--config", cfg, "--out", (dir / "b").string(), "--seed-override", "99"}).code, 0);
    EXPECT_NE(slurp(dir / "a" / "s.csv"), slurp(dir / "b" / "s.csv"));
}

TEST(CliTrain, ExitCodes) {
    const auto dir = testkit::scratch_dir("cli_codes");
    auto j = to_json(testkit::small_run_config("bad"));
    j["bogus"] = true;
    EXPECT_EQ(run_cli({"train", "--config", write_json(dir / "bad.json", j)}).code, exit_codes::config);
    auto div = testkit::small_run_config("div");
    div.optimizer.learning_rate = 1e6;
    EXPECT_EQ(run_cli({"train", "--config", write_json(dir / "div.json", to_json(div)), "--out",
                       (dir / "out").string()})
                  .code,
              exit_codes::divergence);
    EXPECT_EQ(run_cli({"train"}).code, exit_codes::config);
}

TEST(CliScreen, ToyGridReport) {
    const auto dir = testkit::scratch_dir("cli_screen");
    const auto cfg = write_json(dir / "grid.json", to_json(toy_grid("toy")));
    const auto r = run_cli({"screen", "--config", cfg, "--out", (dir / "a").string(), "--jobs", "2"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto report = json::parse(slurp(dir / "a" / "report.json"));
    EXPECT_EQ(report["runs"].size(), 4u);
    EXPECT_TRUE(report["separated"].is_boolean());
    EXPECT_TRUE(fs::exists(dir / "a" / "oui_trajectories.svg"));
    EXPECT_TRUE(fs::exists(dir / "a" / "report.txt"));

    ASSERT_EQ(run_cli({"screen", "--config", cfg, "--out", (dir / "b").string()}).code, 0);
    EXPECT_EQ(slurp(dir / "a" / "report.json"), slurp(dir / "b" / "report.json"));
    EXPECT_EQ(slurp(dir / "a" / "oui_trajectories.svg"), slurp(dir / "b" / "oui_trajectories.svg"));
}

TEST(CliScreen, DivergingConfigFlagged) {
    const auto dir = testkit::scratch_dir("cli_screen_div");
    auto g = toy_grid("lr");
    g.axis = GridAxis::learning_rate;
    g.values = {0.01, 1e6};
    const auto r = run_cli({"screen", "--config", write_json(dir / "grid.json", to_json(g)), "--out", dir.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("flagged"), std::string::npos);
    const auto report = json::parse(slurp(dir / "report.json"));
    EXPECT_EQ(report["configs"][1]["diverged"], 2);
    EXPECT_EQ(report["configs"][0]["diverged"], 0);
}

TEST(CliControl, ZeroGainZeroDifference) {
    const auto dir = testkit::scratch_dir("cli_control");
    auto cfg = testkit::small_run_config("ctl");
    cfg.controller = ControllerConfig{0.5, 0.0, 10, 1e-6, 1e-1, 0.1};
    const auto r = run_cli({"control", "--config", write_json(dir / "c.json", to_json(cfg)), "--out", dir.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto cmp = json::parse(slurp(dir / "comparison.json"));
    EXPECT_EQ(cmp["max_parameter_difference"].get<double>(), 0.0);
    EXPECT_TRUE(cmp["parameters_bit_identical"].get<bool>());
    EXPECT_TRUE(fs::exists(dir / "weight_decay.svg"));
    EXPECT_TRUE(fs::exists(dir / "ctl_controlled.csv"));
    EXPECT_TRUE(fs::exists(dir / "ctl_baseline.csv"));
}

TEST(CliControl, InvertedBoundsFailBeforeTraining) {
    const auto dir = testkit::scratch_dir("cli_control_bad");
    auto j = to_json(testkit::small_run_config("ctl"));
    j["controller"] = {{"wd_min", 1e-2}, {"wd_max", 1e-4}};
    const auto r = run_cli({"control", "--config", write_json(dir / "c.json", j), "--out", (dir / "out").string()});
    EXPECT_EQ(r.code, exit_codes::config);
    EXPECT_FALSE(fs::exists(dir / "out"));
}

TEST(CliControl, RequiresControllerSection) {
    const auto dir = testkit::scratch_dir("cli_control_none");
    const auto cfg = write_json(dir / "c.json", to_json(testkit::small_run_config("x")));
    EXPECT_EQ(run_cli({"control", "--config", cfg}).code, exit_codes::config);
}

TEST(CliReport, FromTrainDirectory) {
    const auto dir = testkit::scratch_dir("cli_report");
    const auto cfg = write_json(dir / "run.json", to_json(testkit::small_run_config("rep")));
    ASSERT_EQ(run_cli({"train", "--config", cfg, "--out", (dir / "logs").string()}).code, 0);
    const auto before = slurp(dir / "logs" / "rep.csv");
    const auto r = run_cli({"report", (dir / "logs").string(), "--out", (dir / "rep").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    for (const char* f : {"rep_loss.svg", "rep_oui.svg", "rep_convergence.svg", "summary.txt"})
        EXPECT_TRUE(fs::exists(dir / "rep" / f)) << f;
    EXPECT_EQ(slurp(dir / "logs" / "rep.csv"), before);
    const auto first = slurp(dir / "rep" / "rep_convergence.svg");
    ASSERT_EQ(run_cli({"report", (dir / "logs").string(), "--out", (dir / "rep").string()}).code, 0);
    EXPECT_EQ(slurp(dir / "rep" / "rep_convergence.svg"), first);
}

TEST(CliReport, EmptyDirectory) {
    const auto dir = testkit::scratch_dir("cli_report_empty");
    EXPECT_NE(run_cli({"report", dir.string()}).code, 0);
}

TEST(CliReport, CorruptedCsvNamesFileAndLine) {
    const auto dir = testkit::scratch_dir("cli_report_bad");
    write_text_file(dir / "broken.csv", "step,metric,module_id,value\n0,oui,0,0.5\n1,oui,0\n");
    const auto r = run_cli({"report", dir.string()});
    EXPECT_EQ(r.code, exit_codes::io);
    EXPECT_NE(r.err.find("broken.csv:3"), std::string::npos) << r.err;
}
