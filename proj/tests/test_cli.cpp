#include "cli.hpp"

#include "foodcal/manifest.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <sstream>

namespace foodcal {
namespace {

namespace fs = std::filesystem;

struct Result {
    int code = 0;
    std::string out;
    std::string err;
};

Result cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    Result r;
    r.code = cli::run(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("foodcal_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& rel) const { return (dir_ / rel).string(); }
    nlohmann::json json_at(const std::string& rel) const { return nlohmann::json::parse(read_text_file(dir_ / rel)); }

    fs::path dir_;
};

TEST_F(Cli, HelpAndUsageErrors) {
    EXPECT_EQ(cli({"--help"}).code, 0);
    EXPECT_EQ(cli({"train", "--help"}).code, 0);
    EXPECT_EQ(cli({}).code, 1);
    EXPECT_EQ(cli({"frobnicate"}).code, 1);
    EXPECT_EQ(cli({"gen", "--bogus"}).code, 1);
    EXPECT_EQ(cli({"gen", "--threads", "0"}).code, 1);
    EXPECT_EQ(cli({"train", "--data", path("missing.csv")}).code, 1);
    const auto r = cli({"gen", "--records", "0", "--out", path("g")});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("--records"), std::string::npos);
}

TEST_F(Cli, DataErrorsExitTwoWithMessage) {
    write_text_file(dir_ / "bad.csv", "not,a,dataset\n");
    auto r = cli({"train", "--data", path("bad.csv"), "--out", path("m")});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("ParseError"), std::string::npos);

    write_text_file(dir_ / "cfg.json", R"({"sede": 3})");
    r = cli({"gen", "--config", path("cfg.json"), "--out", path("g")});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("sede"), std::string::npos);

    write_text_file(dir_ / "broken.json", "{");
    EXPECT_EQ(cli({"gen", "--config", path("broken.json"), "--out", path("g")}).code, 2);
}

TEST_F(Cli, ConfigPrecedence) {
    write_text_file(dir_ / "cfg.json", R"({"seed": 5, "records": 12, "scene": {"views_per_item": 3}})");
    ASSERT_EQ(cli({"gen", "--config", path("cfg.json"), "--out", path("a")}).code, 0);
    auto run = json_at("a/run_gen.json");
    EXPECT_EQ(run["seed"], 5);
    EXPECT_EQ(run["config"]["records"], 12);
    EXPECT_EQ(run["config"]["scene"]["views_per_item"], 3);
    EXPECT_EQ(run["version"], cli::kVersion);
    EXPECT_TRUE(run.contains("wall_clock_s"));

    ASSERT_EQ(cli({"gen", "--config", path("cfg.json"), "--seed", "9", "--records", "4", "--out", path("b")}).code, 0);
    run = json_at("b/run_gen.json");
    EXPECT_EQ(run["seed"], 9);
    EXPECT_EQ(run["config"]["records"], 4);
    EXPECT_EQ(json_at("b/dataset_manifest.json")["n_records"], 4);

    // Built-in defaults carry the documented constants.
    ASSERT_EQ(cli({"gen", "--records", "2", "--out", path("c")}).code, 0);
    run = json_at("c/run_gen.json");
    EXPECT_EQ(run["config"]["coin_diameter_mm"], 25.5);
    EXPECT_EQ(run["config"]["zscore_threshold"], 2.0);
    EXPECT_EQ(run["config"]["split"]["train"], 0.8);
    EXPECT_EQ(run["config"]["scene"]["width"], 640);
    EXPECT_EQ(run["config"]["scene"]["densities"]["Singara"], 2.61);
}

TEST_F(Cli, EnvironmentSetsDefaultOutputDirectory) {
    const auto env_dir = dir_ / "from_env";
    ::setenv(cli::kOutDirEnv, env_dir.c_str(), 1);
    const auto r = cli({"gradcheck", "--block", "conv", "--seeds", "1"});
    ::unsetenv(cli::kOutDirEnv);
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(env_dir / "gradcheck.json"));
    EXPECT_TRUE(fs::exists(env_dir / "run_gradcheck.json"));
}

TEST_F(Cli, GenIsDeterministic) {
    for (const char* sub : {"a", "b"}) {
        ASSERT_EQ(cli({"gen", "--seed", "7", "--records", "30", "--out", path(sub)}).code, 0);
    }
    ASSERT_EQ(cli({"gen", "--seed", "7", "--records", "30", "--threads", "3", "--out", path("c")}).code, 0);
    const auto a = read_text_file(dir_ / "a/dataset.csv");
    EXPECT_EQ(a, read_text_file(dir_ / "b/dataset.csv"));
    EXPECT_EQ(a, read_text_file(dir_ / "c/dataset.csv"));
    EXPECT_EQ(read_text_file(dir_ / "a/dataset_manifest.json"), read_text_file(dir_ / "c/dataset_manifest.json"));
}

TEST_F(Cli, EvalOnPerfectPredictionsReportsUnitR2) {
    ASSERT_EQ(cli({"gen", "--records", "25", "--out", path("d")}).code, 0);
    const auto r = cli({"eval", "--data", path("d/dataset.csv"), "--predictions", path("d/dataset.csv"), "--out",
                        path("e")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("R2    1.0000"), std::string::npos) << r.out;
    EXPECT_EQ(json_at("e/eval_report.json")["metrics"]["r2"], 1.0);
    EXPECT_EQ(cli({"eval", "--data", path("d/dataset.csv")}).code, 1);
}

TEST_F(Cli, RandomForestOnBenchmark) {
    ASSERT_EQ(cli({"gen", "--seed", "1", "--out", path("d")}).code, 0);
    ASSERT_EQ(cli({"train", "--data", path("d/dataset.csv"), "--model", "rf", "--seed", "1", "--out", path("m")}).code,
              0);
    ASSERT_EQ(cli({"eval", "--data", path("d/dataset.csv"), "--model", path("m/model.json"), "--out", path("e")}).code,
              0);
    const auto report = json_at("e/eval_report.json");
    EXPECT_EQ(report["subset"], "test");
    EXPECT_EQ(report["n"], 64);
    EXPECT_GE(report["metrics"]["r2"].get<double>(), 0.95);

    // The stored split only applies to the dataset it was made on.
    ASSERT_EQ(cli({"gen", "--records", "50", "--out", path("small")}).code, 0);
    EXPECT_EQ(
        cli({"eval", "--data", path("small/dataset.csv"), "--model", path("m/model.json"), "--out", path("e")}).code,
        2);
}

TEST_F(Cli, EveryModelTrains) {
    ASSERT_EQ(cli({"gen", "--records", "120", "--out", path("d")}).code, 0);
    for (const char* m : {"rf", "knn", "lr", "dt", "gb", "ada"}) {
        const auto r = cli({"train", "--data", path("d/dataset.csv"), "--model", m, "--out", path(m)});
        ASSERT_EQ(r.code, 0) << m << ": " << r.err;
        EXPECT_EQ(cli({"eval", "--data", path("d/dataset.csv"), "--model", path(std::string(m) + "/model.json"),
                       "--subset", "valid", "--out", path(m)})
                      .code,
                  0);
    }
}

TEST_F(Cli, PipelineEqualsExtractThenPredict) {
    write_text_file(dir_ / "cfg.json", R"({"scene": {"width": 360, "height": 360, "coin_diameter_px": [40, 50]}})");
    ASSERT_EQ(cli({"gen", "--config", path("cfg.json"), "--scenes", "25", "--seed", "4", "--out", path("s")}).code, 0);
    const auto ann = path("s/scenes/annotations.json");
    ASSERT_EQ(cli({"extract", "--annotations", ann, "--out", path("x")}).code, 0);
    ASSERT_EQ(cli({"train", "--data", path("x/features.csv"), "--all", "--model", "dt", "--out", path("m")}).code, 0);
    ASSERT_EQ(cli({"predict", "--data", path("x/features.csv"), "--model", path("m/model.json"), "--out", path("p")})
                  .code,
              0);
    const auto r = cli({"pipeline", "--annotations", ann, "--model", path("m/model.json"), "--out", path("q")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(read_text_file(dir_ / "p/predictions.csv"), read_text_file(dir_ / "q/estimates.csv"));
    EXPECT_EQ(json_at("q/estimates.json")["items"].size(), 25u);
    // A model trained on all rows is scored on all rows by default.
    ASSERT_EQ(cli({"eval", "--data", path("x/features.csv"), "--model", path("m/model.json"), "--out", path("e")}).code,
              0);
    EXPECT_EQ(json_at("e/eval_report.json")["subset"], "all");
}

TEST_F(Cli, ExtractWithoutCoinIsDataError) {
    write_text_file(dir_ / "cfg.json", R"({"scene": {"width": 360, "height": 360, "coin_diameter_px": [40, 50]}})");
    ASSERT_EQ(cli({"gen", "--config", path("cfg.json"), "--scenes", "1", "--out", path("s")}).code, 0);
    auto j = json_at("s/scenes/annotations.json");
    auto& inst = j["images"][0]["instances"];
    inst.erase(inst.begin());  // drop the coin
    write_text_file(dir_ / "s/scenes/nocoin.json", j.dump());
    const auto r = cli({"extract", "--annotations", path("s/scenes/nocoin.json"), "--out", path("x")});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("NoReferenceObject"), std::string::npos);
}

TEST_F(Cli, DetmetricsOnIdenticalManifests) {
    write_text_file(dir_ / "cfg.json", R"({"scene": {"width": 360, "height": 360, "coin_diameter_px": [40, 50]}})");
    ASSERT_EQ(cli({"gen", "--config", path("cfg.json"), "--scenes", "4", "--out", path("s")}).code, 0);
    const auto ann = path("s/scenes/annotations.json");
    const auto r = cli({"detmetrics", "--pred", ann, "--gt", ann, "--out", path("r")});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto rep = json_at("r/detmetrics.json");
    EXPECT_EQ(rep["box"]["map50"], 1.0);
    EXPECT_EQ(rep["mask"]["map50_95"], 1.0);
}

TEST_F(Cli, GradcheckReportsPass) {
    const auto r = cli({"gradcheck", "--seeds", "2", "--out", path("g")});
    ASSERT_EQ(r.code, 0);
    const auto rep = json_at("g/gradcheck.json");
    EXPECT_TRUE(rep["pass"].get<bool>());
    EXPECT_EQ(rep["blocks"].size(), 4u);
    EXPECT_EQ(cli({"gradcheck", "--block", "lstm"}).code, 1);
}

}  // namespace
}  // namespace foodcal
