#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(TNFN_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("tnfn_cli_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

nlohmann::json read_json(const fs::path& p) {
  nlohmann::json j;
  std::ifstream(p) >> j;
  return j;
}

}  // namespace

TEST(Cli, VerifyPassesAndWritesReport) {
  const auto dir = temp_dir("verify");
  EXPECT_EQ(run("verify --instances 10 --report " + (dir / "r.json").string()), 0);
  const auto j = read_json(dir / "r.json");
  EXPECT_EQ(j["schema"], "tnfn-verify/1");
  EXPECT_TRUE(j["pass"].get<bool>());
  fs::remove_all(dir);
}

TEST(Cli, BrokenReluPlacementFails) {
  const auto dir = temp_dir("broken");
  EXPECT_EQ(run("verify --instances 10 --break-relu-placement --report " + (dir / "r.json").string()), 2);
  const auto j = read_json(dir / "r.json");
  EXPECT_FALSE(j["pass"].get<bool>());
  fs::remove_all(dir);
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run("verify --instances 0"), 3);
  EXPECT_EQ(run("verify --dims 2,8,4"), 3);
  EXPECT_EQ(run("verify --dims 2,4,8,8,8"), 3);
  EXPECT_EQ(run("verify --scale-range x"), 3);
  EXPECT_EQ(run("frobnicate"), 3);
  EXPECT_EQ(run(""), 3);
  EXPECT_EQ(run("gen-zoo --out /tmp/x --config /nonexistent.json"), 3);
  EXPECT_EQ(run("predict --model /nonexistent --checkpoint /nonexistent"), 3);
  EXPECT_EQ(run("train-nfn --zoo /nonexistent --out /tmp/y"), 3);
  EXPECT_EQ(run("--help"), 0);
}

TEST(Cli, ZooTrainPredictAugment) {
  const auto dir = temp_dir("pipeline");
  {
    std::ofstream(dir / "zoo.json") << R"({"optimizers": ["adam", "sgd"],
      "learning_rates": {"adam": [0.001, 0.01, 0.03], "sgd": [0.1, 0.3]}, "init_stds": [0.3], "dropouts": [0.0],
      "l2": [1e-6], "epochs": 3, "checkpoint_epochs": [1, 2, 3], "train_size": 96, "test_size": 64,
      "model": {"model": 8, "key": 4, "value": 4, "hidden": 8}})";
    std::ofstream(dir / "exp.json") << R"({"nfn": {"hidden_channels": 2, "features": 3},
      "nfn_train": {"epochs": 2}, "mlp_train": {"epochs": 2}})";
  }
  const std::string d = dir.string();
  ASSERT_EQ(run("gen-zoo --config " + d + "/zoo.json --out " + d + "/zoo --jobs 2"), 0);
  ASSERT_EQ(run("train-nfn --zoo " + d + "/zoo --config " + d + "/exp.json --split 0.5 --out " + d + "/model"), 0);
  const auto rep = read_json(dir / "model" / "report.json");
  EXPECT_EQ(rep["schema"], "tnfn-prediction/1");
  EXPECT_TRUE(rep.contains("tau_nfn"));
  EXPECT_EQ(run("predict --model " + d + "/model --checkpoint " + d + "/zoo/records/cell0000_epoch1"), 0);
  ASSERT_EQ(run("augment-study --zoo " + d + "/zoo --config " + d + "/exp.json --split 0.5 --ranges 1,10 --out " + d +
                "/aug.json"),
            0);
  const auto aug = read_json(dir / "aug.json");
  EXPECT_EQ(aug["schema"], "tnfn-augment/1");
  EXPECT_EQ(aug["rows"].size(), 3u);
  for (const auto& row : aug["rows"])
    for (const char* k : {"range", "tau_nfn", "tau_mlp", "gap"}) EXPECT_TRUE(row.contains(k));
  fs::remove_all(dir);
}
