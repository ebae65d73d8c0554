#include <filesystem>
#include <sstream>

#include <gtest/gtest.h>

#include "cbfmeta/error.hpp"
#include "cbfmeta/harness.hpp"
#include "json.hpp"

namespace cbfmeta {
namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("cbfmeta_harness_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string error_code(const std::string& err) {
  return nlohmann::json::parse(err).at("error").at("code").get<std::string>();
}

TEST(Harness, ReportOnEmptyDirectoryFails) {
  const auto dir = fresh_dir("empty");
  std::ostringstream out, err;
  EXPECT_NE(run({"report", "--out", dir.string()}, out, err), 0);
  EXPECT_EQ(error_code(err.str()), "ConfigInvalid");
}

TEST(Harness, UnknownConfigKeyRejected) {
  const auto dir = fresh_dir("badkey");
  write_text_file(dir / "cfg.json", R"({"meta": {"n_iterations": 5, "learning_rat": 0.1}})");
  std::ostringstream out, err;
  EXPECT_NE(run({"meta-train", "--config", (dir / "cfg.json").string(), "--out", dir.string()}, out, err), 0);
  EXPECT_EQ(error_code(err.str()), "ConfigInvalid");
  EXPECT_THROW(config_from_json(R"({"seed": "seven"})"), Error);
}

TEST(Harness, UnknownSubcommandRejected) {
  std::ostringstream out, err;
  EXPECT_NE(run({"train-everything"}, out, err), 0);
  EXPECT_EQ(error_code(err.str()), "ConfigInvalid");
}

TEST(Harness, ConfigRoundTrip) {
  PipelineConfig cfg;
  cfg.seed = 17;
  cfg.nll.counts = {2, 4};
  cfg.meta.learning_rate = 5e-4;
  const auto back = config_from_json(config_to_json(cfg));
  EXPECT_EQ(back.seed, 17u);
  EXPECT_EQ(back.nll.counts, (std::vector<int>{2, 4}));
  EXPECT_EQ(back.meta.learning_rate, 5e-4);
  EXPECT_EQ(config_to_json(back), config_to_json(cfg));
}

TEST(Harness, EvalNllOneTaskOneCount) {
  const auto dir = fresh_dir("evalnll");
  std::ostringstream out, err;
  write_text_file(dir / "cfg.json", R"({"meta": {"n_iterations": 3}, "eval_nll": {"n_tasks": 1, "counts": [3]}})");
  const std::string cfg = (dir / "cfg.json").string();
  ASSERT_EQ(run({"meta-train", "--config", cfg, "--out", dir.string()}, out, err), 0) << err.str();
  ASSERT_EQ(run({"eval-nll", "--config", cfg, "--out", dir.string()}, out, err), 0) << err.str();
  std::istringstream curve(read_text_file(dir / "nll_curve.csv"));
  std::string line;
  std::getline(curve, line);
  EXPECT_EQ(line, "n_points,backend,mean_nll,band_lo,band_hi,n_tasks");
  int rows = 0;
  while (std::getline(curve, line)) ++rows;
  EXPECT_EQ(rows, 2);
  const auto raw = parse_nll_raw_csv(read_text_file(dir / "nll_raw.csv"));
  ASSERT_EQ(raw.size(), 2u);
  EXPECT_EQ(raw[0].n_points, 3);

  // report folds the raw records without recomputing them.
  const std::string before = read_text_file(dir / "nll_curve.csv");
  fs::remove(dir / "nll_curve.csv");
  ASSERT_EQ(run({"report", "--out", dir.string()}, out, err), 0) << err.str();
  EXPECT_EQ(read_text_file(dir / "nll_curve.csv"), before);
}

TEST(Harness, MissingCheckpointIsConfigError) {
  const auto dir = fresh_dir("nockpt");
  std::ostringstream out, err;
  EXPECT_NE(run({"simulate", "--out", dir.string(), "--backend", "meta"}, out, err), 0);
  EXPECT_EQ(error_code(err.str()), "ConfigInvalid");
}

TEST(Harness, EpisodeCsvParse) {
  const auto rows = parse_episode_csv("t,qx,qy,theta,v,omega,eps,status\n0,1.5,-2,0,0,0,0,solved\n0.02,1.25,-2,0,0,0,0,solved\n");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1].t, 0.02);
  EXPECT_EQ(rows[1].qx, 1.25);
  EXPECT_EQ(rows[0].qy, -2.0);
}

}  // namespace
}  // namespace cbfmeta
