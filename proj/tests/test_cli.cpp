#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "json.hpp"
#include "ronin/models.hpp"
#include "ronin/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Runs the CLI in process with stdout and stderr captured.
int run(std::vector<std::string> args, std::string* out = nullptr) {
  args.insert(args.begin(), "ronin");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream cap, err;
  auto* old_out = std::cout.rdbuf(cap.rdbuf());
  auto* old_err = std::cerr.rdbuf(err.rdbuf());
  const int code = ronin::cli::run_cli(static_cast<int>(argv.size()), argv.data());
  std::cout.rdbuf(old_out);
  std::cerr.rdbuf(old_err);
  if (out) *out = cap.str() + err.str();
  return code;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void dump(const fs::path& p, const std::string& s) {
  std::ofstream f(p, std::ios::binary);
  f << s;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

// Small dataset and tiny TCN so the full pipeline runs in seconds.
void write_inputs(const fs::path& dir) {
  auto spec = ronin::synth::default_walking_specs()[0];
  spec.duration_s = 12.0;
  json sim = {{"specs", json::array({ronin::synth::to_json(spec)})},
              {"splits", {{"train", 2}, {"val", 1}, {"test_seen", 0}, {"test_unseen", 0}}}};
  dump(dir / "spec.json", sim.dump(2));
  ronin::models::TcnConfig tc;
  tc.channels = {4, 4};
  tc.dilations = {1, 2};
  json cfg = {{"model", ronin::models::to_json(tc)}, {"max_epochs", 2},       {"batch_size", 8},
              {"max_samples_per_epoch", 16},         {"val_max_samples", 8}, {"lr", 1e-3}};
  dump(dir / "train.json", cfg.dump(2));
}

std::string pipeline(const fs::path& dir) {
  write_inputs(dir);
  const std::string d = dir.string();
  EXPECT_EQ(run({"simulate", "--spec", d + "/spec.json", "--out", d + "/data", "--seed", "7"}), 0);
  EXPECT_EQ(run({"train", "--arch", "tcn", "--data", d + "/data", "--config", d + "/train.json", "--out",
                 d + "/model.ckpt", "--seed", "7"}),
            0);
  EXPECT_EQ(run({"predict", "--ckpt", d + "/model.ckpt", "--seq", d + "/data/seq_0000.csv", "--out",
                 d + "/est.csv"}),
            0);
  EXPECT_EQ(run({"evaluate", "--est", d + "/est.csv", "--gt", d + "/data/seq_0000.csv", "--report",
                 d + "/report.json", "--name", "tcn"}),
            0);
  EXPECT_TRUE(fs::exists(d + "/model.ckpt.manifest.json"));
  EXPECT_TRUE(fs::exists(d + "/model.ckpt.log.csv"));
  EXPECT_TRUE(fs::exists(d + "/data/splits.json"));
  return slurp(d + "/report.json");
}

}  // namespace

TEST(Cli, PipelineIsByteIdenticalAcrossRuns) {
  const std::string a = pipeline(fresh_dir("ronin_cli_a"));
  const std::string b = pipeline(fresh_dir("ronin_cli_b"));
  ASSERT_FALSE(a.empty());
  EXPECT_EQ(a, b);
  const auto j = json::parse(a);
  EXPECT_EQ(j["estimator"], "tcn");
  EXPECT_TRUE(j["ate_m"].is_number());
  EXPECT_TRUE(j["heading_mae_deg"].is_null());
}

TEST(Cli, ManifestRecordsProvenance) {
  const auto dir = fresh_dir("ronin_cli_manifest");
  pipeline(dir);
  const auto m = json::parse(slurp(dir / "report.json.manifest.json"));
  EXPECT_EQ(m["command"], "evaluate");
  EXPECT_EQ(m["version"], ronin::cli::kToolkitVersion);
  EXPECT_EQ(m["outputs"].size(), 1u);
  const auto t = json::parse(slurp(dir / "model.ckpt.manifest.json"));
  EXPECT_EQ(t["seed"], 7);
  EXPECT_EQ(t["config_hash"].get<std::string>().size(), 16u);
}

TEST(Cli, MissingGroundTruthColumnIsAnInputError) {
  const auto dir = fresh_dir("ronin_cli_nogt");
  write_inputs(dir);
  const std::string d = dir.string();
  ASSERT_EQ(run({"simulate", "--spec", d + "/spec.json", "--out", d + "/data", "--seed", "3"}), 0);
  std::istringstream in(slurp(dir / "data/seq_0000.csv"));
  std::ostringstream cut;
  std::string line;
  while (std::getline(in, line)) {
    // Drop the trailing px,py,pz,heading columns.
    std::size_t pos = line.size();
    for (int k = 0; k < 4; ++k) pos = line.rfind(',', pos - 1);
    cut << line.substr(0, pos) << "\n";
  }
  dump(dir / "nogt.csv", cut.str());
  dump(dir / "est.csv", "t,x,y\n0,0,0\n1,1,0\n");
  std::string msg;
  EXPECT_EQ(run({"evaluate", "--est", d + "/est.csv", "--gt", d + "/nogt.csv", "--report", d + "/r.json"}, &msg),
            2);
  EXPECT_NE(msg.find("header"), std::string::npos) << msg;
  EXPECT_FALSE(fs::exists(dir / "r.json"));
}

TEST(Cli, CompareEmitsOneRowPerSequenceAndMean) {
  const auto dir = fresh_dir("ronin_cli_compare");
  write_inputs(dir);
  const std::string d = dir.string();
  ASSERT_EQ(run({"simulate", "--spec", d + "/spec.json", "--out", d + "/data", "--seed", "5"}), 0);
  ASSERT_EQ(run({"compare", "--data", d + "/data", "--methods", "ndi,pdr", "--report", d + "/table.csv"}), 0);
  std::istringstream in(slurp(dir / "table.csv"));
  std::vector<std::string> rows;
  std::string line;
  while (std::getline(in, line)) rows.push_back(line);
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0], "sequence,ndi_ate,ndi_rte,pdr_ate,pdr_rte");
  EXPECT_EQ(rows[1].substr(0, 9), "seq_0000,");
  EXPECT_EQ(rows[4].substr(0, 5), "mean,");
}

TEST(Cli, UsageErrorsAndHelp) {
  EXPECT_EQ(run({}), 2);
  EXPECT_EQ(run({"teleport"}), 2);
  EXPECT_EQ(run({"train", "--arch", "tcn"}), 2);
  EXPECT_EQ(run({"train", "--arch", "gru", "--data", ".", "--out", "x"}), 2);
  std::string help;
  EXPECT_EQ(run({"--help"}, &help), 0);
  EXPECT_NE(help.find("simulate"), std::string::npos);
  EXPECT_EQ(run({"evaluate", "--help"}, &help), 0);
  EXPECT_NE(help.find("--align"), std::string::npos);
}

TEST(Cli, MissingDataDirectoryIsAnInputError) {
  EXPECT_EQ(run({"compare", "--data", "/nonexistent/ronin", "--methods", "ndi", "--report", "x.csv"}), 2);
}
