#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <iterator>
#include <set>
#include <sys/wait.h>

#include "mosq/audio/features.hpp"
#include "mosq/data/manifest.hpp"
#include "mosq/nn/checkpoint.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;

namespace {

int run(const std::string& args, const fs::path& cwd) {
  const std::string cmd = "cd '" + cwd.string() + "' && '" MOSQ_CLI_PATH "' " + args + " > cli.log 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new testutil::TempDir("cli");
    ASSERT_EQ(run("synth -o corpus --models 3 --clips 4 --seconds 1", dir_->path()), 0);
  }
  static void TearDownTestSuite() { delete dir_; }
  static testutil::TempDir* dir_;
};

testutil::TempDir* Cli::dir_ = nullptr;

}  // namespace

TEST_F(Cli, SynthManifestReloads) {
  const auto m = mosq::data::load_manifest(*dir_ / "corpus/manifest.jsonl");
  EXPECT_EQ(m.entries.size(), 12u);
}

TEST_F(Cli, FeaturizeWritesOneCachePerClip) {
  ASSERT_EQ(run("featurize -m corpus/manifest.jsonl --cache feats", dir_->path()), 0);
  const auto m = mosq::data::load_manifest(*dir_ / "corpus/manifest.jsonl");
  for (const auto& e : m.entries) {
    const auto f = mosq::audio::read_feature_cache(*dir_ / ("feats/" + e.clip_id + ".feat"));
    EXPECT_EQ(f.frames, 97u);
  }
}

TEST_F(Cli, TrainEvalReport) {
  ASSERT_EQ(run("train -m corpus/manifest.jsonl -o run --variant VIII --batch-size 4 --epochs 2 --val-fraction 0.25",
                dir_->path()),
            0)
      << slurp(*dir_ / "cli.log");
  EXPECT_NE(slurp(*dir_ / "cli.log").find("trainable parameters 51967"), std::string::npos);
  for (const char* f : {"best.ckpt", "last.ckpt", "train_log.jsonl", "config.json", "split.jsonl"}) {
    EXPECT_TRUE(fs::exists(*dir_ / "run" / f)) << f;
  }
  ASSERT_EQ(run("eval --checkpoint run/best.ckpt -m run/split.jsonl --split val -o ev", dir_->path()), 0)
      << slurp(*dir_ / "cli.log");
  const auto csv = slurp(*dir_ / "ev/metrics.csv");
  EXPECT_NE(csv.find("stack_ranked_bin3,srcc"), std::string::npos);
  EXPECT_NE(slurp(*dir_ / "ev/metrics.txt").find("Stack-ranked SRCC per bin"), std::string::npos);
  EXPECT_TRUE(fs::exists(*dir_ / "ev/predictions.csv"));

  ASSERT_EQ(run("report --checkpoint run/best.ckpt -m run/split.jsonl -o rep", dir_->path()), 0);
  EXPECT_TRUE(fs::exists(*dir_ / "rep/scatter.csv"));
  EXPECT_TRUE(fs::exists(*dir_ / "rep/label_stats.csv"));
}

TEST_F(Cli, ReportShowsFiveNeuronsForOpinionScoreVariant) {
  ASSERT_EQ(run("train -m corpus/manifest.jsonl -o runx --variant X_relu --batch-size 4 --epochs 1", dir_->path()), 0);
  ASSERT_EQ(run("report --checkpoint runx/last.ckpt -m corpus/manifest.jsonl -o repx", dir_->path()), 0);
  std::ifstream in(*dir_ / "repx/activations.csv");
  std::set<std::string> neurons;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) neurons.insert(line.substr(0, line.find(',')));
  EXPECT_EQ(neurons, (std::set<std::string>{"0", "1", "2", "3", "4"}));
}

TEST_F(Cli, ConfigFileWithFlagOverride) {
  std::ofstream(*dir_ / "cfg.json") << R"({"variant":"II","batch_size":4,"max_epochs":1,"manifest":"corpus/manifest.jsonl","out_dir":"runc"})";
  ASSERT_EQ(run("train -c cfg.json --seed 5", dir_->path()), 0) << slurp(*dir_ / "cli.log");
  const auto cfg = nlohmann::json::parse(slurp(*dir_ / "runc/config.json"));
  EXPECT_EQ(cfg["seed"].get<int>(), 5);
  EXPECT_EQ(cfg["batch_size"].get<int>(), 4);
  const auto ck = mosq::nn::read_checkpoint(*dir_ / "runc/last.ckpt");
  EXPECT_EQ(ck.meta["config"]["seed"].get<int>(), 5);
}

TEST_F(Cli, ArchivedConfigReproducesLog) {
  ASSERT_EQ(run("train -m corpus/manifest.jsonl -o rep1 --batch-size 4 --epochs 2", dir_->path()), 0);
  ASSERT_EQ(run("train -c rep1/config.json -o rep2", dir_->path()), 0);
  EXPECT_EQ(slurp(*dir_ / "rep1/train_log.jsonl"), slurp(*dir_ / "rep2/train_log.jsonl"));
  EXPECT_EQ(slurp(*dir_ / "rep1/last.ckpt"), slurp(*dir_ / "rep2/last.ckpt"));
}

TEST_F(Cli, ResumeAppendsToLog) {
  ASSERT_EQ(run("train -m corpus/manifest.jsonl -o res --batch-size 4 --epochs 1", dir_->path()), 0);
  ASSERT_EQ(run("train -m corpus/manifest.jsonl -o res --epochs 2 --resume res/last.ckpt", dir_->path()), 0)
      << slurp(*dir_ / "cli.log");
  const auto log = slurp(*dir_ / "res/train_log.jsonl");
  EXPECT_NE(log.find("\"epoch\":2"), std::string::npos);
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 2);
}

TEST_F(Cli, ErrorsExitNonzero) {
  EXPECT_NE(run("eval --checkpoint missing.ckpt -m corpus/manifest.jsonl", dir_->path()), 0);
  EXPECT_NE(slurp(*dir_ / "cli.log").find("BadCheckpoint"), std::string::npos);
  EXPECT_NE(run("train -m corpus/manifest.jsonl --variant I", dir_->path()), 0);
  EXPECT_NE(run("train", dir_->path()), 0);
  EXPECT_NE(run("train -m corpus/manifest.jsonl --batch-size 1", dir_->path()), 0);
  std::ofstream(*dir_ / "bad.json") << R"({"learning_rate":0.1})";
  EXPECT_NE(run("train -c bad.json", dir_->path()), 0);
  EXPECT_NE(slurp(*dir_ / "cli.log").find("unknown config key"), std::string::npos);
  EXPECT_NE(run("bogus", dir_->path()), 0);
}
