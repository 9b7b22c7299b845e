#include <gtest/gtest.h>

#include <fstream>
#include <iterator>

#include "mosq/train/experiment.hpp"
#include "test_util.hpp"

using namespace mosq;
using namespace mosq::train;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

const std::vector<Sample>& tiny_corpus() {
  static const std::vector<Sample> s = [] {
    data::SynthSpec spec;
    spec.n_models = 3;
    spec.clips_per_model = 4;
    spec.clip_seconds = 0.75;
    return samples_from_synth(data::synthesize(spec));
  }();
  return s;
}

// Last clip of every model goes to validation.
std::pair<std::vector<Sample>, std::vector<Sample>> tiny_split() {
  std::vector<Sample> train, val;
  for (std::size_t i = 0; i < tiny_corpus().size(); ++i) (i % 4 == 3 ? val : train).push_back(tiny_corpus()[i]);
  return {train, val};
}

RunConfig tiny_config() {
  RunConfig c;
  c.batch_size = 4;
  c.max_epochs = 3;
  return c;
}

std::vector<nlohmann::json> read_log(const fs::path& p) {
  std::vector<nlohmann::json> out;
  std::ifstream in(p);
  for (std::string line; std::getline(in, line);) out.push_back(nlohmann::json::parse(line));
  return out;
}

}  // namespace

TEST(SubBatches, GroupsByLength) {
  const std::vector<std::size_t> frames{100, 90, 100, 90, 80, 100};
  const auto g = plan_sub_batches({0, 1, 2, 3, 4, 5}, frames);
  ASSERT_EQ(g.size(), 2u);
  EXPECT_EQ(g[0], (std::vector<std::size_t>{4, 1, 3}));
  EXPECT_EQ(g[1], (std::vector<std::size_t>{0, 2, 5}));
}

TEST(SubBatches, LeadingSingletonJoinsNextGroup) {
  const std::vector<std::size_t> frames{70, 90, 90};
  const auto g = plan_sub_batches({1, 0, 2}, frames);
  ASSERT_EQ(g.size(), 1u);
  EXPECT_EQ(g[0], (std::vector<std::size_t>{0, 1, 2}));
}

TEST(SubBatches, UniformLengthIsOneGroup) {
  const auto g = plan_sub_batches({2, 0, 1}, {97, 97, 97});
  ASSERT_EQ(g.size(), 1u);
  EXPECT_EQ(g[0].size(), 3u);
}

TEST(Config, JsonOverlayAndErrors) {
  RunConfig c;
  apply_json(c, nlohmann::json::parse(R"({"variant":"viii","batch_size":32,"initial_lr":0.01,"seed":9})"));
  EXPECT_EQ(c.variant, "viii");
  EXPECT_EQ(c.batch_size, 32u);
  EXPECT_EQ(c.variant_spec().id, models::VariantId::VIII_w);
  EXPECT_MOSQ_ERROR(apply_json(c, nlohmann::json::parse(R"({"lr":1})")), ErrorKind::InvalidConfig);
  EXPECT_MOSQ_ERROR(apply_json(c, nlohmann::json::parse(R"({"batch_size":"big"})")), ErrorKind::InvalidConfig);
  RunConfig bad;
  bad.batch_size = 1;
  EXPECT_MOSQ_ERROR(bad.validate(), ErrorKind::InvalidConfig);
  bad = RunConfig{};
  bad.variant = "I";
  EXPECT_MOSQ_ERROR(bad.validate(), ErrorKind::InvalidConfig);
}

TEST(Config, RoundTripThroughJson) {
  RunConfig c;
  c.variant = "X_relu";
  c.backbone.dropout_p = 0.0;
  c.max_steps = 17;
  RunConfig d;
  apply_json(d, to_json(c));
  EXPECT_EQ(to_json(d), to_json(c));
}

TEST(Defaults, ReferenceRecipe) {
  const RunConfig c;
  EXPECT_EQ(c.batch_size, 256u);
  EXPECT_EQ(c.initial_lr, 0.001);
  EXPECT_EQ(c.max_epochs, 100u);
  EXPECT_EQ(c.scheduler_factor, 0.1);
  EXPECT_EQ(c.scheduler_patience, 10);
}

TEST(Trainer, StepsPerEpochAndBudget) {
  auto c = tiny_config();
  Trainer<float> t(c);
  t.train_epoch(tiny_corpus());
  EXPECT_EQ(t.steps(), 3u);
  c.max_steps = 4;
  Trainer<float> u(c);
  const auto r = u.fit(tiny_corpus(), {});
  EXPECT_EQ(r.steps, 4u);
  EXPECT_EQ(r.log.size(), 2u);
}

TEST(Trainer, NeedsTwoClips) {
  Trainer<float> t(tiny_config());
  EXPECT_MOSQ_ERROR(t.train_epoch({tiny_corpus()[0]}), ErrorKind::DegenerateBatch);
}

TEST(Trainer, LogAndCheckpointsWritten) {
  testutil::TempDir dir("fit");
  Trainer<float> t(tiny_config());
  const auto [train, val] = tiny_split();
  const auto r = t.fit(train, val, dir.path());
  EXPECT_TRUE(fs::exists(dir / "best.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "last.ckpt"));
  const auto log = read_log(dir / "train_log.jsonl");
  ASSERT_EQ(log.size(), 3u);
  for (std::size_t e = 0; e < log.size(); ++e) {
    EXPECT_EQ(log[e]["epoch"].get<std::size_t>(), e + 1);
    EXPECT_TRUE(log[e]["val_loss"].is_number());
    EXPECT_EQ(log[e]["lr"].get<double>(), 0.001);
    EXPECT_FALSE(log[e].contains("wall_time"));
  }
  EXPECT_GE(r.best_epoch, 1u);
  const auto ck = nn::read_checkpoint(dir / "last.ckpt");
  EXPECT_EQ(ck.meta["epoch"].get<std::size_t>(), 3u);
  EXPECT_EQ(ck.meta["parameter_count"].get<std::size_t>(), 51707u);
}

TEST(Trainer, LoggedLrMatchesSchedulerReplay) {
  auto c = tiny_config();
  c.max_epochs = 14;
  c.scheduler_patience = 2;
  c.initial_lr = 1e-7;
  Trainer<float> t(c);
  const auto [train, val] = tiny_split();
  const auto r = t.fit(train, val);
  nn::PlateauScheduler replay(c.initial_lr, c.scheduler_factor, c.scheduler_patience);
  double lr = c.initial_lr;
  int drops = 0;
  for (const auto& rec : r.log) {
    EXPECT_EQ(rec.lr, lr) << rec.epoch;
    const double next = replay.step(*rec.val_loss);
    if (next != lr) {
      EXPECT_DOUBLE_EQ(next, lr * 0.1);
      ++drops;
    }
    lr = next;
  }
  EXPECT_EQ(t.optimizer().lr(), lr);
  EXPECT_GT(drops, 0);
}

TEST(Trainer, TargetMaeStopsEarly) {
  auto c = tiny_config();
  c.max_epochs = 4;
  c.target_train_mae = 10.0;
  c.mae_check_every = 2;
  Trainer<float> t(c);
  const auto r = t.fit(tiny_corpus(), {});
  EXPECT_TRUE(r.reached_target);
  EXPECT_EQ(r.log.size(), 2u);
  EXPECT_FALSE(r.log[0].train_mae.has_value());
  EXPECT_TRUE(r.log[1].train_mae.has_value());
}

TEST(Trainer, SameSeedByteIdenticalArtifacts) {
  testutil::TempDir a("det_a"), b("det_b");
  auto c = tiny_config();
  c.variant = "VII_ce";
  Trainer<float>(c).fit(tiny_corpus(), {}, a.path());
  Trainer<float>(c).fit(tiny_corpus(), {}, b.path());
  for (const char* f : {"train_log.jsonl", "best.ckpt", "last.ckpt"}) EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  c.seed = 2;
  testutil::TempDir d("det_c");
  Trainer<float>(c).fit(tiny_corpus(), {}, d.path());
  EXPECT_NE(slurp(a / "last.ckpt"), slurp(d / "last.ckpt"));
}

TEST(Trainer, CheckpointRestoresState) {
  auto c = tiny_config();
  c.max_epochs = 2;
  Trainer<float> t(c);
  t.fit(tiny_corpus(), {});
  const auto ck = t.checkpoint();
  auto u = Trainer<float>::from_checkpoint(ck);
  EXPECT_EQ(u.epoch(), 2u);
  EXPECT_EQ(u.steps(), t.steps());
  EXPECT_EQ(u.scheduler().best(), static_cast<double>(ck.meta["scheduler"]["best"].get<double>()));
  const auto p1 = t.predict(tiny_corpus()), p2 = u.predict(tiny_corpus());
  for (std::size_t i = 0; i < p1.size(); ++i) EXPECT_EQ(p1[i].mos, p2[i].mos);
}

TEST(Trainer, ResumeContinuesTraining) {
  testutil::TempDir dir("resume");
  auto c = tiny_config();
  c.max_epochs = 2;
  Trainer<float> t(c);
  t.fit(tiny_corpus(), {}, dir.path());
  RunConfig io;
  io.max_epochs = 4;
  auto ck = nn::read_checkpoint(dir / "last.ckpt");
  ck.meta["config"]["max_epochs"] = 4;
  auto u = Trainer<float>::from_checkpoint(ck, io);
  const auto r = u.fit(tiny_corpus(), {}, dir.path());
  EXPECT_EQ(r.log.size(), 2u);
  EXPECT_EQ(r.log.front().epoch, 3u);
  EXPECT_EQ(read_log(dir / "train_log.jsonl").size(), 4u);

  auto full_cfg = c;
  full_cfg.max_epochs = 4;
  Trainer<float> full(full_cfg);
  const auto rf = full.fit(tiny_corpus(), {});
  // Optimizer moments are stored at 32-bit precision, so the resumed run tracks closely but not bitwise.
  EXPECT_NEAR(r.log.back().train_loss, rf.log.back().train_loss, 1e-3 * (1 + rf.log.back().train_loss));
}

TEST(Trainer, BadCheckpoint) {
  nn::Checkpoint ck;
  EXPECT_MOSQ_ERROR(Trainer<float>::from_checkpoint(ck), ErrorKind::BadCheckpoint);
  auto good = Trainer<float>(tiny_config()).checkpoint();
  good.entries.pop_back();
  EXPECT_MOSQ_ERROR(Trainer<float>::from_checkpoint(good), ErrorKind::BadCheckpoint);
}

TEST(Experiment, RowsForEachVariant) {
  auto c = tiny_config();
  c.max_epochs = 1;
  const auto [train, val] = tiny_split();
  const auto res = run_experiment<float>({models::VariantId::II, models::VariantId::IX_chi}, c, train, val);
  ASSERT_EQ(res.size(), 2u);
  EXPECT_EQ(res[0].row.id, "II");
  EXPECT_FALSE(res[0].row.report.per_bin_srcc.has_value());
  EXPECT_TRUE(res[1].row.report.per_bin_srcc.has_value());
  EXPECT_EQ(res[1].predictions.size(), val.size());
}

TEST(Config, ShippedDefaultMatchesBuiltInDefaults) {
  std::ifstream in(fs::path(MOSQ_SOURCE_DIR) / "configs/default.json");
  ASSERT_TRUE(in);
  RunConfig c;
  apply_json(c, nlohmann::json::parse(in));
  EXPECT_EQ(model_json(c), model_json(RunConfig{}));
}
