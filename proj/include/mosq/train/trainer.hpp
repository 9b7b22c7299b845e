#pragma once

// Mini-batch training of one variant with Adam and plateau decay, plus the
// inference and checkpoint plumbing the command-line tool needs.
//
// Batches never pad: a batch is split into sub-batches of equal frame count,
// gradients of all sub-batches are accumulated (each weighted by its share of
// the batch) and a single optimizer step is taken. A sub-batch of one clip is
// merged into its neighbour by cropping to the shorter length, because batch
// statistics need at least two clips.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mosq/audio/features.hpp"
#include "mosq/data/manifest.hpp"
#include "mosq/data/synth.hpp"
#include "mosq/labels/stats.hpp"
#include "mosq/metrics/metrics.hpp"
#include "mosq/models/variant.hpp"
#include "mosq/nn/checkpoint.hpp"
#include "mosq/nn/optim.hpp"
#include "mosq/train/config.hpp"

namespace mosq::train {

namespace fs = std::filesystem;

struct Sample {
  std::string clip_id;
  std::string dns_model_id;
  audio::MelSpectrogram features;
  labels::LabelStats stats;
};

inline fs::path cache_path(const fs::path& cache_dir, const std::string& clip_id) {
  return cache_dir / (clip_id + ".feat");
}

/// Features come from `cache_dir` when a cache file exists, else from the WAV.
inline std::vector<Sample> load_samples(const data::DatasetManifest& m, const std::vector<data::ManifestEntry>& entries,
                                        const std::string& cache_dir = "") {
  std::vector<Sample> out;
  out.reserve(entries.size());
  for (const auto& e : entries) {
    Sample s{e.clip_id, e.dns_model_id, {}, labels::compute_stats(e.scores)};
    if (!cache_dir.empty() && fs::exists(cache_path(cache_dir, e.clip_id))) {
      s.features = audio::read_feature_cache(cache_path(cache_dir, e.clip_id));
    } else {
      s.features = audio::extract_features(audio::read_wav(m.resolve(e)));
    }
    out.push_back(std::move(s));
  }
  return out;
}

inline std::vector<Sample> samples_from_synth(const std::vector<data::SynthClip>& clips) {
  std::vector<Sample> out;
  out.reserve(clips.size());
  for (const auto& c : clips) {
    out.push_back({c.record.clip_id, c.record.dns_model_id, audio::extract_features(c.waveform),
                   labels::compute_stats(c.record)});
  }
  return out;
}

/// Splits one batch (indices into `frames`) into sub-batches of equal length,
/// shortest first inside each group so the first member fixes the crop.
inline std::vector<std::vector<std::size_t>> plan_sub_batches(std::vector<std::size_t> batch,
                                                              const std::vector<std::size_t>& frames) {
  std::stable_sort(batch.begin(), batch.end(), [&](std::size_t a, std::size_t b) { return frames[a] < frames[b]; });
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t i : batch) {
    if (groups.empty() || frames[groups.back().front()] != frames[i]) groups.emplace_back();
    groups.back().push_back(i);
  }
  for (std::size_t g = 0; g < groups.size() && groups.size() > 1;) {
    if (groups[g].size() != 1) {
      ++g;
      continue;
    }
    if (g > 0) {
      groups[g - 1].push_back(groups[g].front());
    } else {
      groups[1].insert(groups[1].begin(), groups[0].front());
    }
    groups.erase(groups.begin() + static_cast<std::ptrdiff_t>(g));
  }
  return groups;
}

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  std::optional<double> val_loss;
  std::optional<double> train_mae;
  std::size_t steps = 0;
  std::optional<double> wall_time_s;

  std::string to_json_line() const {
    nlohmann::ordered_json j;
    j["epoch"] = epoch;
    j["lr"] = lr;
    j["train_loss"] = train_loss;
    j["val_loss"] = val_loss ? nlohmann::ordered_json(*val_loss) : nlohmann::ordered_json(nullptr);
    if (train_mae) j["train_mae"] = *train_mae;
    j["steps"] = steps;
    if (wall_time_s) j["wall_time"] = *wall_time_s;
    return j.dump();
  }
};

struct Prediction {
  double mos = 0.0;
  std::vector<double> head;
};

struct FitResult {
  std::vector<EpochRecord> log;
  double best_metric = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
  std::size_t steps = 0;
  bool reached_target = false;
};

template <typename T>
class Trainer {
 public:
  explicit Trainer(RunConfig cfg)
      : cfg_((cfg.validate(), std::move(cfg))),
        model_(models::build_variant<T>(cfg_.variant_spec(), cfg_.backbone, cfg_.seed)),
        params_(model_.parameters()),
        adam_(cfg_.initial_lr),
        scheduler_(cfg_.initial_lr, cfg_.scheduler_factor, cfg_.scheduler_patience),
        rng_(data::detail::splitmix(cfg_.seed)) {}

  const RunConfig& config() const { return cfg_; }
  models::Model<T>& model() { return model_; }
  const nn::Adam<T>& optimizer() const { return adam_; }
  const nn::PlateauScheduler& scheduler() const { return scheduler_; }
  std::size_t epoch() const { return epoch_; }
  std::size_t steps() const { return steps_; }

  /// One pass over `train` in shuffled order; returns the mean per-clip loss.
  /// Stops early once the configured step budget is spent.
  double train_epoch(const std::vector<Sample>& train) {
    if (train.size() < 2) fail(ErrorKind::DegenerateBatch, "training needs at least 2 clips");
    const auto frames = frame_table(train);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    data::shuffle(order, rng_);

    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t i = 0; i < order.size(); i += cfg_.batch_size) {
      batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                           order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + cfg_.batch_size)));
    }
    if (batches.size() > 1 && batches.back().size() == 1) {
      batches[batches.size() - 2].push_back(batches.back().front());
      batches.pop_back();
    }

    double total = 0.0;
    std::size_t seen = 0;
    for (const auto& batch : batches) {
      if (cfg_.max_steps && steps_ >= cfg_.max_steps) break;
      nn::zero_grad(params_);
      double batch_loss = 0.0;
      for (const auto& sub : plan_sub_batches(batch, frames)) {
        const T share = static_cast<T>(sub.size()) / static_cast<T>(batch.size());
        auto head = model_.forward(make_input(train, sub), nn::Mode::Train, rng_);
        auto loss = model_.loss(head, make_targets(train, sub));
        batch_loss += static_cast<double>(loss.item()) * static_cast<double>(share);
        nn::mul_scalar(loss, share).backward();
      }
      adam_.step(params_);
      ++steps_;
      total += batch_loss * static_cast<double>(batch.size());
      seen += batch.size();
    }
    return seen ? total / static_cast<double>(seen) : 0.0;
  }

  /// Eval-mode forward pass in groups of equal length.
  std::vector<nn::Tensor<T>> infer(const std::vector<Sample>& samples, std::vector<std::size_t>* order_out) {
    nn::NoGradGuard guard;
    const auto frames = frame_table(samples);
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frames[a] < frames[b]; });
    std::vector<nn::Tensor<T>> heads;
    std::vector<std::size_t> used;
    for (std::size_t i = 0; i < order.size();) {
      std::size_t j = i;
      while (j < order.size() && j - i < kInferenceBatch && frames[order[j]] == frames[order[i]]) ++j;
      std::vector<std::size_t> group(order.begin() + static_cast<std::ptrdiff_t>(i),
                                     order.begin() + static_cast<std::ptrdiff_t>(j));
      heads.push_back(model_.forward(make_input(samples, group), nn::Mode::Eval, rng_));
      used.insert(used.end(), group.begin(), group.end());
      i = j;
    }
    if (order_out) *order_out = std::move(used);
    return heads;
  }

  std::vector<Prediction> predict(const std::vector<Sample>& samples) {
    std::vector<std::size_t> order;
    const auto heads = infer(samples, &order);
    std::vector<Prediction> out(samples.size());
    nn::NoGradGuard guard;
    std::size_t pos = 0;
    for (const auto& h : heads) {
      const auto mos = model_.predict_mos(h);
      const std::size_t k = h.dim(1);
      for (std::size_t r = 0; r < h.dim(0); ++r, ++pos) {
        Prediction& p = out[order[pos]];
        p.mos = static_cast<double>(mos[r]);
        for (std::size_t c = 0; c < k; ++c) p.head.push_back(static_cast<double>(h[r * k + c]));
      }
    }
    return out;
  }

  /// Mean per-clip loss in eval mode.
  double loss_on(const std::vector<Sample>& samples) {
    std::vector<std::size_t> order;
    const auto heads = infer(samples, &order);
    nn::NoGradGuard guard;
    double total = 0.0;
    std::size_t pos = 0;
    for (const auto& h : heads) {
      std::vector<std::size_t> group(order.begin() + static_cast<std::ptrdiff_t>(pos),
                                     order.begin() + static_cast<std::ptrdiff_t>(pos + h.dim(0)));
      total += static_cast<double>(model_.loss(h, make_targets(samples, group)).item()) * static_cast<double>(h.dim(0));
      pos += h.dim(0);
    }
    return total / static_cast<double>(samples.size());
  }

  double mae_on(const std::vector<Sample>& samples) {
    const auto preds = predict(samples);
    double s = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) s += std::abs(preds[i].mos - samples[i].stats.mos);
    return s / static_cast<double>(samples.size());
  }

  /// Full training loop. When `out_dir` is non-empty, writes best.ckpt on
  /// every validation improvement, last.ckpt at the end and train_log.jsonl.
  FitResult fit(const std::vector<Sample>& train, const std::vector<Sample>& val, const fs::path& out_dir = {},
                std::ostream* progress = nullptr) {
    FitResult result;
    std::ofstream log_file;
    if (!out_dir.empty()) {
      fs::create_directories(out_dir);
      log_file.open(out_dir / "train_log.jsonl", epoch_ > 0 ? std::ios::app : std::ios::trunc);
      if (!log_file) fail(ErrorKind::Io, "cannot write training log in " + out_dir.string());
    }
    result.best_metric = scheduler_.best();
    const auto start = std::chrono::steady_clock::now();
    while (epoch_ < cfg_.max_epochs) {
      if (cfg_.max_steps && steps_ >= cfg_.max_steps) break;
      EpochRecord rec;
      rec.lr = adam_.lr();
      rec.train_loss = train_epoch(train);
      rec.epoch = ++epoch_;
      rec.steps = steps_;
      if (!val.empty()) rec.val_loss = loss_on(val);
      const double metric = rec.val_loss.value_or(rec.train_loss);
      const bool improved = metric < scheduler_.best();
      adam_.set_lr(scheduler_.step(metric));

      const bool budget_spent = cfg_.max_steps && steps_ >= cfg_.max_steps;
      if (cfg_.target_train_mae > 0.0 && (epoch_ % cfg_.mae_check_every == 0 || budget_spent || epoch_ == cfg_.max_epochs)) {
        rec.train_mae = mae_on(train);
        result.reached_target = *rec.train_mae < cfg_.target_train_mae;
      }
      if (cfg_.log_wall_time) {
        rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      }
      if (improved) {
        result.best_metric = metric;
        result.best_epoch = epoch_;
        if (!out_dir.empty()) nn::write_checkpoint(out_dir / "best.ckpt", checkpoint());
      }
      if (log_file.is_open()) log_file << rec.to_json_line() << '\n' << std::flush;
      if (progress) *progress << rec.to_json_line() << '\n' << std::flush;
      result.log.push_back(rec);
      if (result.reached_target) break;
    }
    result.steps = steps_;
    if (!out_dir.empty()) nn::write_checkpoint(out_dir / "last.ckpt", checkpoint());
    return result;
  }

  nn::Checkpoint checkpoint() const {
    nn::Checkpoint ck;
    ck.meta["format"] = "mosq-checkpoint";
    ck.meta["config"] = model_json(cfg_);
    ck.meta["epoch"] = epoch_;
    ck.meta["steps"] = steps_;
    ck.meta["parameter_count"] = model_.parameter_count();
    ck.meta["adam"] = {{"lr", adam_.lr()}, {"steps", adam_.steps()}, {"beta1", adam_.beta1()},
                       {"beta2", adam_.beta2()}, {"eps", adam_.eps()}};
    const double best = scheduler_.best();
    ck.meta["scheduler"] = {{"lr", scheduler_.lr()},
                            {"best", std::isfinite(best) ? nlohmann::ordered_json(best) : nlohmann::ordered_json(nullptr)},
                            {"stale_epochs", scheduler_.stale_epochs()},
                            {"factor", scheduler_.factor()},
                            {"patience", scheduler_.patience()}};
    std::ostringstream rng_state;
    rng_state << rng_;
    ck.meta["rng_state"] = rng_state.str();
    ck.meta["seed"] = cfg_.seed;
    for (const auto& p : params_) ck.add("param/" + p.name, p.tensor);
    for (const auto& b : model_.buffers()) ck.add("buffer/" + b.name, b.tensor);
    if (!adam_.first_moments().empty()) {
      for (std::size_t i = 0; i < params_.size(); ++i) {
        ck.add("adam.m/" + params_[i].name, adam_.first_moments()[i]);
        ck.add("adam.v/" + params_[i].name, adam_.second_moments()[i]);
      }
    }
    return ck;
  }

  /// Rebuilds a trainer (model, optimizer, scheduler, RNG) from a checkpoint.
  static Trainer from_checkpoint(const nn::Checkpoint& ck, RunConfig io = {}) {
    if (!ck.meta.contains("config")) fail(ErrorKind::BadCheckpoint, "checkpoint has no config");
    RunConfig cfg = io;
    apply_json(cfg, ck.meta["config"]);
    Trainer t(cfg);
    t.restore(ck);
    return t;
  }

  void restore(const nn::Checkpoint& ck) {
    try {
      for (auto& p : params_) ck.load_into("param/" + p.name, p.tensor);
      for (auto b : model_.buffers()) ck.load_into("buffer/" + b.name, b.tensor);
      epoch_ = ck.meta.at("epoch").get<std::size_t>();
      steps_ = ck.meta.at("steps").get<std::size_t>();
      const auto& a = ck.meta.at("adam");
      adam_.set_lr(a.at("lr").get<double>());
      adam_.set_steps(a.at("steps").get<std::uint64_t>());
      if (ck.find("adam.m/" + params_.front().name)) {
        auto& m1 = adam_.first_moments();
        auto& m2 = adam_.second_moments();
        m1.clear();
        m2.clear();
        for (const auto& p : params_) {
          const auto* e1 = ck.find("adam.m/" + p.name);
          const auto* e2 = ck.find("adam.v/" + p.name);
          if (!e1 || !e2 || e1->values.size() != p.tensor.numel()) fail(ErrorKind::BadCheckpoint, "adam state for " + p.name);
          m1.emplace_back(e1->values.begin(), e1->values.end());
          m2.emplace_back(e2->values.begin(), e2->values.end());
        }
      }
      const auto& s = ck.meta.at("scheduler");
      const double best = s.at("best").is_null() ? std::numeric_limits<double>::infinity() : s.at("best").get<double>();
      scheduler_.restore(s.at("lr").get<double>(), best, s.at("stale_epochs").get<int>());
      std::istringstream rs(ck.meta.at("rng_state").get<std::string>());
      rs >> rng_;
      if (!rs) fail(ErrorKind::BadCheckpoint, "bad rng state");
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::BadCheckpoint, e.what());
    }
  }

 private:
  static constexpr std::size_t kInferenceBatch = 64;

  static std::vector<std::size_t> frame_table(const std::vector<Sample>& s) {
    std::vector<std::size_t> f(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) f[i] = s[i].features.frames;
    return f;
  }

  static nn::Tensor<T> make_input(const std::vector<Sample>& samples, const std::vector<std::size_t>& idx) {
    std::vector<const audio::MelSpectrogram*> feats;
    for (std::size_t i : idx) feats.push_back(&samples[i].features);
    return models::make_batch<T>(feats);
  }

  static models::Targets<T> make_targets(const std::vector<Sample>& samples, const std::vector<std::size_t>& idx) {
    models::Targets<T> tg;
    for (std::size_t i : idx) tg.push(samples[i].stats);
    return tg;
  }

  RunConfig cfg_;
  models::Model<T> model_;
  nn::ParameterList<T> params_;
  nn::Adam<T> adam_;
  nn::PlateauScheduler scheduler_;
  nn::Rng rng_;
  std::size_t epoch_ = 0;
  std::size_t steps_ = 0;
};

/// Prediction records for metrics; histogram fields are filled for
/// histogram-head models.
inline std::vector<metrics::PredictionRecord> prediction_records(const std::vector<Sample>& samples,
                                                                 const std::vector<Prediction>& preds,
                                                                 models::HeadKind head) {
  std::vector<metrics::PredictionRecord> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    metrics::PredictionRecord r;
    r.clip_id = samples[i].clip_id;
    r.dns_model_id = samples[i].dns_model_id;
    r.predicted_mos = preds[i].mos;
    r.ground_truth_mos = samples[i].stats.mos;
    if (head == models::HeadKind::Hist5) {
      std::array<double, 5> p{};
      std::copy_n(preds[i].head.begin(), 5, p.begin());
      r.predicted_histogram = p;
      r.ground_truth_histogram = samples[i].stats.histogram;
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace mosq::train
