// Command-line driver: synth, featurize, train, eval, report, experiment.

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "mosq/train/experiment.hpp"

namespace fs = std::filesystem;
using namespace mosq;

namespace {

struct Overrides {
  std::string config_file;
  std::optional<std::string> variant, manifest, out_dir, feature_cache;
  std::optional<std::size_t> batch_size, max_epochs, max_steps;
  std::optional<double> lr, val_fraction, dropout, target_mae;
  std::optional<std::uint64_t> seed;
  bool wall_time = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("-c,--config", config_file, "JSON run config; flags override it")->check(CLI::ExistingFile);
    cmd->add_option("--variant", variant, "II .. XI_sigmoid");
    cmd->add_option("-m,--manifest", manifest, "manifest.jsonl");
    cmd->add_option("-o,--out", out_dir, "output directory");
    cmd->add_option("--feature-cache", feature_cache, "directory of .feat files");
    cmd->add_option("--batch-size", batch_size);
    cmd->add_option("--epochs", max_epochs);
    cmd->add_option("--max-steps", max_steps);
    cmd->add_option("--lr", lr);
    cmd->add_option("--val-fraction", val_fraction);
    cmd->add_option("--dropout", dropout);
    cmd->add_option("--target-train-mae", target_mae, "stop once train MAE falls below this");
    cmd->add_option("--seed", seed);
    cmd->add_flag("--log-wall-time", wall_time, "add wall_time to the training log (breaks byte determinism)");
  }

  train::RunConfig resolve() const {
    train::RunConfig c;
    if (!config_file.empty()) {
      std::ifstream in(config_file);
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(in);
      } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::InvalidConfig, config_file + ": " + e.what());
      }
      train::apply_json(c, j);
    }
    if (variant) c.variant = *variant;
    if (manifest) c.manifest = *manifest;
    if (out_dir) c.out_dir = *out_dir;
    if (feature_cache) c.feature_cache = *feature_cache;
    if (batch_size) c.batch_size = *batch_size;
    if (max_epochs) c.max_epochs = *max_epochs;
    if (max_steps) c.max_steps = *max_steps;
    if (lr) c.initial_lr = *lr;
    if (val_fraction) c.val_fraction = *val_fraction;
    if (dropout) c.backbone.dropout_p = *dropout;
    if (target_mae) c.target_train_mae = *target_mae;
    if (seed) c.seed = *seed;
    if (wall_time) c.log_wall_time = true;
    c.validate();
    return c;
  }
};

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p);
  if (!out) fail(ErrorKind::Io, "cannot write " + p.string());
  return out;
}

void require_manifest(const std::string& m) {
  if (m.empty()) fail(ErrorKind::InvalidConfig, "no manifest given (--manifest or \"manifest\" in the config)");
}

std::vector<data::ManifestEntry> select(const data::DatasetManifest& m, const std::string& which) {
  if (which == "all") return m.entries;
  std::vector<data::ManifestEntry> out;
  for (const auto& e : m.entries) {
    if (e.split == which) out.push_back(e);
  }
  if (out.empty()) fail(ErrorKind::InvalidConfig, "no entries tagged split=\"" + which + "\"");
  return out;
}

// Manifest entries with paths made absolute so the file can live anywhere.
void save_split(const fs::path& path, const data::DatasetManifest& m, const data::Split& s) {
  data::DatasetManifest out;
  for (const auto* part : {&s.train, &s.validation}) {
    for (auto e : *part) {
      e.clip_path = fs::absolute(m.resolve(e)).lexically_normal().string();
      out.entries.push_back(std::move(e));
    }
  }
  data::save_manifest(path, out);
}

void write_predictions(const fs::path& path, const std::vector<train::Sample>& samples,
                       const std::vector<train::Prediction>& preds) {
  auto out = open_out(path);
  out << "clip_id,dns_model_id,ground_truth_mos,predicted_mos";
  const std::size_t k = preds.empty() ? 0 : preds.front().head.size();
  for (std::size_t i = 0; i < k; ++i) out << ",head_" << i;
  out << '\n' << std::setprecision(9);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out << samples[i].clip_id << ',' << samples[i].dns_model_id << ',' << samples[i].stats.mos << ','
        << preds[i].mos;
    for (double v : preds[i].head) out << ',' << v;
    out << '\n';
  }
}

void write_activations(const fs::path& path, const std::vector<train::Prediction>& preds, std::size_t bins = 40) {
  auto out = open_out(path);
  out << "neuron,bin_low,bin_high,count\n";
  if (preds.empty()) return;
  double lo = preds.front().head.front(), hi = lo;
  for (const auto& p : preds) {
    for (double v : p.head) lo = std::min(lo, v), hi = std::max(hi, v);
  }
  if (hi <= lo) hi = lo + 1.0;
  const std::size_t k = preds.front().head.size();
  for (std::size_t n = 0; n < k; ++n) {
    std::vector<std::size_t> counts(bins, 0);
    for (const auto& p : preds) {
      auto b = static_cast<std::size_t>((p.head[n] - lo) / (hi - lo) * static_cast<double>(bins));
      ++counts[std::min(b, bins - 1)];
    }
    for (std::size_t b = 0; b < bins; ++b) {
      out << n << ',' << lo + (hi - lo) * static_cast<double>(b) / bins << ','
          << lo + (hi - lo) * static_cast<double>(b + 1) / bins << ',' << counts[b] << '\n';
    }
  }
}

void write_report(const fs::path& dir, const std::vector<metrics::TableRow>& rows) {
  {
    auto txt = open_out(dir / "metrics.txt");
    metrics::write_table(txt, rows);
  }
  if (rows.size() == 1) {
    auto csv = open_out(dir / "metrics.csv");
    metrics::write_csv(csv, rows.front().report);
  }
  metrics::write_table(std::cout, rows);
}

int cmd_synth(const data::SynthSpec& spec, const fs::path& out) {
  const auto m = data::generate_synthetic(spec, out);
  std::cout << "wrote " << m.entries.size() << " clips and " << (out / "manifest.jsonl").string() << '\n';
  return 0;
}

int cmd_featurize(const std::string& manifest, const fs::path& cache) {
  const auto m = data::load_manifest(manifest);
  fs::create_directories(cache);
  for (const auto& e : m.entries) {
    audio::write_feature_cache(train::cache_path(cache, e.clip_id), audio::extract_features(audio::read_wav(m.resolve(e))));
  }
  std::cout << "wrote " << m.entries.size() << " feature files to " << cache.string() << '\n';
  return 0;
}

int cmd_train(const Overrides& ov, const std::string& resume) {
  auto cfg = ov.resolve();
  require_manifest(cfg.manifest);
  const auto m = data::load_manifest(cfg.manifest);
  const auto split = data::split_or_tags(m, cfg.val_fraction, cfg.seed);
  const auto train_set = train::load_samples(m, split.train, cfg.feature_cache);
  const auto val_set = train::load_samples(m, split.validation, cfg.feature_cache);

  std::optional<train::Trainer<float>> trainer;
  if (!resume.empty()) {
    auto ck = nn::read_checkpoint(resume);
    ck.meta["config"]["max_epochs"] = cfg.max_epochs;
    ck.meta["config"]["max_steps"] = cfg.max_steps;
    trainer.emplace(train::Trainer<float>::from_checkpoint(ck, cfg));
  } else {
    trainer.emplace(cfg);
  }
  const fs::path out = cfg.out_dir;
  fs::create_directories(out);
  {
    auto f = open_out(out / "config.json");
    f << train::to_json(trainer->config()).dump(2) << '\n';
  }
  save_split(out / "split.jsonl", m, split);
  std::cout << "variant " << trainer->config().variant << ", trainable parameters "
            << trainer->model().parameter_count() << ", train " << train_set.size() << " clips, validation "
            << val_set.size() << " clips\n";
  const auto r = trainer->fit(train_set, val_set, out, &std::cout);
  std::cout << "best epoch " << r.best_epoch << ", steps " << r.steps << ", checkpoints in " << out.string() << '\n';
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& manifest, const std::string& which,
             const std::string& cache, const fs::path& out) {
  auto trainer = train::Trainer<float>::from_checkpoint(nn::read_checkpoint(checkpoint));
  const auto m = data::load_manifest(manifest);
  const auto samples = train::load_samples(m, select(m, which), cache);
  const auto preds = trainer.predict(samples);
  const auto id = models::parse_variant(trainer.config().variant);
  metrics::TableRow row{std::string(models::to_string(id)), std::string(models::describe(id)),
                        metrics::evaluate(train::prediction_records(samples, preds, trainer.model().spec().head))};
  fs::create_directories(out);
  write_predictions(out / "predictions.csv", samples, preds);
  write_report(out, {row});
  return 0;
}

int cmd_report(const std::string& checkpoint, const std::string& manifest, const std::string& which,
               const std::string& cache, const fs::path& out) {
  const auto m = data::load_manifest(manifest, {!checkpoint.empty()});
  fs::create_directories(out);
  std::vector<labels::OpinionRecord> records;
  for (const auto& e : m.entries) records.push_back({e.clip_id, e.dns_model_id, e.scores});
  const auto labels_rep = labels::corpus_report(records);
  {
    auto f = open_out(out / "label_stats.csv");
    labels_rep.write_csv(f);
  }
  std::cout << "label statistics for " << labels_rep.records << " clips, skewness range [" << labels_rep.skewness_min
            << ", " << labels_rep.skewness_max << "]\n";
  if (checkpoint.empty()) return 0;

  auto trainer = train::Trainer<float>::from_checkpoint(nn::read_checkpoint(checkpoint));
  const auto samples = train::load_samples(m, select(m, which), cache);
  const auto preds = trainer.predict(samples);
  {
    auto f = open_out(out / "scatter.csv");
    f << "clip_id,dns_model_id,ground_truth_mos,predicted_mos\n" << std::setprecision(9);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      f << samples[i].clip_id << ',' << samples[i].dns_model_id << ',' << samples[i].stats.mos << ',' << preds[i].mos
        << '\n';
    }
  }
  write_activations(out / "activations.csv", preds);
  std::cout << "wrote scatter.csv and activations.csv (" << preds.front().head.size() << " output neurons)\n";
  return 0;
}

int cmd_experiment(const Overrides& ov, const std::vector<std::string>& variant_names) {
  const auto cfg = ov.resolve();
  require_manifest(cfg.manifest);
  std::vector<models::VariantId> ids;
  for (const auto& v : variant_names) ids.push_back(models::parse_variant(v));
  if (ids.empty()) ids.assign(models::kAllVariants.begin(), models::kAllVariants.end());
  const auto m = data::load_manifest(cfg.manifest);
  const auto split = data::split_or_tags(m, cfg.val_fraction, cfg.seed);
  const auto train_set = train::load_samples(m, split.train, cfg.feature_cache);
  const auto val_set = train::load_samples(m, split.validation, cfg.feature_cache);
  const fs::path out = cfg.out_dir;
  fs::create_directories(out);
  const auto results = train::run_experiment<float>(ids, cfg, train_set, val_set, out, &std::cout);
  for (const auto& r : results) {
    auto f = open_out(out / std::string(models::to_string(r.id)) / "metrics.csv");
    metrics::write_csv(f, r.row.report);
  }
  write_report(out, train::table_rows(results));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Speech quality MOS estimation: synthetic data, features, training and evaluation"};
  app.require_subcommand(1);

  data::SynthSpec spec;
  std::string synth_out = "synthetic";
  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus (WAVs + manifest)");
  synth->add_option("-o,--out", synth_out);
  synth->add_option("--models", spec.n_models);
  synth->add_option("--clips", spec.clips_per_model, "clips per model");
  synth->add_option("--seconds", spec.clip_seconds);
  synth->add_option("--judge-noise", spec.judge_noise);
  synth->add_option("--quality-min", spec.quality_min);
  synth->add_option("--quality-max", spec.quality_max);
  synth->add_option("--seed", spec.seed);

  std::string manifest, cache, checkpoint, which = "all", out = "eval";
  auto* featurize = app.add_subcommand("featurize", "write one log-Mel cache file per clip");
  featurize->add_option("-m,--manifest", manifest)->required();
  featurize->add_option("--cache", cache, "output directory")->required();

  Overrides train_ov;
  std::string resume;
  auto* train_cmd = app.add_subcommand("train", "train one variant");
  train_ov.attach(train_cmd);
  train_cmd->add_option("--resume", resume, "continue from a checkpoint");

  auto* eval = app.add_subcommand("eval", "score a checkpoint on a manifest");
  auto* report = app.add_subcommand("report", "label statistics, scatter data and head activations");
  for (auto* cmd : {eval, report}) {
    cmd->add_option("-m,--manifest", manifest)->required();
    cmd->add_option("--split", which, "all, train or val (uses split tags)")->check(CLI::IsMember({"all", "train", "val"}));
    cmd->add_option("--feature-cache", cache);
    cmd->add_option("-o,--out", out);
  }
  eval->add_option("--checkpoint", checkpoint)->required();
  report->add_option("--checkpoint", checkpoint);

  Overrides exp_ov;
  std::vector<std::string> variants;
  auto* experiment = app.add_subcommand("experiment", "train several variants on one split and tabulate");
  exp_ov.attach(experiment);
  experiment->add_option("--variants", variants, "default: all ten");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*synth) return cmd_synth(spec, synth_out);
    if (*featurize) return cmd_featurize(manifest, cache);
    if (*train_cmd) return cmd_train(train_ov, resume);
    if (*eval) return cmd_eval(checkpoint, manifest, which, cache, out);
    if (*report) return cmd_report(checkpoint, manifest, which, cache, out);
    if (*experiment) return cmd_experiment(exp_ov, variants);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
