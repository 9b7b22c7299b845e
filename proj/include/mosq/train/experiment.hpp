#pragma once

// Trains several variants on the same split and collects validation metrics
// into table rows.

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "mosq/metrics/metrics.hpp"
#include "mosq/models/variant.hpp"
#include "mosq/train/trainer.hpp"

namespace mosq::train {

struct VariantResult {
  models::VariantId id{};
  std::size_t parameters = 0;
  FitResult fit;
  std::vector<metrics::PredictionRecord> predictions;
  metrics::TableRow row;
};

template <typename T = float>
VariantResult run_variant(models::VariantId id, RunConfig cfg, const std::vector<Sample>& train,
                          const std::vector<Sample>& val, const fs::path& out_dir = {}, std::ostream* progress = nullptr) {
  cfg.variant = std::string(models::to_string(id));
  Trainer<T> trainer(cfg);
  VariantResult r;
  r.id = id;
  r.parameters = trainer.model().parameter_count();
  r.fit = trainer.fit(train, val, out_dir, progress);
  const auto& eval_set = val.empty() ? train : val;
  r.predictions = prediction_records(eval_set, trainer.predict(eval_set), trainer.model().spec().head);
  r.row.id = std::string(models::to_string(id));
  r.row.description = std::string(models::describe(id));
  r.row.report = metrics::evaluate(r.predictions);
  return r;
}

template <typename T = float>
std::vector<VariantResult> run_experiment(const std::vector<models::VariantId>& ids, const RunConfig& cfg,
                                          const std::vector<Sample>& train, const std::vector<Sample>& val,
                                          const fs::path& out_dir = {}, std::ostream* progress = nullptr) {
  std::vector<VariantResult> out;
  for (auto id : ids) {
    if (progress) *progress << "# variant " << models::to_string(id) << '\n';
    const fs::path dir = out_dir.empty() ? fs::path{} : out_dir / std::string(models::to_string(id));
    out.push_back(run_variant<T>(id, cfg, train, val, dir, progress));
  }
  return out;
}

inline std::vector<metrics::TableRow> table_rows(const std::vector<VariantResult>& results) {
  std::vector<metrics::TableRow> rows;
  for (const auto& r : results) rows.push_back(r.row);
  return rows;
}

}  // namespace mosq::train
