#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"
#include "mosq/models/variant.hpp"

namespace mosq::train {

/// Everything that defines a training run. Defaults follow the reference
/// recipe: Adam at 1e-3, batches of 256, up to 100 epochs, plateau decay x0.1
/// after 10 stagnant epochs.
struct RunConfig {
  std::string variant = "II";
  models::BackboneConfig backbone{};
  std::size_t batch_size = 256;
  double initial_lr = 0.001;
  std::size_t max_epochs = 100;
  double scheduler_factor = 0.1;
  int scheduler_patience = 10;
  std::uint64_t seed = 1;
  double val_fraction = 0.2;
  double weighting_delta = 1e-3;
  double aux_weight = 1.0;

  // Early exit conditions; zero disables them.
  std::size_t max_steps = 0;
  double target_train_mae = 0.0;
  std::size_t mae_check_every = 10;

  bool log_wall_time = false;

  // I/O, not part of the model definition.
  std::string manifest;
  std::string out_dir = "run";
  std::string feature_cache;

  models::VariantSpec variant_spec() const {
    auto s = models::variant_spec(models::parse_variant(variant));
    s.weighting.delta = weighting_delta;
    s.aux_weight = aux_weight;
    return s;
  }

  void validate() const {
    (void)variant_spec();
    if (batch_size < 2) fail(ErrorKind::InvalidConfig, "batch_size must be >= 2");
    if (!(initial_lr > 0.0)) fail(ErrorKind::InvalidConfig, "initial_lr must be positive");
    if (max_epochs == 0) fail(ErrorKind::InvalidConfig, "max_epochs must be >= 1");
    if (val_fraction < 0.0 || val_fraction >= 1.0) fail(ErrorKind::InvalidConfig, "val_fraction must be in [0,1)");
    if (backbone.dropout_p < 0.0 || backbone.dropout_p >= 1.0) fail(ErrorKind::InvalidConfig, "dropout_p");
    if (mae_check_every == 0) fail(ErrorKind::InvalidConfig, "mae_check_every must be >= 1");
  }
};

/// The fields that determine the trained parameters (no paths).
inline nlohmann::ordered_json model_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["variant"] = std::string(models::to_string(models::parse_variant(c.variant)));
  j["channels"] = c.backbone.channels;
  j["lstm_cells"] = c.backbone.lstm_cells;
  j["dropout_p"] = c.backbone.dropout_p;
  j["bn_momentum"] = c.backbone.bn_momentum;
  j["bn_eps"] = c.backbone.bn_eps;
  j["batch_size"] = c.batch_size;
  j["initial_lr"] = c.initial_lr;
  j["max_epochs"] = c.max_epochs;
  j["scheduler_factor"] = c.scheduler_factor;
  j["scheduler_patience"] = c.scheduler_patience;
  j["seed"] = c.seed;
  j["val_fraction"] = c.val_fraction;
  j["weighting_delta"] = c.weighting_delta;
  j["aux_weight"] = c.aux_weight;
  j["max_steps"] = c.max_steps;
  j["target_train_mae"] = c.target_train_mae;
  j["mae_check_every"] = c.mae_check_every;
  return j;
}

inline nlohmann::ordered_json to_json(const RunConfig& c) {
  auto j = model_json(c);
  j["log_wall_time"] = c.log_wall_time;
  j["manifest"] = c.manifest;
  j["out_dir"] = c.out_dir;
  j["feature_cache"] = c.feature_cache;
  return j;
}

/// Overlays the keys present in `j` onto `c`; unknown keys are rejected.
template <typename Json>
void apply_json(RunConfig& c, const Json& j) {
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string& k = it.key();
      const auto& v = it.value();
      if (k == "variant") c.variant = v.template get<std::string>();
      else if (k == "channels") c.backbone.channels = v.template get<std::array<std::size_t, 5>>();
      else if (k == "lstm_cells") c.backbone.lstm_cells = v.template get<std::size_t>();
      else if (k == "dropout_p") c.backbone.dropout_p = v.template get<double>();
      else if (k == "bn_momentum") c.backbone.bn_momentum = v.template get<double>();
      else if (k == "bn_eps") c.backbone.bn_eps = v.template get<double>();
      else if (k == "batch_size") c.batch_size = v.template get<std::size_t>();
      else if (k == "initial_lr") c.initial_lr = v.template get<double>();
      else if (k == "max_epochs") c.max_epochs = v.template get<std::size_t>();
      else if (k == "scheduler_factor") c.scheduler_factor = v.template get<double>();
      else if (k == "scheduler_patience") c.scheduler_patience = v.template get<int>();
      else if (k == "seed") c.seed = v.template get<std::uint64_t>();
      else if (k == "val_fraction") c.val_fraction = v.template get<double>();
      else if (k == "weighting_delta") c.weighting_delta = v.template get<double>();
      else if (k == "aux_weight") c.aux_weight = v.template get<double>();
      else if (k == "max_steps") c.max_steps = v.template get<std::size_t>();
      else if (k == "target_train_mae") c.target_train_mae = v.template get<double>();
      else if (k == "mae_check_every") c.mae_check_every = v.template get<std::size_t>();
      else if (k == "log_wall_time") c.log_wall_time = v.template get<bool>();
      else if (k == "manifest") c.manifest = v.template get<std::string>();
      else if (k == "out_dir") c.out_dir = v.template get<std::string>();
      else if (k == "feature_cache") c.feature_cache = v.template get<std::string>();
      else fail(ErrorKind::InvalidConfig, "unknown config key '" + k + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::InvalidConfig, e.what());
  }
}

}  // namespace mosq::train
