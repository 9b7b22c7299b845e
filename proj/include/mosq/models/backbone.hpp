#pragma once

// ConvLSTM backbone:
//   conv 1x5 -> pool 1x3 -> conv 5x5 -> pool 2x2 -> conv 5x5 -> conv 3x3 -> conv 3x3
//   -> LSTM(64) over time -> 64-d representation.
// Each convolution is followed by ReLU, batch-norm and dropout. Inputs are
// [B, 1, 26, N] log-Mel batches (mel bins on H, frames on W).

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "mosq/audio/features.hpp"
#include "mosq/error.hpp"
#include "mosq/nn/layers.hpp"
#include "mosq/nn/optim.hpp"

namespace mosq::models {

using nn::Mode;
using nn::Rng;
using nn::Tensor;

struct BackboneConfig {
  std::array<std::size_t, 5> channels{8, 16, 16, 24, 22};
  std::size_t lstm_cells = 64;
  double dropout_p = 0.1;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;
};

struct ConvGeometry {
  std::size_t kh, kw;  // kernel
  std::size_t ph, pw;  // pool after the block, 1x1 = none
};

inline constexpr std::array<ConvGeometry, 5> kConvGeometry{{
    {1, 5, 1, 3},
    {5, 5, 2, 2},
    {5, 5, 1, 1},
    {3, 3, 1, 1},
    {3, 3, 1, 1},
}};

inline constexpr double kReferenceParameterCount = 51300.0;

/// (channels, height, width) of one stage output.
struct StageShape {
  std::size_t c, h, w;
  bool operator==(const StageShape&) const = default;
};

/// Shapes after each conv and each pool for a 26 x frames input, in layer order.
/// Empty if some stage would not fit.
inline std::vector<StageShape> stage_shapes(const BackboneConfig& cfg, std::size_t frames) {
  std::vector<StageShape> out;
  std::size_t h = audio::kMelBins, w = frames;
  for (std::size_t i = 0; i < kConvGeometry.size(); ++i) {
    const auto& g = kConvGeometry[i];
    if (h < g.kh || w < g.kw) return {};
    h = h - g.kh + 1;
    w = w - g.kw + 1;
    out.push_back({cfg.channels[i], h, w});
    if (g.ph > 1 || g.pw > 1) {
      if (h < g.ph || w < g.pw) return {};
      h /= g.ph;
      w /= g.pw;
      out.push_back({cfg.channels[i], h, w});
    }
  }
  return out;
}

/// Fewest frames the layer chain accepts.
inline std::size_t min_frames(const BackboneConfig& cfg = {}) {
  std::size_t n = 1;
  while (stage_shapes(cfg, n).empty()) ++n;
  return n;
}

/// Height of the final conv map; the LSTM sees channels[4] * this features.
inline std::size_t final_height() {
  std::size_t h = audio::kMelBins;
  for (const auto& g : kConvGeometry) h = (h - g.kh + 1) / g.ph;
  return h;
}

template <typename T>
class Backbone {
 public:
  Backbone(const BackboneConfig& cfg, Rng& rng) : cfg_(cfg) {
    if (cfg.dropout_p < 0.0 || cfg.dropout_p >= 1.0) fail(ErrorKind::InvalidConfig, "dropout_p out of [0,1)");
    std::size_t in_c = 1;
    for (std::size_t i = 0; i < kConvGeometry.size(); ++i) {
      const auto& g = kConvGeometry[i];
      const std::size_t out_c = cfg.channels[i];
      if (out_c == 0) fail(ErrorKind::InvalidConfig, "zero conv width");
      const std::size_t fan_in = in_c * g.kh * g.kw;
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
      conv_w_.push_back(uniform({out_c, in_c, g.kh, g.kw}, bound, rng));
      conv_b_.push_back(uniform({out_c}, 1.0 / std::sqrt(static_cast<double>(fan_in)), rng));
      bn_gamma_.push_back(Tensor<T>::full({out_c}, T(1), true));
      bn_beta_.push_back(Tensor<T>::zeros({out_c}, true));
      bn_stats_.emplace_back(out_c);
      in_c = out_c;
    }
    const std::size_t hs = cfg.lstm_cells;
    const std::size_t features = cfg.channels[4] * final_height();
    const double lb = 1.0 / std::sqrt(static_cast<double>(hs));
    lstm_wih_ = uniform({4 * hs, features}, lb, rng);
    lstm_whh_ = uniform({4 * hs, hs}, lb, rng);
    lstm_b_ = uniform({4 * hs}, lb, rng);
    auto b = lstm_b_.data();
    for (std::size_t j = hs; j < 2 * hs; ++j) b[j] = T(1);  // forget gate
  }

  const BackboneConfig& config() const { return cfg_; }
  std::size_t output_size() const { return cfg_.lstm_cells; }

  /// [B, 1, 26, N] -> [B, lstm_cells].
  Tensor<T> forward(const Tensor<T>& input, Mode mode, Rng& rng) {
    if (input.rank() != 4 || input.dim(1) != 1 || input.dim(2) != audio::kMelBins) {
      fail(ErrorKind::ShapeMismatch, "backbone expects [B,1,26,N], got " + nn::shape_str(input.shape()));
    }
    if (input.dim(3) < min_frames(cfg_)) {
      fail(ErrorKind::InputTooShort, std::to_string(input.dim(3)) + " frames, need at least " +
                                         std::to_string(min_frames(cfg_)));
    }
    // Maps the [-80, 0] dB range onto [-1, 1].
    Tensor<T> x = nn::add_scalar(nn::mul_scalar(input, T(1.0 / 40.0)), T(1));
    for (std::size_t i = 0; i < kConvGeometry.size(); ++i) {
      x = nn::conv2d_valid(x, conv_w_[i], conv_b_[i]);
      x = nn::relu(x);
      x = nn::batchnorm(x, bn_gamma_[i], bn_beta_[i], bn_stats_[i], mode, T(cfg_.bn_momentum), T(cfg_.bn_eps));
      x = nn::dropout(x, cfg_.dropout_p, mode, rng);
      const auto& g = kConvGeometry[i];
      if (g.ph > 1 || g.pw > 1) x = nn::maxpool2d(x, g.ph, g.pw);
    }
    return nn::lstm_forward(nn::to_sequence(x), lstm_wih_, lstm_whh_, lstm_b_);
  }

  void append_parameters(nn::ParameterList<T>& out) const {
    for (std::size_t i = 0; i < conv_w_.size(); ++i) {
      const std::string s = std::to_string(i + 1);
      out.push_back({"conv" + s + ".weight", conv_w_[i]});
      out.push_back({"conv" + s + ".bias", conv_b_[i]});
      out.push_back({"bn" + s + ".gamma", bn_gamma_[i]});
      out.push_back({"bn" + s + ".beta", bn_beta_[i]});
    }
    out.push_back({"lstm.w_ih", lstm_wih_});
    out.push_back({"lstm.w_hh", lstm_whh_});
    out.push_back({"lstm.bias", lstm_b_});
  }

  void append_buffers(nn::ParameterList<T>& out) const {
    for (std::size_t i = 0; i < bn_stats_.size(); ++i) {
      const std::string s = std::to_string(i + 1);
      out.push_back({"bn" + s + ".running_mean", bn_stats_[i].mean});
      out.push_back({"bn" + s + ".running_var", bn_stats_[i].var});
    }
  }

 private:
  static Tensor<T> uniform(nn::Shape shape, double bound, Rng& rng) {
    auto t = Tensor<T>::zeros(std::move(shape), true);
    for (auto& v : t.data()) v = static_cast<T>((2.0 * nn::uniform01(rng) - 1.0) * bound);
    return t;
  }

  BackboneConfig cfg_;
  std::vector<Tensor<T>> conv_w_, conv_b_, bn_gamma_, bn_beta_;
  std::vector<nn::RunningStats<T>> bn_stats_;
  Tensor<T> lstm_wih_, lstm_whh_, lstm_b_;
};

}  // namespace mosq::models
