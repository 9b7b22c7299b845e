#pragma once

// The ten trainable configurations: backbone + output head + bound loss.
//
//   id          head         activation        supervision         loss
//   II          scalar       linear            MOS                 MSE
//   III         scalar       linear            MOS, sigma          inverse-variance weighted MSE
//   IV          scalar       linear            MOS, sigma          linear-variance weighted MSE
//   V           scalar_pair  linear            MOS, sigma          multi-task MSE
//   VI          scalar_pair  linear            MOS, median         multi-task MSE
//   VII_ce      hist5        softmax           histogram           cross-entropy
//   VIII_w      hist5        softmax           histogram           squared EMD
//   IX_chi      hist5        softmax           histogram           chi-square
//   X_relu      scores5      relu              MOS, sigma          moment MSE
//   XI_sigmoid  scores5      1 + 4 sigmoid     MOS, sigma          moment MSE

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mosq/labels/stats.hpp"
#include "mosq/losses/losses.hpp"
#include "mosq/models/backbone.hpp"

namespace mosq::models {

enum class VariantId { II, III, IV, V, VI, VII_ce, VIII_w, IX_chi, X_relu, XI_sigmoid };
enum class HeadKind { Scalar, ScalarPair, Hist5, Scores5 };
enum class Activation { Linear, Relu, ModifiedSigmoid, Softmax };
enum class LossKind { Mse, MultitaskMse, Histogram, OpinionMoment };
enum class AuxTarget { None, Sigma, Median };

inline constexpr std::array<VariantId, 10> kAllVariants{
    VariantId::II,     VariantId::III,    VariantId::IV,     VariantId::V,      VariantId::VI,
    VariantId::VII_ce, VariantId::VIII_w, VariantId::IX_chi, VariantId::X_relu, VariantId::XI_sigmoid};

struct VariantSpec {
  VariantId id = VariantId::II;
  HeadKind head = HeadKind::Scalar;
  Activation activation = Activation::Linear;
  losses::SampleWeighting weighting{};
  LossKind loss = LossKind::Mse;
  AuxTarget aux = AuxTarget::None;
  losses::HistogramLossKind histogram_loss = losses::HistogramLossKind::CrossEntropy;
  double aux_weight = 1.0;

  bool operator==(const VariantSpec&) const = default;
};

inline std::string_view to_string(VariantId id) {
  switch (id) {
    case VariantId::II: return "II";
    case VariantId::III: return "III";
    case VariantId::IV: return "IV";
    case VariantId::V: return "V";
    case VariantId::VI: return "VI";
    case VariantId::VII_ce: return "VII_ce";
    case VariantId::VIII_w: return "VIII_w";
    case VariantId::IX_chi: return "IX_chi";
    case VariantId::X_relu: return "X_relu";
    case VariantId::XI_sigmoid: return "XI_sigmoid";
  }
  return "?";
}

inline std::string_view describe(VariantId id) {
  switch (id) {
    case VariantId::II: return "ConvLSTM";
    case VariantId::III: return "ConvLSTM + Inverse Variance Weighting";
    case VariantId::IV: return "ConvLSTM + Linear Variance Weighting";
    case VariantId::V: return "ConvLSTM + Variance of Opinion Scores";
    case VariantId::VI: return "ConvLSTM + Median of Opinion Scores";
    case VariantId::VII_ce: return "ConvLSTM + Histogram Prediction (Cross Entropy)";
    case VariantId::VIII_w: return "ConvLSTM + Histogram Prediction (Wasserstein)";
    case VariantId::IX_chi: return "ConvLSTM + Histogram Prediction (Chi Square)";
    case VariantId::X_relu: return "ConvLSTM + Opinion Score (ReLU)";
    case VariantId::XI_sigmoid: return "ConvLSTM + Opinion Score (Sigmoid)";
  }
  return "?";
}

/// Accepts the ids above and their bare Roman numerals ("VII", "x", ...).
inline VariantId parse_variant(std::string_view text) {
  std::string s(text);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  for (VariantId id : kAllVariants) {
    std::string full(to_string(id));
    std::transform(full.begin(), full.end(), full.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    const std::string roman = full.substr(0, full.find('_'));
    if (s == full || s == roman) return id;
  }
  fail(ErrorKind::InvalidConfig, "unknown variant '" + std::string(text) + "'");
}

/// The legal configuration for each id.
inline VariantSpec variant_spec(VariantId id) {
  using losses::HistogramLossKind;
  using losses::WeightingKind;
  VariantSpec s;
  s.id = id;
  switch (id) {
    case VariantId::II: break;
    case VariantId::III: s.weighting.kind = WeightingKind::Inverse; break;
    case VariantId::IV: s.weighting.kind = WeightingKind::Linear; break;
    case VariantId::V:
    case VariantId::VI:
      s.head = HeadKind::ScalarPair;
      s.loss = LossKind::MultitaskMse;
      s.aux = id == VariantId::V ? AuxTarget::Sigma : AuxTarget::Median;
      break;
    case VariantId::VII_ce:
    case VariantId::VIII_w:
    case VariantId::IX_chi:
      s.head = HeadKind::Hist5;
      s.activation = Activation::Softmax;
      s.loss = LossKind::Histogram;
      s.histogram_loss = id == VariantId::VII_ce   ? HistogramLossKind::CrossEntropy
                         : id == VariantId::VIII_w ? HistogramLossKind::Wasserstein
                                                   : HistogramLossKind::ChiSquare;
      break;
    case VariantId::X_relu:
    case VariantId::XI_sigmoid:
      s.head = HeadKind::Scores5;
      s.activation = id == VariantId::X_relu ? Activation::Relu : Activation::ModifiedSigmoid;
      s.loss = LossKind::OpinionMoment;
      break;
  }
  return s;
}

/// Throws IllegalCombination unless `spec` is one of the ten rows.
inline void validate(const VariantSpec& spec) {
  VariantSpec expected = variant_spec(spec.id);
  expected.weighting.delta = spec.weighting.delta;
  expected.aux_weight = spec.aux_weight;
  if (!(spec == expected)) {
    fail(ErrorKind::IllegalCombination,
         "head/activation/loss combination does not match variant " + std::string(to_string(spec.id)));
  }
  if (spec.weighting.kind == losses::WeightingKind::Inverse && !(spec.weighting.delta > 0.0)) {
    fail(ErrorKind::IllegalCombination, "inverse weighting needs delta > 0");
  }
}

inline std::size_t head_outputs(HeadKind h) {
  switch (h) {
    case HeadKind::Scalar: return 1;
    case HeadKind::ScalarPair: return 2;
    case HeadKind::Hist5:
    case HeadKind::Scores5: return 5;
  }
  return 1;
}

/// Per-batch supervision, one entry per clip.
template <typename T>
struct Targets {
  std::vector<T> mos;
  std::vector<T> sigma;
  std::vector<T> median;
  std::vector<T> histogram;  // row-major [B, 5]

  std::size_t size() const { return mos.size(); }

  void push(const labels::LabelStats& st) {
    mos.push_back(static_cast<T>(st.mos));
    sigma.push_back(static_cast<T>(st.sigma));
    median.push_back(static_cast<T>(st.median));
    for (double h : st.histogram) histogram.push_back(static_cast<T>(h));
  }
};

template <typename T>
class Model {
 public:
  Model(const VariantSpec& spec, const BackboneConfig& cfg, Rng& rng) : spec_(spec), backbone_(cfg, rng) {
    validate(spec);
    const std::size_t out = head_outputs(spec.head);
    const std::size_t in = backbone_.output_size();
    const double bound = std::sqrt(6.0 / static_cast<double>(in));
    head_w_ = Tensor<T>::zeros({out, in}, true);
    for (auto& v : head_w_.data()) v = static_cast<T>((2.0 * nn::uniform01(rng) - 1.0) * bound);
    head_b_ = Tensor<T>(nn::Shape{out}, initial_head_bias(spec), true);
  }

  const VariantSpec& spec() const { return spec_; }
  Backbone<T>& backbone() { return backbone_; }

  /// Activated head output, [B, K].
  Tensor<T> forward(const Tensor<T>& input, Mode mode, Rng& rng) {
    auto z = nn::dense(backbone_.forward(input, mode, rng), head_w_, head_b_);
    switch (spec_.activation) {
      case Activation::Linear: return z;
      case Activation::Relu: return nn::relu(z);
      case Activation::ModifiedSigmoid: return nn::modified_sigmoid(z);
      case Activation::Softmax: return nn::softmax_last(z);
    }
    return z;
  }

  /// MOS estimate per clip from the head output, [B].
  Tensor<T> predict_mos(const Tensor<T>& head) const {
    switch (spec_.head) {
      case HeadKind::Scalar:
      case HeadKind::ScalarPair: return nn::column(head, 0);
      case HeadKind::Hist5: return losses::mos_from_histogram(head);
      case HeadKind::Scores5: return nn::mean_last(head);
    }
    fail(ErrorKind::IllegalCombination, "unknown head");
  }

  /// Loss bound to the variant, averaged over the batch.
  Tensor<T> loss(const Tensor<T>& head, const Targets<T>& tg) const {
    const std::size_t b = head.dim(0);
    if (tg.size() != b) fail(ErrorKind::ShapeMismatch, "targets do not match batch");
    const auto col = [b](const std::vector<T>& v) { return Tensor<T>(nn::Shape{b}, v); };
    switch (spec_.loss) {
      case LossKind::Mse: {
        std::vector<T> w(b);
        for (std::size_t i = 0; i < b; ++i) w[i] = static_cast<T>(spec_.weighting.weight(tg.sigma[i]));
        return losses::weighted_mse(nn::column(head, 0), col(tg.mos), w);
      }
      case LossKind::MultitaskMse:
        return losses::multitask_mse(nn::column(head, 0), nn::column(head, 1), col(tg.mos),
                                     col(spec_.aux == AuxTarget::Sigma ? tg.sigma : tg.median),
                                     static_cast<T>(spec_.aux_weight));
      case LossKind::Histogram:
        return losses::histogram_loss(spec_.histogram_loss, head, Tensor<T>(nn::Shape{b, 5}, tg.histogram));
      case LossKind::OpinionMoment: return losses::opinion_moment_loss(head, col(tg.mos), col(tg.sigma));
    }
    fail(ErrorKind::IllegalCombination, "unknown loss");
  }

  nn::ParameterList<T> parameters() const {
    nn::ParameterList<T> out;
    backbone_.append_parameters(out);
    out.push_back({"head.weight", head_w_});
    out.push_back({"head.bias", head_b_});
    return out;
  }

  nn::ParameterList<T> buffers() const {
    nn::ParameterList<T> out;
    backbone_.append_buffers(out);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p.tensor.numel();
    return n;
  }

 private:
  // Heads start near the middle of the rating scale; the five-score heads
  // start spread over [2, 4] so the predicted spread is non-degenerate.
  static std::vector<T> initial_head_bias(const VariantSpec& spec) {
    switch (spec.head) {
      case HeadKind::Scalar: return {T(3)};
      case HeadKind::ScalarPair: return {T(3), spec.aux == AuxTarget::Sigma ? T(0.8) : T(3)};
      case HeadKind::Hist5: return std::vector<T>(5, T(0));
      case HeadKind::Scores5: {
        std::vector<T> b{T(2), T(2.5), T(3), T(3.5), T(4)};
        if (spec.activation == Activation::ModifiedSigmoid) {
          for (auto& v : b) {
            const double s = (static_cast<double>(v) - 1.0) / 4.0;
            v = static_cast<T>(std::log(s / (1.0 - s)));
          }
        }
        return b;
      }
    }
    return {T(0)};
  }

  VariantSpec spec_;
  Backbone<T> backbone_;
  Tensor<T> head_w_, head_b_;
};

template <typename T>
Model<T> build_variant(const VariantSpec& spec, const BackboneConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  return Model<T>(spec, cfg, rng);
}

template <typename T>
Model<T> build_variant(VariantId id, const BackboneConfig& cfg, std::uint64_t seed) {
  return build_variant<T>(variant_spec(id), cfg, seed);
}

/// Stacks equal-length feature matrices into a [B, 1, 26, N] tensor.
template <typename T, typename Features>
Tensor<T> make_batch(const std::vector<const Features*>& feats) {
  if (feats.empty()) fail(ErrorKind::ShapeMismatch, "empty batch");
  const std::size_t n = feats.front()->frames;
  std::vector<T> data;
  data.reserve(feats.size() * audio::kMelBins * n);
  for (const Features* f : feats) {
    if (f->frames < n) fail(ErrorKind::ShapeMismatch, "batch members must have at least the first member's frames");
    for (std::size_t r = 0; r < audio::kMelBins; ++r) {
      for (std::size_t t = 0; t < n; ++t) data.push_back(static_cast<T>((*f)(r, t)));
    }
  }
  return Tensor<T>(nn::Shape{feats.size(), 1, audio::kMelBins, n}, std::move(data));
}

}  // namespace mosq::models
