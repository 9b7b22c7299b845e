#pragma once

// Training objectives over batched tensors. Histogram inputs are [B, 5] rows
// on the probability simplex; scalar inputs are [B]. Batch losses return a
// single-element tensor, per-sample losses return [B].

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "mosq/error.hpp"
#include "mosq/nn/ops.hpp"

namespace mosq::losses {

using nn::Tensor;

inline constexpr double kDefaultDelta = 1e-3;
inline constexpr double kHistogramEps = 1e-8;
inline constexpr double kStdEps = 1e-12;
inline constexpr std::size_t kBins = 5;

enum class WeightingKind { None, Inverse, Linear };
enum class HistogramLossKind { CrossEntropy, Wasserstein, ChiSquare };

inline double inverse_weight(double sigma, double delta = kDefaultDelta) {
  if (sigma < 0.0) fail(ErrorKind::NegativeSigma, "sigma " + std::to_string(sigma));
  if (!(delta > 0.0)) fail(ErrorKind::InvalidConfig, "delta must be positive");
  return 1.0 / (sigma + delta);
}

/// 1 at sigma = 0 down to 0.1 at sigma = 2; sigma is clamped into [0, 2].
inline double linear_weight(double sigma) {
  const double s = std::clamp(sigma, 0.0, 2.0);
  return 1.0 - 0.45 * s;
}

struct SampleWeighting {
  WeightingKind kind = WeightingKind::None;
  double delta = kDefaultDelta;
  bool operator==(const SampleWeighting&) const = default;

  double weight(double sigma) const {
    switch (kind) {
      case WeightingKind::Inverse: return inverse_weight(sigma, delta);
      case WeightingKind::Linear: return linear_weight(sigma);
      case WeightingKind::None: break;
    }
    return 1.0;
  }
};

template <typename T>
Tensor<T> constant_like(const std::vector<T>& values, nn::Shape shape) {
  return Tensor<T>(std::move(shape), values);
}

/// mean_i w_i (pred_i - target_i)^2
template <typename T>
Tensor<T> weighted_mse(const Tensor<T>& pred, const Tensor<T>& target, const std::vector<T>& weights) {
  if (weights.size() != pred.numel()) fail(ErrorKind::ShapeMismatch, "weighted_mse weight count");
  const auto w = Tensor<T>(pred.shape(), weights);
  return nn::mean(nn::mul(w, nn::square(nn::sub(pred, target))));
}

template <typename T>
Tensor<T> mse(const Tensor<T>& pred, const Tensor<T>& target) {
  return nn::mean(nn::square(nn::sub(pred, target)));
}

/// MSE(mos) + lambda * MSE(aux)
template <typename T>
Tensor<T> multitask_mse(const Tensor<T>& pred_mos, const Tensor<T>& pred_aux, const Tensor<T>& gt_mos,
                        const Tensor<T>& gt_aux, T lambda = T(1)) {
  return nn::add(mse(pred_mos, gt_mos), nn::mul_scalar(mse(pred_aux, gt_aux), lambda));
}

/// Plain cross-entropy -sum_k gt_k log(pred_k + eps), per sample.
template <typename T>
Tensor<T> hist_cross_entropy_raw(const Tensor<T>& pred, const Tensor<T>& gt, T eps = T(kHistogramEps)) {
  return nn::mul_scalar(nn::sum_last(nn::mul(gt, nn::log(nn::add_scalar(pred, eps)))), T(-1));
}

/// Cross-entropy in excess of the target's own entropy, per sample. Same
/// gradient in `pred` as the plain form, but zero when pred == gt.
template <typename T>
Tensor<T> hist_cross_entropy(const Tensor<T>& pred, const Tensor<T>& gt, T eps = T(kHistogramEps)) {
  std::vector<T> ent(gt.numel() / gt.shape().back(), T(0));
  const std::size_t k = gt.shape().back();
  for (std::size_t r = 0; r < ent.size(); ++r) {
    for (std::size_t j = 0; j < k; ++j) {
      const T g = gt[r * k + j];
      ent[r] += g * std::log(g + eps);
    }
  }
  auto raw = hist_cross_entropy_raw(pred, gt, eps);
  return nn::add(raw, Tensor<T>(raw.shape(), std::move(ent)));
}

/// Squared earth mover's distance: sum_k (CDF_pred(k) - CDF_gt(k))^2, per sample.
template <typename T>
Tensor<T> hist_wasserstein(const Tensor<T>& pred, const Tensor<T>& gt) {
  return nn::sum_last(nn::square(nn::sub(nn::cumsum_last(pred), nn::cumsum_last(gt))));
}

/// Symmetric chi-square: 1/2 sum_k (p_k - g_k)^2 / (p_k + g_k + eps), per sample.
template <typename T>
Tensor<T> hist_chi_square(const Tensor<T>& pred, const Tensor<T>& gt, T eps = T(kHistogramEps)) {
  auto num = nn::square(nn::sub(pred, gt));
  auto den = nn::add_scalar(nn::add(pred, gt), eps);
  return nn::mul_scalar(nn::sum_last(nn::div(num, den)), T(0.5));
}

template <typename T>
Tensor<T> histogram_loss(HistogramLossKind kind, const Tensor<T>& pred, const Tensor<T>& gt) {
  switch (kind) {
    case HistogramLossKind::CrossEntropy: return nn::mean(hist_cross_entropy(pred, gt));
    case HistogramLossKind::Wasserstein: return nn::mean(hist_wasserstein(pred, gt));
    case HistogramLossKind::ChiSquare: return nn::mean(hist_chi_square(pred, gt));
  }
  fail(ErrorKind::IllegalCombination, "unknown histogram loss");
}

template <typename T>
const std::vector<T>& bin_values() {
  static const std::vector<T> v{T(1), T(2), T(3), T(4), T(5)};
  return v;
}

/// Expected score under a histogram: dot(pred, [1..5]), per sample.
template <typename T>
Tensor<T> mos_from_histogram(const Tensor<T>& pred) {
  return nn::dot_last(pred, bin_values<T>());
}

/// Differentiable mean and population standard deviation of each row.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> row_moments(const Tensor<T>& scores) {
  auto m = nn::mean_last(scores);
  auto centered = nn::sub(scores, nn::mul_rows(Tensor<T>::full(scores.shape(), T(1)), m));
  auto sd = nn::sqrt(nn::add_scalar(nn::mean_last(nn::square(centered)), T(kStdEps)));
  return {m, sd};
}

/// MSE(mean(scores), mos) + MSE(popstd(scores), sigma) over the batch.
template <typename T>
Tensor<T> opinion_moment_loss(const Tensor<T>& pred_scores, const Tensor<T>& gt_mos, const Tensor<T>& gt_sigma) {
  auto [m, sd] = row_moments(pred_scores);
  return nn::add(mse(m, gt_mos), mse(sd, gt_sigma));
}

// Scalar conveniences for single samples.

inline Tensor<double> row(const std::array<double, kBins>& v) {
  return Tensor<double>({1, kBins}, std::vector<double>(v.begin(), v.end()));
}

inline double hist_cross_entropy_raw(const std::array<double, kBins>& pred, const std::array<double, kBins>& gt) {
  return hist_cross_entropy_raw(row(pred), row(gt)).item();
}
inline double hist_cross_entropy(const std::array<double, kBins>& pred, const std::array<double, kBins>& gt) {
  return hist_cross_entropy(row(pred), row(gt)).item();
}
inline double hist_wasserstein(const std::array<double, kBins>& pred, const std::array<double, kBins>& gt) {
  return hist_wasserstein(row(pred), row(gt)).item();
}
inline double hist_chi_square(const std::array<double, kBins>& pred, const std::array<double, kBins>& gt) {
  return hist_chi_square(row(pred), row(gt)).item();
}
inline double mos_from_histogram(const std::array<double, kBins>& pred) {
  return mos_from_histogram(row(pred)).item();
}
inline double opinion_moment_loss(const std::array<double, kBins>& scores, double mos, double sigma) {
  return opinion_moment_loss(row(scores), Tensor<double>::scalar(mos), Tensor<double>::scalar(sigma)).item();
}
inline double modified_sigmoid(double x) { return 1.0 + 4.0 * nn::sigmoid_value(x); }

}  // namespace mosq::losses
