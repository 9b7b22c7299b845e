#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "mosq/nn/tensor.hpp"

namespace mosq::nn {

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

template <typename T>
using ParameterList = std::vector<NamedTensor<T>>;

template <typename T>
void zero_grad(ParameterList<T>& params) {
  for (auto& p : params) p.tensor.zero_grad();
}

/// Adam with bias correction. Moment buffers are created lazily on the first
/// step and keyed by position in the parameter list.
template <typename T>
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    if (!(lr > 0.0)) fail(ErrorKind::InvalidConfig, "Adam learning rate must be positive");
  }

  void step(ParameterList<T>& params) {
    if (first_.empty()) {
      for (const auto& p : params) {
        first_.emplace_back(p.tensor.numel(), 0.0);
        second_.emplace_back(p.tensor.numel(), 0.0);
      }
    }
    if (first_.size() != params.size()) fail(ErrorKind::ShapeMismatch, "Adam parameter list changed");
    ++steps_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& t = params[k].tensor;
      if (!t.has_grad()) continue;
      auto data = t.data();
      auto grad = t.grad();
      auto& m = first_[k];
      auto& v = second_[k];
      if (m.size() != data.size()) fail(ErrorKind::ShapeMismatch, "Adam moment size for " + params[k].name);
      for (std::size_t i = 0; i < data.size(); ++i) {
        const double g = static_cast<double>(grad[i]);
        m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
        v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        data[i] -= static_cast<T>(lr_ * mhat / (std::sqrt(vhat) + eps_));
      }
    }
  }

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  std::uint64_t steps() const { return steps_; }
  double beta1() const { return beta1_; }
  double beta2() const { return beta2_; }
  double eps() const { return eps_; }

  // Exposed for checkpointing.
  std::vector<std::vector<double>>& first_moments() { return first_; }
  std::vector<std::vector<double>>& second_moments() { return second_; }
  const std::vector<std::vector<double>>& first_moments() const { return first_; }
  const std::vector<std::vector<double>>& second_moments() const { return second_; }
  void set_steps(std::uint64_t s) { steps_ = s; }

 private:
  double lr_;
  double beta1_;
  double beta2_;
  double eps_;
  std::uint64_t steps_ = 0;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
};

/// Reduce-on-plateau: the learning rate is multiplied by `factor` once
/// `patience` consecutive epochs fail to strictly lower the tracked metric.
class PlateauScheduler {
 public:
  explicit PlateauScheduler(double lr, double factor = 0.1, int patience = 10)
      : lr_(lr), factor_(factor), patience_(patience) {
    if (!(factor > 0.0 && factor < 1.0)) fail(ErrorKind::InvalidConfig, "scheduler factor must be in (0,1)");
    if (patience < 1) fail(ErrorKind::InvalidConfig, "scheduler patience must be >= 1");
  }

  /// Feeds one epoch's validation metric and returns the learning rate to use next.
  double step(double metric) {
    if (metric < best_) {
      best_ = metric;
      stale_ = 0;
    } else if (++stale_ >= patience_) {
      lr_ *= factor_;
      stale_ = 0;
    }
    return lr_;
  }

  double lr() const { return lr_; }
  double best() const { return best_; }
  int stale_epochs() const { return stale_; }
  double factor() const { return factor_; }
  int patience() const { return patience_; }

  void restore(double lr, double best, int stale) {
    lr_ = lr;
    best_ = best;
    stale_ = stale;
  }

 private:
  double lr_;
  double factor_;
  int patience_;
  double best_ = std::numeric_limits<double>::infinity();
  int stale_ = 0;
};

}  // namespace mosq::nn
