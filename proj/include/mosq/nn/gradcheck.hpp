#pragma once

// Central finite-difference check of reverse-mode gradients.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "mosq/nn/tensor.hpp"

namespace mosq::nn {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_input = 0;
};

/// `f` maps the inputs to a scalar. The relative error of each input is
/// ||analytic - numeric|| / (||analytic|| + ||numeric||), or the absolute
/// difference when both gradients vanish.
inline GradCheckResult gradcheck(const std::function<Tensor<double>(const std::vector<Tensor<double>>&)>& f,
                                 std::vector<Tensor<double>> inputs, double h = 1e-4) {
  for (auto& x : inputs) {
    x.set_requires_grad(true);
    x.zero_grad();
  }
  f(inputs).backward();
  GradCheckResult res;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    std::vector<double> analytic(inputs[k].numel(), 0.0);
    if (inputs[k].has_grad()) std::copy(inputs[k].grad().begin(), inputs[k].grad().end(), analytic.begin());
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    auto data = inputs[k].data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      double plus = 0.0, minus = 0.0;
      {
        NoGradGuard guard;
        data[i] = saved + h;
        plus = f(inputs).item();
        data[i] = saved - h;
        minus = f(inputs).item();
      }
      data[i] = saved;
      const double numeric = (plus - minus) / (2.0 * h);
      diff2 += (analytic[i] - numeric) * (analytic[i] - numeric);
      a2 += analytic[i] * analytic[i];
      n2 += numeric * numeric;
    }
    const double denom = std::sqrt(a2) + std::sqrt(n2);
    const double err = denom > 1e-10 ? std::sqrt(diff2) / denom : std::sqrt(diff2);
    if (err > res.max_relative_error) {
      res.max_relative_error = err;
      res.worst_input = k;
    }
  }
  return res;
}

}  // namespace mosq::nn
