#pragma once

// Elementwise arithmetic, reductions and simplex helpers used by the heads and
// the losses. Binary operations require identical shapes; the only broadcast
// supported is a per-row scalar via mul_rows().

#include <algorithm>
#include <cmath>
#include <vector>

#include "mosq/nn/tensor.hpp"

namespace mosq::nn {

namespace detail {

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    fail(ErrorKind::ShapeMismatch,
         std::string(op) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

// f gives the value, df(x, y) the local derivative given input x and output y.
template <typename T, typename F, typename DF>
Tensor<T> unary(const Tensor<T>& x, F f, DF df) {
  std::vector<T> out(x.numel());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return Tensor<T>::make_result(x.shape(), std::move(out), {x.node()}, [df](Node<T>& self) {
    auto& px = *self.parents[0];
    if (!px.requires_grad) return;
    auto& g = px.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * df(px.value[i], self.value[i]);
  });
}

template <typename T>
std::size_t last_dim(const Tensor<T>& x) { return x.shape().back(); }

template <typename T>
Shape drop_last(const Tensor<T>& x) {
  Shape s(x.shape().begin(), x.shape().end() - 1);
  if (s.empty()) s.push_back(1);
  return s;
}

}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return Tensor<T>::make_result(a.shape(), std::move(out), {a.node(), b.node()},
                                [](detail::Node<T>& self) {
                                  for (auto& p : self.parents) {
                                    if (!p->requires_grad) continue;
                                    auto& g = p->ensure_grad();
                                    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                                  }
                                });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return Tensor<T>::make_result(a.shape(), std::move(out), {a.node(), b.node()},
                                [](detail::Node<T>& self) {
                                  for (std::size_t k = 0; k < 2; ++k) {
                                    auto& p = *self.parents[k];
                                    if (!p.requires_grad) continue;
                                    const T sign = k == 0 ? T(1) : T(-1);
                                    auto& g = p.ensure_grad();
                                    for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign * self.grad[i];
                                  }
                                });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return Tensor<T>::make_result(a.shape(), std::move(out), {a.node(), b.node()},
                                [](detail::Node<T>& self) {
                                  auto& pa = *self.parents[0];
                                  auto& pb = *self.parents[1];
                                  if (pa.requires_grad) {
                                    auto& g = pa.ensure_grad();
                                    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
                                  }
                                  if (pb.requires_grad) {
                                    auto& g = pb.ensure_grad();
                                    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
                                  }
                                });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "div");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] / b[i];
  return Tensor<T>::make_result(a.shape(), std::move(out), {a.node(), b.node()},
                                [](detail::Node<T>& self) {
                                  auto& pa = *self.parents[0];
                                  auto& pb = *self.parents[1];
                                  if (pa.requires_grad) {
                                    auto& g = pa.ensure_grad();
                                    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / pb.value[i];
                                  }
                                  if (pb.requires_grad) {
                                    auto& g = pb.ensure_grad();
                                    for (std::size_t i = 0; i < g.size(); ++i) {
                                      g[i] -= self.grad[i] * self.value[i] / pb.value[i];
                                    }
                                  }
                                });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T c) {
  return detail::unary(x, [c](T v) { return v + c; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& x, T c) {
  return detail::unary(x, [c](T v) { return v * c; }, [c](T, T) { return c; });
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
  return detail::unary(x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& x) {
  return detail::unary(x, [](T v) { return std::sqrt(v); }, [](T, T y) { return T(0.5) / y; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& x) {
  return detail::unary(x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
  return detail::unary(x, [](T v) { return std::abs(v); },
                       [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return detail::unary(x, [](T v) { return v > T(0) ? v : T(0); },
                       [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
T sigmoid_value(T v) {
  return v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return detail::unary(x, [](T v) { return sigmoid_value(v); },
                       [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  return detail::unary(x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

/// 1 + 4 * sigmoid(x): maps any real into the open rating interval (1, 5).
template <typename T>
Tensor<T> modified_sigmoid(const Tensor<T>& x) {
  return detail::unary(x, [](T v) { return T(1) + T(4) * sigmoid_value(v); },
                       [](T, T y) {
                         const T s = (y - T(1)) / T(4);
                         return T(4) * s * (T(1) - s);
                       });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = T(0);
  for (T v : x.data()) acc += v;
  return Tensor<T>::make_result(Shape{1}, {acc}, {x.node()}, [](detail::Node<T>& self) {
    auto& p = *self.parents[0];
    auto& g = p.ensure_grad();
    for (auto& gi : g) gi += self.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return mul_scalar(sum(x), T(1) / static_cast<T>(x.numel()));
}

/// Sum over the last axis: [..., K] -> [...].
template <typename T>
Tensor<T> sum_last(const Tensor<T>& x) {
  const std::size_t k = detail::last_dim(x);
  const std::size_t rows = x.numel() / k;
  std::vector<T> out(rows, T(0));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < k; ++j) out[r] += x[r * k + j];
  }
  return Tensor<T>::make_result(detail::drop_last(x), std::move(out), {x.node()},
                                [k](detail::Node<T>& self) {
                                  auto& g = self.parents[0]->ensure_grad();
                                  for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i / k];
                                });
}

template <typename T>
Tensor<T> mean_last(const Tensor<T>& x) {
  return mul_scalar(sum_last(x), T(1) / static_cast<T>(detail::last_dim(x)));
}

/// Per-row dot product with a fixed weight vector: [..., K] . w -> [...].
template <typename T>
Tensor<T> dot_last(const Tensor<T>& x, const std::vector<T>& w) {
  const std::size_t k = detail::last_dim(x);
  if (w.size() != k) fail(ErrorKind::ShapeMismatch, "dot_last weight length");
  const std::size_t rows = x.numel() / k;
  std::vector<T> out(rows, T(0));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < k; ++j) out[r] += x[r * k + j] * w[j];
  }
  return Tensor<T>::make_result(detail::drop_last(x), std::move(out), {x.node()},
                                [k, w](detail::Node<T>& self) {
                                  auto& g = self.parents[0]->ensure_grad();
                                  for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i / k] * w[i % k];
                                });
}

/// Numerically stable softmax over the last axis.
template <typename T>
Tensor<T> softmax_last(const Tensor<T>& x) {
  const std::size_t k = detail::last_dim(x);
  const std::size_t rows = x.numel() / k;
  std::vector<T> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = x.data().data() + r * k;
    T* o = out.data() + r * k;
    const T peak = *std::max_element(in, in + k);
    T z = T(0);
    for (std::size_t j = 0; j < k; ++j) z += (o[j] = std::exp(in[j] - peak));
    for (std::size_t j = 0; j < k; ++j) o[j] /= z;
  }
  return Tensor<T>::make_result(x.shape(), std::move(out), {x.node()}, [k, rows](detail::Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const T* y = self.value.data() + r * k;
      const T* gy = self.grad.data() + r * k;
      T dotp = T(0);
      for (std::size_t j = 0; j < k; ++j) dotp += y[j] * gy[j];
      for (std::size_t j = 0; j < k; ++j) g[r * k + j] += y[j] * (gy[j] - dotp);
    }
  });
}

/// Inclusive prefix sum over the last axis.
template <typename T>
Tensor<T> cumsum_last(const Tensor<T>& x) {
  const std::size_t k = detail::last_dim(x);
  const std::size_t rows = x.numel() / k;
  std::vector<T> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    T acc = T(0);
    for (std::size_t j = 0; j < k; ++j) out[r * k + j] = (acc += x[r * k + j]);
  }
  return Tensor<T>::make_result(x.shape(), std::move(out), {x.node()}, [k, rows](detail::Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      T acc = T(0);
      for (std::size_t j = k; j-- > 0;) {
        acc += self.grad[r * k + j];
        g[r * k + j] += acc;
      }
    }
  });
}

/// Column j of a [B, K] tensor as a [B] tensor.
template <typename T>
Tensor<T> column(const Tensor<T>& x, std::size_t j) {
  if (x.rank() != 2 || j >= x.dim(1)) fail(ErrorKind::ShapeMismatch, "column() needs [B,K] and j < K");
  const std::size_t b = x.dim(0), k = x.dim(1);
  std::vector<T> out(b);
  for (std::size_t i = 0; i < b; ++i) out[i] = x[i * k + j];
  return Tensor<T>::make_result(Shape{b}, std::move(out), {x.node()}, [j, k](detail::Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i * k + j] += self.grad[i];
  });
}

/// Multiplies row r of [..., K] by s[r] where s has the leading shape.
template <typename T>
Tensor<T> mul_rows(const Tensor<T>& x, const Tensor<T>& s) {
  const std::size_t k = detail::last_dim(x);
  if (s.numel() * k != x.numel()) fail(ErrorKind::ShapeMismatch, "mul_rows row count");
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * s[i / k];
  return Tensor<T>::make_result(x.shape(), std::move(out), {x.node(), s.node()}, [k](detail::Node<T>& self) {
    auto& px = *self.parents[0];
    auto& ps = *self.parents[1];
    if (px.requires_grad) {
      auto& g = px.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * ps.value[i / k];
    }
    if (ps.requires_grad) {
      auto& g = ps.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i / k] += self.grad[i] * px.value[i];
    }
  });
}

/// Same data viewed under a new shape with equal element count.
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel_of(shape) != x.numel()) {
    fail(ErrorKind::ShapeMismatch, "reshape " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  return Tensor<T>::make_result(std::move(shape), x.values(), {x.node()}, [](detail::Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

}  // namespace mosq::nn
