#pragma once

// The layer primitives of the ConvLSTM backbone, each with a hand-written
// backward pass. Batched layouts are [B, C, H, W] for images and [B, T, F] for
// sequences; rank-3 / rank-2 single-sample inputs are accepted where noted.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "mosq/nn/ops.hpp"
#include "mosq/nn/tensor.hpp"

namespace mosq::nn {

using Rng = std::mt19937_64;

enum class Mode { Train, Eval };

/// Uniform draw in [0, 1) with 53 random bits; stable across standard libraries.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

namespace detail {

template <typename T>
Tensor<T> with_batch(const Tensor<T>& x, std::size_t batched_rank) {
  if (x.rank() == batched_rank) return x;
  if (x.rank() + 1 == batched_rank) {
    Shape s{1};
    s.insert(s.end(), x.shape().begin(), x.shape().end());
    return reshape(x, s);
  }
  fail(ErrorKind::ShapeMismatch, "unexpected rank " + shape_str(x.shape()));
}

template <typename T>
Tensor<T> drop_batch(const Tensor<T>& y) {
  return reshape(y, Shape(y.shape().begin() + 1, y.shape().end()));
}

}  // namespace detail

/// Valid (unpadded) 2-D cross-correlation plus per-channel bias.
template <typename T>
Tensor<T> conv2d_valid(const Tensor<T>& input, const Tensor<T>& kernels, const Tensor<T>& bias) {
  if (input.rank() == 3) return detail::drop_batch(conv2d_valid(detail::with_batch(input, 4), kernels, bias));
  if (input.rank() != 4 || kernels.rank() != 4 || bias.rank() != 1) {
    fail(ErrorKind::ShapeMismatch, "conv2d_valid ranks " + shape_str(input.shape()) + " " +
                                       shape_str(kernels.shape()) + " " + shape_str(bias.shape()));
  }
  const std::size_t nb = input.dim(0), ci = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t co = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
  if (kernels.dim(1) != ci || bias.dim(0) != co) {
    fail(ErrorKind::ShapeMismatch, "conv2d_valid channels " + shape_str(input.shape()) + " " +
                                       shape_str(kernels.shape()) + " " + shape_str(bias.shape()));
  }
  if (h < kh || w < kw) {
    fail(ErrorKind::InputTooSmall, "conv2d_valid input " + shape_str(input.shape()) +
                                       " smaller than kernel " + shape_str(kernels.shape()));
  }
  const std::size_t ho = h - kh + 1, wo = w - kw + 1;
  std::vector<T> out(nb * co * ho * wo);
  const T* x = input.data().data();
  const T* k = kernels.data().data();
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t o = 0; o < co; ++o) {
      T* y = out.data() + (b * co + o) * ho * wo;
      std::fill(y, y + ho * wo, bias[o]);
      for (std::size_t c = 0; c < ci; ++c) {
        const T* xc = x + (b * ci + c) * h * w;
        const T* kc = k + (o * ci + c) * kh * kw;
        for (std::size_t ky = 0; ky < kh; ++ky) {
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const T wt = kc[ky * kw + kx];
            for (std::size_t oy = 0; oy < ho; ++oy) {
              T* yr = y + oy * wo;
              const T* xr = xc + (oy + ky) * w + kx;
              for (std::size_t ox = 0; ox < wo; ++ox) yr[ox] += wt * xr[ox];
            }
          }
        }
      }
    }
  }
  return Tensor<T>::make_result(
      Shape{nb, co, ho, wo}, std::move(out), {input.node(), kernels.node(), bias.node()},
      [=](detail::Node<T>& self) {
        auto& px = *self.parents[0];
        auto& pk = *self.parents[1];
        auto& pb = *self.parents[2];
        const T* gy = self.grad.data();
        T* gx = px.requires_grad ? px.ensure_grad().data() : nullptr;
        T* gk = pk.requires_grad ? pk.ensure_grad().data() : nullptr;
        T* gb = pb.requires_grad ? pb.ensure_grad().data() : nullptr;
        const T* xv = px.value.data();
        const T* kv = pk.value.data();
        for (std::size_t b = 0; b < nb; ++b) {
          for (std::size_t o = 0; o < co; ++o) {
            const T* g = gy + (b * co + o) * ho * wo;
            if (gb) {
              T acc = T(0);
              for (std::size_t i = 0; i < ho * wo; ++i) acc += g[i];
              gb[o] += acc;
            }
            for (std::size_t c = 0; c < ci; ++c) {
              const T* xc = xv + (b * ci + c) * h * w;
              T* gxc = gx ? gx + (b * ci + c) * h * w : nullptr;
              const std::size_t kbase = (o * ci + c) * kh * kw;
              for (std::size_t ky = 0; ky < kh; ++ky) {
                for (std::size_t kx = 0; kx < kw; ++kx) {
                  const T wt = kv[kbase + ky * kw + kx];
                  T acc = T(0);
                  for (std::size_t oy = 0; oy < ho; ++oy) {
                    const T* gr = g + oy * wo;
                    const std::size_t off = (oy + ky) * w + kx;
                    if (gk) {
                      const T* xr = xc + off;
                      for (std::size_t ox = 0; ox < wo; ++ox) acc += gr[ox] * xr[ox];
                    }
                    if (gxc) {
                      T* gxr = gxc + off;
                      for (std::size_t ox = 0; ox < wo; ++ox) gxr[ox] += wt * gr[ox];
                    }
                  }
                  if (gk) gk[kbase + ky * kw + kx] += acc;
                }
              }
            }
          }
        }
      });
}

/// Non-overlapping max pooling; trailing rows/columns that do not fill a
/// window are dropped. Gradient goes to the first maximal element.
template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& input, std::size_t ph, std::size_t pw) {
  if (input.rank() == 3) return detail::drop_batch(maxpool2d(detail::with_batch(input, 4), ph, pw));
  if (input.rank() != 4 || ph == 0 || pw == 0) fail(ErrorKind::ShapeMismatch, "maxpool2d needs [B,C,H,W]");
  const std::size_t nb = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (h < ph || w < pw) {
    fail(ErrorKind::InputTooSmall, "maxpool2d input " + shape_str(input.shape()) + " smaller than window");
  }
  const std::size_t ho = h / ph, wo = w / pw;
  std::vector<T> out(nb * c * ho * wo);
  std::vector<std::uint32_t> arg(out.size());
  const T* x = input.data().data();
  for (std::size_t plane = 0; plane < nb * c; ++plane) {
    const T* xp = x + plane * h * w;
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        std::size_t best = (oy * ph) * w + ox * pw;
        for (std::size_t dy = 0; dy < ph; ++dy) {
          for (std::size_t dx = 0; dx < pw; ++dx) {
            const std::size_t idx = (oy * ph + dy) * w + ox * pw + dx;
            if (xp[idx] > xp[best]) best = idx;
          }
        }
        const std::size_t o = (plane * ho + oy) * wo + ox;
        out[o] = xp[best];
        arg[o] = static_cast<std::uint32_t>(plane * h * w + best);
      }
    }
  }
  return Tensor<T>::make_result(Shape{nb, c, ho, wo}, std::move(out), {input.node()},
                                [arg = std::move(arg)](detail::Node<T>& self) {
                                  auto& g = self.parents[0]->ensure_grad();
                                  for (std::size_t i = 0; i < arg.size(); ++i) g[arg[i]] += self.grad[i];
                                });
}

/// Running statistics owned by a batch-norm layer.
template <typename T>
struct RunningStats {
  Tensor<T> mean;
  Tensor<T> var;

  explicit RunningStats(std::size_t channels)
      : mean(Tensor<T>::zeros({channels})), var(Tensor<T>::full({channels}, T(1))) {}
};

/// Per-channel normalisation over [B, C, ...]. Train mode uses the batch
/// statistics and folds them into `stats` with the given momentum.
template <typename T>
Tensor<T> batchnorm(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                    RunningStats<T>& stats, Mode mode, T momentum = T(0.1), T eps = T(1e-5)) {
  if (input.rank() < 2) fail(ErrorKind::ShapeMismatch, "batchnorm needs [B,C,...]");
  const std::size_t nb = input.dim(0), c = input.dim(1);
  const std::size_t inner = input.numel() / (nb * c);
  if (gamma.numel() != c || beta.numel() != c || stats.mean.numel() != c) {
    fail(ErrorKind::ShapeMismatch, "batchnorm channel count");
  }
  const std::size_t count = nb * inner;
  const T* x = input.data().data();
  std::vector<T> out(input.numel());

  if (mode == Mode::Eval) {
    std::vector<T> scale(c), shift(c);
    for (std::size_t ch = 0; ch < c; ++ch) {
      scale[ch] = gamma[ch] / std::sqrt(stats.var[ch] + eps);
      shift[ch] = beta[ch] - stats.mean[ch] * scale[ch];
    }
    for (std::size_t b = 0; b < nb; ++b) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t base = (b * c + ch) * inner;
        for (std::size_t i = 0; i < inner; ++i) out[base + i] = x[base + i] * scale[ch] + shift[ch];
      }
    }
    std::vector<T> rmean(stats.mean.values()), rvar(stats.var.values());
    return Tensor<T>::make_result(
        input.shape(), std::move(out), {input.node(), gamma.node(), beta.node()},
        [=](detail::Node<T>& self) {
          auto& px = *self.parents[0];
          auto& pg = *self.parents[1];
          auto& pb = *self.parents[2];
          for (std::size_t b = 0; b < nb; ++b) {
            for (std::size_t ch = 0; ch < c; ++ch) {
              const T inv = T(1) / std::sqrt(rvar[ch] + eps);
              const std::size_t base = (b * c + ch) * inner;
              for (std::size_t i = 0; i < inner; ++i) {
                const T gy = self.grad[base + i];
                if (px.requires_grad) px.ensure_grad()[base + i] += gy * pg.value[ch] * inv;
                if (pg.requires_grad) pg.ensure_grad()[ch] += gy * (px.value[base + i] - rmean[ch]) * inv;
                if (pb.requires_grad) pb.ensure_grad()[ch] += gy;
              }
            }
          }
        });
  }

  if (nb < 2) fail(ErrorKind::DegenerateBatch, "batchnorm train mode needs batch >= 2");
  std::vector<T> mu(c, T(0)), var(c, T(0)), inv_std(c);
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T* xp = x + (b * c + ch) * inner;
      for (std::size_t i = 0; i < inner; ++i) mu[ch] += xp[i];
    }
  }
  for (auto& m : mu) m /= static_cast<T>(count);
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T* xp = x + (b * c + ch) * inner;
      for (std::size_t i = 0; i < inner; ++i) {
        const T d = xp[i] - mu[ch];
        var[ch] += d * d;
      }
    }
  }
  for (auto& v : var) v /= static_cast<T>(count);
  for (std::size_t ch = 0; ch < c; ++ch) inv_std[ch] = T(1) / std::sqrt(var[ch] + eps);

  std::vector<T> xhat(input.numel());
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (b * c + ch) * inner;
      for (std::size_t i = 0; i < inner; ++i) {
        xhat[base + i] = (x[base + i] - mu[ch]) * inv_std[ch];
        out[base + i] = gamma[ch] * xhat[base + i] + beta[ch];
      }
    }
  }

  {
    auto rm = stats.mean.data();
    auto rv = stats.var.data();
    const T unbias = count > 1 ? static_cast<T>(count) / static_cast<T>(count - 1) : T(1);
    for (std::size_t ch = 0; ch < c; ++ch) {
      rm[ch] = (T(1) - momentum) * rm[ch] + momentum * mu[ch];
      rv[ch] = (T(1) - momentum) * rv[ch] + momentum * var[ch] * unbias;
    }
  }

  return Tensor<T>::make_result(
      input.shape(), std::move(out), {input.node(), gamma.node(), beta.node()},
      [=, xhat = std::move(xhat)](detail::Node<T>& self) {
        auto& px = *self.parents[0];
        auto& pg = *self.parents[1];
        auto& pb = *self.parents[2];
        std::vector<T> sum_g(c, T(0)), sum_gx(c, T(0));
        for (std::size_t b = 0; b < nb; ++b) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t base = (b * c + ch) * inner;
            for (std::size_t i = 0; i < inner; ++i) {
              sum_g[ch] += self.grad[base + i];
              sum_gx[ch] += self.grad[base + i] * xhat[base + i];
            }
          }
        }
        if (pg.requires_grad) {
          auto& g = pg.ensure_grad();
          for (std::size_t ch = 0; ch < c; ++ch) g[ch] += sum_gx[ch];
        }
        if (pb.requires_grad) {
          auto& g = pb.ensure_grad();
          for (std::size_t ch = 0; ch < c; ++ch) g[ch] += sum_g[ch];
        }
        if (px.requires_grad) {
          auto& g = px.ensure_grad();
          const T n = static_cast<T>(count);
          for (std::size_t b = 0; b < nb; ++b) {
            for (std::size_t ch = 0; ch < c; ++ch) {
              const T k = pg.value[ch] * inv_std[ch] / n;
              const std::size_t base = (b * c + ch) * inner;
              for (std::size_t i = 0; i < inner; ++i) {
                g[base + i] += k * (n * self.grad[base + i] - sum_g[ch] - xhat[base + i] * sum_gx[ch]);
              }
            }
          }
        }
      });
}

/// Inverted dropout: survivors are scaled by 1/(1-p) so the expectation is kept.
template <typename T>
Tensor<T> dropout(const Tensor<T>& input, double p, Mode mode, Rng& rng) {
  if (p < 0.0 || p >= 1.0) fail(ErrorKind::InvalidConfig, "dropout probability must be in [0,1)");
  if (mode == Mode::Eval || p == 0.0) return input;
  const T keep_scale = T(1) / static_cast<T>(1.0 - p);
  std::vector<T> mask(input.numel());
  for (auto& m : mask) m = uniform01(rng) < p ? T(0) : keep_scale;
  std::vector<T> out(input.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = input[i] * mask[i];
  return Tensor<T>::make_result(input.shape(), std::move(out), {input.node()},
                                [mask = std::move(mask)](detail::Node<T>& self) {
                                  auto& g = self.parents[0]->ensure_grad();
                                  for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
                                });
}

/// Fully connected layer: [B, F] x W[O, F]^T + b -> [B, O]; [F] -> [O].
template <typename T>
Tensor<T> dense(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
  if (input.rank() == 1) return detail::drop_batch(dense(detail::with_batch(input, 2), weight, bias));
  if (input.rank() != 2 || weight.rank() != 2 || weight.dim(1) != input.dim(1) ||
      bias.numel() != weight.dim(0)) {
    fail(ErrorKind::ShapeMismatch, "dense " + shape_str(input.shape()) + " x " + shape_str(weight.shape()));
  }
  const std::size_t nb = input.dim(0), f = input.dim(1), o = weight.dim(0);
  std::vector<T> out(nb * o);
  const T* x = input.data().data();
  const T* wv = weight.data().data();
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t r = 0; r < o; ++r) {
      T acc = bias[r];
      for (std::size_t j = 0; j < f; ++j) acc += wv[r * f + j] * x[b * f + j];
      out[b * o + r] = acc;
    }
  }
  return Tensor<T>::make_result(Shape{nb, o}, std::move(out), {input.node(), weight.node(), bias.node()},
                                [nb, f, o](detail::Node<T>& self) {
                                  auto& px = *self.parents[0];
                                  auto& pw = *self.parents[1];
                                  auto& pb = *self.parents[2];
                                  for (std::size_t b = 0; b < nb; ++b) {
                                    for (std::size_t r = 0; r < o; ++r) {
                                      const T gy = self.grad[b * o + r];
                                      if (pb.requires_grad) pb.ensure_grad()[r] += gy;
                                      if (pw.requires_grad) {
                                        T* gw = pw.ensure_grad().data() + r * f;
                                        for (std::size_t j = 0; j < f; ++j) gw[j] += gy * px.value[b * f + j];
                                      }
                                      if (px.requires_grad) {
                                        T* gx = px.ensure_grad().data() + b * f;
                                        for (std::size_t j = 0; j < f; ++j) gx[j] += gy * pw.value[r * f + j];
                                      }
                                    }
                                  }
                                });
}

/// [B, C, H, W] -> [B, W, C*H]: each column of the feature map becomes one
/// time step whose features are laid out channel-major.
template <typename T>
Tensor<T> to_sequence(const Tensor<T>& input) {
  if (input.rank() != 4) fail(ErrorKind::ShapeMismatch, "to_sequence needs [B,C,H,W]");
  const std::size_t nb = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t f = c * h;
  std::vector<std::uint32_t> src(input.numel());
  std::vector<T> out(input.numel());
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t t = 0; t < w; ++t) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t y = 0; y < h; ++y) {
          const std::size_t o = (b * w + t) * f + ch * h + y;
          const std::size_t i = ((b * c + ch) * h + y) * w + t;
          src[o] = static_cast<std::uint32_t>(i);
          out[o] = input[i];
        }
      }
    }
  }
  return Tensor<T>::make_result(Shape{nb, w, f}, std::move(out), {input.node()},
                                [src = std::move(src)](detail::Node<T>& self) {
                                  auto& g = self.parents[0]->ensure_grad();
                                  for (std::size_t o = 0; o < src.size(); ++o) g[src[o]] += self.grad[o];
                                });
}

/// Single-layer LSTM over [B, T, F] (or [T, F]) returning the final hidden
/// state [B, H] (or [H]). Gate rows of the weights are ordered i, f, g, o.
template <typename T>
Tensor<T> lstm_forward(const Tensor<T>& seq, const Tensor<T>& w_ih, const Tensor<T>& w_hh, const Tensor<T>& bias) {
  if (seq.rank() == 2) return detail::drop_batch(lstm_forward(detail::with_batch(seq, 3), w_ih, w_hh, bias));
  if (seq.rank() != 3) fail(ErrorKind::ShapeMismatch, "lstm_forward needs [B,T,F]");
  const std::size_t nb = seq.dim(0), steps = seq.dim(1), f = seq.dim(2);
  if (steps == 0) fail(ErrorKind::EmptySequence, "lstm_forward on an empty sequence");
  if (w_hh.rank() != 2 || w_hh.dim(0) != 4 * w_hh.dim(1)) fail(ErrorKind::ShapeMismatch, "lstm w_hh must be [4H,H]");
  const std::size_t hs = w_hh.dim(1), g4 = 4 * hs;
  if (w_ih.rank() != 2 || w_ih.dim(0) != g4 || w_ih.dim(1) != f || bias.numel() != g4) {
    fail(ErrorKind::ShapeMismatch, "lstm weights " + shape_str(w_ih.shape()) + " for input " + shape_str(seq.shape()));
  }

  const T* x = seq.data().data();
  const T* wi = w_ih.data().data();
  const T* wh = w_hh.data().data();
  // gates[t][b][4H] after activation; cells/hidden[t][b][H] with t = 0 the initial state.
  std::vector<T> gates(steps * nb * g4);
  std::vector<T> cells((steps + 1) * nb * hs, T(0));
  std::vector<T> hidden((steps + 1) * nb * hs, T(0));
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t b = 0; b < nb; ++b) {
      const T* xt = x + (b * steps + t) * f;
      const T* hprev = hidden.data() + (t * nb + b) * hs;
      const T* cprev = cells.data() + (t * nb + b) * hs;
      T* z = gates.data() + (t * nb + b) * g4;
      for (std::size_t r = 0; r < g4; ++r) {
        T acc = bias[r];
        const T* wir = wi + r * f;
        for (std::size_t j = 0; j < f; ++j) acc += wir[j] * xt[j];
        const T* whr = wh + r * hs;
        for (std::size_t j = 0; j < hs; ++j) acc += whr[j] * hprev[j];
        z[r] = acc;
      }
      T* cnext = cells.data() + ((t + 1) * nb + b) * hs;
      T* hnext = hidden.data() + ((t + 1) * nb + b) * hs;
      for (std::size_t j = 0; j < hs; ++j) {
        const T ig = sigmoid_value(z[j]);
        const T fg = sigmoid_value(z[hs + j]);
        const T gg = std::tanh(z[2 * hs + j]);
        const T og = sigmoid_value(z[3 * hs + j]);
        z[j] = ig;
        z[hs + j] = fg;
        z[2 * hs + j] = gg;
        z[3 * hs + j] = og;
        cnext[j] = fg * cprev[j] + ig * gg;
        hnext[j] = og * std::tanh(cnext[j]);
      }
    }
  }
  std::vector<T> out(hidden.end() - static_cast<std::ptrdiff_t>(nb * hs), hidden.end());

  return Tensor<T>::make_result(
      Shape{nb, hs}, std::move(out), {seq.node(), w_ih.node(), w_hh.node(), bias.node()},
      [=, gates = std::move(gates), cells = std::move(cells), hidden = std::move(hidden)](detail::Node<T>& self) {
        auto& px = *self.parents[0];
        auto& pwi = *self.parents[1];
        auto& pwh = *self.parents[2];
        auto& pb = *self.parents[3];
        T* gx = px.requires_grad ? px.ensure_grad().data() : nullptr;
        T* gwi = pwi.requires_grad ? pwi.ensure_grad().data() : nullptr;
        T* gwh = pwh.requires_grad ? pwh.ensure_grad().data() : nullptr;
        T* gb = pb.requires_grad ? pb.ensure_grad().data() : nullptr;
        const T* xv = px.value.data();
        const T* wiv = pwi.value.data();
        const T* whv = pwh.value.data();

        std::vector<T> dh(self.grad.begin(), self.grad.end());
        std::vector<T> dc(nb * hs, T(0));
        std::vector<T> dz(g4);
        std::vector<T> dh_prev(nb * hs);
        for (std::size_t t = steps; t-- > 0;) {
          std::fill(dh_prev.begin(), dh_prev.end(), T(0));
          for (std::size_t b = 0; b < nb; ++b) {
            const T* gt = gates.data() + (t * nb + b) * g4;
            const T* cprev = cells.data() + (t * nb + b) * hs;
            const T* ccur = cells.data() + ((t + 1) * nb + b) * hs;
            const T* hprev = hidden.data() + (t * nb + b) * hs;
            T* dhb = dh.data() + b * hs;
            T* dcb = dc.data() + b * hs;
            for (std::size_t j = 0; j < hs; ++j) {
              const T ig = gt[j], fg = gt[hs + j], gg = gt[2 * hs + j], og = gt[3 * hs + j];
              const T tc = std::tanh(ccur[j]);
              const T d_o = dhb[j] * tc;
              dcb[j] += dhb[j] * og * (T(1) - tc * tc);
              dz[j] = dcb[j] * gg * ig * (T(1) - ig);
              dz[hs + j] = dcb[j] * cprev[j] * fg * (T(1) - fg);
              dz[2 * hs + j] = dcb[j] * ig * (T(1) - gg * gg);
              dz[3 * hs + j] = d_o * og * (T(1) - og);
              dcb[j] *= fg;
            }
            const T* xt = xv + (b * steps + t) * f;
            T* dhp = dh_prev.data() + b * hs;
            for (std::size_t r = 0; r < g4; ++r) {
              const T d = dz[r];
              if (d == T(0)) continue;
              if (gb) gb[r] += d;
              if (gwi) {
                T* row = gwi + r * f;
                for (std::size_t j = 0; j < f; ++j) row[j] += d * xt[j];
              }
              if (gwh) {
                T* row = gwh + r * hs;
                for (std::size_t j = 0; j < hs; ++j) row[j] += d * hprev[j];
              }
              if (gx) {
                T* gxt = gx + (b * steps + t) * f;
                const T* wir = wiv + r * f;
                for (std::size_t j = 0; j < f; ++j) gxt[j] += d * wir[j];
              }
              const T* whr = whv + r * hs;
              for (std::size_t j = 0; j < hs; ++j) dhp[j] += d * whr[j];
            }
          }
          dh.swap(dh_prev);
        }
      });
}

}  // namespace mosq::nn
