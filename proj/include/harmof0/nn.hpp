/*
 * Copyright 2026 The HarmoF0 Toolkit Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "harmof0/error.hpp"
#include "harmof0/kernels.hpp"
#include "harmof0/tensor.hpp"

namespace harmof0 {

enum class Mode { kTrain, kEval };

/// A trainable array and its gradient accumulator (always the same length).
template <class T>
struct Param {
  std::vector<T> value;
  std::vector<T> grad;

  Param() = default;
  explicit Param(std::size_t n, T fill = T(0)) : value(n, fill), grad(n, T(0)) {}

  std::size_t size() const noexcept { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }

  template <class U>
  Param<U> cast() const {
    Param<U> p(value.size());
    std::transform(value.begin(), value.end(), p.value.begin(), [](T v) { return static_cast<U>(v); });
    return p;
  }
};

// ---------------------------------------------------------------------------
// Conv2d, "same" zero padding, odd kernels.
//
// Weights are laid out (C_out, C_in, K_f, K_t). The input is copied into a
// zero-bordered buffer so that every kernel tap becomes a constant offset in
// the flattened plane; each tap is then one channel-mix over a contiguous
// range.

namespace detail {

struct PadGeometry {
  std::size_t pf, pt, fp, tp, start, len;

  PadGeometry(std::size_t f, std::size_t t, std::size_t k_f, std::size_t k_t)
      : pf((k_f - 1) / 2), pt((k_t - 1) / 2), fp(f + 2 * pf), tp(t + 2 * pt) {
    start = pf * tp + pt;
    len = (pf + f - 1) * tp + pt + t - start;
  }
  std::size_t padded_plane() const { return fp * tp; }
  std::ptrdiff_t offset(std::size_t kf, std::size_t kt) const {
    return (static_cast<std::ptrdiff_t>(kf) - static_cast<std::ptrdiff_t>(pf)) * static_cast<std::ptrdiff_t>(tp) +
           (static_cast<std::ptrdiff_t>(kt) - static_cast<std::ptrdiff_t>(pt));
  }
};

template <class T>
void pad_planes(const T* src, std::size_t channels, std::size_t f, std::size_t t, const PadGeometry& g,
                std::vector<T>& dst) {
  dst.assign(channels * g.padded_plane(), T(0));
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t r = 0; r < f; ++r)
      std::copy_n(src + (c * f + r) * t, t, dst.data() + c * g.padded_plane() + (r + g.pf) * g.tp + g.pt);
}

template <class T>
void unpad_planes_add(const std::vector<T>& src, std::size_t channels, std::size_t f, std::size_t t,
                      const PadGeometry& g, T* dst) {
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t r = 0; r < f; ++r) {
      const T* s = src.data() + c * g.padded_plane() + (r + g.pf) * g.tp + g.pt;
      T* d = dst + (c * f + r) * t;
      for (std::size_t i = 0; i < t; ++i) d[i] += s[i];
    }
}

}  // namespace detail

struct Conv2dShape {
  std::size_t c_out = 0, c_in = 0, k_f = 1, k_t = 1;
  std::size_t taps() const { return k_f * k_t; }
  std::size_t weight_count() const { return c_out * c_in * k_f * k_t; }
};

template <class T>
Tensor4<T> conv2d_forward(const Tensor4<T>& x, std::span<const T> w, std::span<const T> bias, const Conv2dShape& k) {
  if (x.channels() != k.c_in)
    throw ValidationError("conv2d: input has " + std::to_string(x.channels()) + " channels, kernel expects " +
                          std::to_string(k.c_in));
  if (w.size() != k.weight_count() || bias.size() != k.c_out) throw ValidationError("conv2d: parameter size mismatch");
  if (k.k_f % 2 == 0 || k.k_t % 2 == 0) throw ValidationError("conv2d: kernel extents must be odd");
  const std::size_t F = x.freq(), Tn = x.time(), P = x.shape().plane();
  Tensor4<T> out(x.batch(), k.c_out, F, Tn);
  const std::size_t K = k.taps();
  for (std::size_t b = 0; b < x.batch(); ++b) {
    T* ob = out.item(b);
    for (std::size_t co = 0; co < k.c_out; ++co) std::fill_n(ob + co * P, P, bias[co]);
    if (K == 1) {
      kernels::mix_accumulate(ob, P, k.c_out, x.item(b), P, k.c_in, w.data(), k.c_in, std::size_t{1}, P);
      continue;
    }
    const detail::PadGeometry g(F, Tn, k.k_f, k.k_t);
    std::vector<T> xp, op(k.c_out * g.padded_plane(), T(0));
    detail::pad_planes(x.item(b), k.c_in, F, Tn, g, xp);
    for (std::size_t kf = 0; kf < k.k_f; ++kf)
      for (std::size_t kt = 0; kt < k.k_t; ++kt) {
        const std::size_t j = kf * k.k_t + kt;
        kernels::mix_accumulate(op.data() + g.start, g.padded_plane(), k.c_out, xp.data() + g.start + g.offset(kf, kt),
                                g.padded_plane(), k.c_in, w.data() + j, k.c_in * K, K, g.len);
      }
    detail::unpad_planes_add(op, k.c_out, F, Tn, g, ob);
  }
  return out;
}

/// Accumulates dL/dw and dL/dbias into the given spans; returns dL/dx when
/// `need_grad_x` (an empty tensor otherwise).
template <class T>
Tensor4<T> conv2d_backward(const Tensor4<T>& x, std::span<const T> w, const Conv2dShape& k, const Tensor4<T>& grad_out,
                           std::span<T> grad_w, std::span<T> grad_bias, bool need_grad_x = true) {
  if (x.channels() != k.c_in || grad_out.channels() != k.c_out || grad_out.freq() != x.freq() ||
      grad_out.time() != x.time() || grad_out.batch() != x.batch())
    throw ValidationError("conv2d backward: shape mismatch");
  if (grad_w.size() != k.weight_count() || grad_bias.size() != k.c_out)
    throw ValidationError("conv2d backward: gradient buffer size mismatch");
  const std::size_t F = x.freq(), Tn = x.time(), P = x.shape().plane();
  const std::size_t K = k.taps();
  Tensor4<T> gx;
  if (need_grad_x) gx = Tensor4<T>(x.shape());
  for (std::size_t b = 0; b < x.batch(); ++b) {
    const T* gob = grad_out.item(b);
    for (std::size_t co = 0; co < k.c_out; ++co) {
      T s = T(0);
      for (std::size_t p = 0; p < P; ++p) s += gob[co * P + p];
      grad_bias[co] += s;
    }
    if (K == 1) {
      kernels::mix_dot(grad_w.data(), k.c_in, std::size_t{1}, gob, P, k.c_out, x.item(b), P, k.c_in, P);
      if (need_grad_x)
        kernels::mix_accumulate(gx.item(b), P, k.c_in, gob, P, k.c_out, w.data(), std::size_t{1}, k.c_in, P);
      continue;
    }
    const detail::PadGeometry g(F, Tn, k.k_f, k.k_t);
    std::vector<T> xp, gop, gxp;
    detail::pad_planes(x.item(b), k.c_in, F, Tn, g, xp);
    detail::pad_planes(gob, k.c_out, F, Tn, g, gop);
    if (need_grad_x) gxp.assign(k.c_in * g.padded_plane(), T(0));
    for (std::size_t kf = 0; kf < k.k_f; ++kf)
      for (std::size_t kt = 0; kt < k.k_t; ++kt) {
        const std::size_t j = kf * k.k_t + kt;
        const std::ptrdiff_t off = g.offset(kf, kt);
        kernels::mix_dot(grad_w.data() + j, k.c_in * K, K, gop.data() + g.start, g.padded_plane(), k.c_out,
                         xp.data() + g.start + off, g.padded_plane(), k.c_in, g.len);
        if (need_grad_x)
          kernels::mix_accumulate(gxp.data() + g.start + off, g.padded_plane(), k.c_in, gop.data() + g.start,
                                  g.padded_plane(), k.c_out, w.data() + j, K, k.c_in * K, g.len);
      }
    if (need_grad_x) detail::unpad_planes_add(gxp, k.c_in, F, Tn, g, gx.item(b));
  }
  return gx;
}

template <class T>
class Conv2d {
 public:
  Conv2d() = default;
  explicit Conv2d(Conv2dShape shape) : shape_(shape), weight_(shape.weight_count()), bias_(shape.c_out) {}

  const Conv2dShape& shape() const noexcept { return shape_; }
  Param<T>& weight() noexcept { return weight_; }
  const Param<T>& weight() const noexcept { return weight_; }
  Param<T>& bias() noexcept { return bias_; }
  const Param<T>& bias() const noexcept { return bias_; }
  std::size_t param_count() const noexcept { return weight_.size() + bias_.size(); }

  Tensor4<T> forward(const Tensor4<T>& x) const {
    return conv2d_forward<T>(x, weight_.value, bias_.value, shape_);
  }
  Tensor4<T> backward(const Tensor4<T>& x, const Tensor4<T>& grad_out, bool need_grad_x) {
    return conv2d_backward<T>(x, weight_.value, shape_, grad_out, weight_.grad, bias_.grad, need_grad_x);
  }

  template <class U>
  Conv2d<U> cast() const {
    Conv2d<U> c(shape_);
    c.weight() = weight_.template cast<U>();
    c.bias() = bias_.template cast<U>();
    return c;
  }

 private:
  Conv2dShape shape_{};
  Param<T> weight_;
  Param<T> bias_;
};

// ---------------------------------------------------------------------------
// Activations. Backward passes use the stored forward output.

template <class T>
void relu_inplace(Tensor4<T>& x) {
  for (T& v : x.data()) v = v < T(0) ? T(0) : v;  // NaN passes through
}

template <class T>
Tensor4<T> relu_forward(Tensor4<T> x) {
  relu_inplace(x);
  return x;
}

template <class T>
Tensor4<T> relu_backward(const Tensor4<T>& out, Tensor4<T> grad) {
  require_shape(grad.shape(), out.shape(), "relu backward");
  auto g = grad.data();
  auto o = out.data();
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!(o[i] > T(0))) g[i] = T(0);
  return grad;
}

template <class T>
T sigmoid(T v) {
  return v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
}

template <class T>
Tensor4<T> sigmoid_forward(Tensor4<T> x) {
  for (T& v : x.data()) v = sigmoid(v);
  return x;
}

template <class T>
Tensor4<T> sigmoid_backward(const Tensor4<T>& out, Tensor4<T> grad) {
  require_shape(grad.shape(), out.shape(), "sigmoid backward");
  auto g = grad.data();
  auto o = out.data();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= o[i] * (T(1) - o[i]);
  return grad;
}

// ---------------------------------------------------------------------------
// Batch normalization over (B, F, T) per channel.

template <class T>
class BatchNorm {
 public:
  static constexpr double kMomentum = 0.1;
  static constexpr double kEps = 1e-5;

  BatchNorm() = default;
  explicit BatchNorm(std::size_t channels)
      : gamma_(channels, T(1)), beta_(channels, T(0)), running_mean_(channels, T(0)), running_var_(channels, T(1)) {}

  std::size_t channels() const noexcept { return gamma_.size(); }
  Param<T>& gamma() noexcept { return gamma_; }
  const Param<T>& gamma() const noexcept { return gamma_; }
  Param<T>& beta() noexcept { return beta_; }
  const Param<T>& beta() const noexcept { return beta_; }
  std::vector<T>& running_mean() noexcept { return running_mean_; }
  const std::vector<T>& running_mean() const noexcept { return running_mean_; }
  std::vector<T>& running_var() noexcept { return running_var_; }
  const std::vector<T>& running_var() const noexcept { return running_var_; }
  std::size_t param_count() const noexcept { return gamma_.size() + beta_.size(); }

  /// Eval mode: running statistics, no state change.
  Tensor4<T> forward_eval(const Tensor4<T>& x) const {
    check(x);
    std::vector<double> mean(channels()), inv(channels());
    for (std::size_t c = 0; c < channels(); ++c) {
      mean[c] = running_mean_[c];
      inv[c] = 1.0 / std::sqrt(static_cast<double>(running_var_[c]) + kEps);
    }
    return apply(x, mean, inv);
  }

  /// Train mode: batch statistics, updates running stats and caches what
  /// backward needs.
  Tensor4<T> forward_train(const Tensor4<T>& x) {
    check(x);
    const std::size_t C = channels(), P = x.shape().plane();
    const double n = static_cast<double>(x.batch() * P);
    batch_mean_.assign(C, 0.0);
    batch_inv_std_.assign(C, 0.0);
    for (std::size_t c = 0; c < C; ++c) {
      double s = 0.0;
      for (std::size_t b = 0; b < x.batch(); ++b) {
        const T* p = x.plane(b, c);
        for (std::size_t i = 0; i < P; ++i) s += p[i];
      }
      const double mean = s / n;
      double v = 0.0;
      for (std::size_t b = 0; b < x.batch(); ++b) {
        const T* p = x.plane(b, c);
        for (std::size_t i = 0; i < P; ++i) v += (p[i] - mean) * (p[i] - mean);
      }
      const double var = v / n;
      batch_mean_[c] = mean;
      batch_inv_std_[c] = 1.0 / std::sqrt(var + kEps);
      const double unbiased = n > 1 ? var * n / (n - 1) : var;
      running_mean_[c] = static_cast<T>((1 - kMomentum) * running_mean_[c] + kMomentum * mean);
      running_var_[c] = static_cast<T>((1 - kMomentum) * running_var_[c] + kMomentum * unbiased);
    }
    cached_train_ = true;
    return apply(x, batch_mean_, batch_inv_std_);
  }

  /// Backward through the most recent forward_train on `x`.
  Tensor4<T> backward(const Tensor4<T>& x, const Tensor4<T>& grad_out) {
    check(x);
    require_shape(grad_out.shape(), x.shape(), "batchnorm backward");
    if (!cached_train_) throw ValidationError("batchnorm backward without a training forward pass");
    const std::size_t C = channels(), P = x.shape().plane();
    const double n = static_cast<double>(x.batch() * P);
    Tensor4<T> gx(x.shape());
    for (std::size_t c = 0; c < C; ++c) {
      const double mean = batch_mean_[c], inv = batch_inv_std_[c];
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (std::size_t b = 0; b < x.batch(); ++b) {
        const T* xp = x.plane(b, c);
        const T* gp = grad_out.plane(b, c);
        for (std::size_t i = 0; i < P; ++i) {
          sum_dy += gp[i];
          sum_dy_xhat += gp[i] * (xp[i] - mean) * inv;
        }
      }
      gamma_.grad[c] += static_cast<T>(sum_dy_xhat);
      beta_.grad[c] += static_cast<T>(sum_dy);
      const double k = gamma_.value[c] * inv / n;
      for (std::size_t b = 0; b < x.batch(); ++b) {
        const T* xp = x.plane(b, c);
        const T* gp = grad_out.plane(b, c);
        T* dp = gx.plane(b, c);
        for (std::size_t i = 0; i < P; ++i) {
          const double xhat = (xp[i] - mean) * inv;
          dp[i] = static_cast<T>(k * (n * gp[i] - sum_dy - xhat * sum_dy_xhat));
        }
      }
    }
    return gx;
  }

  template <class U>
  BatchNorm<U> cast() const {
    BatchNorm<U> out(channels());
    out.gamma() = gamma_.template cast<U>();
    out.beta() = beta_.template cast<U>();
    for (std::size_t c = 0; c < channels(); ++c) {
      out.running_mean()[c] = static_cast<U>(running_mean_[c]);
      out.running_var()[c] = static_cast<U>(running_var_[c]);
    }
    return out;
  }

 private:
  void check(const Tensor4<T>& x) const {
    if (x.channels() != channels())
      throw ValidationError("batchnorm: input has " + std::to_string(x.channels()) + " channels, expected " +
                            std::to_string(channels()));
  }

  Tensor4<T> apply(const Tensor4<T>& x, const std::vector<double>& mean, const std::vector<double>& inv) const {
    Tensor4<T> y(x.shape());
    const std::size_t P = x.shape().plane();
    for (std::size_t b = 0; b < x.batch(); ++b)
      for (std::size_t c = 0; c < channels(); ++c) {
        const T* xp = x.plane(b, c);
        T* yp = y.plane(b, c);
        const double g = gamma_.value[c] * inv[c];
        const double shift = beta_.value[c] - g * mean[c];
        for (std::size_t i = 0; i < P; ++i) yp[i] = static_cast<T>(g * xp[i] + shift);
      }
    return y;
  }

  Param<T> gamma_;
  Param<T> beta_;
  std::vector<T> running_mean_;
  std::vector<T> running_var_;
  std::vector<double> batch_mean_;
  std::vector<double> batch_inv_std_;
  bool cached_train_ = false;
};

}  // namespace harmof0
