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
#include "harmof0/nn.hpp"
#include "harmof0/tensor.hpp"

namespace harmof0 {

/// Gaps between adjacent harmonics on a log-frequency axis and the
/// resulting tap positions relative to the fundamental.
///
/// With Q bins per octave, harmonics k and k+1 of any f0 sit
/// round(Q * log2((k + 1) / k)) bins apart; f0 itself drops out.
struct DilationSchedule {
  int bins_per_octave = 48;
  int n_harmonics = 12;
  std::vector<int> intervals;  // n_harmonics - 1 entries, non-increasing
  std::vector<int> offsets;    // n_harmonics entries, offsets[0] == 0

  int span() const { return offsets.empty() ? 0 : offsets.back(); }
};

inline DilationSchedule compute_dilation_schedule(int bins_per_octave = 48, int n_harmonics = 12) {
  if (bins_per_octave < 1) throw ValidationError("bins per octave must be at least 1");
  if (n_harmonics < 2) throw ValidationError("need at least two harmonics");
  DilationSchedule s;
  s.bins_per_octave = bins_per_octave;
  s.n_harmonics = n_harmonics;
  s.offsets.push_back(0);
  for (int k = 1; k < n_harmonics; ++k) {
    // std::lround rounds half away from zero
    const auto d = static_cast<int>(std::lround(bins_per_octave * std::log2(static_cast<double>(k + 1) / k)));
    s.intervals.push_back(d);
    s.offsets.push_back(s.offsets.back() + d);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Frequency-axis dilated convolutions.

enum class DilationKind {
  kMultiRate,  // MRDC: causal, harmonic-interval gaps
  kFixedRate,  // FRDC: causal, constant gap
  kSymmetric,  // SD: centred, constant gap
};

inline const char* to_string(DilationKind k) {
  switch (k) {
    case DilationKind::kMultiRate:
      return "MRDC";
    case DilationKind::kFixedRate:
      return "FRDC";
    case DilationKind::kSymmetric:
      return "SD";
  }
  return "?";
}

/// Describes one frequency-dilated layer. Causal kinds read bins at and
/// above the output bin (overtones lie above the fundamental).
struct DilatedConvSpec {
  DilationKind kind = DilationKind::kMultiRate;
  std::size_t c_out = 0;
  std::size_t c_in = 0;
  int taps = 12;
  /// Gap for FRDC/SD; bins per octave for MRDC.
  int rate = 48;
  /// MRDC only: keep the offset-0 tap on the fundamental itself.
  bool anchor_tap = true;

  /// Signed tap positions along frequency, in bins.
  std::vector<int> offsets() const {
    std::vector<int> o;
    switch (kind) {
      case DilationKind::kMultiRate: {
        const int n_har = anchor_tap ? taps : taps + 1;
        const auto s = compute_dilation_schedule(rate, n_har);
        o.assign(s.offsets.begin() + (anchor_tap ? 0 : 1), s.offsets.end());
        break;
      }
      case DilationKind::kFixedRate:
        for (int j = 0; j < taps; ++j) o.push_back(j * rate);
        break;
      case DilationKind::kSymmetric:
        for (int j = 0; j < taps; ++j) o.push_back((j - (taps - 1) / 2) * rate);
        break;
    }
    return o;
  }

  std::size_t weight_count() const { return c_out * c_in * static_cast<std::size_t>(taps); }

  static DilatedConvSpec multi_rate(std::size_t c_out, std::size_t c_in, const DilationSchedule& s, bool anchor = true) {
    return {DilationKind::kMultiRate, c_out, c_in, anchor ? s.n_harmonics : s.n_harmonics - 1, s.bins_per_octave,
            anchor};
  }
  static DilatedConvSpec fixed_rate(std::size_t c_out, std::size_t c_in, int rate, int taps, bool causal) {
    return {causal ? DilationKind::kFixedRate : DilationKind::kSymmetric, c_out, c_in, taps, rate, true};
  }
};

namespace detail {

inline void check_offsets(std::span<const int> offsets, std::size_t freq, DilationKind kind) {
  if (offsets.empty()) throw ValidationError("dilated convolution needs at least one tap");
  int reach = 0;
  for (int o : offsets) reach = std::max(reach, std::abs(o));
  if (static_cast<std::size_t>(reach) >= freq) {
    throw ValidationError(kind == DilationKind::kMultiRate ? "schedule exceeds frequency axis"
                                                            : "receptive field exceeds frequency axis");
  }
}

/// Rows f whose tap f + o stays inside [0, F).
struct TapRows {
  std::size_t first = 0, count = 0;
  TapRows(int o, std::size_t F) {
    const long lo = std::max(0L, -static_cast<long>(o));
    const long hi = std::min(static_cast<long>(F), static_cast<long>(F) - o);
    if (hi > lo) {
      first = static_cast<std::size_t>(lo);
      count = static_cast<std::size_t>(hi - lo);
    }
  }
};

}  // namespace detail

/// out[b, co, f, t] = bias[co] + sum_ci sum_j w[co, ci, j] * x[b, ci, f + offsets[j], t]
///
/// Evaluated tap by tap: each tap is a 1x1 convolution of the whole input,
/// the result is shifted by its offset and summed into the output. Rows
/// shifted past either edge are discarded.
template <class T>
Tensor4<T> frequency_tap_forward(const Tensor4<T>& x, std::span<const T> w, std::span<const T> bias, std::size_t c_out,
                                 std::span<const int> offsets, DilationKind kind = DilationKind::kFixedRate) {
  const std::size_t c_in = x.channels(), K = offsets.size();
  if (w.size() != c_out * c_in * K) throw ValidationError("dilated convolution: weight size does not match channels");
  if (bias.size() != c_out) throw ValidationError("dilated convolution: bias size mismatch");
  detail::check_offsets(offsets, x.freq(), kind);
  const std::size_t Tn = x.time(), P = x.shape().plane();
  Tensor4<T> out(x.batch(), c_out, x.freq(), Tn);
  std::vector<T> tap_out;
  for (std::size_t b = 0; b < x.batch(); ++b) {
    T* ob = out.item(b);
    for (std::size_t co = 0; co < c_out; ++co) std::fill_n(ob + co * P, P, bias[co]);
    for (std::size_t j = 0; j < K; ++j) {
      const detail::TapRows rows(offsets[j], x.freq());
      if (rows.count == 0) continue;
      const std::size_t n = rows.count * Tn;
      const std::size_t src_row = static_cast<std::size_t>(static_cast<long>(rows.first) + offsets[j]);
      // 1x1 convolution of the rows this tap can reach
      tap_out.assign(c_out * n, T(0));
      kernels::mix_accumulate(tap_out.data(), n, c_out, x.item(b) + src_row * Tn, P, c_in, w.data() + j, c_in * K, K, n);
      // shift and sum
      for (std::size_t co = 0; co < c_out; ++co) {
        T* dst = ob + co * P + rows.first * Tn;
        const T* s = tap_out.data() + co * n;
        for (std::size_t i = 0; i < n; ++i) dst[i] += s[i];
      }
    }
  }
  return out;
}

/// Adjoint of frequency_tap_forward. Gradients for w and bias are
/// accumulated into the spans; dL/dx scatters each tap back to f + offset.
template <class T>
Tensor4<T> frequency_tap_backward(const Tensor4<T>& x, std::span<const T> w, std::size_t c_out,
                                  std::span<const int> offsets, const Tensor4<T>& grad_out, std::span<T> grad_w,
                                  std::span<T> grad_bias, bool need_grad_x = true,
                                  DilationKind kind = DilationKind::kFixedRate) {
  const std::size_t c_in = x.channels(), K = offsets.size();
  if (w.size() != c_out * c_in * K || grad_w.size() != w.size() || grad_bias.size() != c_out)
    throw ValidationError("dilated convolution backward: parameter size mismatch");
  if (grad_out.shape() != Shape4{x.batch(), c_out, x.freq(), x.time()})
    throw ValidationError("dilated convolution backward: gradient shape mismatch");
  detail::check_offsets(offsets, x.freq(), kind);
  const std::size_t Tn = x.time(), P = x.shape().plane();
  Tensor4<T> gx;
  if (need_grad_x) gx = Tensor4<T>(x.shape());
  std::vector<T> scratch;
  for (std::size_t b = 0; b < x.batch(); ++b) {
    const T* gob = grad_out.item(b);
    for (std::size_t co = 0; co < c_out; ++co) {
      T s = T(0);
      for (std::size_t p = 0; p < P; ++p) s += gob[co * P + p];
      grad_bias[co] += s;
    }
    for (std::size_t j = 0; j < K; ++j) {
      const detail::TapRows rows(offsets[j], x.freq());
      if (rows.count == 0) continue;
      const std::size_t n = rows.count * Tn;
      const std::size_t dst_row = rows.first;
      const std::size_t src_row = static_cast<std::size_t>(static_cast<long>(rows.first) + offsets[j]);
      kernels::mix_dot(grad_w.data() + j, c_in * K, K, gob + dst_row * Tn, P, c_out, x.item(b) + src_row * Tn, P, c_in,
                       n);
      if (!need_grad_x) continue;
      scratch.assign(c_in * n, T(0));
      kernels::mix_accumulate(scratch.data(), n, c_in, gob + dst_row * Tn, P, c_out, w.data() + j, K, c_in * K, n);
      T* gxb = gx.item(b);
      for (std::size_t ci = 0; ci < c_in; ++ci) {
        T* d = gxb + ci * P + src_row * Tn;
        const T* s = scratch.data() + ci * n;
        for (std::size_t i = 0; i < n; ++i) d[i] += s[i];
      }
    }
  }
  return gx;
}

/// Multi-rate dilated causal convolution along frequency.
template <class T>
Tensor4<T> mrdc_conv_forward(const Tensor4<T>& x, std::span<const T> w, std::span<const T> bias, std::size_t c_out,
                             const DilationSchedule& schedule) {
  return frequency_tap_forward<T>(x, w, bias, c_out, schedule.offsets, DilationKind::kMultiRate);
}

template <class T>
Tensor4<T> mrdc_conv_backward(const Tensor4<T>& x, std::span<const T> w, std::size_t c_out,
                              const DilationSchedule& schedule, const Tensor4<T>& grad_out, std::span<T> grad_w,
                              std::span<T> grad_bias, bool need_grad_x = true) {
  return frequency_tap_backward<T>(x, w, c_out, schedule.offsets, grad_out, grad_w, grad_bias, need_grad_x,
                                   DilationKind::kMultiRate);
}

/// Fixed-rate frequency dilation: causal (FRDC) or centred (SD).
template <class T>
Tensor4<T> dilated_conv_1d_freq(const Tensor4<T>& x, std::span<const T> w, std::span<const T> bias, std::size_t c_out,
                                int rate, int taps, bool causal) {
  if (rate < 1 || taps < 1) throw ValidationError("dilation rate and tap count must be positive");
  if (static_cast<std::size_t>((taps - 1) * rate) >= x.freq()) throw ValidationError("receptive field exceeds frequency axis");
  const auto offsets = DilatedConvSpec::fixed_rate(c_out, x.channels(), rate, taps, causal).offsets();
  return frequency_tap_forward<T>(x, w, bias, c_out, offsets);
}

template <class T>
Tensor4<T> dilated_conv_1d_freq_backward(const Tensor4<T>& x, std::span<const T> w, std::size_t c_out, int rate,
                                         int taps, bool causal, const Tensor4<T>& grad_out, std::span<T> grad_w,
                                         std::span<T> grad_bias, bool need_grad_x = true) {
  if (rate < 1 || taps < 1) throw ValidationError("dilation rate and tap count must be positive");
  if (static_cast<std::size_t>((taps - 1) * rate) >= x.freq()) throw ValidationError("receptive field exceeds frequency axis");
  const auto offsets = DilatedConvSpec::fixed_rate(c_out, x.channels(), rate, taps, causal).offsets();
  return frequency_tap_backward<T>(x, w, c_out, offsets, grad_out, grad_w, grad_bias, need_grad_x);
}

/// Layer wrapper holding weights (C_out, C_in, taps) and bias.
template <class T>
class DilatedConv {
 public:
  DilatedConv() = default;
  explicit DilatedConv(DilatedConvSpec spec)
      : spec_(spec), offsets_(spec.offsets()), weight_(spec.weight_count()), bias_(spec.c_out) {}

  const DilatedConvSpec& spec() const noexcept { return spec_; }
  const std::vector<int>& offsets() const noexcept { return offsets_; }
  Param<T>& weight() noexcept { return weight_; }
  const Param<T>& weight() const noexcept { return weight_; }
  Param<T>& bias() noexcept { return bias_; }
  const Param<T>& bias() const noexcept { return bias_; }
  std::size_t param_count() const noexcept { return weight_.size() + bias_.size(); }

  Tensor4<T> forward(const Tensor4<T>& x) const {
    if (x.channels() != spec_.c_in) throw ValidationError("dilated convolution: channel mismatch");
    return frequency_tap_forward<T>(x, weight_.value, bias_.value, spec_.c_out, offsets_, spec_.kind);
  }
  Tensor4<T> backward(const Tensor4<T>& x, const Tensor4<T>& grad_out, bool need_grad_x) {
    return frequency_tap_backward<T>(x, weight_.value, spec_.c_out, offsets_, grad_out, weight_.grad, bias_.grad,
                                     need_grad_x, spec_.kind);
  }

  template <class U>
  DilatedConv<U> cast() const {
    DilatedConv<U> d(spec_);
    d.weight() = weight_.template cast<U>();
    d.bias() = bias_.template cast<U>();
    return d;
  }

 private:
  DilatedConvSpec spec_{};
  std::vector<int> offsets_;
  Param<T> weight_;
  Param<T> bias_;
};

}  // namespace harmof0
