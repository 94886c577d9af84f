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
#include <cstddef>
#include <cstdint>

namespace harmof0::kernels {

// Two primitives carry every convolution in the network:
//
//   mix_accumulate: out[o][p] += sum_i w(o, i) * in[i][p]      (1x1 channel mix)
//   mix_dot:        gw(o, i)  += sum_p a[o][p] * b[i][p]       (weight gradient)
//
// Rows are addressed by a base pointer plus a row stride, weights by an
// (out, in) stride pair, so the same code serves forward, input-gradient
// (transposed weights) and shifted views.

namespace detail {

template <class T>
inline constexpr std::size_t kPosBlock = 256 / sizeof(T);
inline constexpr std::size_t kOutBlock = 2;

template <class T>
inline void mix_block_full(T* out, std::size_t out_stride, std::size_t o0, const T* in, std::size_t in_stride,
                           std::size_t n_in, const T* w, std::size_t w_out, std::size_t w_in, std::size_t p0) {
  constexpr std::size_t PB = kPosBlock<T>;
  T acc[kOutBlock][PB];
  for (std::size_t k = 0; k < kOutBlock; ++k) {
    const T* src = out + (o0 + k) * out_stride + p0;
#pragma GCC unroll 64
    for (std::size_t p = 0; p < PB; ++p) acc[k][p] = src[p];
  }
  for (std::size_t i = 0; i < n_in; ++i) {
    const T* x = in + i * in_stride + p0;
    T wk[kOutBlock];
    for (std::size_t k = 0; k < kOutBlock; ++k) wk[k] = w[(o0 + k) * w_out + i * w_in];
#pragma GCC unroll 4
    for (std::size_t k = 0; k < kOutBlock; ++k) {
#pragma GCC unroll 64
      for (std::size_t p = 0; p < PB; ++p) acc[k][p] += wk[k] * x[p];
    }
  }
  for (std::size_t k = 0; k < kOutBlock; ++k) {
    T* dst = out + (o0 + k) * out_stride + p0;
#pragma GCC unroll 64
    for (std::size_t p = 0; p < PB; ++p) dst[p] = acc[k][p];
  }
}

template <class T>
inline void mix_row_generic(T* out, std::size_t out_stride, std::size_t o, const T* in, std::size_t in_stride,
                            std::size_t n_in, const T* w, std::size_t w_out, std::size_t w_in, std::size_t p0,
                            std::size_t len) {
  T* dst = out + o * out_stride + p0;
  for (std::size_t i = 0; i < n_in; ++i) {
    const T wi = w[o * w_out + i * w_in];
    const T* x = in + i * in_stride + p0;
    for (std::size_t p = 0; p < len; ++p) dst[p] += wi * x[p];
  }
}

}  // namespace detail

/// out[o * out_stride + p] += sum_i w[o * w_out + i * w_in] * in[i * in_stride + p], for p < len.
///
/// Parallel over position blocks; each output element accumulates its
/// inputs in index order regardless of the worker count.
template <class T>
void mix_accumulate(T* out, std::size_t out_stride, std::size_t n_out, const T* in, std::size_t in_stride,
                    std::size_t n_in, const T* w, std::size_t w_out, std::size_t w_in, std::size_t len) {
  using namespace detail;
  constexpr std::size_t PB = kPosBlock<T>;
  if (len == 0 || n_out == 0) return;
  const std::int64_t n_blocks = static_cast<std::int64_t>((len + PB - 1) / PB);
  const std::size_t o_full = n_out - n_out % kOutBlock;
#pragma omp parallel for schedule(static) if (n_blocks * n_out * n_in > 65536)
  for (std::int64_t pb = 0; pb < n_blocks; ++pb) {
    const std::size_t p0 = static_cast<std::size_t>(pb) * PB;
    const std::size_t pl = std::min(PB, len - p0);
    if (pl == PB) {
      for (std::size_t o0 = 0; o0 < o_full; o0 += kOutBlock)
        mix_block_full(out, out_stride, o0, in, in_stride, n_in, w, w_out, w_in, p0);
      for (std::size_t o = o_full; o < n_out; ++o)
        mix_row_generic(out, out_stride, o, in, in_stride, n_in, w, w_out, w_in, p0, pl);
    } else {
      for (std::size_t o = 0; o < n_out; ++o)
        mix_row_generic(out, out_stride, o, in, in_stride, n_in, w, w_out, w_in, p0, pl);
    }
  }
}

namespace detail {

template <class T>
inline void dot_generic(T* gw, std::size_t gw_out, std::size_t gw_in, const T* a, std::size_t a_stride, std::size_t o,
                        const T* b, std::size_t b_stride, std::size_t i, std::size_t p0, std::size_t p1) {
  constexpr std::size_t V = 64 / sizeof(T);
  const T* ar = a + o * a_stride;
  const T* br = b + i * b_stride;
  T acc[V] = {};
  std::size_t p = p0;
  for (; p + V <= p1; p += V)
    for (std::size_t l = 0; l < V; ++l) acc[l] += ar[p + l] * br[p + l];
  T tail = T(0);
  for (; p < p1; ++p) tail += ar[p] * br[p];
  T s = T(0);
  for (std::size_t l = 0; l < V; ++l) s += acc[l];
  gw[o * gw_out + i * gw_in] += s + tail;
}

}  // namespace detail

/// gw[o * gw_out + i * gw_in] += sum_{p < len} a[o * a_stride + p] * b[i * b_stride + p].
///
/// Positions are consumed in fixed chunks; inside a chunk each (o, i) sum
/// runs over fixed-width lane partials combined in a fixed order. Parallel
/// over blocks of o only, so the result does not depend on the worker count.
template <class T>
void mix_dot(T* gw, std::size_t gw_out, std::size_t gw_in, const T* a, std::size_t a_stride, std::size_t n_a,
             const T* b, std::size_t b_stride, std::size_t n_b, std::size_t len) {
  constexpr std::size_t V = 64 / sizeof(T);
  constexpr std::size_t OB = 4;
  constexpr std::size_t IB = 4;
  constexpr std::size_t kChunk = 1024;
  if (len == 0 || n_a == 0 || n_b == 0) return;
  const std::int64_t n_oblocks = static_cast<std::int64_t>((n_a + OB - 1) / OB);
#pragma omp parallel for schedule(static) if (n_a * n_b * len > 65536)
  for (std::int64_t ob = 0; ob < n_oblocks; ++ob) {
    const std::size_t o0 = static_cast<std::size_t>(ob) * OB;
    const bool full_o = o0 + OB <= n_a;
    for (std::size_t c0 = 0; c0 < len; c0 += kChunk) {
      const std::size_t c1 = std::min(len, c0 + kChunk);
      const std::size_t cv = c0 + (c1 - c0) - (c1 - c0) % V;
      std::size_t i0 = 0;
      if (full_o) {
        for (; i0 + IB <= n_b; i0 += IB) {
          T acc[OB][IB][V] = {};
          for (std::size_t p = c0; p < cv; p += V) {
            T av[OB][V];
            for (std::size_t m = 0; m < OB; ++m)
              for (std::size_t l = 0; l < V; ++l) av[m][l] = a[(o0 + m) * a_stride + p + l];
            for (std::size_t k = 0; k < IB; ++k) {
              T bv[V];
              for (std::size_t l = 0; l < V; ++l) bv[l] = b[(i0 + k) * b_stride + p + l];
              for (std::size_t m = 0; m < OB; ++m)
                for (std::size_t l = 0; l < V; ++l) acc[m][k][l] += av[m][l] * bv[l];
            }
          }
          for (std::size_t m = 0; m < OB; ++m) {
            const T* ar = a + (o0 + m) * a_stride;
            for (std::size_t k = 0; k < IB; ++k) {
              const T* br = b + (i0 + k) * b_stride;
              T tail = T(0);
              for (std::size_t p = cv; p < c1; ++p) tail += ar[p] * br[p];
              T s = T(0);
              for (std::size_t l = 0; l < V; ++l) s += acc[m][k][l];
              gw[(o0 + m) * gw_out + (i0 + k) * gw_in] += s + tail;
            }
          }
        }
      }
      if (i0 == n_b) continue;
      const std::size_t o_end = std::min(n_a, o0 + OB);
      for (std::size_t o = o0; o < o_end; ++o)
        for (std::size_t i = i0; i < n_b; ++i) detail::dot_generic(gw, gw_out, gw_in, a, a_stride, o, b, b_stride, i, c0, c1);
    }
  }
}

}  // namespace harmof0::kernels
