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

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "harmof0/error.hpp"
#include "harmof0/tensor.hpp"

namespace harmof0 {

using Audio = std::vector<double>;

/// Amplitude treatment applied after the log-frequency mapping.
enum class Amplitude { kRaw, kLog1p };

struct SpectrogramConfig {
  int sample_rate_hz = 16000;
  int window_len = 1024;
  int hop = 320;
  int n_bins = 352;
  double f_min_hz = 27.5;
  int bins_per_octave = 48;
  double clip_len_s = 2.0;
  Amplitude amplitude = Amplitude::kLog1p;
  /// Per-clip zero-mean / unit-variance scaling when staging network input.
  bool standardize = true;

  int n_fft_bins() const { return window_len / 2 + 1; }
  std::size_t clip_samples() const { return static_cast<std::size_t>(std::lround(clip_len_s * sample_rate_hz)); }
  std::size_t clip_frames() const { return clip_samples() / static_cast<std::size_t>(hop); }
  double f_max_hz() const { return f_min_hz * std::exp2(static_cast<double>(n_bins - 1) / bins_per_octave); }

  void validate() const {
    if (sample_rate_hz <= 0) throw ValidationError("sample rate must be positive");
    if (hop <= 0) throw ValidationError("hop must be positive");
    if (window_len < hop) throw ValidationError("window length must be at least the hop");
    if (window_len % 2 != 0) throw ValidationError("window length must be even");
    if (n_bins <= 0 || bins_per_octave <= 0 || f_min_hz <= 0) throw ValidationError("invalid log-frequency grid");
    if (f_max_hz() > sample_rate_hz / 2.0) throw ValidationError("highest log bin lies above Nyquist");
    const double clip = clip_len_s * sample_rate_hz;
    if (std::abs(clip - std::round(clip)) > 1e-9 || std::lround(clip) % hop != 0)
      throw ValidationError("clip length must be a whole number of hops");
  }
};

/// Row-major dense matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

/// Log-frequency magnitude spectrogram, n_bins x T, entries finite and >= 0.
struct LogSpectrogram {
  Matrix values;
  std::vector<double> frame_times_s;
  SpectrogramConfig config;

  std::size_t n_frames() const { return values.cols; }
};

// ---------------------------------------------------------------------------
// Frequency grid

inline double bin_to_hz(double bin, double f_min_hz = 27.5, int bins_per_octave = 48) {
  return f_min_hz * std::exp2(bin / bins_per_octave);
}

inline double hz_to_bin(double hz, double f_min_hz = 27.5, int bins_per_octave = 48) {
  if (!(hz > 0)) throw ValidationError("non-positive frequency");
  return bins_per_octave * std::log2(hz / f_min_hz);
}

// ---------------------------------------------------------------------------
// Resampling

namespace detail {

inline double kaiser(double x, double beta) {
  // x in [-1, 1]
  const double t = std::max(0.0, 1.0 - x * x);
  return std::cyl_bessel_i(0.0, beta * std::sqrt(t)) / std::cyl_bessel_i(0.0, beta);
}

inline double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

}  // namespace detail

/// Polyphase windowed-sinc resampler, 64 taps per phase, Kaiser window.
inline Audio resample(std::span<const double> audio, int src_rate, int dst_rate) {
  if (src_rate <= 0 || dst_rate <= 0) throw ValidationError("sample rates must be positive");
  if (audio.empty()) throw ValidationError("empty audio");
  if (src_rate == dst_rate) return Audio(audio.begin(), audio.end());

  constexpr int kTaps = 64;
  constexpr double kBeta = 8.0;
  const long g = std::gcd(src_rate, dst_rate);
  const long up = dst_rate / g;    // L
  const long down = src_rate / g;  // M
  const double cutoff = std::min(1.0, static_cast<double>(dst_rate) / src_rate) * 0.97;
  const auto out_len = static_cast<std::size_t>(std::llround(static_cast<double>(audio.size()) * dst_rate / src_rate));

  // Phase p corresponds to a fractional input position frac = p / L.
  auto tap_weight = [&](double frac, int k) {
    // tap k reads input sample floor(pos) - kTaps/2 + 1 + k
    const double dist = static_cast<double>(k - kTaps / 2 + 1) - frac;
    return cutoff * detail::sinc(cutoff * dist) * detail::kaiser(dist / (kTaps / 2.0), kBeta);
  };

  const bool tabulate = up <= 4096;
  std::vector<double> table;
  if (tabulate) {
    table.resize(static_cast<std::size_t>(up) * kTaps);
    for (long p = 0; p < up; ++p)
      for (int k = 0; k < kTaps; ++k)
        table[static_cast<std::size_t>(p) * kTaps + k] = tap_weight(static_cast<double>(p) / up, k);
  }

  Audio out(out_len, 0.0);
  const auto n = static_cast<long>(audio.size());
  std::vector<double> scratch(kTaps);
  for (std::size_t j = 0; j < out_len; ++j) {
    const long num = static_cast<long>(j) * down;
    const long base = num / up;
    const long phase = num % up;
    const double* w = nullptr;
    if (tabulate) {
      w = table.data() + static_cast<std::size_t>(phase) * kTaps;
    } else {
      for (int k = 0; k < kTaps; ++k) scratch[k] = tap_weight(static_cast<double>(phase) / up, k);
      w = scratch.data();
    }
    double acc = 0.0;
    for (int k = 0; k < kTaps; ++k) {
      const long idx = base - kTaps / 2 + 1 + k;
      if (idx >= 0 && idx < n) acc += w[k] * audio[static_cast<std::size_t>(idx)];
    }
    out[j] = acc;
  }
  return out;
}

// ---------------------------------------------------------------------------
// STFT

inline std::vector<double> hamming_window(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  // periodic form, matching the usual spectral-analysis convention
  for (int i = 0; i < n; ++i) w[static_cast<std::size_t>(i)] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / n);
  return w;
}

namespace detail {

class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    std::lock_guard<std::mutex> lock(planner_mutex());
    in_ = fftw_alloc_real(static_cast<std::size_t>(n));
    out_ = fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1));
    plan_ = fftw_plan_dft_r2c_1d(n, in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(plan_);
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* input() { return in_; }
  /// Magnitudes of bins 0..n/2 written to `mag`.
  void magnitude(std::span<double> mag) {
    fftw_execute(plan_);
    for (int k = 0; k <= n_ / 2; ++k) mag[static_cast<std::size_t>(k)] = std::hypot(out_[k][0], out_[k][1]);
  }

 private:
  static std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
  }
  int n_;
  double* in_ = nullptr;
  fftw_complex* out_ = nullptr;
  fftw_plan plan_ = nullptr;
};

/// Reflect an out-of-range index back into [0, n), bouncing as often as needed.
inline std::size_t reflect_index(long i, long n) {
  if (n == 1) return 0;
  const long period = 2 * (n - 1);
  long m = i % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m < n ? m : period - m);
}

}  // namespace detail

/// Magnitude STFT, (window_len/2 + 1) x T with T = floor(len / hop).
/// Frame t is centred on sample t * hop; the signal is reflect-padded.
inline Matrix stft_magnitude(std::span<const double> audio, const SpectrogramConfig& cfg) {
  cfg.validate();
  const auto hop = static_cast<std::size_t>(cfg.hop);
  if (audio.size() < hop) throw ValidationError("audio shorter than one hop");
  const std::size_t frames = audio.size() / hop;
  const int n = cfg.window_len;
  const auto window = hamming_window(n);
  Matrix out(static_cast<std::size_t>(cfg.n_fft_bins()), frames);
  detail::RealFft fft(n);
  std::vector<double> mag(static_cast<std::size_t>(cfg.n_fft_bins()));
  const long len = static_cast<long>(audio.size());
  for (std::size_t t = 0; t < frames; ++t) {
    const long start = static_cast<long>(t * hop) - n / 2;
    double* buf = fft.input();
    for (int i = 0; i < n; ++i) {
      const long idx = start + i;
      const std::size_t j = (idx >= 0 && idx < len) ? static_cast<std::size_t>(idx) : detail::reflect_index(idx, len);
      buf[i] = audio[j] * window[static_cast<std::size_t>(i)];
    }
    fft.magnitude(mag);
    for (std::size_t k = 0; k < mag.size(); ++k) out(k, t) = mag[k];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linear -> log frequency

/// Triangular interpolation matrix, n_bins x (window_len/2 + 1).
///
/// Row i is a triangle peaking at f(i) with feet at f(i-1) and f(i+1); each
/// half-width is at least one FFT bin spacing so rows narrower than the
/// linear grid reduce to linear interpolation. Rows sum to 1.
inline Matrix log_frequency_matrix(const SpectrogramConfig& cfg) {
  cfg.validate();
  const std::size_t n_lin = static_cast<std::size_t>(cfg.n_fft_bins());
  const double df = static_cast<double>(cfg.sample_rate_hz) / cfg.window_len;
  Matrix m(static_cast<std::size_t>(cfg.n_bins), n_lin);
  for (int i = 0; i < cfg.n_bins; ++i) {
    const double fc = bin_to_hz(i, cfg.f_min_hz, cfg.bins_per_octave);
    const double lo = std::max(fc - bin_to_hz(i - 1, cfg.f_min_hz, cfg.bins_per_octave), df);
    const double hi = std::max(bin_to_hz(i + 1, cfg.f_min_hz, cfg.bins_per_octave) - fc, df);
    double sum = 0.0;
    for (std::size_t k = 0; k < n_lin; ++k) {
      const double f = static_cast<double>(k) * df;
      double w = 0.0;
      if (f <= fc && f > fc - lo) w = 1.0 - (fc - f) / lo;
      else if (f > fc && f < fc + hi) w = 1.0 - (f - fc) / hi;
      m(static_cast<std::size_t>(i), k) = w;
      sum += w;
    }
    if (sum <= 0) throw ValidationError("log-frequency row " + std::to_string(i) + " has no support");
    for (std::size_t k = 0; k < n_lin; ++k) m(static_cast<std::size_t>(i), k) /= sum;
  }
  return m;
}

/// Applies the interpolation matrix and the configured amplitude compression.
inline LogSpectrogram to_log_frequency(const Matrix& linear_mag, const SpectrogramConfig& cfg) {
  const Matrix m = log_frequency_matrix(cfg);
  if (linear_mag.rows != m.cols) throw ValidationError("linear spectrogram has the wrong number of rows");
  LogSpectrogram out;
  out.config = cfg;
  out.values = Matrix(m.rows, linear_mag.cols);
  for (std::size_t i = 0; i < m.rows; ++i) {
    const auto mrow = m.row(i);
    for (std::size_t k = 0; k < m.cols; ++k) {
      const double w = mrow[k];
      if (w == 0.0) continue;
      const auto lrow = linear_mag.row(k);
      for (std::size_t t = 0; t < linear_mag.cols; ++t) {
        if (lrow[t] < 0) throw ValidationError("linear magnitude must be non-negative");
        out.values(i, t) += w * lrow[t];
      }
    }
  }
  if (cfg.amplitude == Amplitude::kLog1p)
    for (double& v : out.values.data) v = std::log1p(v);
  out.frame_times_s.resize(linear_mag.cols);
  for (std::size_t t = 0; t < linear_mag.cols; ++t)
    out.frame_times_s[t] = static_cast<double>(t * static_cast<std::size_t>(cfg.hop)) / cfg.sample_rate_hz;
  return out;
}

inline LogSpectrogram log_spectrogram(std::span<const double> audio, const SpectrogramConfig& cfg = {}) {
  return to_log_frequency(stft_magnitude(audio, cfg), cfg);
}

/// Splits audio into consecutive clip_len windows; the tail (or a short
/// input) is zero-padded to a full clip.
inline std::vector<Audio> split_into_clips(std::span<const double> audio, const SpectrogramConfig& cfg = {}) {
  if (audio.empty()) throw ValidationError("empty audio");
  const std::size_t clip = cfg.clip_samples();
  std::vector<Audio> clips;
  for (std::size_t start = 0; start < audio.size(); start += clip) {
    Audio c(clip, 0.0);
    const std::size_t n = std::min(clip, audio.size() - start);
    std::copy_n(audio.begin() + static_cast<std::ptrdiff_t>(start), n, c.begin());
    clips.push_back(std::move(c));
  }
  return clips;
}

/// Stages spectrograms as a (B, 1, n_bins, T) network input, standardizing
/// each clip when the config asks for it.
template <class T = float>
Tensor4<T> network_input(std::span<const LogSpectrogram> specs) {
  if (specs.empty()) throw ValidationError("no spectrograms to stage");
  const std::size_t rows = specs[0].values.rows;
  const std::size_t cols = specs[0].values.cols;
  Tensor4<T> x(specs.size(), 1, rows, cols);
  for (std::size_t b = 0; b < specs.size(); ++b) {
    const auto& s = specs[b];
    if (s.values.rows != rows || s.values.cols != cols) throw ValidationError("spectrogram batch has ragged shapes");
    double mean = 0.0, scale = 1.0;
    if (s.config.standardize) {
      const double n = static_cast<double>(s.values.data.size());
      mean = std::accumulate(s.values.data.begin(), s.values.data.end(), 0.0) / n;
      double var = 0.0;
      for (double v : s.values.data) var += (v - mean) * (v - mean);
      var /= n;
      scale = var > 1e-20 ? 1.0 / std::sqrt(var) : 0.0;
      if (var <= 1e-20) mean = 0.0;
    }
    T* dst = x.plane(b, 0);
    for (std::size_t i = 0; i < s.values.data.size(); ++i) dst[i] = static_cast<T>((s.values.data[i] - mean) * scale);
  }
  return x;
}

// ---------------------------------------------------------------------------
// Debug dump: "LSPC", u32 rows, u32 cols, u32 reserved, then float32 LE row-major.

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void put_f32(std::ostream& os, float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  put_u32(os, u);
}

}  // namespace detail

inline void write_spectrogram_dump(const Matrix& m, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os.write("LSPC", 4);
  detail::put_u32(os, static_cast<std::uint32_t>(m.rows));
  detail::put_u32(os, static_cast<std::uint32_t>(m.cols));
  detail::put_u32(os, 0);
  for (double v : m.data) detail::put_f32(os, static_cast<float>(v));
  if (!os) throw IoError("write failed: " + path);
}

inline Matrix read_spectrogram_dump(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (bytes.size() < 16 || std::memcmp(bytes.data(), "LSPC", 4) != 0) throw IoError(path + ": not a spectrogram dump");
  const std::uint32_t rows = detail::get_u32(bytes.data() + 4);
  const std::uint32_t cols = detail::get_u32(bytes.data() + 8);
  const std::size_t n = static_cast<std::size_t>(rows) * cols;
  if (bytes.size() != 16 + 4 * n) throw IoError(path + ": truncated spectrogram dump");
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t u = detail::get_u32(bytes.data() + 16 + 4 * i);
    float f;
    std::memcpy(&f, &u, 4);
    m.data[i] = f;
  }
  return m;
}

}  // namespace harmof0
