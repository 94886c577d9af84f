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


#include <catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "harmof0/logspec.hpp"
#include "harmof0/wav.hpp"

using namespace harmof0;
using Catch::Approx;

namespace {

Audio sine(double hz, std::size_t n, double sr = 16000.0, double amp = 0.5, double phase = 0.0) {
  Audio a(n);
  for (std::size_t i = 0; i < n; ++i) a[i] = amp * std::sin(2 * std::numbers::pi * hz * i / sr + phase);
  return a;
}

std::size_t argmax_row(const Matrix& m, std::size_t col) {
  std::size_t best = 0;
  for (std::size_t r = 1; r < m.rows; ++r)
    if (m(r, col) > m(best, col)) best = r;
  return best;
}

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("harmof0_logspec_" + name)).string();
}

}  // namespace

TEST_CASE("frequency grid anchors") {
  CHECK(bin_to_hz(0) == 27.5);
  CHECK(bin_to_hz(48) == 55.0);
  CHECK(bin_to_hz(96) == 110.0);
  CHECK(std::abs(bin_to_hz(351) - 4371.3) <= 0.1);
  CHECK(SpectrogramConfig{}.f_max_hz() == Approx(bin_to_hz(351)));
}

TEST_CASE("frequency grid round trip") {
  double worst = 0.0;
  for (int i = 0; i < 352; ++i) worst = std::max(worst, std::abs(hz_to_bin(bin_to_hz(i)) - i));
  CHECK(worst < 1e-9);
  CHECK_THROWS_AS(hz_to_bin(0.0), ValidationError);
  CHECK_THROWS_AS(hz_to_bin(-3.0), ValidationError);
}

TEST_CASE("config validation") {
  SpectrogramConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.clip_samples() == 32000);
  CHECK(c.clip_frames() == 100);
  c.hop = 333;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = {};
  c.n_bins = 500;  // top bin above Nyquist
  CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("hamming window matches closed form") {
  const auto w = hamming_window(1024);
  CHECK(w[0] == Approx(0.08));
  CHECK(w[512] == Approx(1.0));
  // periodic window: the cosine sums to zero over a full period
  double s = 0.0;
  for (double v : w) s += v;
  CHECK(s == Approx(0.54 * 1024).epsilon(1e-12));
  for (int i = 1; i < 512; ++i) CHECK(w[static_cast<std::size_t>(i)] == Approx(w[static_cast<std::size_t>(1024 - i)]));
}

TEST_CASE("stft frame count") {
  const SpectrogramConfig cfg;
  CHECK(stft_magnitude(sine(440, 32000), cfg).cols == 100);
  std::mt19937 rng(3);
  for (int k = 0; k < 20; ++k) {
    const std::size_t n = 320 + rng() % 50000;
    CHECK(stft_magnitude(Audio(n, 0.1), cfg).cols == n / 320);
  }
  CHECK_THROWS_AS(stft_magnitude(Audio(319, 0.0), cfg), ValidationError);
}

TEST_CASE("stft agrees with a direct DFT") {
  const SpectrogramConfig cfg;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1, 1);
  Audio a(8000);
  for (double& v : a) v = u(rng);
  const auto m = stft_magnitude(a, cfg);
  const auto w = hamming_window(1024);
  // frame 10 is centred on sample 3200 and lies fully inside the signal
  const std::size_t t = 10;
  const long start = static_cast<long>(t * 320) - 512;
  for (int k : {0, 1, 17, 100, 511, 512}) {
    std::complex<double> acc = 0.0;
    for (int i = 0; i < 1024; ++i)
      acc += a[static_cast<std::size_t>(start + i)] * w[static_cast<std::size_t>(i)] *
             std::polar(1.0, -2 * std::numbers::pi * k * i / 1024.0);
    CHECK(m(static_cast<std::size_t>(k), t) == Approx(std::abs(acc)).epsilon(1e-9).margin(1e-9));
  }
}

TEST_CASE("reflect padding at the edges") {
  CHECK(detail::reflect_index(-1, 10) == 1);
  CHECK(detail::reflect_index(-3, 10) == 3);
  CHECK(detail::reflect_index(10, 10) == 8);
  CHECK(detail::reflect_index(25, 10) == 7);
  CHECK(detail::reflect_index(-40, 10) == 4);
}

TEST_CASE("log-frequency matrix structure") {
  const SpectrogramConfig cfg;
  const auto m = log_frequency_matrix(cfg);
  REQUIRE(m.rows == 352);
  REQUIRE(m.cols == 513);
  const double df = 16000.0 / 1024;
  for (std::size_t r = 0; r < m.rows; ++r) {
    double s = 0.0, centroid = 0.0;
    for (std::size_t k = 0; k < m.cols; ++k) {
      REQUIRE(m(r, k) >= 0.0);
      s += m(r, k);
      centroid += m(r, k) * k * df;
    }
    CHECK(s == Approx(1.0));
    // the row's mass sits within one linear bin of its centre frequency
    CHECK(std::abs(centroid - bin_to_hz(static_cast<double>(r))) < df);
  }
}

TEST_CASE("log spectrogram peaks at the tone bin") {
  const SpectrogramConfig cfg;
  for (double hz : {110.0, 220.0, 440.0, 1000.0, 3000.0}) {
    const auto s = log_spectrogram(sine(hz, 32000), cfg);
    REQUIRE(s.n_frames() == 100);
    const long expect = std::lround(hz_to_bin(hz));
    for (std::size_t t : {5u, 50u, 90u}) CHECK(std::abs(static_cast<long>(argmax_row(s.values, t)) - expect) <= 1);
  }
  // Below ~100 Hz the 15.6 Hz FFT spacing is coarser than the log grid, so
  // the peak can only be placed to within one FFT bin.
  const double df = 16000.0 / 1024.0;
  const auto low = log_spectrogram(sine(55.0, 32000), cfg);
  CHECK(std::abs(bin_to_hz(static_cast<double>(argmax_row(low.values, 50))) - 55.0) <= df);
}

TEST_CASE("octave shift moves the peak by one octave of bins") {
  // Tones near an FFT bin centre, or high enough that the log grid is
  // coarser than the FFT spacing, keep the +-1 row resolution.
  for (double hz : {110.0, 125.0, 220.0, 250.0, 500.0, 1000.0, 1500.0}) {
    const auto a = log_spectrogram(sine(hz, 32000));
    const auto b = log_spectrogram(sine(2 * hz, 32000));
    const long shift = static_cast<long>(argmax_row(b.values, 50)) - static_cast<long>(argmax_row(a.values, 50));
    CHECK(std::abs(shift - 48) <= 1);
  }
  // Off-grid low tones are only placed to within half an FFT bin.
  const double df = 16000.0 / 1024.0;
  for (double hz : {70.0, 150.0, 333.0}) {
    const auto s = log_spectrogram(sine(hz, 32000));
    CHECK(std::abs(bin_to_hz(static_cast<double>(argmax_row(s.values, 50))) - hz) <= df / 2 + 1e-9);
  }
}

TEST_CASE("log spectrogram is finite and non-negative") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n01;
  Audio a(32000);
  for (double& v : a) v = n01(rng);
  const auto s = log_spectrogram(a);
  for (double v : s.values.data) {
    REQUIRE(std::isfinite(v));
    REQUIRE(v >= 0.0);
  }
  CHECK(s.frame_times_s[1] == Approx(0.02));
  const auto silent = log_spectrogram(Audio(32000, 0.0));
  for (double v : silent.values.data) REQUIRE(v == 0.0);
}

TEST_CASE("raw amplitude option skips compression") {
  SpectrogramConfig raw;
  raw.amplitude = Amplitude::kRaw;
  const auto a = sine(440, 32000);
  const auto r = log_spectrogram(a, raw);
  const auto l = log_spectrogram(a);
  for (std::size_t i = 0; i < r.values.data.size(); i += 97) CHECK(l.values.data[i] == Approx(std::log1p(r.values.data[i])));
}

TEST_CASE("network input standardizes each clip") {
  std::vector<LogSpectrogram> specs{log_spectrogram(sine(220, 32000)), log_spectrogram(sine(700, 32000, 16000, 0.01))};
  const auto x = network_input<double>(specs);
  REQUIRE(x.shape() == Shape4{2, 1, 352, 100});
  for (std::size_t b = 0; b < 2; ++b) {
    double m = 0, v = 0;
    const double* p = x.plane(b, 0);
    for (std::size_t i = 0; i < 35200; ++i) m += p[i];
    m /= 35200;
    for (std::size_t i = 0; i < 35200; ++i) v += (p[i] - m) * (p[i] - m);
    CHECK(std::abs(m) < 1e-9);
    CHECK(v / 35200 == Approx(1.0));
  }
  std::vector<LogSpectrogram> silent{log_spectrogram(Audio(32000, 0.0))};
  const auto staged = network_input<float>(silent);
  for (float v : staged.data()) REQUIRE(v == 0.0f);
}

TEST_CASE("clips are split and zero padded") {
  const SpectrogramConfig cfg;
  auto clips = split_into_clips(Audio(70000, 1.0), cfg);
  REQUIRE(clips.size() == 3);
  CHECK(clips[2][5999] == 1.0);
  CHECK(clips[2][6000] == 0.0);
  CHECK(split_into_clips(Audio(100, 1.0), cfg).size() == 1);
  CHECK_THROWS_AS(split_into_clips(Audio{}, cfg), ValidationError);
  for (const auto& c : clips) CHECK(log_spectrogram(c, cfg).n_frames() == 100);
}

TEST_CASE("resampler keeps tones and lengths") {
  const auto a = sine(440, 44100, 44100.0);
  const auto r = resample(a, 44100, 16000);
  CHECK(r.size() == 16000);
  // compare against the ideal tone away from the edges
  double err = 0.0;
  for (std::size_t i = 200; i < 15800; ++i) err = std::max(err, std::abs(r[i] - 0.5 * std::sin(2 * std::numbers::pi * 440 * i / 16000.0)));
  CHECK(err < 5e-3);
  const auto same = resample(a, 44100, 44100);
  CHECK(same == a);
  CHECK_THROWS_AS(resample(Audio{}, 8000, 16000), ValidationError);
  // a tone above the new Nyquist is strongly attenuated
  const auto hi = resample(sine(12000, 48000, 48000.0), 48000, 16000);
  double peak = 0.0;
  for (std::size_t i = 200; i + 200 < hi.size(); ++i) peak = std::max(peak, std::abs(hi[i]));
  CHECK(peak < 0.01);
}

TEST_CASE("wav round trips") {
  const auto a = sine(330, 1600);
  const auto p16 = tmp_path("p16.wav"), f32 = tmp_path("f32.wav");
  write_wav(p16, a, 16000, WavFormat::kPcm16);
  write_wav(f32, a, 16000, WavFormat::kFloat32);
  const auto r16 = read_wav(p16);
  const auto r32 = read_wav(f32);
  CHECK(r16.sample_rate == 16000);
  CHECK(r16.channels == 1);
  REQUIRE(r16.frames() == a.size());
  REQUIRE(r32.frames() == a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(std::abs(r16.data[0][i] - a[i]) <= 1.0 / 32767);
    REQUIRE(r32.data[0][i] == Approx(a[i]).margin(1e-7));
  }
  std::filesystem::remove(p16);
  std::filesystem::remove(f32);
}

TEST_CASE("stereo wav channel selection") {
  // hand-built 16-bit stereo file: left = +0.5, right = -0.25
  const auto path = tmp_path("stereo.wav");
  {
    std::ofstream os(path, std::ios::binary);
    auto u32 = [&](std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); };
    auto u16 = [&](std::uint16_t v) { os.write(reinterpret_cast<const char*>(&v), 2); };
    const std::uint32_t frames = 10, data_bytes = frames * 4;
    os.write("RIFF", 4);
    u32(36 + data_bytes);
    os.write("WAVEfmt ", 8);
    u32(16);
    u16(1);
    u16(2);
    u32(8000);
    u32(8000 * 4);
    u16(4);
    u16(16);
    os.write("data", 4);
    u32(data_bytes);
    for (std::uint32_t i = 0; i < frames; ++i) {
      u16(static_cast<std::uint16_t>(static_cast<std::int16_t>(16384)));
      u16(static_cast<std::uint16_t>(static_cast<std::int16_t>(-8192)));
    }
  }
  const auto w = read_wav(path);
  REQUIRE(w.channels == 2);
  CHECK(w.mono(Channel::kLeft)[3] == Approx(0.5).margin(1e-4));
  CHECK(w.mono(Channel::kRight)[3] == Approx(-0.25).margin(1e-4));
  CHECK(w.mono(Channel::kMean)[3] == Approx(0.125).margin(1e-4));
  CHECK(parse_channel("right") == Channel::kRight);
  CHECK_THROWS_AS(parse_channel("centre"), ValidationError);
  std::filesystem::remove(path);
}

TEST_CASE("malformed wav is an io error") {
  const auto path = tmp_path("bad.wav");
  {
    std::ofstream os(path, std::ios::binary);
    os << "RIFX0000WAVE";
  }
  CHECK_THROWS_AS(read_wav(path), IoError);
  CHECK_THROWS_AS(read_wav(tmp_path("does_not_exist.wav")), IoError);
  std::filesystem::remove(path);
}

TEST_CASE("spectrogram dump round trip") {
  const auto s = log_spectrogram(sine(220, 32000));
  const auto path = tmp_path("dump.bin");
  write_spectrogram_dump(s.values, path);
  const auto m = read_spectrogram_dump(path);
  REQUIRE(m.rows == s.values.rows);
  REQUIRE(m.cols == s.values.cols);
  for (std::size_t i = 0; i < m.data.size(); ++i) REQUIRE(m.data[i] == static_cast<float>(s.values.data[i]));
  std::filesystem::remove(path);
}
