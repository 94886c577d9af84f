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

#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <set>

#include "harmof0/training.hpp"
#include "harmof0/weights_io.hpp"

using namespace harmof0;
using Catch::Approx;

namespace {

std::vector<double> column(const TargetMap& t, std::size_t frame) {
  std::vector<double> c(t.n_bins);
  for (std::size_t i = 0; i < t.n_bins; ++i) c[i] = t.at(i, frame);
  return c;
}

// Amplitude of the component at `hz` by correlation over whole cycles.
double amplitude_at(const Audio& a, double hz, double sr = 16000) {
  std::complex<double> acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * std::polar(1.0, -2 * std::numbers::pi * hz * i / sr);
  return 2.0 * std::abs(acc) / static_cast<double>(a.size());
}

double power(const Audio& a) {
  double p = 0;
  for (double v : a) p += v * v;
  return p / static_cast<double>(a.size());
}

std::string tmp(const std::string& n) {
  return (std::filesystem::temp_directory_path() / ("harmof0_train_" + n)).string();
}

std::vector<AnnotatedClip> tiny_set(std::size_t n, std::uint64_t seed) {
  SyntheticSetOptions o;
  o.count = n;
  o.seed = seed;
  return make_synthetic_set(o);
}

}  // namespace

TEST_CASE("weighted bce hand values") {
  std::vector<double> y(352, 0.0), p(352, 0.5);
  y[100] = 1.0;
  CHECK(weighted_bce(y, p, 20.0) == Approx(371.0 * std::log(2.0)));
  CHECK(weighted_bce(y, p, 20.0) == Approx(257.16).margin(0.01));
  // perfect prediction is clamped, leaving 352 * -log(1 - 1e-7)
  const double perfect = weighted_bce(y, y, 20.0);
  CHECK(perfect == Approx(-351.0 * std::log1p(-1e-7) - 20.0 * std::log1p(-1e-7)).epsilon(1e-6));
  CHECK(perfect < 1e-4);
}

TEST_CASE("unit weight reduces to plain binary cross-entropy") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.001, 0.999);
  for (int k = 0; k < 50; ++k) {
    std::vector<double> y(352), p(352);
    for (auto& v : y) v = (rng() % 5 == 0) ? 1.0 : 0.0;
    for (auto& v : p) v = u(rng);
    double ref = 0.0;
    for (std::size_t i = 0; i < 352; ++i) ref += -std::log(y[i] > 0.5 ? p[i] : 1.0 - p[i]);
    REQUIRE(weighted_bce(y, p, 1.0) == Approx(ref).epsilon(1e-12).margin(1e-10));
  }
}

TEST_CASE("batch loss is the mean of frame losses") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<float> u(0.01f, 0.99f);
  Tensor4<float> act(2, 1, 30, 4);
  for (auto& v : act.data()) v = u(rng);
  std::vector<TargetMap> t(2);
  for (auto& m : t) {
    m.n_bins = 30;
    m.bins = {3, -1, 29, 0};
  }
  double sum = 0.0;
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t f = 0; f < 4; ++f) {
      std::vector<double> p(30);
      for (std::size_t i = 0; i < 30; ++i) p[i] = act(b, 0, i, f);
      sum += weighted_bce(column(t[b], f), p, 20.0);
    }
  CHECK(weighted_bce_loss(act, std::span<const TargetMap>(t), 20.0) == Approx(sum / 8));
}

TEST_CASE("targets from f0") {
  const std::vector<double> f0{27.5, 110.0, 0.0, bin_to_hz(351)};
  const auto t = f0_to_target(f0);
  CHECK(t.bins == std::vector<int>{0, 96, -1, 351});
  const auto dense = t.one_hot();
  for (std::size_t c = 0; c < 4; ++c) {
    double s = 0;
    for (std::size_t r = 0; r < 352; ++r) s += dense(r, c);
    CHECK(s == (c == 2 ? 0.0 : 1.0));
  }
  std::vector<double> grid(352);
  for (int i = 0; i < 352; ++i) grid[static_cast<std::size_t>(i)] = bin_to_hz(i);
  const auto all = f0_to_target(grid);
  for (int i = 0; i < 352; ++i) REQUIRE(all.bins[static_cast<std::size_t>(i)] == i);
  CHECK_THROWS_WITH(f0_to_target(std::vector<double>{100, 100, 9000}), Catch::Matchers::ContainsSubstring("frame 2"));
  CHECK_THROWS_AS(f0_to_target(std::vector<double>{-5}), ValidationError);
}

TEST_CASE("harmonic synthesis") {
  const auto a = synth_harmonic_clip(220, 8, 0.8, 3);
  CHECK(a.audio.size() == 32000);
  CHECK(a.f0_hz.size() == 100);
  CHECK(std::sqrt(power(a.audio)) == Approx(0.1));
  CHECK(amplitude_at(a.audio, 440) / amplitude_at(a.audio, 220) == Approx(0.8).epsilon(1e-6));
  CHECK(amplitude_at(a.audio, 660) / amplitude_at(a.audio, 440) == Approx(0.8).epsilon(1e-6));
  CHECK(synth_harmonic_clip(220, 8, 0.8, 3).audio == a.audio);
  CHECK(synth_harmonic_clip(220, 8, 0.8, 4).audio != a.audio);
  for (double f : a.f0_hz) CHECK(f == 220.0);

  const auto pure = synth_harmonic_clip(330, 1, 0.8, 1);
  const auto s = log_spectrogram(pure.audio);
  std::size_t best = 0;
  for (std::size_t r = 0; r < 352; ++r)
    if (s.values(r, 50) > s.values(best, 50)) best = r;
  CHECK(std::abs(static_cast<double>(best) - hz_to_bin(330)) <= 1.0);

  // partials at or above Nyquist are dropped
  const auto high = synth_harmonic_clip(3000, 8, 0.8, 1);
  CHECK(amplitude_at(high.audio, 6000) / amplitude_at(high.audio, 3000) == Approx(0.8).epsilon(1e-6));
  CHECK(amplitude_at(high.audio, 3000) > 0.05);
  CHECK_THROWS_AS(synth_harmonic_clip(220, 0, 0.8, 1), ValidationError);
}

TEST_CASE("vibrato modulates the reference") {
  SynthOptions o;
  o.vibrato_cents = 50;
  const auto a = synth_harmonic_clip(220, 4, 0.8, 1, o);
  double lo = 1e9, hi = 0;
  for (double f : a.f0_hz) {
    lo = std::min(lo, f);
    hi = std::max(hi, f);
  }
  CHECK(hi > 220.0);
  CHECK(lo < 220.0);
  CHECK(1200 * std::log2(hi / 220.0) <= 50.0 + 1e-9);
}

TEST_CASE("synthetic sets are reproducible and in range") {
  const auto a = tiny_set(20, 5), b = tiny_set(20, 5);
  for (std::size_t i = 0; i < 20; ++i) {
    CHECK(a[i].audio == b[i].audio);
    CHECK(a[i].f0_hz[0] >= 55.0);
    CHECK(a[i].f0_hz[0] <= 880.0);
  }
}

TEST_CASE("snr mixing") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n01;
  std::uniform_real_distribution<double> scale(0.01, 10);
  for (int k = 0; k < 20; ++k) {
    Audio clean(4000), noise(4000);
    const double cs = scale(rng), ns = scale(rng);
    for (auto& v : clean) v = cs * n01(rng);
    for (auto& v : noise) v = ns * n01(rng);
    for (double snr : {0.0, 10.0, 20.0, -5.0}) {
      const auto mix = mix_at_snr(clean, noise, snr);
      Audio resid(mix.size());
      for (std::size_t i = 0; i < mix.size(); ++i) resid[i] = mix[i] - clean[i];
      CHECK(std::abs(10 * std::log10(power(clean) / power(resid)) - snr) < 0.01);
      // both inputs scaled by the same factor: same SNR, scaled output
      Audio c2 = clean, n2 = noise;
      for (auto& v : c2) v *= 3.0;
      for (auto& v : n2) v *= 3.0;
      const auto mix2 = mix_at_snr(c2, n2, snr);
      for (std::size_t i = 0; i < mix.size(); i += 101) REQUIRE(mix2[i] == Approx(3.0 * mix[i]));
    }
    const auto zero_db = mix_at_snr(clean, noise, 0.0);
    Audio r(zero_db.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = zero_db[i] - clean[i];
    CHECK(power(r) == Approx(power(clean)).epsilon(1e-9));
    const auto near_clean = mix_at_snr(clean, noise, 1e9);
    for (std::size_t i = 0; i < clean.size(); i += 37) CHECK(near_clean[i] == Approx(clean[i]).margin(1e-12));
  }
  CHECK_THROWS_AS(mix_at_snr(Audio(10, 0.0), Audio(10, 1.0), 0), ValidationError);
  CHECK_THROWS_AS(mix_at_snr(Audio(10, 1.0), Audio(10, 0.0), 0), ValidationError);
  CHECK_THROWS_AS(mix_at_snr(Audio(10, 1.0), Audio(11, 1.0), 0), ValidationError);
}

TEST_CASE("adam closed-form steps") {
  Param<double> p(1, 0.5);
  std::vector<Param<double>*> ps{&p};
  AdamState st;
  AdamConfig c;
  p.grad[0] = 0.0;
  adam_step(std::span<Param<double>* const>(ps), st, c);
  CHECK(p.value[0] == 0.5);
  AdamState st2;
  p.grad[0] = 1.0;
  adam_step(std::span<Param<double>* const>(ps), st2, c);
  CHECK(p.value[0] == Approx(0.5 - c.lr).epsilon(1e-9));
}

TEST_CASE("adam matches a reference implementation") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n01;
  Param<double> p(5);
  for (auto& v : p.value) v = n01(rng);
  std::vector<double> x = p.value, m(5, 0), v(5, 0);
  std::vector<Param<double>*> ps{&p};
  AdamState st;
  const AdamConfig c{0.01, 0.9, 0.999, 1e-8};
  for (int t = 1; t <= 20; ++t) {
    for (auto& g : p.grad) g = n01(rng);
    for (std::size_t i = 0; i < 5; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * p.grad[i];
      v[i] = 0.999 * v[i] + 0.001 * p.grad[i] * p.grad[i];
      const double mh = m[i] / (1 - std::pow(0.9, t)), vh = v[i] / (1 - std::pow(0.999, t));
      x[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    }
    adam_step(std::span<Param<double>* const>(ps), st, c);
  }
  for (std::size_t i = 0; i < 5; ++i) CHECK(p.value[i] == Approx(x[i]).epsilon(1e-12));
}

TEST_CASE("adam minimizes a quadratic") {
  Param<double> p(1, 1.0);
  std::vector<Param<double>*> ps{&p};
  AdamState st;
  AdamConfig c;
  c.lr = 1e-2;
  int steps = 0;
  for (; steps < 500 && std::abs(p.value[0]) >= 1e-3; ++steps) {
    p.grad[0] = p.value[0];  // d/dx of x^2 / 2
    adam_step(std::span<Param<double>* const>(ps), st, c);
  }
  CHECK(std::abs(p.value[0]) < 1e-3);
  CHECK(steps <= 500);
}

TEST_CASE("splits partition the data") {
  const auto h = holdout_split(300, 0.2, 1);
  CHECK(h.train.size() == 240);
  CHECK(h.validation.size() == 60);
  std::set<std::size_t> all(h.train.begin(), h.train.end());
  all.insert(h.validation.begin(), h.validation.end());
  CHECK(all.size() == 300);
  for (int fold = 0; fold < 5; ++fold) {
    const auto s = kfold_split(100, 5, fold, 3);
    CHECK(s.train.size() == 60);
    CHECK(s.validation.size() == 20);
    CHECK(s.test.size() == 20);
    std::set<std::size_t> u(s.train.begin(), s.train.end());
    u.insert(s.validation.begin(), s.validation.end());
    u.insert(s.test.begin(), s.test.end());
    CHECK(u.size() == 100);
  }
  // test folds tile the data exactly once
  std::multiset<std::size_t> tests;
  for (int fold = 0; fold < 5; ++fold)
    for (auto i : kfold_split(100, 5, fold, 3).test) tests.insert(i);
  CHECK(tests.size() == 100);
  CHECK(std::set<std::size_t>(tests.begin(), tests.end()).size() == 100);
}

TEST_CASE("training config from json") {
  TrainConfig c;
  c.update_from_json(nlohmann::json{{"lr", 0.01}, {"epochs", 3}, {"batch_size", 4}});
  CHECK(c.lr == 0.01);
  CHECK(c.epochs == 3);
  CHECK(c.batch_size == 4);
  CHECK_THROWS_AS(c.update_from_json(nlohmann::json{{"momentum", 0.5}}), ValidationError);
  CHECK_THROWS_AS(c.update_from_json(nlohmann::json{{"lr", "fast"}}), ValidationError);
  TrainConfig bad;
  bad.pos_weight = 0.5;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("zero learning rate leaves parameters untouched") {
  const auto clips = tiny_set(6, 2);
  auto model = build_model<float>(ModelConfig::reduced(), 3);
  TrainConfig cfg;
  cfg.lr = 0.0;
  cfg.epochs = 1;
  cfg.batch_size = 3;
  std::span<const AnnotatedClip> all(clips);
  train(model, all.subspan(0, 4), all.subspan(4), cfg);
  auto ref = build_model<float>(ModelConfig::reduced(), 3);
  auto a = model.parameters(), b = ref.parameters();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].param->value == b[i].param->value);
}

TEST_CASE("short training run is finite and reproducible") {
  const auto clips = tiny_set(10, 4);
  std::span<const AnnotatedClip> all(clips);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.seed = 9;
  auto run = [&]() {
    auto m = build_model<float>(ModelConfig::reduced(), 9);
    std::vector<double> batch_losses;
    TrainCallbacks cb;
    cb.on_batch = [&](int, std::size_t, double l) { batch_losses.push_back(l); };
    const auto r = train(m, all.subspan(0, 8), all.subspan(8), cfg, cb);
    return std::make_tuple(r, batch_losses, serialize_weights(m));
  };
  const auto [r1, l1, w1] = run();
  const auto [r2, l2, w2] = run();
  REQUIRE(r1.history.size() == 2);
  for (const auto& e : r1.history) {
    CHECK(std::isfinite(e.mean_loss));
    CHECK(e.val_rpa >= 0.0);
    CHECK(e.val_rca >= e.val_rpa);
  }
  CHECK(l1.size() == 4);  // 2 epochs x 2 batches
  CHECK(l1 == l2);
  CHECK(w1 == w2);
  const auto j = r1.history[0].to_json();
  for (const char* k : {"epoch", "mean_loss", "val_rpa", "val_rca", "wall_ms"}) CHECK(j.contains(k));
}

TEST_CASE("non-finite loss aborts with a diagnostic") {
  const auto clips = tiny_set(4, 1);
  auto m = build_model<float>(ModelConfig::reduced(), 1);
  std::get<Conv2d<float>>(m.layers()[5].layer).weight().value[0] = std::numeric_limits<float>::quiet_NaN();
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 2;
  try {
    train(m, std::span<const AnnotatedClip>(clips), std::span<const AnnotatedClip>{}, cfg);
    FAIL("expected a training error");
  } catch (const TrainingError& e) {
    CHECK(e.epoch() == 1);
    CHECK(e.batch() == 0);
    CHECK(e.layer() == "block2.conv");
  }
  CHECK_THROWS_AS(train(m, std::span<const AnnotatedClip>{}, std::span<const AnnotatedClip>{}, cfg), ValidationError);
}

TEST_CASE("manifest ingestion aligns labels to frames") {
  const auto wav = tmp("voice.wav"), csv = tmp("voice.csv"), manifest = tmp("manifest.json");
  // 3 s at 8 kHz: resampled, split into two clips, the second zero padded
  Audio a(24000);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = 0.3 * std::sin(2 * std::numbers::pi * 200 * i / 8000.0);
  write_wav(wav, a, 8000, WavFormat::kFloat32);
  {
    std::ofstream os(csv);
    os << "time_sec,f0_hz\n";
    for (int k = 0; k < 300; ++k) os << k * 0.01 << "," << (k < 150 ? 200.0 : 0.0) << "\n";
  }
  {
    std::ofstream os(manifest);
    os << nlohmann::json::array({{{"audio_path", std::filesystem::path(wav).filename().string()},
                                  {"label_path", std::filesystem::path(csv).filename().string()},
                                  {"channel", "mean"}}})
              .dump();
  }
  const auto entries = load_manifest(manifest);
  REQUIRE(entries.size() == 1);
  const auto clips = load_dataset(entries);
  REQUIRE(clips.size() == 2);
  CHECK(clips[0].audio.size() == 32000);
  CHECK(clips[0].f0_hz[0] == 200.0);
  CHECK(clips[0].f0_hz[74] == 200.0);   // 1.48 s
  CHECK(clips[0].f0_hz[76] == 0.0);     // 1.52 s
  CHECK(clips[1].f0_hz[60] == 0.0);     // 3.2 s, beyond the last label
  CHECK_THROWS_AS(load_manifest(tmp("missing.json")), IoError);
  for (const auto& p : {wav, csv, manifest}) std::filesystem::remove(p);
}
