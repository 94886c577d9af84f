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
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "harmof0/error.hpp"
#include "harmof0/evaluation.hpp"
#include "harmof0/logspec.hpp"
#include "harmof0/model.hpp"
#include "harmof0/wav.hpp"

namespace harmof0 {

// ---------------------------------------------------------------------------
// Targets and loss

inline constexpr double kProbClamp = 1e-7;

/// One-hot frame targets, stored as the hot bin per frame (-1 = unvoiced).
struct TargetMap {
  std::size_t n_bins = 0;
  std::vector<int> bins;

  std::size_t n_frames() const { return bins.size(); }
  double at(std::size_t bin, std::size_t frame) const {
    return bins[frame] == static_cast<int>(bin) ? 1.0 : 0.0;
  }
  /// Dense n_bins x T view.
  Matrix one_hot() const {
    Matrix m(n_bins, bins.size());
    for (std::size_t t = 0; t < bins.size(); ++t)
      if (bins[t] >= 0) m(static_cast<std::size_t>(bins[t]), t) = 1.0;
    return m;
  }
};

inline TargetMap f0_to_target(std::span<const double> f0_hz, const SpectrogramConfig& cfg = {}) {
  TargetMap m;
  m.n_bins = static_cast<std::size_t>(cfg.n_bins);
  m.bins.resize(f0_hz.size(), -1);
  for (std::size_t t = 0; t < f0_hz.size(); ++t) {
    const double f = f0_hz[t];
    if (f == 0.0) continue;
    long b = -1;
    if (std::isfinite(f) && f > 0.0) b = std::lround(hz_to_bin(f, cfg.f_min_hz, cfg.bins_per_octave));
    if (b < 0 || b >= cfg.n_bins)
      throw ValidationError("f0 " + std::to_string(f) + " Hz at frame " + std::to_string(t) +
                            " is outside the pitch grid");
    m.bins[t] = static_cast<int>(b);
  }
  return m;
}

/// Weighted binary cross-entropy of one frame column.
inline double weighted_bce(std::span<const double> y, std::span<const double> y_hat, double pos_weight) {
  if (y.size() != y_hat.size()) throw ValidationError("target and prediction lengths differ");
  double loss = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double p = std::clamp(y_hat[i], kProbClamp, 1.0 - kProbClamp);
    loss -= pos_weight * y[i] * std::log(p) + (1.0 - y[i]) * std::log(1.0 - p);
  }
  return loss;
}

/// Mean weighted BCE over all B*T frames of a (B, 1, F, T) activation map.
/// When `grad` is given it receives dL/d(activation). The derivative is
/// taken at the clamped probability, so saturated outputs still get a
/// (bounded) push back toward the interior.
template <class T>
double weighted_bce_loss(const Tensor4<T>& act, std::span<const TargetMap> targets, double pos_weight,
                         Tensor4<T>* grad = nullptr) {
  const std::size_t B = act.batch(), F = act.freq(), Tn = act.time();
  if (act.channels() != 1) throw ValidationError("loss expects a single-channel activation map");
  if (targets.size() != B) throw ValidationError("one target map per batch item is required");
  for (const auto& tg : targets)
    if (tg.n_frames() != Tn || tg.n_bins != F) throw ValidationError("target map does not match activations");
  if (grad) *grad = Tensor4<T>(act.shape());
  const double inv_frames = 1.0 / static_cast<double>(B * Tn);
  double total = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    const T* a = act.plane(b, 0);
    T* g = grad ? grad->plane(b, 0) : nullptr;
    const auto& bins = targets[b].bins;
    double item = 0.0;
    for (std::size_t f = 0; f < F; ++f) {
      for (std::size_t t = 0; t < Tn; ++t) {
        const double p = std::clamp(static_cast<double>(a[f * Tn + t]), kProbClamp, 1.0 - kProbClamp);
        const bool hot = bins[t] == static_cast<int>(f);
        item -= hot ? pos_weight * std::log(p) : std::log1p(-p);
        if (g) g[f * Tn + t] = static_cast<T>((hot ? -pos_weight / p : 1.0 / (1.0 - p)) * inv_frames);
      }
    }
    total += item;
  }
  return total * inv_frames;
}

// ---------------------------------------------------------------------------
// Synthetic data and mixing

struct AnnotatedClip {
  Audio audio;
  std::vector<double> f0_hz;  // per frame, 0 = unvoiced
};

struct SynthOptions {
  double vibrato_cents = 0.0;  // peak deviation; 0 disables
  double vibrato_rate_hz = 5.5;
  double rms = 0.1;
  SpectrogramConfig spec{};
};

/// Sum of partials k*f0 with amplitudes decay^(k-1) and seeded random
/// phases, RMS-normalized. Partials at or above Nyquist are dropped.
inline AnnotatedClip synth_harmonic_clip(double f0_hz, int n_partials, double partial_decay, std::uint64_t seed,
                                         const SynthOptions& opt = {}) {
  const auto& cfg = opt.spec;
  if (!(f0_hz > 0.0)) throw ValidationError("f0 must be positive");
  if (n_partials < 1) throw ValidationError("need at least one partial");
  const double nyquist = cfg.sample_rate_hz / 2.0;
  const double sr = cfg.sample_rate_hz;
  const double depth = opt.vibrato_cents / 1200.0;
  const double f_peak = f0_hz * std::exp2(std::abs(depth));

  std::mt19937_64 rng(detail::splitmix64(seed));
  std::vector<double> phase(static_cast<std::size_t>(n_partials));
  for (double& p : phase) p = 2.0 * std::numbers::pi * detail::unit_uniform(rng);

  // Instantaneous f0 and its running phase integral.
  auto f_at = [&](double t) { return f0_hz * std::exp2(depth * std::sin(2.0 * std::numbers::pi * opt.vibrato_rate_hz * t)); };
  const std::size_t n = cfg.clip_samples();
  AnnotatedClip clip;
  clip.audio.assign(n, 0.0);
  std::vector<double> theta(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    theta[i] = acc;
    acc += 2.0 * std::numbers::pi * f_at(static_cast<double>(i) / sr) / sr;
  }
  double amp = 1.0;
  for (int k = 1; k <= n_partials; ++k, amp *= partial_decay) {
    if (k * f_peak >= nyquist) break;
    const double ph = phase[static_cast<std::size_t>(k - 1)];
    for (std::size_t i = 0; i < n; ++i) clip.audio[i] += amp * std::sin(k * theta[i] + ph);
  }
  double power = 0.0;
  for (double v : clip.audio) power += v * v;
  const double rms = std::sqrt(power / static_cast<double>(n));
  if (rms > 0.0)
    for (double& v : clip.audio) v *= opt.rms / rms;
  clip.f0_hz.resize(cfg.clip_frames());
  for (std::size_t t = 0; t < clip.f0_hz.size(); ++t)
    clip.f0_hz[t] = f_at(static_cast<double>(t * static_cast<std::size_t>(cfg.hop)) / sr);
  return clip;
}

struct SyntheticSetOptions {
  std::size_t count = 300;
  double f0_min_hz = 55.0;
  double f0_max_hz = 880.0;
  int n_partials = 8;
  double partial_decay = 0.8;
  std::uint64_t seed = 1;
  SynthOptions synth{};
};

/// Clips with f0 drawn uniformly (in Hz) from [f0_min, f0_max].
inline std::vector<AnnotatedClip> make_synthetic_set(const SyntheticSetOptions& o) {
  if (!(o.f0_min_hz > 0.0) || o.f0_max_hz < o.f0_min_hz) throw ValidationError("invalid f0 range");
  std::vector<AnnotatedClip> clips(o.count);
  std::mt19937_64 rng(detail::splitmix64(o.seed ^ 0x5eedULL));
  std::vector<double> f0(o.count);
  for (double& f : f0) f = o.f0_min_hz + (o.f0_max_hz - o.f0_min_hz) * detail::unit_uniform(rng);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(o.count); ++i) {
    const auto u = static_cast<std::size_t>(i);
    clips[u] = synth_harmonic_clip(f0[u], o.n_partials, o.partial_decay, o.seed * 1000003ULL + u, o.synth);
  }
  return clips;
}

inline double signal_power(std::span<const double> x) {
  double p = 0.0;
  for (double v : x) p += v * v;
  return x.empty() ? 0.0 : p / static_cast<double>(x.size());
}

/// clean + noise scaled to the requested SNR (dB).
inline Audio mix_at_snr(std::span<const double> clean, std::span<const double> noise, double snr_db) {
  if (clean.size() != noise.size()) throw ValidationError("clean and noise lengths differ");
  const double pc = signal_power(clean), pn = signal_power(noise);
  if (!(pc > 0.0) || !(pn > 0.0)) throw ValidationError("mix_at_snr needs non-zero signal and noise power");
  const double gain = std::sqrt(pc / (pn * std::pow(10.0, snr_db / 10.0)));
  Audio out(clean.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = clean[i] + gain * noise[i];
  return out;
}

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m, v;
};

/// One bias-corrected Adam update over every parameter in `params`.
template <class T>
void adam_step(std::span<Param<T>* const> params, AdamState& st, const AdamConfig& c) {
  if (st.m.empty()) {
    for (auto* p : params) {
      st.m.emplace_back(p->size(), 0.0);
      st.v.emplace_back(p->size(), 0.0);
    }
  }
  if (st.m.size() != params.size()) throw ValidationError("optimizer state does not match parameters");
  ++st.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(st.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = *params[k];
    auto& m = st.m[k];
    auto& v = st.v[k];
    if (p.grad.size() != p.value.size() || m.size() != p.value.size())
      throw ValidationError("gradient shape does not match parameter");
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = static_cast<double>(p.grad[i]);
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
      const double step = c.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + c.eps);
      p.value[i] = static_cast<T>(static_cast<double>(p.value[i]) - step);
    }
  }
}

// ---------------------------------------------------------------------------
// Training loop

struct TrainConfig {
  double lr = 1e-3;
  int epochs = 50;
  std::size_t batch_size = 24;
  double pos_weight = 20.0;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double voicing_threshold = 0.5;
  double threshold_cents = kDefaultThresholdCents;
  SpectrogramConfig spec{};

  void validate() const {
    if (!(lr >= 0.0)) throw ValidationError("learning rate must be non-negative");
    if (epochs < 1) throw ValidationError("epochs must be positive");
    if (batch_size < 1) throw ValidationError("batch size must be positive");
    if (!(pos_weight >= 1.0)) throw ValidationError("positive weight must be at least 1");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1 && eps > 0)) throw ValidationError("invalid Adam settings");
    spec.validate();
  }
  AdamConfig adam() const { return {lr, beta1, beta2, eps}; }

  /// Overrides fields present in a JSON object; unknown keys are rejected.
  void update_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ValidationError("training config must be a JSON object");
    for (const auto& [key, val] : j.items()) {
      try {
        if (key == "lr") lr = val.get<double>();
        else if (key == "epochs") epochs = val.get<int>();
        else if (key == "batch_size") batch_size = val.get<std::size_t>();
        else if (key == "pos_weight") pos_weight = val.get<double>();
        else if (key == "seed") seed = val.get<std::uint64_t>();
        else if (key == "beta1") beta1 = val.get<double>();
        else if (key == "beta2") beta2 = val.get<double>();
        else if (key == "eps") eps = val.get<double>();
        else if (key == "voicing_threshold") voicing_threshold = val.get<double>();
        else if (key == "threshold_cents") threshold_cents = val.get<double>();
        else throw ValidationError("unknown training config key '" + key + "'");
      } catch (const nlohmann::json::exception&) {
        throw ValidationError("training config key '" + key + "' has the wrong type");
      }
    }
  }
};

struct EpochRecord {
  int epoch = 0;
  double mean_loss = 0.0;
  double val_rpa = std::nan("");
  double val_rca = std::nan("");
  double wall_ms = 0.0;

  nlohmann::json to_json() const {
    nlohmann::json j{{"epoch", epoch}, {"mean_loss", mean_loss}, {"wall_ms", wall_ms}};
    j["val_rpa"] = std::isnan(val_rpa) ? nlohmann::json(nullptr) : nlohmann::json(val_rpa);
    j["val_rca"] = std::isnan(val_rca) ? nlohmann::json(nullptr) : nlohmann::json(val_rca);
    return j;
  }
};

struct TrainCallbacks {
  std::function<void(const EpochRecord&)> on_epoch;
  std::function<void(int epoch, std::size_t batch, double loss)> on_batch;
};

struct TrainResult {
  std::vector<EpochRecord> history;
};

/// Spectrogram and target of one clip, ready for batching.
struct PreparedClip {
  LogSpectrogram spec;
  TargetMap target;
  std::vector<double> f0_hz;
};

inline std::vector<PreparedClip> prepare_clips(std::span<const AnnotatedClip> clips, const SpectrogramConfig& cfg) {
  std::vector<PreparedClip> out(clips.size());
  const std::size_t frames = cfg.clip_frames();
  for (const auto& c : clips)
    if (c.audio.size() != cfg.clip_samples() || c.f0_hz.size() != frames)
      throw ValidationError("clip does not have the configured length");
  // Extraction is per clip and independent, so the order of work is free.
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(clips.size()); ++i) {
    const auto u = static_cast<std::size_t>(i);
    out[u].spec = log_spectrogram(clips[u].audio, cfg);
  }
  for (std::size_t i = 0; i < clips.size(); ++i) {
    out[i].target = f0_to_target(clips[i].f0_hz, cfg);
    out[i].f0_hz = clips[i].f0_hz;
  }
  return out;
}

namespace detail {

/// Fisher-Yates with an explicit generator, identical on every platform.
inline void shuffle_indices(std::vector<std::size_t>& idx, std::mt19937_64& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
}

inline Tensor4<float> stage_batch(std::span<const PreparedClip> all, std::span<const std::size_t> idx) {
  std::vector<LogSpectrogram> specs;
  specs.reserve(idx.size());
  for (auto i : idx) specs.push_back(all[i].spec);
  return network_input<float>(specs);
}

}  // namespace detail

/// Decoded tracks for prepared clips, evaluated in batches.
inline std::vector<PitchTrack> predict(const HarmoF0Model& model, std::span<const PreparedClip> clips,
                                       double voicing_threshold, std::size_t batch = 16) {
  std::vector<PitchTrack> out;
  for (std::size_t s = 0; s < clips.size(); s += batch) {
    std::vector<std::size_t> idx(std::min(batch, clips.size() - s));
    std::iota(idx.begin(), idx.end(), s);
    const auto x = detail::stage_batch(clips, idx);
    auto tracks = decode(model.infer(x), voicing_threshold, clips[s].spec.config);
    for (auto& t : tracks) out.push_back(std::move(t));
  }
  return out;
}

/// Pooled RPA/RCA of a model over prepared clips.
inline MetricReport evaluate_model(const HarmoF0Model& model, std::span<const PreparedClip> clips,
                                   double voicing_threshold = 0.5, double threshold_cents = kDefaultThresholdCents) {
  if (clips.empty()) throw ValidationError("no clips to evaluate");
  const auto tracks = predict(model, clips, voicing_threshold);
  PitchTrack est, ref;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    est.append(tracks[i]);
    ref.append(PitchTrack::from_frequencies(tracks[i].times_s, clips[i].f0_hz));
  }
  return evaluate(est, ref, threshold_cents);
}

/// Mini-batch training. Validation metrics are recorded when `val` is
/// non-empty and contains at least one voiced frame.
inline TrainResult train(HarmoF0Model& model, std::span<const PreparedClip> train_set,
                         std::span<const PreparedClip> val_set, const TrainConfig& cfg,
                         const TrainCallbacks& callbacks = {}) {
  cfg.validate();
  if (train_set.empty()) throw ValidationError("training set is empty");
  const bool has_val = std::any_of(val_set.begin(), val_set.end(), [](const PreparedClip& c) {
    return std::any_of(c.f0_hz.begin(), c.f0_hz.end(), [](double f) { return f > 0; });
  });

  auto refs = model.parameters();
  std::vector<Param<float>*> params;
  for (auto& r : refs) params.push_back(r.param);
  AdamState adam;
  std::mt19937_64 rng(detail::splitmix64(cfg.seed ^ 0x7a11ULL));
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    detail::shuffle_indices(order, rng);
    double loss_sum = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t s = 0; s < order.size(); s += cfg.batch_size) {
      const std::span<const std::size_t> idx(order.data() + s, std::min(cfg.batch_size, order.size() - s));
      const auto x = detail::stage_batch(train_set, idx);
      std::vector<TargetMap> targets;
      for (auto i : idx) targets.push_back(train_set[i].target);

      model.zero_grad();
      const auto y = model.forward_train(x);
      Tensor4<float> g;
      const double loss = weighted_bce_loss(y, std::span<const TargetMap>(targets), cfg.pos_weight, &g);
      if (!std::isfinite(loss)) {
        std::string layer = model.first_nonfinite_layer();
        if (layer.empty()) layer = "loss";
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                std::to_string(n_batches) + ", first non-finite output in " + layer,
                            epoch, static_cast<int>(n_batches), layer);
      }
      model.backward(g);
      adam_step(std::span<Param<float>* const>(params), adam, cfg.adam());
      if (callbacks.on_batch) callbacks.on_batch(epoch, n_batches, loss);
      loss_sum += loss;
      ++n_batches;
    }
    model.release_activations();

    EpochRecord rec;
    rec.epoch = epoch;
    rec.mean_loss = loss_sum / static_cast<double>(n_batches);
    if (has_val) {
      const auto rep = evaluate_model(model, val_set, cfg.voicing_threshold, cfg.threshold_cents);
      rec.val_rpa = rep.rpa;
      rec.val_rca = rep.rca;
    }
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(rec);
    if (callbacks.on_epoch) callbacks.on_epoch(rec);
  }
  return result;
}

inline TrainResult train(HarmoF0Model& model, std::span<const AnnotatedClip> train_clips,
                         std::span<const AnnotatedClip> val_clips, const TrainConfig& cfg,
                         const TrainCallbacks& callbacks = {}) {
  cfg.validate();
  const auto tr = prepare_clips(train_clips, cfg.spec);
  const auto va = prepare_clips(val_clips, cfg.spec);
  return train(model, std::span<const PreparedClip>(tr), std::span<const PreparedClip>(va), cfg, callbacks);
}

// ---------------------------------------------------------------------------
// Splits

struct SplitIndices {
  std::vector<std::size_t> train, validation, test;
};

/// Seeded permutation; the first (1 - val_fraction) go to training.
inline SplitIndices holdout_split(std::size_t n, double val_fraction, std::uint64_t seed) {
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ValidationError("validation fraction must be in [0, 1)");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(detail::splitmix64(seed));
  detail::shuffle_indices(idx, rng);
  const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n)));
  SplitIndices s;
  s.train.assign(idx.begin(), idx.end() - static_cast<std::ptrdiff_t>(n_val));
  s.validation.assign(idx.end() - static_cast<std::ptrdiff_t>(n_val), idx.end());
  return s;
}

/// K-fold rotation: fold `fold` is the test part, the next fold validation,
/// the remaining k-2 folds training (60/20/20 for k = 5).
inline SplitIndices kfold_split(std::size_t n, int k, int fold, std::uint64_t seed) {
  if (k < 3) throw ValidationError("k-fold split needs k >= 3");
  if (fold < 0 || fold >= k) throw ValidationError("fold index out of range");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(detail::splitmix64(seed));
  detail::shuffle_indices(idx, rng);
  SplitIndices s;
  const int val_fold = (fold + 1) % k;
  for (std::size_t i = 0; i < n; ++i) {
    const int f = static_cast<int>(i * static_cast<std::size_t>(k) / std::max<std::size_t>(n, 1));
    (f == fold ? s.test : f == val_fold ? s.validation : s.train).push_back(idx[i]);
  }
  return s;
}

template <class T>
std::vector<T> gather(std::span<const T> items, std::span<const std::size_t> idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(items[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Dataset ingestion

struct ManifestEntry {
  std::string audio_path;
  std::string label_path;
  Channel channel = Channel::kMean;
};

/// JSON list of {audio_path, label_path, channel}; relative paths resolve
/// against the manifest's directory.
inline std::vector<ManifestEntry> load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open manifest " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": invalid JSON: " + e.what());
  }
  if (!j.is_array()) throw ValidationError(path + ": manifest must be a JSON list");
  const auto base = std::filesystem::path(path).parent_path();
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path fp(p);
    return fp.is_absolute() ? fp.string() : (base / fp).string();
  };
  std::vector<ManifestEntry> out;
  for (const auto& e : j) {
    if (!e.is_object() || !e.contains("audio_path") || !e.contains("label_path"))
      throw ValidationError(path + ": every entry needs audio_path and label_path");
    ManifestEntry m;
    m.audio_path = resolve(e.at("audio_path").get<std::string>());
    m.label_path = resolve(e.at("label_path").get<std::string>());
    if (e.contains("channel")) m.channel = parse_channel(e.at("channel").get<std::string>());
    out.push_back(std::move(m));
  }
  return out;
}

/// Reads `time_sec,f0_hz` label rows (header optional).
inline PitchTrack read_annotation_csv(const std::string& path) { return read_track_csv(path); }

/// Loads one recording as 2 s annotated clips on the configured grid.
inline std::vector<AnnotatedClip> load_annotated_audio(const ManifestEntry& e, const SpectrogramConfig& cfg = {}) {
  const auto wav = read_wav(e.audio_path);
  Audio mono = wav.mono(e.channel);
  if (wav.sample_rate != cfg.sample_rate_hz) mono = resample(mono, wav.sample_rate, cfg.sample_rate_hz);
  const auto labels = read_annotation_csv(e.label_path);
  const auto pieces = split_into_clips(mono, cfg);
  const std::size_t frames = cfg.clip_frames();
  const double hop_s = static_cast<double>(cfg.hop) / cfg.sample_rate_hz;
  std::vector<AnnotatedClip> out;
  for (std::size_t c = 0; c < pieces.size(); ++c) {
    std::vector<double> grid(frames);
    for (std::size_t t = 0; t < frames; ++t) grid[t] = (static_cast<double>(c * frames + t)) * hop_s;
    AnnotatedClip clip;
    clip.audio = pieces[c];
    clip.f0_hz = align_labels(labels.times_s, labels.freqs_hz, grid, hop_s / 2);
    out.push_back(std::move(clip));
  }
  return out;
}

inline std::vector<AnnotatedClip> load_dataset(const std::vector<ManifestEntry>& entries,
                                               const SpectrogramConfig& cfg = {}) {
  std::vector<AnnotatedClip> out;
  for (const auto& e : entries) {
    auto clips = load_annotated_audio(e, cfg);
    for (auto& c : clips) out.push_back(std::move(c));
  }
  return out;
}

}  // namespace harmof0
