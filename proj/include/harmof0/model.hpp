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

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "harmof0/error.hpp"
#include "harmof0/harmonic_dilation.hpp"
#include "harmof0/logspec.hpp"
#include "harmof0/nn.hpp"
#include "harmof0/pitch_track.hpp"
#include "harmof0/tensor.hpp"

namespace harmof0 {

/// Which layers fill the dilated slots of the network.
enum class Variant : std::uint16_t {
  kMrdc = 0,          // block 1 multi-rate, blocks 2-4 symmetric rate 48
  kFrdc = 1,          // block 1 fixed-rate causal, rate 48
  kPlainBlock1 = 2,   // block 1 undilated convolution
  kPlainDilated = 3,  // blocks 2-4 undilated 3x1 convolutions
};

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::kMrdc:
      return "mrdc";
    case Variant::kFrdc:
      return "frdc";
    case Variant::kPlainBlock1:
      return "plain-block1";
    case Variant::kPlainDilated:
      return "plain-dilated";
  }
  return "unknown";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "mrdc") return Variant::kMrdc;
  if (s == "frdc") return Variant::kFrdc;
  if (s == "plain-block1" || s == "plainblock1") return Variant::kPlainBlock1;
  if (s == "plain-dilated" || s == "plaindilated") return Variant::kPlainDilated;
  throw ValidationError("unknown variant '" + s + "' (expected mrdc, frdc, plain-block1 or plain-dilated)");
}

inline Variant variant_from_tag(std::uint16_t tag) {
  if (tag > 3) throw ValidationError("unknown variant tag " + std::to_string(tag));
  return static_cast<Variant>(tag);
}

struct ModelConfig {
  Variant variant = Variant::kMrdc;
  std::array<std::size_t, 4> widths{32, 64, 128, 128};
  std::size_t head_width = 64;
  std::size_t n_bins = 352;
  int bins_per_octave = 48;
  int n_harmonics = 12;
  /// Keep the offset-0 tap in the multi-rate layer (12 taps); false gives 11.
  bool anchor_tap = true;
  int sd_rate = 48;
  int frdc_rate = 48;

  /// The narrow configuration used for desk-scale experiments.
  static ModelConfig reduced(Variant v = Variant::kMrdc) {
    ModelConfig c;
    c.variant = v;
    c.widths = {8, 16, 32, 32};
    c.head_width = 16;
    return c;
  }
};

struct Activation {
  enum class Kind { kRelu, kSigmoid } kind = Kind::kRelu;
};

template <class T>
using Layer = std::variant<Conv2d<T>, DilatedConv<T>, BatchNorm<T>, Activation>;

struct LayerInfo {
  std::string name;
  std::string kind;
  std::string shape;
  std::size_t params = 0;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Uniform double in [0, 1) from the top 53 bits.
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

template <class T>
void he_uniform(std::vector<T>& w, std::size_t fan_in, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (T& v : w) v = static_cast<T>((2.0 * unit_uniform(rng) - 1.0) * bound);
}

template <class... Fs>
struct Overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

}  // namespace detail

/// The fully convolutional pitch network: four blocks of
/// (Conv2d 3x3, ReLU, frequency-dilated conv, ReLU, batch-norm), then a
/// 1x1 -> ReLU -> 1x1 -> sigmoid head. Output has the input's (F, T).
template <class T>
class Model {
 public:
  struct Entry {
    std::string name;
    Layer<T> layer;
  };

  Model() = default;
  Model(ModelConfig config, std::vector<Entry> layers) : config_(config), layers_(std::move(layers)) {
    saved_.resize(layers_.size());
  }

  const ModelConfig& config() const noexcept { return config_; }
  Variant variant() const noexcept { return config_.variant; }
  std::vector<Entry>& layers() noexcept { return layers_; }
  const std::vector<Entry>& layers() const noexcept { return layers_; }

  /// Eval-mode pass. Does not touch any state; safe to share across threads.
  Tensor4<T> infer(const Tensor4<T>& x) const {
    check_input(x);
    Tensor4<T> cur = x;
    for (const auto& e : layers_) {
      cur = std::visit(detail::Overloaded{
                           [&](const Conv2d<T>& l) { return l.forward(cur); },
                           [&](const DilatedConv<T>& l) { return l.forward(cur); },
                           [&](const BatchNorm<T>& l) { return l.forward_eval(cur); },
                           [&](const Activation& a) { return activate(a, std::move(cur)); },
                       },
                       e.layer);
    }
    return cur;
  }

  /// Train-mode pass (batch statistics); keeps what backward() needs.
  Tensor4<T> forward_train(const Tensor4<T>& x) {
    check_input(x);
    Tensor4<T> cur = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      auto& layer = layers_[i].layer;
      if (auto* a = std::get_if<Activation>(&layer)) {
        cur = activate(*a, std::move(cur));
        saved_[i] = Tensor4<T>();
        continue;
      }
      Tensor4<T> out = std::visit(detail::Overloaded{
                                      [&](Conv2d<T>& l) { return l.forward(cur); },
                                      [&](DilatedConv<T>& l) { return l.forward(cur); },
                                      [&](BatchNorm<T>& l) { return l.forward_train(cur); },
                                      [&](Activation&) { return Tensor4<T>(); },
                                  },
                                  layer);
      saved_[i] = std::move(cur);
      cur = std::move(out);
    }
    output_ = cur;
    has_pass_ = true;
    return cur;
  }

  /// Accumulates parameter gradients for dL/d(output) = grad_out. Returns
  /// dL/d(input) when requested.
  Tensor4<T> backward(const Tensor4<T>& grad_out, bool need_grad_input = false) {
    if (!has_pass_) throw ValidationError("backward called without a training forward pass");
    require_shape(grad_out.shape(), output_.shape(), "model backward");
    Tensor4<T> g = grad_out;
    for (std::size_t idx = layers_.size(); idx-- > 0;) {
      auto& layer = layers_[idx].layer;
      const bool need_gx = idx > 0 || need_grad_input;
      if (auto* a = std::get_if<Activation>(&layer)) {
        const Tensor4<T>& out = idx + 1 < layers_.size() ? saved_[idx + 1] : output_;
        g = a->kind == Activation::Kind::kRelu ? relu_backward(out, std::move(g)) : sigmoid_backward(out, std::move(g));
        continue;
      }
      const Tensor4<T>& in = saved_[idx];
      g = std::visit(detail::Overloaded{
                         [&](Conv2d<T>& l) { return l.backward(in, g, need_gx); },
                         [&](DilatedConv<T>& l) { return l.backward(in, g, need_gx); },
                         [&](BatchNorm<T>& l) { return l.backward(in, g); },
                         [&](Activation&) { return Tensor4<T>(); },
                     },
                     layer);
      if (!need_gx) g = Tensor4<T>();
    }
    return g;
  }

  /// Frees the tensors kept by forward_train.
  void release_activations() {
    for (auto& s : saved_) s = Tensor4<T>();
    output_ = Tensor4<T>();
    has_pass_ = false;
  }

  /// Name of the first layer whose output holds a NaN/Inf, or "". Activations
  /// run in place and cannot create non-finite values from finite ones, so a
  /// bad activation output is charged to the layer that fed it.
  std::string first_nonfinite_layer() const {
    std::size_t bad = layers_.size();
    for (std::size_t i = 0; i + 1 < layers_.size() && bad == layers_.size(); ++i)
      if (!saved_[i + 1].empty() && !saved_[i + 1].all_finite()) bad = i;
    if (bad == layers_.size()) {
      if (output_.empty() || output_.all_finite()) return "";
      bad = layers_.size() - 1;
    }
    while (bad > 0 && std::holds_alternative<Activation>(layers_[bad].layer)) --bad;
    return layers_[bad].name;
  }

  struct ParamRef {
    std::string name;
    Param<T>* param;
  };

  /// Trainable parameters in a fixed order.
  std::vector<ParamRef> parameters() {
    std::vector<ParamRef> out;
    for (auto& e : layers_) {
      std::visit(detail::Overloaded{
                     [&](Conv2d<T>& l) {
                       out.push_back({e.name + ".weight", &l.weight()});
                       out.push_back({e.name + ".bias", &l.bias()});
                     },
                     [&](DilatedConv<T>& l) {
                       out.push_back({e.name + ".weight", &l.weight()});
                       out.push_back({e.name + ".bias", &l.bias()});
                     },
                     [&](BatchNorm<T>& l) {
                       out.push_back({e.name + ".gamma", &l.gamma()});
                       out.push_back({e.name + ".beta", &l.beta()});
                     },
                     [&](Activation&) {},
                 },
                 e.layer);
    }
    return out;
  }

  void zero_grad() {
    for (auto& p : parameters()) p.param->zero_grad();
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& info : summary()) n += info.params;
    return n;
  }

  std::vector<LayerInfo> summary() const {
    std::vector<LayerInfo> out;
    for (const auto& e : layers_) {
      std::visit(detail::Overloaded{
                     [&](const Conv2d<T>& l) {
                       const auto& s = l.shape();
                       std::ostringstream os;
                       os << s.c_out << "x" << s.c_in << "x" << s.k_f << "x" << s.k_t;
                       out.push_back({e.name, "Conv2d", os.str(), l.param_count()});
                     },
                     [&](const DilatedConv<T>& l) {
                       const auto& s = l.spec();
                       std::ostringstream os;
                       os << s.c_out << "x" << s.c_in << "x" << s.taps << "x1 offsets[";
                       const auto& o = l.offsets();
                       for (std::size_t j = 0; j < o.size(); ++j) os << (j ? "," : "") << o[j];
                       os << "]";
                       out.push_back({e.name, to_string(s.kind), os.str(), l.param_count()});
                     },
                     [&](const BatchNorm<T>& l) {
                       out.push_back({e.name, "BatchNorm", std::to_string(l.channels()), l.param_count()});
                     },
                     [&](const Activation& a) {
                       out.push_back({e.name, a.kind == Activation::Kind::kRelu ? "ReLU" : "Sigmoid", "-", 0});
                     },
                 },
                 e.layer);
    }
    return out;
  }

  template <class U>
  Model<U> cast() const {
    std::vector<typename Model<U>::Entry> layers;
    for (const auto& e : layers_) {
      Layer<U> l = std::visit(detail::Overloaded{
                                  [](const Conv2d<T>& c) -> Layer<U> { return c.template cast<U>(); },
                                  [](const DilatedConv<T>& c) -> Layer<U> { return c.template cast<U>(); },
                                  [](const BatchNorm<T>& c) -> Layer<U> { return c.template cast<U>(); },
                                  [](const Activation& a) -> Layer<U> { return a; },
                              },
                              e.layer);
      layers.push_back({e.name, std::move(l)});
    }
    return Model<U>(config_, std::move(layers));
  }

 private:
  void check_input(const Tensor4<T>& x) const {
    if (x.channels() != 1) throw ValidationError("model input must have one channel");
    if (x.freq() != config_.n_bins)
      throw ValidationError("model input has " + std::to_string(x.freq()) + " frequency bins, expected " +
                            std::to_string(config_.n_bins));
    if (x.time() == 0 || x.batch() == 0) throw ValidationError("model input is empty");
  }

  static Tensor4<T> activate(const Activation& a, Tensor4<T> x) {
    return a.kind == Activation::Kind::kRelu ? relu_forward(std::move(x)) : sigmoid_forward(std::move(x));
  }

  ModelConfig config_{};
  std::vector<Entry> layers_;
  std::vector<Tensor4<T>> saved_;
  Tensor4<T> output_;
  bool has_pass_ = false;
};

using HarmoF0Model = Model<float>;

/// The dilated layer occupying block `block` (0-based) for a configuration.
inline DilatedConvSpec dilated_slot(const ModelConfig& c, std::size_t block) {
  const std::size_t ch = c.widths[block];
  const int mrdc_taps = c.anchor_tap ? c.n_harmonics : c.n_harmonics - 1;
  if (block == 0) {
    switch (c.variant) {
      case Variant::kFrdc: {
        // as many rate-d taps as MRDC has, capped so every tap reaches inside F
        const int fit = static_cast<int>((c.n_bins - 1) / static_cast<std::size_t>(c.frdc_rate)) + 1;
        return DilatedConvSpec::fixed_rate(ch, ch, c.frdc_rate, std::min(mrdc_taps, fit), true);
      }
      case Variant::kPlainBlock1:
        return DilatedConvSpec::fixed_rate(ch, ch, 1, mrdc_taps, false);
      default:
        return DilatedConvSpec::multi_rate(ch, ch, compute_dilation_schedule(c.bins_per_octave, c.n_harmonics),
                                           c.anchor_tap);
    }
  }
  const int rate = c.variant == Variant::kPlainDilated ? 1 : c.sd_rate;
  return DilatedConvSpec::fixed_rate(ch, ch, rate, 3, false);
}

/// Builds the layer stack (weights zero, batch-norm at identity).
template <class T = float>
Model<T> assemble_model(const ModelConfig& c) {
  using E = typename Model<T>::Entry;
  std::vector<E> layers;
  std::size_t in = 1;
  const char* dil_names[] = {"mrdc", "sd", "sd", "sd"};
  for (std::size_t b = 0; b < 4; ++b) {
    const std::string p = "block" + std::to_string(b + 1) + ".";
    const std::size_t ch = c.widths[b];
    layers.push_back({p + "conv", Conv2d<T>(Conv2dShape{ch, in, 3, 3})});
    layers.push_back({p + "relu1", Activation{}});
    auto spec = dilated_slot(c, b);
    std::string dname = dil_names[b];
    if (b == 0 && c.variant == Variant::kFrdc) dname = "frdc";
    if ((b == 0 && c.variant == Variant::kPlainBlock1) || (b > 0 && c.variant == Variant::kPlainDilated)) dname = "plain";
    layers.push_back({p + dname, DilatedConv<T>(spec)});
    layers.push_back({p + "relu2", Activation{}});
    layers.push_back({p + "bn", BatchNorm<T>(ch)});
    in = ch;
  }
  layers.push_back({"head.conv5", Conv2d<T>(Conv2dShape{c.head_width, in, 1, 1})});
  layers.push_back({"head.relu", Activation{}});
  layers.push_back({"head.conv6", Conv2d<T>(Conv2dShape{1, c.head_width, 1, 1})});
  layers.push_back({"head.sigmoid", Activation{Activation::Kind::kSigmoid}});
  return Model<T>(c, std::move(layers));
}

/// Deterministic He-uniform initialization. Each layer draws from its own
/// stream keyed by (seed, layer position), so variants share every layer
/// they do not substitute.
template <class T = float>
Model<T> build_model(const ModelConfig& c, std::uint64_t seed) {
  Model<T> m = assemble_model<T>(c);
  for (std::size_t i = 0; i < m.layers().size(); ++i) {
    const std::uint64_t layer_seed = detail::splitmix64(seed ^ detail::splitmix64(i + 1));
    std::visit(detail::Overloaded{
                   [&](Conv2d<T>& l) { detail::he_uniform(l.weight().value, l.shape().c_in * l.shape().taps(), layer_seed); },
                   [&](DilatedConv<T>& l) {
                     detail::he_uniform(l.weight().value, l.spec().c_in * static_cast<std::size_t>(l.spec().taps),
                                        layer_seed);
                   },
                   [](BatchNorm<T>&) {},
                   [](Activation&) {},
               },
               m.layers()[i].layer);
  }
  return m;
}

template <class T = float>
Model<T> build_model(Variant v, std::uint64_t seed) {
  ModelConfig c;
  c.variant = v;
  return build_model<T>(c, seed);
}

/// Per-frame argmax decode of a (B, 1, F, T) activation map. Ties go to the
/// lowest bin; frames whose peak is below the threshold are unvoiced.
template <class T>
std::vector<PitchTrack> decode(const Tensor4<T>& activations, double voicing_threshold,
                               const SpectrogramConfig& cfg = {}, double time_offset_s = 0.0) {
  if (activations.channels() != 1) throw ValidationError("decode expects a single-channel activation map");
  std::vector<PitchTrack> tracks(activations.batch());
  const std::size_t F = activations.freq(), Tn = activations.time();
  for (std::size_t b = 0; b < activations.batch(); ++b) {
    auto& tr = tracks[b];
    for (std::size_t t = 0; t < Tn; ++t) {
      std::size_t best = 0;
      T best_v = activations(b, 0, 0, t);
      for (std::size_t f = 1; f < F; ++f) {
        const T v = activations(b, 0, f, t);
        if (v > best_v) {
          best_v = v;
          best = f;
        }
      }
      const double conf = static_cast<double>(best_v);
      const double hz = conf >= voicing_threshold
                            ? bin_to_hz(static_cast<double>(best), cfg.f_min_hz, cfg.bins_per_octave)
                            : 0.0;
      const double time = time_offset_s + static_cast<double>(t * static_cast<std::size_t>(cfg.hop)) / cfg.sample_rate_hz;
      tr.push_back(time, hz, conf, static_cast<int>(best));
    }
  }
  return tracks;
}

}  // namespace harmof0
