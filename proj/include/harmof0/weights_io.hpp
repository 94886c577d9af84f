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

// Weight file layout (all integers and floats little-endian):
//
//   "HRF0" | u16 version | u16 variant | u32 layer count
//   per parameterized layer:
//     u8 kind | u32 x 4 shape | float32 payload
//   u32 CRC32 of every preceding byte
//
// kind 1 Conv2d        shape (C_out, C_in, K_f, K_t)  payload weights, bias
// kind 2 MRDC          shape (C_out, C_in, taps, Q)   payload weights, bias
// kind 3 MRDC, no tap at offset 0                      (as kind 2)
// kind 4 FRDC          shape (C_out, C_in, taps, rate) payload weights, bias
// kind 5 SD            shape (C_out, C_in, taps, rate) payload weights, bias
// kind 6 BatchNorm     shape (C, 1, 1, 1)             payload gamma, beta, running mean, running var

#include <zlib.h>

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "harmof0/error.hpp"
#include "harmof0/model.hpp"

namespace harmof0 {

inline constexpr std::uint16_t kWeightFormatVersion = 1;

namespace detail {

enum class LayerKind : std::uint8_t {
  kConv2d = 1,
  kMrdc = 2,
  kMrdcNoAnchor = 3,
  kFrdc = 4,
  kSd = 5,
  kBatchNorm = 6,
};

class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v) {
    u8(static_cast<std::uint8_t>(v));
    u8(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    for (int s = 0; s < 32; s += 8) u8(static_cast<std::uint8_t>(v >> s));
  }
  void f32(float f) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    u32(u);
  }
  void f32s(const std::vector<float>& v) {
    for (float f : v) f32(f);
  }
  void raw(const char* s, std::size_t n) { bytes_.insert(bytes_.end(), s, s + n); }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  ByteReader(const std::uint8_t* p, std::size_t n, std::string path) : p_(p), n_(n), path_(std::move(path)) {}

  void need(std::size_t k) const {
    if (pos_ + k > n_) throw IoError(path_ + ": truncated weight file");
  }
  std::uint8_t u8() {
    need(1);
    return p_[pos_++];
  }
  std::uint16_t u16() {
    need(2);
    const std::uint16_t v = static_cast<std::uint16_t>(p_[pos_] | (p_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
    pos_ += 4;
    return v;
  }
  void f32s(std::vector<float>& out) {
    need(4 * out.size());
    for (float& f : out) {
      const std::uint32_t u = u32();
      std::memcpy(&f, &u, 4);
    }
  }
  std::size_t remaining() const { return n_ - pos_; }

 private:
  const std::uint8_t* p_;
  std::size_t n_;
  std::size_t pos_ = 0;
  std::string path_;
};

inline std::uint32_t crc32_of(const std::uint8_t* p, std::size_t n) {
  uLong c = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks
  while (n > 0) {
    const uInt chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    c = crc32(c, p, chunk);
    p += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(c);
}

struct LayerRecord {
  LayerKind kind;
  std::array<std::uint32_t, 4> shape;
};

inline LayerRecord record_of(const Layer<float>& layer) {
  if (const auto* c = std::get_if<Conv2d<float>>(&layer)) {
    const auto& s = c->shape();
    return {LayerKind::kConv2d,
            {static_cast<std::uint32_t>(s.c_out), static_cast<std::uint32_t>(s.c_in), static_cast<std::uint32_t>(s.k_f),
             static_cast<std::uint32_t>(s.k_t)}};
  }
  if (const auto* d = std::get_if<DilatedConv<float>>(&layer)) {
    const auto& s = d->spec();
    LayerKind k = LayerKind::kSd;
    if (s.kind == DilationKind::kMultiRate) k = s.anchor_tap ? LayerKind::kMrdc : LayerKind::kMrdcNoAnchor;
    if (s.kind == DilationKind::kFixedRate) k = LayerKind::kFrdc;
    return {k,
            {static_cast<std::uint32_t>(s.c_out), static_cast<std::uint32_t>(s.c_in), static_cast<std::uint32_t>(s.taps),
             static_cast<std::uint32_t>(s.rate)}};
  }
  const auto& bn = std::get<BatchNorm<float>>(layer);
  return {LayerKind::kBatchNorm, {static_cast<std::uint32_t>(bn.channels()), 1, 1, 1}};
}

}  // namespace detail

/// Serializes a model to bytes in the weight-file format.
inline std::vector<std::uint8_t> serialize_weights(const HarmoF0Model& model) {
  detail::ByteWriter w;
  w.raw("HRF0", 4);
  w.u16(kWeightFormatVersion);
  w.u16(static_cast<std::uint16_t>(model.variant()));
  std::uint32_t count = 0;
  for (const auto& e : model.layers())
    if (!std::holds_alternative<Activation>(e.layer)) ++count;
  w.u32(count);
  for (const auto& e : model.layers()) {
    if (std::holds_alternative<Activation>(e.layer)) continue;
    const auto rec = detail::record_of(e.layer);
    w.u8(static_cast<std::uint8_t>(rec.kind));
    for (auto v : rec.shape) w.u32(v);
    if (const auto* c = std::get_if<Conv2d<float>>(&e.layer)) {
      w.f32s(c->weight().value);
      w.f32s(c->bias().value);
    } else if (const auto* d = std::get_if<DilatedConv<float>>(&e.layer)) {
      w.f32s(d->weight().value);
      w.f32s(d->bias().value);
    } else {
      const auto& bn = std::get<BatchNorm<float>>(e.layer);
      w.f32s(bn.gamma().value);
      w.f32s(bn.beta().value);
      w.f32s(bn.running_mean());
      w.f32s(bn.running_var());
    }
  }
  const std::uint32_t crc = detail::crc32_of(w.bytes().data(), w.bytes().size());
  w.u32(crc);
  return std::move(w.bytes());
}

inline void save_weights(const HarmoF0Model& model, const std::string& path) {
  const auto bytes = serialize_weights(model);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("write failed: " + path);
}

/// Parses a weight file image. The model is only returned once every
/// record has been validated against the architecture it describes.
inline HarmoF0Model deserialize_weights(const std::vector<std::uint8_t>& bytes, const std::string& origin = "<memory>") {
  using detail::LayerKind;
  if (bytes.size() < 16) throw IoError(origin + ": truncated weight file");
  if (std::memcmp(bytes.data(), "HRF0", 4) != 0) throw IoError(origin + ": bad magic, not a weight file");
  const std::uint32_t stored_crc = static_cast<std::uint32_t>(bytes[bytes.size() - 4]) |
                                   (static_cast<std::uint32_t>(bytes[bytes.size() - 3]) << 8) |
                                   (static_cast<std::uint32_t>(bytes[bytes.size() - 2]) << 16) |
                                   (static_cast<std::uint32_t>(bytes[bytes.size() - 1]) << 24);
  detail::ByteReader r(bytes.data() + 4, bytes.size() - 8, origin);
  const std::uint16_t version = r.u16();
  if (version != kWeightFormatVersion)
    throw IoError(origin + ": unsupported format version " + std::to_string(version));
  const Variant variant = variant_from_tag(r.u16());
  const std::uint32_t count = r.u32();
  if (count != 14) throw IoError(origin + ": expected 14 layers, file has " + std::to_string(count));

  struct Rec {
    detail::LayerRecord rec;
    std::vector<float> a, b, c, d;
  };
  std::vector<Rec> recs;
  for (std::uint32_t i = 0; i < count; ++i) {
    Rec rec;
    const auto kind = r.u8();
    if (kind < 1 || kind > 6) throw IoError(origin + ": unknown layer kind " + std::to_string(kind));
    rec.rec.kind = static_cast<LayerKind>(kind);
    for (auto& s : rec.rec.shape) s = r.u32();
    const auto& s = rec.rec.shape;
    if (rec.rec.kind == LayerKind::kBatchNorm) {
      if (s[0] == 0 || s[0] > (1u << 20)) throw IoError(origin + ": implausible batch-norm width");
      for (auto* v : {&rec.a, &rec.b, &rec.c, &rec.d}) {
        v->resize(s[0]);
        r.f32s(*v);
      }
    } else {
      const std::uint64_t taps = rec.rec.kind == LayerKind::kConv2d ? std::uint64_t{s[2]} * s[3] : s[2];
      const std::uint64_t n = std::uint64_t{s[0]} * s[1] * taps;
      if (n == 0 || n * 4 > r.remaining()) throw IoError(origin + ": truncated weight file");
      rec.a.resize(static_cast<std::size_t>(n));
      r.f32s(rec.a);
      rec.b.resize(s[0]);
      r.f32s(rec.b);
    }
    recs.push_back(std::move(rec));
  }
  if (r.remaining() != 0) throw IoError(origin + ": trailing bytes after last layer");
  if (detail::crc32_of(bytes.data(), bytes.size() - 4) != stored_crc) throw IoError(origin + ": CRC mismatch");

  // Recover the configuration from the records, then rebuild and compare.
  ModelConfig cfg;
  cfg.variant = variant;
  for (std::size_t b = 0; b < 4; ++b) cfg.widths[b] = recs[b * 3].rec.shape[0];
  cfg.head_width = recs[12].rec.shape[0];
  const auto& d1 = recs[1].rec;
  if (d1.kind == LayerKind::kMrdc || d1.kind == LayerKind::kMrdcNoAnchor) {
    cfg.anchor_tap = d1.kind == LayerKind::kMrdc;
    cfg.n_harmonics = static_cast<int>(d1.shape[2]) + (cfg.anchor_tap ? 0 : 1);
    cfg.bins_per_octave = static_cast<int>(d1.shape[3]);
  } else {
    cfg.n_harmonics = static_cast<int>(d1.shape[2]);
    if (d1.kind == LayerKind::kFrdc) cfg.frdc_rate = static_cast<int>(d1.shape[3]);
  }
  if (variant != Variant::kPlainDilated) cfg.sd_rate = static_cast<int>(recs[4].rec.shape[3]);

  HarmoF0Model model;
  try {
    model = assemble_model<float>(cfg);
  } catch (const ValidationError& e) {
    throw IoError(origin + ": inconsistent architecture: " + e.what());
  }
  std::size_t k = 0;
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    auto& layer = model.layers()[i].layer;
    if (std::holds_alternative<Activation>(layer)) continue;
    const auto want = detail::record_of(layer);
    const auto& got = recs[k];
    if (want.kind != got.rec.kind || want.shape != got.rec.shape)
      throw IoError(origin + ": shape mismatch at layer " + model.layers()[i].name);
    if (auto* c = std::get_if<Conv2d<float>>(&layer)) {
      c->weight().value = got.a;
      c->bias().value = got.b;
    } else if (auto* d = std::get_if<DilatedConv<float>>(&layer)) {
      d->weight().value = got.a;
      d->bias().value = got.b;
    } else {
      auto& bn = std::get<BatchNorm<float>>(layer);
      bn.gamma().value = got.a;
      bn.beta().value = got.b;
      bn.running_mean() = got.c;
      bn.running_var() = got.d;
    }
    ++k;
  }
  return model;
}

inline HarmoF0Model load_weights(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open weight file " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return deserialize_weights(bytes, path);
}

}  // namespace harmof0
