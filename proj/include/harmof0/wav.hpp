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
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "harmof0/error.hpp"
#include "harmof0/logspec.hpp"

namespace harmof0 {

/// Which channel of a stereo file feeds the mono pipeline.
enum class Channel { kMean, kLeft, kRight };

inline Channel parse_channel(const std::string& s) {
  if (s == "mean" || s == "mix") return Channel::kMean;
  if (s == "left") return Channel::kLeft;
  if (s == "right") return Channel::kRight;
  throw ValidationError("unknown channel '" + s + "' (expected mean, left or right)");
}

struct WavAudio {
  int sample_rate = 0;
  int channels = 0;
  /// One vector per channel, samples scaled to [-1, 1].
  std::vector<Audio> data;

  std::size_t frames() const { return data.empty() ? 0 : data[0].size(); }

  Audio mono(Channel ch = Channel::kMean) const {
    if (channels == 1) return data[0];
    switch (ch) {
      case Channel::kLeft:
        return data[0];
      case Channel::kRight:
        return data[1];
      case Channel::kMean:
        break;
    }
    Audio out(frames(), 0.0);
    for (const auto& c : data)
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += c[i];
    for (double& v : out) v /= channels;
    return out;
  }
};

namespace detail {

inline std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

/// Reads RIFF/WAVE with PCM 16/24/32-bit integer or 32-bit float samples.
inline WavAudio read_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  std::vector<unsigned char> b((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (b.size() < 12 || std::memcmp(b.data(), "RIFF", 4) != 0 || std::memcmp(b.data() + 8, "WAVE", 4) != 0)
    throw IoError(path + ": not a RIFF/WAVE file");

  int format = 0, channels = 0, rate = 0, bits = 0;
  const unsigned char* pcm = nullptr;
  std::size_t pcm_bytes = 0;
  std::size_t pos = 12;
  while (pos + 8 <= b.size()) {
    const unsigned char* id = b.data() + pos;
    const std::size_t size = detail::le32(b.data() + pos + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (size < 16 || body + 16 > b.size()) throw IoError(path + ": malformed fmt chunk");
      format = detail::le16(b.data() + body);
      channels = detail::le16(b.data() + body + 2);
      rate = static_cast<int>(detail::le32(b.data() + body + 4));
      bits = detail::le16(b.data() + body + 14);
      if (format == 0xFFFE && size >= 26) format = detail::le16(b.data() + body + 24);  // extensible
    } else if (std::memcmp(id, "data", 4) == 0) {
      pcm = b.data() + body;
      pcm_bytes = std::min(size, b.size() - body);
    }
    pos = body + size + (size & 1);
  }
  if (channels <= 0 || rate <= 0 || pcm == nullptr) throw IoError(path + ": missing fmt or data chunk");
  const bool is_float = format == 3 && bits == 32;
  const bool is_int = format == 1 && (bits == 16 || bits == 24 || bits == 32);
  if (!is_float && !is_int) throw IoError(path + ": unsupported sample format");

  const std::size_t bytes_per = static_cast<std::size_t>(bits / 8);
  const std::size_t frames = pcm_bytes / (bytes_per * static_cast<std::size_t>(channels));
  WavAudio w;
  w.sample_rate = rate;
  w.channels = channels;
  w.data.assign(static_cast<std::size_t>(channels), Audio(frames));
  for (std::size_t f = 0; f < frames; ++f) {
    for (int c = 0; c < channels; ++c) {
      const unsigned char* p = pcm + (f * static_cast<std::size_t>(channels) + static_cast<std::size_t>(c)) * bytes_per;
      double v = 0.0;
      if (is_float) {
        const std::uint32_t u = detail::le32(p);
        float fl;
        std::memcpy(&fl, &u, 4);
        v = fl;
      } else if (bits == 16) {
        v = static_cast<std::int16_t>(detail::le16(p)) / 32768.0;
      } else if (bits == 24) {
        std::int32_t s = static_cast<std::int32_t>(p[0] | (p[1] << 8) | (p[2] << 16));
        if (s & 0x800000) s -= 0x1000000;
        v = s / 8388608.0;
      } else {
        v = static_cast<std::int32_t>(detail::le32(p)) / 2147483648.0;
      }
      w.data[static_cast<std::size_t>(c)][f] = v;
    }
  }
  return w;
}

enum class WavFormat { kPcm16, kFloat32 };

/// Writes a mono WAV file.
inline void write_wav(const std::string& path, std::span<const double> audio, int sample_rate,
                      WavFormat fmt = WavFormat::kPcm16) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  const std::uint16_t bits = fmt == WavFormat::kPcm16 ? 16 : 32;
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(audio.size() * (bits / 8));
  auto u32 = [&](std::uint32_t v) { detail::put_u32(os, v); };
  auto u16 = [&](std::uint16_t v) {
    const unsigned char c[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
    os.write(reinterpret_cast<const char*>(c), 2);
  };
  os.write("RIFF", 4);
  u32(36 + data_bytes);
  os.write("WAVEfmt ", 8);
  u32(16);
  u16(fmt == WavFormat::kPcm16 ? 1 : 3);
  u16(1);
  u32(static_cast<std::uint32_t>(sample_rate));
  u32(static_cast<std::uint32_t>(sample_rate) * (bits / 8));
  u16(bits / 8);
  u16(bits);
  os.write("data", 4);
  u32(data_bytes);
  for (double v : audio) {
    if (fmt == WavFormat::kPcm16) {
      const double c = std::clamp(v, -1.0, 32767.0 / 32768.0);
      u16(static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(c * 32768.0))));
    } else {
      detail::put_f32(os, static_cast<float>(v));
    }
  }
  if (!os) throw IoError("write failed: " + path);
}

}  // namespace harmof0
