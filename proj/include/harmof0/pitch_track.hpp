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

#include <cstddef>
#include <vector>

#include "harmof0/error.hpp"

namespace harmof0 {

/// Per-frame pitch estimate or reference. A frequency of 0 marks an
/// unvoiced frame.
struct PitchTrack {
  std::vector<double> times_s;
  std::vector<double> freqs_hz;
  std::vector<double> confidence;
  std::vector<int> bin_indices;

  std::size_t size() const noexcept { return times_s.size(); }
  bool voiced(std::size_t i) const { return freqs_hz[i] > 0.0; }

  void push_back(double t, double f, double c = 1.0, int bin = -1) {
    times_s.push_back(t);
    freqs_hz.push_back(f);
    confidence.push_back(c);
    bin_indices.push_back(bin);
  }

  void append(const PitchTrack& other) {
    times_s.insert(times_s.end(), other.times_s.begin(), other.times_s.end());
    freqs_hz.insert(freqs_hz.end(), other.freqs_hz.begin(), other.freqs_hz.end());
    confidence.insert(confidence.end(), other.confidence.begin(), other.confidence.end());
    bin_indices.insert(bin_indices.end(), other.bin_indices.begin(), other.bin_indices.end());
  }

  void check() const {
    const std::size_t n = times_s.size();
    if (freqs_hz.size() != n || confidence.size() != n || bin_indices.size() != n)
      throw ValidationError("pitch track fields have unequal lengths");
  }

  /// A track carrying only times and frequencies (confidence 1, no bins).
  static PitchTrack from_frequencies(std::vector<double> times, std::vector<double> freqs) {
    if (times.size() != freqs.size()) throw ValidationError("times and frequencies differ in length");
    PitchTrack t;
    t.confidence.assign(times.size(), 1.0);
    t.bin_indices.assign(times.size(), -1);
    t.times_s = std::move(times);
    t.freqs_hz = std::move(freqs);
    return t;
  }
};

}  // namespace harmof0
