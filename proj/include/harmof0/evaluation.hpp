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
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "harmof0/error.hpp"
#include "harmof0/pitch_track.hpp"

namespace harmof0 {

inline constexpr double kDefaultThresholdCents = 50.0;

inline double cents_diff(double est_hz, double ref_hz) {
  if (!(est_hz > 0.0) || !(ref_hz > 0.0)) throw ValidationError("cents_diff needs positive frequencies");
  return 1200.0 * std::log2(est_hz / ref_hz);
}

/// Folds a cents difference onto [-600, 600] (nearest octave).
inline double fold_cents(double d) { return d - 1200.0 * std::round(d / 1200.0); }

namespace detail {

inline void require_aligned(const PitchTrack& est, const PitchTrack& ref) {
  if (est.size() != ref.size())
    throw ValidationError("estimate and reference have different frame counts (" + std::to_string(est.size()) +
                          " vs " + std::to_string(ref.size()) + "); align them first");
}

template <bool kFold>
double accuracy(const PitchTrack& est, const PitchTrack& ref, double threshold_cents) {
  require_aligned(est, ref);
  std::size_t voiced = 0, hit = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    if (!ref.voiced(i)) continue;
    ++voiced;
    if (!est.voiced(i)) continue;
    double d = cents_diff(est.freqs_hz[i], ref.freqs_hz[i]);
    if constexpr (kFold) d = fold_cents(d);
    if (std::abs(d) <= threshold_cents) ++hit;
  }
  if (voiced == 0) throw ValidationError("undefined metric: reference has no voiced frames");
  return static_cast<double>(hit) / static_cast<double>(voiced);
}

}  // namespace detail

/// Raw pitch accuracy over reference-voiced frames.
inline double rpa(const PitchTrack& est, const PitchTrack& ref, double threshold_cents = kDefaultThresholdCents) {
  return detail::accuracy<false>(est, ref, threshold_cents);
}

/// Raw chroma accuracy: as rpa, octave errors forgiven.
inline double rca(const PitchTrack& est, const PitchTrack& ref, double threshold_cents = kDefaultThresholdCents) {
  return detail::accuracy<true>(est, ref, threshold_cents);
}

/// Nearest label within `half_window_s` of each grid time, else 0 (unvoiced).
/// Label times must be non-decreasing. Equidistant labels resolve to the earlier one.
inline std::vector<double> align_labels(const std::vector<double>& label_times, const std::vector<double>& label_f0,
                                        const std::vector<double>& grid_times, double half_window_s) {
  if (label_times.size() != label_f0.size()) throw ValidationError("label times and values differ in length");
  if (!std::is_sorted(label_times.begin(), label_times.end())) throw ValidationError("label times are not sorted");
  std::vector<double> out(grid_times.size(), 0.0);
  if (label_times.empty()) return out;
  for (std::size_t i = 0; i < grid_times.size(); ++i) {
    const double t = grid_times[i];
    auto it = std::lower_bound(label_times.begin(), label_times.end(), t);
    std::size_t best = label_times.size();
    double best_d = 0.0;
    if (it != label_times.begin()) {
      best = static_cast<std::size_t>(it - label_times.begin()) - 1;
      best_d = t - label_times[best];
    }
    if (it != label_times.end()) {
      const double d = *it - t;
      if (best == label_times.size() || d < best_d) {
        best = static_cast<std::size_t>(it - label_times.begin());
        best_d = d;
      }
    }
    if (best_d <= half_window_s) out[i] = std::max(0.0, label_f0[best]);
  }
  return out;
}

/// Maps a reference track onto the frame grid of `est`.
inline PitchTrack align_to(const PitchTrack& ref, const PitchTrack& est, double hop_s) {
  return PitchTrack::from_frequencies(est.times_s, align_labels(ref.times_s, ref.freqs_hz, est.times_s, hop_s / 2));
}

struct MetricReport {
  double rpa = 0.0;
  double rca = 0.0;
  std::size_t n_frames = 0;
  std::size_t n_voiced = 0;
  double threshold_cents = kDefaultThresholdCents;

  nlohmann::json to_json() const {
    return {{"rpa", rpa}, {"rca", rca}, {"n_frames", n_frames}, {"n_voiced", n_voiced},
            {"threshold_cents", threshold_cents}};
  }
};

inline MetricReport evaluate(const PitchTrack& est, const PitchTrack& ref,
                             double threshold_cents = kDefaultThresholdCents) {
  MetricReport r;
  r.rpa = rpa(est, ref, threshold_cents);
  r.rca = rca(est, ref, threshold_cents);
  r.n_frames = ref.size();
  r.n_voiced = static_cast<std::size_t>(std::count_if(ref.freqs_hz.begin(), ref.freqs_hz.end(), [](double f) { return f > 0; }));
  r.threshold_cents = threshold_cents;
  return r;
}

// ---------------------------------------------------------------------------
// CSV tracks. Two or three columns: time, frequency[, confidence]. A header
// row is skipped when its first field is not numeric.

inline PitchTrack read_track_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  PitchTrack track;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);
    auto parse = [&](const std::string& s, double& v) {
      char* end = nullptr;
      v = std::strtod(s.c_str(), &end);
      return end != s.c_str() && std::isfinite(v);
    };
    double t = 0, f = 0, c = 1.0;
    if (fields.size() < 2 || !parse(fields[0], t)) {
      if (lineno == 1) continue;
      throw ValidationError(path + ":" + std::to_string(lineno) + ": malformed row");
    }
    if (!parse(fields[1], f) || (fields.size() > 2 && !parse(fields[2], c)))
      throw ValidationError(path + ":" + std::to_string(lineno) + ": malformed row");
    track.push_back(t, f, c);
  }
  if (!std::is_sorted(track.times_s.begin(), track.times_s.end()))
    throw ValidationError(path + ": time column is not sorted");
  return track;
}

/// `time_sec,freq_hz,confidence`, LF endings, locale-independent formatting.
inline void write_track_csv(const PitchTrack& track, std::ostream& os) {
  track.check();
  os << "time_sec,freq_hz,confidence\n";
  char buf[96];
  for (std::size_t i = 0; i < track.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f\n", track.times_s[i], track.freqs_hz[i], track.confidence[i]);
    os << buf;
  }
}

inline void write_track_csv(const PitchTrack& track, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  write_track_csv(track, os);
  if (!os) throw IoError("write failed: " + path);
}

}  // namespace harmof0
