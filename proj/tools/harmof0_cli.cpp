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

// harmof0: batch front end for the pitch toolkit.
//
// Exit codes: 0 success, 1 invalid input or failed check, 2 I/O error.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "harmof0/harmof0.hpp"

namespace {

using namespace harmof0;

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitIo = 2;

ModelConfig model_config(const std::string& variant, bool reduced) {
  ModelConfig c = reduced ? ModelConfig::reduced() : ModelConfig{};
  c.variant = parse_variant(variant);
  return c;
}

// --- track -----------------------------------------------------------------

struct TrackArgs {
  std::string input, model, output = "-", channel = "mean";
  double threshold = 0.5;
};

int cmd_track(const TrackArgs& a) {
  const auto model = load_weights(a.model);
  const auto wav = read_wav(a.input);
  const SpectrogramConfig cfg;
  Audio mono = wav.mono(parse_channel(a.channel));
  if (wav.sample_rate != cfg.sample_rate_hz) mono = resample(mono, wav.sample_rate, cfg.sample_rate_hz);
  const auto clips = split_into_clips(mono, cfg);
  const double clip_s = static_cast<double>(cfg.clip_samples()) / cfg.sample_rate_hz;
  const std::size_t total_frames = (mono.size() + static_cast<std::size_t>(cfg.hop) - 1) / static_cast<std::size_t>(cfg.hop);

  PitchTrack track;
  constexpr std::size_t kBatch = 8;
  for (std::size_t s = 0; s < clips.size(); s += kBatch) {
    std::vector<LogSpectrogram> specs;
    for (std::size_t i = s; i < std::min(clips.size(), s + kBatch); ++i) specs.push_back(log_spectrogram(clips[i], cfg));
    const auto act = model.infer(network_input<float>(specs));
    const auto tracks = decode(act, a.threshold, cfg);
    for (std::size_t i = 0; i < tracks.size(); ++i) {
      auto t = tracks[i];
      for (double& time : t.times_s) time += static_cast<double>(s + i) * clip_s;
      track.append(t);
    }
  }
  track.times_s.resize(std::min(track.size(), total_frames));
  track.freqs_hz.resize(track.times_s.size());
  track.confidence.resize(track.times_s.size());
  track.bin_indices.resize(track.times_s.size());

  if (a.output == "-") {
    write_track_csv(track, std::cout);
  } else {
    write_track_csv(track, a.output);
  }
  return kExitOk;
}

// --- train -----------------------------------------------------------------

struct TrainArgs {
  std::string manifest, config, out, log, variant = "mrdc";
  std::size_t synthetic = 0;
  bool reduced = false;
  double val_fraction = 0.2;
  std::uint64_t seed = 0;
  int epochs = 0;
  std::size_t batch_size = 0;
  double lr = -1.0;
};

int cmd_train(const TrainArgs& a) {
  TrainConfig cfg;
  cfg.seed = a.seed;
  if (!a.config.empty()) {
    std::ifstream is(a.config);
    if (!is) throw IoError("cannot open config " + a.config);
    nlohmann::json j;
    try {
      is >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(a.config + ": invalid JSON: " + e.what());
    }
    cfg.update_from_json(j);
  }
  if (a.epochs > 0) cfg.epochs = a.epochs;
  if (a.batch_size > 0) cfg.batch_size = a.batch_size;
  if (a.lr >= 0.0) cfg.lr = a.lr;
  cfg.validate();

  std::vector<AnnotatedClip> clips;
  if (!a.manifest.empty()) {
    clips = load_dataset(load_manifest(a.manifest), cfg.spec);
  } else if (a.synthetic > 0) {
    SyntheticSetOptions so;
    so.count = a.synthetic;
    so.seed = cfg.seed;
    clips = make_synthetic_set(so);
  } else {
    throw ValidationError("give either --manifest or --synthetic N");
  }
  const auto split = holdout_split(clips.size(), a.val_fraction, cfg.seed);
  const auto tr = gather<AnnotatedClip>(clips, split.train);
  const auto va = gather<AnnotatedClip>(clips, split.validation);

  auto model = build_model<float>(model_config(a.variant, a.reduced), cfg.seed);
  std::ofstream log;
  if (!a.log.empty()) {
    log.open(a.log, std::ios::binary);
    if (!log) throw IoError("cannot open " + a.log + " for writing");
  }
  TrainCallbacks cb;
  cb.on_epoch = [&](const EpochRecord& r) {
    const std::string line = r.to_json().dump();
    std::cerr << line << "\n";
    if (log.is_open()) log << line << "\n" << std::flush;
  };
  train(model, std::span<const AnnotatedClip>(tr), std::span<const AnnotatedClip>(va), cfg, cb);
  save_weights(model, a.out);
  return kExitOk;
}

// --- eval ------------------------------------------------------------------

int cmd_eval(const std::string& est_path, const std::string& ref_path, double threshold, double hop_s) {
  const auto est = read_track_csv(est_path);
  const auto ref = read_track_csv(ref_path);
  const auto report = evaluate(est, align_to(ref, est, hop_s), threshold);
  std::cout << report.to_json().dump() << "\n";
  return kExitOk;
}

// --- gradcheck -------------------------------------------------------------

int cmd_gradcheck(std::uint64_t seed, int n_seeds) {
  const auto results = run_gradcheck_suite(seed, n_seeds);
  bool ok = true;
  for (const auto& r : results) {
    std::printf("%-22s seed %-4llu checked %-6zu max_rel_err %.3e %s\n", r.layer.c_str(),
                static_cast<unsigned long long>(r.seed), r.n_checked, r.max_rel_error, r.passed ? "ok" : "FAIL");
    ok = ok && r.passed;
  }
  std::printf("%s\n", ok ? "all gradient checks passed" : "gradient check FAILED");
  return ok ? kExitOk : kExitInvalid;
}

// --- params ----------------------------------------------------------------

int cmd_params(const std::string& variant, bool reduced) {
  const auto model = assemble_model<float>(model_config(variant, reduced));
  for (const auto& l : model.summary()) {
    if (l.params == 0) continue;
    std::printf("%-14s %-10s %-40s %8zu\n", l.name.c_str(), l.kind.c_str(), l.shape.c_str(), l.params);
  }
  std::printf("total %zu\n", model.param_count());
  return kExitOk;
}

// --- mix / synth -----------------------------------------------------------

int cmd_mix(const std::string& clean_path, const std::string& noise_path, double snr, const std::string& out) {
  const auto clean = read_wav(clean_path);
  const auto noise = read_wav(noise_path);
  if (clean.sample_rate != noise.sample_rate) throw ValidationError("clean and noise sample rates differ");
  const auto mixed = mix_at_snr(clean.mono(), noise.mono(), snr);
  write_wav(out, mixed, clean.sample_rate, WavFormat::kFloat32);
  return kExitOk;
}

struct SynthArgs {
  double f0 = 220.0, decay = 0.8, vibrato = 0.0, seconds = 2.0;
  int partials = 8;
  std::uint64_t seed = 0;
  std::string out, labels;
};

int cmd_synth(const SynthArgs& a) {
  SynthOptions opt;
  opt.vibrato_cents = a.vibrato;
  opt.spec.clip_len_s = a.seconds;
  const auto clip = synth_harmonic_clip(a.f0, a.partials, a.decay, a.seed, opt);
  write_wav(a.out, clip.audio, opt.spec.sample_rate_hz, WavFormat::kPcm16);
  if (!a.labels.empty()) {
    std::vector<double> times(clip.f0_hz.size());
    for (std::size_t t = 0; t < times.size(); ++t) times[t] = static_cast<double>(t) * opt.spec.hop / opt.spec.sample_rate_hz;
    write_track_csv(PitchTrack::from_frequencies(times, clip.f0_hz), a.labels);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  configure_workers_from_env();
  CLI::App app{"HarmoF0 pitch estimation toolkit"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads (overrides HARMOF0_THREADS)");

  TrackArgs track;
  auto* c_track = app.add_subcommand("track", "Estimate pitch of a WAV file");
  c_track->add_option("--input,-i", track.input, "Input WAV")->required();
  c_track->add_option("--model,-m", track.model, "Weight file")->required();
  c_track->add_option("--output,-o", track.output, "Output CSV ('-' for stdout)");
  c_track->add_option("--channel", track.channel, "mean, left or right");
  c_track->add_option("--voicing-threshold", track.threshold, "Confidence needed to call a frame voiced");

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train a model");
  c_train->add_option("--manifest", tr.manifest, "Dataset manifest JSON");
  c_train->add_option("--synthetic", tr.synthetic, "Train on N synthetic harmonic clips");
  c_train->add_option("--variant", tr.variant, "mrdc, frdc, plain-block1 or plain-dilated");
  c_train->add_flag("--reduced", tr.reduced, "Use narrow channel widths (8/16/32/32)");
  c_train->add_option("--config", tr.config, "Training config JSON");
  c_train->add_option("--out", tr.out, "Output weight file")->required();
  c_train->add_option("--log", tr.log, "JSON-lines training log");
  c_train->add_option("--seed", tr.seed, "Random seed");
  c_train->add_option("--epochs", tr.epochs, "Override epochs");
  c_train->add_option("--batch-size", tr.batch_size, "Override batch size");
  c_train->add_option("--lr", tr.lr, "Override learning rate");
  c_train->add_option("--val-fraction", tr.val_fraction, "Held-out fraction");

  std::string est, ref;
  double threshold = kDefaultThresholdCents, hop_s = 0.02;
  auto* c_eval = app.add_subcommand("eval", "Score an estimate against a reference");
  c_eval->add_option("--est", est, "Estimated track CSV")->required();
  c_eval->add_option("--ref", ref, "Reference track CSV")->required();
  c_eval->add_option("--threshold", threshold, "Tolerance in cents");
  c_eval->add_option("--hop", hop_s, "Frame hop in seconds, for label alignment");

  std::uint64_t gc_seed = 0;
  int gc_seeds = 10;
  auto* c_grad = app.add_subcommand("gradcheck", "Finite-difference check of every layer");
  c_grad->add_option("--seed", gc_seed, "First seed");
  c_grad->add_option("--seeds", gc_seeds, "Number of seeds");

  std::string p_variant = "mrdc";
  bool p_reduced = false;
  auto* c_params = app.add_subcommand("params", "Print parameter counts");
  c_params->add_option("--variant", p_variant, "mrdc, frdc, plain-block1 or plain-dilated");
  c_params->add_flag("--reduced", p_reduced, "Use narrow channel widths");

  std::string m_clean, m_noise, m_out;
  double m_snr = 0.0;
  auto* c_mix = app.add_subcommand("mix", "Mix noise into a signal at a given SNR");
  c_mix->add_option("--clean", m_clean, "Clean WAV")->required();
  c_mix->add_option("--noise", m_noise, "Noise WAV")->required();
  c_mix->add_option("--snr", m_snr, "Target SNR in dB")->required();
  c_mix->add_option("--out", m_out, "Output WAV")->required();

  SynthArgs sy;
  auto* c_synth = app.add_subcommand("synth", "Render a harmonic test tone");
  c_synth->add_option("--f0", sy.f0, "Fundamental in Hz");
  c_synth->add_option("--partials", sy.partials, "Number of partials");
  c_synth->add_option("--decay", sy.decay, "Amplitude ratio between partials");
  c_synth->add_option("--vibrato-cents", sy.vibrato, "Vibrato depth");
  c_synth->add_option("--seconds", sy.seconds, "Duration");
  c_synth->add_option("--seed", sy.seed, "Phase seed");
  c_synth->add_option("--out", sy.out, "Output WAV")->required();
  c_synth->add_option("--labels", sy.labels, "Also write the reference f0 CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitInvalid;
  }
  if (threads > 0) set_worker_count(threads);

  try {
    if (*c_track) return cmd_track(track);
    if (*c_train) return cmd_train(tr);
    if (*c_eval) return cmd_eval(est, ref, threshold, hop_s);
    if (*c_grad) return cmd_gradcheck(gc_seed, gc_seeds);
    if (*c_params) return cmd_params(p_variant, p_reduced);
    if (*c_mix) return cmd_mix(m_clean, m_noise, m_snr, m_out);
    if (*c_synth) return cmd_synth(sy);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  }
  return kExitInvalid;
}
