#pragma once

// Synthetic corpus: each "DNS model" has a latent quality, each clip a
// jittered clip quality that controls its SNR and clipping distortion, and
// each judge scores the clip quality plus zero-mean noise, rounded to 1..5.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "mosq/audio/features.hpp"
#include "mosq/audio/wav.hpp"
#include "mosq/data/manifest.hpp"
#include "mosq/labels/stats.hpp"
#include "mosq/nn/layers.hpp"

namespace mosq::data {

struct SynthSpec {
  std::size_t n_models = 10;
  std::size_t clips_per_model = 50;
  double clip_seconds = 4.0;
  double quality_min = 2.0;   // latent quality of the worst model
  double quality_max = 4.5;   // latent quality of the best model
  double clip_jitter = 0.35;  // sd of clip quality around its model's quality
  double judge_noise = 0.9;   // sd of a judge's perception around clip quality
  double five_judge_share = 0.75;
  double max_abs_skewness = 1.75;
  std::uint64_t seed = 1;
};

struct SynthClip {
  labels::OpinionRecord record;
  double model_quality = 0.0;
  double clip_quality = 0.0;
  audio::Waveform waveform;
};

namespace detail {

inline std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline double gaussian(nn::Rng& rng) {
  // Box-Muller on the library's uniform draw.
  const double u1 = std::max(nn::uniform01(rng), 1e-300);
  const double u2 = nn::uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline std::size_t judge_count(double five_share, nn::Rng& rng) {
  const double u = nn::uniform01(rng);
  if (u < five_share) return 5;
  const double rest = (u - five_share) / (1.0 - five_share);
  if (rest < 0.4) return 2 + static_cast<std::size_t>(nn::uniform01(rng) * 3.0);  // 2..4
  const double e = -4.0 * std::log(std::max(1.0 - nn::uniform01(rng), 1e-300));
  return std::min<std::size_t>(6 + static_cast<std::size_t>(e), labels::kMaxJudges);
}

inline std::vector<int> judge_scores(double quality, double noise, std::size_t n, nn::Rng& rng) {
  std::vector<int> s(n);
  for (auto& v : s) {
    const double p = quality + noise * gaussian(rng);
    v = static_cast<int>(std::lround(std::clamp(p, 1.0, 5.0)));
  }
  return s;
}

inline audio::Waveform render_clip(double quality, std::size_t samples, nn::Rng& rng) {
  const double x = std::clamp((quality - 1.0) / 4.0, 0.0, 1.0);
  const double fs = audio::kSampleRateHz;
  const double f0 = 100.0 + 120.0 * nn::uniform01(rng);
  const double rate = 3.0 + 2.0 * nn::uniform01(rng);
  const double phase = 2.0 * std::numbers::pi * nn::uniform01(rng);

  std::vector<double> voice(samples, 0.0);
  for (std::size_t k = 1; k * f0 < 4000.0; ++k) {
    const std::complex<double> step = std::polar(1.0, 2.0 * std::numbers::pi * f0 * static_cast<double>(k) / fs);
    std::complex<double> osc = std::polar(1.0 / static_cast<double>(k), phase * static_cast<double>(k));
    for (std::size_t i = 0; i < samples; ++i) {
      voice[i] += osc.imag();
      osc *= step;
    }
  }
  double signal_power = 0.0;
  for (std::size_t i = 0; i < samples; ++i) {
    const double env = std::sin(std::numbers::pi * rate * static_cast<double>(i) / fs + phase);
    voice[i] *= 0.1 + env * env;
    signal_power += voice[i] * voice[i];
  }
  signal_power /= static_cast<double>(samples);

  std::vector<double> noise(samples);
  double prev = 0.0, noise_power = 0.0;
  for (auto& v : noise) {
    prev = 0.6 * prev + gaussian(rng);
    v = prev;
    noise_power += v * v;
  }
  noise_power /= static_cast<double>(samples);

  const double snr_db = -5.0 + 35.0 * x;
  const double gain = std::sqrt(signal_power / (noise_power * std::pow(10.0, snr_db / 10.0)));
  std::vector<double> mix(samples);
  double peak = 0.0;
  for (std::size_t i = 0; i < samples; ++i) {
    mix[i] = voice[i] + gain * noise[i];
    peak = std::max(peak, std::abs(mix[i]));
  }
  const double clip_level = peak * (0.15 + 0.85 * x);
  audio::Waveform w;
  w.samples.resize(samples);
  const double out_scale = peak > 0.0 ? 0.7 / clip_level : 0.0;
  for (std::size_t i = 0; i < samples; ++i) {
    w.samples[i] = static_cast<float>(std::clamp(mix[i], -clip_level, clip_level) * out_scale);
  }
  return w;
}

}  // namespace detail

inline void validate(const SynthSpec& s) {
  if (s.n_models == 0 || s.clips_per_model == 0) fail(ErrorKind::InvalidSpec, "empty corpus");
  if (audio::frame_count(static_cast<std::size_t>(s.clip_seconds * audio::kSampleRateHz)) == 0) {
    fail(ErrorKind::InvalidSpec, "clip shorter than one frame");
  }
  if (s.quality_min < 1.0 || s.quality_max > 5.0 || s.quality_min > s.quality_max) {
    fail(ErrorKind::InvalidSpec, "latent quality range must lie inside [1,5]");
  }
  if (s.clip_jitter < 0.0 || s.judge_noise < 0.0) fail(ErrorKind::InvalidSpec, "negative noise");
  if (s.five_judge_share < 0.0 || s.five_judge_share > 1.0) fail(ErrorKind::InvalidSpec, "five_judge_share");
  if (!(s.max_abs_skewness > 0.0)) fail(ErrorKind::InvalidSpec, "max_abs_skewness must be positive");
}

inline std::string model_name(std::size_t m) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "m%03zu", m);
  return buf;
}

inline std::string clip_name(std::size_t m, std::size_t c) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "m%03zu_c%04zu", m, c);
  return buf;
}

/// Latent quality of model m, evenly spaced so the models have a strict order.
inline double model_quality(const SynthSpec& s, std::size_t m) {
  if (s.n_models == 1) return 0.5 * (s.quality_min + s.quality_max);
  return s.quality_min + (s.quality_max - s.quality_min) * static_cast<double>(m) / static_cast<double>(s.n_models - 1);
}

/// One clip; depends only on (spec, m, c) so clips can be produced in any order.
inline SynthClip synthesize_clip(const SynthSpec& s, std::size_t m, std::size_t c, bool with_audio = true) {
  nn::Rng rng(detail::splitmix(s.seed ^ detail::splitmix((static_cast<std::uint64_t>(m) << 32) | c)));
  SynthClip clip;
  clip.model_quality = model_quality(s, m);
  clip.clip_quality = std::clamp(clip.model_quality + s.clip_jitter * detail::gaussian(rng), 1.0, 5.0);
  clip.record.clip_id = clip_name(m, c);
  clip.record.dns_model_id = model_name(m);
  const std::size_t n = detail::judge_count(s.five_judge_share, rng);
  bool ok = false;
  for (int attempt = 0; attempt < 200 && !ok; ++attempt) {
    clip.record.scores = detail::judge_scores(clip.clip_quality, s.judge_noise, n, rng);
    ok = std::abs(labels::compute_stats(clip.record.scores).skewness) <= s.max_abs_skewness;
  }
  if (!ok) clip.record.scores.assign(n, static_cast<int>(std::lround(clip.clip_quality)));
  if (with_audio) {
    const auto samples = static_cast<std::size_t>(std::llround(s.clip_seconds * audio::kSampleRateHz));
    clip.waveform = detail::render_clip(clip.clip_quality, samples, rng);
  }
  return clip;
}

/// In-memory corpus, model-major order.
inline std::vector<SynthClip> synthesize(const SynthSpec& s, bool with_audio = true) {
  validate(s);
  std::vector<SynthClip> out;
  out.reserve(s.n_models * s.clips_per_model);
  for (std::size_t m = 0; m < s.n_models; ++m) {
    for (std::size_t c = 0; c < s.clips_per_model; ++c) out.push_back(synthesize_clip(s, m, c, with_audio));
  }
  return out;
}

/// Writes clips/<clip_id>.wav and manifest.jsonl under `dir`.
inline DatasetManifest generate_synthetic(const SynthSpec& s, const fs::path& dir) {
  validate(s);
  fs::create_directories(dir / "clips");
  DatasetManifest m;
  m.base_dir = dir;
  for (std::size_t mi = 0; mi < s.n_models; ++mi) {
    for (std::size_t c = 0; c < s.clips_per_model; ++c) {
      const SynthClip clip = synthesize_clip(s, mi, c);
      const std::string rel = "clips/" + clip.record.clip_id + ".wav";
      audio::write_wav(dir / rel, clip.waveform);
      m.entries.push_back({clip.record.clip_id, rel, clip.record.dns_model_id, clip.record.scores, ""});
    }
  }
  save_manifest(dir / "manifest.jsonl", m);
  return m;
}

}  // namespace mosq::data
