#pragma once

// 16 kHz waveform -> 26 x N log-Mel matrix.
//
// Framing: 512-sample frames, 160-sample hop, no centering or padding, so a
// clip of L >= 512 samples gives N = floor((L - 512) / 160) + 1 frames.
// Window: periodic Hann. Mel scale: HTK, 0..8000 Hz, unit-peak triangles.
// Decibels: referenced to the per-clip maximum, floored at -80 dB.

#include <fftw3.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numbers>
#include <string>
#include <vector>

#include "mosq/audio/wav.hpp"
#include "mosq/error.hpp"

namespace mosq::audio {

inline constexpr std::size_t kFrameLength = 512;
inline constexpr std::size_t kHopLength = 160;
inline constexpr std::size_t kFftBins = kFrameLength / 2 + 1;
inline constexpr std::size_t kMelBins = 26;
inline constexpr double kMelFmin = 0.0;
inline constexpr double kMelFmax = 8000.0;
inline constexpr double kDbFloor = -80.0;
inline constexpr double kDbEpsilon = 1e-10;
inline constexpr double kFrameHopSeconds = 0.010;
inline constexpr double kFrameLengthSeconds = 0.032;

/// Dense row-major matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

/// Log-Mel features of one clip: kMelBins rows (mel bin) x `frames` columns.
struct MelSpectrogram {
  std::size_t frames = 0;
  std::vector<float> values;

  float operator()(std::size_t mel, std::size_t frame) const { return values[mel * frames + frame]; }
  std::size_t rows() const { return kMelBins; }
};

constexpr std::size_t frame_count(std::size_t num_samples) {
  return num_samples < kFrameLength ? 0 : (num_samples - kFrameLength) / kHopLength + 1;
}

/// Smallest sample count yielding `frames` frames.
constexpr std::size_t samples_for_frames(std::size_t frames) {
  return frames == 0 ? 0 : kFrameLength + (frames - 1) * kHopLength;
}

inline const std::vector<double>& hann_window() {
  static const std::vector<double> window = [] {
    std::vector<double> w(kFrameLength);
    for (std::size_t n = 0; n < kFrameLength; ++n) {
      w[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / kFrameLength);
    }
    return w;
  }();
  return window;
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// 26 x 257 triangular filterbank on the HTK mel scale.
inline const Matrix& mel_filterbank() {
  static const Matrix bank = [] {
    Matrix m(kMelBins, kFftBins);
    std::vector<double> edges(kMelBins + 2);
    const double lo = hz_to_mel(kMelFmin), hi = hz_to_mel(kMelFmax);
    for (std::size_t i = 0; i < edges.size(); ++i) {
      edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(kMelBins + 1));
    }
    for (std::size_t r = 0; r < kMelBins; ++r) {
      const double left = edges[r], center = edges[r + 1], right = edges[r + 2];
      for (std::size_t k = 0; k < kFftBins; ++k) {
        const double f = static_cast<double>(k) * kSampleRateHz / static_cast<double>(kFrameLength);
        const double up = (f - left) / (center - left);
        const double down = (right - f) / (right - center);
        m(r, k) = std::max(0.0, std::min(up, down));
      }
    }
    return m;
  }();
  return bank;
}

namespace detail {

// The FFTW planner is not thread-safe; execution with the new-array API is.
inline fftw_plan r2c_plan() {
  static std::once_flag once;
  static fftw_plan plan = nullptr;
  std::call_once(once, [] {
    std::vector<double> in(kFrameLength);
    std::vector<fftw_complex> out(kFftBins);
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(kFrameLength), in.data(), out.data(),
                                FFTW_ESTIMATE | FFTW_UNALIGNED);
  });
  return plan;
}

}  // namespace detail

/// One-sided power spectrogram, kFftBins x N.
inline Matrix stft_power(const Waveform& w) {
  if (w.sample_rate_hz != kSampleRateHz) {
    fail(ErrorKind::BadSampleRate, "expected 16000 Hz, got " + std::to_string(w.sample_rate_hz));
  }
  if (w.samples.size() < kFrameLength) {
    fail(ErrorKind::ClipTooShort, std::to_string(w.samples.size()) + " samples, need at least 512");
  }
  const std::size_t frames = frame_count(w.samples.size());
  const auto& window = hann_window();
  Matrix power(kFftBins, frames);
  std::vector<double> in(kFrameLength);
  std::vector<fftw_complex> out(kFftBins);
  const fftw_plan plan = detail::r2c_plan();
  for (std::size_t t = 0; t < frames; ++t) {
    const float* src = w.samples.data() + t * kHopLength;
    for (std::size_t n = 0; n < kFrameLength; ++n) in[n] = static_cast<double>(src[n]) * window[n];
    fftw_execute_dft_r2c(plan, in.data(), out.data());
    for (std::size_t k = 0; k < kFftBins; ++k) power(k, t) = out[k][0] * out[k][0] + out[k][1] * out[k][1];
  }
  return power;
}

/// filterbank (26 x 257) . power (257 x N).
inline Matrix mel_project(const Matrix& power) {
  if (power.rows != kFftBins) {
    fail(ErrorKind::ShapeMismatch, "mel_project needs 257 rows, got " + std::to_string(power.rows));
  }
  const Matrix& bank = mel_filterbank();
  Matrix mel(kMelBins, power.cols);
  for (std::size_t r = 0; r < kMelBins; ++r) {
    for (std::size_t k = 0; k < kFftBins; ++k) {
      const double wt = bank(r, k);
      if (wt == 0.0) continue;
      for (std::size_t t = 0; t < power.cols; ++t) mel(r, t) += wt * power(k, t);
    }
  }
  return mel;
}

/// 10 log10(max(x, eps) / max(X)) floored at -80 dB. A clip whose maximum is
/// below eps is silent and maps to the floor everywhere.
inline MelSpectrogram power_to_db(const Matrix& mel) {
  if (mel.rows != kMelBins) fail(ErrorKind::ShapeMismatch, "power_to_db needs 26 rows");
  MelSpectrogram out;
  out.frames = mel.cols;
  out.values.resize(mel.values.size());
  const double peak = mel.values.empty() ? 0.0 : *std::max_element(mel.values.begin(), mel.values.end());
  if (peak < kDbEpsilon) {
    std::fill(out.values.begin(), out.values.end(), static_cast<float>(kDbFloor));
    return out;
  }
  for (std::size_t i = 0; i < mel.values.size(); ++i) {
    const double db = 10.0 * std::log10(std::max(mel.values[i], kDbEpsilon) / peak);
    out.values[i] = static_cast<float>(std::max(db, kDbFloor));
  }
  return out;
}

inline MelSpectrogram extract_features(const Waveform& w) { return power_to_db(mel_project(stft_power(w))); }

// Feature cache: u32 rows (26), u32 frames, then rows*frames float32, all
// little-endian, row-major.
static_assert(std::endian::native == std::endian::little, "feature cache IO assumes a little-endian host");

inline void write_feature_cache(const std::filesystem::path& path, const MelSpectrogram& m) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::Io, "cannot write " + path.string());
  const std::uint32_t header[2] = {static_cast<std::uint32_t>(kMelBins), static_cast<std::uint32_t>(m.frames)};
  f.write(reinterpret_cast<const char*>(header), sizeof header);
  f.write(reinterpret_cast<const char*>(m.values.data()),
          static_cast<std::streamsize>(m.values.size() * sizeof(float)));
}

inline MelSpectrogram read_feature_cache(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::Io, "cannot open " + path.string());
  std::uint32_t header[2] = {0, 0};
  f.read(reinterpret_cast<char*>(header), sizeof header);
  if (!f || header[0] != kMelBins || header[1] == 0) fail(ErrorKind::ParseError, path.string() + ": bad cache header");
  MelSpectrogram m;
  m.frames = header[1];
  m.values.resize(kMelBins * m.frames);
  f.read(reinterpret_cast<char*>(m.values.data()), static_cast<std::streamsize>(m.values.size() * sizeof(float)));
  if (!f) fail(ErrorKind::ParseError, path.string() + ": truncated payload");
  return m;
}

}  // namespace mosq::audio
