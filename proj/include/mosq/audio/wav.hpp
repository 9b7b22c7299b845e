#pragma once

// Minimal RIFF/WAVE support: 16-bit PCM, mono, 16 kHz.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mosq/error.hpp"

namespace mosq::audio {

inline constexpr int kSampleRateHz = 16000;

struct Waveform {
  std::vector<float> samples;
  int sample_rate_hz = kSampleRateHz;

  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate_hz; }
};

struct WavInfo {
  int sample_rate_hz = 0;
  int channels = 0;
  int bits_per_sample = 0;
  int format_tag = 0;
  std::size_t frames = 0;
};

namespace detail {

inline std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

inline std::vector<unsigned char> slurp(const std::filesystem::path& path, std::size_t limit = SIZE_MAX) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::MissingClip, "cannot open " + path.string());
  std::vector<unsigned char> bytes;
  char buf[1 << 14];
  while (bytes.size() < limit && in) {
    in.read(buf, sizeof buf);
    bytes.insert(bytes.end(), buf, buf + in.gcount());
  }
  if (bytes.size() > limit) bytes.resize(limit);
  return bytes;
}

// Walks the chunk list. Returns offset/size of the data chunk (size may be
// clipped when only a prefix of the file was read).
inline WavInfo parse_header(const std::vector<unsigned char>& b, const std::string& name,
                            std::size_t* data_offset, std::size_t* data_size) {
  if (b.size() < 12 || std::memcmp(b.data(), "RIFF", 4) != 0 || std::memcmp(b.data() + 8, "WAVE", 4) != 0) {
    fail(ErrorKind::BadAudioFormat, name + " is not a RIFF/WAVE file");
  }
  WavInfo info;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= b.size()) {
    const std::uint32_t size = read_u32(b.data() + pos + 4);
    if (std::memcmp(b.data() + pos, "fmt ", 4) == 0) {
      if (pos + 8 + 16 > b.size()) break;
      const unsigned char* f = b.data() + pos + 8;
      info.format_tag = read_u16(f);
      info.channels = read_u16(f + 2);
      info.sample_rate_hz = static_cast<int>(read_u32(f + 4));
      info.bits_per_sample = read_u16(f + 14);
      have_fmt = true;
    } else if (std::memcmp(b.data() + pos, "data", 4) == 0) {
      if (!have_fmt) break;
      *data_offset = pos + 8;
      *data_size = size;
      const int bytes_per_frame = std::max(1, info.channels * info.bits_per_sample / 8);
      info.frames = size / static_cast<std::uint32_t>(bytes_per_frame);
      return info;
    }
    pos += 8 + size + (size & 1u);
  }
  fail(ErrorKind::BadAudioFormat, name + " has no fmt/data chunks");
}

}  // namespace detail

/// Reads only the header of a WAV file.
inline WavInfo probe_wav(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::MissingClip, path.string() + " does not exist");
  auto bytes = detail::slurp(path, 4096);
  std::size_t off = 0, size = 0;
  return detail::parse_header(bytes, path.string(), &off, &size);
}

/// Loads a 16-bit PCM mono 16 kHz file as samples in [-1, 1).
inline Waveform read_wav(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::MissingClip, path.string() + " does not exist");
  auto bytes = detail::slurp(path);
  std::size_t off = 0, size = 0;
  const WavInfo info = detail::parse_header(bytes, path.string(), &off, &size);
  if (info.sample_rate_hz != kSampleRateHz) {
    fail(ErrorKind::BadSampleRate, path.string() + " is " + std::to_string(info.sample_rate_hz) + " Hz");
  }
  if (info.format_tag != 1 || info.bits_per_sample != 16 || info.channels != 1) {
    fail(ErrorKind::BadAudioFormat, path.string() + " must be 16-bit PCM mono");
  }
  size = std::min(size, bytes.size() - off);
  Waveform w;
  w.samples.resize(size / 2);
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    const auto v = static_cast<std::int16_t>(detail::read_u16(bytes.data() + off + 2 * i));
    w.samples[i] = static_cast<float>(v) / 32768.0f;
  }
  return w;
}

/// Writes samples as 16-bit PCM mono; values are clipped to [-1, 1].
inline void write_wav(const std::filesystem::path& path, const Waveform& w) {
  if (w.sample_rate_hz != kSampleRateHz) fail(ErrorKind::BadSampleRate, "only 16 kHz output is supported");
  std::string out;
  const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  out.reserve(44 + data_bytes);
  out += "RIFF";
  detail::put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  detail::put_u32(out, 16);
  detail::put_u16(out, 1);
  detail::put_u16(out, 1);
  detail::put_u32(out, kSampleRateHz);
  detail::put_u32(out, kSampleRateHz * 2);
  detail::put_u16(out, 2);
  detail::put_u16(out, 16);
  out += "data";
  detail::put_u32(out, data_bytes);
  for (float s : w.samples) {
    const float c = std::clamp(s, -1.0f, 1.0f);
    const auto q = static_cast<std::int16_t>(std::lround(std::min(c * 32768.0f, 32767.0f)));
    detail::put_u16(out, static_cast<std::uint16_t>(q));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::Io, "cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

}  // namespace mosq::audio
