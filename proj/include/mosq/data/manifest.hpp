#pragma once

// Dataset manifests: one JSON object per line,
//   {"clip_path": "clips/a.wav", "dns_model_id": "m03", "scores": [4,4,3,5,4], "split": "train"}
// `clip_id` defaults to the file stem; `split` is optional. Relative clip
// paths resolve against the manifest's directory.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "mosq/audio/wav.hpp"
#include "mosq/labels/stats.hpp"
#include "mosq/nn/layers.hpp"

namespace mosq::data {

namespace fs = std::filesystem;

struct ManifestEntry {
  std::string clip_id;
  std::string clip_path;  // as written in the manifest
  std::string dns_model_id;
  std::vector<int> scores;
  std::string split;  // "", "train" or "val"

  labels::OpinionRecord record() const { return {clip_id, dns_model_id, scores}; }
  bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
  fs::path base_dir;
  std::vector<ManifestEntry> entries;

  fs::path resolve(const ManifestEntry& e) const {
    fs::path p(e.clip_path);
    return p.is_absolute() ? p : base_dir / p;
  }
};

struct LoadOptions {
  bool check_audio = true;
};

inline ManifestEntry parse_manifest_line(const std::string& line, std::size_t line_no, const std::string& source) {
  const auto where = source + ":" + std::to_string(line_no);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, where + ": " + e.what());
  }
  ManifestEntry e;
  try {
    e.clip_path = j.at("clip_path").get<std::string>();
    e.dns_model_id = j.at("dns_model_id").get<std::string>();
    e.scores = j.at("scores").get<std::vector<int>>();
    e.clip_id = j.contains("clip_id") ? j["clip_id"].get<std::string>() : fs::path(e.clip_path).stem().string();
    if (j.contains("split")) e.split = j["split"].get<std::string>();
  } catch (const nlohmann::json::exception& ex) {
    fail(ErrorKind::ParseError, where + ": " + ex.what());
  }
  if (e.split != "" && e.split != "train" && e.split != "val") {
    fail(ErrorKind::ParseError, where + ": split must be \"train\" or \"val\"");
  }
  try {
    labels::validate_scores(e.scores);
  } catch (const Error& err) {
    fail(ErrorKind::ParseError, where + ": " + err.what());
  }
  return e;
}

inline DatasetManifest load_manifest(const fs::path& path, LoadOptions opts = {}) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open manifest " + path.string());
  DatasetManifest m;
  m.base_dir = path.parent_path();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    m.entries.push_back(parse_manifest_line(line, line_no, path.string()));
  }
  if (opts.check_audio) {
    for (const auto& e : m.entries) {
      const auto info = audio::probe_wav(m.resolve(e));
      if (info.sample_rate_hz != audio::kSampleRateHz) {
        fail(ErrorKind::BadSampleRate, m.resolve(e).string() + " is " + std::to_string(info.sample_rate_hz) + " Hz");
      }
      if (info.channels != 1) fail(ErrorKind::BadAudioFormat, m.resolve(e).string() + " is not mono");
    }
  }
  return m;
}

inline std::string serialize_entry(const ManifestEntry& e) {
  nlohmann::ordered_json j;
  j["clip_id"] = e.clip_id;
  j["clip_path"] = e.clip_path;
  j["dns_model_id"] = e.dns_model_id;
  j["scores"] = e.scores;
  if (!e.split.empty()) j["split"] = e.split;
  return j.dump();
}

inline void save_manifest(const fs::path& path, const DatasetManifest& m) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write manifest " + path.string());
  for (const auto& e : m.entries) out << serialize_entry(e) << '\n';
}

/// Fisher-Yates on the library's own uniform draw, so shuffles do not depend
/// on the standard library's distribution implementation.
template <typename V>
void shuffle(V& v, nn::Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(nn::uniform01(rng) * static_cast<double>(i));
    std::swap(v[i - 1], v[std::min(j, i - 1)]);
  }
}

struct Split {
  std::vector<ManifestEntry> train;
  std::vector<ManifestEntry> validation;
};

/// Stratified by DNS model: each model contributes round(val_fraction * n)
/// of its clips to validation. Entries keep their manifest order.
inline Split split(const DatasetManifest& m, double val_fraction, std::uint64_t seed) {
  if (val_fraction < 0.0 || val_fraction >= 1.0) fail(ErrorKind::InvalidConfig, "val_fraction must be in [0,1)");
  std::map<std::string, std::vector<std::size_t>> by_model;
  for (std::size_t i = 0; i < m.entries.size(); ++i) by_model[m.entries[i].dns_model_id].push_back(i);
  nn::Rng rng(seed);
  std::vector<bool> is_val(m.entries.size(), false);
  for (auto& [id, idx] : by_model) {
    shuffle(idx, rng);
    const auto take = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(idx.size())));
    for (std::size_t k = 0; k < take && k < idx.size(); ++k) is_val[idx[k]] = true;
  }
  Split s;
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    ManifestEntry e = m.entries[i];
    e.split = is_val[i] ? "val" : "train";
    (is_val[i] ? s.validation : s.train).push_back(std::move(e));
  }
  return s;
}

/// Uses split tags when every entry carries one, otherwise a stratified split.
inline Split split_or_tags(const DatasetManifest& m, double val_fraction, std::uint64_t seed) {
  const bool tagged = !m.entries.empty() &&
                      std::all_of(m.entries.begin(), m.entries.end(), [](const auto& e) { return !e.split.empty(); });
  if (!tagged) return split(m, val_fraction, seed);
  Split s;
  for (const auto& e : m.entries) (e.split == "val" ? s.validation : s.train).push_back(e);
  return s;
}

}  // namespace mosq::data
