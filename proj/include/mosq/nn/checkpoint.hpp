#pragma once

// Self-describing checkpoint container (all integers little-endian):
//
//   "MOSQCKPT"            8-byte magic
//   u32 version           currently 1
//   u32 meta_len          followed by meta_len bytes of JSON metadata
//   u32 entry_count
//   entry_count x { u32 name_len, name bytes, u32 ndim, u32 dims[ndim],
//                   f32 values[prod(dims)] }

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mosq/error.hpp"
#include "mosq/nn/tensor.hpp"

namespace mosq::nn {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

inline constexpr char kCheckpointMagic[8] = {'M', 'O', 'S', 'Q', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string name;
  std::vector<std::uint32_t> shape;
  std::vector<float> values;
};

struct Checkpoint {
  nlohmann::ordered_json meta = nlohmann::ordered_json::object();
  std::vector<CheckpointEntry> entries;

  const CheckpointEntry* find(const std::string& name) const {
    for (const auto& e : entries) {
      if (e.name == name) return &e;
    }
    return nullptr;
  }

  template <typename T>
  void add(const std::string& name, const Tensor<T>& t) {
    CheckpointEntry e{name, {}, {}};
    for (auto d : t.shape()) e.shape.push_back(static_cast<std::uint32_t>(d));
    e.values.reserve(t.numel());
    for (T v : t.data()) e.values.push_back(static_cast<float>(v));
    entries.push_back(std::move(e));
  }

  void add(const std::string& name, const std::vector<double>& v) {
    CheckpointEntry e{name, {static_cast<std::uint32_t>(v.size())}, {}};
    e.values.reserve(v.size());
    for (double x : v) e.values.push_back(static_cast<float>(x));
    entries.push_back(std::move(e));
  }

  /// Copies a stored entry into an existing tensor of the same shape.
  template <typename T>
  void load_into(const std::string& name, Tensor<T>& t) const {
    const CheckpointEntry* e = find(name);
    if (!e) fail(ErrorKind::BadCheckpoint, "missing entry " + name);
    Shape s(e->shape.begin(), e->shape.end());
    if (s != t.shape()) {
      fail(ErrorKind::BadCheckpoint, name + " has shape " + shape_str(s) + ", expected " + shape_str(t.shape()));
    }
    auto d = t.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<T>(e->values[i]);
  }
};

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }

inline std::uint32_t get_u32(std::istream& is, const std::string& what) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  if (!is) fail(ErrorKind::BadCheckpoint, "truncated while reading " + what);
  return v;
}

}  // namespace detail

inline void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::Io, "cannot write " + path.string());
  os.write(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put_u32(os, kCheckpointVersion);
  const std::string meta = ck.meta.dump();
  detail::put_u32(os, static_cast<std::uint32_t>(meta.size()));
  os.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  detail::put_u32(os, static_cast<std::uint32_t>(ck.entries.size()));
  for (const auto& e : ck.entries) {
    detail::put_u32(os, static_cast<std::uint32_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    detail::put_u32(os, static_cast<std::uint32_t>(e.shape.size()));
    for (auto d : e.shape) detail::put_u32(os, d);
    os.write(reinterpret_cast<const char*>(e.values.data()), static_cast<std::streamsize>(e.values.size() * 4));
  }
  if (!os) fail(ErrorKind::Io, "write failed for " + path.string());
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::BadCheckpoint, path.string() + " does not exist");
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::Io, "cannot open " + path.string());
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kCheckpointMagic, 8) != 0) fail(ErrorKind::BadCheckpoint, path.string() + ": bad magic");
  if (detail::get_u32(is, "version") != kCheckpointVersion) fail(ErrorKind::BadCheckpoint, "unsupported version");
  Checkpoint ck;
  const auto meta_len = detail::get_u32(is, "metadata length");
  std::string meta(meta_len, '\0');
  is.read(meta.data(), meta_len);
  if (!is) fail(ErrorKind::BadCheckpoint, "truncated metadata");
  try {
    ck.meta = nlohmann::ordered_json::parse(meta);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::BadCheckpoint, std::string("metadata: ") + e.what());
  }
  const auto count = detail::get_u32(is, "entry count");
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    e.name.resize(detail::get_u32(is, "name length"));
    is.read(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    const auto ndim = detail::get_u32(is, "rank");
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      e.shape.push_back(detail::get_u32(is, "dims"));
      n *= e.shape.back();
    }
    e.values.resize(n);
    is.read(reinterpret_cast<char*>(e.values.data()), static_cast<std::streamsize>(n * 4));
    if (!is) fail(ErrorKind::BadCheckpoint, "truncated payload for " + e.name);
    ck.entries.push_back(std::move(e));
  }
  return ck;
}

}  // namespace mosq::nn
