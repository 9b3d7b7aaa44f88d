#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "facemanip/error.hpp"
#include "facemanip/layers.hpp"

namespace facemanip {

// FNV-1a, 64-bit. Used for checkpoint and config fingerprints.
inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file for hashing: " + path);
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    h = fnv1a64(buf, static_cast<std::size_t>(in.gcount()), h);
  }
  return h;
}

// Training stages recorded in checkpoints.
enum class Stage : std::uint32_t {
  estimators = 0,
  boundary = 1,
  synthesis = 2,
  proxy = 3,
};

struct CheckpointMeta {
  std::uint32_t format_version = 1;
  Stage stage = Stage::estimators;
  std::uint64_t step = 0;
  std::uint64_t config_hash = 0;
  std::string rng_state;
  std::string extra;  // free-form JSON (final losses, accuracies, ...)
};

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}
inline void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}
inline void write_str(std::ostream& os, const std::string& s) {
  write_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}
inline std::uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}
inline std::string read_str(std::istream& is) {
  std::uint32_t n = read_u32(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  return s;
}

}  // namespace detail

// Single-file container for named parameter tensors plus run metadata.
// Written atomically (tmp file + rename).
template <class S>
void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     const nn::ParamList<S>& params) {
  namespace fs = std::filesystem;
  fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot write checkpoint: " + path);
    os.write("FMCK", 4);
    detail::write_u32(os, meta.format_version);
    detail::write_u32(os, static_cast<std::uint32_t>(meta.stage));
    detail::write_u64(os, meta.step);
    detail::write_u64(os, meta.config_hash);
    detail::write_str(os, meta.rng_state);
    detail::write_str(os, meta.extra);
    detail::write_u32(os, static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
      detail::write_str(os, p.name);
      os.put(static_cast<char>(sizeof(S)));
      const auto& t = p.var.value();
      os.put(static_cast<char>(t.rank()));
      for (std::size_t i = 0; i < t.rank(); ++i) detail::write_u64(os, t.dim(i));
      os.write(reinterpret_cast<const char*>(t.data()),
               static_cast<std::streamsize>(t.numel() * sizeof(S)));
    }
    if (!os) throw DataError("short write while saving checkpoint: " + path);
  }
  fs::rename(tmp, target);
}

// Loads into an existing parameter list; names and shapes must match exactly.
// config_hash is verified against `expect_config_hash` unless force is set.
template <class S>
CheckpointMeta load_checkpoint(const std::string& path, nn::ParamList<S>& params,
                               std::uint64_t expect_config_hash, bool force = false) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DependencyError("missing checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "FMCK", 4) != 0)
    throw DataError("not a checkpoint file: " + path);
  CheckpointMeta meta;
  meta.format_version = detail::read_u32(is);
  if (meta.format_version != 1)
    throw DataError("unsupported checkpoint format version in " + path);
  meta.stage = static_cast<Stage>(detail::read_u32(is));
  meta.step = detail::read_u64(is);
  meta.config_hash = detail::read_u64(is);
  meta.rng_state = detail::read_str(is);
  meta.extra = detail::read_str(is);
  if (!force && meta.config_hash != expect_config_hash)
    throw ConfigError("checkpoint config hash mismatch for " + path +
                      " (use force to override)");

  std::map<std::string, nn::Var<S>> by_name;
  for (auto& p : params) by_name.emplace(p.name, p.var);

  std::uint32_t n = detail::read_u32(is);
  std::size_t matched = 0;
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string name = detail::read_str(is);
    int dtype = is.get();
    if (dtype != static_cast<int>(sizeof(S)))
      throw DataError("checkpoint scalar width mismatch for tensor " + name);
    int rank = is.get();
    std::vector<std::size_t> shape;
    for (int r = 0; r < rank; ++r) shape.push_back(detail::read_u64(is));
    std::size_t numel = nn::Tensor<S>::count(shape);
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw DataError("checkpoint tensor not expected by model: " + name);
    auto& t = it->second.mutable_value();
    if (t.shape() != shape)
      throw DataError("checkpoint tensor shape mismatch: " + name);
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(numel * sizeof(S)));
    ++matched;
  }
  if (!is) throw DataError("truncated checkpoint: " + path);
  if (matched != params.size())
    throw DataError("checkpoint is missing tensors (" + std::to_string(matched) + "/" +
                    std::to_string(params.size()) + ") in " + path);
  return meta;
}

}  // namespace facemanip
