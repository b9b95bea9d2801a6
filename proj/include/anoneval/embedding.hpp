// Copyright 2026 anoneval authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// AEMB is the on-disk embedding container. Layout (all little-endian):
//   magic "AEMB" (4 bytes) | version u16 = 1 | dim u32 | count u64
//   then per record: utt_id length u16 | utt_id bytes | dim * f32
// Records are written sorted by utt_id (byte-wise ascending), making the
// file a pure function of the set's content. A `<stem>.meta.json` sidecar
// carries the probe and condition names.

#ifndef ANONEVAL_EMBEDDING_HPP_
#define ANONEVAL_EMBEDDING_HPP_

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "anoneval/corpus.hpp"
#include "anoneval/errors.hpp"

namespace anoneval {

inline constexpr std::uint16_t kAembVersion = 1;
inline constexpr std::size_t kAembHeaderBytes = 4 + 2 + 4 + 8;

/// All embeddings of one (probe, condition) pair. Keys are utterance ids;
/// std::map keeps them in the canonical byte-wise order.
struct EmbeddingSet {
  std::string probe;
  std::string condition;
  std::uint32_t dim = 0;
  std::map<std::string, std::vector<float>> records;

  const std::vector<float>& vec(const std::string& utt_id) const {
    auto it = records.find(utt_id);
    if (it == records.end())
      raise(errc::missing_embedding, "no embedding for utterance '" + utt_id +
                                         "' in condition '" + condition + "'");
    return it->second;
  }
};

namespace detail {

inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}
inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_f32(std::string& out, float v) {
  put_u32(out, std::bit_cast<std::uint32_t>(v));
}

class ByteReader {
 public:
  ByteReader(const std::string& bytes, const std::string& origin)
      : bytes_(bytes), origin_(origin) {}

  std::uint16_t u16() { return static_cast<std::uint16_t>(raw(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(raw(4)); }
  std::uint64_t u64() { return raw(8); }
  float f32() { return std::bit_cast<float>(static_cast<std::uint32_t>(raw(4))); }

  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool exhausted() const { return pos_ == bytes_.size(); }

 private:
  std::uint64_t raw(std::size_t n) {
    need(n);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < n; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += n;
    return v;
  }
  void need(std::size_t n) {
    if (pos_ + n > bytes_.size())
      raise(errc::format_error, "truncated AEMB file '" + origin_ + "'");
  }

  const std::string& bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

inline std::filesystem::path sidecar_path(std::filesystem::path p) {
  p.replace_extension(".meta.json");
  return p;
}

inline std::string read_file_bytes(const std::filesystem::path& path, errc on_open_fail) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(on_open_fail, "cannot open '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return bytes;
}

inline void write_file_bytes(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(errc::write_error, "cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) raise(errc::write_error, "failed writing '" + path.string() + "'");
}

}  // namespace detail

inline std::string serialize_embeddings(const EmbeddingSet& set) {
  std::string out;
  out.reserve(kAembHeaderBytes + set.records.size() * (16 + 4ull * set.dim));
  out += "AEMB";
  detail::put_u16(out, kAembVersion);
  detail::put_u32(out, set.dim);
  detail::put_u64(out, set.records.size());
  for (const auto& [utt_id, vec] : set.records) {
    if (utt_id.size() > 0xffff)
      raise(errc::format_error, "utt_id longer than 65535 bytes");
    if (vec.size() != set.dim)
      raise(errc::dim_mismatch, "vector for '" + utt_id + "' has length " +
                                    std::to_string(vec.size()) + ", dim is " +
                                    std::to_string(set.dim));
    detail::put_u16(out, static_cast<std::uint16_t>(utt_id.size()));
    out += utt_id;
    for (float x : vec) detail::put_f32(out, x);
  }
  return out;
}

inline void write_embeddings(const EmbeddingSet& set,
                             const std::filesystem::path& path) {
  detail::write_file_bytes(path, serialize_embeddings(set));
  nlohmann::json meta{{"probe", set.probe}, {"condition", set.condition}};
  detail::write_file_bytes(detail::sidecar_path(path), meta.dump(2) + "\n");
}

/// Loads and validates an AEMB file against a manifest: every record must
/// name a known utterance, every component must be finite and no vector may
/// have zero norm (cosine scoring needs the norm).
inline EmbeddingSet load_embeddings(const std::filesystem::path& path,
                                    const CorpusManifest& manifest) {
  const std::string bytes = detail::read_file_bytes(path, errc::format_error);
  detail::ByteReader reader(bytes, path.string());

  if (reader.str(4) != "AEMB")
    raise(errc::format_error, "bad magic in '" + path.string() + "'");
  const std::uint16_t version = reader.u16();
  if (version != kAembVersion)
    raise(errc::format_error, "unsupported AEMB version " + std::to_string(version) +
                                  " in '" + path.string() + "'");
  EmbeddingSet set;
  set.dim = reader.u32();
  if (set.dim == 0)
    raise(errc::format_error, "dim=0 in '" + path.string() + "'");
  const std::uint64_t count = reader.u64();

  for (std::uint64_t r = 0; r < count; ++r) {
    const std::uint16_t len = reader.u16();
    std::string utt_id = reader.str(len);
    if (!manifest.contains(utt_id))
      raise(errc::unknown_utterance,
            "utterance '" + utt_id + "' from '" + path.string() + "' not in manifest");
    std::vector<float> vec(set.dim);
    double norm_sq = 0.0;
    for (auto& x : vec) {
      x = reader.f32();
      if (!std::isfinite(x))
        raise(errc::non_finite_embedding,
              "non-finite component in vector for '" + utt_id + "'");
      norm_sq += static_cast<double>(x) * static_cast<double>(x);
    }
    if (norm_sq == 0.0)
      raise(errc::degenerate_embedding, "zero-norm vector for '" + utt_id + "'");
    if (!set.records.emplace(std::move(utt_id), std::move(vec)).second)
      raise(errc::format_error, "duplicate record in '" + path.string() + "'");
  }
  if (!reader.exhausted())
    raise(errc::format_error, "trailing bytes in '" + path.string() + "'");

  const auto meta_path = detail::sidecar_path(path);
  if (std::filesystem::exists(meta_path)) {
    nlohmann::json meta;
    try {
      meta = nlohmann::json::parse(detail::read_file_bytes(meta_path, errc::format_error));
    } catch (const nlohmann::json::exception& e) {
      raise(errc::format_error, "bad sidecar '" + meta_path.string() + "': " + e.what());
    }
    set.probe = meta.value("probe", "");
    set.condition = meta.value("condition", "");
  }
  return set;
}

}  // namespace anoneval

#endif  // ANONEVAL_EMBEDDING_HPP_
