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

#ifndef ANONEVAL_CORPUS_HPP_
#define ANONEVAL_CORPUS_HPP_

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "anoneval/errors.hpp"

namespace anoneval {

/// One utterance of the corpus inventory: who said it and in which accent.
struct UtteranceMeta {
  std::string utt_id;
  std::string speaker_id;
  std::string accent;

  bool operator==(const UtteranceMeta&) const = default;
};

/// Reserved condition name for unprocessed speech.
inline constexpr const char* kOriginalCondition = "original";

/// Condition name for material anonymised by `system`. The reserved system
/// name "original" maps back to the original condition, which is how a
/// baseline (no anonymisation) run is expressed.
inline std::string anon_condition(const std::string& system) {
  if (system == kOriginalCondition) return kOriginalCondition;
  return "anon:" + system;
}

inline bool valid_id_charset(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s) {
    const bool ok = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') ||
                    (c >= '0' && c <= '9') || c == '_' || c == '.' || c == '-';
    if (!ok) return false;
  }
  return true;
}

/// The utterance inventory. Row order is preserved from the source; the
/// accent and speaker sets are derived, deduplicated and sorted. A speaker
/// carries exactly one accent label.
class CorpusManifest {
 public:
  CorpusManifest() = default;

  static CorpusManifest from_rows(std::vector<UtteranceMeta> rows) {
    CorpusManifest m;
    m.rows_ = std::move(rows);
    m.build_indices();
    return m;
  }

  const std::vector<UtteranceMeta>& utterances() const { return rows_; }

  /// Sorted distinct accents; size() is K.
  const std::vector<std::string>& accent_set() const { return accents_; }
  const std::vector<std::string>& speaker_set() const { return speakers_; }
  std::size_t k_accents() const { return accents_.size(); }

  bool contains(const std::string& utt_id) const {
    return by_utt_.count(utt_id) != 0;
  }

  const UtteranceMeta& at(const std::string& utt_id) const {
    auto it = by_utt_.find(utt_id);
    if (it == by_utt_.end())
      raise(errc::unknown_utterance, "utterance '" + utt_id + "' not in manifest");
    return rows_[it->second];
  }

  const std::string& speaker_of(const std::string& utt_id) const {
    return at(utt_id).speaker_id;
  }
  const std::string& accent_of(const std::string& utt_id) const {
    return at(utt_id).accent;
  }

  const std::string& accent_of_speaker(const std::string& speaker_id) const {
    auto it = accent_by_speaker_.find(speaker_id);
    if (it == accent_by_speaker_.end())
      raise(errc::unknown_utterance, "speaker '" + speaker_id + "' not in manifest");
    return it->second;
  }

  /// Speaker -> sorted utterance ids. Sorted views keep downstream
  /// generation independent of manifest row order.
  const std::map<std::string, std::vector<std::string>>& utts_by_speaker() const {
    return utts_by_speaker_;
  }
  /// Accent -> sorted speaker ids.
  const std::map<std::string, std::vector<std::string>>& speakers_by_accent() const {
    return speakers_by_accent_;
  }
  /// Accent -> sorted utterance ids.
  const std::map<std::string, std::vector<std::string>>& utts_by_accent() const {
    return utts_by_accent_;
  }

 private:
  void build_indices() {
    by_utt_.clear();
    accent_by_speaker_.clear();
    utts_by_speaker_.clear();
    speakers_by_accent_.clear();
    utts_by_accent_.clear();
    accents_.clear();
    speakers_.clear();

    for (std::size_t i = 0; i < rows_.size(); ++i) {
      const auto& row = rows_[i];
      if (!valid_id_charset(row.utt_id) || !valid_id_charset(row.speaker_id) ||
          !valid_id_charset(row.accent)) {
        raise(errc::malformed_manifest,
              "empty field or invalid characters in row for utterance '" +
                  row.utt_id + "' (allowed: [A-Za-z0-9_.-]+)");
      }
      if (!by_utt_.emplace(row.utt_id, i).second)
        raise(errc::duplicate_utterance, "duplicate utt_id '" + row.utt_id + "'");
      auto [it, inserted] = accent_by_speaker_.emplace(row.speaker_id, row.accent);
      if (!inserted && it->second != row.accent) {
        raise(errc::inconsistent_accent,
              "speaker '" + row.speaker_id + "' appears with accents '" +
                  it->second + "' and '" + row.accent + "'");
      }
      utts_by_speaker_[row.speaker_id].push_back(row.utt_id);
      utts_by_accent_[row.accent].push_back(row.utt_id);
    }
    for (auto& [spk, utts] : utts_by_speaker_) {
      std::sort(utts.begin(), utts.end());
      speakers_.push_back(spk);
      speakers_by_accent_[accent_by_speaker_.at(spk)].push_back(spk);
    }
    for (auto& [accent, utts] : utts_by_accent_) {
      std::sort(utts.begin(), utts.end());
      accents_.push_back(accent);
    }
    // map iteration is already sorted; speakers_/accents_ inherit that.
  }

  std::vector<UtteranceMeta> rows_;
  std::vector<std::string> accents_;
  std::vector<std::string> speakers_;
  std::unordered_map<std::string, std::size_t> by_utt_;
  std::unordered_map<std::string, std::string> accent_by_speaker_;
  std::map<std::string, std::vector<std::string>> utts_by_speaker_;
  std::map<std::string, std::vector<std::string>> speakers_by_accent_;
  std::map<std::string, std::vector<std::string>> utts_by_accent_;
};

/// Reads a manifest CSV: header `utt_id,speaker_id,accent`, LF endings,
/// UTF-8, fields limited to [A-Za-z0-9_.-]+ so no quoting is needed.
inline CorpusManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    raise(errc::malformed_manifest, "cannot open manifest '" + path.string() + "'");

  std::string line;
  if (!std::getline(in, line))
    raise(errc::malformed_manifest, "empty manifest '" + path.string() + "'");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "utt_id,speaker_id,accent")
    raise(errc::malformed_manifest,
          "bad header '" + line + "' (expected 'utt_id,speaker_id,accent')");

  std::vector<UtteranceMeta> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string::npos ? std::string::npos
                                            : line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos ||
        line.find(',', c2 + 1) != std::string::npos) {
      raise(errc::malformed_manifest,
            "line " + std::to_string(lineno) + ": expected 3 fields");
    }
    UtteranceMeta row{line.substr(0, c1), line.substr(c1 + 1, c2 - c1 - 1),
                      line.substr(c2 + 1)};
    if (!valid_id_charset(row.utt_id) || !valid_id_charset(row.speaker_id) ||
        !valid_id_charset(row.accent)) {
      raise(errc::malformed_manifest,
            "line " + std::to_string(lineno) +
                ": empty field or invalid characters (allowed: [A-Za-z0-9_.-]+)");
    }
    rows.push_back(std::move(row));
  }
  return CorpusManifest::from_rows(std::move(rows));
}

inline void write_manifest(const CorpusManifest& manifest,
                           const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    raise(errc::write_error, "cannot open '" + path.string() + "' for writing");
  out << "utt_id,speaker_id,accent\n";
  for (const auto& row : manifest.utterances())
    out << row.utt_id << ',' << row.speaker_id << ',' << row.accent << '\n';
  out.flush();
  if (!out) raise(errc::write_error, "failed writing '" + path.string() + "'");
}

}  // namespace anoneval

#endif  // ANONEVAL_CORPUS_HPP_
