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
// Test-only oracles and fixtures. The oracles deliberately use brute-force
// counting and exhaustive enumeration, independent of the library's sorted
// cumulative-count and sampling machinery.

#ifndef ANONEVAL_TESTS_ORACLES_HPP_
#define ANONEVAL_TESTS_ORACLES_HPP_

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <unistd.h>
#include <utility>
#include <vector>

#include "anoneval/corpus.hpp"

namespace oracles {

/// Brute-force EER: sweep thresholds at the midpoints of all sorted
/// distinct scores plus one point below the minimum and one above the
/// maximum; count error rates by plain loops; take the FAR/FRR crossing
/// (exact point if one exists, else linear interpolation).
inline double brute_force_eer_percent(const std::vector<double>& targets,
                                      const std::vector<double>& nontargets) {
  std::vector<double> values;
  values.insert(values.end(), targets.begin(), targets.end());
  values.insert(values.end(), nontargets.begin(), nontargets.end());
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());

  std::vector<double> candidates;
  candidates.push_back(values.front() - 1.0);
  for (std::size_t i = 0; i + 1 < values.size(); ++i)
    candidates.push_back(values[i] + (values[i + 1] - values[i]) / 2.0);
  candidates.push_back(values.back() + 1.0);

  auto far_at = [&](double t) {
    std::size_t n = 0;
    for (double s : nontargets)
      if (s >= t) ++n;
    return static_cast<double>(n) / static_cast<double>(nontargets.size());
  };
  auto frr_at = [&](double t) {
    std::size_t n = 0;
    for (double s : targets)
      if (s < t) ++n;
    return static_cast<double>(n) / static_cast<double>(targets.size());
  };

  double prev_far = 0.0, prev_frr = 0.0;
  for (double t : candidates) {
    const double far = far_at(t);
    const double frr = frr_at(t);
    const double diff = far - frr;
    if (diff == 0.0) return 100.0 * far;
    if (diff < 0.0) {
      // Sign change; the first candidate always has diff = +1.
      const double prev_diff = prev_far - prev_frr;
      const double alpha = prev_diff / (prev_diff - diff);
      return 100.0 * (prev_frr + alpha * (frr - prev_frr));
    }
    prev_far = far;
    prev_frr = frr;
  }
  return 100.0;  // not reachable: the last candidate rejects everything
}

/// Exhaustive SV target pairs: ordered (enrol, test), same speaker,
/// different utterance.
inline std::set<std::pair<std::string, std::string>> sv_target_pairs(
    const anoneval::CorpusManifest& manifest) {
  std::set<std::pair<std::string, std::string>> pairs;
  const auto& rows = manifest.utterances();
  for (const auto& e : rows)
    for (const auto& t : rows)
      if (e.utt_id != t.utt_id && e.speaker_id == t.speaker_id)
        pairs.emplace(e.utt_id, t.utt_id);
  return pairs;
}

/// Exhaustive AV target pairs: ordered, same accent, different speaker.
inline std::set<std::pair<std::string, std::string>> av_target_pairs(
    const anoneval::CorpusManifest& manifest) {
  std::set<std::pair<std::string, std::string>> pairs;
  const auto& rows = manifest.utterances();
  for (const auto& e : rows)
    for (const auto& t : rows)
      if (e.utt_id != t.utt_id && e.accent == t.accent &&
          e.speaker_id != t.speaker_id)
        pairs.emplace(e.utt_id, t.utt_id);
  return pairs;
}

// ---------------------------------------------------------------------------
// Fixtures

/// Regular grid manifest: `accents` x `speakers_per_accent` x
/// `utts_per_speaker` with ids A<i>, A<i>S<j>, A<i>S<j>U<k>.
inline anoneval::CorpusManifest grid_manifest(unsigned accents,
                                              unsigned speakers_per_accent,
                                              unsigned utts_per_speaker) {
  std::vector<anoneval::UtteranceMeta> rows;
  for (unsigned a = 0; a < accents; ++a) {
    const std::string accent = "A" + std::to_string(a);
    for (unsigned s = 0; s < speakers_per_accent; ++s) {
      const std::string speaker = accent + "S" + std::to_string(s);
      for (unsigned u = 0; u < utts_per_speaker; ++u)
        rows.push_back({speaker + "U" + std::to_string(u), speaker, accent});
    }
  }
  return anoneval::CorpusManifest::from_rows(std::move(rows));
}

/// Scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<unsigned> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("anoneval-test-" + tag + "-" + std::to_string(::getpid()) + "-" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace oracles

#endif  // ANONEVAL_TESTS_ORACLES_HPP_
