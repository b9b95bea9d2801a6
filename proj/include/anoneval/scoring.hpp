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

#ifndef ANONEVAL_SCORING_HPP_
#define ANONEVAL_SCORING_HPP_

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "anoneval/embedding.hpp"
#include "anoneval/errors.hpp"
#include "anoneval/trials.hpp"

namespace anoneval {

/// Cosine similarity with 64-bit accumulation over 32-bit storage, clamped
/// to [-1, 1] against rounding overshoot.
inline double cosine(std::span<const float> u, std::span<const float> v) {
  if (u.size() != v.size())
    raise(errc::dim_mismatch, "cosine over dims " + std::to_string(u.size()) +
                                  " and " + std::to_string(v.size()));
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double a = u[i], b = v[i];
    dot += a * b;
    nu += a * a;
    nv += b * b;
  }
  if (nu == 0.0 || nv == 0.0)
    raise(errc::degenerate_embedding, "cosine over zero-norm vector");
  return std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
}

/// Scores for one trial list, in trial order.
struct ScoreSet {
  std::string trial_list_ref;  // content hash of the scored TrialList
  std::string probe;
  std::vector<double> scores;
};

/// Lookup of embedding sets by (probe, condition). Holds non-owning
/// pointers; the caller keeps the sets alive.
class EmbeddingStore {
 public:
  void add(const EmbeddingSet& set) {
    sets_[{set.probe, set.condition}] = &set;
  }

  const EmbeddingSet* find(const std::string& probe, const std::string& condition) const {
    auto it = sets_.find({probe, condition});
    return it == sets_.end() ? nullptr : it->second;
  }

  const EmbeddingSet& get(const std::string& probe, const std::string& condition) const {
    const EmbeddingSet* set = find(probe, condition);
    if (set == nullptr)
      raise(errc::missing_embedding,
            "no embedding set for probe '" + probe + "', condition '" + condition + "'");
    return *set;
  }

 private:
  std::map<std::pair<std::string, std::string>, const EmbeddingSet*> sets_;
};

/// Scores every trial as cosine(enrol embedding, test embedding). Trials
/// are independent, so any worker count gives bitwise identical output.
inline ScoreSet score_trials(const TrialList& list, const EmbeddingStore& store,
                             const std::string& probe, unsigned jobs = 1) {
  struct Resolved {
    const std::vector<float>* enrol;
    const std::vector<float>* test;
  };
  std::vector<Resolved> resolved(list.trials.size());

  // Resolve everything up front so errors surface with context before any
  // parallel work starts.
  for (std::size_t i = 0; i < list.trials.size(); ++i) {
    const Trial& t = list.trials[i];
    const EmbeddingSet& enrol_set = store.get(probe, t.enrol_condition);
    const EmbeddingSet& test_set = store.get(probe, t.test_condition);
    resolved[i].enrol = &enrol_set.vec(t.enrol_utt);
    resolved[i].test = &test_set.vec(t.test_utt);
    if (enrol_set.dim != test_set.dim)
      raise(errc::dim_mismatch,
            "probe '" + probe + "': dim " + std::to_string(enrol_set.dim) + " vs " +
                std::to_string(test_set.dim) + " across conditions");
  }

  ScoreSet out;
  out.trial_list_ref = trial_list_hash(list);
  out.probe = probe;
  out.scores.resize(list.trials.size());

  auto run_range = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i)
      out.scores[i] = cosine(*resolved[i].enrol, *resolved[i].test);
  };

  const std::size_t n = list.trials.size();
  if (jobs <= 1 || n < 2048) {
    run_range(0, n);
  } else {
    const std::size_t workers = std::min<std::size_t>(jobs, n);
    std::vector<std::thread> threads;
    threads.reserve(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t lo = w * chunk;
      const std::size_t hi = std::min(n, lo + chunk);
      if (lo >= hi) break;
      threads.emplace_back(run_range, lo, hi);
    }
    for (auto& t : threads) t.join();
  }
  return out;
}

inline std::string serialize_scores_csv(const ScoreSet& set) {
  std::string out = "trial_index,score\n";
  char buf[64];
  for (std::size_t i = 0; i < set.scores.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.9g\n", i, set.scores[i]);
    out += buf;
  }
  return out;
}

inline void write_scores_csv(const ScoreSet& set, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(errc::write_error, "cannot open '" + path.string() + "' for writing");
  const std::string csv = serialize_scores_csv(set);
  out.write(csv.data(), static_cast<std::streamsize>(csv.size()));
  out.flush();
  if (!out) raise(errc::write_error, "failed writing '" + path.string() + "'");

  nlohmann::json meta{{"trial_list_ref", set.trial_list_ref}, {"probe", set.probe}};
  std::filesystem::path meta_path = path;
  meta_path.replace_extension(".meta.json");
  std::ofstream mo(meta_path, std::ios::binary);
  if (!mo) raise(errc::write_error, "cannot open '" + meta_path.string() + "'");
  mo << meta.dump(2) << "\n";
}

inline ScoreSet load_scores_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(errc::format_error, "cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line))
    raise(errc::format_error, "empty score file '" + path.string() + "'");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "trial_index,score")
    raise(errc::format_error, "bad score CSV header in '" + path.string() + "'");

  ScoreSet set;
  std::size_t expected = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      raise(errc::format_error, "bad score row '" + line + "'");
    std::size_t idx = 0;
    double score = 0.0;
    try {
      idx = std::stoull(line.substr(0, comma));
      score = std::stod(line.substr(comma + 1));
    } catch (const std::exception&) {
      raise(errc::format_error, "bad score row '" + line + "'");
    }
    if (idx != expected)
      raise(errc::format_error, "non-contiguous trial_index in '" + path.string() + "'");
    if (!std::isfinite(score))
      raise(errc::format_error, "non-finite score in '" + path.string() + "'");
    set.scores.push_back(score);
    ++expected;
  }

  std::filesystem::path meta_path = path;
  meta_path.replace_extension(".meta.json");
  if (std::filesystem::exists(meta_path)) {
    std::ifstream mi(meta_path, std::ios::binary);
    try {
      nlohmann::json meta = nlohmann::json::parse(mi);
      set.trial_list_ref = meta.value("trial_list_ref", "");
      set.probe = meta.value("probe", "");
    } catch (const nlohmann::json::exception& e) {
      raise(errc::format_error, "bad sidecar '" + meta_path.string() + "': " + e.what());
    }
  }
  return set;
}

}  // namespace anoneval

#endif  // ANONEVAL_SCORING_HPP_
