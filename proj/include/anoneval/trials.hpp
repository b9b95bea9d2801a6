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
// Trial construction for speaker verification (SV) and accent verification
// (AV) under the two attacker scenarios:
//   ignorant       enrolment "original" vs test "anon:<system>"
//   lazy_informed  both sides "anon:<system>"
//
// Targets are exhaustive (SV) or per-accent quota samples (AV); non-targets
// are sampled without replacement from per-stratum substreams so the result
// is independent of manifest row order and iteration order. The output is
// canonically sorted by (enrol_utt, test_utt), which makes serialized lists
// byte-identical for equal (manifest content, scenario, ratio, seed).
//
// Two policy choices are baked in and recorded in the sidecar metadata:
// same-utterance pairs are excluded even across conditions (shared content
// would inflate similarity without being a speaker cue), and AV target
// pairs exclude same-speaker pairs (accent verification should not reward
// speaker identity).

#ifndef ANONEVAL_TRIALS_HPP_
#define ANONEVAL_TRIALS_HPP_

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "anoneval/corpus.hpp"
#include "anoneval/errors.hpp"
#include "anoneval/prng.hpp"

namespace anoneval {

enum class Task { sv, av };

inline std::string task_name(Task t) { return t == Task::sv ? "SV" : "AV"; }

inline Task parse_task(const std::string& s) {
  if (s == "SV" || s == "sv") return Task::sv;
  if (s == "AV" || s == "av") return Task::av;
  raise(errc::invalid_argument, "unknown task '" + s + "'");
}

enum class ScenarioKind { ignorant, lazy_informed };

inline std::string scenario_kind_name(ScenarioKind k) {
  return k == ScenarioKind::ignorant ? "ignorant" : "lazy_informed";
}

inline ScenarioKind parse_scenario_kind(const std::string& s) {
  if (s == "ignorant" || s == "I") return ScenarioKind::ignorant;
  if (s == "lazy_informed" || s == "L") return ScenarioKind::lazy_informed;
  raise(errc::invalid_argument, "unknown scenario kind '" + s + "'");
}

/// Attacker scenario: which condition each trial side is drawn from.
struct Scenario {
  ScenarioKind kind = ScenarioKind::lazy_informed;
  std::string system;

  std::string enrol_condition() const {
    return kind == ScenarioKind::ignorant ? std::string(kOriginalCondition)
                                          : anon_condition(system);
  }
  std::string test_condition() const { return anon_condition(system); }

  /// Stable tag for file names and report keys, e.g. "lazy_informed-sysA".
  std::string tag() const { return scenario_kind_name(kind) + "-" + system; }

  bool operator==(const Scenario&) const = default;
};

enum class TrialLabel : std::uint8_t { target, nontarget };

inline std::string label_name(TrialLabel l) {
  return l == TrialLabel::target ? "target" : "nontarget";
}

struct Trial {
  std::string enrol_utt;
  std::string enrol_condition;
  std::string test_utt;
  std::string test_condition;
  TrialLabel label = TrialLabel::target;

  bool operator==(const Trial&) const = default;
};

/// Per-group trial counts, recomputed from scratch by balance_check.
/// Counting is by the enrolment side. max_imbalance is max/min over the
/// task's primary grouping (SV: per-speaker targets, AV: per-accent
/// targets) with every manifest group included, so a group with zero
/// trials yields infinity.
struct BalanceReport {
  std::map<std::string, std::uint64_t> per_speaker_target_counts;
  std::map<std::string, std::uint64_t> per_accent_target_counts;
  std::map<std::string, std::uint64_t> per_accent_nontarget_counts;
  double max_imbalance = 1.0;
};

struct TrialList {
  Task task = Task::sv;
  Scenario scenario;
  std::uint64_t seed = 0;
  std::uint32_t nontarget_per_target = 1;
  std::vector<Trial> trials;
  BalanceReport balance;
};

// ---------------------------------------------------------------------------
// Serialization

inline std::string serialize_trials_csv(const TrialList& list) {
  std::string out = "task,scenario,system,enrol_utt,enrol_cond,test_utt,test_cond,label\n";
  const std::string prefix = task_name(list.task) + "," +
                             scenario_kind_name(list.scenario.kind) + "," +
                             list.scenario.system + ",";
  for (const auto& t : list.trials) {
    out += prefix;
    out += t.enrol_utt;
    out += ',';
    out += t.enrol_condition;
    out += ',';
    out += t.test_utt;
    out += ',';
    out += t.test_condition;
    out += ',';
    out += label_name(t.label);
    out += '\n';
  }
  return out;
}

/// Content hash of the canonical CSV serialization (hex FNV-1a 64).
inline std::string trial_list_hash(const TrialList& list) {
  return hex64(fnv1a64(serialize_trials_csv(list)));
}

inline void write_trials_csv(const TrialList& list, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(errc::write_error, "cannot open '" + path.string() + "' for writing");
  const std::string csv = serialize_trials_csv(list);
  out.write(csv.data(), static_cast<std::streamsize>(csv.size()));
  out.flush();
  if (!out) raise(errc::write_error, "failed writing '" + path.string() + "'");

  nlohmann::json meta{
      {"seed", list.seed},
      {"generator", std::string(kGeneratorName)},
      {"nontarget_per_target", list.nontarget_per_target},
      {"trial_list_hash", trial_list_hash(list)},
      {"policy",
       {{"exclude_same_utterance_pairs", true},
        {"av_targets_exclude_same_speaker", true}}}};
  std::filesystem::path meta_path = path;
  meta_path.replace_extension(".meta.json");
  std::ofstream mo(meta_path, std::ios::binary);
  if (!mo) raise(errc::write_error, "cannot open '" + meta_path.string() + "'");
  mo << meta.dump(2) << "\n";
}

inline TrialList load_trials_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(errc::format_error, "cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line))
    raise(errc::format_error, "empty trial file '" + path.string() + "'");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "task,scenario,system,enrol_utt,enrol_cond,test_utt,test_cond,label")
    raise(errc::format_error, "bad trial CSV header in '" + path.string() + "'");

  TrialList list;
  bool first = true;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const auto comma = line.find(',', start);
      if (comma == std::string::npos) {
        fields.push_back(line.substr(start));
        break;
      }
      fields.push_back(line.substr(start, comma - start));
      start = comma + 1;
    }
    if (fields.size() != 8)
      raise(errc::format_error,
            "line " + std::to_string(lineno) + ": expected 8 fields");
    const Task task = parse_task(fields[0]);
    const Scenario scenario{parse_scenario_kind(fields[1]), fields[2]};
    if (first) {
      list.task = task;
      list.scenario = scenario;
      first = false;
    } else if (task != list.task || !(scenario == list.scenario)) {
      raise(errc::format_error,
            "line " + std::to_string(lineno) + ": mixed task/scenario in one list");
    }
    TrialLabel label;
    if (fields[7] == "target") label = TrialLabel::target;
    else if (fields[7] == "nontarget") label = TrialLabel::nontarget;
    else raise(errc::format_error, "line " + std::to_string(lineno) + ": bad label");
    list.trials.push_back(Trial{fields[3], fields[4], fields[5], fields[6], label});
  }
  return list;
}

// ---------------------------------------------------------------------------
// Balance

inline BalanceReport balance_check(const TrialList& list, const CorpusManifest& manifest) {
  BalanceReport report;
  for (const auto& spk : manifest.speaker_set())
    report.per_speaker_target_counts[spk] = 0;
  for (const auto& accent : manifest.accent_set()) {
    report.per_accent_target_counts[accent] = 0;
    report.per_accent_nontarget_counts[accent] = 0;
  }
  for (const auto& t : list.trials) {
    const auto& meta = manifest.at(t.enrol_utt);
    manifest.at(t.test_utt);  // existence check
    if (t.label == TrialLabel::target) {
      ++report.per_speaker_target_counts[meta.speaker_id];
      ++report.per_accent_target_counts[meta.accent];
    } else {
      ++report.per_accent_nontarget_counts[meta.accent];
    }
  }
  const auto& grouping = list.task == Task::sv ? report.per_speaker_target_counts
                                               : report.per_accent_target_counts;
  std::uint64_t lo = std::numeric_limits<std::uint64_t>::max(), hi = 0;
  for (const auto& [key, n] : grouping) {
    lo = std::min(lo, n);
    hi = std::max(hi, n);
  }
  if (grouping.empty() || hi == 0)
    report.max_imbalance = 1.0;
  else if (lo == 0)
    report.max_imbalance = std::numeric_limits<double>::infinity();
  else
    report.max_imbalance = static_cast<double>(hi) / static_cast<double>(lo);
  return report;
}

// ---------------------------------------------------------------------------
// Generation

namespace detail {

struct PairHash {
  std::size_t operator()(const std::pair<std::size_t, std::size_t>& p) const {
    return p.first * 0x9e3779b97f4a7c15ull + p.second;
  }
};

// Sample `quota` distinct index pairs via bounded rejection against `seen`;
// on exhaustion fall back to a seeded partial shuffle of the leftover pool.
// `draw` proposes one (enrol, test) index pair; `pool` enumerates all of
// them in a deterministic order.
template <typename DrawFn, typename PoolFn>
inline void sample_without_replacement(
    std::size_t quota, Rng& rng, DrawFn draw, PoolFn pool,
    std::unordered_set<std::pair<std::size_t, std::size_t>, PairHash>& seen,
    std::vector<std::pair<std::size_t, std::size_t>>& out) {
  std::size_t produced = 0;
  std::size_t attempts = 0;
  const std::size_t max_attempts = 64 * quota + 256;
  while (produced < quota && attempts < max_attempts) {
    ++attempts;
    const auto pair = draw(rng);
    if (seen.insert(pair).second) {
      out.push_back(pair);
      ++produced;
    }
  }
  if (produced < quota) {
    std::vector<std::pair<std::size_t, std::size_t>> leftovers;
    pool(leftovers);
    std::erase_if(leftovers, [&](const auto& p) { return seen.count(p) != 0; });
    shuffle(leftovers, rng);
    for (const auto& p : leftovers) {
      if (produced == quota) break;
      seen.insert(p);
      out.push_back(p);
      ++produced;
    }
  }
}

inline void canonical_sort(std::vector<Trial>& trials) {
  std::sort(trials.begin(), trials.end(), [](const Trial& a, const Trial& b) {
    if (a.enrol_utt != b.enrol_utt) return a.enrol_utt < b.enrol_utt;
    return a.test_utt < b.test_utt;
  });
}

}  // namespace detail

/// SV trial list. Targets: all ordered same-speaker pairs (e, t), e != t.
/// Non-targets: `nontarget_per_target` per target in total, stratified so
/// each speaker is the enrolment side of an equal share (+-1); the impostor
/// side is drawn uniformly over the other speakers' utterances.
inline TrialList gen_sv_trials(const CorpusManifest& manifest, const Scenario& scenario,
                               std::uint32_t nontarget_per_target, std::uint64_t seed) {
  if (nontarget_per_target == 0)
    raise(errc::invalid_argument, "nontarget_per_target must be positive");
  const auto& by_speaker = manifest.utts_by_speaker();
  if (by_speaker.size() < 2)
    raise(errc::insufficient_speakers,
          "SV needs at least 2 speakers, got " + std::to_string(by_speaker.size()));
  for (const auto& [spk, utts] : by_speaker) {
    if (utts.size() < 2)
      raise(errc::insufficient_utterances,
            "speaker '" + spk + "' has a single utterance");
  }

  const std::string enrol_cond = scenario.enrol_condition();
  const std::string test_cond = scenario.test_condition();

  TrialList list;
  list.task = Task::sv;
  list.scenario = scenario;
  list.seed = seed;
  list.nontarget_per_target = nontarget_per_target;

  std::vector<std::string> speakers;
  speakers.reserve(by_speaker.size());
  for (const auto& [spk, utts] : by_speaker) speakers.push_back(spk);

  // Exhaustive targets.
  for (const auto& spk : speakers) {
    const auto& utts = by_speaker.at(spk);
    for (const auto& e : utts)
      for (const auto& t : utts)
        if (e != t)
          list.trials.push_back(Trial{e, enrol_cond, t, test_cond, TrialLabel::target});
  }
  const std::size_t n_targets = list.trials.size();
  const std::size_t wanted = n_targets * nontarget_per_target;

  // Other-speaker utterance lists, per enrolment speaker.
  const std::size_t n_speakers = speakers.size();
  std::vector<const std::vector<std::string>*> utt_lists(n_speakers);
  std::size_t total_utts = 0;
  for (std::size_t i = 0; i < n_speakers; ++i) {
    utt_lists[i] = &by_speaker.at(speakers[i]);
    total_utts += utt_lists[i]->size();
  }

  const std::size_t base = wanted / n_speakers;
  const std::size_t rem = wanted % n_speakers;
  std::vector<Trial> nontargets;
  std::size_t shortfall = 0;

  auto sample_for_speaker = [&](std::size_t si, std::size_t quota, Rng& rng) {
    const auto& enrol_utts = *utt_lists[si];
    const std::size_t pool_size = enrol_utts.size() * (total_utts - enrol_utts.size());
    const std::size_t effective = std::min(quota, pool_size);
    std::unordered_set<std::pair<std::size_t, std::size_t>, detail::PairHash> seen;
    std::vector<std::pair<std::size_t, std::size_t>> picks;
    auto draw = [&](Rng& r) {
      // Impostor speaker first (uniform over others), then its utterance.
      std::size_t oj = r.below(n_speakers - 1);
      if (oj >= si) ++oj;
      const auto& imp_utts = *utt_lists[oj];
      const std::size_t t_local = r.below(imp_utts.size());
      const std::size_t e_local = r.below(enrol_utts.size());
      // Encode the impostor side as a global key (speaker, utterance).
      return std::make_pair(e_local, oj * (total_utts + 1) + t_local);
    };
    auto pool = [&](std::vector<std::pair<std::size_t, std::size_t>>& out) {
      for (std::size_t e = 0; e < enrol_utts.size(); ++e)
        for (std::size_t oj = 0; oj < n_speakers; ++oj) {
          if (oj == si) continue;
          for (std::size_t t = 0; t < utt_lists[oj]->size(); ++t)
            out.emplace_back(e, oj * (total_utts + 1) + t);
        }
    };
    detail::sample_without_replacement(effective, rng, draw, pool, seen, picks);
    for (const auto& [e_local, key] : picks) {
      const std::size_t oj = key / (total_utts + 1);
      const std::size_t t_local = key % (total_utts + 1);
      nontargets.push_back(Trial{enrol_utts[e_local], enrol_cond,
                                 (*utt_lists[oj])[t_local], test_cond,
                                 TrialLabel::nontarget});
    }
    shortfall += quota - effective;
  };

  for (std::size_t i = 0; i < n_speakers; ++i) {
    const std::size_t quota = base + (i < rem ? 1 : 0);
    if (quota == 0) continue;
    Rng rng = derive_rng(seed, {"sv-nontarget", speakers[i]});
    sample_for_speaker(i, quota, rng);
  }
  // A per-speaker pool can only run dry when the ratio is close to the
  // speaker count; refusing keeps the +-1 stratification exact.
  if (shortfall > 0) {
    raise(errc::insufficient_utterances,
          "cannot satisfy non-target quota: " + std::to_string(shortfall) +
              " trials short of " + std::to_string(wanted));
  }

  list.trials.insert(list.trials.end(), nontargets.begin(), nontargets.end());
  detail::canonical_sort(list.trials);
  list.balance = balance_check(list, manifest);
  return list;
}

/// AV trial list. Targets: same-accent pairs with different speakers,
/// per-accent samples of `targets_per_accent` (0 = exhaustive).
/// Non-targets: different-accent pairs with every unordered accent pair
/// represented within +-1 of every other, enrolment sides alternating
/// within each pair.
inline TrialList gen_av_trials(const CorpusManifest& manifest, const Scenario& scenario,
                               std::uint32_t nontarget_per_target, std::uint64_t seed,
                               std::uint32_t targets_per_accent = 0) {
  if (nontarget_per_target == 0)
    raise(errc::invalid_argument, "nontarget_per_target must be positive");
  const auto& accents = manifest.accent_set();
  if (accents.size() < 2)
    raise(errc::insufficient_accents,
          "AV needs at least 2 accents, got " + std::to_string(accents.size()));
  for (const auto& [accent, spks] : manifest.speakers_by_accent()) {
    if (spks.size() < 2)
      raise(errc::insufficient_speakers_for_accent,
            "accent '" + accent + "' has a single speaker");
  }

  const std::string enrol_cond = scenario.enrol_condition();
  const std::string test_cond = scenario.test_condition();

  TrialList list;
  list.task = Task::av;
  list.scenario = scenario;
  list.seed = seed;
  list.nontarget_per_target = nontarget_per_target;

  // Targets, stratified per accent.
  for (const auto& accent : accents) {
    const auto& utts = manifest.utts_by_accent().at(accent);
    std::vector<std::pair<std::size_t, std::size_t>> pool;
    for (std::size_t e = 0; e < utts.size(); ++e)
      for (std::size_t t = 0; t < utts.size(); ++t) {
        if (e == t) continue;
        if (manifest.speaker_of(utts[e]) == manifest.speaker_of(utts[t])) continue;
        pool.emplace_back(e, t);
      }
    if (targets_per_accent != 0 && targets_per_accent < pool.size()) {
      Rng rng = derive_rng(seed, {"av-target", accent});
      // Partial Fisher-Yates: the first `quota` entries are a uniform
      // sample without replacement.
      for (std::size_t i = 0; i < targets_per_accent; ++i) {
        const std::size_t j = i + rng.below(pool.size() - i);
        std::swap(pool[i], pool[j]);
      }
      pool.resize(targets_per_accent);
    }
    for (const auto& [e, t] : pool)
      list.trials.push_back(
          Trial{utts[e], enrol_cond, utts[t], test_cond, TrialLabel::target});
  }
  const std::size_t n_targets = list.trials.size();
  const std::size_t wanted = n_targets * nontarget_per_target;

  // Non-targets, stratified over unordered accent pairs.
  std::vector<std::pair<std::string, std::string>> accent_pairs;
  for (std::size_t i = 0; i < accents.size(); ++i)
    for (std::size_t j = i + 1; j < accents.size(); ++j)
      accent_pairs.emplace_back(accents[i], accents[j]);

  const std::size_t n_pairs = accent_pairs.size();
  const std::size_t base = wanted / n_pairs;
  const std::size_t rem = wanted % n_pairs;
  std::vector<Trial> nontargets;
  std::size_t shortfall = 0;

  for (std::size_t p = 0; p < n_pairs; ++p) {
    const std::size_t quota = base + (p < rem ? 1 : 0);
    if (quota == 0) continue;
    const auto& [a, b] = accent_pairs[p];
    const auto& utts_a = manifest.utts_by_accent().at(a);
    const auto& utts_b = manifest.utts_by_accent().at(b);
    const std::size_t dir_pool = utts_a.size() * utts_b.size();
    const std::size_t effective = std::min(quota, 2 * dir_pool);
    shortfall += quota - effective;

    Rng rng = derive_rng(seed, {"av-nontarget", a, b});
    // Enrolment sides alternate between the two accents so each accent is
    // the enrolment side of half the pair's trials (+-1, odd quotas break
    // the tie by a seeded coin).
    std::size_t take_ab = effective / 2;
    std::size_t take_ba = effective / 2;
    if (effective % 2 == 1) (rng.below(2) == 0 ? take_ab : take_ba) += 1;
    take_ab = std::min(take_ab, dir_pool);
    take_ba = std::min(take_ba, dir_pool);
    if (take_ab + take_ba < effective) {
      const std::size_t spill = effective - take_ab - take_ba;
      if (take_ab < dir_pool) take_ab += spill;
      else take_ba += spill;
    }

    for (std::size_t dir = 0; dir < 2; ++dir) {
      const std::size_t take = dir == 0 ? take_ab : take_ba;
      if (take == 0) continue;
      const auto& src = dir == 0 ? utts_a : utts_b;
      const auto& dst = dir == 0 ? utts_b : utts_a;
      std::unordered_set<std::pair<std::size_t, std::size_t>, detail::PairHash> seen;
      std::vector<std::pair<std::size_t, std::size_t>> picks;
      auto draw = [&](Rng& r) {
        return std::make_pair(r.below(src.size()), r.below(dst.size()));
      };
      auto pool = [&](std::vector<std::pair<std::size_t, std::size_t>>& out) {
        for (std::size_t e = 0; e < src.size(); ++e)
          for (std::size_t t = 0; t < dst.size(); ++t) out.emplace_back(e, t);
      };
      detail::sample_without_replacement(take, rng, draw, pool, seen, picks);
      for (const auto& [e, t] : picks)
        nontargets.push_back(
            Trial{src[e], enrol_cond, dst[t], test_cond, TrialLabel::nontarget});
    }
  }
  if (shortfall > 0)
    raise(errc::insufficient_utterances,
          "cannot satisfy AV non-target quota: " + std::to_string(shortfall) +
              " trials short of " + std::to_string(wanted));

  list.trials.insert(list.trials.end(), nontargets.begin(), nontargets.end());
  detail::canonical_sort(list.trials);
  list.balance = balance_check(list, manifest);
  return list;
}

}  // namespace anoneval

#endif  // ANONEVAL_TRIALS_HPP_
