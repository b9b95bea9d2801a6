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
// Synthetic hierarchical-Gaussian corpora with known accent/speaker
// structure, plus embedding-space anonymiser transforms. Because the
// generative structure is known, these serve as analytic oracles for the
// whole pipeline: collapse removes all structure (verification EERs go to
// chance, AID WAR to 100/K), scramble destroys speaker identity but leaves
// accent structure intact, and shrink interpolates accent separation.

#ifndef ANONEVAL_SYNTHLAB_HPP_
#define ANONEVAL_SYNTHLAB_HPP_

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "anoneval/corpus.hpp"
#include "anoneval/embedding.hpp"
#include "anoneval/errors.hpp"
#include "anoneval/prng.hpp"

namespace anoneval {

struct SynthConfig {
  std::uint32_t k_accents = 13;
  std::uint32_t speakers_per_accent = 10;
  std::uint32_t utts_per_speaker = 10;
  std::uint32_t dim = 32;
  double sigma_accent = 1.0;
  double sigma_speaker = 0.3;
  double sigma_utt = 0.1;
  std::uint64_t seed = 0;
  std::string probe = "synthetic";
};

inline void validate(const SynthConfig& cfg) {
  if (cfg.k_accents == 0 || cfg.speakers_per_accent == 0 || cfg.utts_per_speaker == 0)
    raise(errc::invalid_synth_config, "counts must be positive");
  if (cfg.dim < 2) raise(errc::invalid_synth_config, "dim must be >= 2");
  if (cfg.sigma_accent < 0 || cfg.sigma_speaker < 0 || cfg.sigma_utt < 0)
    raise(errc::invalid_synth_config, "sigmas must be non-negative");
  if (cfg.sigma_accent == 0 && cfg.sigma_speaker == 0 && cfg.sigma_utt == 0)
    raise(errc::invalid_synth_config, "at least one sigma must be positive");
  if (!valid_id_charset(cfg.probe))
    raise(errc::invalid_synth_config, "probe name must match [A-Za-z0-9_.-]+");
}

namespace detail {

inline std::string padded(const char* prefix, std::uint32_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%s%03u", prefix, i);
  return buf;
}

}  // namespace detail

struct SynthCorpus {
  CorpusManifest manifest;
  EmbeddingSet embeddings;  // condition "original"
};

/// embedding(a, s, u) = mu_a + delta_s + eps_u with mu_a ~ N(0, sigma_a^2 I),
/// delta_s ~ N(0, sigma_s^2 I), eps_u ~ N(0, sigma_u^2 I). Every entity draws
/// from its own derived stream, so the corpus is a pure function of the
/// config.
inline SynthCorpus gen_corpus(const SynthConfig& cfg) {
  validate(cfg);

  SynthCorpus corpus;
  corpus.embeddings.probe = cfg.probe;
  corpus.embeddings.condition = kOriginalCondition;
  corpus.embeddings.dim = cfg.dim;

  std::vector<UtteranceMeta> rows;
  rows.reserve(static_cast<std::size_t>(cfg.k_accents) * cfg.speakers_per_accent *
               cfg.utts_per_speaker);

  for (std::uint32_t a = 0; a < cfg.k_accents; ++a) {
    const std::string accent = detail::padded("a", a);
    Rng accent_rng = derive_rng(cfg.seed, {"synth-accent", accent});
    const std::vector<double> mu = accent_rng.gaussian_vector(cfg.dim, cfg.sigma_accent);

    for (std::uint32_t s = 0; s < cfg.speakers_per_accent; ++s) {
      const std::string speaker = accent + detail::padded("s", s);
      Rng speaker_rng = derive_rng(cfg.seed, {"synth-speaker", speaker});
      const std::vector<double> delta =
          speaker_rng.gaussian_vector(cfg.dim, cfg.sigma_speaker);

      for (std::uint32_t u = 0; u < cfg.utts_per_speaker; ++u) {
        const std::string utt = speaker + detail::padded("u", u);
        Rng utt_rng = derive_rng(cfg.seed, {"synth-utt", utt});
        std::vector<float> vec(cfg.dim);
        for (std::uint32_t d = 0; d < cfg.dim; ++d) {
          vec[d] = static_cast<float>(mu[d] + delta[d] +
                                      cfg.sigma_utt * utt_rng.gaussian());
        }
        corpus.embeddings.records.emplace(utt, std::move(vec));
        rows.push_back(UtteranceMeta{utt, speaker, accent});
      }
    }
  }
  corpus.manifest = CorpusManifest::from_rows(std::move(rows));
  return corpus;
}

// ---------------------------------------------------------------------------
// Anonymiser transforms

enum class AnonKind { identity, accent_collapse, speaker_scramble, accent_shrink, add_noise };

/// Embedding-space anonymiser. `lambda` applies to accent_shrink, `sigma`
/// to accent_collapse (replacement noise) and add_noise.
struct AnonSpec {
  AnonKind kind = AnonKind::identity;
  double lambda = 0.0;
  double sigma = 0.0;
  std::uint64_t seed = 0;

  /// Short system name, e.g. "identity", "shrink-0.5"; the output condition
  /// is "anon:<kind_name>".
  std::string kind_name() const {
    char buf[48];
    switch (kind) {
      case AnonKind::identity: return "identity";
      case AnonKind::accent_collapse: return "collapse";
      case AnonKind::speaker_scramble: return "scramble";
      case AnonKind::accent_shrink:
        std::snprintf(buf, sizeof(buf), "shrink-%g", lambda);
        return buf;
      case AnonKind::add_noise:
        std::snprintf(buf, sizeof(buf), "noise-%g", sigma);
        return buf;
    }
    return "unknown";
  }
};

inline void validate(const AnonSpec& spec) {
  if (spec.lambda < 0.0 || spec.lambda > 1.0)
    raise(errc::invalid_synth_config, "shrink lambda must be in [0, 1]");
  if (spec.sigma < 0.0)
    raise(errc::invalid_synth_config, "noise sigma must be non-negative");
}

/// Parses "identity", "collapse", "scramble", "shrink:<lambda>" or
/// "noise:<sigma>" (CLI syntax).
inline AnonSpec parse_anon_spec(const std::string& text, std::uint64_t seed) {
  AnonSpec spec;
  spec.seed = seed;
  if (text == "identity") spec.kind = AnonKind::identity;
  else if (text == "collapse") spec.kind = AnonKind::accent_collapse;
  else if (text == "scramble") spec.kind = AnonKind::speaker_scramble;
  else if (text.rfind("shrink:", 0) == 0) {
    spec.kind = AnonKind::accent_shrink;
    try { spec.lambda = std::stod(text.substr(7)); }
    catch (const std::exception&) { raise(errc::invalid_synth_config, "bad lambda in '" + text + "'"); }
  } else if (text.rfind("collapse:", 0) == 0) {
    spec.kind = AnonKind::accent_collapse;
    try { spec.sigma = std::stod(text.substr(9)); }
    catch (const std::exception&) { raise(errc::invalid_synth_config, "bad sigma in '" + text + "'"); }
  } else if (text.rfind("noise:", 0) == 0) {
    spec.kind = AnonKind::add_noise;
    try { spec.sigma = std::stod(text.substr(6)); }
    catch (const std::exception&) { raise(errc::invalid_synth_config, "bad sigma in '" + text + "'"); }
  } else {
    raise(errc::invalid_synth_config, "unknown anonymiser '" + text + "'");
  }
  validate(spec);
  return spec;
}

namespace detail {

inline std::vector<double> set_mean(const EmbeddingSet& set,
                                    const std::vector<const std::string*>& utts) {
  std::vector<double> mean(set.dim, 0.0);
  for (const auto* utt : utts) {
    const auto& vec = set.records.at(*utt);
    for (std::size_t d = 0; d < mean.size(); ++d) mean[d] += vec[d];
  }
  if (!utts.empty())
    for (auto& x : mean) x /= static_cast<double>(utts.size());
  return mean;
}

inline std::vector<const std::string*> utts_of(const EmbeddingSet& set) {
  std::vector<const std::string*> out;
  out.reserve(set.records.size());
  for (const auto& [utt, vec] : set.records) out.push_back(&utt);
  return out;
}

}  // namespace detail

/// Applies an embedding-space anonymiser to an original-condition set.
/// Collapse and shrink use empirical means, as a real anonymiser has no
/// access to generative parameters.
inline EmbeddingSet apply_anonymiser(const EmbeddingSet& set,
                                     const CorpusManifest& manifest,
                                     const AnonSpec& spec) {
  validate(spec);
  if (set.condition != kOriginalCondition)
    raise(errc::condition_error,
          "anonymiser input must be condition 'original', got '" + set.condition + "'");
  for (const auto& [utt, vec] : set.records) manifest.at(utt);

  EmbeddingSet out;
  out.probe = set.probe;
  out.condition = "anon:" + spec.kind_name();
  out.dim = set.dim;

  switch (spec.kind) {
    case AnonKind::identity: {
      out.records = set.records;
      break;
    }
    case AnonKind::accent_collapse: {
      // Everything becomes the global mean plus fresh utterance noise:
      // no accent and no speaker structure survives.
      const std::vector<double> mean = detail::set_mean(set, detail::utts_of(set));
      for (const auto& [utt, vec] : set.records) {
        Rng rng = derive_rng(spec.seed, {"anon-collapse", utt});
        std::vector<float> replaced(set.dim);
        for (std::size_t d = 0; d < replaced.size(); ++d)
          replaced[d] = static_cast<float>(mean[d] + spec.sigma * rng.gaussian());
        out.records.emplace(utt, std::move(replaced));
      }
      break;
    }
    case AnonKind::speaker_scramble: {
      // Within each accent, swap empirical speaker means along a seeded
      // single-cycle permutation: x' = x - mean(speaker) + mean(other).
      // No fixed points (for >= 2 speakers), so no speaker keeps its own
      // offset; accent means are untouched because offsets only move
      // within the accent.
      std::map<std::string, std::vector<double>> speaker_mean;
      std::map<std::string, const std::vector<double>*> replacement;
      for (const auto& [accent, speakers] : manifest.speakers_by_accent()) {
        for (const auto& spk : speakers) {
          std::vector<const std::string*> utts;
          for (const auto& utt : manifest.utts_by_speaker().at(spk))
            if (set.records.count(utt)) utts.push_back(&manifest.at(utt).utt_id);
          speaker_mean[spk] = detail::set_mean(set, utts);
        }
        Rng rng = derive_rng(spec.seed, {"anon-scramble", accent});
        const auto perm = sattolo_cycle(speakers.size(), rng);
        for (std::size_t i = 0; i < speakers.size(); ++i)
          replacement[speakers[i]] = &speaker_mean.at(speakers[perm[i]]);
      }
      for (const auto& [utt, vec] : set.records) {
        const std::string& spk = manifest.speaker_of(utt);
        const auto& own = speaker_mean.at(spk);
        const auto& other = *replacement.at(spk);
        std::vector<float> moved(set.dim);
        for (std::size_t d = 0; d < moved.size(); ++d)
          moved[d] = static_cast<float>(vec[d] - own[d] + other[d]);
        out.records.emplace(utt, std::move(moved));
      }
      break;
    }
    case AnonKind::accent_shrink: {
      // x' = x - lambda * (accent mean - global mean); lambda 0 is the
      // identity (bitwise, hence the early out), lambda 1 centers every
      // accent on the global mean.
      if (spec.lambda == 0.0) {
        out.records = set.records;
        break;
      }
      const std::vector<double> global = detail::set_mean(set, detail::utts_of(set));
      std::map<std::string, std::vector<double>> accent_mean;
      for (const auto& [accent, utt_ids] : manifest.utts_by_accent()) {
        std::vector<const std::string*> utts;
        for (const auto& utt : utt_ids)
          if (set.records.count(utt)) utts.push_back(&manifest.at(utt).utt_id);
        if (!utts.empty()) accent_mean[accent] = detail::set_mean(set, utts);
      }
      for (const auto& [utt, vec] : set.records) {
        const auto& mu_a = accent_mean.at(manifest.accent_of(utt));
        std::vector<float> moved(set.dim);
        for (std::size_t d = 0; d < moved.size(); ++d)
          moved[d] = static_cast<float>(vec[d] - spec.lambda * (mu_a[d] - global[d]));
        out.records.emplace(utt, std::move(moved));
      }
      break;
    }
    case AnonKind::add_noise: {
      for (const auto& [utt, vec] : set.records) {
        Rng rng = derive_rng(spec.seed, {"anon-noise", utt});
        std::vector<float> noisy(set.dim);
        for (std::size_t d = 0; d < noisy.size(); ++d)
          noisy[d] = static_cast<float>(vec[d] + spec.sigma * rng.gaussian());
        out.records.emplace(utt, std::move(noisy));
      }
      break;
    }
  }
  return out;
}

}  // namespace anoneval

#endif  // ANONEVAL_SYNTHLAB_HPP_
