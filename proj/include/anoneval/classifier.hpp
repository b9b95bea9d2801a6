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
// Nearest-class-centroid accent classifier over embeddings: deterministic,
// parameter-free, and sufficient to expose accent structure in embedding
// space. It feeds the confusion matrix behind per-accent recall and WAR.

#ifndef ANONEVAL_CLASSIFIER_HPP_
#define ANONEVAL_CLASSIFIER_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "anoneval/corpus.hpp"
#include "anoneval/embedding.hpp"
#include "anoneval/errors.hpp"
#include "anoneval/metrics.hpp"
#include "anoneval/scoring.hpp"

namespace anoneval {

struct CentroidModel {
  std::string probe;
  std::string training_condition;
  std::uint32_t dim = 0;
  std::vector<std::string> labels;           // sorted accent names
  std::vector<std::vector<float>> centroids; // unit norm, aligned with labels
};

/// Fits one unit-norm centroid per accent as the normalized mean of that
/// accent's training embeddings. Accumulation runs in 64-bit in sorted
/// utterance order, so the fitted model does not depend on record order.
inline CentroidModel fit_centroids(const EmbeddingSet& train,
                                   const CorpusManifest& manifest) {
  if (manifest.k_accents() < 2)
    raise(errc::insufficient_accents,
          "accent classification needs at least 2 classes, got " +
              std::to_string(manifest.k_accents()));
  CentroidModel model;
  model.probe = train.probe;
  model.training_condition = train.condition;
  model.dim = train.dim;
  model.labels = manifest.accent_set();

  std::map<std::string, std::vector<double>> sums;
  std::map<std::string, std::size_t> counts;
  for (const auto& label : model.labels) {
    sums[label].assign(train.dim, 0.0);
    counts[label] = 0;
  }
  for (const auto& [utt_id, vec] : train.records) {
    const std::string& accent = manifest.accent_of(utt_id);
    auto& sum = sums.at(accent);
    for (std::size_t d = 0; d < vec.size(); ++d) sum[d] += vec[d];
    ++counts.at(accent);
  }

  for (const auto& label : model.labels) {
    if (counts.at(label) == 0)
      raise(errc::empty_accent_class,
            "accent '" + label + "' has no training embeddings");
    const auto& sum = sums.at(label);
    const double n = static_cast<double>(counts.at(label));
    double norm_sq = 0.0;
    std::vector<double> mean(train.dim);
    for (std::size_t d = 0; d < mean.size(); ++d) {
      mean[d] = sum[d] / n;
      norm_sq += mean[d] * mean[d];
    }
    if (norm_sq == 0.0)
      raise(errc::degenerate_centroid, "zero-norm mean for accent '" + label + "'");
    const double inv_norm = 1.0 / std::sqrt(norm_sq);
    std::vector<float> centroid(train.dim);
    for (std::size_t d = 0; d < mean.size(); ++d)
      centroid[d] = static_cast<float>(mean[d] * inv_norm);
    model.centroids.push_back(std::move(centroid));
  }
  return model;
}

struct Classification {
  std::string label;
  std::vector<double> scores;  // cosine per class, aligned with model.labels
};

/// Argmax of cosine against the centroids. Ties (exactly equal scores) go
/// to the lexicographically first label; labels are stored sorted, so the
/// first maximum wins.
inline Classification classify(const CentroidModel& model, std::span<const float> x) {
  if (x.size() != model.dim)
    raise(errc::dim_mismatch, "input dim " + std::to_string(x.size()) +
                                  " vs model dim " + std::to_string(model.dim));
  Classification out;
  out.scores.reserve(model.labels.size());
  double best = -2.0;
  std::size_t best_idx = 0;
  for (std::size_t i = 0; i < model.labels.size(); ++i) {
    const double s = cosine(x, model.centroids[i]);
    out.scores.push_back(s);
    if (s > best) {
      best = s;
      best_idx = i;
    }
  }
  out.label = model.labels[best_idx];
  return out;
}

/// Classifies every utterance of `eval` and tallies a confusion matrix with
/// rows indexed by the manifest's true accents.
inline ConfusionMatrix evaluate_aid(const CentroidModel& model, const EmbeddingSet& eval,
                                    const CorpusManifest& manifest, unsigned jobs = 1) {
  std::vector<const std::string*> utt_ids;
  std::vector<const std::vector<float>*> vecs;
  utt_ids.reserve(eval.records.size());
  for (const auto& [utt_id, vec] : eval.records) {
    utt_ids.push_back(&utt_id);
    vecs.push_back(&vec);
  }

  ConfusionMatrix cm = ConfusionMatrix::zero(model.labels);
  const std::size_t n = utt_ids.size();

  auto tally_range = [&](std::size_t lo, std::size_t hi, ConfusionMatrix& local) {
    for (std::size_t i = lo; i < hi; ++i) {
      const std::string& true_accent = manifest.accent_of(*utt_ids[i]);
      const std::size_t row = local.index_of(true_accent);
      const Classification c = classify(model, *vecs[i]);
      const std::size_t col = local.index_of(c.label);
      ++local.counts[row][col];
    }
  };

  if (jobs <= 1 || n < 256) {
    tally_range(0, n, cm);
  } else {
    const std::size_t workers = std::min<std::size_t>(jobs, n);
    std::vector<ConfusionMatrix> locals(workers, ConfusionMatrix::zero(model.labels));
    std::vector<std::thread> threads;
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t lo = w * chunk;
      const std::size_t hi = std::min(n, lo + chunk);
      if (lo >= hi) break;
      threads.emplace_back(tally_range, lo, hi, std::ref(locals[w]));
    }
    for (auto& t : threads) t.join();
    for (const auto& local : locals)
      for (std::size_t i = 0; i < cm.labels.size(); ++i)
        for (std::size_t j = 0; j < cm.labels.size(); ++j)
          cm.counts[i][j] += local.counts[i][j];
  }
  return cm;
}

/// Model files reuse the AEMB container with accent labels as record keys,
/// plus classifier fields in the sidecar.
inline void save_model(const CentroidModel& model, const std::filesystem::path& path) {
  EmbeddingSet as_set;
  as_set.probe = model.probe;
  as_set.condition = model.training_condition;
  as_set.dim = model.dim;
  for (std::size_t i = 0; i < model.labels.size(); ++i)
    as_set.records[model.labels[i]] = model.centroids[i];
  detail::write_file_bytes(path, serialize_embeddings(as_set));

  nlohmann::json meta{{"kind", "centroid_model"},
                      {"probe", model.probe},
                      {"condition", model.training_condition},
                      {"labels", model.labels}};
  detail::write_file_bytes(detail::sidecar_path(path), meta.dump(2) + "\n");
}

inline CentroidModel load_model(const std::filesystem::path& path) {
  const std::string bytes = detail::read_file_bytes(path, errc::format_error);
  detail::ByteReader reader(bytes, path.string());
  if (reader.str(4) != "AEMB")
    raise(errc::format_error, "bad magic in '" + path.string() + "'");
  if (reader.u16() != kAembVersion)
    raise(errc::format_error, "unsupported version in '" + path.string() + "'");

  CentroidModel model;
  model.dim = reader.u32();
  const std::uint64_t count = reader.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint16_t len = reader.u16();
    model.labels.push_back(reader.str(len));
    std::vector<float> centroid(model.dim);
    for (auto& x : centroid) x = reader.f32();
    model.centroids.push_back(std::move(centroid));
  }
  if (!reader.exhausted())
    raise(errc::format_error, "trailing bytes in '" + path.string() + "'");

  const auto meta_path = detail::sidecar_path(path);
  if (std::filesystem::exists(meta_path)) {
    try {
      const nlohmann::json meta =
          nlohmann::json::parse(detail::read_file_bytes(meta_path, errc::format_error));
      model.probe = meta.value("probe", "");
      model.training_condition = meta.value("condition", "");
    } catch (const nlohmann::json::exception& e) {
      raise(errc::format_error, "bad sidecar '" + meta_path.string() + "': " + e.what());
    }
  }
  return model;
}

}  // namespace anoneval

#endif  // ANONEVAL_CLASSIFIER_HPP_
