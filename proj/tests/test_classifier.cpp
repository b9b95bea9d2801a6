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

#include <catch2/catch_amalgamated.hpp>

#include <bit>
#include <cmath>

#include "anoneval/classifier.hpp"
#include "anoneval/synthlab.hpp"
#include "oracles.hpp"

using namespace anoneval;
using Catch::Matchers::WithinAbs;

namespace {

EmbeddingSet make_set(const std::vector<std::pair<std::string, std::vector<float>>>& recs,
                      std::uint32_t dim, const std::string& condition = "original") {
  EmbeddingSet set;
  set.probe = "p";
  set.condition = condition;
  set.dim = dim;
  for (const auto& [utt, vec] : recs) set.records.emplace(utt, vec);
  return set;
}

}  // namespace

TEST_CASE("centroids of single training points are the points", "[classifier]") {
  std::vector<UtteranceMeta> rows{{"u1", "s1", "A"}, {"u2", "s2", "B"}};
  const CorpusManifest manifest = CorpusManifest::from_rows(rows);
  const EmbeddingSet train =
      make_set({{"u1", {3.0f, 0.0f}}, {"u2", {0.0f, 0.5f}}}, 2);

  const CentroidModel model = fit_centroids(train, manifest);
  REQUIRE(model.labels == std::vector<std::string>{"A", "B"});
  CHECK_THAT(model.centroids[0][0], WithinAbs(1.0, 1e-6));
  CHECK_THAT(model.centroids[0][1], WithinAbs(0.0, 1e-6));
  CHECK_THAT(model.centroids[1][0], WithinAbs(0.0, 1e-6));
  CHECK_THAT(model.centroids[1][1], WithinAbs(1.0, 1e-6));

  // Evaluating the training points reproduces the identity matrix.
  const ConfusionMatrix cm = evaluate_aid(model, train, manifest);
  CHECK(cm.counts[0][0] == 1);
  CHECK(cm.counts[1][1] == 1);
  CHECK(cm.counts[0][1] == 0);
  CHECK(cm.counts[1][0] == 0);
}

TEST_CASE("centroid of (1,0) and (0,1) is the normalized mean", "[classifier]") {
  std::vector<UtteranceMeta> rows{{"u1", "s1", "A"}, {"u2", "s2", "A"},
                                  {"u3", "s3", "B"}};
  const CorpusManifest manifest = CorpusManifest::from_rows(rows);
  const EmbeddingSet train = make_set(
      {{"u1", {1.0f, 0.0f}}, {"u2", {0.0f, 1.0f}}, {"u3", {-1.0f, -1.0f}}}, 2);
  const CentroidModel model = fit_centroids(train, manifest);
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  CHECK_THAT(model.centroids[0][0], WithinAbs(inv_sqrt2, 1e-6));
  CHECK_THAT(model.centroids[0][1], WithinAbs(inv_sqrt2, 1e-6));
}

TEST_CASE("fit error paths", "[classifier]") {
  std::vector<UtteranceMeta> rows{{"u1", "s1", "A"}, {"u2", "s2", "B"}};
  const CorpusManifest manifest = CorpusManifest::from_rows(rows);

  SECTION("accent with no embeddings") {
    const EmbeddingSet train = make_set({{"u1", {1.0f, 0.0f}}}, 2);
    CHECK_THROWS_MATCHES(fit_centroids(train, manifest), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                           return e.code() == errc::empty_accent_class;
                         }));
  }
  SECTION("single accent class") {
    std::vector<UtteranceMeta> one{{"u1", "s1", "A"}, {"u2", "s2", "A"}};
    const CorpusManifest m1 = CorpusManifest::from_rows(one);
    const EmbeddingSet train =
        make_set({{"u1", {1.0f, 0.0f}}, {"u2", {0.0f, 1.0f}}}, 2);
    CHECK_THROWS_MATCHES(fit_centroids(train, m1), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                           return e.code() == errc::insufficient_accents;
                         }));
  }
  SECTION("zero-norm mean") {
    std::vector<UtteranceMeta> rows2{{"u1", "s1", "A"}, {"u2", "s2", "A"},
                                     {"u3", "s3", "B"}};
    const CorpusManifest m2 = CorpusManifest::from_rows(rows2);
    const EmbeddingSet train = make_set(
        {{"u1", {1.0f, 0.0f}}, {"u2", {-1.0f, 0.0f}}, {"u3", {1.0f, 1.0f}}}, 2);
    CHECK_THROWS_MATCHES(fit_centroids(train, m2), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                           return e.code() == errc::degenerate_centroid;
                         }));
  }
}

TEST_CASE("classification is deterministic with lexicographic ties", "[classifier]") {
  std::vector<UtteranceMeta> rows{{"u1", "s1", "B"}, {"u2", "s2", "A"}};
  const CorpusManifest manifest = CorpusManifest::from_rows(rows);
  const EmbeddingSet train =
      make_set({{"u1", {1.0f, 0.0f}}, {"u2", {0.0f, 1.0f}}}, 2);
  const CentroidModel model = fit_centroids(train, manifest);
  // labels sorted: A -> (0,1), B -> (1,0)

  SECTION("a centroid classifies as itself with score 1") {
    const std::vector<float> x{1.0f, 0.0f};
    const Classification c = classify(model, x);
    CHECK(c.label == "B");
    CHECK_THAT(c.scores[model.labels.size() - 1], WithinAbs(1.0, 1e-9));
  }
  SECTION("equidistant input goes to the lexicographically first label") {
    const std::vector<float> x{1.0f, 1.0f};
    const Classification c = classify(model, x);
    CHECK(c.label == "A");
    CHECK(c.scores[0] == c.scores[1]);
  }
  SECTION("scale invariance of decisions") {
    const std::vector<float> x{0.8f, 0.31f};
    const Classification base = classify(model, x);
    for (float scale : {0.001f, 7.0f, 4096.0f}) {
      std::vector<float> scaled{x[0] * scale, x[1] * scale};
      CHECK(classify(model, scaled).label == base.label);
    }
  }
  SECTION("dimension and zero-vector errors") {
    const std::vector<float> bad_dim{1.0f, 2.0f, 3.0f};
    CHECK_THROWS_MATCHES(classify(model, bad_dim), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                           return e.code() == errc::dim_mismatch;
                         }));
    const std::vector<float> zero{0.0f, 0.0f};
    CHECK_THROWS_MATCHES(classify(model, zero), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                           return e.code() == errc::degenerate_embedding;
                         }));
  }
}

TEST_CASE("record order does not change the fitted model", "[classifier]") {
  const SynthCorpus corpus = gen_corpus({.k_accents = 3,
                                         .speakers_per_accent = 4,
                                         .utts_per_speaker = 3,
                                         .dim = 8,
                                         .seed = 21});
  const CentroidModel a = fit_centroids(corpus.embeddings, corpus.manifest);

  // Rebuild the set inserting records in reverse; std::map canonicalizes,
  // and the accumulation order is the map order either way.
  EmbeddingSet reversed;
  reversed.probe = corpus.embeddings.probe;
  reversed.condition = corpus.embeddings.condition;
  reversed.dim = corpus.embeddings.dim;
  for (auto it = corpus.embeddings.records.rbegin();
       it != corpus.embeddings.records.rend(); ++it)
    reversed.records.emplace(it->first, it->second);
  const CentroidModel b = fit_centroids(reversed, corpus.manifest);

  REQUIRE(a.labels == b.labels);
  for (std::size_t i = 0; i < a.centroids.size(); ++i)
    for (std::size_t d = 0; d < a.centroids[i].size(); ++d)
      CHECK(std::bit_cast<std::uint32_t>(a.centroids[i][d]) ==
            std::bit_cast<std::uint32_t>(b.centroids[i][d]));
}

TEST_CASE("held-out accuracy on a separated synthetic corpus", "[classifier]") {
  // sigma_accent >> sigma_speaker + sigma_utt.
  const SynthCorpus corpus = gen_corpus({.k_accents = 6,
                                         .speakers_per_accent = 6,
                                         .utts_per_speaker = 6,
                                         .dim = 24,
                                         .sigma_accent = 1.0,
                                         .sigma_speaker = 0.15,
                                         .sigma_utt = 0.05,
                                         .seed = 9});
  // Split per speaker: utterances u000..u002 train, u003..u005 eval.
  EmbeddingSet train, eval;
  train.probe = eval.probe = corpus.embeddings.probe;
  train.condition = eval.condition = corpus.embeddings.condition;
  train.dim = eval.dim = corpus.embeddings.dim;
  for (const auto& [utt, vec] : corpus.embeddings.records) {
    if (utt.back() <= '2')
      train.records.emplace(utt, vec);
    else
      eval.records.emplace(utt, vec);
  }
  const CentroidModel model = fit_centroids(train, corpus.manifest);
  const ConfusionMatrix cm = evaluate_aid(model, eval, corpus.manifest);
  double correct = 0, total = 0;
  for (std::size_t i = 0; i < cm.labels.size(); ++i) {
    correct += static_cast<double>(cm.counts[i][i]);
    total += static_cast<double>(cm.row_sum(i));
  }
  CHECK(total == static_cast<double>(eval.records.size()));
  CHECK(correct / total >= 0.95);
}

TEST_CASE("evaluate_aid row sums and empty eval set", "[classifier]") {
  const SynthCorpus corpus = gen_corpus({.k_accents = 3,
                                         .speakers_per_accent = 3,
                                         .utts_per_speaker = 2,
                                         .dim = 8,
                                         .seed = 4});
  const CentroidModel model = fit_centroids(corpus.embeddings, corpus.manifest);

  const ConfusionMatrix cm = evaluate_aid(model, corpus.embeddings, corpus.manifest);
  for (std::size_t i = 0; i < cm.labels.size(); ++i)
    CHECK(cm.row_sum(i) ==
          corpus.manifest.utts_by_accent().at(cm.labels[i]).size());

  EmbeddingSet empty;
  empty.probe = corpus.embeddings.probe;
  empty.condition = corpus.embeddings.condition;
  empty.dim = corpus.embeddings.dim;
  const ConfusionMatrix zero = evaluate_aid(model, empty, corpus.manifest);
  for (const auto& row : zero.counts)
    for (const auto c : row) CHECK(c == 0);
}

TEST_CASE("parallel evaluation matches serial", "[classifier]") {
  const SynthCorpus corpus = gen_corpus({.k_accents = 5,
                                         .speakers_per_accent = 8,
                                         .utts_per_speaker = 8,
                                         .dim = 16,
                                         .seed = 31});
  const CentroidModel model = fit_centroids(corpus.embeddings, corpus.manifest);
  const ConfusionMatrix serial = evaluate_aid(model, corpus.embeddings, corpus.manifest, 1);
  const ConfusionMatrix parallel =
      evaluate_aid(model, corpus.embeddings, corpus.manifest, 5);
  CHECK(serial.counts == parallel.counts);
}

TEST_CASE("model save/load round trip", "[classifier]") {
  oracles::TempDir tmp("model");
  const SynthCorpus corpus = gen_corpus({.k_accents = 4,
                                         .speakers_per_accent = 3,
                                         .utts_per_speaker = 2,
                                         .dim = 8,
                                         .seed = 12});
  const CentroidModel model = fit_centroids(corpus.embeddings, corpus.manifest);
  const auto path = tmp.path() / "model.aemb";
  save_model(model, path);
  const CentroidModel loaded = load_model(path);
  CHECK(loaded.labels == model.labels);
  CHECK(loaded.dim == model.dim);
  CHECK(loaded.probe == model.probe);
  CHECK(loaded.training_condition == model.training_condition);
  REQUIRE(loaded.centroids.size() == model.centroids.size());
  for (std::size_t i = 0; i < model.centroids.size(); ++i)
    CHECK(loaded.centroids[i] == model.centroids[i]);

  // Unit norm within 1e-6 survives the float round trip.
  for (const auto& c : loaded.centroids) {
    double norm_sq = 0.0;
    for (float x : c) norm_sq += static_cast<double>(x) * x;
    CHECK_THAT(std::sqrt(norm_sq), WithinAbs(1.0, 1e-6));
  }
}
