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
// anoneval command line. Exit codes: 0 success, 2 config error, 3 data
// error, 4 tolerance failure (strict mode).

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "anoneval/classifier.hpp"
#include "anoneval/corpus.hpp"
#include "anoneval/embedding.hpp"
#include "anoneval/metrics.hpp"
#include "anoneval/pipeline.hpp"
#include "anoneval/scoring.hpp"
#include "anoneval/synthlab.hpp"
#include "anoneval/trials.hpp"

namespace fs = std::filesystem;
using namespace anoneval;

namespace {

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case errc::config_error:
      return 2;
    case errc::tolerance_failure:
      return 4;
    default:
      return 3;
  }
}

struct GenSynthArgs {
  std::string out_manifest, out_embeddings;
  SynthConfig cfg;
};

void cmd_gen_synth(const GenSynthArgs& args) {
  const SynthCorpus corpus = gen_corpus(args.cfg);
  write_manifest(corpus.manifest, args.out_manifest);
  write_embeddings(corpus.embeddings, args.out_embeddings);
  std::cout << "wrote " << corpus.manifest.utterances().size() << " utterances ("
            << corpus.manifest.k_accents() << " accents, "
            << corpus.manifest.speaker_set().size() << " speakers), dim "
            << args.cfg.dim << "\n";
}

struct AnonymiseArgs {
  std::string manifest, input, output, system;
  std::uint64_t seed = 0;
};

void cmd_anonymise(const AnonymiseArgs& args) {
  const CorpusManifest manifest = load_manifest(args.manifest);
  const EmbeddingSet original = load_embeddings(args.input, manifest);
  const AnonSpec spec = parse_anon_spec(args.system, args.seed);
  const EmbeddingSet anonymised = apply_anonymiser(original, manifest, spec);
  write_embeddings(anonymised, args.output);
  std::cout << "wrote condition '" << anonymised.condition << "' ("
            << anonymised.records.size() << " vectors)\n";
}

struct GenTrialsArgs {
  std::string manifest, task = "sv", kind = "lazy_informed", system, output;
  std::uint32_t ratio = 1;
  std::uint32_t av_quota = 0;
  std::uint64_t seed = 0;
};

void cmd_gen_trials(const GenTrialsArgs& args) {
  const CorpusManifest manifest = load_manifest(args.manifest);
  const Scenario scenario{parse_scenario_kind(args.kind), args.system};
  const TrialList list =
      parse_task(args.task) == Task::sv
          ? gen_sv_trials(manifest, scenario, args.ratio, args.seed)
          : gen_av_trials(manifest, scenario, args.ratio, args.seed, args.av_quota);
  write_trials_csv(list, args.output);
  std::size_t targets = 0;
  for (const auto& t : list.trials)
    if (t.label == TrialLabel::target) ++targets;
  std::cout << "wrote " << list.trials.size() << " trials (" << targets
            << " targets), hash " << trial_list_hash(list) << "\n";
}

struct ScoreArgs {
  std::string manifest, trials, probe, output;
  std::vector<std::string> embeddings;
  unsigned jobs = 1;
};

void cmd_score(const ScoreArgs& args) {
  const CorpusManifest manifest = load_manifest(args.manifest);
  const TrialList list = load_trials_csv(args.trials);
  std::vector<EmbeddingSet> sets;
  sets.reserve(args.embeddings.size());
  for (const auto& path : args.embeddings) sets.push_back(load_embeddings(path, manifest));
  EmbeddingStore store;
  for (const auto& set : sets) store.add(set);
  const ScoreSet scores = score_trials(list, store, args.probe, args.jobs);
  write_scores_csv(scores, args.output);
  std::cout << "wrote " << scores.scores.size() << " scores\n";
}

struct EerArgs {
  std::string trials, scores;
};

void cmd_eer(const EerArgs& args) {
  const TrialList list = load_trials_csv(args.trials);
  const ScoreSet scores = load_scores_csv(args.scores);
  if (!scores.trial_list_ref.empty() && scores.trial_list_ref != trial_list_hash(list))
    raise(errc::format_error, "score file does not reference this trial list");
  const EerResult eer = compute_eer(scores, list);
  std::printf("EER %.2f%% at threshold %.6f (%zu targets, %zu non-targets)\n",
              eer.eer_percent, eer.threshold, eer.n_target, eer.n_nontarget);
}

struct AidArgs {
  std::string manifest, train, eval, output, model_out;
  unsigned jobs = 1;
};

void cmd_aid(const AidArgs& args) {
  const CorpusManifest manifest = load_manifest(args.manifest);
  const EmbeddingSet train = load_embeddings(args.train, manifest);
  const EmbeddingSet eval = load_embeddings(args.eval, manifest);
  const CentroidModel model = fit_centroids(train, manifest);
  if (!args.model_out.empty()) save_model(model, args.model_out);
  const ConfusionMatrix cm = evaluate_aid(model, eval, manifest, args.jobs);
  if (!args.output.empty()) write_confusion_csv(cm, args.output);
  const RecallReport rr = recall_report(cm);
  std::printf("WAR %.2f%% (target %.2f%% for K=%zu)\n", rr.war_percent,
              war_target(cm.labels.size()), cm.labels.size());
  for (const auto& [accent, r] : rr.per_accent_recall)
    std::printf("  %-12s %6.2f%%\n", accent.c_str(), r);
}

struct RunArgs {
  std::string config;
  std::string out_override;
  std::uint64_t seed_override = 0;
  bool has_seed_override = false;
  unsigned jobs = 1;
  bool strict = false;
};

void cmd_run(const RunArgs& args) {
  RunConfig cfg = run_config_from_toml(args.config);
  if (args.has_seed_override) cfg.seed = args.seed_override;
  if (!args.out_override.empty()) cfg.out_dir = args.out_override;
  const EvalReport report = run_pipeline(cfg, args.jobs, args.strict);
  std::cout << "report written to " << (cfg.out_dir / "report.md").string() << " ("
            << report.sv_av_cells.size() << " SV/AV cells, " << report.aid_cells.size()
            << " AID cells)\n";
  for (const auto& w : report.warnings) std::cout << "warning: " << w << "\n";
}

struct ReportArgs {
  std::string out_dir;
};

// Re-derives every reported figure from the serialized artifacts and
// regenerates report.md from report.json.
void cmd_report(const ReportArgs& args) {
  const fs::path dir = args.out_dir;
  const fs::path json_path = dir / "report.json";
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(detail::read_file_bytes(json_path, errc::format_error));
  } catch (const nlohmann::json::exception& e) {
    raise(errc::format_error, "bad report.json: " + std::string(e.what()));
  }
  const EvalReport report = report_from_json(doc);

  std::size_t verified = 0;
  for (const auto& cell : report.sv_av_cells) {
    const TrialList list = load_trials_csv(dir / cell.cell_dir / "trials.csv");
    const ScoreSet scores = load_scores_csv(dir / cell.cell_dir / "scores.csv");
    if (trial_list_hash(list) != cell.trial_list_hash)
      raise(errc::format_error, cell.cell_dir + ": trial list hash mismatch");
    const EerResult eer = compute_eer(scores, list);
    if (std::abs(eer.eer_percent - cell.eer.eer_percent) > 1e-9)
      raise(errc::format_error, cell.cell_dir + ": EER does not match artifacts");
    ++verified;
  }
  for (const auto& cell : report.aid_cells) {
    const ConfusionMatrix cm = load_confusion_csv(dir / cell.cell_dir / "confusion.csv");
    if (std::abs(war(cm) - cell.recalls.war_percent) > 1e-9)
      raise(errc::format_error, cell.cell_dir + ": WAR does not match artifacts");
    ++verified;
  }
  detail::write_text_file(dir / "report.md", report_to_markdown(report));
  std::cout << "verified " << verified << " cells against their artifacts; report.md "
            << "regenerated\n";
}

struct CompareArgs {
  std::string report_a, report_b, output;
};

void cmd_compare(const CompareArgs& args) {
  auto load = [](const std::string& path) {
    try {
      return report_from_json(
          nlohmann::json::parse(detail::read_file_bytes(path, errc::format_error)));
    } catch (const nlohmann::json::exception& e) {
      raise(errc::format_error, "bad report '" + path + "': " + e.what());
    }
  };
  const EvalReport before = load(args.report_a);
  const EvalReport after = load(args.report_b);
  ComparisonSummary summary = compare_systems(before, after);
  summary.before_name = args.report_a;
  summary.after_name = args.report_b;

  for (const auto& m : summary.metrics) {
    std::printf("%-40s %8.2f -> %8.2f  (%+.2f", m.metric.c_str(), m.before, m.after,
                m.abs_delta);
    if (m.has_rel) std::printf(", %+.2f%% relative", m.rel_change_percent);
    std::printf(")\n");
  }
  if (summary.has_avg_relative_recall_change)
    std::printf("average relative per-accent recall change: %+.2f%%\n",
                summary.avg_relative_recall_change);

  if (!args.output.empty()) {
    EvalReport wrapper = before;
    wrapper.comparisons = {summary};
    nlohmann::json j = report_to_json(wrapper)["comparisons"][0];
    detail::write_text_file(args.output, j.dump(2) + "\n");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"anoneval: embedding-space evaluation of voice anonymisation"};
  app.require_subcommand(1);

  GenSynthArgs gs;
  auto* gen_synth = app.add_subcommand(
      "gen-synth", "Generate a synthetic hierarchical-Gaussian corpus");
  gen_synth->add_option("--out-manifest", gs.out_manifest)->required();
  gen_synth->add_option("--out-embeddings", gs.out_embeddings)->required();
  gen_synth->add_option("--accents", gs.cfg.k_accents);
  gen_synth->add_option("--speakers", gs.cfg.speakers_per_accent);
  gen_synth->add_option("--utts", gs.cfg.utts_per_speaker);
  gen_synth->add_option("--dim", gs.cfg.dim);
  gen_synth->add_option("--sigma-accent", gs.cfg.sigma_accent);
  gen_synth->add_option("--sigma-speaker", gs.cfg.sigma_speaker);
  gen_synth->add_option("--sigma-utt", gs.cfg.sigma_utt);
  gen_synth->add_option("--seed", gs.cfg.seed);
  gen_synth->add_option("--probe", gs.cfg.probe);

  AnonymiseArgs an;
  auto* anonymise = app.add_subcommand(
      "anonymise", "Apply an embedding-space anonymiser transform");
  anonymise->add_option("--manifest", an.manifest)->required();
  anonymise->add_option("--input", an.input)->required();
  anonymise->add_option("--output", an.output)->required();
  anonymise
      ->add_option("--system", an.system,
                   "identity | collapse[:sigma] | scramble | shrink:lambda | noise:sigma")
      ->required();
  anonymise->add_option("--seed", an.seed);

  GenTrialsArgs gt;
  auto* gen_trials = app.add_subcommand("gen-trials", "Generate an SV or AV trial list");
  gen_trials->add_option("--manifest", gt.manifest)->required();
  gen_trials->add_option("--task", gt.task, "sv | av");
  gen_trials->add_option("--kind", gt.kind, "ignorant | lazy_informed");
  gen_trials->add_option("--system", gt.system)->required();
  gen_trials->add_option("--ratio", gt.ratio, "non-targets per target");
  gen_trials->add_option("--av-quota", gt.av_quota, "AV targets per accent (0=exhaustive)");
  gen_trials->add_option("--seed", gt.seed);
  gen_trials->add_option("--output", gt.output)->required();

  ScoreArgs sc;
  auto* score = app.add_subcommand("score", "Cosine-score a trial list");
  score->add_option("--manifest", sc.manifest)->required();
  score->add_option("--trials", sc.trials)->required();
  score->add_option("--emb", sc.embeddings, "AEMB file (repeatable)")->required();
  score->add_option("--probe", sc.probe)->required();
  score->add_option("--output", sc.output)->required();
  score->add_option("--jobs", sc.jobs);

  EerArgs ee;
  auto* eer = app.add_subcommand("eer", "Equal error rate of a scored trial list");
  eer->add_option("--trials", ee.trials)->required();
  eer->add_option("--scores", ee.scores)->required();

  AidArgs ai;
  auto* aid = app.add_subcommand("aid", "Accent identification via centroid classifier");
  aid->add_option("--manifest", ai.manifest)->required();
  aid->add_option("--train", ai.train)->required();
  aid->add_option("--eval", ai.eval)->required();
  aid->add_option("--output", ai.output, "confusion matrix CSV");
  aid->add_option("--model-out", ai.model_out);
  aid->add_option("--jobs", ai.jobs);

  RunArgs ru;
  auto* run = app.add_subcommand("run", "Run the full evaluation pipeline");
  run->add_option("--config", ru.config)->required();
  auto* seed_opt = run->add_option("--seed", ru.seed_override, "overrides config seed");
  run->add_option("--out", ru.out_override, "overrides config out_dir");
  run->add_option("--jobs", ru.jobs);
  run->add_flag("--strict", ru.strict, "treat tolerance violations as failures");

  ReportArgs re;
  auto* report = app.add_subcommand(
      "report", "Verify report figures against artifacts and regenerate report.md");
  report->add_option("--out", re.out_dir, "pipeline output directory")->required();

  CompareArgs co;
  auto* compare = app.add_subcommand("compare", "Compare two pipeline reports");
  compare->add_option("report_a", co.report_a)->required();
  compare->add_option("report_b", co.report_b)->required();
  compare->add_option("--output", co.output, "write the comparison summary JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*gen_synth) cmd_gen_synth(gs);
    if (*anonymise) cmd_anonymise(an);
    if (*gen_trials) cmd_gen_trials(gt);
    if (*score) cmd_score(sc);
    if (*eer) cmd_eer(ee);
    if (*aid) cmd_aid(ai);
    if (*run) {
      ru.has_seed_override = seed_opt->count() > 0;
      cmd_run(ru);
    }
    if (*report) cmd_report(re);
    if (*compare) cmd_compare(co);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
