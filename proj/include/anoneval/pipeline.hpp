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
// End-to-end orchestration: for every requested (task, probe, scenario)
// cell, generate trials, score, compute metrics, and emit CSV/JSON
// artifacts plus a Markdown summary. Runs are deterministic for a fixed
// config: no timestamps enter any artifact, and the provenance hash covers
// the semantic config fields and input file contents (not output paths).
// Cell outputs are staged and promoted on success; on failure the partial
// outputs move to `<out>/quarantine`.

#ifndef ANONEVAL_PIPELINE_HPP_
#define ANONEVAL_PIPELINE_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "anoneval/classifier.hpp"
#include "anoneval/corpus.hpp"
#include "anoneval/embedding.hpp"
#include "anoneval/errors.hpp"
#include "anoneval/metrics.hpp"
#include "anoneval/prng.hpp"
#include "anoneval/scoring.hpp"
#include "anoneval/toml_lite.hpp"
#include "anoneval/trials.hpp"

namespace anoneval {

inline constexpr std::string_view kToolVersion = "0.1.0";
inline constexpr std::string_view kEerMethod =
    "grouped-tie operating points, linear interpolation at the FAR/FRR crossing";

// ---------------------------------------------------------------------------
// Run configuration

struct EmbeddingEntry {
  std::string probe;
  std::string condition;
  std::filesystem::path path;
};

struct ComparisonCfg {
  std::string before;
  std::string after;
};

struct RunConfig {
  std::filesystem::path manifest_path;
  std::string corpus_name = "corpus";
  std::vector<EmbeddingEntry> embeddings;
  std::vector<std::string> tasks;           // subset of {"SV", "AV", "AID"}
  std::vector<std::string> probes;
  std::vector<Scenario> scenarios;          // SV/AV cells
  std::vector<std::string> aid_systems;     // defaults to "original" + scenario systems
  std::string aid_train_condition = kOriginalCondition;
  std::uint64_t seed = 0;
  std::uint32_t nontarget_per_target = 1;
  std::uint32_t av_targets_per_accent = 0;  // 0 = exhaustive
  std::filesystem::path out_dir = "out";
  std::vector<ComparisonCfg> comparisons;
  double balance_max_imbalance = 0.0;       // 0 disables the bound
};

namespace detail {

inline std::string json_string(const nlohmann::json& j, const std::string& key,
                               const std::string& fallback, bool required = false) {
  if (!j.contains(key)) {
    if (required) raise(errc::config_error, "config: missing key '" + key + "'");
    return fallback;
  }
  if (!j.at(key).is_string())
    raise(errc::config_error, "config: '" + key + "' must be a string");
  return j.at(key).get<std::string>();
}

inline std::vector<std::string> json_string_list(const nlohmann::json& j,
                                                 const std::string& key) {
  std::vector<std::string> out;
  if (!j.contains(key)) return out;
  if (!j.at(key).is_array())
    raise(errc::config_error, "config: '" + key + "' must be an array");
  for (const auto& item : j.at(key)) {
    if (!item.is_string())
      raise(errc::config_error, "config: '" + key + "' must contain strings");
    out.push_back(item.get<std::string>());
  }
  return out;
}

}  // namespace detail

inline RunConfig run_config_from_toml(const std::filesystem::path& path) {
  const nlohmann::json doc = toml_lite::parse_file(path);
  const std::filesystem::path base = path.has_parent_path()
                                         ? path.parent_path()
                                         : std::filesystem::path(".");

  RunConfig cfg;
  cfg.manifest_path = base / detail::json_string(doc, "corpus", "", /*required=*/true);
  cfg.corpus_name = detail::json_string(doc, "corpus_name", "corpus");
  cfg.tasks = detail::json_string_list(doc, "tasks");
  cfg.probes = detail::json_string_list(doc, "probes");
  cfg.aid_systems = detail::json_string_list(doc, "aid_systems");
  cfg.aid_train_condition =
      detail::json_string(doc, "aid_train_condition", kOriginalCondition);
  if (doc.contains("seed")) cfg.seed = doc.at("seed").get<std::uint64_t>();
  if (doc.contains("out_dir"))
    cfg.out_dir = base / detail::json_string(doc, "out_dir", "out");
  if (doc.contains("nontarget_per_target"))
    cfg.nontarget_per_target = doc.at("nontarget_per_target").get<std::uint32_t>();
  if (doc.contains("av_targets_per_accent"))
    cfg.av_targets_per_accent = doc.at("av_targets_per_accent").get<std::uint32_t>();
  if (doc.contains("balance_max_imbalance"))
    cfg.balance_max_imbalance = doc.at("balance_max_imbalance").get<double>();

  if (doc.contains("scenarios")) {
    for (const auto& s : doc.at("scenarios")) {
      Scenario scenario;
      scenario.kind = parse_scenario_kind(
          detail::json_string(s, "kind", "", /*required=*/true));
      scenario.system = detail::json_string(s, "system", "", /*required=*/true);
      cfg.scenarios.push_back(scenario);
    }
  }
  if (doc.contains("embeddings")) {
    for (const auto& e : doc.at("embeddings")) {
      EmbeddingEntry entry;
      entry.probe = detail::json_string(e, "probe", "", /*required=*/true);
      entry.condition = detail::json_string(e, "condition", "", /*required=*/true);
      entry.path = base / detail::json_string(e, "path", "", /*required=*/true);
      cfg.embeddings.push_back(entry);
    }
  }
  if (doc.contains("comparisons")) {
    for (const auto& c : doc.at("comparisons")) {
      cfg.comparisons.push_back(
          ComparisonCfg{detail::json_string(c, "before", "", true),
                        detail::json_string(c, "after", "", true)});
    }
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Report model

struct SvAvCell {
  Task task = Task::sv;
  std::string probe;
  Scenario scenario;
  EerResult eer;
  std::string trial_list_hash;
  BalanceReport balance;
  std::string cell_dir;  // relative to the output directory
};

struct AidCell {
  std::string probe;
  std::string system;
  std::string condition;
  RecallReport recalls;
  FairnessReport fairness;
  double war_target_percent = 0.0;
  ConfusionMatrix cm;
  std::string cell_dir;
};

struct MetricDelta {
  std::string metric;
  double before = 0.0;
  double after = 0.0;
  double abs_delta = 0.0;
  double rel_change_percent = 0.0;
  bool has_rel = false;  // false when the baseline is zero
};

struct ComparisonSummary {
  std::string before_name;
  std::string after_name;
  std::vector<MetricDelta> metrics;
  std::string aid_probe;  // probe behind the per-accent deltas, if any
  std::map<std::string, double> aid_recall_delta_points;
  double avg_relative_recall_change = 0.0;
  bool has_avg_relative_recall_change = false;
};

struct EvalReport {
  std::string tool_version{kToolVersion};
  std::string generator{kGeneratorName};
  std::string eer_method{kEerMethod};
  std::string corpus_name;
  std::string manifest_hash;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::size_t k_accents = 0;
  std::size_t n_utterances = 0;
  std::size_t n_speakers = 0;
  std::vector<std::string> tasks;
  std::vector<SvAvCell> sv_av_cells;
  std::vector<AidCell> aid_cells;
  std::vector<ComparisonSummary> comparisons;
  std::vector<std::string> warnings;
};

// ---------------------------------------------------------------------------
// Comparison

/// Keeps only the cells belonging to one system; used to compare systems
/// evaluated within a single run.
inline EvalReport filter_by_system(const EvalReport& report, const std::string& system) {
  EvalReport out = report;
  out.sv_av_cells.clear();
  out.aid_cells.clear();
  out.comparisons.clear();
  for (const auto& cell : report.sv_av_cells)
    if (cell.scenario.system == system) out.sv_av_cells.push_back(cell);
  for (const auto& cell : report.aid_cells)
    if (cell.system == system) out.aid_cells.push_back(cell);
  return out;
}

namespace detail {
inline const std::string& system_of(const SvAvCell& c) { return c.scenario.system; }
inline const std::string& system_of(const AidCell& c) { return c.system; }
}  // namespace detail

/// Per-metric deltas between two reports over the same corpus and task set.
/// Cells are matched on (task, probe, scenario kind) for SV/AV and on probe
/// for AID, so the two reports may evaluate different systems.
inline ComparisonSummary compare_systems(const EvalReport& before, const EvalReport& after) {
  if (before.manifest_hash != after.manifest_hash)
    raise(errc::incomparable_reports, "different corpora (manifest hash mismatch)");
  if (before.k_accents != after.k_accents)
    raise(errc::incomparable_reports, "different accent class counts");
  if (before.tasks != after.tasks)
    raise(errc::incomparable_reports, "different task sets");

  // When a report evaluates several systems under the same key, the
  // original-condition baseline is dropped first; anything still ambiguous
  // is rejected.
  auto disambiguate = [](auto& index, const std::string& what) {
    for (auto& [key, cells] : index) {
      if (cells.size() > 1) {
        std::erase_if(cells, [](const auto* c) {
          return detail::system_of(*c) == kOriginalCondition;
        });
      }
      if (cells.size() != 1)
        raise(errc::incomparable_reports,
              "ambiguous " + what + " cells for " + key + "; filter by system first");
    }
  };
  auto index_sv_av = [&](const EvalReport& r) {
    std::map<std::string, std::vector<const SvAvCell*>> index;
    for (const auto& cell : r.sv_av_cells)
      index[task_name(cell.task) + "|" + cell.probe + "|" +
            scenario_kind_name(cell.scenario.kind)]
          .push_back(&cell);
    disambiguate(index, "SV/AV");
    return index;
  };
  auto index_aid = [&](const EvalReport& r) {
    std::map<std::string, std::vector<const AidCell*>> index;
    for (const auto& cell : r.aid_cells) index[cell.probe].push_back(&cell);
    disambiguate(index, "AID");
    return index;
  };

  ComparisonSummary summary;
  auto add_metric = [&](const std::string& name, double b, double a) {
    MetricDelta d;
    d.metric = name;
    d.before = b;
    d.after = a;
    d.abs_delta = a - b;
    if (b != 0.0) {
      d.rel_change_percent = relative_change(b, a);
      d.has_rel = true;
    }
    summary.metrics.push_back(d);
  };

  const auto before_sv_av = index_sv_av(before);
  const auto after_sv_av = index_sv_av(after);
  for (const auto& [key, bcells] : before_sv_av) {
    const auto it = after_sv_av.find(key);
    if (it == after_sv_av.end()) continue;
    const SvAvCell* bcell = bcells.front();
    add_metric(task_name(bcell->task) + " EER % (" + bcell->probe + ", " +
                   scenario_kind_name(bcell->scenario.kind) + ")",
               bcell->eer.eer_percent, it->second.front()->eer.eer_percent);
  }

  const auto before_aid = index_aid(before);
  const auto after_aid = index_aid(after);
  for (const auto& [probe, bcells] : before_aid) {
    const auto it = after_aid.find(probe);
    if (it == after_aid.end()) continue;
    const AidCell* bcell = bcells.front();
    const AidCell& acell = *it->second.front();
    add_metric("AID WAR % (" + probe + ")", bcell->recalls.war_percent,
               acell.recalls.war_percent);
    if (summary.aid_probe.empty()) {
      summary.aid_probe = probe;
      double rel_sum = 0.0;
      std::size_t rel_n = 0;
      for (const auto& [accent, r_before] : bcell->recalls.per_accent_recall) {
        const auto ra = acell.recalls.per_accent_recall.find(accent);
        if (ra == acell.recalls.per_accent_recall.end()) continue;
        summary.aid_recall_delta_points[accent] = ra->second - r_before;
        if (r_before != 0.0) {
          rel_sum += relative_change(r_before, ra->second);
          ++rel_n;
        }
      }
      if (rel_n > 0) {
        summary.avg_relative_recall_change = rel_sum / static_cast<double>(rel_n);
        summary.has_avg_relative_recall_change = true;
      }
    }
  }
  return summary;
}

// ---------------------------------------------------------------------------
// JSON serialization

namespace detail {

inline nlohmann::json to_json(const BalanceReport& b) {
  return {{"per_speaker_target_counts", b.per_speaker_target_counts},
          {"per_accent_target_counts", b.per_accent_target_counts},
          {"per_accent_nontarget_counts", b.per_accent_nontarget_counts},
          {"max_imbalance", std::isinf(b.max_imbalance) ? -1.0 : b.max_imbalance}};
}

inline BalanceReport balance_from_json(const nlohmann::json& j) {
  BalanceReport b;
  b.per_speaker_target_counts =
      j.at("per_speaker_target_counts").get<std::map<std::string, std::uint64_t>>();
  b.per_accent_target_counts =
      j.at("per_accent_target_counts").get<std::map<std::string, std::uint64_t>>();
  b.per_accent_nontarget_counts =
      j.at("per_accent_nontarget_counts").get<std::map<std::string, std::uint64_t>>();
  const double m = j.at("max_imbalance").get<double>();
  b.max_imbalance = m < 0 ? std::numeric_limits<double>::infinity() : m;
  return b;
}

inline nlohmann::json to_json(const ConfusionMatrix& cm) {
  return {{"labels", cm.labels}, {"counts", cm.counts}};
}

inline ConfusionMatrix confusion_from_json(const nlohmann::json& j) {
  ConfusionMatrix cm;
  cm.labels = j.at("labels").get<std::vector<std::string>>();
  cm.counts = j.at("counts").get<std::vector<std::vector<std::uint64_t>>>();
  return cm;
}

}  // namespace detail

inline nlohmann::json report_to_json(const EvalReport& report) {
  nlohmann::json j;
  j["provenance"] = {
      {"tool_version", report.tool_version},
      {"generator", report.generator},
      {"eer_method", report.eer_method},
      {"seed", report.seed},
      {"config_hash", report.config_hash},
      {"manifest_hash", report.manifest_hash},
      {"policy",
       {{"exclude_same_utterance_pairs", true},
        {"av_targets_exclude_same_speaker", true},
        {"relative_change_definition", "100*(after-before)/before at full precision"}}}};
  j["corpus"] = {{"name", report.corpus_name},
                 {"k_accents", report.k_accents},
                 {"n_utterances", report.n_utterances},
                 {"n_speakers", report.n_speakers}};
  j["tasks"] = report.tasks;
  j["warnings"] = report.warnings;

  j["sv_av_cells"] = nlohmann::json::array();
  for (const auto& cell : report.sv_av_cells) {
    j["sv_av_cells"].push_back(
        {{"task", task_name(cell.task)},
         {"probe", cell.probe},
         {"scenario",
          {{"kind", scenario_kind_name(cell.scenario.kind)},
           {"system", cell.scenario.system}}},
         {"eer_percent", cell.eer.eer_percent},
         {"threshold", cell.eer.threshold},
         {"n_target", cell.eer.n_target},
         {"n_nontarget", cell.eer.n_nontarget},
         {"trial_list_hash", cell.trial_list_hash},
         {"balance", detail::to_json(cell.balance)},
         {"cell_dir", cell.cell_dir}});
  }
  j["aid_cells"] = nlohmann::json::array();
  for (const auto& cell : report.aid_cells) {
    j["aid_cells"].push_back({{"probe", cell.probe},
                              {"system", cell.system},
                              {"condition", cell.condition},
                              {"war_percent", cell.recalls.war_percent},
                              {"per_accent_recall", cell.recalls.per_accent_recall},
                              {"n_per_accent", cell.recalls.n_per_accent},
                              {"war_target_percent", cell.war_target_percent},
                              {"fairness",
                               {{"min_recall", cell.fairness.min_recall},
                                {"max_recall", cell.fairness.max_recall},
                                {"recall_range", cell.fairness.recall_range},
                                {"recall_stddev", cell.fairness.recall_stddev},
                                {"target_gap", cell.fairness.target_gap}}},
                              {"confusion", detail::to_json(cell.cm)},
                              {"cell_dir", cell.cell_dir}});
  }
  j["comparisons"] = nlohmann::json::array();
  for (const auto& cmp : report.comparisons) {
    nlohmann::json metrics = nlohmann::json::array();
    for (const auto& m : cmp.metrics) {
      nlohmann::json jm{{"metric", m.metric},
                        {"before", m.before},
                        {"after", m.after},
                        {"abs_delta", m.abs_delta}};
      if (m.has_rel) jm["rel_change_percent"] = m.rel_change_percent;
      metrics.push_back(jm);
    }
    nlohmann::json jc{{"before", cmp.before_name},
                      {"after", cmp.after_name},
                      {"metrics", metrics},
                      {"aid_probe", cmp.aid_probe},
                      {"aid_recall_delta_points", cmp.aid_recall_delta_points}};
    if (cmp.has_avg_relative_recall_change)
      jc["avg_relative_recall_change"] = cmp.avg_relative_recall_change;
    j["comparisons"].push_back(jc);
  }
  return j;
}

inline EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport report;
  const auto& prov = j.at("provenance");
  report.tool_version = prov.at("tool_version").get<std::string>();
  report.generator = prov.at("generator").get<std::string>();
  report.eer_method = prov.at("eer_method").get<std::string>();
  report.seed = prov.at("seed").get<std::uint64_t>();
  report.config_hash = prov.at("config_hash").get<std::string>();
  report.manifest_hash = prov.at("manifest_hash").get<std::string>();
  const auto& corpus = j.at("corpus");
  report.corpus_name = corpus.at("name").get<std::string>();
  report.k_accents = corpus.at("k_accents").get<std::size_t>();
  report.n_utterances = corpus.at("n_utterances").get<std::size_t>();
  report.n_speakers = corpus.at("n_speakers").get<std::size_t>();
  report.tasks = j.at("tasks").get<std::vector<std::string>>();
  report.warnings = j.at("warnings").get<std::vector<std::string>>();

  for (const auto& c : j.at("sv_av_cells")) {
    SvAvCell cell;
    cell.task = parse_task(c.at("task").get<std::string>());
    cell.probe = c.at("probe").get<std::string>();
    cell.scenario.kind =
        parse_scenario_kind(c.at("scenario").at("kind").get<std::string>());
    cell.scenario.system = c.at("scenario").at("system").get<std::string>();
    cell.eer.eer_percent = c.at("eer_percent").get<double>();
    cell.eer.threshold = c.at("threshold").get<double>();
    cell.eer.n_target = c.at("n_target").get<std::size_t>();
    cell.eer.n_nontarget = c.at("n_nontarget").get<std::size_t>();
    cell.trial_list_hash = c.at("trial_list_hash").get<std::string>();
    cell.balance = detail::balance_from_json(c.at("balance"));
    cell.cell_dir = c.at("cell_dir").get<std::string>();
    report.sv_av_cells.push_back(std::move(cell));
  }
  for (const auto& c : j.at("aid_cells")) {
    AidCell cell;
    cell.probe = c.at("probe").get<std::string>();
    cell.system = c.at("system").get<std::string>();
    cell.condition = c.at("condition").get<std::string>();
    cell.recalls.war_percent = c.at("war_percent").get<double>();
    cell.recalls.per_accent_recall =
        c.at("per_accent_recall").get<std::map<std::string, double>>();
    cell.recalls.n_per_accent =
        c.at("n_per_accent").get<std::map<std::string, std::uint64_t>>();
    cell.war_target_percent = c.at("war_target_percent").get<double>();
    const auto& f = c.at("fairness");
    cell.fairness.min_recall = f.at("min_recall").get<double>();
    cell.fairness.max_recall = f.at("max_recall").get<double>();
    cell.fairness.recall_range = f.at("recall_range").get<double>();
    cell.fairness.recall_stddev = f.at("recall_stddev").get<double>();
    cell.fairness.target_gap = f.at("target_gap").get<double>();
    cell.cm = detail::confusion_from_json(c.at("confusion"));
    cell.cell_dir = c.at("cell_dir").get<std::string>();
    report.aid_cells.push_back(std::move(cell));
  }
  for (const auto& c : j.at("comparisons")) {
    ComparisonSummary cmp;
    cmp.before_name = c.at("before").get<std::string>();
    cmp.after_name = c.at("after").get<std::string>();
    for (const auto& m : c.at("metrics")) {
      MetricDelta d;
      d.metric = m.at("metric").get<std::string>();
      d.before = m.at("before").get<double>();
      d.after = m.at("after").get<double>();
      d.abs_delta = m.at("abs_delta").get<double>();
      if (m.contains("rel_change_percent")) {
        d.rel_change_percent = m.at("rel_change_percent").get<double>();
        d.has_rel = true;
      }
      cmp.metrics.push_back(d);
    }
    cmp.aid_probe = c.at("aid_probe").get<std::string>();
    cmp.aid_recall_delta_points =
        c.at("aid_recall_delta_points").get<std::map<std::string, double>>();
    if (c.contains("avg_relative_recall_change")) {
      cmp.avg_relative_recall_change = c.at("avg_relative_recall_change").get<double>();
      cmp.has_avg_relative_recall_change = true;
    }
    report.comparisons.push_back(std::move(cmp));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Markdown report

namespace detail {

inline std::string fmt2(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace detail

inline std::string report_to_markdown(const EvalReport& report) {
  std::string md;
  md += "# Anonymisation evaluation report\n\n";
  md += "- corpus: " + report.corpus_name + " (K=" + std::to_string(report.k_accents) +
        " accents, " + std::to_string(report.n_speakers) + " speakers, " +
        std::to_string(report.n_utterances) + " utterances)\n";
  md += "- seed: " + std::to_string(report.seed) + ", generator: " + report.generator + "\n";
  md += "- EER method: " + report.eer_method + "\n";
  md += "- manifest hash: " + report.manifest_hash +
        ", config hash: " + report.config_hash + "\n";
  md += "- tool: anoneval " + report.tool_version + "\n";

  // SV / AV grids: rows = systems, columns = probe x scenario kind.
  for (const Task task : {Task::sv, Task::av}) {
    std::vector<const SvAvCell*> cells;
    for (const auto& cell : report.sv_av_cells)
      if (cell.task == task) cells.push_back(&cell);
    if (cells.empty()) continue;

    std::vector<std::pair<std::string, ScenarioKind>> columns;
    std::vector<std::string> systems;
    for (const auto* cell : cells) {
      const auto col = std::make_pair(cell->probe, cell->scenario.kind);
      if (std::find(columns.begin(), columns.end(), col) == columns.end())
        columns.push_back(col);
      if (std::find(systems.begin(), systems.end(), cell->scenario.system) ==
          systems.end())
        systems.push_back(cell->scenario.system);
    }
    md += "\n## " + std::string(task == Task::sv ? "Speaker" : "Accent") +
          " verification EER (%)\n\n";
    md += "| System |";
    for (const auto& [probe, kind] : columns)
      md += " " + probe + " " + (kind == ScenarioKind::ignorant ? "I" : "L") + " |";
    md += "\n|---|";
    for (std::size_t i = 0; i < columns.size(); ++i) md += "---|";
    md += "\n";
    for (const auto& system : systems) {
      md += "| " + system + " |";
      for (const auto& col : columns) {
        const auto it = std::find_if(cells.begin(), cells.end(), [&](const SvAvCell* c) {
          return c->scenario.system == system && c->probe == col.first &&
                 c->scenario.kind == col.second;
        });
        md += it == cells.end() ? " - |" : " " + detail::fmt2((*it)->eer.eer_percent) + " |";
      }
      md += "\n";
    }
  }

  if (!report.aid_cells.empty()) {
    // Accent columns from the first cell; all cells share the label set.
    std::vector<std::string> accents;
    for (const auto& [accent, r] : report.aid_cells.front().recalls.per_accent_recall)
      accents.push_back(accent);
    for (const auto& probe : [&] {
           std::vector<std::string> probes;
           for (const auto& cell : report.aid_cells)
             if (std::find(probes.begin(), probes.end(), cell.probe) == probes.end())
               probes.push_back(cell.probe);
           return probes;
         }()) {
      md += "\n## Accent identification, probe " + probe +
            " (recall % per accent and WAR %)\n\n";
      md += "| Condition | WAR |";
      for (const auto& accent : accents) md += " " + accent + " |";
      md += "\n|---|---|";
      for (std::size_t i = 0; i < accents.size(); ++i) md += "---|";
      md += "\n";
      for (const auto& cell : report.aid_cells) {
        if (cell.probe != probe) continue;
        md += "| " + cell.system + " | " + detail::fmt2(cell.recalls.war_percent) + " |";
        for (const auto& accent : accents)
          md += " " + detail::fmt2(cell.recalls.per_accent_recall.at(accent)) + " |";
        md += "\n";
      }
      md += "\nTheoretical WAR target for K=" + std::to_string(report.k_accents) +
            ": " + detail::fmt2(report.aid_cells.front().war_target_percent) + "%\n";
    }

    md += "\n## Fairness by accent\n\n";
    md += "| Probe | Condition | min recall | max recall | range | stddev | target gap |\n";
    md += "|---|---|---|---|---|---|---|\n";
    for (const auto& cell : report.aid_cells) {
      md += "| " + cell.probe + " | " + cell.system + " | " +
            detail::fmt2(cell.fairness.min_recall) + " | " +
            detail::fmt2(cell.fairness.max_recall) + " | " +
            detail::fmt2(cell.fairness.recall_range) + " | " +
            detail::fmt2(cell.fairness.recall_stddev) + " | " +
            detail::fmt2(cell.fairness.target_gap) + " |\n";
    }
  }

  for (const auto& cmp : report.comparisons) {
    md += "\n## Comparison: " + cmp.before_name + " -> " + cmp.after_name + "\n\n";
    md += "| Metric | before | after | delta | relative % |\n";
    md += "|---|---|---|---|---|\n";
    for (const auto& m : cmp.metrics) {
      md += "| " + m.metric + " | " + detail::fmt2(m.before) + " | " +
            detail::fmt2(m.after) + " | " + detail::fmt2(m.abs_delta) + " | " +
            (m.has_rel ? detail::fmt2(m.rel_change_percent) : std::string("-")) + " |\n";
    }
    if (!cmp.aid_recall_delta_points.empty()) {
      md += "\nPer-accent recall change (points, probe " + cmp.aid_probe + "):\n\n";
      md += "| Accent | delta |\n|---|---|\n";
      for (const auto& [accent, delta] : cmp.aid_recall_delta_points)
        md += "| " + accent + " | " + detail::fmt2(delta) + " |\n";
    }
    if (cmp.has_avg_relative_recall_change)
      md += "\nAverage relative per-accent recall change: " +
            detail::fmt2(cmp.avg_relative_recall_change) + "%\n";
  }

  if (!report.warnings.empty()) {
    md += "\n## Warnings\n\n";
    for (const auto& w : report.warnings) md += "- " + w + "\n";
  }
  return md;
}

// ---------------------------------------------------------------------------
// Run

namespace detail {

inline std::string file_hash_hex(const std::filesystem::path& path) {
  return hex64(fnv1a64(read_file_bytes(path, errc::config_error)));
}

// Two-column metric summaries at reporting precision (2 decimals), one per
// cell next to the raw artifacts.
inline std::string sv_av_metrics_csv(const SvAvCell& cell) {
  std::string csv = "metric,value\n";
  csv += "eer_percent," + fmt2(cell.eer.eer_percent) + "\n";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "threshold,%.6g\n", cell.eer.threshold);
  csv += buf;
  csv += "n_target," + std::to_string(cell.eer.n_target) + "\n";
  csv += "n_nontarget," + std::to_string(cell.eer.n_nontarget) + "\n";
  return csv;
}

inline std::string aid_metrics_csv(const AidCell& cell) {
  std::string csv = "metric,value\n";
  csv += "war_percent," + fmt2(cell.recalls.war_percent) + "\n";
  csv += "war_target_percent," + fmt2(cell.war_target_percent) + "\n";
  csv += "target_gap," + fmt2(cell.fairness.target_gap) + "\n";
  csv += "min_recall," + fmt2(cell.fairness.min_recall) + "\n";
  csv += "max_recall," + fmt2(cell.fairness.max_recall) + "\n";
  csv += "recall_range," + fmt2(cell.fairness.recall_range) + "\n";
  csv += "recall_stddev," + fmt2(cell.fairness.recall_stddev) + "\n";
  for (const auto& [accent, r] : cell.recalls.per_accent_recall)
    csv += "recall_" + accent + "," + fmt2(r) + "\n";
  return csv;
}

/// Canonical JSON of the semantic config fields plus input content hashes.
/// Output locations and path spellings stay out, so the hash changes iff an
/// input file or config field changes.
inline std::string config_hash(const RunConfig& cfg, const std::string& manifest_hash,
                               const std::map<std::pair<std::string, std::string>,
                                              std::string>& embedding_hashes) {
  nlohmann::json j;
  j["corpus_name"] = cfg.corpus_name;
  j["manifest"] = manifest_hash;
  j["tasks"] = cfg.tasks;
  j["probes"] = cfg.probes;
  nlohmann::json scen = nlohmann::json::array();
  for (const auto& s : cfg.scenarios)
    scen.push_back({{"kind", scenario_kind_name(s.kind)}, {"system", s.system}});
  j["scenarios"] = scen;
  j["aid_systems"] = cfg.aid_systems;
  j["aid_train_condition"] = cfg.aid_train_condition;
  j["seed"] = cfg.seed;
  j["nontarget_per_target"] = cfg.nontarget_per_target;
  j["av_targets_per_accent"] = cfg.av_targets_per_accent;
  j["balance_max_imbalance"] = cfg.balance_max_imbalance;
  nlohmann::json cmps = nlohmann::json::array();
  for (const auto& c : cfg.comparisons)
    cmps.push_back({{"before", c.before}, {"after", c.after}});
  j["comparisons"] = cmps;
  nlohmann::json embs = nlohmann::json::array();
  for (const auto& [key, hash] : embedding_hashes)
    embs.push_back({{"probe", key.first}, {"condition", key.second}, {"hash", hash}});
  j["embeddings"] = embs;
  return hex64(fnv1a64(j.dump()));
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  write_file_bytes(path, text);
}

}  // namespace detail

/// Validates config wiring before any computation: tasks, probes, scenario
/// grid and the (probe, condition) -> file table.
inline void validate_config(const RunConfig& cfg) {
  if (cfg.tasks.empty()) raise(errc::config_error, "config: no tasks requested");
  for (const auto& task : cfg.tasks)
    if (task != "SV" && task != "AV" && task != "AID")
      raise(errc::config_error, "config: unknown task '" + task + "'");
  if (cfg.probes.empty()) raise(errc::config_error, "config: no probes listed");
  const bool has_sv_av =
      std::find(cfg.tasks.begin(), cfg.tasks.end(), "SV") != cfg.tasks.end() ||
      std::find(cfg.tasks.begin(), cfg.tasks.end(), "AV") != cfg.tasks.end();
  if (has_sv_av && cfg.scenarios.empty())
    raise(errc::config_error, "config: SV/AV requested but no scenarios given");
  if (cfg.nontarget_per_target == 0)
    raise(errc::config_error, "config: nontarget_per_target must be positive");
  if (!std::filesystem::exists(cfg.manifest_path))
    raise(errc::config_error,
          "config: manifest '" + cfg.manifest_path.string() + "' does not exist");

  std::set<std::pair<std::string, std::string>> available;
  for (const auto& entry : cfg.embeddings) {
    if (!std::filesystem::exists(entry.path))
      raise(errc::config_error,
            "config: embedding file '" + entry.path.string() + "' does not exist");
    available.insert({entry.probe, entry.condition});
  }
  auto require = [&](const std::string& probe, const std::string& condition) {
    if (!available.count({probe, condition}))
      raise(errc::config_error, "config: no embedding file for probe '" + probe +
                                    "', condition '" + condition + "'");
  };
  for (const auto& probe : cfg.probes) {
    for (const auto& task : cfg.tasks) {
      if (task == "AID") {
        require(probe, cfg.aid_train_condition);
        for (const auto& system : cfg.aid_systems)
          require(probe, anon_condition(system));
      } else {
        for (const auto& scenario : cfg.scenarios) {
          require(probe, scenario.enrol_condition());
          require(probe, scenario.test_condition());
        }
      }
    }
  }
}

inline EvalReport run_pipeline(RunConfig cfg, unsigned jobs = 1, bool strict = false) {
  // Default AID grid: the original condition plus every scenario system.
  if (cfg.aid_systems.empty()) {
    cfg.aid_systems.push_back(kOriginalCondition);
    for (const auto& s : cfg.scenarios)
      if (std::find(cfg.aid_systems.begin(), cfg.aid_systems.end(), s.system) ==
          cfg.aid_systems.end())
        cfg.aid_systems.push_back(s.system);
  }
  validate_config(cfg);

  const CorpusManifest manifest = load_manifest(cfg.manifest_path);
  const std::string manifest_hash = detail::file_hash_hex(cfg.manifest_path);

  std::map<std::pair<std::string, std::string>, EmbeddingSet> sets;
  std::map<std::pair<std::string, std::string>, std::string> set_hashes;
  for (const auto& entry : cfg.embeddings) {
    EmbeddingSet set = load_embeddings(entry.path, manifest);
    if (!set.probe.empty() && set.probe != entry.probe)
      raise(errc::config_error, "config: '" + entry.path.string() + "' sidecar probe '" +
                                    set.probe + "' != declared '" + entry.probe + "'");
    if (!set.condition.empty() && set.condition != entry.condition)
      raise(errc::config_error, "config: '" + entry.path.string() +
                                    "' sidecar condition '" + set.condition +
                                    "' != declared '" + entry.condition + "'");
    set.probe = entry.probe;
    set.condition = entry.condition;
    set_hashes[{entry.probe, entry.condition}] = detail::file_hash_hex(entry.path);
    sets.emplace(std::make_pair(entry.probe, entry.condition), std::move(set));
  }
  EmbeddingStore store;
  for (const auto& [key, set] : sets) store.add(set);

  EvalReport report;
  report.corpus_name = cfg.corpus_name;
  report.manifest_hash = manifest_hash;
  report.config_hash = detail::config_hash(cfg, manifest_hash, set_hashes);
  report.seed = cfg.seed;
  report.k_accents = manifest.k_accents();
  report.n_utterances = manifest.utterances().size();
  report.n_speakers = manifest.speaker_set().size();
  report.tasks = cfg.tasks;

  namespace fs = std::filesystem;
  const fs::path staging = cfg.out_dir / ".staging";
  fs::remove_all(staging);
  fs::create_directories(staging / "cells");

  try {
    for (const auto& task_name_str : cfg.tasks) {
      if (task_name_str == "AID") continue;
      const Task task = parse_task(task_name_str);
      for (const auto& probe : cfg.probes) {
        for (const auto& scenario : cfg.scenarios) {
          TrialList list =
              task == Task::sv
                  ? gen_sv_trials(manifest, scenario, cfg.nontarget_per_target, cfg.seed)
                  : gen_av_trials(manifest, scenario, cfg.nontarget_per_target, cfg.seed,
                                  cfg.av_targets_per_accent);
          if (cfg.balance_max_imbalance > 0.0 &&
              list.balance.max_imbalance > cfg.balance_max_imbalance) {
            const std::string note =
                task_name_str + " " + scenario.tag() + ": max_imbalance " +
                std::to_string(list.balance.max_imbalance) + " exceeds bound " +
                std::to_string(cfg.balance_max_imbalance);
            if (strict) raise(errc::tolerance_failure, note);
            report.warnings.push_back(note);
          }
          const ScoreSet scores = score_trials(list, store, probe, jobs);
          const EerResult eer = compute_eer(scores, list);

          SvAvCell cell;
          cell.task = task;
          cell.probe = probe;
          cell.scenario = scenario;
          cell.eer = eer;
          cell.trial_list_hash = scores.trial_list_ref;
          cell.balance = list.balance;
          cell.cell_dir = "cells/" + task_name_str + "-" + probe + "-" + scenario.tag();
          fs::create_directories(staging / cell.cell_dir);
          write_trials_csv(list, staging / cell.cell_dir / "trials.csv");
          write_scores_csv(scores, staging / cell.cell_dir / "scores.csv");
          detail::write_text_file(staging / cell.cell_dir / "metrics.csv",
                                  detail::sv_av_metrics_csv(cell));
          report.sv_av_cells.push_back(std::move(cell));
        }
      }
    }

    if (std::find(cfg.tasks.begin(), cfg.tasks.end(), "AID") != cfg.tasks.end()) {
      for (const auto& probe : cfg.probes) {
        const EmbeddingSet& train = sets.at({probe, cfg.aid_train_condition});
        const CentroidModel model = fit_centroids(train, manifest);
        save_model(model, staging / ("cells/aid-model-" + probe + ".aemb"));
        for (const auto& system : cfg.aid_systems) {
          const std::string condition = anon_condition(system);
          const EmbeddingSet& eval = sets.at({probe, condition});
          AidCell cell;
          cell.probe = probe;
          cell.system = system;
          cell.condition = condition;
          cell.cm = evaluate_aid(model, eval, manifest, jobs);
          cell.recalls = recall_report(cell.cm);
          cell.fairness = fairness_report(cell.recalls, manifest.k_accents());
          cell.war_target_percent = war_target(manifest.k_accents());
          cell.cell_dir = "cells/AID-" + probe + "-" + system;
          fs::create_directories(staging / cell.cell_dir);
          write_confusion_csv(cell.cm, staging / cell.cell_dir / "confusion.csv");
          detail::write_text_file(staging / cell.cell_dir / "metrics.csv",
                                  detail::aid_metrics_csv(cell));
          report.aid_cells.push_back(std::move(cell));
        }
      }
    }

    for (const auto& cmp : cfg.comparisons) {
      ComparisonSummary summary = compare_systems(filter_by_system(report, cmp.before),
                                                  filter_by_system(report, cmp.after));
      summary.before_name = cmp.before;
      summary.after_name = cmp.after;
      report.comparisons.push_back(std::move(summary));
    }

    detail::write_text_file(staging / "report.json", report_to_json(report).dump(2) + "\n");
    detail::write_text_file(staging / "report.md", report_to_markdown(report));
  } catch (...) {
    const fs::path quarantine = cfg.out_dir / "quarantine";
    fs::remove_all(quarantine);
    fs::rename(staging, quarantine);
    throw;
  }

  // Promote staged outputs.
  for (const auto& entry : fs::directory_iterator(staging)) {
    const fs::path target = cfg.out_dir / entry.path().filename();
    fs::remove_all(target);
    fs::rename(entry.path(), target);
  }
  fs::remove_all(staging);
  return report;
}

}  // namespace anoneval

#endif  // ANONEVAL_PIPELINE_HPP_
