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

#ifndef ANONEVAL_METRICS_HPP_
#define ANONEVAL_METRICS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "anoneval/errors.hpp"
#include "anoneval/scoring.hpp"
#include "anoneval/trials.hpp"

namespace anoneval {

struct EerResult {
  double eer_percent = 0.0;
  double threshold = 0.0;
  std::size_t n_target = 0;
  std::size_t n_nontarget = 0;
};

/**
  Equal error rate of a verification score set.

  Conventions (fixed so the empirical ROC is well defined under ties):
    - acceptance is "score >= threshold";
    - FRR(t) = fraction of target scores  < t,
      FAR(t) = fraction of non-target scores >= t;
    - scores with identical values form a single operating point, i.e. the
      operating thresholds are the distinct score values plus one virtual
      point above the maximum (FAR 0, FRR 1);
    - walking thresholds upward, FAR - FRR falls monotonically from +1 to
      -1. If an operating point hits FAR == FRR exactly, that value is the
      EER; otherwise the EER is taken by linear interpolation between the
      two adjacent operating points where the sign changes.

  Returned in percent, with the (possibly interpolated) threshold.
*/
inline EerResult compute_eer(std::vector<double> target_scores,
                             std::vector<double> nontarget_scores) {
  if (target_scores.empty() || nontarget_scores.empty())
    raise(errc::missing_trial_class,
          "EER needs at least one target and one non-target score");
  for (double s : target_scores)
    if (!std::isfinite(s)) raise(errc::invalid_argument, "non-finite target score");
  for (double s : nontarget_scores)
    if (!std::isfinite(s)) raise(errc::invalid_argument, "non-finite non-target score");

  std::sort(target_scores.begin(), target_scores.end());
  std::sort(nontarget_scores.begin(), nontarget_scores.end());
  const double n_t = static_cast<double>(target_scores.size());
  const double n_n = static_cast<double>(nontarget_scores.size());

  // Distinct operating thresholds = union of distinct score values.
  std::vector<double> thresholds;
  thresholds.reserve(target_scores.size() + nontarget_scores.size());
  std::merge(target_scores.begin(), target_scores.end(), nontarget_scores.begin(),
             nontarget_scores.end(), std::back_inserter(thresholds));
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  auto frr_at = [&](double t) {
    const auto it = std::lower_bound(target_scores.begin(), target_scores.end(), t);
    return static_cast<double>(it - target_scores.begin()) / n_t;
  };
  auto far_at = [&](double t) {
    const auto it = std::lower_bound(nontarget_scores.begin(), nontarget_scores.end(), t);
    return static_cast<double>(nontarget_scores.end() - it) / n_n;
  };

  EerResult result;
  result.n_target = target_scores.size();
  result.n_nontarget = nontarget_scores.size();

  double prev_thr = thresholds.front();
  double prev_far = 1.0, prev_frr = 0.0;  // at the minimum: accept everything
  const std::size_t n_ops = thresholds.size() + 1;
  for (std::size_t k = 0; k < n_ops; ++k) {
    double thr, far, frr;
    if (k < thresholds.size()) {
      thr = thresholds[k];
      far = far_at(thr);
      frr = frr_at(thr);
    } else {
      thr = thresholds.back() + 1.0;  // virtual point: reject everything
      far = 0.0;
      frr = 1.0;
    }
    const double diff = far - frr;
    if (diff == 0.0) {
      result.eer_percent = 100.0 * far;
      result.threshold = thr;
      return result;
    }
    if (diff < 0.0) {
      const double prev_diff = prev_far - prev_frr;
      const double alpha = prev_diff / (prev_diff - diff);
      result.eer_percent = 100.0 * (prev_frr + alpha * (frr - prev_frr));
      result.threshold = prev_thr + alpha * (thr - prev_thr);
      return result;
    }
    prev_thr = thr;
    prev_far = far;
    prev_frr = frr;
  }
  // Unreachable: the virtual point has diff = -1.
  raise(errc::invalid_argument, "EER crossing not found");
}

/// Splits a ScoreSet by its trial list's labels and computes the EER.
inline EerResult compute_eer(const ScoreSet& scores, const TrialList& list) {
  if (scores.scores.size() != list.trials.size())
    raise(errc::invalid_argument,
          "score count " + std::to_string(scores.scores.size()) +
              " does not match trial count " + std::to_string(list.trials.size()));
  std::vector<double> targets, nontargets;
  for (std::size_t i = 0; i < list.trials.size(); ++i) {
    if (list.trials[i].label == TrialLabel::target)
      targets.push_back(scores.scores[i]);
    else
      nontargets.push_back(scores.scores[i]);
  }
  return compute_eer(std::move(targets), std::move(nontargets));
}

// ---------------------------------------------------------------------------
// Accent identification metrics (per-accent recall and WAR)

/// K x K classification counts; rows are true accents, columns predictions.
struct ConfusionMatrix {
  std::vector<std::string> labels;
  std::vector<std::vector<std::uint64_t>> counts;

  static ConfusionMatrix zero(std::vector<std::string> labels_in) {
    ConfusionMatrix cm;
    cm.labels = std::move(labels_in);
    cm.counts.assign(cm.labels.size(),
                     std::vector<std::uint64_t>(cm.labels.size(), 0));
    return cm;
  }

  std::size_t index_of(const std::string& label) const {
    const auto it = std::find(labels.begin(), labels.end(), label);
    if (it == labels.end())
      raise(errc::unknown_accent, "accent '" + label + "' not in matrix");
    return static_cast<std::size_t>(it - labels.begin());
  }

  std::uint64_t row_sum(std::size_t i) const {
    std::uint64_t n = 0;
    for (const auto c : counts[i]) n += c;
    return n;
  }
};

/// R_i: percentage of accent-i utterances classified as accent i.
inline double recall(const ConfusionMatrix& cm, const std::string& accent) {
  const std::size_t i = cm.index_of(accent);
  const std::uint64_t n_i = cm.row_sum(i);
  if (n_i == 0)
    raise(errc::empty_accent_class, "accent '" + accent + "' has no utterances");
  return 100.0 * static_cast<double>(cm.counts[i][i]) / static_cast<double>(n_i);
}

/// Weighted average recall: sum_i N_i R_i / sum_i N_i.
inline double war(const ConfusionMatrix& cm) {
  if (cm.labels.empty()) raise(errc::empty_accent_class, "empty confusion matrix");
  double weighted = 0.0, total = 0.0;
  for (std::size_t i = 0; i < cm.labels.size(); ++i) {
    const std::uint64_t n_i = cm.row_sum(i);
    if (n_i == 0)
      raise(errc::empty_accent_class, "accent '" + cm.labels[i] + "' has no utterances");
    weighted += static_cast<double>(n_i) * recall(cm, cm.labels[i]);
    total += static_cast<double>(n_i);
  }
  return weighted / total;
}

/// Chance-level WAR for k identifiable accent classes: a system that maps
/// every input to one accent (or to random accents) scores 100/k.
inline double war_target(std::size_t k) {
  if (k == 0) raise(errc::invalid_class_count, "class count must be positive");
  return 100.0 / static_cast<double>(k);
}

struct RecallReport {
  std::map<std::string, double> per_accent_recall;
  double war_percent = 0.0;
  std::map<std::string, std::uint64_t> n_per_accent;
};

inline RecallReport recall_report(const ConfusionMatrix& cm) {
  RecallReport report;
  for (std::size_t i = 0; i < cm.labels.size(); ++i) {
    report.per_accent_recall[cm.labels[i]] = recall(cm, cm.labels[i]);
    report.n_per_accent[cm.labels[i]] = cm.row_sum(i);
  }
  report.war_percent = war(cm);
  return report;
}

/// How evenly anonymisation protects the accents: spread of the per-accent
/// recalls plus the distance of WAR from the 100/K target.
struct FairnessReport {
  double min_recall = 0.0;
  double max_recall = 0.0;
  double recall_range = 0.0;   // max - min, points
  double recall_stddev = 0.0;  // population stddev, points
  double target_gap = 0.0;     // war - 100/K, points
};

inline FairnessReport fairness_report(const RecallReport& rr, std::size_t k) {
  if (rr.per_accent_recall.empty())
    raise(errc::empty_accent_class, "fairness report over empty recall report");
  FairnessReport f;
  f.min_recall = std::numeric_limits<double>::infinity();
  f.max_recall = -std::numeric_limits<double>::infinity();
  double mean = 0.0;
  for (const auto& [accent, r] : rr.per_accent_recall) {
    f.min_recall = std::min(f.min_recall, r);
    f.max_recall = std::max(f.max_recall, r);
    mean += r;
  }
  mean /= static_cast<double>(rr.per_accent_recall.size());
  double var = 0.0;
  for (const auto& [accent, r] : rr.per_accent_recall)
    var += (r - mean) * (r - mean);
  var /= static_cast<double>(rr.per_accent_recall.size());
  f.recall_range = f.max_recall - f.min_recall;
  f.recall_stddev = std::sqrt(var);
  f.target_gap = rr.war_percent - war_target(k);
  return f;
}

/// Signed percent change relative to `before`, e.g. (38.8, 43.4) -> +11.86.
inline double relative_change(double before, double after) {
  if (before == 0.0)
    raise(errc::division_by_zero_baseline, "relative change from a zero baseline");
  return 100.0 * (after - before) / before;
}

// ---------------------------------------------------------------------------
// Confusion matrix CSV (labeled header row and column)

inline std::string serialize_confusion_csv(const ConfusionMatrix& cm) {
  std::string out = "accent";
  for (const auto& label : cm.labels) out += "," + label;
  out += '\n';
  for (std::size_t i = 0; i < cm.labels.size(); ++i) {
    out += cm.labels[i];
    for (std::size_t j = 0; j < cm.labels.size(); ++j)
      out += ',' + std::to_string(cm.counts[i][j]);
    out += '\n';
  }
  return out;
}

inline void write_confusion_csv(const ConfusionMatrix& cm,
                                const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(errc::write_error, "cannot open '" + path.string() + "' for writing");
  const std::string csv = serialize_confusion_csv(cm);
  out.write(csv.data(), static_cast<std::streamsize>(csv.size()));
  out.flush();
  if (!out) raise(errc::write_error, "failed writing '" + path.string() + "'");
}

inline ConfusionMatrix load_confusion_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(errc::format_error, "cannot open '" + path.string() + "'");
  auto split = [](const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const auto comma = line.find(',', start);
      if (comma == std::string::npos) {
        fields.push_back(line.substr(start));
        return fields;
      }
      fields.push_back(line.substr(start, comma - start));
      start = comma + 1;
    }
  };
  std::string line;
  if (!std::getline(in, line))
    raise(errc::format_error, "empty confusion file '" + path.string() + "'");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = split(line);
  if (header.size() < 2 || header[0] != "accent")
    raise(errc::format_error, "bad confusion CSV header in '" + path.string() + "'");

  ConfusionMatrix cm;
  cm.labels.assign(header.begin() + 1, header.end());
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split(line);
    if (fields.size() != cm.labels.size() + 1)
      raise(errc::format_error, "bad confusion row in '" + path.string() + "'");
    if (cm.counts.size() >= cm.labels.size() ||
        fields[0] != cm.labels[cm.counts.size()])
      raise(errc::format_error,
            "confusion rows must mirror header order in '" + path.string() + "'");
    std::vector<std::uint64_t> row;
    for (std::size_t i = 1; i < fields.size(); ++i) {
      try {
        row.push_back(std::stoull(fields[i]));
      } catch (const std::exception&) {
        raise(errc::format_error, "bad count '" + fields[i] + "' in '" + path.string() + "'");
      }
    }
    cm.counts.push_back(std::move(row));
  }
  if (cm.counts.size() != cm.labels.size())
    raise(errc::format_error, "confusion matrix is not square in '" + path.string() + "'");
  return cm;
}

}  // namespace anoneval

#endif  // ANONEVAL_METRICS_HPP_
