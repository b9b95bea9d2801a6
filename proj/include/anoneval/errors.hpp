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

#ifndef ANONEVAL_ERRORS_HPP_
#define ANONEVAL_ERRORS_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace anoneval {

enum class errc {
  // corpus / embedding I/O
  duplicate_utterance,
  inconsistent_accent,
  malformed_manifest,
  unknown_utterance,
  non_finite_embedding,
  degenerate_embedding,
  format_error,
  write_error,
  // trial generation
  insufficient_speakers,
  insufficient_utterances,
  insufficient_accents,
  insufficient_speakers_for_accent,
  // scoring
  dim_mismatch,
  missing_embedding,
  // metrics
  missing_trial_class,
  empty_accent_class,
  unknown_accent,
  invalid_class_count,
  division_by_zero_baseline,
  // classifier
  degenerate_centroid,
  // synthlab
  condition_error,
  invalid_synth_config,
  // pipeline
  incomparable_reports,
  config_error,
  tolerance_failure,
  invalid_argument,
};

inline std::string_view errc_name(errc c) {
  switch (c) {
    case errc::duplicate_utterance: return "DuplicateUtterance";
    case errc::inconsistent_accent: return "InconsistentAccent";
    case errc::malformed_manifest: return "MalformedManifest";
    case errc::unknown_utterance: return "UnknownUtterance";
    case errc::non_finite_embedding: return "NonFiniteEmbedding";
    case errc::degenerate_embedding: return "DegenerateEmbedding";
    case errc::format_error: return "FormatError";
    case errc::write_error: return "WriteError";
    case errc::insufficient_speakers: return "InsufficientSpeakers";
    case errc::insufficient_utterances: return "InsufficientUtterances";
    case errc::insufficient_accents: return "InsufficientAccents";
    case errc::insufficient_speakers_for_accent:
      return "InsufficientSpeakersForAccent";
    case errc::dim_mismatch: return "DimMismatch";
    case errc::missing_embedding: return "MissingEmbedding";
    case errc::missing_trial_class: return "MissingTrialClass";
    case errc::empty_accent_class: return "EmptyAccentClass";
    case errc::unknown_accent: return "UnknownAccent";
    case errc::invalid_class_count: return "InvalidClassCount";
    case errc::division_by_zero_baseline: return "DivisionByZeroBaseline";
    case errc::degenerate_centroid: return "DegenerateCentroid";
    case errc::condition_error: return "ConditionError";
    case errc::invalid_synth_config: return "InvalidSynthConfig";
    case errc::incomparable_reports: return "IncomparableReports";
    case errc::config_error: return "ConfigError";
    case errc::tolerance_failure: return "ToleranceFailure";
    case errc::invalid_argument: return "InvalidArgument";
  }
  return "UnknownError";
}

/// Exception type carrying a machine-checkable error code.
class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what),
        code_(code) {}

  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void raise(errc code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace anoneval

#endif  // ANONEVAL_ERRORS_HPP_
