// Copyright 2026 The morphprobe Authors
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

#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "embedding.hpp"
#include "lexicon.hpp"
#include "metrics.hpp"
#include "planner.hpp"
#include "stats.hpp"
#include "store.hpp"

namespace morphprobe::report {

// --- Contamination -----------------------------------------------------------

enum class Reason { kWholeWordInDictionary, kStemPlusSuffix, kKnownEntityListHit, kManualReviewRequired };
enum class Verdict { kClean, kContaminated, kNeedsReview };

std::string_view reason_name(Reason r);
std::string_view verdict_name(Verdict v);
Verdict parse_verdict(std::string_view name);

struct ReasonEntry {
  Reason kind;
  std::string detail;  // the stem for stem_plus_suffix, the list name for entity hits

  bool operator==(const ReasonEntry&) const = default;
};

struct ContaminationFlag {
  std::string surface;
  std::vector<ReasonEntry> reasons;
  Verdict verdict = Verdict::kNeedsReview;
  bool adjudicated = false;
  std::string rationale;

  bool has(Reason r) const;
  /// True when any reason other than manual_review_required is present.
  bool automated() const;
};

struct EntityList {
  std::string name;
  lexicon::Wordlist words;
};

/// Automated screen. Whole-word and entity-list hits make the verdict
/// contaminated. A dictionary stem plus an inventory suffix is flagged but
/// left for review: the same shape covers transparent derivations and
/// phonesthemic coinages alike. Nothing is ever declared clean here; a
/// candidate with no automated reason gets manual_review_required.
ContaminationFlag contamination_screen(const lexicon::CandidateWord& candidate, const lexicon::Wordlist& wordlist,
                                       const std::vector<EntityList>& entity_lists = {});

struct Adjudication {
  Verdict verdict = Verdict::kNeedsReview;
  std::string rationale;
};
using Adjudications = std::map<std::string, Adjudication, std::less<>>;

/// JSON map surface -> {verdict, rationale}.
Adjudications parse_adjudications(std::string_view text);
Adjudications load_adjudications(const fs::path& path);

/// Applies a manual decision. A "clean" decision is not honored over a
/// whole-word or entity-list hit; the flag stays contaminated.
void apply_adjudication(ContaminationFlag& flag, const Adjudications& adjudications);

// --- Component analysis ------------------------------------------------------

struct ComponentRow {
  std::string cluster;
  lexicon::Position position = lexicon::Position::kOnset;
  double mean_purity = 0.0;
  std::size_t n = 0;
};

struct ComponentTables {
  std::vector<ComponentRow> onsets;
  std::vector<ComponentRow> suffixes;
};

/// Mean purity per onset and per suffix over phonestheme candidates, rows
/// sorted by mean descending, then cluster.
ComponentTables component_analysis(const std::map<std::string, double, std::less<>>& purity_by_tag,
                                   const lexicon::Lexicon& lexicon);

// --- Purity table ------------------------------------------------------------

struct PurityRow {
  std::string tag;
  std::string group;
  double purity = 0.0;
  std::size_t hits = 0;
  std::size_t n_images = 0;
};

/// Joins per-tag results with the group of each tag (from the lexicon, else
/// from the plan).
std::vector<PurityRow> purity_rows(const std::vector<metrics::PurityResult>& results,
                                   const planner::ExperimentPlan& plan, const lexicon::Lexicon* lexicon);
std::string purity_csv(const std::vector<PurityRow>& rows);
std::vector<PurityRow> parse_purity_csv(std::string_view text);

// --- Similarity table --------------------------------------------------------

struct ConditionSimilarity {
  std::string condition;
  metrics::SimilaritySummary summary;
};

/// One row per tag of the face matrix, sorted by tag, then an "ALL" row.
std::vector<ConditionSimilarity> similarity_by_condition(const EmbeddingMatrix& faces);
std::string similarity_csv(const std::vector<ConditionSimilarity>& rows);

// --- Bundle ------------------------------------------------------------------

struct ReportInputs {
  const planner::ExperimentPlan* plan = nullptr;
  const lexicon::Lexicon* lexicon = nullptr;
  const store::RunManifest* manifest = nullptr;
  const std::vector<PurityRow>* purity = nullptr;
  const EmbeddingMatrix* faces = nullptr;
  const lexicon::Wordlist* wordlist = nullptr;
  std::vector<EntityList> entity_lists;
  Adjudications adjudications;
  std::vector<std::pair<lexicon::Group, lexicon::Group>> comparisons = {
      {lexicon::Group::kPhonestheme, lexicon::Group::kRandomPronounceable},
      {lexicon::Group::kPhonestheme, lexicon::Group::kNegativeControl},
      {lexicon::Group::kRandomPronounceable, lexicon::Group::kNegativeControl},
  };
  double pass_threshold = 1.0;
  std::map<std::string, std::string> provenance;  // name -> hash
};

struct Artifact {
  std::string file;  // relative to the reports directory
  std::string content;
};

struct ReportBundle {
  std::vector<Artifact> artifacts;
  std::map<std::string, std::string> skipped;  // section -> reason

  const Artifact* find(std::string_view file) const;
};

inline constexpr const char* kGroupSummaryCsv = "group_summary.csv";
inline constexpr const char* kComparisonsCsv = "comparisons.csv";
inline constexpr const char* kPerfectPurityCsv = "perfect_purity.csv";
inline constexpr const char* kComponentsOnsetCsv = "components_onset.csv";
inline constexpr const char* kComponentsSuffixCsv = "components_suffix.csv";
inline constexpr const char* kSimilarityCsv = "similarity.csv";
inline constexpr const char* kPlotsJson = "plots.json";
inline constexpr const char* kSummaryJson = "summary.json";
inline constexpr const char* kPurityCsv = "purity.csv";

/// Builds every section whose inputs are present. Sections that cannot be
/// built are listed in `skipped` and in summary.json with the reason.
/// Output depends only on the inputs: no timestamps, stable orders, floats
/// at four decimals.
ReportBundle build_report(const ReportInputs& inputs);

/// Comparison rows in the group_a,group_b,t,df,p,d schema.
std::string comparisons_csv(const std::vector<std::tuple<std::string, std::string, stats::GroupComparison>>& rows);

std::string csv_escape(std::string_view field);

}  // namespace morphprobe::report
