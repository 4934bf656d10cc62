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

#include "report.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <tuple>

#include "errors.hpp"
#include "util.hpp"

namespace morphprobe::report {

using nlohmann::ordered_json;
using lexicon::Group;

std::string_view reason_name(Reason r) {
  switch (r) {
    case Reason::kWholeWordInDictionary: return "whole_word_in_dictionary";
    case Reason::kStemPlusSuffix: return "stem_plus_suffix";
    case Reason::kKnownEntityListHit: return "known_entity_list_hit";
    case Reason::kManualReviewRequired: return "manual_review_required";
  }
  return "unknown";
}

std::string_view verdict_name(Verdict v) {
  switch (v) {
    case Verdict::kClean: return "clean";
    case Verdict::kContaminated: return "contaminated";
    case Verdict::kNeedsReview: return "needs_review";
  }
  return "unknown";
}

Verdict parse_verdict(std::string_view name) {
  if (name == "clean") return Verdict::kClean;
  if (name == "contaminated") return Verdict::kContaminated;
  if (name == "needs_review") return Verdict::kNeedsReview;
  fail(ErrorCode::kConfiguration, "unknown verdict '" + std::string(name) + "'");
}

bool ContaminationFlag::has(Reason r) const {
  return std::any_of(reasons.begin(), reasons.end(), [&](const ReasonEntry& e) { return e.kind == r; });
}

bool ContaminationFlag::automated() const {
  return std::any_of(reasons.begin(), reasons.end(),
                     [](const ReasonEntry& e) { return e.kind != Reason::kManualReviewRequired; });
}

namespace {

bool hard_hit(const ContaminationFlag& f) {
  return f.has(Reason::kWholeWordInDictionary) || f.has(Reason::kKnownEntityListHit);
}

std::string reasons_text(const ContaminationFlag& f) {
  std::string out;
  for (const auto& r : f.reasons) {
    if (!out.empty()) out += ';';
    out += reason_name(r.kind);
    if (!r.detail.empty()) out += "(" + r.detail + ")";
  }
  return out;
}

int group_rank(std::string_view group) {
  for (std::size_t i = 0; i < std::size(lexicon::kAllGroups); ++i)
    if (lexicon::group_name(lexicon::kAllGroups[i]) == group) return static_cast<int>(i);
  return static_cast<int>(std::size(lexicon::kAllGroups));
}

std::string join_csv(std::initializer_list<std::string> fields) {
  std::string line;
  bool first = true;
  for (const auto& f : fields) {
    if (!first) line += ',';
    line += csv_escape(f);
    first = false;
  }
  return line + "\n";
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::string f4(double v) { return format_fixed(v, 4); }

std::string p_text(double p) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4e", p);
  return buf;
}

ordered_json skipped_section(const std::string& reason) { return {{"status", "skipped"}, {"reason", reason}}; }

}  // namespace

ContaminationFlag contamination_screen(const lexicon::CandidateWord& candidate, const lexicon::Wordlist& wordlist,
                                       const std::vector<EntityList>& entity_lists) {
  ContaminationFlag f;
  f.surface = candidate.surface;
  const std::string surface = to_lower_ascii(candidate.surface);

  if (wordlist.contains(surface)) f.reasons.push_back({Reason::kWholeWordInDictionary, ""});

  std::set<std::string> stems;
  for (const auto& suffix : lexicon::build_inventory().suffixes) {
    if (surface.size() <= suffix.cluster.size() || !surface.ends_with(suffix.cluster)) continue;
    std::string stem = surface.substr(0, surface.size() - suffix.cluster.size());
    if (stem.size() >= 3 && wordlist.contains(stem)) stems.insert(std::move(stem));
  }
  for (const auto& stem : stems) f.reasons.push_back({Reason::kStemPlusSuffix, stem});

  for (const auto& list : entity_lists)
    if (list.words.contains(surface)) f.reasons.push_back({Reason::kKnownEntityListHit, list.name});

  if (hard_hit(f)) {
    f.verdict = Verdict::kContaminated;
  } else {
    f.verdict = Verdict::kNeedsReview;
    if (!f.automated()) f.reasons.push_back({Reason::kManualReviewRequired, ""});
  }
  return f;
}

Adjudications parse_adjudications(std::string_view text) {
  Adjudications out;
  try {
    const auto j = nlohmann::json::parse(text);
    if (!j.is_object()) fail(ErrorCode::kConfiguration, "adjudication file must be a JSON object");
    for (const auto& [surface, entry] : j.items()) {
      Adjudication a;
      a.verdict = parse_verdict(entry.at("verdict").get<std::string>());
      a.rationale = entry.value("rationale", "");
      out[to_lower_ascii(surface)] = std::move(a);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfiguration, std::string("malformed adjudication file: ") + e.what());
  }
  return out;
}

Adjudications load_adjudications(const fs::path& path) {
  if (!fs::exists(path)) fail(ErrorCode::kConfiguration, "adjudication file not found: " + path.string());
  return parse_adjudications(read_file(path));
}

void apply_adjudication(ContaminationFlag& flag, const Adjudications& adjudications) {
  const auto it = adjudications.find(to_lower_ascii(flag.surface));
  if (it == adjudications.end()) return;
  flag.adjudicated = true;
  flag.rationale = it->second.rationale;
  if (it->second.verdict == Verdict::kClean && hard_hit(flag)) return;
  flag.verdict = it->second.verdict;
}

ComponentTables component_analysis(const std::map<std::string, double, std::less<>>& purity_by_tag,
                                   const lexicon::Lexicon& lexicon) {
  std::map<std::string, std::pair<double, std::size_t>> onsets, suffixes;
  for (const auto& c : lexicon.candidates) {
    if (c.group != Group::kPhonestheme || !c.decomposition) continue;
    const auto it = purity_by_tag.find(c.surface);
    if (it == purity_by_tag.end()) continue;
    auto& o = onsets[c.decomposition->onset];
    o.first += it->second;
    ++o.second;
    auto& s = suffixes[c.decomposition->suffix];
    s.first += it->second;
    ++s.second;
  }
  auto rows = [](const auto& acc, lexicon::Position pos) {
    std::vector<ComponentRow> out;
    for (const auto& [cluster, sum_n] : acc)
      out.push_back({cluster, pos, sum_n.first / static_cast<double>(sum_n.second), sum_n.second});
    std::stable_sort(out.begin(), out.end(), [](const ComponentRow& a, const ComponentRow& b) {
      return a.mean_purity != b.mean_purity ? a.mean_purity > b.mean_purity : a.cluster < b.cluster;
    });
    return out;
  };
  return {rows(onsets, lexicon::Position::kOnset), rows(suffixes, lexicon::Position::kSuffix)};
}

std::vector<PurityRow> purity_rows(const std::vector<metrics::PurityResult>& results,
                                   const planner::ExperimentPlan& plan, const lexicon::Lexicon* lexicon) {
  std::map<std::string, std::string, std::less<>> plan_groups;
  for (const auto& job : plan.jobs) plan_groups.emplace(job.tag, job.group);
  std::vector<PurityRow> out;
  out.reserve(results.size());
  for (const auto& r : results) {
    PurityRow row;
    row.tag = r.tag;
    if (const auto* c = lexicon ? lexicon->find(r.tag) : nullptr)
      row.group = std::string(lexicon::group_name(c->group));
    else if (auto it = plan_groups.find(r.tag); it != plan_groups.end())
      row.group = it->second;
    row.purity = r.purity;
    row.hits = static_cast<std::size_t>(std::count(r.per_image_hits.begin(), r.per_image_hits.end(), true));
    row.n_images = r.n_images();
    out.push_back(std::move(row));
  }
  return out;
}

std::string purity_csv(const std::vector<PurityRow>& rows) {
  std::string out = "tag,group,purity,n_images,hits\n";
  for (const auto& r : rows)
    out += join_csv({r.tag, r.group, f4(r.purity), std::to_string(r.n_images), std::to_string(r.hits)});
  return out;
}

std::vector<PurityRow> parse_purity_csv(std::string_view text) {
  std::vector<PurityRow> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || !line.starts_with("tag,group,purity,n_images,hits"))
    fail(ErrorCode::kIntegrity, "purity.csv has an unexpected header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 5) fail(ErrorCode::kIntegrity, "purity.csv row has " + std::to_string(f.size()) + " fields");
    PurityRow r;
    r.tag = f[0];
    r.group = f[1];
    try {
      r.n_images = std::stoul(f[3]);
      r.hits = std::stoul(f[4]);
    } catch (const std::exception&) {
      fail(ErrorCode::kIntegrity, "purity.csv row for '" + r.tag + "' is not numeric");
    }
    if (r.n_images == 0 || r.hits > r.n_images) fail(ErrorCode::kIntegrity, "purity.csv counts out of range");
    // The exact ratio; the printed column is rounded.
    r.purity = static_cast<double>(r.hits) / static_cast<double>(r.n_images);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<ConditionSimilarity> similarity_by_condition(const EmbeddingMatrix& faces) {
  auto record = [&](std::size_t i) {
    EmbeddingRecord r;
    r.job_id = faces.rows[i].job_id;
    r.modality = Modality::kFace;
    r.face_detected = faces.rows[i].face_detected;
    if (r.face_detected) r.vector = std::vector<float>(faces.row(i).begin(), faces.row(i).end());
    return r;
  };
  std::map<std::string, std::vector<EmbeddingRecord>> by_tag;
  std::vector<EmbeddingRecord> all;
  for (std::size_t i = 0; i < faces.n; ++i) {
    by_tag[faces.rows[i].tag].push_back(record(i));
    all.push_back(record(i));
  }
  std::vector<ConditionSimilarity> out;
  for (const auto& [tag, recs] : by_tag) out.push_back({tag, metrics::pairwise_summary(recs)});
  out.push_back({"ALL", metrics::pairwise_summary(all)});
  return out;
}

std::string similarity_csv(const std::vector<ConditionSimilarity>& rows) {
  std::string out = "condition,detection,avg,max\n";
  for (const auto& r : rows) {
    const auto& s = r.summary;
    out += join_csv({r.condition, std::to_string(s.n_faces) + "/" + std::to_string(s.n_images),
                     s.avg_pairwise ? f4(*s.avg_pairwise) : "", s.max_pairwise ? f4(*s.max_pairwise) : ""});
  }
  return out;
}

std::string comparisons_csv(const std::vector<std::tuple<std::string, std::string, stats::GroupComparison>>& rows) {
  std::string out = "group_a,group_b,t,df,p,d\n";
  for (const auto& [a, b, c] : rows)
    out += join_csv({a, b, f4(c.t), format_fixed(c.df, 0), p_text(c.p), f4(c.d)});
  return out;
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

const Artifact* ReportBundle::find(std::string_view file) const {
  for (const auto& a : artifacts)
    if (a.file == file) return &a;
  return nullptr;
}

ReportBundle build_report(const ReportInputs& in) {
  ReportBundle bundle;
  ordered_json sections = ordered_json::object();
  auto skip = [&](const std::string& section, const std::string& reason) {
    bundle.skipped[section] = reason;
    sections[section] = skipped_section(reason);
  };
  auto emit = [&](const std::string& section, const std::string& file, std::string content, ordered_json rows) {
    bundle.artifacts.push_back({file, std::move(content)});
    sections[section] = {{"status", "ok"}, {"file", file}, {"rows", std::move(rows)}};
  };

  std::map<std::string, std::vector<double>> scores_by_group;
  std::map<std::string, double, std::less<>> purity_by_tag;
  if (in.purity) {
    for (const auto& r : *in.purity) {
      purity_by_tag[r.tag] = r.purity;
      if (!r.group.empty()) scores_by_group[r.group].push_back(r.purity);
    }
  }

  // (a) group summary
  if (!in.purity) {
    skip("group_summary", "no purity results (run the purity stage)");
  } else if (scores_by_group.empty()) {
    skip("group_summary", "purity results carry no candidate groups");
  } else {
    std::map<std::string, std::size_t> failed;
    if (in.manifest && in.plan)
      for (const auto& [job_id, fr] : in.manifest->failures)
        if (const auto* job = in.plan->find(job_id)) ++failed[job->group];
    std::vector<std::string> groups;
    for (const auto& [g, _] : scores_by_group) groups.push_back(g);
    std::stable_sort(groups.begin(), groups.end(),
                     [](const std::string& a, const std::string& b) { return group_rank(a) < group_rank(b); });
    std::string csv = "group,n,mean,sd,median,pass_count,pass_rate,failed\n";
    ordered_json rows = ordered_json::array();
    for (const auto& g : groups) {
      const auto s = stats::group_summary(scores_by_group[g], in.pass_threshold, g);
      csv += join_csv({g, std::to_string(s.n), f4(s.mean), f4(s.sd), f4(s.median), std::to_string(s.pass_count),
                       f4(s.pass_rate), std::to_string(failed[g])});
      rows.push_back({{"group", g},
                      {"n", s.n},
                      {"mean", s.mean},
                      {"sd", s.sd},
                      {"median", s.median},
                      {"pass_count", s.pass_count},
                      {"pass_rate", s.pass_rate},
                      {"failed", failed[g]}});
    }
    emit("group_summary", kGroupSummaryCsv, std::move(csv), std::move(rows));
  }

  // (b) comparisons
  if (!in.purity) {
    skip("comparisons", "no purity results (run the purity stage)");
  } else {
    std::vector<std::tuple<std::string, std::string, stats::GroupComparison>> rows;
    ordered_json jrows = ordered_json::array();
    std::vector<std::string> problems;
    for (const auto& [ga, gb] : in.comparisons) {
      const std::string a(lexicon::group_name(ga)), b(lexicon::group_name(gb));
      const auto ia = scores_by_group.find(a), ib = scores_by_group.find(b);
      if (ia == scores_by_group.end() || ib == scores_by_group.end() || ia->second.size() < 2 ||
          ib->second.size() < 2) {
        problems.push_back(a + " vs " + b + ": each group needs at least two candidates");
        continue;
      }
      try {
        const auto c = stats::pooled_t(ia->second, ib->second);
        rows.emplace_back(a, b, c);
        jrows.push_back({{"group_a", a}, {"group_b", b}, {"t", c.t}, {"df", c.df}, {"p", c.p}, {"d", c.d}});
      } catch (const Error& e) {
        problems.push_back(a + " vs " + b + ": " + e.what());
      }
    }
    if (rows.empty()) {
      std::string reason = "no comparable group pairs";
      for (const auto& p : problems) reason += "; " + p;
      skip("comparisons", reason);
    } else {
      emit("comparisons", kComparisonsCsv, comparisons_csv(rows), std::move(jrows));
      for (const auto& p : problems) bundle.skipped["comparisons: " + p.substr(0, p.find(':'))] = p;
    }
  }

  // (c) perfect purity with contamination flags
  if (!in.purity) {
    skip("perfect_purity", "no purity results (run the purity stage)");
  } else if (!in.wordlist) {
    skip("perfect_purity", "no wordlist for the contamination screen");
  } else {
    std::vector<const PurityRow*> perfect;
    for (const auto& r : *in.purity)
      if (r.purity >= in.pass_threshold) perfect.push_back(&r);
    std::stable_sort(perfect.begin(), perfect.end(), [](const PurityRow* a, const PurityRow* b) {
      return std::make_tuple(group_rank(a->group), a->tag) < std::make_tuple(group_rank(b->group), b->tag);
    });
    std::string csv = "candidate,group,purity,verdict,reasons,adjudicated,rationale\n";
    ordered_json rows = ordered_json::array();
    for (const PurityRow* r : perfect) {
      lexicon::CandidateWord word;
      if (const auto* c = in.lexicon ? in.lexicon->find(r->tag) : nullptr)
        word = *c;
      else
        word.surface = r->tag;
      ContaminationFlag flag = contamination_screen(word, *in.wordlist, in.entity_lists);
      apply_adjudication(flag, in.adjudications);
      csv += join_csv({r->tag, r->group, f4(r->purity), std::string(verdict_name(flag.verdict)), reasons_text(flag),
                       flag.adjudicated ? "yes" : "no", flag.rationale});
      ordered_json reasons = ordered_json::array();
      for (const auto& re : flag.reasons) {
        ordered_json jr = {{"kind", reason_name(re.kind)}};
        if (!re.detail.empty()) jr["detail"] = re.detail;
        reasons.push_back(std::move(jr));
      }
      rows.push_back({{"candidate", r->tag},
                      {"group", r->group},
                      {"purity", r->purity},
                      {"verdict", verdict_name(flag.verdict)},
                      {"reasons", std::move(reasons)},
                      {"adjudicated", flag.adjudicated},
                      {"rationale", flag.rationale}});
    }
    emit("perfect_purity", kPerfectPurityCsv, std::move(csv), std::move(rows));
  }

  // (d) component analysis
  if (!in.purity) {
    skip("components", "no purity results (run the purity stage)");
  } else if (!in.lexicon) {
    skip("components", "no lexicon in the run directory");
  } else {
    const ComponentTables t = component_analysis(purity_by_tag, *in.lexicon);
    if (t.onsets.empty()) {
      skip("components", "no phonestheme candidates with purity results");
    } else {
      auto table = [&](const std::vector<ComponentRow>& rows, const char* head, const char* file) {
        std::string csv = std::string(head) + ",mean_purity,n\n";
        ordered_json jrows = ordered_json::array();
        for (const auto& r : rows) {
          csv += join_csv({r.cluster, f4(r.mean_purity), std::to_string(r.n)});
          jrows.push_back({{head, r.cluster}, {"mean_purity", r.mean_purity}, {"n", r.n}});
        }
        bundle.artifacts.push_back({file, std::move(csv)});
        return ordered_json{{"status", "ok"}, {"file", file}, {"rows", std::move(jrows)}};
      };
      sections["components"] = {{"onset", table(t.onsets, "onset", kComponentsOnsetCsv)},
                                {"suffix", table(t.suffixes, "suffix", kComponentsSuffixCsv)}};
    }
  }

  // (e) similarity by condition
  std::vector<ConditionSimilarity> similarity;
  if (!in.faces) {
    skip("similarity", "no face embeddings (run embed with modality face, then facesim)");
  } else {
    similarity = similarity_by_condition(*in.faces);
    ordered_json rows = ordered_json::array();
    for (const auto& r : similarity) {
      ordered_json jr = {{"condition", r.condition},
                         {"n_images", r.summary.n_images},
                         {"n_faces", r.summary.n_faces},
                         {"detection_rate", r.summary.detection_rate}};
      jr["avg"] = r.summary.avg_pairwise ? ordered_json(*r.summary.avg_pairwise) : ordered_json(nullptr);
      jr["max"] = r.summary.max_pairwise ? ordered_json(*r.summary.max_pairwise) : ordered_json(nullptr);
      rows.push_back(std::move(jr));
    }
    emit("similarity", kSimilarityCsv, similarity_csv(similarity), std::move(rows));
  }

  // (f) plot series
  ordered_json series = ordered_json::array();
  std::map<std::string, std::string> plot_skips;
  if (in.purity && !scores_by_group.empty()) {
    std::vector<std::string> groups;
    for (const auto& [g, _] : scores_by_group) groups.push_back(g);
    std::stable_sort(groups.begin(), groups.end(),
                     [](const std::string& a, const std::string& b) { return group_rank(a) < group_rank(b); });
    for (const auto& g : groups) {
      std::map<double, std::size_t> counts;
      for (double v : scores_by_group[g]) ++counts[v];
      ordered_json xs = ordered_json::array(), ys = ordered_json::array();
      for (const auto& [v, c] : counts) {
        xs.push_back(v);
        ys.push_back(c);
      }
      series.push_back({{"label", "purity_distribution:" + g}, {"x", xs}, {"y", ys}});
    }
  } else {
    plot_skips["purity_distribution"] = "no grouped purity results";
  }

  auto sweep_series = [&](const std::string& axis, auto value_of) {
    if (!in.plan) {
      plot_skips[axis] = "no plan";
      return;
    }
    std::map<std::string, double> tag_value;
    std::set<double> distinct;
    for (const auto& job : in.plan->jobs)
      if (auto v = value_of(job)) {
        tag_value[job.tag] = *v;
        distinct.insert(*v);
      }
    if (distinct.size() < 2) {
      plot_skips[axis] = "plan does not sweep " + axis;
      return;
    }
    bool any = false;
    auto add = [&](const std::string& label, const std::map<std::string, double>& y_by_tag) {
      std::vector<std::pair<double, double>> pts;
      for (const auto& [tag, y] : y_by_tag)
        if (auto it = tag_value.find(tag); it != tag_value.end()) pts.emplace_back(it->second, y);
      if (pts.empty()) return;
      std::sort(pts.begin(), pts.end());
      ordered_json xs = ordered_json::array(), ys = ordered_json::array();
      for (const auto& [x, y] : pts) {
        xs.push_back(x);
        ys.push_back(y);
      }
      series.push_back({{"label", label}, {"x", xs}, {"y", ys}});
      any = true;
    };
    if (in.purity) {
      std::map<std::string, double> y(purity_by_tag.begin(), purity_by_tag.end());
      add("purity_vs_" + axis, y);
    }
    std::map<std::string, double> face_avg;
    for (const auto& r : similarity)
      if (r.summary.avg_pairwise) face_avg[r.condition] = *r.summary.avg_pairwise;
    add("face_avg_pairwise_vs_" + axis, face_avg);
    if (!any) plot_skips[axis] = "no purity or face results for the sweep";
  };
  sweep_series("guidance_scale", [](const planner::GenerationJob& j) -> std::optional<double> {
    return j.guidance_scale;
  });
  sweep_series("adapter_weight", [](const planner::GenerationJob& j) -> std::optional<double> {
    return j.adapter_weight ? std::optional<double>(*j.adapter_weight) : std::optional<double>(0.0);
  });

  for (const auto& [k, v] : plot_skips) bundle.skipped["plots: " + k] = v;
  if (series.empty()) {
    skip("plots", "no plottable series");
  } else {
    ordered_json plots = {{"series", series}};
    bundle.artifacts.push_back({kPlotsJson, plots.dump(2) + "\n"});
    ordered_json skipped_series = ordered_json::object();
    for (const auto& [k, v] : plot_skips) skipped_series[k] = v;
    sections["plots"] = {{"status", "ok"}, {"file", kPlotsJson}, {"series", series}, {"skipped_series", skipped_series}};
  }

  // (g) summary
  ordered_json summary;
  summary["schema_version"] = 1;
  summary["plan"] = in.plan ? ordered_json(in.plan->name) : ordered_json(nullptr);
  ordered_json prov = ordered_json::object();
  for (const auto& [k, v] : in.provenance) prov[k] = v;
  summary["provenance"] = std::move(prov);
  summary["sections"] = std::move(sections);
  ordered_json skipped = ordered_json::object();
  for (const auto& [k, v] : bundle.skipped) skipped[k] = v;
  summary["skipped"] = std::move(skipped);
  bundle.artifacts.push_back({kSummaryJson, summary.dump(2) + "\n"});
  return bundle;
}

}  // namespace morphprobe::report
