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

#include "pipeline.hpp"

#include <algorithm>

#include "metrics.hpp"
#include "report.hpp"
#include "stats.hpp"
#include "store.hpp"

namespace morphprobe::pipeline {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr const char* kBackendModeKey = "backend_mode";

template <typename T>
T opt(const json& o, const char* key, T fallback) {
  if (!o.is_object() || !o.contains(key) || o.at(key).is_null()) return fallback;
  try {
    return o.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfiguration, std::string("option '") + key + "': " + e.what());
  }
}

void require(const fs::path& path, const std::string& hint) {
  if (!fs::exists(path)) fail(ErrorCode::kMissingArtifact, path.filename().string() + " (" + hint + ")");
}

ordered_json read_config(const fs::path& run_dir) {
  const fs::path p = run_dir / store::kConfigFile;
  if (!fs::exists(p)) return ordered_json::object();
  try {
    return ordered_json::parse(read_file(p));
  } catch (const json::exception& e) {
    fail(ErrorCode::kIntegrity, std::string("config.json is not valid JSON: ") + e.what());
  }
}

void record_config(const fs::path& run_dir, const std::string& key, ordered_json value) {
  ordered_json cfg = read_config(run_dir);
  cfg[key] = std::move(value);
  fs::create_directories(run_dir);
  write_file_atomic(run_dir / store::kConfigFile, cfg.dump(2) + "\n");
}

// Stub and live backends never mix within one run directory.
void claim_backend_mode(const fs::path& run_dir, bool stub) {
  const std::string mode = stub ? "stub" : "live";
  ordered_json cfg = read_config(run_dir);
  if (cfg.contains(kBackendModeKey) && cfg[kBackendModeKey].get<std::string>() != mode)
    fail(ErrorCode::kConfiguration, "run directory was produced with the " + cfg[kBackendModeKey].get<std::string>() +
                                        " backend; refusing to continue with the " + mode + " backend");
  record_config(run_dir, kBackendModeKey, mode);
}

lexicon::Wordlist load_wordlist(const std::string& path) {
  return path.empty() ? lexicon::Wordlist::bundled() : lexicon::Wordlist::load(path);
}

std::optional<lexicon::Lexicon> maybe_lexicon(const fs::path& run_dir) {
  const fs::path p = run_dir / store::kLexiconFile;
  if (!fs::exists(p)) return std::nullopt;
  return lexicon::parse_lexicon(read_file(p));
}

std::unique_ptr<store::RunStore> open_store(const fs::path& run_dir) {
  require(run_dir / store::kPlanFile, "run the plan stage first");
  return store::RunStore::open_existing(run_dir);
}

runner::RunOptions run_options(const BackendConfig& config, const std::atomic<bool>* cancel) {
  runner::RunOptions o;
  o.max_in_flight = config.max_in_flight;
  o.retry.backoff.clear();
  for (int ms : config.retry_backoff_ms) o.retry.backoff.emplace_back(ms);
  if (cancel) o.should_stop = [cancel] { return cancel->load(); };
  return o;
}

std::vector<std::int64_t> seed_list(const json& o, std::vector<std::int64_t> fallback) {
  if (o.is_object() && o.contains("seed_range")) {
    const auto r = opt<std::vector<std::int64_t>>(o, "seed_range", {});
    if (r.size() != 2 || r[0] > r[1]) fail(ErrorCode::kConfiguration, "seed_range must be [first, last]");
    return planner::SeedRange{r[0], r[1]}.expand();
  }
  return opt(o, "seeds", std::move(fallback));
}

planner::SeedRange as_range(const std::vector<std::int64_t>& seeds) {
  if (seeds.empty()) fail(ErrorCode::kConfiguration, "seed list is empty");
  for (std::size_t i = 1; i < seeds.size(); ++i)
    if (seeds[i] != seeds[i - 1] + 1) fail(ErrorCode::kConfiguration, "this plan needs a contiguous seed range");
  return {seeds.front(), seeds.back()};
}

ordered_json purity_summary(const std::vector<report::PurityRow>& rows) {
  std::map<std::string, std::vector<double>> by_group;
  for (const auto& r : rows) by_group[r.group.empty() ? "(none)" : r.group].push_back(r.purity);
  ordered_json groups = ordered_json::object();
  for (const auto& [g, xs] : by_group) {
    const auto s = stats::group_summary(xs);
    groups[g] = {{"n", s.n}, {"mean", s.mean}, {"pass_count", s.pass_count}};
  }
  return groups;
}

std::vector<report::EntityList> entity_lists_from(const json& o) {
  std::vector<report::EntityList> out;
  if (!o.is_object() || !o.contains("entity_lists")) return out;
  for (const auto& e : o.at("entity_lists")) {
    const std::string path = e.is_string() ? e.get<std::string>() : e.at("path").get<std::string>();
    const std::string name = e.is_object() && e.contains("name") ? e.at("name").get<std::string>()
                                                                 : fs::path(path).stem().string();
    out.push_back({name, lexicon::Wordlist::load(path)});
  }
  return out;
}

}  // namespace

// --- Configuration -----------------------------------------------------------

lexicon::LexiconConfig lexicon_config_from_json(const json& o) {
  lexicon::LexiconConfig c;
  c.seed = opt<std::uint64_t>(o, "seed", c.seed);
  c.phonestheme_count = opt<std::size_t>(o, "phonestheme_count", c.phonestheme_count);
  c.random_count = opt<std::size_t>(o, "random_count", c.random_count);
  c.negative_count = opt<std::size_t>(o, "negative_count", c.negative_count);
  c.include_positive_controls = opt<bool>(o, "positive_controls", c.include_positive_controls);
  c.phonestheme_length.min = opt<std::size_t>(o, "phonestheme_min_length", c.phonestheme_length.min);
  c.phonestheme_length.max = opt<std::size_t>(o, "phonestheme_max_length", c.phonestheme_length.max);
  c.negative_length.min = opt<std::size_t>(o, "negative_min_length", c.negative_length.min);
  c.negative_length.max = opt<std::size_t>(o, "negative_max_length", c.negative_length.max);
  c.cv_patterns = opt(o, "cv_patterns", c.cv_patterns);
  c.avoid_inventory_affixes = opt<bool>(o, "avoid_inventory_affixes", c.avoid_inventory_affixes);
  c.pinned_phonesthemes = opt(o, "pinned", c.pinned_phonesthemes);
  return c;
}

ordered_json lexicon_config_to_json(const lexicon::LexiconConfig& c) {
  return {{"seed", c.seed},
          {"phonestheme_count", c.phonestheme_count},
          {"random_count", c.random_count},
          {"negative_count", c.negative_count},
          {"positive_controls", c.include_positive_controls},
          {"phonestheme_min_length", c.phonestheme_length.min},
          {"phonestheme_max_length", c.phonestheme_length.max},
          {"negative_min_length", c.negative_length.min},
          {"negative_max_length", c.negative_length.max},
          {"cv_patterns", c.cv_patterns},
          {"avoid_inventory_affixes", c.avoid_inventory_affixes},
          {"pinned", c.pinned_phonesthemes}};
}

planner::ExperimentPlan plan_from_options(const json& o, const lexicon::Lexicon* lex) {
  const std::string kind = opt<std::string>(o, "kind", "crungus-hunt");
  planner::GenerationSettings s;
  s.width = opt(o, "width", s.width);
  s.height = opt(o, "height", s.height);
  s.steps = opt(o, "steps", s.steps);
  s.guidance_scale = opt(o, "guidance_scale", s.guidance_scale);
  s.adapter_name = opt(o, "adapter_name", s.adapter_name);
  if (s.width <= 0 || s.height <= 0 || s.steps <= 0 || !(s.guidance_scale > 0.0))
    fail(ErrorCode::kConfiguration, "width, height, steps and guidance_scale must be positive");

  if (kind == "crungus-hunt") {
    if (!lex) fail(ErrorCode::kMissingArtifact, "lexicon.json (run the lexicon stage first)");
    const auto seeds = as_range(seed_list(o, planner::SeedRange{1000, 1015}.expand()));
    return planner::plan_crungus_hunt(*lex, seeds, opt<std::string>(o, "template", std::string(planner::kDefaultTemplate)),
                                      s);
  }
  if (kind == "push-pull") {
    std::vector<planner::Arm> arms;
    for (const auto& a : opt<std::vector<std::string>>(o, "arms", {"A", "B", "C"})) arms.push_back(planner::parse_arm(a));
    const auto seeds = as_range(seed_list(o, planner::SeedRange{1, 10}.expand()));
    std::optional<double> weight;
    if (o.is_object() && o.contains("adapter_weight") && !o.at("adapter_weight").is_null())
      weight = opt<double>(o, "adapter_weight", 0.0);
    return planner::plan_push_pull_arms(arms, seeds, weight, s);
  }
  const std::string prompt = opt<std::string>(o, "base_prompt", std::string(planner::kNeutralPrompt));
  const auto seeds = seed_list(o, {1, 2, 3});
  if (kind == "cfg-sweep")
    return planner::plan_cfg_sweep(opt<std::vector<double>>(o, "cfg_values", {5, 7, 8, 9, 11}), seeds, prompt, s);
  if (kind == "adapter-sweep")
    return planner::plan_adapter_weight_sweep(opt<std::vector<double>>(o, "weights", {0.0, 0.25, 0.5, 0.75, 1.0}),
                                              seeds, prompt, s);
  fail(ErrorCode::kConfiguration, "unknown plan kind '" + kind + "' (crungus-hunt, push-pull, cfg-sweep, adapter-sweep)");
}

BackendConfig BackendConfig::from_json(const json& o) {
  BackendConfig c;
  const std::string mode = opt<std::string>(o, "mode", "stub");
  if (mode != "stub" && mode != "live") fail(ErrorCode::kConfiguration, "backend mode must be 'stub' or 'live'");
  c.stub = mode == "stub";
  c.generation_url = opt(o, "generation_url", c.generation_url);
  c.embedding_url = opt(o, "embedding_url", c.generation_url);
  c.timeout_seconds = opt(o, "timeout_seconds", c.timeout_seconds);
  c.max_in_flight = opt(o, "max_in_flight", c.max_in_flight);
  c.concept_map = opt(o, "concept_map", c.concept_map);
  c.master_seed = opt(o, "master_seed", c.master_seed);
  c.latency_ms = opt(o, "latency_ms", c.latency_ms);
  c.expected_backend_id = opt(o, "expected_backend_id", c.expected_backend_id);
  c.retry_backoff_ms = opt(o, "retry_backoff_ms", c.retry_backoff_ms);
  if (c.max_in_flight == 0) fail(ErrorCode::kConfiguration, "max_in_flight must be at least 1");
  if (c.stub && (!c.generation_url.empty() || !c.embedding_url.empty()))
    fail(ErrorCode::kConfiguration, "stub mode and live endpoints are mutually exclusive");
  if (!c.stub && (c.generation_url.empty() || c.embedding_url.empty()))
    fail(ErrorCode::kConfiguration, "live mode needs generation_url (and optionally embedding_url)");
  if (!c.stub && !c.concept_map.empty())
    fail(ErrorCode::kConfiguration, "a concept map only applies to the stub backend");
  return c;
}

ordered_json BackendConfig::to_json() const {
  ordered_json j;
  j["mode"] = stub ? "stub" : "live";
  if (stub) {
    j["concept_map"] = concept_map;
    j["master_seed"] = master_seed;
    j["latency_ms"] = latency_ms;
  } else {
    j["generation_url"] = generation_url;
    j["embedding_url"] = embedding_url;
    j["timeout_seconds"] = timeout_seconds;
    j["expected_backend_id"] = expected_backend_id;
  }
  j["max_in_flight"] = max_in_flight;
  j["retry_backoff_ms"] = retry_backoff_ms;
  return j;
}

std::unique_ptr<backend::Backend> make_backend(const BackendConfig& c) {
  if (c.stub) {
    backend::ConceptMap map = c.concept_map.empty() ? backend::ConceptMap{} : backend::ConceptMap::load(c.concept_map);
    return std::make_unique<backend::StubBackend>(std::move(map), c.master_seed, std::chrono::milliseconds(c.latency_ms));
  }
  backend::BackendEndpoint gen{c.generation_url, backend::EndpointKind::kGeneration, c.timeout_seconds, c.max_in_flight};
  backend::BackendEndpoint emb{c.embedding_url, backend::EndpointKind::kImageEmbedding, c.timeout_seconds,
                               c.max_in_flight};
  return std::make_unique<backend::HttpBackend>(gen, emb, c.expected_backend_id);
}

// --- Stages ------------------------------------------------------------------

ordered_json stage_lexicon(const fs::path& run_dir, const json& o) {
  const lexicon::LexiconConfig config = lexicon_config_from_json(o);
  const std::string wordlist_path = opt<std::string>(o, "wordlist", "");
  const lexicon::Wordlist words = load_wordlist(wordlist_path);
  const lexicon::Lexicon lex = lexicon::build_lexicon(config, words);
  const std::string text = lexicon::serialize(lex);
  const fs::path path = run_dir / store::kLexiconFile;
  if (fs::exists(path) && read_file(path) != text) {
    if (fs::exists(run_dir / store::kPlanFile))
      fail(ErrorCode::kPlanMismatch, "lexicon.json differs and a plan already depends on it; use a new run directory");
  }
  fs::create_directories(run_dir);
  write_file_atomic(path, text);

  ordered_json resolved = lexicon_config_to_json(config);
  resolved["wordlist"] = wordlist_path.empty() ? "bundled" : wordlist_path;
  resolved["wordlist_hash"] = words.hash();
  resolved["inventory_version"] = lex.inventory_version;
  record_config(run_dir, "lexicon", resolved);

  ordered_json counts = ordered_json::object();
  for (auto g : lexicon::kAllGroups) counts[std::string(lexicon::group_name(g))] = lex.count(g);
  return {{"stage", "lexicon"},
          {"file", (run_dir / store::kLexiconFile).string()},
          {"candidates", lex.candidates.size()},
          {"groups", counts},
          {"lexicon_hash", sha256_hex(text)},
          {"wordlist_hash", words.hash()}};
}

ordered_json stage_plan(const fs::path& run_dir, const json& o) {
  const auto lex = maybe_lexicon(run_dir);
  const planner::ExperimentPlan plan = plan_from_options(o, lex ? &*lex : nullptr);
  auto st = store::RunStore::open(run_dir, plan);
  ordered_json resolved = o.is_object() ? ordered_json(o) : ordered_json::object();
  resolved["kind"] = opt<std::string>(o, "kind", "crungus-hunt");
  resolved["name"] = plan.name;
  record_config(run_dir, "plan", resolved);
  const auto m = st->manifest();
  return {{"stage", "plan"},
          {"name", plan.name},
          {"jobs", plan.jobs.size()},
          {"plan_hash", planner::plan_hash(plan)},
          {"run_id", m.run_id},
          {"done", m.count(store::JobStatus::kDone)}};
}

ordered_json stage_run(const fs::path& run_dir, const json& o, const std::atomic<bool>* cancel) {
  auto st = open_store(run_dir);
  const BackendConfig bc = BackendConfig::from_json(o);
  claim_backend_mode(run_dir, bc.stub);
  record_config(run_dir, "run", bc.to_json());
  auto backend = make_backend(bc);
  const auto report = runner::run_plan(st->plan(), *backend, *st, run_options(bc, cancel));
  return {{"stage", "run"},
          {"jobs", st->plan().jobs.size()},
          {"done", report.records.size()},
          {"generated", report.generated},
          {"cached", report.cached},
          {"failed", report.failures.size()},
          {"cancelled", report.cancelled}};
}

ordered_json stage_embed(const fs::path& run_dir, const json& o, const std::atomic<bool>* cancel) {
  auto st = open_store(run_dir);
  const Modality modality = parse_modality(opt<std::string>(o, "modality", "image_clip"));
  const BackendConfig bc = BackendConfig::from_json(o);
  claim_backend_mode(run_dir, bc.stub);
  ordered_json resolved = bc.to_json();
  resolved["modality"] = std::string(modality_name(modality));
  record_config(run_dir, "embed_" + std::string(modality_name(modality)), resolved);

  const store::RunManifest m = st->manifest();
  const std::size_t pending = m.count(store::JobStatus::kPending);
  if (pending > 0)
    fail(ErrorCode::kMissingArtifact, "images for " + std::to_string(pending) + " pending jobs (run the run stage)");
  if (m.images.empty()) fail(ErrorCode::kMissingArtifact, "images/ (no completed generation jobs)");

  std::vector<store::ImageRecord> done;
  for (const auto& job : st->plan().jobs)
    if (m.status.at(job.job_id) == store::JobStatus::kDone) done.push_back(m.images.at(job.job_id));

  // Reuse rows already embedded for the same jobs.
  const fs::path out = st->embeddings_path(modality);
  std::map<std::string, EmbeddingRecord> cached;
  if (fs::exists(out)) {
    const EmbeddingMatrix prev = store::read_embeddings(out);
    for (std::size_t i = 0; i < prev.n; ++i) {
      EmbeddingRecord r;
      r.job_id = prev.rows[i].job_id;
      r.modality = modality;
      r.face_detected = prev.rows[i].face_detected;
      if (modality != Modality::kFace || r.face_detected)
        r.vector = std::vector<float>(prev.row(i).begin(), prev.row(i).end());
      cached.emplace(r.job_id, std::move(r));
    }
  }
  std::vector<store::ImageRecord> todo;
  for (const auto& r : done)
    if (!cached.contains(r.job_id)) todo.push_back(r);
  const bool unchanged = todo.empty() && cached.size() == done.size();

  std::size_t detected = 0;
  if (!unchanged) {
    auto backend = make_backend(bc);
    auto fresh = runner::embed_images(todo, modality, *backend, *st, run_options(bc, cancel));
    std::vector<EmbeddingRecord> all;
    for (const auto& r : done) {
      if (auto it = cached.find(r.job_id); it != cached.end()) all.push_back(it->second);
    }
    for (auto& r : fresh) all.push_back(std::move(r));
    const EmbeddingMatrix matrix = store::assemble_matrix(all, st->plan(), modality);
    fs::create_directories(out.parent_path());
    store::write_embeddings(out, matrix);
  }
  const EmbeddingMatrix written = store::read_embeddings(out);
  for (const auto& r : written.rows) detected += r.face_detected ? 1 : 0;
  ordered_json summary = {{"stage", "embed"},
                          {"modality", modality_name(modality)},
                          {"file", out.string()},
                          {"rows", written.n},
                          {"dimension", written.d},
                          {"embedded", unchanged ? 0 : todo.size()},
                          {"reused", unchanged ? done.size() : done.size() - todo.size()}};
  if (modality == Modality::kFace) summary["faces_detected"] = detected;
  return summary;
}

ordered_json stage_purity(const fs::path& run_dir, const json& o) {
  auto st = open_store(run_dir);
  const fs::path emb = st->embeddings_path(Modality::kImageClip);
  require(emb, "run embed with modality image_clip first");
  const EmbeddingMatrix matrix = store::read_embeddings(emb);
  metrics::PurityOptions po;
  po.threads = opt<std::size_t>(o, "threads", 0);
  std::vector<std::string> tags;
  tags.reserve(matrix.n);
  for (const auto& r : matrix.rows) tags.push_back(r.tag);
  const auto results = metrics::purity_at_1(matrix, tags, po);
  const auto lex = maybe_lexicon(run_dir);
  const auto rows = report::purity_rows(results, st->plan(), lex ? &*lex : nullptr);
  fs::create_directories(st->reports_dir());
  const fs::path out = st->reports_dir() / report::kPurityCsv;
  write_file_atomic(out, report::purity_csv(rows));
  std::size_t perfect = 0;
  for (const auto& r : rows) perfect += r.purity >= 1.0 ? 1 : 0;
  return {{"stage", "purity"},
          {"file", out.string()},
          {"tags", rows.size()},
          {"images", matrix.n},
          {"perfect", perfect},
          {"groups", purity_summary(rows)}};
}

ordered_json stage_facesim(const fs::path& run_dir, const json&) {
  auto st = open_store(run_dir);
  const fs::path emb = st->embeddings_path(Modality::kFace);
  require(emb, "run embed with modality face first");
  const EmbeddingMatrix faces = store::read_embeddings(emb);
  const auto rows = report::similarity_by_condition(faces);
  fs::create_directories(st->reports_dir());
  const fs::path out = st->reports_dir() / report::kSimilarityCsv;
  write_file_atomic(out, report::similarity_csv(rows));
  const auto& all = rows.back().summary;
  ordered_json summary = {{"stage", "facesim"},
                          {"file", out.string()},
                          {"conditions", rows.size() - 1},
                          {"images", all.n_images},
                          {"faces", all.n_faces},
                          {"detection_rate", all.detection_rate}};
  summary["avg_pairwise"] = all.avg_pairwise ? ordered_json(*all.avg_pairwise) : ordered_json(nullptr);
  summary["max_pairwise"] = all.max_pairwise ? ordered_json(*all.max_pairwise) : ordered_json(nullptr);
  return summary;
}

ordered_json stage_stats(const fs::path& run_dir, const json& o) {
  const fs::path purity = run_dir / store::kReportsDir / report::kPurityCsv;
  require(purity, "run the purity stage first");
  const auto rows = report::parse_purity_csv(read_file(purity));
  std::map<std::string, std::vector<double>> by_group;
  for (const auto& r : rows)
    if (!r.group.empty()) by_group[r.group].push_back(r.purity);

  std::vector<std::string> pairs = opt<std::vector<std::string>>(
      o, "compare",
      {"phonestheme:random_pronounceable", "phonestheme:negative_control", "random_pronounceable:negative_control"});
  const bool welch = opt<bool>(o, "welch", false);
  const double threshold = opt<double>(o, "threshold", 1.0);

  std::vector<std::tuple<std::string, std::string, stats::GroupComparison>> out;
  ordered_json comparisons = ordered_json::array();
  for (const auto& spec : pairs) {
    const auto colon = spec.find(':');
    if (colon == std::string::npos) fail(ErrorCode::kConfiguration, "comparison '" + spec + "' must be a:b");
    const std::string a = spec.substr(0, colon), b = spec.substr(colon + 1);
    lexicon::parse_group(a);
    lexicon::parse_group(b);
    if (!by_group.contains(a) || !by_group.contains(b))
      fail(ErrorCode::kMissingArtifact, "purity results for group " + (by_group.contains(a) ? b : a));
    const auto c = welch ? stats::welch_t(by_group[a], by_group[b]) : stats::pooled_t(by_group[a], by_group[b]);
    out.emplace_back(a, b, c);
    comparisons.push_back({{"group_a", a}, {"group_b", b}, {"t", c.t}, {"df", c.df}, {"p", c.p}, {"d", c.d}});
  }
  ordered_json summaries = ordered_json::array();
  for (auto g : lexicon::kAllGroups) {
    const std::string name(lexicon::group_name(g));
    if (!by_group.contains(name)) continue;
    const auto s = stats::group_summary(by_group[name], threshold, name);
    summaries.push_back({{"group", name},
                         {"n", s.n},
                         {"mean", s.mean},
                         {"sd", s.sd},
                         {"median", s.median},
                         {"pass_count", s.pass_count}});
  }
  const fs::path file = run_dir / store::kReportsDir / "stats.csv";
  write_file_atomic(file, report::comparisons_csv(out));
  ordered_json resolved = {{"compare", pairs}, {"welch", welch}, {"threshold", threshold}};
  record_config(run_dir, "stats", resolved);
  return {{"stage", "stats"},
          {"file", file.string()},
          {"test", welch ? "welch" : "pooled"},
          {"comparisons", comparisons},
          {"groups", summaries}};
}

ordered_json stage_report(const fs::path& run_dir, const json& o) {
  auto st = open_store(run_dir);
  const auto lex = maybe_lexicon(run_dir);
  const store::RunManifest manifest = st->manifest();

  std::optional<std::vector<report::PurityRow>> purity;
  const fs::path purity_path = st->reports_dir() / report::kPurityCsv;
  if (fs::exists(purity_path)) purity = report::parse_purity_csv(read_file(purity_path));
  std::optional<EmbeddingMatrix> faces;
  const fs::path face_path = st->embeddings_path(Modality::kFace);
  if (fs::exists(face_path)) faces = store::read_embeddings(face_path);

  const std::string wordlist_path = opt<std::string>(o, "wordlist", "");
  const lexicon::Wordlist words = load_wordlist(wordlist_path);

  report::ReportInputs in;
  in.plan = &st->plan();
  in.lexicon = lex ? &*lex : nullptr;
  in.manifest = &manifest;
  in.purity = purity ? &*purity : nullptr;
  in.faces = faces ? &*faces : nullptr;
  in.wordlist = &words;
  in.entity_lists = entity_lists_from(o);
  const std::string adjudication = opt<std::string>(o, "adjudication", "");
  if (!adjudication.empty()) in.adjudications = report::load_adjudications(adjudication);
  in.pass_threshold = opt<double>(o, "threshold", 1.0);

  in.provenance["plan_hash"] = manifest.plan_hash;
  in.provenance["run_id"] = manifest.run_id;
  in.provenance["wordlist_hash"] = words.hash();
  if (lex) in.provenance["lexicon_hash"] = sha256_hex(read_file(run_dir / store::kLexiconFile));
  for (Modality m : {Modality::kImageClip, Modality::kFace}) {
    const fs::path p = st->embeddings_path(m);
    if (fs::exists(p)) in.provenance["embeddings_" + std::string(modality_name(m))] = sha256_hex(read_file(p));
  }
  if (purity) in.provenance["purity_csv"] = sha256_hex(read_file(purity_path));
  for (const auto& e : in.entity_lists) in.provenance["entity_list_" + e.name] = e.words.hash();
  if (!adjudication.empty()) in.provenance["adjudication"] = sha256_hex(read_file(adjudication));

  const report::ReportBundle bundle = report::build_report(in);
  fs::create_directories(st->reports_dir());
  ordered_json files = ordered_json::array();
  for (const auto& a : bundle.artifacts) {
    write_file_atomic(st->reports_dir() / a.file, a.content);
    files.push_back(a.file);
  }
  ordered_json skipped = ordered_json::object();
  for (const auto& [k, v] : bundle.skipped) skipped[k] = v;

  ordered_json resolved = {{"wordlist", wordlist_path.empty() ? "bundled" : wordlist_path},
                           {"adjudication", adjudication},
                           {"threshold", in.pass_threshold}};
  ordered_json ents = ordered_json::array();
  for (const auto& e : in.entity_lists) ents.push_back(e.name);
  resolved["entity_lists"] = ents;
  record_config(run_dir, "report", resolved);
  return {{"stage", "report"}, {"dir", st->reports_dir().string()}, {"artifacts", files}, {"skipped", skipped}};
}

ordered_json run_stage(const fs::path& run_dir, std::string_view stage, const json& options,
                       const std::atomic<bool>* cancel) {
  const json& o = options.is_null() ? json::object() : options;
  if (!o.is_object()) fail(ErrorCode::kConfiguration, "stage options must be a JSON object");
  if (stage == "lexicon") return stage_lexicon(run_dir, o);
  if (stage == "plan") return stage_plan(run_dir, o);
  if (stage == "run") return stage_run(run_dir, o, cancel);
  if (stage == "embed") return stage_embed(run_dir, o, cancel);
  if (stage == "purity") return stage_purity(run_dir, o);
  if (stage == "facesim") return stage_facesim(run_dir, o);
  if (stage == "stats") return stage_stats(run_dir, o);
  if (stage == "report") return stage_report(run_dir, o);
  fail(ErrorCode::kInvalidArgument, "unknown stage '" + std::string(stage) + "'");
}

}  // namespace morphprobe::pipeline
