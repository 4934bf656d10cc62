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

// Command-line front end over the morphprobe C API.
//
//   morphprobe --run-dir runs/r1 lexicon --seed 42
//   morphprobe --run-dir runs/r1 plan crungus-hunt
//   morphprobe --run-dir runs/r1 run --stub --concept-map concepts.json
//   morphprobe --run-dir runs/r1 embed --stub
//   morphprobe --run-dir runs/r1 purity
//   morphprobe --run-dir runs/r1 stats --compare phonestheme:random_pronounceable
//   morphprobe --run-dir runs/r1 report
//
// Each subcommand prints one JSON line on stdout. Exit codes: 0 ok, 1 usage
// or configuration, 2 missing prerequisite, 3 backend failure, 4 internal
// invariant violation.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "morphprobe/morphprobe.h"

namespace {

using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitMissing = 2;
constexpr int kExitBackend = 3;
constexpr int kExitInvariant = 4;
constexpr const char* kBackendUrlEnv = "MORPHPROBE_BACKEND_URL";

int exit_code_for(mp_status s) {
  switch (s) {
    case MP_OK: return kExitOk;
    case MP_ERR_MISSING_ARTIFACT: return kExitMissing;
    case MP_ERR_BACKEND:
    case MP_ERR_PROTOCOL: return kExitBackend;
    case MP_ERR_INVARIANT:
    case MP_ERR_INTEGRITY:
    case MP_ERR_CORRUPTION:
    case MP_ERR_INTERNAL: return kExitInvariant;
    default: return kExitUsage;
  }
}

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path);
  try {
    json j = json::parse(in);
    if (!j.is_object()) throw UsageError("config file must hold a JSON object");
    return j;
  } catch (const json::exception& e) {
    throw UsageError("config file is not valid JSON: " + std::string(e.what()));
  }
}

json section(const json& config, const char* key) {
  return config.contains(key) && config[key].is_object() ? config[key] : json::object();
}

template <typename T>
void put(json& j, const char* key, const std::optional<T>& value) {
  if (value) j[key] = *value;
}

template <typename T>
void put(json& j, const char* key, const std::vector<T>& values) {
  if (!values.empty()) j[key] = values;
}

struct BackendFlags {
  bool stub = false;
  std::optional<std::string> url;
  std::optional<std::string> embed_url;
  std::optional<std::string> concept_map;
  std::optional<std::uint64_t> master_seed;
  std::optional<std::size_t> max_in_flight;
  std::optional<double> timeout;
  std::optional<int> latency_ms;
  std::optional<std::string> expected_backend_id;
  std::vector<int> retry_backoff_ms;

  void add_to(CLI::App* cmd) {
    auto* stub_flag = cmd->add_flag("--stub", stub, "Use the deterministic stub backend");
    auto* url_opt = cmd->add_option("--backend-url", url, "Base URL of a live backend (also $" + std::string(kBackendUrlEnv) + ")");
    stub_flag->excludes(url_opt);
    cmd->add_option("--embed-url", embed_url, "Base URL of the embedding service (defaults to --backend-url)")
        ->excludes(stub_flag);
    cmd->add_option("--concept-map", concept_map, "Stub concept map (JSON)")->excludes(url_opt);
    cmd->add_option("--master-seed", master_seed, "Stub master seed");
    cmd->add_option("--max-in-flight", max_in_flight, "Concurrent backend requests")->check(CLI::PositiveNumber);
    cmd->add_option("--timeout", timeout, "Per-request timeout in seconds")->check(CLI::PositiveNumber);
    cmd->add_option("--latency-ms", latency_ms, "Artificial stub latency per generation");
    cmd->add_option("--expected-backend-id", expected_backend_id, "Reuse stored images only from this backend id");
    cmd->add_option("--retry-backoff-ms", retry_backoff_ms, "Backoff before each retry")->delimiter(',');
  }

  json resolve(const json& config) const {
    json j = section(config, "backend");
    const char* env = std::getenv(kBackendUrlEnv);
    if (stub) {
      j["mode"] = "stub";
      j.erase("generation_url");
      j.erase("embedding_url");
    } else if (url || (env && *env)) {
      j["mode"] = "live";
      j["generation_url"] = url ? *url : std::string(env);
      j.erase("concept_map");
    }
    if (!j.contains("mode"))
      throw UsageError("choose a backend: --stub, --backend-url URL, $" + std::string(kBackendUrlEnv) +
                       " or a \"backend\" section in the config file");
    if (embed_url) j["embedding_url"] = *embed_url;
    else if (j.value("mode", "") == "live" && (url || !j.contains("embedding_url"))) j["embedding_url"] = j["generation_url"];
    put(j, "concept_map", concept_map);
    put(j, "master_seed", master_seed);
    put(j, "max_in_flight", max_in_flight);
    put(j, "timeout_seconds", timeout);
    put(j, "latency_ms", latency_ms);
    put(j, "expected_backend_id", expected_backend_id);
    put(j, "retry_backoff_ms", retry_backoff_ms);
    return j;
  }
};

int run_stage(const std::string& run_dir, const std::string& stage, const json& options) {
  mp_run* run = nullptr;
  mp_status s = mp_run_open(run_dir.c_str(), &run);
  char* summary = nullptr;
  if (s == MP_OK) s = mp_run_stage(run, stage.c_str(), options.dump().c_str(), &summary);
  if (s != MP_OK) {
    const std::string message = mp_last_error();
    std::cout << json{{"stage", stage}, {"error", mp_status_name(s)}, {"message", message}}.dump() << std::endl;
    std::cerr << "morphprobe " << stage << ": " << mp_status_name(s) << ": " << message << std::endl;
    mp_run_close(run);
    return exit_code_for(s);
  }
  std::cout << summary << std::endl;
  int code = kExitOk;
  const json parsed = json::parse(summary);
  if (stage == "run" && parsed.value("failed", 0) > 0) {
    std::cerr << "morphprobe run: " << parsed["failed"] << " jobs failed after retries" << std::endl;
    code = kExitBackend;
  }
  mp_string_free(summary);
  mp_run_close(run);
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"morphprobe: phonestheme probe experiment harness"};
  app.require_subcommand(1);
  std::string run_dir;
  std::string config_path;
  app.add_option("--run-dir,-d", run_dir, "Run directory")->required();
  app.add_option("--config,-c", config_path, "JSON config with per-stage sections");
  app.set_version_flag("--version", std::string(mp_version()));

  // lexicon
  auto* lex = app.add_subcommand("lexicon", "Generate the candidate lexicon");
  std::optional<std::uint64_t> lex_seed;
  std::optional<std::size_t> n_phon, n_rand, n_neg;
  bool no_positive = false, allow_affixes = false;
  std::optional<std::string> wordlist;
  std::vector<std::string> pinned;
  lex->add_option("--seed", lex_seed, "Generation seed (default 42)");
  lex->add_option("--phonestheme-count", n_phon);
  lex->add_option("--random-count", n_rand);
  lex->add_option("--negative-count", n_neg);
  lex->add_flag("--no-positive-controls", no_positive);
  lex->add_flag("--allow-inventory-affixes", allow_affixes, "Let random controls start/end with inventory clusters");
  lex->add_option("--wordlist", wordlist, "Newline-delimited wordlist replacing the bundled one");
  lex->add_option("--pin", pinned, "Phonestheme surface that must be sampled (repeatable)");

  // plan
  auto* plan = app.add_subcommand("plan", "Build an experiment plan");
  std::string kind;
  std::vector<std::int64_t> seeds, seed_range;
  std::optional<std::string> tmpl, base_prompt, adapter_name;
  std::vector<std::string> arms;
  std::vector<double> cfg_values, weights;
  std::optional<double> adapter_weight, guidance;
  std::optional<int> width, height, steps;
  plan->add_option("kind", kind, "crungus-hunt | push-pull | cfg-sweep | adapter-sweep")
      ->required()
      ->check(CLI::IsMember({"crungus-hunt", "push-pull", "cfg-sweep", "adapter-sweep"}));
  plan->add_option("--seeds", seeds, "Explicit seeds")->delimiter(',');
  plan->add_option("--seed-range", seed_range, "First and last seed, inclusive")->expected(2)->delimiter(',');
  plan->add_option("--template", tmpl, "Prompt template with one {candidate}");
  plan->add_option("--arms", arms, "Push-pull arms")->delimiter(',');
  plan->add_option("--adapter-weight", adapter_weight, "Apply the adapter to push-pull jobs");
  plan->add_option("--cfg-values", cfg_values)->delimiter(',');
  plan->add_option("--weights", weights)->delimiter(',');
  plan->add_option("--base-prompt", base_prompt);
  plan->add_option("--adapter-name", adapter_name);
  plan->add_option("--width", width);
  plan->add_option("--height", height);
  plan->add_option("--steps", steps);
  plan->add_option("--guidance-scale", guidance);

  // run / embed
  auto* run = app.add_subcommand("run", "Generate images for every pending job");
  BackendFlags run_backend;
  run_backend.add_to(run);
  auto* embed = app.add_subcommand("embed", "Embed generated images");
  BackendFlags embed_backend;
  embed_backend.add_to(embed);
  std::string modality = "image_clip";
  embed->add_option("--modality", modality)->check(CLI::IsMember({"image_clip", "face"}));

  auto* purity = app.add_subcommand("purity", "Purity@1 per candidate");
  std::optional<std::size_t> threads;
  purity->add_option("--threads", threads);

  auto* facesim = app.add_subcommand("facesim", "Face detection rate and pairwise similarity per condition");

  auto* stats = app.add_subcommand("stats", "Two-group comparisons over purity");
  std::vector<std::string> compare;
  bool welch = false;
  std::optional<double> stats_threshold;
  stats->add_option("--compare", compare, "group_a:group_b (repeatable)");
  stats->add_flag("--welch", welch, "Welch's t instead of the pooled Student t");
  stats->add_option("--threshold", stats_threshold, "Pass threshold (default 1.0)");

  auto* rep = app.add_subcommand("report", "Assemble all report artifacts");
  std::optional<std::string> rep_wordlist, adjudication;
  std::vector<std::string> entity_lists;
  std::optional<double> rep_threshold;
  rep->add_option("--wordlist", rep_wordlist);
  rep->add_option("--entity-list", entity_lists, "Entity list file, optionally name=path (repeatable)");
  rep->add_option("--adjudication", adjudication, "JSON map surface -> {verdict, rationale}");
  rep->add_option("--threshold", rep_threshold);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    const json config = load_config(config_path);
    if (lex->parsed()) {
      json o = section(config, "lexicon");
      put(o, "seed", lex_seed);
      put(o, "phonestheme_count", n_phon);
      put(o, "random_count", n_rand);
      put(o, "negative_count", n_neg);
      if (no_positive) o["positive_controls"] = false;
      if (allow_affixes) o["avoid_inventory_affixes"] = false;
      put(o, "wordlist", wordlist);
      if (!pinned.empty()) o["pinned"] = pinned;
      return run_stage(run_dir, "lexicon", o);
    }
    if (plan->parsed()) {
      json o = section(config, "plan");
      o["kind"] = kind;
      put(o, "seeds", seeds);
      put(o, "seed_range", seed_range);
      put(o, "template", tmpl);
      put(o, "arms", arms);
      put(o, "adapter_weight", adapter_weight);
      put(o, "cfg_values", cfg_values);
      put(o, "weights", weights);
      put(o, "base_prompt", base_prompt);
      put(o, "adapter_name", adapter_name);
      put(o, "width", width);
      put(o, "height", height);
      put(o, "steps", steps);
      put(o, "guidance_scale", guidance);
      return run_stage(run_dir, "plan", o);
    }
    if (run->parsed()) return run_stage(run_dir, "run", run_backend.resolve(config));
    if (embed->parsed()) {
      json o = embed_backend.resolve(config);
      o["modality"] = modality;
      return run_stage(run_dir, "embed", o);
    }
    if (purity->parsed()) {
      json o = section(config, "purity");
      put(o, "threads", threads);
      return run_stage(run_dir, "purity", o);
    }
    if (facesim->parsed()) return run_stage(run_dir, "facesim", section(config, "facesim"));
    if (stats->parsed()) {
      json o = section(config, "stats");
      put(o, "compare", compare);
      if (welch) o["welch"] = true;
      put(o, "threshold", stats_threshold);
      return run_stage(run_dir, "stats", o);
    }
    if (rep->parsed()) {
      json o = section(config, "report");
      put(o, "wordlist", rep_wordlist);
      put(o, "adjudication", adjudication);
      put(o, "threshold", rep_threshold);
      if (!entity_lists.empty()) {
        json lists = json::array();
        for (const auto& e : entity_lists) {
          const auto eq = e.find('=');
          if (eq == std::string::npos) lists.push_back(e);
          else lists.push_back({{"name", e.substr(0, eq)}, {"path", e.substr(eq + 1)}});
        }
        o["entity_lists"] = lists;
      }
      return run_stage(run_dir, "report", o);
    }
  } catch (const UsageError& e) {
    std::cout << json{{"error", "usage"}, {"message", e.what()}}.dump() << std::endl;
    std::cerr << "morphprobe: " << e.what() << std::endl;
    return kExitUsage;
  }
  return kExitUsage;
}
