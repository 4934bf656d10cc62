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

#include <atomic>
#include <memory>
#include <string_view>

#include <json.hpp>

#include "backend.hpp"
#include "lexicon.hpp"
#include "planner.hpp"
#include "runner.hpp"
#include "util.hpp"

namespace morphprobe::pipeline {

// Stages over one run directory. Each takes a JSON options object (missing
// keys take defaults), records the resolved options under its own key in
// config.json, writes its artifact and returns a one-object summary.
//
// Missing prerequisites fail with kMissingArtifact naming the file.

inline constexpr std::string_view kStages[] = {"lexicon", "plan", "run", "embed", "purity", "facesim", "stats", "report"};

nlohmann::ordered_json stage_lexicon(const fs::path& run_dir, const nlohmann::json& options);
nlohmann::ordered_json stage_plan(const fs::path& run_dir, const nlohmann::json& options);
nlohmann::ordered_json stage_run(const fs::path& run_dir, const nlohmann::json& options,
                                 const std::atomic<bool>* cancel = nullptr);
nlohmann::ordered_json stage_embed(const fs::path& run_dir, const nlohmann::json& options,
                                   const std::atomic<bool>* cancel = nullptr);
nlohmann::ordered_json stage_purity(const fs::path& run_dir, const nlohmann::json& options);
nlohmann::ordered_json stage_facesim(const fs::path& run_dir, const nlohmann::json& options);
nlohmann::ordered_json stage_stats(const fs::path& run_dir, const nlohmann::json& options);
nlohmann::ordered_json stage_report(const fs::path& run_dir, const nlohmann::json& options);

/// Dispatches by stage name; unknown names are kInvalidArgument.
nlohmann::ordered_json run_stage(const fs::path& run_dir, std::string_view stage, const nlohmann::json& options,
                                 const std::atomic<bool>* cancel = nullptr);

// Pieces shared with the C API and tests.
lexicon::LexiconConfig lexicon_config_from_json(const nlohmann::json& options);
nlohmann::ordered_json lexicon_config_to_json(const lexicon::LexiconConfig& config);
/// Needs `lexicon` for crungus-hunt plans only.
planner::ExperimentPlan plan_from_options(const nlohmann::json& options, const lexicon::Lexicon* lexicon);

struct BackendConfig {
  bool stub = true;
  std::string generation_url;
  std::string embedding_url;
  double timeout_seconds = 600.0;
  std::size_t max_in_flight = 1;
  std::string concept_map;  // path, stub only
  std::uint64_t master_seed = 0;
  int latency_ms = 0;
  std::string expected_backend_id;
  std::vector<int> retry_backoff_ms{1000, 4000, 16000};

  static BackendConfig from_json(const nlohmann::json& options);
  nlohmann::ordered_json to_json() const;
};

std::unique_ptr<backend::Backend> make_backend(const BackendConfig& config);

}  // namespace morphprobe::pipeline
