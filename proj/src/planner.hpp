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

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "lexicon.hpp"

namespace morphprobe::planner {

inline constexpr int kPlanSchemaVersion = 1;

// Prompt constants used by the push-pull arms.
inline constexpr std::string_view kShadowPositivePrompt =
    "portrait of a woman, sharp angular bone structure, jet black slicked hair, harsh fluorescent lighting, "
    "cold blue-grey palette, severe expression, sunken eyes, skeletal features, 1980s corporate editorial, "
    "pale lips, high fashion, otherworldly, studio photography";
inline constexpr std::string_view kMarilynNegativePrompt =
    "platinum blonde, blonde, golden hair, beauty mark, mole, red lips, red lipstick, 1950s, vintage, glamour, "
    "soft lighting, warm, breathy, vulnerable, curly hair, heart-shaped face, soft features, smile";
inline constexpr std::string_view kNeutralPrompt = "portrait of a woman, studio photography";
inline constexpr std::string_view kQualityNegativePrompt = "low quality, blurry, watermark";
inline constexpr std::string_view kDefaultTemplate = "a {candidate}";
inline constexpr std::string_view kPlaceholder = "{candidate}";

struct GenerationSettings {
  int width = 512;
  int height = 512;
  int steps = 30;
  double guidance_scale = 7.5;
  std::string adapter_name = "identity_lora";
};

struct GenerationJob {
  std::string job_id;
  std::string prompt;
  std::string negative_prompt;
  std::int64_t seed = 0;
  double guidance_scale = 7.5;
  std::optional<double> adapter_weight;
  std::string adapter_name;  // empty when no adapter is applied
  int width = 512;
  int height = 512;
  int steps = 30;
  std::string tag;
  std::string group;  // candidate group for lexicon plans, otherwise empty
  bool baseline = false;

  bool operator==(const GenerationJob&) const = default;
};

struct ExperimentPlan {
  std::string name;
  std::vector<GenerationJob> jobs;
  std::map<std::string, std::string> metadata;

  const GenerationJob* find(std::string_view job_id) const;
};

struct SeedRange {
  std::int64_t first = 0;
  std::int64_t last = 0;  // inclusive

  std::vector<std::int64_t> expand() const;
};

enum class Arm { kA, kB, kC };
std::string_view arm_name(Arm arm);
Arm parse_arm(std::string_view name);

/// lowercase sha256 hex of the canonical JSON of
/// {adapter_weight, guidance_scale, plan, seed, tag}.
std::string make_job_id(std::string_view plan_name, const GenerationJob& job);

/// One job per (candidate, seed). Default seeds 1000..1015.
ExperimentPlan plan_crungus_hunt(const lexicon::Lexicon& lexicon, SeedRange seeds = {1000, 1015},
                                 std::string_view prompt_template = kDefaultTemplate,
                                 const GenerationSettings& settings = {});

/// Arm A: shadow positive + quality negative. Arm B: neutral positive +
/// Marilyn negative. Arm C: shadow positive + Marilyn negative. With an
/// adapter weight the jobs apply the configured adapter.
ExperimentPlan plan_push_pull(Arm arm, SeedRange seeds = {1, 10}, std::optional<double> adapter_weight = std::nullopt,
                              const GenerationSettings& settings = {});
ExperimentPlan plan_push_pull_arms(const std::vector<Arm>& arms, SeedRange seeds = {1, 10},
                                   std::optional<double> adapter_weight = std::nullopt,
                                   const GenerationSettings& settings = {});

/// Cross product of guidance scales and seeds at adapter weight 1.0.
ExperimentPlan plan_cfg_sweep(const std::vector<double>& cfg_values, const std::vector<std::int64_t>& seeds,
                              std::string_view base_prompt = kNeutralPrompt, const GenerationSettings& settings = {});

/// Cross product of adapter weights and seeds; weight 0 jobs are baseline.
ExperimentPlan plan_adapter_weight_sweep(const std::vector<double>& weights, const std::vector<std::int64_t>& seeds,
                                         std::string_view base_prompt = kNeutralPrompt,
                                         const GenerationSettings& settings = {});

std::string cfg_tag(double cfg);
std::string weight_tag(double weight);

nlohmann::ordered_json to_json(const GenerationJob& job);
GenerationJob job_from_json(const nlohmann::json& j);
std::string serialize(const ExperimentPlan& plan);
ExperimentPlan parse_plan(std::string_view text);
std::string plan_hash(const ExperimentPlan& plan);

}  // namespace morphprobe::planner
