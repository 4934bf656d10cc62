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

#include "planner.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <tuple>

#include "errors.hpp"
#include "util.hpp"

namespace morphprobe::planner {

namespace {

// Jobs are ordered by tag, then seed, then sweep value. Tags of sweep plans
// are zero-padded so lexical order follows numeric order.
void finalize(ExperimentPlan& plan) {
  for (auto& job : plan.jobs) job.job_id = make_job_id(plan.name, job);
  std::stable_sort(plan.jobs.begin(), plan.jobs.end(), [](const GenerationJob& a, const GenerationJob& b) {
    const double av = a.adapter_weight.value_or(-1.0);
    const double bv = b.adapter_weight.value_or(-1.0);
    return std::tie(a.tag, a.seed, a.guidance_scale, av) < std::tie(b.tag, b.seed, b.guidance_scale, bv);
  });
  std::set<std::string_view> ids;
  for (const auto& job : plan.jobs)
    if (!ids.insert(job.job_id).second) fail(ErrorCode::kInvariant, "duplicate job id in plan " + plan.name);
}

GenerationJob base_job(const GenerationSettings& s) {
  GenerationJob job;
  job.width = s.width;
  job.height = s.height;
  job.steps = s.steps;
  job.guidance_scale = s.guidance_scale;
  return job;
}

void require_nonempty_seeds(const std::vector<std::int64_t>& seeds) {
  if (seeds.empty()) fail(ErrorCode::kInvalidArgument, "seed list must be non-empty");
  for (auto s : seeds)
    if (s < 0) fail(ErrorCode::kRange, "seeds must be non-negative");
}

void put_common_metadata(ExperimentPlan& plan, const GenerationSettings& s) {
  plan.metadata["width"] = std::to_string(s.width);
  plan.metadata["height"] = std::to_string(s.height);
  plan.metadata["steps"] = std::to_string(s.steps);
}

}  // namespace

const GenerationJob* ExperimentPlan::find(std::string_view job_id) const {
  for (const auto& j : jobs)
    if (j.job_id == job_id) return &j;
  return nullptr;
}

std::vector<std::int64_t> SeedRange::expand() const {
  if (first < 0 || last < 0) fail(ErrorCode::kRange, "seeds must be non-negative");
  std::vector<std::int64_t> out;
  for (std::int64_t s = first; s <= last; ++s) out.push_back(s);
  return out;
}

std::string_view arm_name(Arm arm) {
  switch (arm) {
    case Arm::kA: return "A";
    case Arm::kB: return "B";
    case Arm::kC: return "C";
  }
  return "?";
}

Arm parse_arm(std::string_view name) {
  if (name == "A" || name == "a") return Arm::kA;
  if (name == "B" || name == "b") return Arm::kB;
  if (name == "C" || name == "c") return Arm::kC;
  fail(ErrorCode::kInvalidArgument, "unknown arm '" + std::string(name) + "' (expected A, B or C)");
}

std::string make_job_id(std::string_view plan_name, const GenerationJob& job) {
  nlohmann::ordered_json key;
  key["adapter_weight"] = job.adapter_weight ? nlohmann::ordered_json(*job.adapter_weight) : nullptr;
  key["guidance_scale"] = job.guidance_scale;
  key["plan"] = plan_name;
  key["seed"] = job.seed;
  key["tag"] = job.tag;
  return sha256_hex(key.dump());
}

std::string cfg_tag(double cfg) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "cfg_%08.4f", cfg);
  return buf;
}

std::string weight_tag(double weight) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "adapter_w%.4f", weight);
  return buf;
}

ExperimentPlan plan_crungus_hunt(const lexicon::Lexicon& lexicon, SeedRange seeds, std::string_view prompt_template,
                                 const GenerationSettings& settings) {
  const auto first = prompt_template.find(kPlaceholder);
  if (first == std::string_view::npos || prompt_template.find(kPlaceholder, first + 1) != std::string_view::npos)
    fail(ErrorCode::kTemplate, "prompt template must contain exactly one {candidate} placeholder");
  const auto seed_list = seeds.expand();

  ExperimentPlan plan;
  plan.name = "crungus-hunt";
  plan.metadata["prompt_template"] = std::string(prompt_template);
  plan.metadata["inventory_version"] = lexicon.inventory_version;
  plan.metadata["lexicon_hash"] = sha256_hex(lexicon::serialize(lexicon));
  plan.metadata["seeds"] = std::to_string(seeds.first) + ".." + std::to_string(seeds.last);
  put_common_metadata(plan, settings);

  for (const auto& cand : lexicon.candidates) {
    std::string prompt(prompt_template);
    prompt.replace(first, kPlaceholder.size(), cand.surface);
    for (auto seed : seed_list) {
      GenerationJob job = base_job(settings);
      job.prompt = prompt;
      job.seed = seed;
      job.tag = cand.surface;
      job.group = std::string(lexicon::group_name(cand.group));
      plan.jobs.push_back(std::move(job));
    }
  }
  finalize(plan);
  return plan;
}

namespace {

void append_arm(ExperimentPlan& plan, Arm arm, const std::vector<std::int64_t>& seeds,
                std::optional<double> adapter_weight, const GenerationSettings& settings) {
  std::string_view positive = arm == Arm::kB ? kNeutralPrompt : kShadowPositivePrompt;
  std::string_view negative = arm == Arm::kA ? kQualityNegativePrompt : kMarilynNegativePrompt;
  for (auto seed : seeds) {
    GenerationJob job = base_job(settings);
    job.prompt = std::string(positive);
    job.negative_prompt = std::string(negative);
    job.seed = seed;
    job.tag = "arm_" + std::string(arm_name(arm));
    if (adapter_weight) {
      job.adapter_weight = adapter_weight;
      job.adapter_name = settings.adapter_name;
    }
    plan.jobs.push_back(std::move(job));
  }
}

void require_weight(double w) {
  if (!(w >= 0.0 && w <= 1.0)) fail(ErrorCode::kRange, "adapter weight must lie in [0, 1]");
}

}  // namespace

ExperimentPlan plan_push_pull(Arm arm, SeedRange seeds, std::optional<double> adapter_weight,
                              const GenerationSettings& settings) {
  return plan_push_pull_arms({arm}, seeds, adapter_weight, settings);
}

ExperimentPlan plan_push_pull_arms(const std::vector<Arm>& arms, SeedRange seeds, std::optional<double> adapter_weight,
                                   const GenerationSettings& settings) {
  if (arms.empty()) fail(ErrorCode::kInvalidArgument, "at least one arm is required");
  if (adapter_weight) require_weight(*adapter_weight);
  const auto seed_list = seeds.expand();
  ExperimentPlan plan;
  std::string arm_list;
  for (Arm a : arms) arm_list += arm_name(a);
  plan.name = "push-pull-" + arm_list + (adapter_weight ? "-adapter" : "-base");
  plan.metadata["arms"] = arm_list;
  plan.metadata["seeds"] = std::to_string(seeds.first) + ".." + std::to_string(seeds.last);
  if (adapter_weight) plan.metadata["adapter"] = settings.adapter_name;
  put_common_metadata(plan, settings);
  std::set<Arm> unique(arms.begin(), arms.end());
  for (Arm a : unique) append_arm(plan, a, seed_list, adapter_weight, settings);
  finalize(plan);
  return plan;
}

ExperimentPlan plan_cfg_sweep(const std::vector<double>& cfg_values, const std::vector<std::int64_t>& seeds,
                              std::string_view base_prompt, const GenerationSettings& settings) {
  if (cfg_values.empty()) fail(ErrorCode::kInvalidArgument, "CFG value list must be non-empty");
  require_nonempty_seeds(seeds);
  for (double c : cfg_values)
    if (!(c > 0.0)) fail(ErrorCode::kRange, "guidance scale must be positive");
  ExperimentPlan plan;
  plan.name = "cfg-sweep";
  plan.metadata["prompt"] = std::string(base_prompt);
  plan.metadata["adapter"] = settings.adapter_name;
  put_common_metadata(plan, settings);
  for (double cfg : cfg_values)
    for (auto seed : seeds) {
      GenerationJob job = base_job(settings);
      job.prompt = std::string(base_prompt);
      job.seed = seed;
      job.guidance_scale = cfg;
      job.adapter_weight = 1.0;
      job.adapter_name = settings.adapter_name;
      job.tag = cfg_tag(cfg);
      plan.jobs.push_back(std::move(job));
    }
  finalize(plan);
  return plan;
}

ExperimentPlan plan_adapter_weight_sweep(const std::vector<double>& weights, const std::vector<std::int64_t>& seeds,
                                         std::string_view base_prompt, const GenerationSettings& settings) {
  if (weights.empty()) fail(ErrorCode::kInvalidArgument, "weight list must be non-empty");
  require_nonempty_seeds(seeds);
  for (double w : weights) require_weight(w);
  ExperimentPlan plan;
  plan.name = "adapter-weight-sweep";
  plan.metadata["prompt"] = std::string(base_prompt);
  plan.metadata["adapter"] = settings.adapter_name;
  put_common_metadata(plan, settings);
  for (double w : weights)
    for (auto seed : seeds) {
      GenerationJob job = base_job(settings);
      job.prompt = std::string(base_prompt);
      job.seed = seed;
      job.adapter_weight = w;
      job.adapter_name = settings.adapter_name;
      job.baseline = (w == 0.0);
      job.tag = weight_tag(w);
      plan.jobs.push_back(std::move(job));
    }
  finalize(plan);
  return plan;
}

nlohmann::ordered_json to_json(const GenerationJob& job) {
  nlohmann::ordered_json j;
  j["job_id"] = job.job_id;
  j["tag"] = job.tag;
  j["group"] = job.group;
  j["prompt"] = job.prompt;
  j["negative_prompt"] = job.negative_prompt;
  j["seed"] = job.seed;
  j["guidance_scale"] = job.guidance_scale;
  if (job.adapter_weight) {
    j["adapter"] = {{"name", job.adapter_name}, {"weight", *job.adapter_weight}};
  } else {
    j["adapter"] = nullptr;
  }
  j["baseline"] = job.baseline;
  j["width"] = job.width;
  j["height"] = job.height;
  j["steps"] = job.steps;
  return j;
}

GenerationJob job_from_json(const nlohmann::json& j) {
  GenerationJob job;
  job.job_id = j.at("job_id").get<std::string>();
  job.tag = j.at("tag").get<std::string>();
  job.group = j.value("group", std::string());
  job.prompt = j.at("prompt").get<std::string>();
  job.negative_prompt = j.at("negative_prompt").get<std::string>();
  job.seed = j.at("seed").get<std::int64_t>();
  job.guidance_scale = j.at("guidance_scale").get<double>();
  if (j.contains("adapter") && !j.at("adapter").is_null()) {
    job.adapter_name = j.at("adapter").at("name").get<std::string>();
    job.adapter_weight = j.at("adapter").at("weight").get<double>();
  }
  job.baseline = j.value("baseline", false);
  job.width = j.at("width").get<int>();
  job.height = j.at("height").get<int>();
  job.steps = j.at("steps").get<int>();
  return job;
}

std::string serialize(const ExperimentPlan& plan) {
  nlohmann::ordered_json j;
  j["schema_version"] = kPlanSchemaVersion;
  j["name"] = plan.name;
  nlohmann::ordered_json meta = nlohmann::ordered_json::object();
  for (const auto& [k, v] : plan.metadata) meta[k] = v;
  j["metadata"] = meta;
  nlohmann::ordered_json jobs = nlohmann::ordered_json::array();
  for (const auto& job : plan.jobs) jobs.push_back(to_json(job));
  j["jobs"] = std::move(jobs);
  return j.dump(2) + "\n";
}

ExperimentPlan parse_plan(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("schema_version").get<int>() != kPlanSchemaVersion)
      fail(ErrorCode::kIntegrity, "unsupported plan schema version");
    ExperimentPlan plan;
    plan.name = j.at("name").get<std::string>();
    for (const auto& [k, v] : j.at("metadata").items()) plan.metadata[k] = v.get<std::string>();
    for (const auto& job : j.at("jobs")) plan.jobs.push_back(job_from_json(job));
    return plan;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kIntegrity, std::string("malformed plan: ") + e.what());
  }
}

std::string plan_hash(const ExperimentPlan& plan) { return sha256_hex(serialize(plan)); }

}  // namespace morphprobe::planner
