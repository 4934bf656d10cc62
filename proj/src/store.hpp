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
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "embedding.hpp"
#include "planner.hpp"
#include "util.hpp"

namespace morphprobe::store {

enum class JobStatus { kPending, kDone, kFailed };
std::string_view status_name(JobStatus s);

struct ImageRecord {
  std::string job_id;
  std::string content_hash;
  std::string file_path;  // relative to the run directory
  std::string backend_id;
  std::string created_at;
};

struct FailureRecord {
  std::string job_id;
  std::string error;
  int attempts = 0;
};

/// State reconstructed by replaying manifest.jsonl.
struct RunManifest {
  std::string run_id;
  std::string plan_name;
  std::string plan_hash;
  std::string lexicon_hash;
  std::set<std::string> backend_ids;
  std::map<std::string, JobStatus> status;  // every plan job, keyed by job_id
  std::map<std::string, ImageRecord> images;
  std::map<std::string, FailureRecord> failures;

  std::size_t count(JobStatus s) const;
};

/// Replays an event log. A trailing line without '\n' is a torn write and is
/// ignored; any other malformed line is an integrity error.
RunManifest replay_manifest(const fs::path& manifest_path, const planner::ExperimentPlan& plan);

// Run directory layout.
inline constexpr const char* kManifestFile = "manifest.jsonl";
inline constexpr const char* kPlanFile = "plan.json";
inline constexpr const char* kLexiconFile = "lexicon.json";
inline constexpr const char* kConfigFile = "config.json";
inline constexpr const char* kImagesDir = "images";
inline constexpr const char* kEmbeddingsDir = "embeddings";
inline constexpr const char* kReportsDir = "reports";

/// Single-writer handle over a run directory. Recording methods are safe to
/// call from the runner's worker threads.
class RunStore {
 public:
  /// Creates the run (writing plan.json and the opening event) or resumes
  /// it. Resuming with a plan whose hash differs fails with kPlanMismatch.
  static std::unique_ptr<RunStore> open(const fs::path& dir, const planner::ExperimentPlan& plan);
  /// Resumes a run from its own plan.json.
  static std::unique_ptr<RunStore> open_existing(const fs::path& dir);

  const fs::path& dir() const { return dir_; }
  const planner::ExperimentPlan& plan() const { return plan_; }
  RunManifest manifest() const;
  JobStatus status(const std::string& job_id) const;
  std::optional<ImageRecord> image(const std::string& job_id) const;

  /// Writes images/<job_id>.png atomically, then appends a done event.
  ImageRecord put_image(const std::string& job_id, std::string_view png_bytes, const std::string& backend_id);
  void record_failure(const std::string& job_id, const std::string& error, int attempts);

  /// Reads an image back and checks it against the recorded content hash.
  std::string read_image(const std::string& job_id) const;

  fs::path manifest_path() const { return dir_ / kManifestFile; }
  fs::path embeddings_path(Modality m) const;
  fs::path reports_dir() const { return dir_ / kReportsDir; }

 private:
  RunStore(fs::path dir, planner::ExperimentPlan plan, RunManifest manifest);
  void append_event(const std::string& line);

  fs::path dir_;
  planner::ExperimentPlan plan_;
  mutable std::mutex mutex_;
  RunManifest manifest_;
};

/// Magic "EMBX", version u32, n u32, d u32, modality u8, then n*d
/// little-endian f32 row-major. Identities go to a "<path>.json" sidecar.
inline constexpr std::uint32_t kEmbxVersion = 1;
inline constexpr std::size_t kEmbxHeaderSize = 17;

/// Builds a matrix from records, ordered by (tag, seed, job_id). Records with
/// no vector become zero rows with face_detected=false.
EmbeddingMatrix assemble_matrix(const std::vector<EmbeddingRecord>& records, const planner::ExperimentPlan& plan,
                                Modality modality);

void write_embeddings(const fs::path& path, const EmbeddingMatrix& matrix);
EmbeddingMatrix read_embeddings(const fs::path& path);
fs::path sidecar_path(const fs::path& embx_path);

}  // namespace morphprobe::store
