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

#include <chrono>
#include <cstddef>
#include <functional>
#include <vector>

#include "backend.hpp"
#include "embedding.hpp"
#include "planner.hpp"
#include "store.hpp"

namespace morphprobe::runner {

/// Retries apply to transport errors and 5xx responses only. One initial
/// attempt, then one retry per backoff entry.
struct RetryPolicy {
  std::vector<std::chrono::milliseconds> backoff{std::chrono::seconds(1), std::chrono::seconds(4),
                                                 std::chrono::seconds(16)};

  static RetryPolicy none() { return RetryPolicy{{}}; }
};

struct RunOptions {
  std::size_t max_in_flight = 1;
  RetryPolicy retry;
  /// Polled before each job is started. Returning true leaves the remaining
  /// jobs pending.
  std::function<bool()> should_stop;
};

struct RunReport {
  std::vector<store::ImageRecord> records;  // plan order, completed jobs only
  std::vector<store::FailureRecord> failures;
  std::size_t generated = 0;
  std::size_t cached = 0;
  bool cancelled = false;
};

/// Executes every job not already done in `store` (a done job counts only if
/// its backend id matches the backend's expected id, when one is set).
/// Final per-job failures are recorded in the manifest. A protocol violation
/// or store failure stops all workers and is rethrown.
RunReport run_plan(const planner::ExperimentPlan& plan, backend::Backend& backend, store::RunStore& store,
                   const RunOptions& options = {});

/// One record per input, in input order. image_clip vectors are normalized
/// to unit length; face records carry a vector iff a face was detected.
/// All returned vectors share one dimension.
std::vector<EmbeddingRecord> embed_images(const std::vector<store::ImageRecord>& records, Modality modality,
                                          backend::Backend& backend, const store::RunStore& store,
                                          const RunOptions& options = {});

}  // namespace morphprobe::runner
