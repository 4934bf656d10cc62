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

#include "runner.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

namespace morphprobe::runner {

namespace {

struct Attempted {
  int attempts = 0;
};

// Calls fn() under the retry policy. Retryable BackendErrors are retried;
// anything else propagates. `attempts` reports how many calls were made.
template <typename Fn>
auto with_retries(const RetryPolicy& policy, const std::atomic<bool>& abort, Attempted& attempted, Fn&& fn)
    -> decltype(fn()) {
  for (std::size_t retry = 0;; ++retry) {
    ++attempted.attempts;
    try {
      return fn();
    } catch (const backend::BackendError& e) {
      if (!e.retryable() || retry >= policy.backoff.size() || abort.load()) throw;
      std::this_thread::sleep_for(policy.backoff[retry]);
    }
  }
}

// Runs work(i) for i in [0, count) on up to `width` threads. The first
// non-backend exception stops the pool and is rethrown after joining.
template <typename Work>
void parallel_for(std::size_t count, std::size_t width, std::atomic<bool>& abort, Work&& work) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      if (abort.load()) return;
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        work(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        abort.store(true);
        return;
      }
    }
  };
  width = std::max<std::size_t>(1, std::min(width, count));
  if (width == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(width);
    for (std::size_t t = 0; t < width; ++t) pool.emplace_back(worker);
  }
  if (first_error) std::rethrow_exception(first_error);
}

bool reusable(const store::RunStore& store, const std::optional<store::ImageRecord>& rec, const std::string& expected) {
  if (!rec) return false;
  if (!expected.empty() && rec->backend_id != expected) return false;
  return fs::exists(store.dir() / rec->file_path);
}

}  // namespace

RunReport run_plan(const planner::ExperimentPlan& plan, backend::Backend& backend, store::RunStore& store,
                   const RunOptions& options) {
  if (options.max_in_flight == 0) fail(ErrorCode::kInvalidArgument, "max_in_flight must be at least 1");
  if (planner::plan_hash(plan) != planner::plan_hash(store.plan()))
    fail(ErrorCode::kPlanMismatch, "plan does not match the run directory");

  const std::string expected = backend.expected_backend_id();
  RunReport report;
  std::vector<const planner::GenerationJob*> pending;
  for (const auto& job : plan.jobs) {
    if (store.status(job.job_id) == store::JobStatus::kDone && reusable(store, store.image(job.job_id), expected))
      ++report.cached;
    else
      pending.push_back(&job);
  }

  std::atomic<bool> abort{false};
  std::atomic<bool> stopped{false};
  std::atomic<std::size_t> generated{0};
  parallel_for(pending.size(), options.max_in_flight, abort, [&](std::size_t i) {
    if (options.should_stop && options.should_stop()) {
      stopped.store(true);
      abort.store(true);
      return;
    }
    const planner::GenerationJob& job = *pending[i];
    Attempted attempted;
    try {
      const auto result = with_retries(options.retry, abort, attempted, [&] { return backend.generate(job); });
      store.put_image(job.job_id, result.png, result.backend_id);
      ++generated;
    } catch (const backend::BackendError& e) {
      store.record_failure(job.job_id, e.what(), attempted.attempts);
    }
  });
  report.generated = generated.load();
  report.cancelled = stopped.load();

  const store::RunManifest manifest = store.manifest();
  for (const auto& job : plan.jobs) {
    if (auto it = manifest.images.find(job.job_id);
        it != manifest.images.end() && manifest.status.at(job.job_id) == store::JobStatus::kDone)
      report.records.push_back(it->second);
    else if (auto f = manifest.failures.find(job.job_id); f != manifest.failures.end())
      report.failures.push_back(f->second);
  }
  return report;
}

std::vector<EmbeddingRecord> embed_images(const std::vector<store::ImageRecord>& records, Modality modality,
                                          backend::Backend& backend, const store::RunStore& store,
                                          const RunOptions& options) {
  if (options.max_in_flight == 0) fail(ErrorCode::kInvalidArgument, "max_in_flight must be at least 1");
  std::vector<EmbeddingRecord> out(records.size());
  std::atomic<bool> abort{false};
  parallel_for(records.size(), options.max_in_flight, abort, [&](std::size_t i) {
    const std::string png = store.read_image(records[i].job_id);
    Attempted attempted;
    backend::EmbedResult res = with_retries(options.retry, abort, attempted, [&] { return backend.embed(png, modality); });

    EmbeddingRecord& rec = out[i];
    rec.job_id = records[i].job_id;
    rec.modality = modality;
    rec.model_id = std::move(res.model_id);
    if (modality == Modality::kFace) {
      rec.face_detected = res.face_detected.value_or(false);
      if (rec.face_detected != res.vector.has_value())
        fail(ErrorCode::kProtocol, "face record for " + rec.job_id + " has a vector iff a face was detected");
      rec.vector = std::move(res.vector);
      return;
    }
    if (!res.vector) fail(ErrorCode::kProtocol, "image_clip record for " + rec.job_id + " has no vector");
    double norm2 = 0.0;
    for (float x : *res.vector) norm2 += static_cast<double>(x) * x;
    if (!(norm2 > 0.0)) fail(ErrorCode::kProtocol, "zero embedding vector for " + rec.job_id);
    const double inv = 1.0 / std::sqrt(norm2);
    for (float& x : *res.vector) x = static_cast<float>(x * inv);
    rec.vector = std::move(res.vector);
  });

  std::size_t dim = 0;
  for (const auto& rec : out) {
    if (!rec.vector) continue;
    if (dim == 0) dim = rec.vector->size();
    if (rec.vector->size() != dim)
      fail(ErrorCode::kProtocol, "embedding dimension changed mid-run (" + std::to_string(dim) + " vs " +
                                     std::to_string(rec.vector->size()) + ")");
  }
  return out;
}

}  // namespace morphprobe::runner
