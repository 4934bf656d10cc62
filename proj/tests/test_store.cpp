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

#include <doctest.h>

#include <bit>
#include <fstream>

#include "scenarios.hpp"
#include "store.hpp"

using namespace morphprobe;
using namespace morphprobe::store;
using mptest::code;
using mptest::error_code_of;

namespace {

planner::ExperimentPlan small_plan(int seeds = 4) { return planner::plan_cfg_sweep({5, 7}, [&] {
    std::vector<std::int64_t> s;
    for (int i = 1; i <= seeds; ++i) s.push_back(i);
    return s;
  }());
}

EmbeddingMatrix random_identity_matrix(std::uint64_t seed, std::uint32_t n, std::uint32_t d, Modality m) {
  EmbeddingMatrix x = mptest::random_matrix(seed, n, d);
  x.modality = m;
  for (std::uint32_t i = 0; i < n; ++i)
    x.rows.push_back({"job" + std::to_string(i), "tag" + std::to_string(i % 7), static_cast<std::int64_t>(i), i % 3 != 0});
  if (m == Modality::kImageClip)
    for (auto& r : x.rows) r.face_detected = true;
  return x;
}

bool bitwise_equal(const std::vector<float>& a, const std::vector<float>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::bit_cast<std::uint32_t>(a[i]) != std::bit_cast<std::uint32_t>(b[i])) return false;
  return true;
}

}  // namespace

TEST_CASE("open, resume and plan mismatch") {
  mptest::TempDir dir;
  const auto plan = small_plan();
  {
    auto st = RunStore::open(dir.path(), plan);
    const auto m = st->manifest();
    CHECK(m.count(JobStatus::kPending) == plan.jobs.size());
    CHECK(m.plan_hash == planner::plan_hash(plan));
    CHECK(fs::exists(dir / kManifestFile));
    CHECK(fs::exists(dir / kPlanFile));
    for (const auto& j : plan.jobs) st->put_image(j.job_id, "png-bytes-" + j.job_id, "b1");
  }
  {
    auto st = RunStore::open(dir.path(), plan);
    const auto m = st->manifest();
    CHECK(m.count(JobStatus::kDone) == plan.jobs.size());
    CHECK(m.backend_ids == std::set<std::string>{"b1"});
    CHECK(st->read_image(plan.jobs[0].job_id) == "png-bytes-" + plan.jobs[0].job_id);
  }
  CHECK(error_code_of([&] { RunStore::open(dir.path(), small_plan(5)); }) == code(ErrorCode::kPlanMismatch));
  CHECK(RunStore::open_existing(dir.path())->plan().jobs.size() == plan.jobs.size());

  mptest::TempDir empty;
  CHECK(error_code_of([&] { RunStore::open_existing(empty.path()); }) == code(ErrorCode::kMissingArtifact));
}

TEST_CASE("failures, replay and corruption") {
  mptest::TempDir dir;
  const auto plan = small_plan(2);
  auto st = RunStore::open(dir.path(), plan);
  st->record_failure(plan.jobs[0].job_id, "HTTP 400", 1);
  st->put_image(plan.jobs[1].job_id, "abc", "b1");
  st->record_failure(plan.jobs[1].job_id, "late failure", 2);  // done wins over a later failure

  const auto m = replay_manifest(dir / kManifestFile, plan);
  CHECK(m.status.at(plan.jobs[0].job_id) == JobStatus::kFailed);
  CHECK(m.failures.at(plan.jobs[0].job_id).attempts == 1);
  CHECK(m.status.at(plan.jobs[1].job_id) == JobStatus::kDone);

  // Retrying a failed job and succeeding clears the failure.
  st->put_image(plan.jobs[0].job_id, "def", "b1");
  CHECK(replay_manifest(dir / kManifestFile, plan).failures.empty());

  // Tampered image bytes are detected.
  std::ofstream(dir / (std::string(kImagesDir) + "/" + plan.jobs[0].job_id + ".png"), std::ios::trunc) << "xyz";
  CHECK(error_code_of([&] { st->read_image(plan.jobs[0].job_id); }) == code(ErrorCode::kCorruption));
  CHECK(error_code_of([&] { st->read_image(plan.jobs[2].job_id); }) == code(ErrorCode::kMissingArtifact));
  CHECK(error_code_of([&] { st->put_image("nope", "x", "b"); }) == code(ErrorCode::kInvalidArgument));
}

TEST_CASE("torn trailing event is ignored and repaired") {
  mptest::TempDir dir;
  const auto plan = small_plan(2);
  { RunStore::open(dir.path(), plan)->put_image(plan.jobs[0].job_id, "a", "b1"); }
  { std::ofstream(dir / kManifestFile, std::ios::app) << R"({"event":"done","job_id":")"; }
  CHECK(replay_manifest(dir / kManifestFile, plan).count(JobStatus::kDone) == 1);
  {
    auto st = RunStore::open(dir.path(), plan);
    st->put_image(plan.jobs[1].job_id, "b", "b1");
  }
  CHECK(replay_manifest(dir / kManifestFile, plan).count(JobStatus::kDone) == 2);

  // A malformed line in the middle is not a torn write.
  { std::ofstream(dir / kManifestFile, std::ios::app) << "garbage\n" << R"({"event":"open"})" << "\n"; }
  CHECK(error_code_of([&] { replay_manifest(dir / kManifestFile, plan); }) == code(ErrorCode::kIntegrity));
}

TEST_CASE("embedding matrix files") {
  mptest::TempDir dir;
  SUBCASE("round trip is bitwise") {
    for (auto m : {Modality::kImageClip, Modality::kFace}) {
      const auto x = random_identity_matrix(5, 300, m == Modality::kFace ? 512 : 768, m);
      const auto path = dir / "e.embx";
      write_embeddings(path, x);
      CHECK(fs::file_size(path) == kEmbxHeaderSize + 300ull * x.d * 4);
      const auto y = read_embeddings(path);
      CHECK(y.n == x.n);
      CHECK(y.d == x.d);
      CHECK(y.modality == m);
      CHECK(bitwise_equal(x.values, y.values));
      CHECK(y.rows == x.rows);
    }
  }
  SUBCASE("special float values survive") {
    EmbeddingMatrix x;
    x.n = 1;
    x.d = 4;
    x.values = {-0.0f, 1e-45f, 3.4028235e38f, -1.5f};
    x.rows = {{"j", "t", 1, true}};
    write_embeddings(dir / "s.embx", x);
    CHECK(bitwise_equal(read_embeddings(dir / "s.embx").values, x.values));
  }
  SUBCASE("empty matrix") {
    EmbeddingMatrix x;
    x.d = 768;
    write_embeddings(dir / "z.embx", x);
    const auto y = read_embeddings(dir / "z.embx");
    CHECK(y.n == 0);
    CHECK(y.values.empty());
  }
  SUBCASE("header layout") {
    const auto x = random_identity_matrix(1, 2, 3, Modality::kFace);
    write_embeddings(dir / "h.embx", x);
    const std::string bytes = read_file(dir / "h.embx");
    CHECK(bytes.substr(0, 4) == "EMBX");
    CHECK(bytes[4] == 1);
    CHECK(bytes[8] == 2);
    CHECK(bytes[12] == 3);
    CHECK(bytes[16] == 1);
    std::uint32_t first = 0;
    for (int i = 0; i < 4; ++i) first |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[17 + i])) << (8 * i);
    CHECK(first == std::bit_cast<std::uint32_t>(x.values[0]));
  }
  SUBCASE("corruption is detected") {
    const auto x = random_identity_matrix(2, 10, 8, Modality::kImageClip);
    const auto path = dir / "c.embx";
    write_embeddings(path, x);
    const std::string good = read_file(path);

    write_file_atomic(path, good.substr(0, good.size() - 3));
    CHECK(error_code_of([&] { read_embeddings(path); }) == code(ErrorCode::kIntegrity));
    write_file_atomic(path, good + "x");
    CHECK(error_code_of([&] { read_embeddings(path); }) == code(ErrorCode::kIntegrity));
    write_file_atomic(path, "EMB");
    CHECK(error_code_of([&] { read_embeddings(path); }) == code(ErrorCode::kIntegrity));
    std::string bad_magic = good;
    bad_magic[0] = 'X';
    write_file_atomic(path, bad_magic);
    CHECK(error_code_of([&] { read_embeddings(path); }) == code(ErrorCode::kIntegrity));
    std::string bad_version = good;
    bad_version[4] = 9;
    write_file_atomic(path, bad_version);
    CHECK(error_code_of([&] { read_embeddings(path); }) == code(ErrorCode::kIntegrity));

    write_file_atomic(path, good);
    write_file_atomic(sidecar_path(path), "[]");
    CHECK(error_code_of([&] { read_embeddings(path); }) == code(ErrorCode::kIntegrity));
    fs::remove(sidecar_path(path));
    CHECK(error_code_of([&] { read_embeddings(path); }) == code(ErrorCode::kIntegrity));
    CHECK(error_code_of([&] { read_embeddings(dir / "missing.embx"); }) == code(ErrorCode::kMissingArtifact));
  }
}

TEST_CASE("assemble_matrix orders rows by tag then seed") {
  const auto plan = planner::plan_cfg_sweep({11, 5}, {3, 1, 2});
  std::vector<EmbeddingRecord> recs;
  for (auto it = plan.jobs.rbegin(); it != plan.jobs.rend(); ++it) {
    EmbeddingRecord r;
    r.job_id = it->job_id;
    r.vector = std::vector<float>(4, static_cast<float>(it->seed));
    recs.push_back(r);
  }
  const auto m = assemble_matrix(recs, plan, Modality::kImageClip);
  REQUIRE(m.n == 6);
  CHECK(m.d == 4);
  for (std::size_t i = 1; i < m.n; ++i) {
    const auto& a = m.rows[i - 1];
    const auto& b = m.rows[i];
    CHECK((a.tag < b.tag || (a.tag == b.tag && a.seed < b.seed)));
  }
  for (std::size_t i = 0; i < m.n; ++i) CHECK(m.row(i)[0] == static_cast<float>(m.rows[i].seed));

  EmbeddingRecord stray;
  stray.job_id = "not-in-plan";
  recs.push_back(stray);
  CHECK(error_code_of([&] { assemble_matrix(recs, plan, Modality::kImageClip); }) == code(ErrorCode::kInvalidArgument));
}

TEST_CASE("killing the runner mid-plan and resuming") {
  mptest::TempDir dir;
  const auto plan = planner::plan_cfg_sweep({5, 7, 8, 9, 11}, {1, 2, 3, 4, 5, 6, 7, 8});
  const auto r = mptest::kill_and_resume(dir.path(), plan, 10);
  CHECK(r.killed);
  CHECK(r.done_at_kill >= 10);
  CHECK(r.done_at_kill < r.total);
  CHECK(r.resumed_calls == r.total - r.done_at_kill);
  CHECK(r.done_after == r.total);
  CHECK(r.hashes_ok);
}
