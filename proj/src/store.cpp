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

#include "store.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <tuple>

#include <json.hpp>

#include "errors.hpp"

namespace morphprobe {

std::string_view modality_name(Modality m) {
  switch (m) {
    case Modality::kImageClip: return "image_clip";
    case Modality::kFace: return "face";
  }
  return "unknown";
}

Modality parse_modality(std::string_view name) {
  if (name == "image_clip") return Modality::kImageClip;
  if (name == "face") return Modality::kFace;
  fail(ErrorCode::kInvalidArgument, "unknown modality '" + std::string(name) + "'");
}

std::uint32_t expected_dimension(Modality m) { return m == Modality::kFace ? 512u : 768u; }

std::vector<std::string> EmbeddingMatrix::tags() const {
  std::vector<std::string> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.tag);
  return out;
}

}  // namespace morphprobe

namespace morphprobe::store {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view status_name(JobStatus s) {
  switch (s) {
    case JobStatus::kPending: return "pending";
    case JobStatus::kDone: return "done";
    case JobStatus::kFailed: return "failed";
  }
  return "unknown";
}

std::size_t RunManifest::count(JobStatus s) const {
  return static_cast<std::size_t>(
      std::count_if(status.begin(), status.end(), [&](const auto& kv) { return kv.second == s; }));
}

RunManifest replay_manifest(const fs::path& manifest_path, const planner::ExperimentPlan& plan) {
  RunManifest m;
  for (const auto& job : plan.jobs) m.status[job.job_id] = JobStatus::kPending;
  const std::string text = read_file(manifest_path);
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    const std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) break;  // torn trailing write
    const std::string_view line(text.data() + pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    json ev;
    try {
      ev = json::parse(line);
    } catch (const json::exception&) {
      fail(ErrorCode::kIntegrity, manifest_path.string() + ":" + std::to_string(line_no) + ": unparsable event");
    }
    const std::string kind = ev.value("event", "");
    if (kind == "open") {
      m.run_id = ev.value("run_id", "");
      m.plan_name = ev.value("plan_name", "");
      m.plan_hash = ev.value("plan_hash", "");
      m.lexicon_hash = ev.value("lexicon_hash", "");
    } else if (kind == "done") {
      ImageRecord r{ev.at("job_id"), ev.at("content_hash"), ev.at("file"), ev.at("backend_id"),
                    ev.value("created_at", "")};
      if (!m.status.contains(r.job_id))
        fail(ErrorCode::kIntegrity, "manifest references unknown job " + r.job_id);
      m.status[r.job_id] = JobStatus::kDone;
      m.failures.erase(r.job_id);
      m.backend_ids.insert(r.backend_id);
      m.images[r.job_id] = std::move(r);
    } else if (kind == "failed") {
      FailureRecord f{ev.at("job_id"), ev.value("error", ""), ev.value("attempts", 0)};
      if (!m.status.contains(f.job_id))
        fail(ErrorCode::kIntegrity, "manifest references unknown job " + f.job_id);
      if (m.status[f.job_id] != JobStatus::kDone) {
        m.status[f.job_id] = JobStatus::kFailed;
        m.failures[f.job_id] = std::move(f);
      }
    } else {
      fail(ErrorCode::kIntegrity, manifest_path.string() + ":" + std::to_string(line_no) + ": unknown event");
    }
  }
  return m;
}

RunStore::RunStore(fs::path dir, planner::ExperimentPlan plan, RunManifest manifest)
    : dir_(std::move(dir)), plan_(std::move(plan)), manifest_(std::move(manifest)) {}

std::unique_ptr<RunStore> RunStore::open(const fs::path& dir, const planner::ExperimentPlan& plan) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::kIo, "cannot create run directory " + dir.string() + ": " + ec.message());
  fs::create_directories(dir / kImagesDir);

  const std::string hash = planner::plan_hash(plan);
  const fs::path manifest_path = dir / kManifestFile;
  const fs::path plan_path = dir / kPlanFile;

  if (fs::exists(plan_path)) {
    const std::string existing_hash = sha256_hex(read_file(plan_path));
    if (existing_hash != hash)
      fail(ErrorCode::kPlanMismatch, "run directory " + dir.string() + " holds plan " + existing_hash.substr(0, 12) +
                                         ", refusing to mix in plan " + hash.substr(0, 12));
  } else {
    write_file_atomic(plan_path, planner::serialize(plan));
  }

  if (fs::exists(manifest_path)) {
    RunManifest m = replay_manifest(manifest_path, plan);
    // Drop a torn trailing event so the next append starts on a fresh line.
    const std::string text = read_file(manifest_path);
    if (!text.empty() && text.back() != '\n') {
      const auto keep = text.rfind('\n');
      fs::resize_file(manifest_path, keep == std::string::npos ? 0 : keep + 1);
    }
    const bool opened = !m.plan_hash.empty() || !m.images.empty() || !m.failures.empty();
    if (opened) {
      if (m.plan_hash != hash)
        fail(ErrorCode::kPlanMismatch, "manifest plan hash does not match plan " + hash.substr(0, 12));
      return std::unique_ptr<RunStore>(new RunStore(dir, plan, std::move(m)));
    }
    // Killed before the opening event landed; start over.
    fs::remove(manifest_path);
  }

  RunManifest m;
  m.run_id = sha256_hex("run:" + hash).substr(0, 16);
  m.plan_name = plan.name;
  m.plan_hash = hash;
  auto lex = plan.metadata.find("lexicon_hash");
  if (lex != plan.metadata.end()) m.lexicon_hash = lex->second;
  for (const auto& job : plan.jobs) m.status[job.job_id] = JobStatus::kPending;

  ordered_json ev;
  ev["event"] = "open";
  ev["run_id"] = m.run_id;
  ev["plan_name"] = m.plan_name;
  ev["plan_hash"] = m.plan_hash;
  ev["lexicon_hash"] = m.lexicon_hash;
  ev["jobs"] = plan.jobs.size();
  append_line(manifest_path, ev.dump());
  return std::unique_ptr<RunStore>(new RunStore(dir, plan, std::move(m)));
}

std::unique_ptr<RunStore> RunStore::open_existing(const fs::path& dir) {
  const fs::path plan_path = dir / kPlanFile;
  if (!fs::exists(plan_path)) fail(ErrorCode::kMissingArtifact, "plan.json (no plan in " + dir.string() + ")");
  return open(dir, planner::parse_plan(read_file(plan_path)));
}

RunManifest RunStore::manifest() const {
  std::lock_guard lock(mutex_);
  return manifest_;
}

JobStatus RunStore::status(const std::string& job_id) const {
  std::lock_guard lock(mutex_);
  auto it = manifest_.status.find(job_id);
  if (it == manifest_.status.end()) fail(ErrorCode::kInvalidArgument, "unknown job " + job_id);
  return it->second;
}

std::optional<ImageRecord> RunStore::image(const std::string& job_id) const {
  std::lock_guard lock(mutex_);
  auto it = manifest_.images.find(job_id);
  if (it == manifest_.images.end()) return std::nullopt;
  return it->second;
}

void RunStore::append_event(const std::string& line) { append_line(manifest_path(), line); }

ImageRecord RunStore::put_image(const std::string& job_id, std::string_view png_bytes, const std::string& backend_id) {
  ImageRecord r;
  r.job_id = job_id;
  r.content_hash = sha256_hex(png_bytes);
  r.file_path = std::string(kImagesDir) + "/" + job_id + ".png";
  r.backend_id = backend_id;
  r.created_at = utc_timestamp();
  write_file_atomic(dir_ / r.file_path, png_bytes);

  ordered_json ev;
  ev["event"] = "done";
  ev["job_id"] = r.job_id;
  ev["content_hash"] = r.content_hash;
  ev["file"] = r.file_path;
  ev["backend_id"] = r.backend_id;
  ev["created_at"] = r.created_at;

  std::lock_guard lock(mutex_);
  if (!manifest_.status.contains(job_id)) fail(ErrorCode::kInvalidArgument, "unknown job " + job_id);
  append_event(ev.dump());
  manifest_.status[job_id] = JobStatus::kDone;
  manifest_.failures.erase(job_id);
  manifest_.backend_ids.insert(backend_id);
  manifest_.images[job_id] = r;
  return r;
}

void RunStore::record_failure(const std::string& job_id, const std::string& error, int attempts) {
  ordered_json ev;
  ev["event"] = "failed";
  ev["job_id"] = job_id;
  ev["error"] = error;
  ev["attempts"] = attempts;
  std::lock_guard lock(mutex_);
  if (!manifest_.status.contains(job_id)) fail(ErrorCode::kInvalidArgument, "unknown job " + job_id);
  append_event(ev.dump());
  manifest_.status[job_id] = JobStatus::kFailed;
  manifest_.failures[job_id] = FailureRecord{job_id, error, attempts};
}

std::string RunStore::read_image(const std::string& job_id) const {
  const auto rec = image(job_id);
  if (!rec) fail(ErrorCode::kMissingArtifact, "image for job " + job_id);
  std::string bytes = read_file(dir_ / rec->file_path);
  if (sha256_hex(bytes) != rec->content_hash)
    fail(ErrorCode::kCorruption, "image " + rec->file_path + " does not match its recorded content hash");
  return bytes;
}

fs::path RunStore::embeddings_path(Modality m) const {
  return dir_ / kEmbeddingsDir / (std::string(modality_name(m)) + ".embx");
}

// --- Embedding matrix file ----------------------------------------------------

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const std::string& in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

}  // namespace

fs::path sidecar_path(const fs::path& embx_path) {
  fs::path p = embx_path;
  p += ".json";
  return p;
}

EmbeddingMatrix assemble_matrix(const std::vector<EmbeddingRecord>& records, const planner::ExperimentPlan& plan,
                                Modality modality) {
  struct Row {
    const EmbeddingRecord* rec;
    const planner::GenerationJob* job;
  };
  std::vector<Row> rows;
  rows.reserve(records.size());
  std::uint32_t d = 0;
  for (const auto& r : records) {
    const auto* job = plan.find(r.job_id);
    if (!job) fail(ErrorCode::kInvalidArgument, "embedding for job " + r.job_id + " not in plan");
    if (r.modality != modality) fail(ErrorCode::kInvalidArgument, "mixed modalities in embedding set");
    if (r.vector) {
      if (d == 0) d = static_cast<std::uint32_t>(r.vector->size());
      if (r.vector->size() != d) fail(ErrorCode::kInvariant, "embedding dimensions differ within one modality");
    }
    rows.push_back({&r, job});
  }
  if (d == 0) d = expected_dimension(modality);
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return std::tie(a.job->tag, a.job->seed, a.job->job_id) < std::tie(b.job->tag, b.job->seed, b.job->job_id);
  });

  EmbeddingMatrix m;
  m.modality = modality;
  m.n = static_cast<std::uint32_t>(rows.size());
  m.d = d;
  m.values.assign(static_cast<std::size_t>(m.n) * d, 0.0f);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = *rows[i].rec;
    if (r.vector) std::copy(r.vector->begin(), r.vector->end(), m.values.begin() + i * d);
    m.rows.push_back(RowIdentity{r.job_id, rows[i].job->tag, rows[i].job->seed,
                                 modality == Modality::kFace ? r.face_detected : true});
  }
  return m;
}

void write_embeddings(const fs::path& path, const EmbeddingMatrix& matrix) {
  if (matrix.rows.size() != matrix.n || matrix.values.size() != static_cast<std::size_t>(matrix.n) * matrix.d)
    fail(ErrorCode::kInvariant, "embedding matrix shape does not match its contents");
  std::string out;
  out.reserve(kEmbxHeaderSize + matrix.values.size() * 4);
  out.append("EMBX");
  put_u32(out, kEmbxVersion);
  put_u32(out, matrix.n);
  put_u32(out, matrix.d);
  out.push_back(static_cast<char>(matrix.modality));
  for (float f : matrix.values) put_u32(out, std::bit_cast<std::uint32_t>(f));

  ordered_json side = ordered_json::array();
  for (const auto& r : matrix.rows) {
    ordered_json e;
    e["job_id"] = r.job_id;
    e["tag"] = r.tag;
    e["seed"] = r.seed;
    if (matrix.modality == Modality::kFace) e["face_detected"] = r.face_detected;
    side.push_back(std::move(e));
  }
  // Sidecar first: a reader that finds the matrix always finds its identities.
  write_file_atomic(sidecar_path(path), side.dump(1) + "\n");
  write_file_atomic(path, out);
}

EmbeddingMatrix read_embeddings(const fs::path& path) {
  if (!fs::exists(path)) fail(ErrorCode::kMissingArtifact, path.filename().string());
  const std::string in = read_file(path);
  if (in.size() < kEmbxHeaderSize || in.compare(0, 4, "EMBX") != 0)
    fail(ErrorCode::kIntegrity, path.string() + ": bad EMBX header");
  if (get_u32(in, 4) != kEmbxVersion) fail(ErrorCode::kIntegrity, path.string() + ": unsupported EMBX version");
  EmbeddingMatrix m;
  m.n = get_u32(in, 8);
  m.d = get_u32(in, 12);
  const auto mod = static_cast<unsigned char>(in[16]);
  if (mod > 1) fail(ErrorCode::kIntegrity, path.string() + ": unknown modality code");
  m.modality = static_cast<Modality>(mod);
  const std::size_t expected = kEmbxHeaderSize + static_cast<std::size_t>(m.n) * m.d * 4;
  if (in.size() != expected)
    fail(ErrorCode::kIntegrity, path.string() + ": payload is " + std::to_string(in.size()) + " bytes, expected " +
                                    std::to_string(expected));
  m.values.resize(static_cast<std::size_t>(m.n) * m.d);
  for (std::size_t i = 0; i < m.values.size(); ++i)
    m.values[i] = std::bit_cast<float>(get_u32(in, kEmbxHeaderSize + 4 * i));

  const fs::path side = sidecar_path(path);
  if (!fs::exists(side)) fail(ErrorCode::kIntegrity, path.string() + ": identity sidecar missing");
  json ids;
  try {
    ids = json::parse(read_file(side));
    if (!ids.is_array() || ids.size() != m.n)
      fail(ErrorCode::kIntegrity, side.string() + ": expected " + std::to_string(m.n) + " identities");
    for (const auto& e : ids)
      m.rows.push_back(RowIdentity{e.at("job_id"), e.at("tag"), e.at("seed").get<std::int64_t>(),
                                   e.value("face_detected", true)});
  } catch (const json::exception& e) {
    fail(ErrorCode::kIntegrity, side.string() + ": " + e.what());
  }
  return m;
}

}  // namespace morphprobe::store
