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
#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "embedding.hpp"
#include "errors.hpp"
#include "planner.hpp"
#include "util.hpp"

namespace morphprobe::backend {

enum class EndpointKind { kGeneration, kImageEmbedding, kFaceEmbedding };

struct BackendEndpoint {
  std::string base_url;
  EndpointKind kind = EndpointKind::kGeneration;
  double timeout_seconds = 600.0;
  std::size_t max_in_flight = 1;
};

/// A failed backend call. Transport errors and 5xx responses are retryable;
/// 4xx responses are final for the job.
class BackendError : public Error {
 public:
  BackendError(const std::string& what, int http_status, bool retryable)
      : Error(ErrorCode::kBackend, what), http_status_(http_status), retryable_(retryable) {}
  int http_status() const noexcept { return http_status_; }
  bool retryable() const noexcept { return retryable_; }

 private:
  int http_status_;
  bool retryable_;
};

struct GenerateResult {
  std::string png;
  std::string backend_id;
};

struct EmbedResult {
  std::optional<std::vector<float>> vector;
  std::optional<bool> face_detected;
  std::string model_id;
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual GenerateResult generate(const planner::GenerationJob& job) = 0;
  virtual EmbedResult embed(std::string_view png_bytes, Modality modality) = 0;
  /// The backend id completed jobs must carry to be reused from the store.
  /// Empty means any recorded id is accepted.
  virtual std::string expected_backend_id() const = 0;
};

// --- Wire protocol ------------------------------------------------------------

/// Request body for POST /v1/generate. Field order is fixed; "adapter" is
/// omitted when the job applies none.
nlohmann::ordered_json generate_request(const planner::GenerationJob& job);
/// JSON part of the multipart POST /v1/embed request.
nlohmann::ordered_json embed_request(Modality modality);
/// Validates and decodes a /v1/embed response body. Violations are kProtocol.
EmbedResult parse_embed_response(std::string_view body, Modality modality);

/// Client for the HTTP wire protocol, built on cpp-httplib. A fresh
/// connection is used per request, so one instance may be shared by the
/// runner's worker threads.
class HttpBackend final : public Backend {
 public:
  HttpBackend(BackendEndpoint generation, BackendEndpoint embedding, std::string expected_backend_id = {});

  GenerateResult generate(const planner::GenerationJob& job) override;
  EmbedResult embed(std::string_view png_bytes, Modality modality) override;
  std::string expected_backend_id() const override { return expected_backend_id_; }

 private:
  BackendEndpoint generation_;
  BackendEndpoint embedding_;
  std::string expected_backend_id_;
};

// --- Deterministic stub -------------------------------------------------------

inline constexpr std::string_view kStubBackendId = "stub-v1";
inline constexpr std::string_view kStubModelId = "stub-embedder-v1";

struct StubConcept {
  std::string tag;
  std::int64_t cluster_id = 0;
  double noise_sigma = 1.0;
  double face_rate = 1.0;  // probability that a face is "detected"
};

struct ConceptMap {
  StubConcept default_concept{"", 0, 1.0, 1.0};
  std::map<std::string, StubConcept, std::less<>> concepts;

  const StubConcept& lookup(std::string_view tag) const;
  /// {"default": {cluster_id, noise_sigma, face_rate?},
  ///  "concepts": {tag: {cluster_id, noise_sigma, face_rate?}}}
  static ConceptMap from_json(const nlohmann::json& j);
  static ConceptMap load(const fs::path& path);
  nlohmann::ordered_json to_json() const;
};

/// Decoded contents of a stub image.
struct StubPayload {
  std::int64_t cluster_id = 0;
  double noise_sigma = 0.0;
  double face_rate = 1.0;
  std::uint64_t noise_seed = 0;
};

/// A small grayscale PNG whose pixels carry the concept cluster, its noise
/// level and a per-job noise seed derived from (job_id, master_seed).
std::string stub_generate(const planner::GenerationJob& job, const ConceptMap& concepts, std::uint64_t master_seed);
StubPayload decode_stub_image(std::string_view png_bytes);

/// Unit vector drawn from a seeded Gaussian, one per cluster id.
std::vector<float> stub_basis(std::int64_t cluster_id, std::uint32_t dim);

/// normalize(basis(cluster) + sigma * N(0, I)) with a job-specific stream.
/// Face records are "detected" with the concept's face_rate.
EmbeddingRecord stub_embed(std::string_view png_bytes, Modality modality, std::uint64_t master_seed,
                           std::uint32_t dim = 0);

class StubBackend final : public Backend {
 public:
  explicit StubBackend(ConceptMap concepts, std::uint64_t master_seed = 0,
                       std::chrono::milliseconds latency = std::chrono::milliseconds{0});

  GenerateResult generate(const planner::GenerationJob& job) override;
  EmbedResult embed(std::string_view png_bytes, Modality modality) override;
  std::string expected_backend_id() const override { return std::string(kStubBackendId); }

  std::size_t generate_calls() const { return generate_calls_.load(); }
  std::size_t embed_calls() const { return embed_calls_.load(); }

 private:
  ConceptMap concepts_;
  std::uint64_t master_seed_;
  std::chrono::milliseconds latency_;
  std::atomic<std::size_t> generate_calls_{0};
  std::atomic<std::size_t> embed_calls_{0};
};

}  // namespace morphprobe::backend
