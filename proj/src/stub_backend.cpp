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

#include <bit>
#include <cmath>
#include <cstring>
#include <thread>

#include "backend.hpp"
#include "png.hpp"
#include "util.hpp"

namespace morphprobe::backend {

namespace {

constexpr std::string_view kStubMagic{"MPSTUB01", 8};
constexpr std::uint32_t kStubImageWidth = 8;
constexpr std::size_t kPayloadSize = 8 + 8 + 8 + 8 + 8;  // magic, cluster, sigma, face rate, seed
constexpr std::uint64_t kBasisStream = 0x6261736973ULL;
constexpr std::uint64_t kFaceStream = 0x66616365ULL;

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(std::string_view in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

StubConcept concept_from_json(const std::string& tag, const nlohmann::json& j) {
  StubConcept c;
  c.tag = tag;
  c.cluster_id = j.at("cluster_id").get<std::int64_t>();
  c.noise_sigma = j.at("noise_sigma").get<double>();
  c.face_rate = j.value("face_rate", 1.0);
  if (c.noise_sigma < 0.0) fail(ErrorCode::kConfiguration, "noise_sigma must be non-negative for '" + tag + "'");
  if (c.face_rate < 0.0 || c.face_rate > 1.0) fail(ErrorCode::kConfiguration, "face_rate must lie in [0, 1]");
  return c;
}

}  // namespace

const StubConcept& ConceptMap::lookup(std::string_view tag) const {
  auto it = concepts.find(tag);
  return it == concepts.end() ? default_concept : it->second;
}

ConceptMap ConceptMap::from_json(const nlohmann::json& j) {
  try {
    ConceptMap map;
    if (j.contains("default")) map.default_concept = concept_from_json("", j.at("default"));
    if (j.contains("concepts"))
      for (const auto& [tag, c] : j.at("concepts").items()) map.concepts[tag] = concept_from_json(tag, c);
    return map;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfiguration, std::string("malformed concept map: ") + e.what());
  }
}

ConceptMap ConceptMap::load(const fs::path& path) {
  if (!fs::exists(path)) fail(ErrorCode::kConfiguration, "concept map not found: " + path.string());
  try {
    return from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfiguration, std::string("concept map is not valid JSON: ") + e.what());
  }
}

nlohmann::ordered_json ConceptMap::to_json() const {
  auto one = [](const StubConcept& c) {
    return nlohmann::ordered_json{{"cluster_id", c.cluster_id}, {"noise_sigma", c.noise_sigma}, {"face_rate", c.face_rate}};
  };
  nlohmann::ordered_json j;
  j["default"] = one(default_concept);
  nlohmann::ordered_json cs = nlohmann::ordered_json::object();
  for (const auto& [tag, c] : concepts) cs[tag] = one(c);
  j["concepts"] = std::move(cs);
  return j;
}

std::string stub_generate(const planner::GenerationJob& job, const ConceptMap& concepts, std::uint64_t master_seed) {
  const StubConcept& c = concepts.lookup(job.tag);
  std::string payload(kStubMagic);
  put_u64(payload, static_cast<std::uint64_t>(c.cluster_id));
  put_u64(payload, std::bit_cast<std::uint64_t>(c.noise_sigma));
  put_u64(payload, std::bit_cast<std::uint64_t>(c.face_rate));
  put_u64(payload, combine_seeds(fnv1a64(job.job_id), master_seed));
  return png::encode_gray8(kStubImageWidth, static_cast<std::uint32_t>(kPayloadSize / kStubImageWidth), payload);
}

StubPayload decode_stub_image(std::string_view png_bytes) {
  const png::Gray8 img = png::decode_gray8(png_bytes);
  if (img.pixels.size() != kPayloadSize || !std::string_view(img.pixels).starts_with(kStubMagic))
    fail(ErrorCode::kProtocol, "image was not produced by the stub backend");
  StubPayload p;
  p.cluster_id = static_cast<std::int64_t>(get_u64(img.pixels, 8));
  p.noise_sigma = std::bit_cast<double>(get_u64(img.pixels, 16));
  p.face_rate = std::bit_cast<double>(get_u64(img.pixels, 24));
  p.noise_seed = get_u64(img.pixels, 32);
  return p;
}

std::vector<float> stub_basis(std::int64_t cluster_id, std::uint32_t dim) {
  Rng rng(combine_seeds(kBasisStream, static_cast<std::uint64_t>(cluster_id)));
  std::vector<double> v(dim);
  double norm2 = 0.0;
  for (auto& x : v) {
    x = rng.gaussian();
    norm2 += x * x;
  }
  const double inv = 1.0 / std::sqrt(norm2);
  std::vector<float> out(dim);
  for (std::uint32_t i = 0; i < dim; ++i) out[i] = static_cast<float>(v[i] * inv);
  return out;
}

EmbeddingRecord stub_embed(std::string_view png_bytes, Modality modality, std::uint64_t master_seed,
                           std::uint32_t dim) {
  const StubPayload p = decode_stub_image(png_bytes);
  if (dim == 0) dim = expected_dimension(modality);
  EmbeddingRecord rec;
  rec.modality = modality;
  rec.model_id = std::string(kStubModelId);

  const std::uint64_t stream = combine_seeds(p.noise_seed, combine_seeds(master_seed, static_cast<std::uint64_t>(modality)));
  if (modality == Modality::kFace) {
    Rng face(combine_seeds(stream, kFaceStream));
    rec.face_detected = face.uniform01() < p.face_rate;
    if (!rec.face_detected) return rec;
  }
  const std::vector<float> basis = stub_basis(p.cluster_id, dim);
  Rng noise(stream);
  std::vector<double> v(dim);
  double norm2 = 0.0;
  for (std::uint32_t i = 0; i < dim; ++i) {
    v[i] = static_cast<double>(basis[i]) + p.noise_sigma * noise.gaussian();
    norm2 += v[i] * v[i];
  }
  const double inv = 1.0 / std::sqrt(norm2);
  std::vector<float> out(dim);
  for (std::uint32_t i = 0; i < dim; ++i) out[i] = static_cast<float>(v[i] * inv);
  rec.vector = std::move(out);
  rec.face_detected = modality == Modality::kFace;
  return rec;
}

StubBackend::StubBackend(ConceptMap concepts, std::uint64_t master_seed, std::chrono::milliseconds latency)
    : concepts_(std::move(concepts)), master_seed_(master_seed), latency_(latency) {}

GenerateResult StubBackend::generate(const planner::GenerationJob& job) {
  ++generate_calls_;
  if (latency_.count() > 0) std::this_thread::sleep_for(latency_);
  return GenerateResult{stub_generate(job, concepts_, master_seed_), std::string(kStubBackendId)};
}

EmbedResult StubBackend::embed(std::string_view png_bytes, Modality modality) {
  ++embed_calls_;
  EmbeddingRecord rec = stub_embed(png_bytes, modality, master_seed_);
  EmbedResult out;
  out.vector = std::move(rec.vector);
  if (modality == Modality::kFace) out.face_detected = rec.face_detected;
  out.model_id = rec.model_id;
  return out;
}

}  // namespace morphprobe::backend
