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

#include <cmath>

#include <httplib.h>

#include "backend.hpp"
#include "png.hpp"

namespace morphprobe::backend {

namespace {

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path prefix without trailing '/'
};

ParsedUrl parse_base_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos || url.compare(0, scheme_end, "http") != 0)
    fail(ErrorCode::kConfiguration, "backend URL must start with http:// : " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl out;
  out.origin = url.substr(0, path_start);
  if (path_start != std::string::npos) {
    out.prefix = url.substr(path_start);
    while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
  }
  return out;
}

httplib::Client make_client(const ParsedUrl& url, double timeout_seconds) {
  httplib::Client cli(url.origin);
  const auto secs = static_cast<time_t>(timeout_seconds);
  const auto usecs = static_cast<time_t>((timeout_seconds - static_cast<double>(secs)) * 1e6);
  cli.set_connection_timeout(secs, usecs);
  cli.set_read_timeout(secs, usecs);
  cli.set_write_timeout(secs, usecs);
  return cli;
}

[[noreturn]] void raise_for_status(const std::string& what, int status, const std::string& body) {
  std::string msg = what + " returned HTTP " + std::to_string(status);
  if (!body.empty()) msg += ": " + body.substr(0, 200);
  if (status >= 500) throw BackendError(msg, status, true);
  if (status >= 400) throw BackendError(msg, status, false);
  fail(ErrorCode::kProtocol, msg + " (unexpected status)");
}

}  // namespace

nlohmann::ordered_json generate_request(const planner::GenerationJob& job) {
  nlohmann::ordered_json j;
  j["prompt"] = job.prompt;
  j["negative_prompt"] = job.negative_prompt;
  j["seed"] = job.seed;
  j["guidance_scale"] = job.guidance_scale;
  j["steps"] = job.steps;
  j["width"] = job.width;
  j["height"] = job.height;
  if (job.adapter_weight) j["adapter"] = {{"name", job.adapter_name}, {"weight", *job.adapter_weight}};
  return j;
}

nlohmann::ordered_json embed_request(Modality modality) {
  nlohmann::ordered_json j;
  j["modality"] = std::string(modality_name(modality));
  return j;
}

EmbedResult parse_embed_response(std::string_view body, Modality modality) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kProtocol, std::string("embed response is not JSON: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorCode::kProtocol, "embed response must be a JSON object");
  if (!j.contains("model_id") || !j["model_id"].is_string())
    fail(ErrorCode::kProtocol, "embed response lacks a string model_id");
  EmbedResult out;
  out.model_id = j["model_id"].get<std::string>();

  if (j.contains("face_detected")) {
    if (!j["face_detected"].is_boolean()) fail(ErrorCode::kProtocol, "face_detected must be boolean");
    out.face_detected = j["face_detected"].get<bool>();
  }
  const bool has_vector = j.contains("vector") && !j["vector"].is_null();
  if (has_vector) {
    const auto& v = j["vector"];
    if (!v.is_array() || v.empty()) fail(ErrorCode::kProtocol, "vector must be a non-empty array");
    std::vector<float> vec;
    vec.reserve(v.size());
    for (const auto& x : v) {
      if (!x.is_number()) fail(ErrorCode::kProtocol, "vector entries must be numbers");
      const double d = x.get<double>();
      if (!std::isfinite(d)) fail(ErrorCode::kProtocol, "vector entries must be finite");
      vec.push_back(static_cast<float>(d));
    }
    out.vector = std::move(vec);
  }

  if (modality == Modality::kFace) {
    if (!out.face_detected) fail(ErrorCode::kProtocol, "face embed response lacks face_detected");
    if (*out.face_detected && !has_vector) fail(ErrorCode::kProtocol, "face detected but no vector returned");
    if (!*out.face_detected) out.vector.reset();
  } else if (!has_vector) {
    fail(ErrorCode::kProtocol, "image_clip embed response lacks a vector");
  }
  return out;
}

HttpBackend::HttpBackend(BackendEndpoint generation, BackendEndpoint embedding, std::string expected_backend_id)
    : generation_(std::move(generation)),
      embedding_(std::move(embedding)),
      expected_backend_id_(std::move(expected_backend_id)) {}

GenerateResult HttpBackend::generate(const planner::GenerationJob& job) {
  const ParsedUrl url = parse_base_url(generation_.base_url);
  auto cli = make_client(url, generation_.timeout_seconds);
  const auto res = cli.Post(url.prefix + "/v1/generate", generate_request(job).dump(), "application/json");
  if (!res) throw BackendError("generate: transport error (" + httplib::to_string(res.error()) + ")", 0, true);
  if (res->status != 200) raise_for_status("generate", res->status, res->body);
  if (!png::has_signature(res->body)) fail(ErrorCode::kProtocol, "generate response body is not a PNG");
  const std::string backend_id = res->get_header_value("X-Backend-Id");
  if (backend_id.empty()) fail(ErrorCode::kProtocol, "generate response lacks X-Backend-Id");
  return GenerateResult{res->body, backend_id};
}

EmbedResult HttpBackend::embed(std::string_view png_bytes, Modality modality) {
  const ParsedUrl url = parse_base_url(embedding_.base_url);
  auto cli = make_client(url, embedding_.timeout_seconds);
  httplib::MultipartFormDataItems items = {
      {"request", embed_request(modality).dump(), "", "application/json"},
      {"image", std::string(png_bytes), "image.png", "image/png"},
  };
  const auto res = cli.Post(url.prefix + "/v1/embed", items);
  if (!res) throw BackendError("embed: transport error (" + httplib::to_string(res.error()) + ")", 0, true);
  if (res->status != 200) raise_for_status("embed", res->status, res->body);
  return parse_embed_response(res->body, modality);
}

}  // namespace morphprobe::backend
