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
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace morphprobe {

enum class Modality : std::uint8_t { kImageClip = 0, kFace = 1 };

std::string_view modality_name(Modality m);
Modality parse_modality(std::string_view name);
/// 768 for image_clip, 512 for face.
std::uint32_t expected_dimension(Modality m);

struct EmbeddingRecord {
  std::string job_id;
  Modality modality = Modality::kImageClip;
  std::optional<std::vector<float>> vector;  // absent iff a face record had no detection
  bool face_detected = false;
  std::string model_id;
};

struct RowIdentity {
  std::string job_id;
  std::string tag;
  std::int64_t seed = 0;
  bool face_detected = true;

  bool operator==(const RowIdentity&) const = default;
};

/// Dense n x d row-major matrix plus per-row identity.
struct EmbeddingMatrix {
  Modality modality = Modality::kImageClip;
  std::uint32_t n = 0;
  std::uint32_t d = 0;
  std::vector<float> values;
  std::vector<RowIdentity> rows;

  std::span<const float> row(std::size_t i) const { return {values.data() + i * d, d}; }
  std::span<float> row(std::size_t i) { return {values.data() + i * d, d}; }
  std::vector<std::string> tags() const;
};

}  // namespace morphprobe
