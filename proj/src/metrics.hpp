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

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "embedding.hpp"

namespace morphprobe::metrics {

/// dot(a, b) / (|a| |b|), clamped to [-1, 1]. Zero vectors and dimension
/// mismatches are domain errors.
double cosine_similarity(std::span<const float> a, std::span<const float> b);

struct PurityOptions {
  /// Worker threads for the query loop; 0 picks hardware concurrency.
  std::size_t threads = 0;
  /// Query rows per block.
  std::size_t block_rows = 64;
};

/// Index of each row's nearest neighbor by cosine over all other rows.
/// Exact search; ties go to the lowest row index. Needs n >= 2.
std::vector<std::size_t> nearest_neighbors(const EmbeddingMatrix& matrix, const PurityOptions& options = {});

struct PurityResult {
  std::string tag;
  double purity = 0.0;
  std::vector<std::size_t> rows;    // matrix rows carrying this tag, ascending
  std::vector<bool> per_image_hits;  // parallel to rows

  std::size_t n_images() const { return rows.size(); }
};

/// Purity@1 per tag, tags in lexicographic order. `tags` has one entry per row.
std::vector<PurityResult> purity_at_1(const EmbeddingMatrix& matrix, const std::vector<std::string>& tags,
                                      const PurityOptions& options = {});

/// Same, from precomputed neighbor indices.
std::vector<PurityResult> purity_from_neighbors(const std::vector<std::size_t>& neighbors,
                                                const std::vector<std::string>& tags);

struct SimilaritySummary {
  std::size_t n_images = 0;
  std::size_t n_faces = 0;
  double detection_rate = 0.0;
  std::optional<double> avg_pairwise;  // absent with fewer than two faces
  std::optional<double> max_pairwise;
};

/// Detection rate over all records; mean and max cosine over unordered pairs
/// of detected-face vectors.
SimilaritySummary pairwise_summary(const std::vector<EmbeddingRecord>& face_records);

}  // namespace morphprobe::metrics
