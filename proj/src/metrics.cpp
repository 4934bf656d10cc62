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

#include "metrics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <thread>

#include "errors.hpp"

namespace morphprobe::metrics {

namespace {

constexpr std::size_t kLanes = 4;
constexpr std::size_t kQueryTile = 4;

// The one dot product used for every pair: four interleaved partial sums
// over the 4-aligned prefix, a fixed reduction tree, then the tail in order.
// Blocking and threading never change which pairs are summed or how, so the
// similarity of (i, j) is the same bit pattern on every code path.
inline double dot_pinned(const double* a, const double* b, std::size_t d) {
  double acc[kLanes] = {};
  const std::size_t d8 = d - d % kLanes;
  for (std::size_t k = 0; k < d8; k += kLanes)
    for (std::size_t l = 0; l < kLanes; ++l) acc[l] += a[k + l] * b[k + l];
  double s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
  for (std::size_t k = d8; k < d; ++k) s += a[k] * b[k];
  return s;
}

// Four queries against one candidate, sharing candidate loads. Each of the
// four results is computed exactly as dot_pinned would.
inline void dot4_pinned(const double* q0, const double* q1, const double* q2, const double* q3, const double* b,
                        std::size_t d, double out[4]) {
  double a0[kLanes] = {}, a1[kLanes] = {}, a2[kLanes] = {}, a3[kLanes] = {};
  const std::size_t d8 = d - d % kLanes;
  for (std::size_t k = 0; k < d8; k += kLanes) {
    for (std::size_t l = 0; l < kLanes; ++l) {
      const double bv = b[k + l];
      a0[l] += q0[k + l] * bv;
      a1[l] += q1[k + l] * bv;
      a2[l] += q2[k + l] * bv;
      a3[l] += q3[k + l] * bv;
    }
  }
  auto reduce = [](const double* acc) {
    return (acc[0] + acc[1]) + (acc[2] + acc[3]);
  };
  double s0 = reduce(a0), s1 = reduce(a1), s2 = reduce(a2), s3 = reduce(a3);
  for (std::size_t k = d8; k < d; ++k) {
    s0 += q0[k] * b[k];
    s1 += q1[k] * b[k];
    s2 += q2[k] * b[k];
    s3 += q3[k] * b[k];
  }
  out[0] = s0;
  out[1] = s1;
  out[2] = s2;
  out[3] = s3;
}

std::vector<double> normalized_rows(const EmbeddingMatrix& m) {
  std::vector<double> out(static_cast<std::size_t>(m.n) * m.d);
  for (std::size_t i = 0; i < m.n; ++i) {
    const auto row = m.row(i);
    double norm2 = 0.0;
    for (float x : row) norm2 += static_cast<double>(x) * x;
    if (!(norm2 > 0.0) || !std::isfinite(norm2))
      fail(ErrorCode::kDomain, "row " + std::to_string(i) + " has zero or non-finite norm");
    const double inv = 1.0 / std::sqrt(norm2);
    double* dst = out.data() + i * m.d;
    for (std::size_t k = 0; k < m.d; ++k) dst[k] = row[k] * inv;
  }
  return out;
}

struct Best {
  double sim = -std::numeric_limits<double>::infinity();
  std::size_t index = std::numeric_limits<std::size_t>::max();

  // Pairs arrive in no particular order, so ties resolve on the index.
  void offer(double s, std::size_t j) {
    if (s > sim || (s == sim && j < index)) {
      sim = s;
      index = j;
    }
  }
};

// One tile of the upper triangle: query rows [ilo, ihi) against candidate
// rows [jlo, jhi), jlo >= ilo. Each unordered pair is scored once and
// offered to both ends. The pinned dot product is symmetric bit for bit, so
// this matches scoring every ordered pair.
void search_tile(const std::vector<double>& x, std::size_t d, std::size_t ilo, std::size_t ihi, std::size_t jlo,
                 std::size_t jhi, std::vector<Best>& best) {
  const bool diagonal = ilo == jlo;
  for (std::size_t q = ilo; q < ihi; q += kQueryTile) {
    const std::size_t qn = std::min(kQueryTile, ihi - q);
    const double* qp[kQueryTile];
    for (std::size_t t = 0; t < kQueryTile; ++t) qp[t] = x.data() + (q + std::min(t, qn - 1)) * d;
    for (std::size_t j = diagonal ? q + 1 : jlo; j < jhi; ++j) {
      const double* cp = x.data() + j * d;
      double s[kQueryTile];
      if (qn == kQueryTile) {
        dot4_pinned(qp[0], qp[1], qp[2], qp[3], cp, d, s);
      } else {
        for (std::size_t t = 0; t < qn; ++t) s[t] = dot_pinned(qp[t], cp, d);
      }
      for (std::size_t t = 0; t < qn; ++t) {
        const std::size_t i = q + t;
        if (j <= i) continue;
        best[i].offer(s[t], j);
        best[j].offer(s[t], i);
      }
    }
  }
}

}  // namespace

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) fail(ErrorCode::kDomain, "cosine_similarity: dimension mismatch");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    ab += static_cast<double>(a[k]) * b[k];
    aa += static_cast<double>(a[k]) * a[k];
    bb += static_cast<double>(b[k]) * b[k];
  }
  if (!(aa > 0.0) || !(bb > 0.0)) fail(ErrorCode::kDomain, "cosine_similarity: zero vector");
  return std::clamp(ab / (std::sqrt(aa) * std::sqrt(bb)), -1.0, 1.0);
}

std::vector<std::size_t> nearest_neighbors(const EmbeddingMatrix& matrix, const PurityOptions& options) {
  const std::size_t n = matrix.n;
  const std::size_t d = matrix.d;
  if (n < 2) fail(ErrorCode::kDomain, "nearest neighbors need at least two rows");
  if (matrix.values.size() != n * d) fail(ErrorCode::kInvalidArgument, "matrix payload does not match n x d");
  if (d == 0) fail(ErrorCode::kDomain, "zero-dimensional embeddings");

  const std::vector<double> x = normalized_rows(matrix);
  const std::size_t block = std::max<std::size_t>(kQueryTile, options.block_rows);
  const std::size_t blocks = (n + block - 1) / block;
  std::vector<std::pair<std::size_t, std::size_t>> tiles;
  for (std::size_t bi = 0; bi < blocks; ++bi)
    for (std::size_t bj = bi; bj < blocks; ++bj) tiles.emplace_back(bi, bj);

  std::size_t threads = options.threads ? options.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::max<std::size_t>(1, std::min(threads, tiles.size()));
  std::vector<std::vector<Best>> partial(threads, std::vector<Best>(n));

  std::atomic<std::size_t> next{0};
  auto worker = [&](std::size_t w) {
    for (std::size_t k; (k = next.fetch_add(1)) < tiles.size();) {
      const auto [bi, bj] = tiles[k];
      search_tile(x, d, bi * block, std::min(n, (bi + 1) * block), bj * block, std::min(n, (bj + 1) * block),
                  partial[w]);
    }
  };
  if (threads == 1) {
    worker(0);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker, t);
  }

  // Merging with the same tie rule makes the result independent of which
  // worker scored which tile.
  std::vector<std::size_t> neighbors(n);
  for (std::size_t i = 0; i < n; ++i) {
    Best b = partial[0][i];
    for (std::size_t w = 1; w < threads; ++w) b.offer(partial[w][i].sim, partial[w][i].index);
    neighbors[i] = b.index;
  }
  return neighbors;
}

std::vector<PurityResult> purity_from_neighbors(const std::vector<std::size_t>& neighbors,
                                                const std::vector<std::string>& tags) {
  if (neighbors.size() != tags.size()) fail(ErrorCode::kInvalidArgument, "one tag per row is required");
  std::map<std::string, PurityResult> by_tag;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    PurityResult& r = by_tag[tags[i]];
    r.rows.push_back(i);
    r.per_image_hits.push_back(tags[neighbors[i]] == tags[i]);
  }
  std::vector<PurityResult> out;
  out.reserve(by_tag.size());
  for (auto& [tag, r] : by_tag) {
    r.tag = tag;
    const auto hits = std::count(r.per_image_hits.begin(), r.per_image_hits.end(), true);
    r.purity = static_cast<double>(hits) / static_cast<double>(r.rows.size());
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<PurityResult> purity_at_1(const EmbeddingMatrix& matrix, const std::vector<std::string>& tags,
                                      const PurityOptions& options) {
  if (tags.size() != matrix.n) fail(ErrorCode::kInvalidArgument, "one tag per row is required");
  return purity_from_neighbors(nearest_neighbors(matrix, options), tags);
}

SimilaritySummary pairwise_summary(const std::vector<EmbeddingRecord>& face_records) {
  SimilaritySummary s;
  s.n_images = face_records.size();
  std::vector<const std::vector<float>*> faces;
  for (const auto& r : face_records)
    if (r.face_detected && r.vector) faces.push_back(&*r.vector);
  s.n_faces = faces.size();
  s.detection_rate = s.n_images ? static_cast<double>(s.n_faces) / static_cast<double>(s.n_images) : 0.0;
  if (faces.size() < 2) return s;

  const std::size_t d = faces.front()->size();
  std::vector<double> x(faces.size() * d);
  for (std::size_t i = 0; i < faces.size(); ++i) {
    const auto& f = *faces[i];
    if (f.size() != d) fail(ErrorCode::kDomain, "face embeddings differ in dimension");
    double norm2 = 0.0;
    for (float v : f) norm2 += static_cast<double>(v) * v;
    if (!(norm2 > 0.0) || !std::isfinite(norm2)) fail(ErrorCode::kDomain, "face embedding has zero norm");
    const double inv = 1.0 / std::sqrt(norm2);
    for (std::size_t k = 0; k < d; ++k) x[i * d + k] = f[k] * inv;
  }

  double sum = 0.0;
  double best = -1.0;
  std::size_t pairs = 0;
  auto take = [&](double c) {
    c = std::clamp(c, -1.0, 1.0);
    sum += c;
    best = std::max(best, c);
    ++pairs;
  };
  const std::size_t n = faces.size();
  for (std::size_t q = 0; q < n; q += kQueryTile) {
    const std::size_t qn = std::min(kQueryTile, n - q);
    const double* qp[kQueryTile];
    for (std::size_t t = 0; t < kQueryTile; ++t) qp[t] = x.data() + (q + std::min(t, qn - 1)) * d;
    for (std::size_t j = q + 1; j < n; ++j) {
      double c[kQueryTile];
      if (qn == kQueryTile) {
        dot4_pinned(qp[0], qp[1], qp[2], qp[3], x.data() + j * d, d, c);
      } else {
        for (std::size_t t = 0; t < qn; ++t) c[t] = dot_pinned(qp[t], x.data() + j * d, d);
      }
      for (std::size_t t = 0; t < qn; ++t)
        if (j > q + t) take(c[t]);
    }
  }
  s.avg_pairwise = sum / static_cast<double>(pairs);
  s.max_pairwise = best;
  return s;
}

}  // namespace morphprobe::metrics
