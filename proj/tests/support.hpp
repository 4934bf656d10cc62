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

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "embedding.hpp"
#include "errors.hpp"
#include "util.hpp"

namespace mptest {

namespace fs = std::filesystem;

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "mp-test-XXXXXX").string();
    if (!::mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  fs::path path_;
};

// Runs fn and returns the ErrorCode it threw; fails the caller's check if
// nothing or something else was thrown.
template <typename Fn>
int error_code_of(Fn&& fn) {
  try {
    fn();
  } catch (const morphprobe::Error& e) {
    return static_cast<int>(e.code());
  } catch (...) {
    return -2;
  }
  return -1;
}

inline int code(morphprobe::ErrorCode c) { return static_cast<int>(c); }

// Gaussian rows; `dups` copies earlier rows over later ones to force ties.
inline morphprobe::EmbeddingMatrix random_matrix(std::uint64_t seed, std::uint32_t n, std::uint32_t d,
                                                 std::size_t dups = 0) {
  morphprobe::Rng rng(seed);
  morphprobe::EmbeddingMatrix m;
  m.n = n;
  m.d = d;
  m.values.resize(static_cast<std::size_t>(n) * d);
  for (auto& v : m.values) v = static_cast<float>(rng.gaussian());
  for (std::size_t k = 0; k < dups && n >= 2; ++k) {
    const std::size_t src = rng.below(n), dst = rng.below(n);
    for (std::uint32_t j = 0; j < d; ++j) m.values[dst * d + j] = m.values[src * d + j];
  }
  return m;
}

inline std::vector<std::string> random_tags(std::uint64_t seed, std::size_t n, std::size_t n_tags) {
  morphprobe::Rng rng(seed ^ 0x7461677321ULL);
  std::vector<std::string> tags(n);
  for (auto& t : tags) t = "t" + std::to_string(rng.below(n_tags));
  return tags;
}

// Brute-force nearest neighbor: cosine from raw floats for every ordered
// pair, strict > in ascending order so the lowest index wins ties. Written
// independently of the library kernel.
inline std::vector<std::size_t> oracle_neighbors(const morphprobe::EmbeddingMatrix& m) {
  std::vector<double> norms(m.n);
  for (std::size_t i = 0; i < m.n; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < m.d; ++k) s += static_cast<double>(m.values[i * m.d + k]) * m.values[i * m.d + k];
    norms[i] = std::sqrt(s);
  }
  std::vector<std::size_t> out(m.n);
  for (std::size_t i = 0; i < m.n; ++i) {
    double best = -2.0;
    std::size_t arg = 0;
    for (std::size_t j = 0; j < m.n; ++j) {
      if (j == i) continue;
      double dot = 0.0;
      for (std::size_t k = 0; k < m.d; ++k)
        dot += static_cast<double>(m.values[i * m.d + k]) * m.values[j * m.d + k];
      const double c = dot / (norms[i] * norms[j]);
      if (c > best) {
        best = c;
        arg = j;
      }
    }
    out[i] = arg;
  }
  return out;
}

// Same answer as oracle_neighbors at half the work: each unordered pair is
// scored once in double with four running sums. Candidates still reach each
// row in ascending index order, so strict > keeps the lowest-index tie rule.
inline std::vector<std::size_t> oracle_neighbors_fast(const morphprobe::EmbeddingMatrix& m) {
  const std::size_t n = m.n, d = m.d;
  std::vector<double> x(m.values.begin(), m.values.end());
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) s += x[i * d + k] * x[i * d + k];
    norms[i] = std::sqrt(s);
  }
  std::vector<double> best(n, -2.0);
  std::vector<std::size_t> arg(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* a = &x[i * d];
    for (std::size_t j = i + 1; j < n; ++j) {
      const double* b = &x[j * d];
      double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
      std::size_t k = 0;
      for (; k + 4 <= d; k += 4) {
        s0 += a[k] * b[k];
        s1 += a[k + 1] * b[k + 1];
        s2 += a[k + 2] * b[k + 2];
        s3 += a[k + 3] * b[k + 3];
      }
      for (; k < d; ++k) s0 += a[k] * b[k];
      const double c = ((s0 + s1) + (s2 + s3)) / (norms[i] * norms[j]);
      if (c > best[i]) {
        best[i] = c;
        arg[i] = j;
      }
      if (c > best[j]) {
        best[j] = c;
        arg[j] = i;
      }
    }
  }
  return arg;
}

inline std::vector<bool> hits_of(const std::vector<std::size_t>& nn, const std::vector<std::string>& tags) {
  std::vector<bool> h(nn.size());
  for (std::size_t i = 0; i < nn.size(); ++i) h[i] = tags[nn[i]] == tags[i];
  return h;
}

}  // namespace mptest
