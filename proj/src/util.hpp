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
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace morphprobe {

namespace fs = std::filesystem;

/// Seeded generator with a pinned algorithm. The engine is std::mt19937_64,
/// whose output sequence is fixed by the standard; bounded integers and
/// normal deviates are derived here rather than through the
/// implementation-defined std distributions, so serialized artifacts are
/// identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform integer in [0, bound) by rejection; bound must be > 0.
  std::uint64_t below(std::uint64_t bound);

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller; consumes two uniforms per pair.
  double gaussian();

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

/// splitmix64 finalizer; used to derive independent stream seeds.
std::uint64_t mix64(std::uint64_t x);
std::uint64_t combine_seeds(std::uint64_t a, std::uint64_t b);

/// FNV-1a, 64-bit. Stable across platforms.
std::uint64_t fnv1a64(std::string_view text);

std::string sha256_hex(std::string_view bytes);

std::string to_lower_ascii(std::string_view text);
bool is_lower_alpha(std::string_view text);

/// Fixed-point formatting ("%.*f"), the single float format used in reports.
std::string format_fixed(double value, int decimals = 4);

std::string read_file(const fs::path& path);
/// Writes to a sibling temp file and renames it into place.
void write_file_atomic(const fs::path& path, std::string_view bytes);
/// Appends one line with a single O_APPEND write, then fdatasync.
void append_line(const fs::path& path, std::string_view line);

std::string utc_timestamp();

}  // namespace morphprobe
