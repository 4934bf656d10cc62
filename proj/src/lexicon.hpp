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
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "util.hpp"

namespace morphprobe::lexicon {

inline constexpr std::string_view kInventoryVersion = "phonestheme-inventory/1";

enum class Position { kOnset, kNucleus, kSuffix };

struct Phonestheme {
  std::string cluster;
  Position position;
  std::string gloss;
  std::vector<std::string> examples;
};

struct Inventory {
  std::vector<Phonestheme> onsets;
  std::vector<Phonestheme> nuclei;
  std::vector<Phonestheme> suffixes;

  bool contains(Position position, std::string_view cluster) const;
  const std::vector<Phonestheme>& at(Position position) const;
};

/// 10 onsets, 10 nuclei, 8 suffixes. Static data; the returned reference is
/// valid for the life of the program.
const Inventory& build_inventory();

enum class Group { kPhonestheme, kRandomPronounceable, kPositiveControl, kNegativeControl };

std::string_view group_name(Group group);
Group parse_group(std::string_view name);
inline constexpr Group kAllGroups[] = {Group::kPhonestheme, Group::kRandomPronounceable,
                                       Group::kPositiveControl, Group::kNegativeControl};

struct Decomposition {
  std::string onset;
  std::string nucleus;
  std::string suffix;

  std::string joined() const { return onset + nucleus + suffix; }
  bool operator==(const Decomposition&) const = default;
};

struct CandidateWord {
  std::string surface;
  Group group;
  std::optional<Decomposition> decomposition;
  std::uint64_t origin_seed = 0;

  bool operator==(const CandidateWord&) const = default;
};

/// Case-insensitive set of dictionary entries. Entries are lowercased on load.
class Wordlist {
 public:
  Wordlist() = default;

  /// The in-repo list compiled into the library.
  static const Wordlist& bundled();
  /// Newline-delimited file. A missing or unreadable file is a configuration error.
  static Wordlist load(const fs::path& path);
  static Wordlist from_text(std::string_view text);

  bool contains(std::string_view word) const;
  std::size_t size() const { return words_.size(); }
  bool empty() const { return words_.empty(); }
  /// sha256 over the sorted, lowercased entries joined by '\n'.
  const std::string& hash() const { return hash_; }

 private:
  std::unordered_set<std::string> words_;
  std::string hash_;
};

bool is_real_word(std::string_view surface, const Wordlist& wordlist);

/// Plain concatenation; every part must belong to its inventory table.
std::string compose(const Inventory& inventory, std::string_view onset, std::string_view nucleus,
                    std::string_view suffix);

/// Inverse of compose. When several parses exist the longest onset wins,
/// then the longest suffix.
std::optional<Decomposition> decompose(std::string_view surface, const Inventory& inventory);

struct LengthBounds {
  std::size_t min = 5;
  std::size_t max = 9;
};

/// Enumerates onset x nucleus x suffix in table order, filters by length and
/// dictionary, then takes the first `count` entries of a seeded Fisher-Yates
/// shuffle of the survivors. Surfaces in `reserved` are never produced.
/// Pinned surfaces come first and are drawn out of the shuffled pool; with
/// none pinned the output is unchanged.
std::vector<CandidateWord> generate_phonestheme_candidates(const Inventory& inventory, std::size_t count,
                                                           std::uint64_t rng_seed, LengthBounds bounds,
                                                           const Wordlist& wordlist,
                                                           const std::unordered_set<std::string>& reserved = {},
                                                           const std::vector<std::string>& pinned = {});

inline constexpr std::string_view kPronounceableConsonants = "bcdfghjklmnprstvwz";
inline constexpr std::string_view kVowels = "aeiou";
inline constexpr std::string_view kAllConsonants = "bcdfghjklmnpqrstvwxyz";
inline constexpr std::size_t kMaxRedraws = 10000;

struct RandomControlOptions {
  /// Reject surfaces that start with an inventory onset or end with an
  /// inventory suffix. Needs `inventory`.
  bool avoid_inventory_affixes = true;
  const Inventory* inventory = nullptr;
};

std::vector<std::string> default_cv_patterns();

/// Each pattern is a string over {C, V}. A pattern is picked uniformly per
/// draw, then each slot is filled uniformly from its letter class.
std::vector<CandidateWord> generate_random_controls(std::size_t count, std::uint64_t rng_seed,
                                                    const std::vector<std::string>& patterns,
                                                    const Wordlist& wordlist,
                                                    const RandomControlOptions& options = {},
                                                    const std::unordered_set<std::string>& reserved = {});

std::vector<CandidateWord> generate_negative_controls(std::size_t count, std::uint64_t rng_seed,
                                                      LengthBounds length = {4, 6});

std::vector<CandidateWord> positive_controls();

struct LexiconConfig {
  std::uint64_t seed = 42;
  std::size_t phonestheme_count = 200;
  std::size_t random_count = 100;
  std::size_t negative_count = 50;
  bool include_positive_controls = true;
  LengthBounds phonestheme_length{5, 9};
  LengthBounds negative_length{4, 6};
  std::vector<std::string> cv_patterns = default_cv_patterns();
  bool avoid_inventory_affixes = true;
  // Phonestheme surfaces that must be in the sample, e.g. to reproduce a
  // published candidate set. They count toward phonestheme_count.
  std::vector<std::string> pinned_phonesthemes;
};

struct Lexicon {
  std::vector<CandidateWord> candidates;
  std::string inventory_version{kInventoryVersion};
  std::uint64_t generation_seed = 0;

  std::size_t count(Group group) const;
  const CandidateWord* find(std::string_view surface) const;
};

/// Groups in fixed order: phonestheme, random, positive, negative.
/// Fails with an invariant error if any surface repeats across groups.
Lexicon build_lexicon(const LexiconConfig& config, const Wordlist& wordlist);

nlohmann::ordered_json to_json(const CandidateWord& word);
CandidateWord candidate_from_json(const nlohmann::json& j);

/// The on-disk form: a JSON array of {surface, group, decomposition?, origin_seed}.
std::string serialize(const Lexicon& lexicon);
Lexicon parse_lexicon(std::string_view text);

}  // namespace morphprobe::lexicon
