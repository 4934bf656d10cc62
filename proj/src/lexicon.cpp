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

#include "lexicon.hpp"

#include <algorithm>
#include <set>
#include <unordered_set>

#include "errors.hpp"

namespace morphprobe::lexicon {

// Defined in the generated wordlist translation unit.
extern const char* const kBundledWordlistText;

namespace {

Phonestheme make(std::string cluster, Position position, std::string gloss, std::vector<std::string> examples) {
  return Phonestheme{std::move(cluster), position, std::move(gloss), std::move(examples)};
}

Inventory make_inventory() {
  using P = Position;
  Inventory inv;
  inv.onsets = {
      make("cr", P::kOnset, "Impact, breaking, rough texture", {"crash", "crush", "crumble", "crisp"}),
      make("gl", P::kOnset, "Light, vision, smooth surfaces", {"glow", "gleam", "glitter", "gloss"}),
      make("sn", P::kOnset, "Nasal/oral, sneaky, quick motion", {"snout", "sniff", "snap", "sneak"}),
      make("sl", P::kOnset, "Sliding, slippery, low/negative", {"slide", "slime", "sloth", "sludge"}),
      make("gr", P::kOnset, "Grasping, grinding, discomfort", {"grip", "grind", "groan", "grit"}),
      make("thr", P::kOnset, "Violent motion, penetration", {"throw", "thrust", "thrash", "throttle"}),
      make("br", P::kOnset, "Breaking, broad, abrupt", {"break", "broad", "brash", "bristle"}),
      make("dr", P::kOnset, "Dragging, dripping, dull", {"drag", "drip", "drone", "drudge"}),
      make("sk", P::kOnset, "Surface, scraping, skeletal", {"skin", "skull", "skeleton", "skim"}),
      make("scr", P::kOnset, "Scraping, scratching, harsh", {"scrape", "scratch", "screech", "scrawl"}),
  };
  inv.nuclei = {
      make("ung", P::kNucleus, "Grimy, fungal, subterranean", {"grungy", "fungus", "dungeon"}),
      make("ump", P::kNucleus, "Rounded mass, heavy landing", {"lump", "bump", "clump", "stump"}),
      make("oth", P::kNucleus, "Soft, frothy, fluttering", {"moth", "broth", "froth"}),
      make("ob", P::kNucleus, "Rounded lump", {"blob", "glob", "knob"}),
      make("udge", P::kNucleus, "Heavy, sludgy, dense material", {"sludge", "smudge", "fudge"}),
      make("oom", P::kNucleus, "Resonant, looming, ominous", {"gloom", "doom", "boom", "broom"}),
      make("unk", P::kNucleus, "Dull thud, junk", {"junk", "clunk", "gunk", "chunk"}),
      make("ash", P::kNucleus, "Sudden violent action", {"crash", "bash", "smash", "thrash"}),
      make("og", P::kNucleus, "Murky, clogging", {"bog", "fog", "clog", "smog"}),
      make("ulch", P::kNucleus, "Wet, decaying matter", {"mulch", "gulch"}),
  };
  inv.suffixes = {
      make("oid", P::kSuffix, "Resembling, robotic, biological", {"android", "humanoid", "asteroid"}),
      make("ax", P::kSuffix, "Tool, sharp, decisive", {"pickax", "Ajax", "thorax"}),
      make("us", P::kSuffix, "Latin biological/taxonomic", {"fungus", "cactus", "octopus"}),
      make("um", P::kSuffix, "Latin element/material", {"uranium", "podium", "museum"}),
      make("or", P::kSuffix, "Agent, doer", {"predator", "terminator"}),
      make("ix", P::kSuffix, "Comic/magical, feminine-coded", {"Asterix", "matrix", "phoenix"}),
      make("ling", P::kSuffix, "Small, diminutive, creature", {"duckling", "goblin", "changeling"}),
      make("a", P::kSuffix, "Open, feminine, organic", {"chimera", "hydra", "flora"}),
  };
  return inv;
}

void require_part(const Inventory& inv, Position position, std::string_view part, const char* table) {
  if (!inv.contains(position, part))
    fail(ErrorCode::kInventory, "'" + std::string(part) + "' is not in the " + table + " inventory");
}

bool has_inventory_affix(std::string_view surface, const Inventory& inv) {
  for (const auto& onset : inv.onsets)
    if (surface.starts_with(onset.cluster)) return true;
  for (const auto& suffix : inv.suffixes)
    if (surface.ends_with(suffix.cluster)) return true;
  return false;
}

}  // namespace

bool Inventory::contains(Position position, std::string_view cluster) const {
  const auto& table = at(position);
  return std::any_of(table.begin(), table.end(), [&](const Phonestheme& p) { return p.cluster == cluster; });
}

const std::vector<Phonestheme>& Inventory::at(Position position) const {
  switch (position) {
    case Position::kOnset: return onsets;
    case Position::kNucleus: return nuclei;
    case Position::kSuffix: return suffixes;
  }
  return onsets;
}

const Inventory& build_inventory() {
  static const Inventory inventory = make_inventory();
  return inventory;
}

std::string_view group_name(Group group) {
  switch (group) {
    case Group::kPhonestheme: return "phonestheme";
    case Group::kRandomPronounceable: return "random_pronounceable";
    case Group::kPositiveControl: return "positive_control";
    case Group::kNegativeControl: return "negative_control";
  }
  return "unknown";
}

Group parse_group(std::string_view name) {
  for (Group g : kAllGroups)
    if (group_name(g) == name) return g;
  fail(ErrorCode::kInvalidArgument, "unknown candidate group '" + std::string(name) + "'");
}

// --- Wordlist ---------------------------------------------------------------

Wordlist Wordlist::from_text(std::string_view text) {
  Wordlist list;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t'))
      line.remove_suffix(1);
    while (!line.empty() && (line.front() == ' ' || line.front() == '\t')) line.remove_prefix(1);
    if (!line.empty()) list.words_.insert(to_lower_ascii(line));
    pos = end + 1;
  }
  std::vector<std::string_view> sorted(list.words_.begin(), list.words_.end());
  std::sort(sorted.begin(), sorted.end());
  std::string canonical;
  for (auto w : sorted) {
    canonical.append(w);
    canonical.push_back('\n');
  }
  list.hash_ = sha256_hex(canonical);
  return list;
}

Wordlist Wordlist::load(const fs::path& path) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec))
    fail(ErrorCode::kConfiguration, "wordlist unavailable: " + path.string());
  return from_text(read_file(path));
}

const Wordlist& Wordlist::bundled() {
  static const Wordlist list = from_text(kBundledWordlistText);
  return list;
}

bool Wordlist::contains(std::string_view word) const { return words_.contains(to_lower_ascii(word)); }

bool is_real_word(std::string_view surface, const Wordlist& wordlist) { return wordlist.contains(surface); }

// --- Composition ------------------------------------------------------------

std::string compose(const Inventory& inventory, std::string_view onset, std::string_view nucleus,
                    std::string_view suffix) {
  require_part(inventory, Position::kOnset, onset, "onset");
  require_part(inventory, Position::kNucleus, nucleus, "nucleus");
  require_part(inventory, Position::kSuffix, suffix, "suffix");
  std::string out;
  out.reserve(onset.size() + nucleus.size() + suffix.size());
  out.append(onset).append(nucleus).append(suffix);
  return to_lower_ascii(out);
}

std::optional<Decomposition> decompose(std::string_view surface, const Inventory& inventory) {
  std::optional<Decomposition> best;
  for (const auto& onset : inventory.onsets) {
    if (!surface.starts_with(onset.cluster)) continue;
    for (const auto& suffix : inventory.suffixes) {
      if (onset.cluster.size() + suffix.cluster.size() >= surface.size()) continue;
      if (!surface.ends_with(suffix.cluster)) continue;
      const auto middle = surface.substr(onset.cluster.size(),
                                         surface.size() - onset.cluster.size() - suffix.cluster.size());
      if (!inventory.contains(Position::kNucleus, middle)) continue;
      const bool better = !best || onset.cluster.size() > best->onset.size() ||
                          (onset.cluster.size() == best->onset.size() && suffix.cluster.size() > best->suffix.size());
      if (better) best = Decomposition{onset.cluster, std::string(middle), suffix.cluster};
    }
  }
  return best;
}

// --- Generators -------------------------------------------------------------

std::vector<CandidateWord> generate_phonestheme_candidates(const Inventory& inventory, std::size_t count,
                                                           std::uint64_t rng_seed, LengthBounds bounds,
                                                           const Wordlist& wordlist,
                                                           const std::unordered_set<std::string>& reserved,
                                                           const std::vector<std::string>& pinned) {
  if (pinned.size() > count)
    fail(ErrorCode::kConfiguration, "more pinned phonestheme candidates than the requested count");
  std::vector<CandidateWord> out;
  out.reserve(count);
  std::unordered_set<std::string> seen;
  for (const auto& surface : pinned) {
    const auto d = decompose(surface, inventory);
    if (!d) fail(ErrorCode::kConfiguration, "pinned candidate '" + surface + "' is not an inventory composition");
    if (surface.size() < bounds.min || surface.size() > bounds.max || is_real_word(surface, wordlist) ||
        reserved.contains(surface))
      fail(ErrorCode::kConfiguration, "pinned candidate '" + surface + "' does not pass the candidate filters");
    if (!seen.insert(surface).second) fail(ErrorCode::kConfiguration, "pinned candidate '" + surface + "' repeats");
    out.push_back(CandidateWord{surface, Group::kPhonestheme, *d, rng_seed});
  }
  const std::size_t sampled = count - pinned.size();

  std::vector<Decomposition> pool;
  for (const auto& o : inventory.onsets)
    for (const auto& n : inventory.nuclei)
      for (const auto& s : inventory.suffixes) {
        Decomposition d{o.cluster, n.cluster, s.cluster};
        const std::string surface = d.joined();
        if (surface.size() < bounds.min || surface.size() > bounds.max) continue;
        if (is_real_word(surface, wordlist) || reserved.contains(surface)) continue;
        if (!seen.insert(surface).second) continue;
        pool.push_back(std::move(d));
      }
  if (sampled > pool.size())
    fail(ErrorCode::kExhausted, "requested " + std::to_string(count) + " phonestheme candidates but only " +
                                    std::to_string(pool.size() + pinned.size()) + " survive the filters");

  Rng rng(rng_seed);
  for (std::size_t i = 0; i < sampled; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
    out.push_back(CandidateWord{pool[i].joined(), Group::kPhonestheme, pool[i], rng_seed});
  }
  return out;
}

std::vector<std::string> default_cv_patterns() { return {"CVC", "CVCC", "CVCVC"}; }

std::vector<CandidateWord> generate_random_controls(std::size_t count, std::uint64_t rng_seed,
                                                    const std::vector<std::string>& patterns,
                                                    const Wordlist& wordlist, const RandomControlOptions& options,
                                                    const std::unordered_set<std::string>& reserved) {
  if (count == 0) return {};
  if (patterns.empty()) fail(ErrorCode::kInvalidArgument, "random controls need at least one CV pattern");
  for (const auto& p : patterns)
    if (p.empty() || p.find_first_not_of("CV") != std::string::npos)
      fail(ErrorCode::kInvalidArgument, "CV pattern '" + p + "' may only contain C and V");
  if (options.avoid_inventory_affixes && options.inventory == nullptr)
    fail(ErrorCode::kInvalidArgument, "affix avoidance needs an inventory");

  Rng rng(rng_seed);
  std::vector<CandidateWord> out;
  std::unordered_set<std::string> seen;
  out.reserve(count);
  while (out.size() < count) {
    std::size_t redraws = 0;
    for (;;) {
      const std::string& pattern = patterns[rng.below(patterns.size())];
      std::string surface;
      surface.reserve(pattern.size());
      for (char slot : pattern) {
        const std::string_view letters = slot == 'C' ? kPronounceableConsonants : kVowels;
        surface.push_back(letters[rng.below(letters.size())]);
      }
      const bool ok = !seen.contains(surface) && !is_real_word(surface, wordlist) && !reserved.contains(surface) &&
                      !(options.avoid_inventory_affixes && has_inventory_affix(surface, *options.inventory));
      if (ok) {
        seen.insert(surface);
        out.push_back(CandidateWord{std::move(surface), Group::kRandomPronounceable, std::nullopt, rng_seed});
        break;
      }
      if (++redraws >= kMaxRedraws)
        fail(ErrorCode::kExhausted, "random controls: no new surface after " + std::to_string(kMaxRedraws) +
                                        " redraws (" + std::to_string(out.size()) + " generated)");
    }
  }
  return out;
}

std::vector<CandidateWord> generate_negative_controls(std::size_t count, std::uint64_t rng_seed,
                                                      LengthBounds length) {
  if (length.min == 0 || length.min > length.max)
    fail(ErrorCode::kInvalidArgument, "negative controls need 1 <= min length <= max length");
  Rng rng(rng_seed);
  std::vector<CandidateWord> out;
  std::unordered_set<std::string> seen;
  out.reserve(count);
  const std::uint64_t span = length.max - length.min + 1;
  while (out.size() < count) {
    std::size_t redraws = 0;
    for (;;) {
      const std::size_t len = length.min + static_cast<std::size_t>(rng.below(span));
      std::string surface;
      for (std::size_t i = 0; i < len; ++i) surface.push_back(kAllConsonants[rng.below(kAllConsonants.size())]);
      if (seen.insert(surface).second) {
        out.push_back(CandidateWord{std::move(surface), Group::kNegativeControl, std::nullopt, rng_seed});
        break;
      }
      if (++redraws >= kMaxRedraws)
        fail(ErrorCode::kExhausted, "negative controls: consonant space exhausted");
    }
  }
  return out;
}

std::vector<CandidateWord> positive_controls() {
  std::vector<CandidateWord> out;
  for (const char* w : {"crungus", "goblin", "fungus", "mushroom"})
    out.push_back(CandidateWord{w, Group::kPositiveControl, std::nullopt, 0});
  return out;
}

// --- Lexicon ----------------------------------------------------------------

std::size_t Lexicon::count(Group group) const {
  return static_cast<std::size_t>(
      std::count_if(candidates.begin(), candidates.end(), [&](const CandidateWord& c) { return c.group == group; }));
}

const CandidateWord* Lexicon::find(std::string_view surface) const {
  for (const auto& c : candidates)
    if (c.surface == surface) return &c;
  return nullptr;
}

Lexicon build_lexicon(const LexiconConfig& config, const Wordlist& wordlist) {
  const Inventory& inv = build_inventory();
  Lexicon lex;
  lex.generation_seed = config.seed;
  auto append = [&](std::vector<CandidateWord> words) {
    for (auto& w : words) lex.candidates.push_back(std::move(w));
  };
  // "crungus" is itself an inventory composition (cr + ung + us); the
  // positive controls are kept out of the generated groups.
  std::unordered_set<std::string> reserved;
  if (config.include_positive_controls)
    for (const auto& p : positive_controls()) reserved.insert(p.surface);
  append(generate_phonestheme_candidates(inv, config.phonestheme_count, config.seed, config.phonestheme_length,
                                         wordlist, reserved, config.pinned_phonesthemes));
  for (const auto& p : config.pinned_phonesthemes) reserved.insert(p);
  append(generate_random_controls(config.random_count, config.seed, config.cv_patterns, wordlist,
                                  RandomControlOptions{config.avoid_inventory_affixes, &inv}, reserved));
  if (config.include_positive_controls) {
    auto positives = positive_controls();
    for (auto& p : positives) p.origin_seed = config.seed;
    append(std::move(positives));
  }
  append(generate_negative_controls(config.negative_count, config.seed, config.negative_length));

  std::set<std::string_view> surfaces;
  for (const auto& c : lex.candidates)
    if (!surfaces.insert(c.surface).second)
      fail(ErrorCode::kInvariant, "surface '" + c.surface + "' appears in more than one group");
  return lex;
}

nlohmann::ordered_json to_json(const CandidateWord& word) {
  nlohmann::ordered_json j;
  j["surface"] = word.surface;
  j["group"] = std::string(group_name(word.group));
  if (word.decomposition) {
    j["decomposition"] = {{"onset", word.decomposition->onset},
                          {"nucleus", word.decomposition->nucleus},
                          {"suffix", word.decomposition->suffix}};
  }
  j["origin_seed"] = word.origin_seed;
  return j;
}

CandidateWord candidate_from_json(const nlohmann::json& j) {
  try {
    CandidateWord w;
    w.surface = j.at("surface").get<std::string>();
    w.group = parse_group(j.at("group").get<std::string>());
    if (j.contains("decomposition") && !j.at("decomposition").is_null()) {
      const auto& d = j.at("decomposition");
      w.decomposition = Decomposition{d.at("onset").get<std::string>(), d.at("nucleus").get<std::string>(),
                                      d.at("suffix").get<std::string>()};
    }
    w.origin_seed = j.at("origin_seed").get<std::uint64_t>();
    return w;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kIntegrity, std::string("malformed lexicon entry: ") + e.what());
  }
}

std::string serialize(const Lexicon& lexicon) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& c : lexicon.candidates) arr.push_back(to_json(c));
  return arr.dump(2) + "\n";
}

Lexicon parse_lexicon(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kIntegrity, std::string("lexicon is not valid JSON: ") + e.what());
  }
  if (!j.is_array()) fail(ErrorCode::kIntegrity, "lexicon must be a JSON array");
  Lexicon lex;
  for (const auto& e : j) lex.candidates.push_back(candidate_from_json(e));
  if (!lex.candidates.empty()) lex.generation_seed = lex.candidates.front().origin_seed;
  return lex;
}

}  // namespace morphprobe::lexicon
