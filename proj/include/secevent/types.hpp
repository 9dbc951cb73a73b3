/*
    Licensed under the Apache License, Version 2.0 (the "License");
    you may not use this file except in compliance with the License.
    You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

    Unless required by applicable law or agreed to in writing, software
    distributed under the License is distributed on an "AS IS" BASIS,
    WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
    See the License for the specific language governing permissions and
    limitations under the License.
*/

#ifndef SECEVENT_TYPES_HPP_
#define SECEVENT_TYPES_HPP_

#include "secevent/core.hpp"

#include <array>
#include <bitset>
#include <cctype>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace secevent {

// ---------------------------------------------------------------------------
// Tweet categories.
inline constexpr std::size_t kNumCategories = 7;

enum class Category : std::uint8_t {
  NonSecurity = 0,
  Uninformative,
  Vulnerability,
  RansomwareMalware,
  DataPrivacy,
  FraudPhishing,
  DosDdos,
};

inline constexpr std::array<std::string_view, kNumCategories> kCategoryNames = {
    "Non-security", "Uninformative", "Vulnerability", "Ransomware/Malware", "Data Privacy", "Fraud/Phishing",
    "DoS/DDoS"};

inline std::string_view to_string(Category c) { return kCategoryNames[static_cast<std::size_t>(c)]; }

inline std::optional<Category> parse_category(std::string_view s) {
  for (std::size_t i = 0; i < kNumCategories; ++i)
    if (kCategoryNames[i] == s) return static_cast<Category>(i);
  return std::nullopt;
}

inline bool is_security_category(std::size_t c) { return c >= static_cast<std::size_t>(Category::Vulnerability); }

using CategorySet = std::bitset<kNumCategories>;

inline bool has_security_label(const CategorySet& s) {
  for (std::size_t c = 0; c < kNumCategories; ++c)
    if (s[c] && is_security_category(c)) return true;
  return false;
}

inline std::vector<std::string> category_names(const CategorySet& s) {
  std::vector<std::string> out;
  for (std::size_t c = 0; c < kNumCategories; ++c)
    if (s[c]) out.emplace_back(kCategoryNames[c]);
  return out;
}

// ---------------------------------------------------------------------------
// Entity types. Thirteen slots; the label of each slot can be renamed through a
// manifest, but the count is fixed.
inline constexpr std::size_t kNumEntityTypes = 13;

struct EntityType {
  std::uint8_t slot = 0;
  friend auto operator<=>(const EntityType&, const EntityType&) = default;
};

class EntityTypeNames {
 public:
  EntityTypeNames()
      : names_{"threat-actor", "malware",        "vulnerability", "tool",           "identity",
               "campaign",     "attack-pattern", "infrastructure", "location",      "intrusion-set",
               "course-of-action", "software",   "indicator"} {}

  explicit EntityTypeNames(std::vector<std::string> names) {
    if (names.size() != kNumEntityTypes)
      throw DataError("entity type manifest must list exactly 13 types, got " + std::to_string(names.size()));
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i].empty()) throw DataError("empty entity type name in manifest");
      for (std::size_t j = 0; j < i; ++j)
        if (names[j] == names[i]) throw DataError("duplicate entity type '" + names[i] + "'");
      names_[i] = std::move(names[i]);
    }
  }

  // One name per line; blank lines and '#' comments ignored.
  static EntityTypeNames from_manifest(const std::string& contents) {
    std::vector<std::string> names;
    std::istringstream in(contents);
    std::string line;
    while (std::getline(in, line)) {
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      const auto last = line.find_last_not_of(" \t\r");
      names.push_back(line.substr(first, last - first + 1));
    }
    return EntityTypeNames(std::move(names));
  }

  const std::string& name(EntityType t) const { return names_[t.slot]; }

  std::optional<EntityType> parse(std::string_view s) const {
    for (std::size_t i = 0; i < kNumEntityTypes; ++i)
      if (names_[i] == s) return EntityType{static_cast<std::uint8_t>(i)};
    return std::nullopt;
  }

  EntityType require(std::string_view s) const {
    if (auto t = parse(s)) return *t;
    throw DataError("unknown entity type '" + std::string(s) + "'");
  }

 private:
  std::array<std::string, kNumEntityTypes> names_;
};

struct Span {
  std::size_t start = 0;  // code points, half-open
  std::size_t end = 0;
  friend auto operator<=>(const Span&, const Span&) = default;
};

// Lowercase (ASCII), collapse whitespace runs to one space, trim.
inline std::string normalize_key(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char ch : s) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

struct EntityMention {
  EntityType type;
  std::string surface;
  std::optional<Span> span;
  std::string key;

  static EntityMention make(EntityType type, std::string surface, std::optional<Span> span = std::nullopt) {
    EntityMention m{type, std::move(surface), span, {}};
    m.key = normalize_key(m.surface);
    return m;
  }

  friend bool operator==(const EntityMention&, const EntityMention&) = default;
};

// ---------------------------------------------------------------------------
struct TweetRecord {
  std::string tweet_id;
  std::string user_id;
  Timestamp posted_at;
  std::string text;
  std::optional<std::string> gold_event_id;
  std::optional<CategorySet> gold_categories;
  std::optional<std::uint64_t> follower_count;
  std::optional<std::vector<EntityMention>> entities;
  std::optional<std::vector<double>> text_embedding;

  std::uint64_t followers() const { return follower_count.value_or(0); }
  const std::vector<EntityMention>& mentions() const {
    static const std::vector<EntityMention> none;
    return entities ? *entities : none;
  }

  friend bool operator==(const TweetRecord&, const TweetRecord&) = default;
};

enum class SplitTag { Train, Validation, Test, Unlabeled };

struct Corpus {
  std::vector<TweetRecord> tweets;
  std::optional<Matrix> features;
  SplitTag split = SplitTag::Unlabeled;

  std::size_t size() const { return tweets.size(); }
  bool empty() const { return tweets.empty(); }
};

// Dense event index per tweet (-1 when unlabeled), in first-appearance order.
struct EventLabels {
  std::vector<int> label;
  std::vector<std::string> event_ids;
};

inline EventLabels event_labels(const Corpus& corpus) {
  EventLabels out;
  out.label.reserve(corpus.size());
  std::unordered_map<std::string, int> index;
  for (const auto& t : corpus.tweets) {
    if (!t.gold_event_id) {
      out.label.push_back(-1);
      continue;
    }
    auto [it, inserted] = index.try_emplace(*t.gold_event_id, static_cast<int>(out.event_ids.size()));
    if (inserted) out.event_ids.push_back(*t.gold_event_id);
    out.label.push_back(it->second);
  }
  return out;
}

}  // namespace secevent

#endif  // SECEVENT_TYPES_HPP_
