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

#ifndef SECEVENT_ENTITIES_HPP_
#define SECEVENT_ENTITIES_HPP_

#include "secevent/corpus.hpp"

#include <map>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

namespace secevent {

// Bytes >= 0x80 count as word characters so multi-byte code points are never split.
inline bool is_word_byte(unsigned char c) { return std::isalnum(c) || c == '_' || c >= 0x80; }

inline bool is_boundary(std::string_view text, std::size_t pos) {
  if (pos == 0 || pos == text.size()) return true;
  return !is_word_byte(static_cast<unsigned char>(text[pos - 1])) ||
         !is_word_byte(static_cast<unsigned char>(text[pos]));
}

/// Surface-string lexicon used for deterministic entity extraction.
///
/// Entries are normalized on insertion. Matching is case-insensitive (ASCII),
/// a single space in a key matches any run of whitespace in the text, and a
/// match must begin and end on word boundaries.
class Gazetteer {
 public:
  Gazetteer() { nodes_.emplace_back(); }

  void add(std::string_view surface, EntityType type) {
    auto key = normalize_key(surface);
    if (key.empty()) throw DataError("gazetteer entry with empty key");
    if (auto it = entries_.find(key); it != entries_.end()) {
      if (it->second != type) throw DataError("gazetteer key '" + key + "' mapped to two entity types");
      return;
    }
    std::size_t node = 0;
    for (char c : key) {
      auto it = nodes_[node].next.find(c);
      if (it == nodes_[node].next.end()) {
        nodes_.emplace_back();
        it = nodes_[node].next.emplace(c, nodes_.size() - 1).first;
      }
      node = it->second;
    }
    nodes_[node].type = type;
    entries_.emplace(std::move(key), type);
  }

  // TSV: surface<TAB>type per line, '#' starts a comment line.
  static Gazetteer from_tsv(std::string_view contents, const EntityTypeNames& names = {}) {
    Gazetteer g;
    std::size_t line_no = 0;
    std::istringstream in{std::string(contents)};
    std::string line;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const auto first = line.find_first_not_of(" \t");
      if (first == std::string::npos || line[first] == '#') continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos)
        throw DataError("gazetteer line " + std::to_string(line_no) + ": expected surface<TAB>type");
      try {
        g.add(line.substr(0, tab), names.require(line.substr(tab + 1)));
      } catch (const DataError& e) {
        throw DataError("gazetteer line " + std::to_string(line_no) + ": " + e.what());
      }
    }
    return g;
  }

  static Gazetteer load(const std::string& path, const EntityTypeNames& names = {}) {
    return from_tsv(read_file(path), names);
  }

  std::string to_tsv(const EntityTypeNames& names = {}) const {
    std::string out;
    for (const auto& [key, type] : entries_) out += key + '\t' + names.name(type) + '\n';
    return out;
  }

  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }
  const std::map<std::string, EntityType>& entries() const { return entries_; }

  std::optional<EntityType> lookup(std::string_view surface) const {
    auto it = entries_.find(normalize_key(surface));
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  // Longest gazetteer match starting at byte `start`; returns end byte and type.
  std::optional<std::pair<std::size_t, EntityType>> longest_match(std::string_view text, std::size_t start) const {
    std::optional<std::pair<std::size_t, EntityType>> best;
    std::size_t node = 0;
    std::size_t pos = start;
    while (pos < text.size()) {
      const auto c = static_cast<unsigned char>(text[pos]);
      std::size_t next_pos;
      char key_char;
      if (std::isspace(c)) {
        key_char = ' ';
        next_pos = pos;
        while (next_pos < text.size() && std::isspace(static_cast<unsigned char>(text[next_pos]))) ++next_pos;
      } else {
        key_char = static_cast<char>(std::tolower(c));
        next_pos = pos + 1;
      }
      auto it = nodes_[node].next.find(key_char);
      if (it == nodes_[node].next.end()) break;
      node = it->second;
      pos = next_pos;
      if (nodes_[node].type && is_boundary(text, pos)) best = std::make_pair(pos, *nodes_[node].type);
    }
    return best;
  }

 private:
  struct Node {
    std::map<char, std::size_t> next;
    std::optional<EntityType> type;
  };
  std::vector<Node> nodes_;
  std::map<std::string, EntityType> entries_;
};

// Left-to-right, longest-match, non-overlapping scan.
inline std::vector<EntityMention> extract_gazetteer(std::string_view text, const Gazetteer& gaz) {
  if (gaz.empty()) throw UsageError("gazetteer is empty");
  std::vector<EntityMention> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c) || is_utf8_continuation(c) || !is_boundary(text, i)) {
      ++i;
      continue;
    }
    if (auto m = gaz.longest_match(text, i)) {
      const auto [end, type] = *m;
      const Span span{utf8_codepoint_index(text, i), utf8_codepoint_index(text, end)};
      out.push_back(EntityMention::make(type, std::string(text.substr(i, end - i)), span));
      i = end;
    } else {
      ++i;
    }
  }
  return out;
}

inline void extract_entities(Corpus& corpus, const Gazetteer& gaz) {
  for (auto& t : corpus.tweets) t.entities = extract_gazetteer(t.text, gaz);
}

// ---------------------------------------------------------------------------
// Annotation JSONL: {"tweet_id": ..., "entities": [{"type", "surface", "start"?, "end"?}]}

struct Annotation {
  std::string tweet_id;
  std::vector<EntityMention> mentions;
};

inline std::vector<Annotation> parse_annotations(std::string_view jsonl, const EntityTypeNames& names = {}) {
  std::vector<Annotation> out;
  std::size_t line_no = 0;
  std::istringstream in{std::string(jsonl)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = Json::parse(line);
      if (!j.is_object() || !j.contains("tweet_id") || !j["tweet_id"].is_string())
        throw DataError("annotation needs a string 'tweet_id'");
      Annotation a{j["tweet_id"].get<std::string>(), {}};
      if (auto it = j.find("entities"); it != j.end() && !it->is_null())
        for (const auto& e : *it) a.mentions.push_back(mention_from_json(e, names));
      out.push_back(std::move(a));
    } catch (const Json::exception& e) {
      throw DataError("annotation line " + std::to_string(line_no) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("annotation line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

// Attaches mentions to the matching tweets. Spans, when present, must agree
// with the tweet text.
inline Corpus import_annotations(Corpus corpus, const std::vector<Annotation>& annotations) {
  std::unordered_map<std::string_view, std::size_t> index;
  for (std::size_t i = 0; i < corpus.size(); ++i) index.emplace(corpus.tweets[i].tweet_id, i);
  for (const auto& a : annotations) {
    auto it = index.find(a.tweet_id);
    if (it == index.end()) throw DataError("annotation references unknown tweet_id '" + a.tweet_id + "'");
    auto& tweet = corpus.tweets[it->second];
    if (!tweet.entities) tweet.entities.emplace();
    for (const auto& m : a.mentions) {
      if (m.span) {
        const auto b0 = utf8_byte_offset(tweet.text, m.span->start);
        const auto b1 = utf8_byte_offset(tweet.text, m.span->end);
        if (std::string_view(tweet.text).substr(b0, b1 - b0) != m.surface)
          throw DataError("annotation span for tweet '" + a.tweet_id + "' does not match surface '" + m.surface + "'");
      }
      tweet.entities->push_back(m);
    }
  }
  return corpus;
}

inline Corpus import_annotations(Corpus corpus, const std::string& path, const EntityTypeNames& names = {}) {
  return import_annotations(std::move(corpus), parse_annotations(read_file(path), names));
}

// One line per tweet that carries a mention list.
inline std::string export_annotations(const Corpus& corpus, const EntityTypeNames& names = {}) {
  std::string out;
  for (const auto& t : corpus.tweets) {
    if (!t.entities) continue;
    OrderedJson j;
    j["tweet_id"] = t.tweet_id;
    auto arr = OrderedJson::array();
    for (const auto& m : *t.entities) arr.push_back(mention_to_json(m, names));
    j["entities"] = std::move(arr);
    out += j.dump();
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Exact-match NER scoring.

struct NerScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;
};

// A prediction counts iff (key, type, span) equals an unmatched gold mention
// of the same tweet. Empty denominators give 0, except that an entirely empty
// gold and prediction set scores 1 across the board.
inline NerScore ner_evaluate(const std::vector<std::vector<EntityMention>>& gold,
                             const std::vector<std::vector<EntityMention>>& predicted) {
  if (gold.size() != predicted.size())
    throw DataError("ner_evaluate: gold has " + std::to_string(gold.size()) + " tweets, predicted has " +
                    std::to_string(predicted.size()));
  using MatchKey = std::tuple<std::string, std::uint8_t, std::optional<Span>>;
  NerScore s;
  std::size_t n_gold = 0;
  std::size_t n_pred = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    std::map<MatchKey, std::size_t> remaining;
    for (const auto& g : gold[i]) ++remaining[{g.key, g.type.slot, g.span}];
    for (const auto& p : predicted[i]) {
      auto it = remaining.find({p.key, p.type.slot, p.span});
      if (it != remaining.end() && it->second > 0) {
        --it->second;
        ++s.true_positives;
      }
    }
    n_gold += gold[i].size();
    n_pred += predicted[i].size();
  }
  s.false_positives = n_pred - s.true_positives;
  s.false_negatives = n_gold - s.true_positives;
  if (n_gold == 0 && n_pred == 0) {
    s.precision = s.recall = s.f1 = 1.0;
    return s;
  }
  s.precision = n_pred ? static_cast<double>(s.true_positives) / static_cast<double>(n_pred) : 0.0;
  s.recall = n_gold ? static_cast<double>(s.true_positives) / static_cast<double>(n_gold) : 0.0;
  s.f1 = (s.precision + s.recall) > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

}  // namespace secevent

#endif  // SECEVENT_ENTITIES_HPP_
