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

#ifndef SECEVENT_CORPUS_HPP_
#define SECEVENT_CORPUS_HPP_

#include "json.hpp"
#include "secevent/types.hpp"

#include <algorithm>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

namespace secevent {

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Entity mention (de)serialization, shared by tweet JSONL and annotation JSONL.

// When `text` is given, spans are checked against it.
inline EntityMention mention_from_json(const Json& j, const EntityTypeNames& names,
                                       std::optional<std::string_view> text = std::nullopt) {
  if (!j.is_object() || !j.contains("type") || !j.contains("surface"))
    throw DataError("entity object needs 'type' and 'surface'");
  const auto type = names.require(j.at("type").get<std::string>());
  auto surface = j.at("surface").get<std::string>();
  std::optional<Span> span;
  const bool has_start = j.contains("start") && !j["start"].is_null();
  const bool has_end = j.contains("end") && !j["end"].is_null();
  if (has_start != has_end) throw DataError("entity span needs both 'start' and 'end'");
  if (has_start) {
    const auto start = j["start"].get<std::int64_t>();
    const auto end = j["end"].get<std::int64_t>();
    if (start < 0 || end < start) throw DataError("invalid entity span");
    span = Span{static_cast<std::size_t>(start), static_cast<std::size_t>(end)};
    if (text) {
      const auto b0 = utf8_byte_offset(*text, span->start);
      const auto b1 = utf8_byte_offset(*text, span->end);
      if (text->substr(b0, b1 - b0) != surface)
        throw DataError("entity span [" + std::to_string(start) + "," + std::to_string(end) +
                        ") does not match surface '" + surface + "'");
    }
  }
  return EntityMention::make(type, std::move(surface), span);
}

inline OrderedJson mention_to_json(const EntityMention& m, const EntityTypeNames& names) {
  OrderedJson j;
  j["type"] = names.name(m.type);
  j["surface"] = m.surface;
  if (m.span) {
    j["start"] = m.span->start;
    j["end"] = m.span->end;
  }
  return j;
}

// ---------------------------------------------------------------------------
// Tweet JSONL.

inline TweetRecord tweet_from_json(const Json& j, const EntityTypeNames& names = {}) {
  if (!j.is_object()) throw DataError("expected a JSON object");
  for (const char* key : {"tweet_id", "user_id", "posted_at", "text"})
    if (!j.contains(key) || !j[key].is_string()) throw DataError(std::string("missing or non-string '") + key + "'");
  TweetRecord t;
  t.tweet_id = j["tweet_id"].get<std::string>();
  t.user_id = j["user_id"].get<std::string>();
  t.posted_at = parse_timestamp(j["posted_at"].get<std::string>());
  t.text = j["text"].get<std::string>();
  if (t.tweet_id.empty()) throw DataError("empty tweet_id");
  if (auto it = j.find("gold_event_id"); it != j.end() && !it->is_null()) t.gold_event_id = it->get<std::string>();
  if (auto it = j.find("gold_categories"); it != j.end() && !it->is_null()) {
    CategorySet cats;
    for (const auto& c : *it) {
      const auto label = c.get<std::string>();
      const auto parsed = parse_category(label);
      if (!parsed) throw DataError("unknown category label '" + label + "'");
      cats.set(static_cast<std::size_t>(*parsed));
    }
    t.gold_categories = cats;
  }
  if (auto it = j.find("follower_count"); it != j.end() && !it->is_null()) {
    if (!it->is_number_integer() || it->get<std::int64_t>() < 0)
      throw DataError("follower_count must be a non-negative integer");
    t.follower_count = it->get<std::uint64_t>();
  }
  if (auto it = j.find("entities"); it != j.end() && !it->is_null()) {
    std::vector<EntityMention> ms;
    for (const auto& e : *it) ms.push_back(mention_from_json(e, names, std::string_view(t.text)));
    t.entities = std::move(ms);
  }
  if (auto it = j.find("text_embedding"); it != j.end() && !it->is_null()) {
    std::vector<double> v;
    for (const auto& x : *it) {
      if (!x.is_number()) throw DataError("text_embedding entries must be numbers");
      v.push_back(x.get<double>());
    }
    t.text_embedding = std::move(v);
  }
  return t;
}

inline OrderedJson tweet_to_json(const TweetRecord& t, const EntityTypeNames& names = {}) {
  OrderedJson j;
  j["tweet_id"] = t.tweet_id;
  j["user_id"] = t.user_id;
  j["posted_at"] = format_timestamp(t.posted_at);
  j["text"] = t.text;
  if (t.gold_event_id) j["gold_event_id"] = *t.gold_event_id;
  if (t.gold_categories) j["gold_categories"] = category_names(*t.gold_categories);
  if (t.follower_count) j["follower_count"] = *t.follower_count;
  if (t.entities) {
    auto arr = OrderedJson::array();
    for (const auto& m : *t.entities) arr.push_back(mention_to_json(m, names));
    j["entities"] = std::move(arr);
  }
  if (t.text_embedding) j["text_embedding"] = *t.text_embedding;
  return j;
}

// ---------------------------------------------------------------------------
// TWZF feature matrix: "TWZF", u32 version = 1, u32 rows, u32 cols, f32 row-major.

inline constexpr std::uint32_t kFeatureFormatVersion = 1;

inline std::string serialize_feature_matrix(const Matrix& m) {
  std::string out = "TWZF";
  out.reserve(16 + static_cast<std::size_t>(m.size()) * 4);
  put_u32(out, kFeatureFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) put_f32(out, static_cast<float>(m(r, c)));
  return out;
}

inline Matrix parse_feature_matrix(std::string_view bytes) {
  ByteReader in(bytes);
  if (in.bytes(4) != "TWZF") throw DataError("feature file: bad magic (expected TWZF)");
  if (const auto v = in.u32(); v != kFeatureFormatVersion)
    throw DataError("feature file: unsupported version " + std::to_string(v));
  const auto rows = in.u32();
  const auto cols = in.u32();
  if (in.remaining() != static_cast<std::size_t>(rows) * cols * 4)
    throw DataError("feature file: payload size does not match " + std::to_string(rows) + "x" + std::to_string(cols));
  Matrix m(rows, cols);
  for (std::uint32_t r = 0; r < rows; ++r)
    for (std::uint32_t c = 0; c < cols; ++c) m(r, c) = static_cast<double>(in.f32());
  return m;
}

inline Matrix read_feature_matrix(const std::string& path) { return parse_feature_matrix(read_file(path)); }

inline void write_feature_matrix(const std::string& path, const Matrix& m) {
  write_file(path, serialize_feature_matrix(m));
}

// ---------------------------------------------------------------------------

inline void validate_corpus(const Corpus& c) {
  std::unordered_set<std::string_view> seen;
  seen.reserve(c.size());
  for (const auto& t : c.tweets)
    if (!seen.insert(t.tweet_id).second) throw DataError("duplicate tweet_id '" + t.tweet_id + "'");
  if (c.features && static_cast<std::size_t>(c.features->rows()) != c.size())
    throw DataError("feature matrix has " + std::to_string(c.features->rows()) + " rows but corpus has " +
                    std::to_string(c.size()) + " tweets");
}

inline Corpus parse_corpus(std::string_view jsonl, const EntityTypeNames& names = {}) {
  Corpus corpus;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < jsonl.size()) {
    auto nl = jsonl.find('\n', pos);
    if (nl == std::string_view::npos) nl = jsonl.size();
    auto line = jsonl.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    try {
      corpus.tweets.push_back(tweet_from_json(Json::parse(line), names));
    } catch (const Json::exception& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  validate_corpus(corpus);
  return corpus;
}

inline Corpus load_corpus(const std::string& path, const std::optional<std::string>& feature_path = std::nullopt,
                          const EntityTypeNames& names = {}) {
  Corpus corpus = parse_corpus(read_file(path), names);
  if (feature_path) {
    corpus.features = read_feature_matrix(*feature_path);
    validate_corpus(corpus);
  }
  return corpus;
}

inline std::string serialize_corpus(const Corpus& c, const EntityTypeNames& names = {}) {
  std::string out;
  for (const auto& t : c.tweets) {
    out += tweet_to_json(t, names).dump();
    out += '\n';
  }
  return out;
}

inline void save_corpus(const Corpus& c, const std::string& path, const EntityTypeNames& names = {}) {
  write_file(path, serialize_corpus(c, names));
}

// Rows of `c` at `indices`, carrying feature rows along.
inline Corpus select(const Corpus& c, const std::vector<std::size_t>& indices) {
  Corpus out;
  out.split = c.split;
  out.tweets.reserve(indices.size());
  for (auto i : indices) out.tweets.push_back(c.tweets.at(i));
  if (c.features) {
    Matrix f(static_cast<Eigen::Index>(indices.size()), c.features->cols());
    for (std::size_t r = 0; r < indices.size(); ++r) f.row(static_cast<Eigen::Index>(r)) = c.features->row(static_cast<Eigen::Index>(indices[r]));
    out.features = std::move(f);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Temporal node features: hours and days elapsed since 2020-01-01T00:00:00Z.

inline constexpr std::int64_t kTemporalEpoch = 1577836800;

struct TemporalFeature {
  double hours_since_epoch = 0.0;
  double days_since_epoch = 0.0;
};

inline TemporalFeature temporal_features(Timestamp t) {
  if (t.seconds < kTemporalEpoch)
    throw DataError("timestamp " + format_timestamp(t) + " precedes 2020-01-01T00:00:00Z");
  const double hours = static_cast<double>(t.seconds - kTemporalEpoch) / 3600.0;
  return {hours, hours / 24.0};
}

// ---------------------------------------------------------------------------
// Sliding windows.

struct Window {
  Timestamp start;
  std::int64_t length = 6 * 3600;
  std::vector<std::size_t> member_indices;

  Timestamp end() const { return Timestamp{start.seconds + length}; }
  bool contains(Timestamp t) const { return t >= start && t < end(); }
};

inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

// Windows start at the hour-floor of the earliest tweet and advance by `stride`
// while the start does not pass the latest tweet.
inline std::vector<Window> window_stream(const Corpus& corpus, std::int64_t length, std::int64_t stride) {
  if (length <= 0 || stride <= 0) throw UsageError("window length and stride must be positive");
  if (corpus.empty()) throw DataError("cannot window an empty corpus");

  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return corpus.tweets[a].posted_at < corpus.tweets[b].posted_at;
  });
  const auto first = corpus.tweets[order.front()].posted_at.seconds;
  const auto last = corpus.tweets[order.back()].posted_at.seconds;
  const std::int64_t origin = floor_div(first, 3600) * 3600;

  std::vector<Window> windows;
  std::size_t lo = 0;
  for (std::int64_t start = origin; start <= last; start += stride) {
    Window w{Timestamp{start}, length, {}};
    while (lo < order.size() && corpus.tweets[order[lo]].posted_at.seconds < start) ++lo;
    for (std::size_t k = lo; k < order.size() && corpus.tweets[order[k]].posted_at.seconds < start + length; ++k)
      w.member_indices.push_back(order[k]);
    std::sort(w.member_indices.begin(), w.member_indices.end());
    windows.push_back(std::move(w));
  }
  return windows;
}

}  // namespace secevent

#endif  // SECEVENT_CORPUS_HPP_
