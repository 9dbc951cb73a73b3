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

#ifndef SECEVENT_TRG_HPP_
#define SECEVENT_TRG_HPP_

#include "secevent/corpus.hpp"
#include "secevent/entities.hpp"

#include <algorithm>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace secevent {

// ---------------------------------------------------------------------------
// Tweet relation graph: undirected, unweighted, CSR neighbor lists.

class TweetRelationGraph {
 public:
  TweetRelationGraph() = default;

  // Builds CSR from per-node adjacency lists (symmetrized, sorted, deduplicated).
  TweetRelationGraph(std::vector<std::vector<std::uint32_t>> adjacency, bool self_loops,
                     std::vector<std::string> node_ids)
      : self_loops_(self_loops), node_ids_(std::move(node_ids)) {
    const auto n = adjacency.size();
    if (!node_ids_.empty() && node_ids_.size() != n) throw std::invalid_argument("node id count mismatch");
    for (std::uint32_t v = 0; v < n; ++v)
      for (auto u : adjacency[v])
        if (u != v) adjacency[u].push_back(v);
    offsets_.assign(n + 1, 0);
    for (std::uint32_t v = 0; v < n; ++v) {
      auto& nb = adjacency[v];
      if (self_loops_) nb.push_back(v);
      std::sort(nb.begin(), nb.end());
      nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
      offsets_[v + 1] = offsets_[v] + nb.size();
    }
    neighbors_.reserve(offsets_.back());
    for (auto& nb : adjacency) neighbors_.insert(neighbors_.end(), nb.begin(), nb.end());
  }

  std::size_t size() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  bool self_loops() const { return self_loops_; }
  std::span<const std::uint32_t> neighbors(std::size_t v) const {
    return {neighbors_.data() + offsets_[v], offsets_[v + 1] - offsets_[v]};
  }
  std::size_t degree(std::size_t v) const { return offsets_[v + 1] - offsets_[v]; }
  std::size_t entry_count() const { return neighbors_.size(); }
  const std::vector<std::string>& node_ids() const { return node_ids_; }

  // Undirected edges u < v (self-loops excluded).
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges() const {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
    for (std::uint32_t v = 0; v < size(); ++v)
      for (auto u : neighbors(v))
        if (v < u) out.emplace_back(v, u);
    return out;
  }

 private:
  std::vector<std::size_t> offsets_;
  std::vector<std::uint32_t> neighbors_;
  bool self_loops_ = true;
  std::vector<std::string> node_ids_;
};

struct GraphOptions {
  bool self_loops = true;
  std::size_t max_posting = 0;  // 0 = unlimited
};

// Nodes are tweets; u-v is an edge iff they share an (entity type, key) pair.
inline TweetRelationGraph build_graph(const Corpus& corpus, const GraphOptions& opts = {}) {
  const auto n = corpus.size();
  std::map<std::pair<std::uint8_t, std::string_view>, std::vector<std::uint32_t>> postings;
  for (std::uint32_t i = 0; i < n; ++i) {
    for (const auto& m : corpus.tweets[i].mentions()) {
      auto& list = postings[{m.type.slot, m.key}];
      if (list.empty() || list.back() != i) list.push_back(i);
    }
  }
  std::vector<std::vector<std::uint32_t>> adjacency(n);
  for (const auto& [entity, list] : postings) {
    if (opts.max_posting != 0 && list.size() > opts.max_posting) continue;
    for (std::size_t a = 0; a < list.size(); ++a)
      for (std::size_t b = a + 1; b < list.size(); ++b) adjacency[list[a]].push_back(list[b]);
  }
  std::vector<std::string> ids;
  ids.reserve(n);
  for (const auto& t : corpus.tweets) ids.push_back(t.tweet_id);
  return TweetRelationGraph(std::move(adjacency), opts.self_loops, std::move(ids));
}

inline std::string dump_graph(const TweetRelationGraph& g) {
  OrderedJson header;
  header["n"] = g.size();
  header["self_loops"] = g.self_loops();
  std::string out = header.dump() + '\n';
  for (auto [u, v] : g.edges()) out += std::to_string(u) + '\t' + std::to_string(v) + '\n';
  return out;
}

// ---------------------------------------------------------------------------
// Text features.

// Signed feature hashing over lowercased word tokens, L2-normalized.
inline Vector hashing_featurizer(std::string_view text, std::size_t d_text) {
  if (d_text < 8) throw UsageError("hashing featurizer needs d_text >= 8");
  Vector v = Vector::Zero(static_cast<Eigen::Index>(d_text));
  std::string token;
  auto flush = [&] {
    if (token.empty()) return;
    const auto h = fnv1a(token);
    const auto idx = static_cast<Eigen::Index>((h >> 1) % d_text);
    v[idx] += (h & 1u) ? -1.0 : 1.0;
    token.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_word_byte(c))
      token.push_back(static_cast<char>(std::tolower(c)));
    else
      flush();
  }
  flush();
  const double norm = v.norm();
  if (norm > 0.0) v /= norm;
  return v;
}

// Text matrix for a corpus: the attached feature matrix if any, else inline
// text_embedding arrays, else the hashing featurizer at `hash_dim`.
inline Matrix text_feature_matrix(const Corpus& corpus, std::size_t hash_dim) {
  if (corpus.features) return *corpus.features;
  const auto n = corpus.size();
  const bool any_inline = std::any_of(corpus.tweets.begin(), corpus.tweets.end(),
                                      [](const TweetRecord& t) { return t.text_embedding.has_value(); });
  if (any_inline) {
    const auto& first = std::find_if(corpus.tweets.begin(), corpus.tweets.end(),
                                     [](const TweetRecord& t) { return t.text_embedding.has_value(); })
                            ->text_embedding;
    const auto d = first->size();
    Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < n; ++i) {
      const auto& e = corpus.tweets[i].text_embedding;
      if (!e) throw DataError("tweet '" + corpus.tweets[i].tweet_id + "' has no text feature");
      if (e->size() != d)
        throw DataError("tweet '" + corpus.tweets[i].tweet_id + "' text_embedding has dimension " +
                        std::to_string(e->size()) + ", expected " + std::to_string(d));
      for (std::size_t c = 0; c < d; ++c) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = (*e)[c];
    }
    return m;
  }
  Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(hash_dim));
  for (std::size_t i = 0; i < n; ++i) m.row(static_cast<Eigen::Index>(i)) = hashing_featurizer(corpus.tweets[i].text, hash_dim).transpose();
  return m;
}

// ---------------------------------------------------------------------------
// Node features.

// Per-column z-score for the temporal block. Constant columns get scale 1.
struct Standardizer {
  std::array<double, 2> mean{0.0, 0.0};
  std::array<double, 2> scale{1.0, 1.0};

  static Standardizer fit(const Matrix& temporal) {
    Standardizer s;
    const auto n = temporal.rows();
    if (n == 0) return s;
    for (Eigen::Index c = 0; c < 2; ++c) {
      const double mu = temporal.col(c).mean();
      const double var = (temporal.col(c).array() - mu).square().mean();
      s.mean[static_cast<std::size_t>(c)] = mu;
      s.scale[static_cast<std::size_t>(c)] = var > 1e-24 ? std::sqrt(var) : 1.0;
    }
    return s;
  }

  void transform(Eigen::Ref<Matrix> temporal) const {
    for (Eigen::Index c = 0; c < 2; ++c)
      temporal.col(c) = (temporal.col(c).array() - mean[static_cast<std::size_t>(c)]) / scale[static_cast<std::size_t>(c)];
  }

  void inverse(Eigen::Ref<Matrix> temporal) const {
    for (Eigen::Index c = 0; c < 2; ++c)
      temporal.col(c) = temporal.col(c).array() * scale[static_cast<std::size_t>(c)] + mean[static_cast<std::size_t>(c)];
  }

  friend bool operator==(const Standardizer&, const Standardizer&) = default;
};

struct FeatureBlocks {
  bool text = true;
  bool temporal = true;
  bool category = false;
  bool standardize_temporal = true;
  std::size_t hash_dim = 768;  // used only when the hashing featurizer supplies text

  // "text,temporal,category" style lists.
  static FeatureBlocks parse(std::string_view list) {
    FeatureBlocks b;
    b.text = b.temporal = b.category = false;
    std::size_t pos = 0;
    while (pos <= list.size()) {
      auto comma = list.find(',', pos);
      if (comma == std::string_view::npos) comma = list.size();
      const auto item = list.substr(pos, comma - pos);
      if (item == "text") b.text = true;
      else if (item == "temporal") b.temporal = true;
      else if (item == "category") b.category = true;
      else throw UsageError("unknown feature block '" + std::string(item) + "'");
      pos = comma + 1;
    }
    return b;
  }

  std::string to_string() const {
    std::string out;
    for (auto [on, name] : {std::pair{text, "text"}, std::pair{temporal, "temporal"}, std::pair{category, "category"}})
      if (on) out += (out.empty() ? "" : ",") + std::string(name);
    return out;
  }
};

struct FeatureLayout {
  std::size_t text = 0;
  std::size_t temporal = 0;
  std::size_t category = 0;
  std::size_t width() const { return text + temporal + category; }
  std::size_t temporal_offset() const { return text; }
};

struct NodeFeatures {
  Matrix matrix;
  FeatureLayout layout;
  std::optional<Standardizer> standardization;
};

inline Matrix raw_temporal_matrix(const Corpus& corpus) {
  Matrix t(static_cast<Eigen::Index>(corpus.size()), 2);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto f = temporal_features(corpus.tweets[i].posted_at);
    t(static_cast<Eigen::Index>(i), 0) = f.hours_since_epoch;
    t(static_cast<Eigen::Index>(i), 1) = f.days_since_epoch;
  }
  return t;
}

/// Concatenates the enabled blocks per row in the fixed order text, temporal,
/// category.
///
/// `stats` carries training-split statistics; when standardization is enabled
/// and no stats are supplied they are fitted on this corpus. `categories` is an
/// n x 7 0/1 matrix and is required when the category block is enabled.
inline NodeFeatures assemble_features(const Corpus& corpus, const TweetRelationGraph& graph, const FeatureBlocks& blocks,
                                      const std::optional<Standardizer>& stats = std::nullopt,
                                      const Matrix* categories = nullptr) {
  const auto n = static_cast<Eigen::Index>(corpus.size());
  if (graph.size() != corpus.size()) throw DataError("graph and corpus sizes differ");
  NodeFeatures out;
  Matrix text;
  if (blocks.text) {
    text = text_feature_matrix(corpus, blocks.hash_dim);
    out.layout.text = static_cast<std::size_t>(text.cols());
  }
  if (blocks.temporal) out.layout.temporal = 2;
  if (blocks.category) {
    if (!categories) throw DataError("category block enabled but no category labels supplied");
    if (categories->rows() != n || categories->cols() != static_cast<Eigen::Index>(kNumCategories))
      throw DataError("category matrix must be n x 7");
    out.layout.category = kNumCategories;
  }
  out.matrix.resize(n, static_cast<Eigen::Index>(out.layout.width()));
  if (blocks.text) out.matrix.leftCols(text.cols()) = text;
  if (blocks.temporal) {
    auto temporal = out.matrix.middleCols(static_cast<Eigen::Index>(out.layout.temporal_offset()), 2);
    temporal = raw_temporal_matrix(corpus);
    if (blocks.standardize_temporal) {
      out.standardization = stats ? *stats : Standardizer::fit(temporal);
      out.standardization->transform(temporal);
    }
  }
  if (blocks.category) out.matrix.rightCols(static_cast<Eigen::Index>(kNumCategories)) = *categories;
  if (!out.matrix.allFinite()) throw NumericalError("non-finite node feature");
  return out;
}

}  // namespace secevent

#endif  // SECEVENT_TRG_HPP_
