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

#ifndef SECEVENT_PIPELINE_HPP_
#define SECEVENT_PIPELINE_HPP_

#include "secevent/categorizer.hpp"
#include "secevent/clustering.hpp"
#include "secevent/entities.hpp"
#include "secevent/gatnet.hpp"
#include "secevent/trg.hpp"

#include <charconv>
#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace secevent {

// ---------------------------------------------------------------------------
// Configuration: flat `key = value` lines, '#' comments, string values may be
// double-quoted.

struct PipelineConfig {
  std::int64_t window_length = 6 * 3600;
  std::int64_t window_stride = 4 * 3600;
  FeatureBlocks blocks;
  GraphOptions graph;
  TrainConfig train;
  std::optional<double> eps;  // nullopt = tune on the validation split
  std::size_t min_pts = 3;
  NoiseMode noise_mode = NoiseMode::Singletons;
  double filter_threshold = 0.80;
  CategorizerTrainConfig categorizer;
  std::string categorizer_model;  // empty = no tagging, every tweet passes the gate
  std::string gazetteer;          // empty = use entities already on the tweets
  bool merge = false;
  double merge_jaccard = 0.5;
  double purity = 0.5;
  std::int64_t trend_bucket = 3600;
  std::uint64_t seed = 0;

  PipelineConfig() {
    train.arch.hidden_dim = 256;
    train.arch.embed_dim = 256;
  }
};

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, end);
}

inline double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || end != v.data() + v.size() || !std::isfinite(out))
    throw UsageError("config: '" + key + "' expects a number, got '" + v + "'");
  return out;
}

inline std::uint64_t parse_unsigned(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || end != v.data() + v.size())
    throw UsageError("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw UsageError("config: '" + key + "' expects true or false, got '" + v + "'");
}

inline std::string format_duration(std::int64_t s) {
  if (s % 86400 == 0) return std::to_string(s / 86400) + "d";
  if (s % 3600 == 0) return std::to_string(s / 3600) + "h";
  if (s % 60 == 0) return std::to_string(s / 60) + "m";
  return std::to_string(s) + "s";
}

inline std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + '"';
}

inline std::string unquote(const std::string& key, std::string_view v) {
  if (v.size() < 2 || v.front() != '"') return std::string(v);
  if (v.back() != '"') throw UsageError("config: unterminated string for '" + key + "'");
  std::string out;
  for (std::size_t i = 1; i + 1 < v.size(); ++i) {
    if (v[i] == '\\' && i + 2 < v.size()) ++i;
    out += v[i];
  }
  return out;
}

// Position of the first '#' outside a quoted string, or the line length.
inline std::size_t comment_start(std::string_view line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (quoted && line[i] == '\\') ++i;
    else if (line[i] == '"') quoted = !quoted;
    else if (line[i] == '#' && !quoted) return i;
  }
  return line.size();
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace detail

inline std::string serialize_config(const PipelineConfig& c) {
  using detail::format_double;
  std::vector<std::pair<std::string, std::string>> kv = {
      {"window_length", detail::quote(detail::format_duration(c.window_length))},
      {"window_stride", detail::quote(detail::format_duration(c.window_stride))},
      {"feature_blocks", detail::quote(c.blocks.to_string())},
      {"standardize_temporal", c.blocks.standardize_temporal ? "true" : "false"},
      {"hash_dim", std::to_string(c.blocks.hash_dim)},
      {"self_loops", c.graph.self_loops ? "true" : "false"},
      {"max_posting", std::to_string(c.graph.max_posting)},
      {"gat_layers", std::to_string(c.train.arch.layers)},
      {"gat_hidden_dim", std::to_string(c.train.arch.hidden_dim)},
      {"embed_dim", std::to_string(c.train.arch.embed_dim)},
      {"gat_heads", std::to_string(c.train.arch.heads)},
      {"leaky_slope", format_double(c.train.arch.leaky_slope)},
      {"learning_rate", format_double(c.train.learning_rate)},
      {"margin", format_double(c.train.margin)},
      {"patience", std::to_string(c.train.patience)},
      {"max_epochs", std::to_string(c.train.max_epochs)},
      {"batch_anchors", std::to_string(c.train.batch_anchors)},
      {"triplet_weight", format_double(c.train.triplet_weight)},
      {"pairwise_weight", format_double(c.train.pairwise_weight)},
      {"monitor", detail::quote(c.train.monitor == TrainConfig::Monitor::Ami ? "ami" : "loss")},
      {"eps", c.eps ? format_double(*c.eps) : detail::quote("auto")},
      {"min_pts", std::to_string(c.min_pts)},
      {"noise_mode", detail::quote(c.noise_mode == NoiseMode::Singletons ? "singletons" : "one-cluster")},
      {"filter_threshold", format_double(c.filter_threshold)},
      {"categorizer_model", detail::quote(c.categorizer_model)},
      {"categorizer_learning_rate", format_double(c.categorizer.learning_rate)},
      {"categorizer_batch_size", std::to_string(c.categorizer.batch_size)},
      {"categorizer_patience", std::to_string(c.categorizer.patience)},
      {"categorizer_max_epochs", std::to_string(c.categorizer.max_epochs)},
      {"categorizer_pos_weight", format_double(c.categorizer.pos_weight[0])},
      {"categorizer_threshold", format_double(c.categorizer.threshold)},
      {"gazetteer", detail::quote(c.gazetteer)},
      {"merge", c.merge ? "true" : "false"},
      {"merge_jaccard", format_double(c.merge_jaccard)},
      {"purity", format_double(c.purity)},
      {"trend_bucket", detail::quote(detail::format_duration(c.trend_bucket))},
      {"seed", std::to_string(c.seed)},
  };
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + '\n';
  return out;
}

/// Keys absent from `text` keep their defaults; unknown keys are errors.
inline PipelineConfig parse_config(std::string_view text, PipelineConfig c = {}) {
  using detail::parse_bool;
  using detail::parse_double;
  using detail::parse_unsigned;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    line = line.substr(0, detail::comment_start(line));
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw UsageError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key(detail::trim(line.substr(0, eq)));
    const std::string v = detail::unquote(key, detail::trim(line.substr(eq + 1)));
    auto positive = [&](std::uint64_t x) {
      if (x == 0) throw UsageError("config: '" + key + "' must be positive");
      return static_cast<std::size_t>(x);
    };
    if (key == "window_length") c.window_length = parse_duration(v);
    else if (key == "window_stride") c.window_stride = parse_duration(v);
    else if (key == "feature_blocks") {
      const auto keep = c.blocks;
      c.blocks = FeatureBlocks::parse(v);
      c.blocks.standardize_temporal = keep.standardize_temporal;
      c.blocks.hash_dim = keep.hash_dim;
    } else if (key == "standardize_temporal") c.blocks.standardize_temporal = parse_bool(key, v);
    else if (key == "hash_dim") c.blocks.hash_dim = positive(parse_unsigned(key, v));
    else if (key == "self_loops") c.graph.self_loops = parse_bool(key, v);
    else if (key == "max_posting") c.graph.max_posting = parse_unsigned(key, v);
    else if (key == "gat_layers") c.train.arch.layers = positive(parse_unsigned(key, v));
    else if (key == "gat_hidden_dim") c.train.arch.hidden_dim = positive(parse_unsigned(key, v));
    else if (key == "embed_dim") c.train.arch.embed_dim = positive(parse_unsigned(key, v));
    else if (key == "gat_heads") c.train.arch.heads = positive(parse_unsigned(key, v));
    else if (key == "leaky_slope") c.train.arch.leaky_slope = parse_double(key, v);
    else if (key == "learning_rate") c.train.learning_rate = parse_double(key, v);
    else if (key == "margin") c.train.margin = parse_double(key, v);
    else if (key == "patience") c.train.patience = parse_unsigned(key, v);
    else if (key == "max_epochs") c.train.max_epochs = parse_unsigned(key, v);
    else if (key == "batch_anchors") c.train.batch_anchors = positive(parse_unsigned(key, v));
    else if (key == "triplet_weight") c.train.triplet_weight = parse_double(key, v);
    else if (key == "pairwise_weight") c.train.pairwise_weight = parse_double(key, v);
    else if (key == "monitor") {
      if (v == "loss") c.train.monitor = TrainConfig::Monitor::Loss;
      else if (v == "ami") c.train.monitor = TrainConfig::Monitor::Ami;
      else throw UsageError("config: monitor must be loss or ami");
    } else if (key == "eps") {
      if (v == "auto") c.eps.reset();
      else c.eps = parse_double(key, v);
    } else if (key == "min_pts") c.min_pts = positive(parse_unsigned(key, v));
    else if (key == "noise_mode") {
      if (v == "singletons") c.noise_mode = NoiseMode::Singletons;
      else if (v == "one-cluster") c.noise_mode = NoiseMode::OneCluster;
      else throw UsageError("config: noise_mode must be singletons or one-cluster");
    } else if (key == "filter_threshold") c.filter_threshold = parse_double(key, v);
    else if (key == "categorizer_model") c.categorizer_model = v;
    else if (key == "categorizer_learning_rate") c.categorizer.learning_rate = parse_double(key, v);
    else if (key == "categorizer_batch_size") c.categorizer.batch_size = positive(parse_unsigned(key, v));
    else if (key == "categorizer_patience") c.categorizer.patience = parse_unsigned(key, v);
    else if (key == "categorizer_max_epochs") c.categorizer.max_epochs = parse_unsigned(key, v);
    else if (key == "categorizer_pos_weight") c.categorizer.pos_weight = uniform_pos_weights(parse_double(key, v));
    else if (key == "categorizer_threshold") c.categorizer.threshold = parse_double(key, v);
    else if (key == "gazetteer") c.gazetteer = v;
    else if (key == "merge") c.merge = parse_bool(key, v);
    else if (key == "merge_jaccard") c.merge_jaccard = parse_double(key, v);
    else if (key == "purity") c.purity = parse_double(key, v);
    else if (key == "trend_bucket") c.trend_bucket = parse_duration(v);
    else if (key == "seed") c.seed = parse_unsigned(key, v);
    else throw UsageError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
  }
  if (c.window_length <= 0 || c.window_stride <= 0) throw UsageError("config: window length and stride must be positive");
  if (c.eps && !(*c.eps > 0.0)) throw UsageError("config: eps must be positive");
  c.train.seed = c.seed;
  c.train.min_pts = c.min_pts;
  c.categorizer.seed = c.seed;
  return c;
}

// ---------------------------------------------------------------------------
// Stage timings.

struct StageTimings {
  double tagging = 0.0;
  double entity_extraction = 0.0;
  double graph_build = 0.0;
  double embedding = 0.0;
  double identification = 0.0;  // DBSCAN plus cluster filtering
  double total = 0.0;
  std::size_t windows = 0;
  std::size_t tweets_in = 0;
  std::size_t tweets_gated = 0;

  double embedding_total() const { return entity_extraction + graph_build + embedding; }
};

inline OrderedJson timings_to_json(const StageTimings& t) {
  OrderedJson j;
  j["windows"] = t.windows;
  j["tweets_in"] = t.tweets_in;
  j["tweets_after_gate"] = t.tweets_gated;
  j["tagging_s"] = t.tagging;
  j["embedding_total_s"] = t.embedding_total();
  j["entity_extraction_s"] = t.entity_extraction;
  j["graph_build_s"] = t.graph_build;
  j["embedding_s"] = t.embedding;
  j["identification_s"] = t.identification;
  j["total_s"] = t.total;
  return j;
}

namespace detail {

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

// Re-throws with a context prefix, keeping the exit-code class.
template <typename F>
decltype(auto) in_stage(const std::string& context, F&& f) {
  try {
    return f();
  } catch (const UsageError& e) {
    throw UsageError(context + ": " + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(context + ": " + e.what());
  } catch (const Error& e) {
    throw DataError(context + ": " + e.what());
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Embedding model construction.

// Per-tweet 0/1 category matrix for the category feature block: predictions
// when a categorizer is given, gold labels otherwise.
inline Matrix category_block(const Corpus& corpus, const CategorizerModel* categorizer, std::size_t hash_dim) {
  if (categorizer) return predict_categories(*categorizer, text_feature_matrix(corpus, hash_dim)).labels;
  return category_matrix(corpus);
}

struct PreparedSplit {
  TweetRelationGraph graph;
  NodeFeatures features;
  EventLabels labels;
};

inline PreparedSplit prepare_split(const Corpus& corpus, const PipelineConfig& cfg,
                                   const std::optional<Standardizer>& stats = std::nullopt,
                                   const CategorizerModel* categorizer = nullptr) {
  PreparedSplit s;
  s.graph = build_graph(corpus, cfg.graph);
  Matrix cats;
  if (cfg.blocks.category) cats = category_block(corpus, categorizer, cfg.blocks.hash_dim);
  s.features = assemble_features(corpus, s.graph, cfg.blocks, stats, cfg.blocks.category ? &cats : nullptr);
  s.labels = event_labels(corpus);
  return s;
}

struct TrainedEmbedder {
  GatCheckpoint checkpoint;
  TrainResult result;
};

/// Trains the embedder on `train` with early stopping on `validation`. Both
/// corpora must already carry entity mentions.
inline TrainedEmbedder train_embedder(const Corpus& train, const Corpus& validation, const PipelineConfig& cfg,
                                      const CategorizerModel* categorizer = nullptr,
                                      const std::function<void(const EpochLog&)>& on_epoch = {}) {
  if (train.empty() || validation.empty()) throw DataError("training and validation corpora must be non-empty");
  const auto tr = prepare_split(train, cfg, std::nullopt, categorizer);
  const auto va = prepare_split(validation, cfg, tr.features.standardization, categorizer);
  if (va.features.layout.width() != tr.features.layout.width())
    throw DataError("validation feature width differs from training");
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  tc.min_pts = cfg.min_pts;
  TrainedEmbedder out;
  out.result = secevent::train(GraphData{&tr.graph, &tr.features.matrix, tr.labels.label},
                     GraphData{&va.graph, &va.features.matrix, va.labels.label}, tc, on_epoch);
  out.checkpoint.params = out.result.params;
  out.checkpoint.blocks = cfg.blocks;
  out.checkpoint.layout = tr.features.layout;
  out.checkpoint.standardization = tr.features.standardization;
  return out;
}

inline GatCheckpoint untrained_checkpoint(std::size_t text_dim, const PipelineConfig& cfg) {
  GatCheckpoint ck;
  ck.blocks = cfg.blocks;
  ck.layout.text = cfg.blocks.text ? text_dim : 0;
  ck.layout.temporal = cfg.blocks.temporal ? 2 : 0;
  ck.layout.category = cfg.blocks.category ? kNumCategories : 0;
  if (cfg.blocks.temporal && cfg.blocks.standardize_temporal) {
    Standardizer s;
    s.mean = {0.0, 0.0};
    s.scale = {1.0, 1.0};
    ck.standardization = s;
  }
  ck.params = init_gat(ck.layout.width(), cfg.train.arch, cfg.seed);
  round_to_float(ck.params);
  return ck;
}

/// Graph plus node features of `corpus` under a checkpoint's feature layout.
inline PreparedSplit prepare_for_checkpoint(const Corpus& corpus, const GatCheckpoint& ck, const GraphOptions& graph,
                                            const CategorizerModel* categorizer = nullptr) {
  PreparedSplit s;
  s.graph = build_graph(corpus, graph);
  Matrix cats;
  if (ck.blocks.category) cats = category_block(corpus, categorizer, ck.blocks.hash_dim);
  s.features = assemble_features(corpus, s.graph, ck.blocks, ck.standardization, ck.blocks.category ? &cats : nullptr);
  if (s.features.layout.width() != ck.params.in_dim())
    throw DataError("features have width " + std::to_string(s.features.layout.width()) + " but the checkpoint expects " +
                    std::to_string(ck.params.in_dim()));
  s.labels = event_labels(corpus);
  return s;
}

inline Matrix embed_corpus(const Corpus& corpus, const GatCheckpoint& ck, const GraphOptions& graph,
                           const CategorizerModel* categorizer = nullptr) {
  if (corpus.empty()) return Matrix(0, static_cast<Eigen::Index>(ck.params.embed_dim()));
  const auto s = prepare_for_checkpoint(corpus, ck, graph, categorizer);
  return gat_forward(s.graph, s.features.matrix, ck.params);
}

// eps chosen by validation AMI over the embeddings of `validation`.
inline EpsSearchResult tune_eps_on(const Corpus& validation, const GatCheckpoint& ck, const PipelineConfig& cfg,
                                   const CategorizerModel* categorizer = nullptr) {
  const auto s = prepare_for_checkpoint(validation, ck, cfg.graph, categorizer);
  const Matrix emb = gat_forward(s.graph, s.features.matrix, ck.params);
  return tune_eps(emb, s.labels.label, cfg.min_pts, cfg.noise_mode);
}

// ---------------------------------------------------------------------------
// Detection.

struct DetectResources {
  const GatCheckpoint* checkpoint = nullptr;
  const CategorizerModel* categorizer = nullptr;  // null = no tagging
  const Gazetteer* gazetteer = nullptr;           // null = keep existing mentions
};

struct DetectOutput {
  std::vector<EventInstance> events;  // window order, then cluster order
  StageTimings timings;
  std::vector<Window> windows;
};

/// Per window: tag, gate security tweets, extract entities, build the graph,
/// embed, cluster with DBSCAN, filter by cluster score.
inline DetectOutput run_detect(const PipelineConfig& cfg, const Corpus& corpus, const DetectResources& res) {
  if (!res.checkpoint) throw UsageError("detect needs an embedding checkpoint");
  if (!cfg.eps) throw UsageError("detect needs a numeric eps (tune it on a validation corpus first)");
  const DbscanConfig db{*cfg.eps, cfg.min_pts};
  const detail::Stopwatch total;
  DetectOutput out;
  out.timings.tweets_in = corpus.size();
  if (corpus.empty()) return out;
  out.windows = window_stream(corpus, cfg.window_length, cfg.window_stride);
  out.timings.windows = out.windows.size();
  auto& tm = out.timings;
  const std::size_t hash_dim = res.checkpoint->blocks.hash_dim;

  for (std::size_t w = 0; w < out.windows.size(); ++w) {
    const auto& win = out.windows[w];
    const std::string where = "window " + std::to_string(w) + " (" + format_timestamp(win.start) + ")";
    Corpus sub = select(corpus, win.member_indices);

    detail::Stopwatch sw;
    std::vector<CategorySet> predicted;
    detail::in_stage(where + ", tagging", [&] {
      if (!res.categorizer || sub.empty()) return;
      predicted = predict_categories(*res.categorizer, text_feature_matrix(sub, hash_dim)).sets();
      const auto keep = security_gate(predicted);
      if (keep.size() != sub.size()) {
        sub = select(sub, keep);
        std::vector<CategorySet> kept;
        for (auto i : keep) kept.push_back(predicted[i]);
        predicted = std::move(kept);
      }
    });
    tm.tagging += sw.seconds();
    tm.tweets_gated += sub.size();
    if (sub.empty()) continue;

    sw = {};
    detail::in_stage(where + ", entity extraction", [&] {
      if (res.gazetteer) extract_entities(sub, *res.gazetteer);
    });
    tm.entity_extraction += sw.seconds();

    sw = {};
    PreparedSplit prepared = detail::in_stage(where + ", graph build", [&] {
      return prepare_for_checkpoint(sub, *res.checkpoint, cfg.graph, res.categorizer);
    });
    tm.graph_build += sw.seconds();

    sw = {};
    const Matrix emb = detail::in_stage(where + ", embedding", [&] {
      return gat_forward(prepared.graph, prepared.features.matrix, res.checkpoint->params);
    });
    tm.embedding += sw.seconds();

    sw = {};
    detail::in_stage(where + ", identification", [&] {
      const auto assignment = dbscan(emb, db);
      auto events = filter_clusters(assignment, sub, cfg.filter_threshold, WindowRef{win.start, win.length},
                                    res.categorizer ? &predicted : nullptr);
      for (auto& ev : events) out.events.push_back(std::move(ev));
    });
    tm.identification += sw.seconds();
  }
  tm.total = total.seconds();
  return out;
}

// ---------------------------------------------------------------------------
// Cross-window merging.

inline double jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::size_t inter = 0;
  for (auto i = a.begin(), j = b.begin(); i != a.end() && j != b.end();) {
    if (*i < *j) ++i;
    else if (*j < *i) ++j;
    else ++inter, ++i, ++j;
  }
  const auto uni = a.size() + b.size() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// Links events from adjacent windows (starts exactly `stride` apart) whose
/// tweet sets have Jaccard >= `threshold`, and merges each connected component
/// into one event: union of tweets, earliest window, recomputed user counts.
/// Output is ordered by window start, then event id.
inline std::vector<EventInstance> merge_events(const std::vector<EventInstance>& events, const Corpus& corpus,
                                               std::int64_t stride, double threshold = 0.5) {
  const auto n = events.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto gap = events[i].window_start.seconds - events[j].window_start.seconds;
      if ((gap == stride || gap == -stride) && jaccard(events[i].tweet_ids, events[j].tweet_ids) >= threshold) {
        const auto a = find(i), b = find(j);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
      }
    }

  std::map<std::string_view, const TweetRecord*> by_id;
  for (const auto& t : corpus.tweets) by_id.emplace(t.tweet_id, &t);
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) groups[find(i)].push_back(i);

  std::vector<EventInstance> out;
  for (const auto& [root, members] : groups) {
    if (members.size() == 1) {
      out.push_back(events[members[0]]);
      continue;
    }
    EventInstance ev = events[members[0]];
    std::set<std::string> tweets;
    for (auto m : members) {
      const auto& e = events[m];
      tweets.insert(e.tweet_ids.begin(), e.tweet_ids.end());
      if (e.window_start < ev.window_start) {
        ev.window_start = e.window_start;
        ev.window_length = e.window_length;
        ev.cluster_id = e.cluster_id;
      }
      ev.categories |= e.categories;
    }
    ev.tweet_ids.assign(tweets.begin(), tweets.end());
    std::vector<std::string> users;
    for (const auto& id : ev.tweet_ids) {
      auto it = by_id.find(id);
      if (it == by_id.end()) throw DataError("merge: tweet '" + id + "' not in corpus");
      users.push_back(it->second->user_id);
    }
    ev.n_tweets = users.size();
    ev.n_users = std::set<std::string>(users.begin(), users.end()).size();
    ev.score = score_cluster(users);
    ev.event_id = make_event_id(ev.window_start, ev.tweet_ids);
    out.push_back(std::move(ev));
  }
  std::sort(out.begin(), out.end(), [](const EventInstance& a, const EventInstance& b) {
    if (a.window_start != b.window_start) return a.window_start < b.window_start;
    return a.event_id < b.event_id;
  });
  return out;
}

// ---------------------------------------------------------------------------
// Trend export.

struct TrendRow {
  Timestamp bucket;
  std::string event_id;
  std::size_t tweet_count = 0;
  CategorySet categories;
};

// Each event tweet is counted in the bucket containing its posted_at. Rows are
// ordered by bucket, then event id.
inline std::vector<TrendRow> export_trend(const std::vector<EventInstance>& events, const Corpus& corpus,
                                          std::int64_t bucket) {
  if (bucket <= 0) throw UsageError("trend bucket must be positive");
  std::map<std::string_view, Timestamp> posted;
  for (const auto& t : corpus.tweets) posted.emplace(t.tweet_id, t.posted_at);
  std::map<std::pair<std::int64_t, std::string>, TrendRow> rows;
  for (const auto& ev : events)
    for (const auto& id : ev.tweet_ids) {
      auto it = posted.find(id);
      if (it == posted.end()) throw DataError("trend: tweet '" + id + "' not in corpus");
      const auto b = floor_div(it->second.seconds, bucket) * bucket;
      auto& row = rows[{b, ev.event_id}];
      row.bucket = Timestamp{b};
      row.event_id = ev.event_id;
      row.categories = ev.categories;
      ++row.tweet_count;
    }
  std::vector<TrendRow> out;
  for (auto& [k, r] : rows) out.push_back(std::move(r));
  return out;
}

inline std::string trend_csv(const std::vector<TrendRow>& rows) {
  std::string out = "bucket,event_id,tweet_count,categories\n";
  for (const auto& r : rows) {
    std::string cats;
    for (const auto& c : category_names(r.categories)) cats += (cats.empty() ? "" : ";") + c;
    out += format_timestamp(r.bucket) + ',' + r.event_id + ',' + std::to_string(r.tweet_count) + ",\"" + cats + "\"\n";
  }
  return out;
}

}  // namespace secevent

#endif  // SECEVENT_PIPELINE_HPP_
