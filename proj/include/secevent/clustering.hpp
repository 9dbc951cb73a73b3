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

#ifndef SECEVENT_CLUSTERING_HPP_
#define SECEVENT_CLUSTERING_HPP_

#include "secevent/corpus.hpp"
#include "secevent/metrics.hpp"

#include <algorithm>
#include <deque>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace secevent {

struct DbscanConfig {
  double eps = 1.0;
  std::size_t min_pts = 3;
};

inline constexpr int kNoise = -1;

struct ClusterAssignment {
  std::vector<int> labels;  // cluster id >= 0, or kNoise
  int cluster_count = 0;
};

// Indices within eps of each point (self included), Euclidean.
inline std::vector<std::vector<std::uint32_t>> radius_neighbors(const Matrix& x, double eps) {
  const auto n = x.rows();
  const double eps2 = eps * eps;
  std::vector<std::vector<std::uint32_t>> nb(static_cast<std::size_t>(n));
  Eigen::VectorXd d2(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto rest = n - i;
    d2.head(rest) = (x.bottomRows(rest).rowwise() - x.row(i)).rowwise().squaredNorm();
    auto& mine = nb[static_cast<std::size_t>(i)];
    for (Eigen::Index k = 0; k < rest; ++k) {
      if (d2[k] > eps2) continue;
      const auto j = static_cast<std::uint32_t>(i + k);
      mine.push_back(j);
      if (k != 0) nb[j].push_back(static_cast<std::uint32_t>(i));
    }
  }
  for (auto& v : nb) std::sort(v.begin(), v.end());
  return nb;
}

/// Density-based clustering: a point is core when at least min_pts points
/// (itself included) lie within eps. Core points connected through core
/// neighborhoods form clusters, numbered by their lowest core index. A border
/// point joins the cluster of its lowest-indexed core neighbor.
inline ClusterAssignment dbscan(const Matrix& embeddings, const DbscanConfig& cfg) {
  if (!(cfg.eps > 0.0) || !std::isfinite(cfg.eps)) throw UsageError("dbscan: eps must be finite and positive");
  if (cfg.min_pts < 1) throw UsageError("dbscan: min_pts must be >= 1");
  if (!embeddings.allFinite()) throw NumericalError("dbscan: non-finite embedding entries");
  const auto n = static_cast<std::size_t>(embeddings.rows());
  ClusterAssignment out;
  out.labels.assign(n, kNoise);
  if (n == 0) return out;

  const auto nb = radius_neighbors(embeddings, cfg.eps);
  std::vector<char> core(n);
  for (std::size_t i = 0; i < n; ++i) core[i] = nb[i].size() >= cfg.min_pts;

  std::vector<std::uint32_t> frontier;
  for (std::size_t i = 0; i < n; ++i) {
    if (out.labels[i] != kNoise || !core[i]) continue;
    const int id = out.cluster_count++;
    out.labels[i] = id;
    frontier.assign(1, static_cast<std::uint32_t>(i));
    for (std::size_t head = 0; head < frontier.size(); ++head) {
      for (auto q : nb[frontier[head]]) {
        if (!core[q] || out.labels[q] != kNoise) continue;
        out.labels[q] = id;
        frontier.push_back(q);
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (core[i]) continue;
    for (auto q : nb[i])  // sorted ascending
      if (core[q]) {
        out.labels[i] = out.labels[q];
        break;
      }
  }
  return out;
}

enum class NoiseMode { Singletons, OneCluster };

// Labels suitable for clustering metrics: noise becomes singletons or one shared cluster.
inline std::vector<int> metric_labels(const ClusterAssignment& a, NoiseMode mode = NoiseMode::Singletons) {
  std::vector<int> out(a.labels);
  int next = a.cluster_count;
  for (auto& l : out)
    if (l == kNoise) l = mode == NoiseMode::Singletons ? next++ : a.cluster_count;
  return out;
}

// Clustering scores over the items whose truth label is >= 0.
inline ClusteringScores score_labeled(std::span<const int> truth, const ClusterAssignment& a,
                                      NoiseMode mode = NoiseMode::Singletons) {
  const auto pred = metric_labels(a, mode);
  std::vector<int> t, p;
  for (std::size_t i = 0; i < truth.size(); ++i)
    if (truth[i] >= 0) t.push_back(truth[i]), p.push_back(pred[i]);
  if (t.empty()) throw DataError("no labeled items to score");
  return clustering_scores(t, p);
}

// ---------------------------------------------------------------------------
// eps selection: candidate radii are quantiles of the pairwise distance
// distribution; the one maximizing AMI on labeled data wins. When several radii tie for the best AMI the middle
// one of them is taken.

struct EpsSearchResult {
  double eps = 0.0;
  double ami = 0.0;
  std::vector<std::pair<double, double>> trace;  // (eps, AMI)
};

inline std::vector<double> pairwise_distance_sample(const Matrix& x, std::size_t max_pairs = 200000,
                                                    std::uint64_t seed = 17) {
  const auto n = static_cast<std::size_t>(x.rows());
  std::vector<double> d;
  if (n < 2) return d;
  const std::size_t all = n * (n - 1) / 2;
  if (all <= max_pairs) {
    d.reserve(all);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        d.push_back((x.row(static_cast<Eigen::Index>(i)) - x.row(static_cast<Eigen::Index>(j))).norm());
  } else {
    Rng rng(seed);
    d.reserve(max_pairs);
    while (d.size() < max_pairs) {
      const auto i = uniform_index(rng, n), j = uniform_index(rng, n);
      if (i != j) d.push_back((x.row(static_cast<Eigen::Index>(i)) - x.row(static_cast<Eigen::Index>(j))).norm());
    }
  }
  std::sort(d.begin(), d.end());
  return d;
}

inline std::vector<double> eps_grid(const Matrix& x, std::size_t points = 40) {
  const auto d = pairwise_distance_sample(x);
  std::set<double> grid;
  if (d.empty()) return {1.0};
  for (std::size_t k = 0; k < points; ++k) {
    // quantiles spaced geometrically between 0.1% and 50%
    const double q = 0.001 * std::pow(500.0, static_cast<double>(k) / static_cast<double>(points - 1));
    const auto idx = std::min(d.size() - 1, static_cast<std::size_t>(q * static_cast<double>(d.size())));
    if (d[idx] > 0.0) grid.insert(d[idx]);
  }
  if (grid.empty()) grid.insert(1e-9);
  return {grid.begin(), grid.end()};
}

inline EpsSearchResult tune_eps(const Matrix& embeddings, std::span<const int> truth, std::size_t min_pts,
                                NoiseMode mode = NoiseMode::Singletons) {
  EpsSearchResult best;
  best.ami = -std::numeric_limits<double>::infinity();
  for (double eps : eps_grid(embeddings)) {
    const auto a = dbscan(embeddings, {eps, min_pts});
    const double score = score_labeled(truth, a, mode).ami;
    best.trace.emplace_back(eps, score);
    best.ami = std::max(best.ami, score);
  }
  std::vector<double> tied;
  for (const auto& [eps, score] : best.trace)
    if (score >= best.ami - 1e-12) tied.push_back(eps);
  best.eps = tied[(tied.size() - 1) / 2];
  return best;
}

// ---------------------------------------------------------------------------
// Cluster filtering.

struct EventInstance {
  std::string event_id;
  int cluster_id = 0;
  std::vector<std::string> tweet_ids;  // sorted
  std::size_t n_users = 0;
  std::size_t n_tweets = 0;
  double score = 0.0;
  Timestamp window_start;
  std::int64_t window_length = 0;
  CategorySet categories;
};

// Distinct users divided by tweets.
inline double score_cluster(const std::vector<std::string>& member_user_ids) {
  if (member_user_ids.empty()) throw DataError("score_cluster: empty cluster");
  const std::set<std::string_view> users(member_user_ids.begin(), member_user_ids.end());
  return static_cast<double>(users.size()) / static_cast<double>(member_user_ids.size());
}

inline std::string make_event_id(Timestamp window_start, const std::vector<std::string>& sorted_tweet_ids) {
  std::uint64_t h = fnv1a(format_timestamp(window_start));
  for (const auto& id : sorted_tweet_ids) {
    h = fnv1a("\n", h);
    h = fnv1a(id, h);
  }
  return "ev-" + hex64(h);
}

struct WindowRef {
  Timestamp start;
  std::int64_t length = 0;
};

/// Keeps clusters whose score is at least `threshold` (0.80 by default).
///
/// `corpus` is the clustered tweet set (row i = assignment.labels[i]).
/// `predicted` optionally carries per-tweet category labels; an event's
/// categories are those predicted for at least half of its tweets.
inline std::vector<EventInstance> filter_clusters(const ClusterAssignment& assignment, const Corpus& corpus,
                                                  double threshold = 0.80, WindowRef window = {},
                                                  const std::vector<CategorySet>* predicted = nullptr) {
  if (!(threshold > 0.0 && threshold <= 1.0)) throw UsageError("filter threshold must lie in (0, 1]");
  if (assignment.labels.size() != corpus.size()) throw DataError("assignment and corpus sizes differ");
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(assignment.cluster_count));
  for (std::size_t i = 0; i < assignment.labels.size(); ++i)
    if (assignment.labels[i] >= 0) members[static_cast<std::size_t>(assignment.labels[i])].push_back(i);

  std::vector<EventInstance> out;
  for (std::size_t c = 0; c < members.size(); ++c) {
    if (members[c].empty()) continue;
    std::vector<std::string> users;
    EventInstance ev;
    ev.cluster_id = static_cast<int>(c);
    for (auto i : members[c]) {
      users.push_back(corpus.tweets[i].user_id);
      ev.tweet_ids.push_back(corpus.tweets[i].tweet_id);
    }
    ev.score = score_cluster(users);
    if (ev.score < threshold) continue;
    std::sort(ev.tweet_ids.begin(), ev.tweet_ids.end());
    ev.n_tweets = users.size();
    ev.n_users = std::set<std::string>(users.begin(), users.end()).size();
    ev.window_start = window.start;
    ev.window_length = window.length;
    if (predicted) {
      for (std::size_t k = 0; k < kNumCategories; ++k) {
        std::size_t votes = 0;
        for (auto i : members[c]) votes += (*predicted)[i][k];
        if (2 * votes >= members[c].size()) ev.categories.set(k);
      }
    }
    ev.event_id = make_event_id(ev.window_start, ev.tweet_ids);
    out.push_back(std::move(ev));
  }
  return out;
}

inline OrderedJson event_to_json(const EventInstance& ev) {
  OrderedJson j;
  j["event_id"] = ev.event_id;
  j["window_start"] = format_timestamp(ev.window_start);
  j["tweet_ids"] = ev.tweet_ids;
  j["n_users"] = ev.n_users;
  j["score"] = ev.score;
  j["categories"] = category_names(ev.categories);
  return j;
}

inline EventInstance event_from_json(const Json& j) {
  EventInstance ev;
  ev.event_id = j.at("event_id").get<std::string>();
  ev.window_start = parse_timestamp(j.at("window_start").get<std::string>());
  ev.tweet_ids = j.at("tweet_ids").get<std::vector<std::string>>();
  ev.n_users = j.at("n_users").get<std::size_t>();
  ev.n_tweets = ev.tweet_ids.size();
  ev.score = j.at("score").get<double>();
  if (auto it = j.find("categories"); it != j.end())
    for (const auto& c : *it) {
      const auto parsed = parse_category(c.get<std::string>());
      if (!parsed) throw DataError("unknown category label '" + c.get<std::string>() + "'");
      ev.categories.set(static_cast<std::size_t>(*parsed));
    }
  return ev;
}

inline std::string serialize_events(const std::vector<EventInstance>& events) {
  std::string out;
  for (const auto& ev : events) out += event_to_json(ev).dump() + '\n';
  return out;
}

inline std::vector<EventInstance> parse_events(std::string_view jsonl) {
  std::vector<EventInstance> out;
  std::istringstream in{std::string(jsonl)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(event_from_json(Json::parse(line)));
    } catch (const Json::exception& e) {
      throw DataError("events line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace secevent

#endif  // SECEVENT_CLUSTERING_HPP_
