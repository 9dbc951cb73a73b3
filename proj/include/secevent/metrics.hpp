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

#ifndef SECEVENT_METRICS_HPP_
#define SECEVENT_METRICS_HPP_

#include "secevent/types.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace secevent {

// ---------------------------------------------------------------------------
// Contingency table between two labelings of the same n items.

struct ContingencyTable {
  std::vector<std::vector<std::int64_t>> counts;  // rows: truth clusters, cols: predicted clusters
  std::vector<std::int64_t> row_sums;
  std::vector<std::int64_t> col_sums;
  std::int64_t total = 0;

  std::size_t rows() const { return row_sums.size(); }
  std::size_t cols() const { return col_sums.size(); }
};

namespace detail {

inline std::vector<std::size_t> dense_ids(std::span<const int> labels, std::size_t& count) {
  std::unordered_map<int, std::size_t> ids;
  std::vector<std::size_t> out;
  out.reserve(labels.size());
  for (int l : labels) out.push_back(ids.try_emplace(l, ids.size()).first->second);
  count = ids.size();
  return out;
}

inline void check_labelings(std::span<const int> truth, std::span<const int> pred) {
  if (truth.size() != pred.size())
    throw DataError("labelings differ in length (" + std::to_string(truth.size()) + " vs " +
                    std::to_string(pred.size()) + ")");
  if (truth.empty()) throw DataError("labelings are empty");
}

inline double comb2(std::int64_t x) { return 0.5 * static_cast<double>(x) * static_cast<double>(x - 1); }

inline double entropy(const std::vector<std::int64_t>& sums, std::int64_t n) {
  double h = 0.0;
  const double dn = static_cast<double>(n);
  for (auto s : sums)
    if (s > 0) h -= (static_cast<double>(s) / dn) * std::log(static_cast<double>(s) / dn);
  return h;
}

}  // namespace detail

inline ContingencyTable contingency(std::span<const int> truth, std::span<const int> pred) {
  detail::check_labelings(truth, pred);
  std::size_t r = 0, c = 0;
  const auto ti = detail::dense_ids(truth, r);
  const auto pi = detail::dense_ids(pred, c);
  ContingencyTable t;
  t.counts.assign(r, std::vector<std::int64_t>(c, 0));
  t.row_sums.assign(r, 0);
  t.col_sums.assign(c, 0);
  for (std::size_t k = 0; k < ti.size(); ++k) {
    ++t.counts[ti[k]][pi[k]];
    ++t.row_sums[ti[k]];
    ++t.col_sums[pi[k]];
  }
  t.total = static_cast<std::int64_t>(truth.size());
  return t;
}

inline double mutual_information(const ContingencyTable& t) {
  const double n = static_cast<double>(t.total);
  double mi = 0.0;
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) {
      const auto nij = t.counts[i][j];
      if (nij == 0) continue;
      const double p = static_cast<double>(nij) / n;
      mi += p * (std::log(n * static_cast<double>(nij)) -
                 std::log(static_cast<double>(t.row_sums[i]) * static_cast<double>(t.col_sums[j])));
    }
  return std::max(mi, 0.0);
}

// Expected mutual information under the hypergeometric (fixed-marginals
// permutation) model.
inline double expected_mutual_information(const ContingencyTable& t) {
  const auto n = t.total;
  const double dn = static_cast<double>(n);
  const double lg_n = std::lgamma(dn + 1.0);
  double emi = 0.0;
  for (auto a : t.row_sums) {
    for (auto b : t.col_sums) {
      const double da = static_cast<double>(a), db = static_cast<double>(b);
      const double fixed = std::lgamma(da + 1.0) + std::lgamma(db + 1.0) + std::lgamma(dn - da + 1.0) +
                           std::lgamma(dn - db + 1.0) - lg_n;
      for (std::int64_t nij = std::max<std::int64_t>(1, a + b - n); nij <= std::min(a, b); ++nij) {
        const double dnij = static_cast<double>(nij);
        const double log_p = fixed - std::lgamma(dnij + 1.0) - std::lgamma(da - dnij + 1.0) -
                             std::lgamma(db - dnij + 1.0) - std::lgamma(dn - da - db + dnij + 1.0);
        emi += (dnij / dn) * (std::log(dn * dnij) - std::log(da * db)) * std::exp(log_p);
      }
    }
  }
  return emi;
}

namespace detail {

// Both partitions are a single cluster, or both are all singletons.
inline bool both_trivial(const ContingencyTable& t) {
  const auto n = static_cast<std::size_t>(t.total);
  return (t.rows() == 1 && t.cols() == 1) || (t.rows() == n && t.cols() == n);
}

}  // namespace detail

// MI normalized by the arithmetic mean of the two entropies.
inline double nmi(std::span<const int> truth, std::span<const int> pred) {
  const auto t = contingency(truth, pred);
  if (detail::both_trivial(t)) return 1.0;
  const double denom = 0.5 * (detail::entropy(t.row_sums, t.total) + detail::entropy(t.col_sums, t.total));
  if (denom <= 0.0) return 0.0;
  return mutual_information(t) / denom;
}

inline double ami(std::span<const int> truth, std::span<const int> pred) {
  const auto t = contingency(truth, pred);
  if (detail::both_trivial(t)) return 1.0;
  const double mi = mutual_information(t);
  const double emi = expected_mutual_information(t);
  const double mean_h = 0.5 * (detail::entropy(t.row_sums, t.total) + detail::entropy(t.col_sums, t.total));
  const double denom = mean_h - emi;
  if (std::abs(denom) < 1e-15) return 0.0;
  return (mi - emi) / denom;
}

inline double ari(std::span<const int> truth, std::span<const int> pred) {
  const auto t = contingency(truth, pred);
  if (detail::both_trivial(t)) return 1.0;
  double index = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto& row : t.counts)
    for (auto nij : row) index += detail::comb2(nij);
  for (auto a : t.row_sums) sum_a += detail::comb2(a);
  for (auto b : t.col_sums) sum_b += detail::comb2(b);
  const double total_pairs = detail::comb2(t.total);
  const double expected = sum_a * sum_b / total_pairs;
  const double max_index = 0.5 * (sum_a + sum_b);
  const double denom = max_index - expected;
  if (denom == 0.0) return index == max_index ? 1.0 : 0.0;
  return (index - expected) / denom;
}

struct ClusteringScores {
  double ami = 0.0;
  double ari = 0.0;
  double nmi = 0.0;
};

inline ClusteringScores clustering_scores(std::span<const int> truth, std::span<const int> pred) {
  return {ami(truth, pred), ari(truth, pred), nmi(truth, pred)};
}

// ---------------------------------------------------------------------------
// Event-level precision / recall.

struct Ratio {
  std::size_t num = 0;
  std::size_t den = 0;
  double value() const { return den ? static_cast<double>(num) / static_cast<double>(den) : 0.0; }
};

struct DetectedEvent {
  std::vector<std::string> tweet_ids;
  CategorySet categories;  // may be empty; then inherited from the matched gold event
};

struct EventEvalReport {
  std::map<std::string, Ratio> precision;  // keyed by security category name
  std::map<std::string, Ratio> recall;
  Ratio total_precision;
  Ratio total_recall;
};

/// A detected event is correct when at least `purity_threshold` of its tweets
/// share one gold event id; that gold event is then recalled.
inline EventEvalReport event_eval(const std::vector<DetectedEvent>& detected, const Corpus& gold,
                                  double purity_threshold = 0.5) {
  if (!(purity_threshold > 0.0 && purity_threshold <= 1.0))
    throw UsageError("purity threshold must lie in (0, 1]");
  std::unordered_map<std::string_view, const TweetRecord*> by_id;
  std::map<std::string, CategorySet> gold_events;
  for (const auto& t : gold.tweets) {
    by_id.emplace(t.tweet_id, &t);
    if (!t.gold_event_id) continue;
    auto& cats = gold_events[*t.gold_event_id];
    if (t.gold_categories)
      for (std::size_t c = 0; c < kNumCategories; ++c)
        if ((*t.gold_categories)[c] && is_security_category(c)) cats.set(c);
  }

  EventEvalReport r;
  for (std::size_t c = 0; c < kNumCategories; ++c) {
    if (!is_security_category(c)) continue;
    r.precision[std::string(kCategoryNames[c])];
    r.recall[std::string(kCategoryNames[c])];
  }

  std::set<std::string> recalled;
  for (const auto& ev : detected) {
    std::map<std::string, std::size_t> votes;
    for (const auto& id : ev.tweet_ids) {
      auto it = by_id.find(id);
      if (it != by_id.end() && it->second->gold_event_id) ++votes[*it->second->gold_event_id];
    }
    const std::string* best = nullptr;
    std::size_t best_count = 0;
    for (const auto& [id, count] : votes)
      if (count > best_count) best = &id, best_count = count;
    const bool correct = best && !ev.tweet_ids.empty() &&
                         static_cast<double>(best_count) >= purity_threshold * static_cast<double>(ev.tweet_ids.size());
    CategorySet cats = ev.categories;
    if (!has_security_label(cats) && best) cats = gold_events[*best];
    ++r.total_precision.den;
    if (correct) {
      ++r.total_precision.num;
      recalled.insert(*best);
    }
    for (std::size_t c = 0; c < kNumCategories; ++c) {
      if (!is_security_category(c) || !cats[c]) continue;
      auto& ratio = r.precision[std::string(kCategoryNames[c])];
      ++ratio.den;
      if (correct) ++ratio.num;
    }
  }
  for (const auto& [id, cats] : gold_events) {
    const bool hit = recalled.count(id) > 0;
    ++r.total_recall.den;
    if (hit) ++r.total_recall.num;
    for (std::size_t c = 0; c < kNumCategories; ++c) {
      if (!is_security_category(c) || !cats[c]) continue;
      auto& ratio = r.recall[std::string(kCategoryNames[c])];
      ++ratio.den;
      if (hit) ++ratio.num;
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Multi-label classification metrics over n x L 0/1 matrices.

struct MultilabelReport {
  double hamming_loss = 0.0;
  double jaccard = 0.0;
  double subset_accuracy = 0.0;
  double micro_f1 = 0.0;
  double macro_f1 = 0.0;
};

inline MultilabelReport multilabel_metrics(const Matrix& gold, const Matrix& pred) {
  if (gold.rows() != pred.rows() || gold.cols() != pred.cols())
    throw DataError("multilabel_metrics: shape mismatch");
  if (gold.rows() == 0 || gold.cols() == 0) throw DataError("multilabel_metrics: empty input");
  auto binary = [](const Matrix& m) { return ((m.array() == 0.0) || (m.array() == 1.0)).all(); };
  if (!binary(gold) || !binary(pred)) throw DataError("multilabel_metrics: entries must be 0 or 1");

  const auto n = gold.rows();
  const auto labels = gold.cols();
  auto f1 = [](double tp, double fp, double fn) {
    const double denom = 2.0 * tp + fp + fn;
    return denom == 0.0 ? 1.0 : 2.0 * tp / denom;
  };

  MultilabelReport r;
  double differing = 0.0, jaccard_sum = 0.0, exact = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double inter = 0.0, uni = 0.0, diff = 0.0;
    for (Eigen::Index l = 0; l < labels; ++l) {
      const bool g = gold(i, l) != 0.0, p = pred(i, l) != 0.0;
      inter += (g && p);
      uni += (g || p);
      diff += (g != p);
    }
    differing += diff;
    jaccard_sum += uni == 0.0 ? 1.0 : inter / uni;
    exact += diff == 0.0;
  }
  r.hamming_loss = differing / static_cast<double>(n * labels);
  r.jaccard = jaccard_sum / static_cast<double>(n);
  r.subset_accuracy = exact / static_cast<double>(n);

  double tp_all = 0.0, fp_all = 0.0, fn_all = 0.0, macro = 0.0;
  for (Eigen::Index l = 0; l < labels; ++l) {
    double tp = 0.0, fp = 0.0, fn = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const bool g = gold(i, l) != 0.0, p = pred(i, l) != 0.0;
      tp += (g && p);
      fp += (!g && p);
      fn += (g && !p);
    }
    tp_all += tp;
    fp_all += fp;
    fn_all += fn;
    macro += f1(tp, fp, fn);
  }
  r.micro_f1 = f1(tp_all, fp_all, fn_all);
  r.macro_f1 = macro / static_cast<double>(labels);
  return r;
}

}  // namespace secevent

#endif  // SECEVENT_METRICS_HPP_
