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

#ifndef SECEVENT_GATNET_HPP_
#define SECEVENT_GATNET_HPP_

#include "secevent/clustering.hpp"
#include "secevent/trg.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace secevent {

// ---------------------------------------------------------------------------
// Parameters.
//
// One GATv2 layer with H heads and per-head width F maps n x d_in to
// n x (H*F) (heads concatenated) or n x F (heads averaged, final layer).
// Per head k, W_src/W_dst rows [kF, (k+1)F) hold the two halves of the joint
// transform applied to [h_v || h_u], and row k of `attn` is the scoring vector.

struct LayerParams {
  Matrix w_src;  // (H*F) x d_in, applied to the neighbor u
  Matrix w_dst;  // (H*F) x d_in, applied to the receiving node v
  Matrix attn;   // H x F
  Vector bias;   // output width
  std::size_t heads = 1;
  bool concat_heads = true;

  std::size_t in_dim() const { return static_cast<std::size_t>(w_src.cols()); }
  std::size_t head_dim() const { return static_cast<std::size_t>(attn.cols()); }
  std::size_t out_dim() const { return concat_heads ? heads * head_dim() : head_dim(); }
};

struct GatParams {
  std::vector<LayerParams> layers;
  double leaky_slope = 0.2;

  std::size_t in_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
  std::size_t embed_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }

  // Uniform visitation order shared by the optimizer, gradient checks and I/O.
  template <typename Fn>
  void for_each_tensor(Fn&& fn) {
    for (auto& l : layers) {
      fn(l.w_src.data(), static_cast<std::size_t>(l.w_src.size()));
      fn(l.w_dst.data(), static_cast<std::size_t>(l.w_dst.size()));
      fn(l.attn.data(), static_cast<std::size_t>(l.attn.size()));
      fn(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
    }
  }
  template <typename Fn>
  void for_each_tensor(Fn&& fn) const {
    const_cast<GatParams*>(this)->for_each_tensor(
        [&](double* p, std::size_t n) { fn(static_cast<const double*>(p), n); });
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each_tensor([&](const double*, std::size_t k) { n += k; });
    return n;
  }

  bool all_finite() const {
    bool ok = true;
    for_each_tensor([&](const double* p, std::size_t k) {
      for (std::size_t i = 0; i < k; ++i) ok = ok && std::isfinite(p[i]);
    });
    return ok;
  }

  friend bool operator==(const GatParams& a, const GatParams& b) {
    if (a.layers.size() != b.layers.size() || a.leaky_slope != b.leaky_slope) return false;
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
      const auto &x = a.layers[i], &y = b.layers[i];
      if (x.heads != y.heads || x.concat_heads != y.concat_heads || x.w_src != y.w_src || x.w_dst != y.w_dst ||
          x.attn != y.attn || x.bias != y.bias)
        return false;
    }
    return true;
  }
};

struct GatArchitecture {
  std::size_t layers = 2;
  std::size_t hidden_dim = 256;  // per-head width of hidden layers
  std::size_t embed_dim = 256;
  std::size_t heads = 1;
  double leaky_slope = 0.2;
};

// Glorot-uniform weights, zero biases.
inline GatParams init_gat(std::size_t in_dim, const GatArchitecture& arch, std::uint64_t seed) {
  if (arch.layers == 0 || arch.heads == 0 || in_dim == 0 || arch.embed_dim == 0 || arch.hidden_dim == 0)
    throw UsageError("GAT architecture dimensions must be positive");
  Rng rng(seed);
  auto glorot = [&](Matrix& m, double fan_in, double fan_out) {
    const double s = std::sqrt(6.0 / (fan_in + fan_out));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, -s, s);
  };
  GatParams p;
  p.leaky_slope = arch.leaky_slope;
  std::size_t d = in_dim;
  for (std::size_t l = 0; l < arch.layers; ++l) {
    const bool last = l + 1 == arch.layers;
    const std::size_t f = last ? arch.embed_dim : arch.hidden_dim;
    LayerParams layer;
    layer.heads = arch.heads;
    layer.concat_heads = !last;
    const auto rows = static_cast<Eigen::Index>(arch.heads * f);
    layer.w_src.resize(rows, static_cast<Eigen::Index>(d));
    layer.w_dst.resize(rows, static_cast<Eigen::Index>(d));
    layer.attn.resize(static_cast<Eigen::Index>(arch.heads), static_cast<Eigen::Index>(f));
    glorot(layer.w_src, static_cast<double>(d), static_cast<double>(f));
    glorot(layer.w_dst, static_cast<double>(d), static_cast<double>(f));
    glorot(layer.attn, static_cast<double>(f), 1.0);
    layer.bias = Vector::Zero(static_cast<Eigen::Index>(layer.out_dim()));
    d = layer.out_dim();
    p.layers.push_back(std::move(layer));
  }
  return p;
}

// Round every parameter to float precision (the checkpoint storage type).
inline void round_to_float(GatParams& p) {
  p.for_each_tensor([](double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] = static_cast<double>(static_cast<float>(x[i]));
  });
  p.leaky_slope = static_cast<double>(static_cast<float>(p.leaky_slope));
}

// ---------------------------------------------------------------------------
// Forward pass.

namespace detail {

inline double leaky(double z, double slope) { return z > 0.0 ? z : slope * z; }
inline double leaky_grad(double z, double slope) { return z > 0.0 ? 1.0 : slope; }
inline double elu(double x) { return x > 0.0 ? x : std::expm1(x); }
inline double elu_grad(double x) { return x > 0.0 ? 1.0 : std::exp(x); }

inline void check_forward_inputs(const TweetRelationGraph& g, const Matrix& h, const GatParams& p) {
  if (p.layers.empty()) throw UsageError("GAT has no layers");
  if (static_cast<std::size_t>(h.rows()) != g.size())
    throw DataError("feature rows (" + std::to_string(h.rows()) + ") != graph nodes (" + std::to_string(g.size()) + ")");
  if (static_cast<std::size_t>(h.cols()) != p.in_dim())
    throw DataError("feature dimension " + std::to_string(h.cols()) + " does not match model input " +
                    std::to_string(p.in_dim()));
  for (std::size_t i = 1; i < p.layers.size(); ++i)
    if (p.layers[i].in_dim() != p.layers[i - 1].out_dim()) throw DataError("layer dimensions do not chain");
  for (std::size_t v = 0; v < g.size(); ++v)
    if (g.degree(v) == 0)
      throw DataError("node " + std::to_string(v) + " has an empty neighborhood; enable self-loops");
}

}  // namespace detail

// Softmax-normalized GATv2 scores of `node` over its neighbor list for one head,
// e_u = a . LeakyReLU(W_dst h_v + W_src h_u), computed with max-subtraction.
inline Vector attention_weights(std::size_t node, const TweetRelationGraph& g, const Matrix& h,
                                const LayerParams& layer, double leaky_slope = 0.2, std::size_t head = 0) {
  if (static_cast<std::size_t>(h.cols()) != layer.in_dim()) throw DataError("feature dimension mismatch");
  const auto nb = g.neighbors(node);
  if (nb.empty()) throw DataError("node has an empty neighborhood; enable self-loops");
  const auto f = static_cast<Eigen::Index>(layer.head_dim());
  const auto r0 = static_cast<Eigen::Index>(head) * f;
  const Vector t = layer.w_dst.middleRows(r0, f) * h.row(static_cast<Eigen::Index>(node)).transpose();
  Vector e(static_cast<Eigen::Index>(nb.size()));
  for (std::size_t k = 0; k < nb.size(); ++k) {
    const Vector s = layer.w_src.middleRows(r0, f) * h.row(nb[k]).transpose();
    const Vector z = (t + s).unaryExpr([&](double x) { return detail::leaky(x, leaky_slope); });
    e[static_cast<Eigen::Index>(k)] = layer.attn.row(static_cast<Eigen::Index>(head)).dot(z);
  }
  const double mx = e.maxCoeff();
  Vector a = (e.array() - mx).exp();
  return a / a.sum();
}

struct LayerCache {
  Matrix input;   // n x d_in
  Matrix src;     // n x H*F   (W_src h)
  Matrix dst;     // n x H*F   (W_dst h)
  Matrix alpha;   // entries x H
  Matrix pre;     // n x out (before the inter-layer activation)
};

struct ForwardCache {
  std::vector<LayerCache> layers;
};

namespace detail {

inline Matrix gat_layer_forward(const TweetRelationGraph& g, const Matrix& h, const LayerParams& layer, double slope,
                                LayerCache* cache) {
  const auto n = static_cast<Eigen::Index>(g.size());
  const auto heads = static_cast<Eigen::Index>(layer.heads);
  const auto f = static_cast<Eigen::Index>(layer.head_dim());
  Matrix src = h * layer.w_src.transpose();
  Matrix dst = h * layer.w_dst.transpose();
  Matrix out = Matrix::Zero(n, static_cast<Eigen::Index>(layer.out_dim()));
  Matrix alpha;
  if (cache) alpha.resize(static_cast<Eigen::Index>(g.entry_count()), heads);

  std::vector<double> e;
  Vector z(f);
  std::size_t entry = 0;
  for (Eigen::Index v = 0; v < n; ++v) {
    const auto nb = g.neighbors(static_cast<std::size_t>(v));
    e.resize(nb.size());
    for (Eigen::Index k = 0; k < heads; ++k) {
      const auto dst_v = dst.row(v).segment(k * f, f);
      const auto a_k = layer.attn.row(k);
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < nb.size(); ++j) {
        z = (dst_v + src.row(nb[j]).segment(k * f, f)).transpose();
        double s = 0.0;
        for (Eigen::Index c = 0; c < f; ++c) s += a_k[c] * leaky(z[c], slope);
        e[j] = s;
        mx = std::max(mx, s);
      }
      double denom = 0.0;
      for (auto& x : e) denom += (x = std::exp(x - mx));
      const double scale = layer.concat_heads ? 1.0 : 1.0 / static_cast<double>(heads);
      const Eigen::Index col0 = layer.concat_heads ? k * f : 0;
      for (std::size_t j = 0; j < nb.size(); ++j) {
        const double a = e[j] / denom;
        if (cache) alpha(static_cast<Eigen::Index>(entry + j), k) = a;
        out.row(v).segment(col0, f) += (scale * a) * src.row(nb[j]).segment(k * f, f);
      }
    }
    entry += nb.size();
  }
  out.rowwise() += layer.bias.transpose();
  if (cache) {
    cache->input = h;
    cache->src = std::move(src);
    cache->dst = std::move(dst);
    cache->alpha = std::move(alpha);
    cache->pre = out;
  }
  return out;
}

}  // namespace detail

/// Stacked GATv2 forward pass. Hidden layers use ELU; the final layer is linear.
inline Matrix gat_forward(const TweetRelationGraph& g, const Matrix& features, const GatParams& params,
                          ForwardCache* cache = nullptr) {
  detail::check_forward_inputs(g, features, params);
  if (cache) cache->layers.assign(params.layers.size(), {});
  Matrix h = features;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    Matrix out = detail::gat_layer_forward(g, h, params.layers[l], params.leaky_slope,
                                           cache ? &cache->layers[l] : nullptr);
    if (l + 1 < params.layers.size()) out = out.unaryExpr([](double x) { return detail::elu(x); });
    h = std::move(out);
  }
  if (!h.allFinite()) throw NumericalError("non-finite embedding produced by forward pass");
  return h;
}

// Gradient of a scalar loss w.r.t. every parameter, given dL/d(embeddings).
inline GatParams gat_backward(const TweetRelationGraph& g, const GatParams& params, const ForwardCache& cache,
                              Matrix grad_out) {
  GatParams grad = params;
  grad.for_each_tensor([](double* p, std::size_t n) { std::fill(p, p + n, 0.0); });
  const double slope = params.leaky_slope;

  for (std::size_t li = params.layers.size(); li-- > 0;) {
    const auto& layer = params.layers[li];
    const auto& c = cache.layers[li];
    auto& gl = grad.layers[li];
    if (li + 1 < params.layers.size())
      grad_out = grad_out.cwiseProduct(c.pre.unaryExpr([](double x) { return detail::elu_grad(x); }));

    const auto n = static_cast<Eigen::Index>(g.size());
    const auto heads = static_cast<Eigen::Index>(layer.heads);
    const auto f = static_cast<Eigen::Index>(layer.head_dim());
    gl.bias = grad_out.colwise().sum().transpose();

    Matrix d_src = Matrix::Zero(n, heads * f);
    Matrix d_dst = Matrix::Zero(n, heads * f);
    std::vector<double> d_alpha;
    Vector z(f);
    std::size_t entry = 0;
    for (Eigen::Index v = 0; v < n; ++v) {
      const auto nb = g.neighbors(static_cast<std::size_t>(v));
      d_alpha.resize(nb.size());
      for (Eigen::Index k = 0; k < heads; ++k) {
        const double scale = layer.concat_heads ? 1.0 : 1.0 / static_cast<double>(heads);
        const Eigen::Index col0 = layer.concat_heads ? k * f : 0;
        const Vector g_v = scale * grad_out.row(v).segment(col0, f).transpose();
        double weighted = 0.0;
        for (std::size_t j = 0; j < nb.size(); ++j) {
          const double a = c.alpha(static_cast<Eigen::Index>(entry + j), k);
          d_alpha[j] = g_v.dot(c.src.row(nb[j]).segment(k * f, f));
          weighted += a * d_alpha[j];
          d_src.row(nb[j]).segment(k * f, f) += a * g_v.transpose();
        }
        const auto a_k = layer.attn.row(k);
        for (std::size_t j = 0; j < nb.size(); ++j) {
          const double a = c.alpha(static_cast<Eigen::Index>(entry + j), k);
          const double d_e = a * (d_alpha[j] - weighted);
          if (d_e == 0.0) continue;
          z = (c.dst.row(v).segment(k * f, f) + c.src.row(nb[j]).segment(k * f, f)).transpose();
          for (Eigen::Index q = 0; q < f; ++q) {
            gl.attn(k, q) += d_e * detail::leaky(z[q], slope);
            const double dz = d_e * a_k[q] * detail::leaky_grad(z[q], slope);
            d_dst(v, k * f + q) += dz;
            d_src(nb[j], k * f + q) += dz;
          }
        }
      }
      entry += nb.size();
    }
    gl.w_src = d_src.transpose() * c.input;
    gl.w_dst = d_dst.transpose() * c.input;
    if (li > 0) grad_out = d_src * layer.w_src + d_dst * layer.w_dst;
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Contrastive objective.

struct TrainConfig {
  double learning_rate = 0.003;
  double margin = 100.0;
  std::size_t patience = 2;
  std::size_t max_epochs = 100;
  std::uint64_t seed = 0;
  double triplet_weight = 1.0;
  double pairwise_weight = 1.0;
  std::size_t batch_anchors = 32;  // anchors per optimizer step
  enum class Monitor { Loss, Ami } monitor = Monitor::Loss;
  std::size_t min_pts = 3;  // used by the AMI monitor
  GatArchitecture arch;
};

struct Triplet {
  std::uint32_t anchor, positive, negative;
};

struct Quadruple {
  std::uint32_t anchor, positive, first, second;
};

struct TripleBatch {
  std::vector<Triplet> triplets;
  std::vector<Quadruple> quadruples;
};

inline double triplet_loss(const Vector& anchor, const Vector& positive, const Vector& negative, double margin) {
  if (anchor.size() != positive.size() || anchor.size() != negative.size())
    throw DataError("triplet_loss: dimension mismatch");
  return std::max((anchor - positive).norm() - (anchor - negative).norm() + margin, 0.0);
}

inline double pairwise_loss(const Vector& hi, const Vector& hi_pos, const Vector& hj, const Vector& hk, double margin) {
  if (hi.size() != hi_pos.size() || hi.size() != hj.size() || hi.size() != hk.size())
    throw DataError("pairwise_loss: dimension mismatch");
  return std::max((hi - hi_pos).norm() - (hj - hk).norm() + margin, 0.0);
}

// Every triple/quadruple must respect the event labels (-1 = unlabeled).
inline void validate_batch(const TripleBatch& batch, std::span<const int> labels) {
  auto label = [&](std::uint32_t i) {
    if (i >= labels.size()) throw DataError("batch index out of range");
    if (labels[i] < 0) throw DataError("batch references unlabeled tweet " + std::to_string(i));
    return labels[i];
  };
  for (const auto& t : batch.triplets)
    if (label(t.anchor) != label(t.positive) || label(t.anchor) == label(t.negative))
      throw DataError("triplet violates event-label constraints");
  for (const auto& q : batch.quadruples)
    if (label(q.anchor) != label(q.positive) || label(q.first) == label(q.second))
      throw DataError("quadruple violates event-label constraints");
}

namespace detail {

// Adds d||x - y|| / dx = (x - y)/||x - y|| (zero at x == y) scaled by w.
inline void add_distance_grad(Matrix& grad, const Matrix& e, std::uint32_t x, std::uint32_t y, double w) {
  const Eigen::RowVectorXd diff = e.row(x) - e.row(y);
  const double d = diff.norm();
  if (d == 0.0) return;
  grad.row(x) += (w / d) * diff;
  grad.row(y) -= (w / d) * diff;
}

}  // namespace detail

/// Weighted mean triplet term plus weighted mean pairwise term. When `grad` is
/// given it receives dL/d(embeddings); inactive hinges contribute nothing.
inline double total_loss(const TripleBatch& batch, const Matrix& embeddings, const TrainConfig& cfg,
                         Matrix* grad = nullptr) {
  if (grad) *grad = Matrix::Zero(embeddings.rows(), embeddings.cols());
  auto dist = [&](std::uint32_t a, std::uint32_t b) { return (embeddings.row(a) - embeddings.row(b)).norm(); };
  double triplet_sum = 0.0, pair_sum = 0.0;
  const double wt = batch.triplets.empty() ? 0.0 : cfg.triplet_weight / static_cast<double>(batch.triplets.size());
  const double wp =
      batch.quadruples.empty() ? 0.0 : cfg.pairwise_weight / static_cast<double>(batch.quadruples.size());
  for (const auto& t : batch.triplets) {
    const double v = dist(t.anchor, t.positive) - dist(t.anchor, t.negative) + cfg.margin;
    if (v <= 0.0) continue;
    triplet_sum += v;
    if (grad) {
      detail::add_distance_grad(*grad, embeddings, t.anchor, t.positive, wt);
      detail::add_distance_grad(*grad, embeddings, t.anchor, t.negative, -wt);
    }
  }
  for (const auto& q : batch.quadruples) {
    const double v = dist(q.anchor, q.positive) - dist(q.first, q.second) + cfg.margin;
    if (v <= 0.0) continue;
    pair_sum += v;
    if (grad) {
      detail::add_distance_grad(*grad, embeddings, q.anchor, q.positive, wp);
      detail::add_distance_grad(*grad, embeddings, q.first, q.second, -wp);
    }
  }
  const double loss = wt * triplet_sum + wp * pair_sum;
  if (!std::isfinite(loss)) throw NumericalError("non-finite loss");
  return loss;
}

inline double total_loss(const TripleBatch& batch, const Matrix& embeddings, const TrainConfig& cfg,
                         std::span<const int> labels) {
  validate_batch(batch, labels);
  return total_loss(batch, embeddings, cfg);
}

// ---------------------------------------------------------------------------
// Sampling.

class TripleSampler {
 public:
  explicit TripleSampler(std::span<const int> labels) {
    int max_label = -1;
    for (int l : labels) max_label = std::max(max_label, l);
    members_.resize(static_cast<std::size_t>(max_label + 1));
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] >= 0) members_[static_cast<std::size_t>(labels[i])].push_back(static_cast<std::uint32_t>(i));
    for (std::size_t e = 0; e < members_.size(); ++e) {
      if (members_[e].empty()) continue;
      events_.push_back(e);
      for (auto i : members_[e]) labeled_.push_back(i);
      if (members_[e].size() >= 2)
        for (auto i : members_[e]) anchors_.push_back(i);
    }
    std::sort(labeled_.begin(), labeled_.end());
    std::sort(anchors_.begin(), anchors_.end());
    labels_.assign(labels.begin(), labels.end());
  }

  std::size_t event_count() const { return events_.size(); }
  const std::vector<std::uint32_t>& anchors() const { return anchors_; }

  // Needs at least two events, one of which has two or more tweets.
  bool usable() const { return events_.size() >= 2 && !anchors_.empty(); }

  // One triplet and one quadruple per anchor, in the given anchor order.
  TripleBatch sample(const std::vector<std::uint32_t>& anchor_order, Rng& rng) const {
    if (!usable()) throw DataError("need at least two labeled events, one with two or more tweets");
    TripleBatch b;
    b.triplets.reserve(anchor_order.size());
    b.quadruples.reserve(anchor_order.size());
    for (auto a : anchor_order) {
      const auto ev = static_cast<std::size_t>(labels_[a]);
      b.triplets.push_back({a, positive(a, ev, rng), negative(ev, rng)});
      const auto [j, k] = two_events(ev, rng);
      b.quadruples.push_back({a, positive(a, ev, rng), pick(members_[j], rng), pick(members_[k], rng)});
    }
    return b;
  }

 private:
  static std::uint32_t pick(const std::vector<std::uint32_t>& v, Rng& rng) { return v[uniform_index(rng, v.size())]; }

  std::uint32_t positive(std::uint32_t anchor, std::size_t ev, Rng& rng) const {
    const auto& m = members_[ev];
    // uniform over the event minus the anchor
    auto idx = uniform_index(rng, m.size() - 1);
    const auto pos = static_cast<std::size_t>(std::find(m.begin(), m.end(), anchor) - m.begin());
    if (idx >= pos) ++idx;
    return m[idx];
  }

  std::uint32_t negative(std::size_t ev, Rng& rng) const {
    const auto others = labeled_.size() - members_[ev].size();
    auto idx = uniform_index(rng, others);
    // walk labeled_ skipping the anchor's event
    for (auto i : labeled_) {
      if (static_cast<std::size_t>(labels_[i]) == ev) continue;
      if (idx-- == 0) return i;
    }
    throw std::logic_error("negative sampling fell through");
  }

  // Two distinct events other than `ev`; with only two events available the
  // pair may include `ev`.
  std::pair<std::size_t, std::size_t> two_events(std::size_t ev, Rng& rng) const {
    std::vector<std::size_t> pool;
    if (events_.size() >= 3) {
      for (auto e : events_)
        if (e != ev) pool.push_back(e);
    } else {
      pool = events_;
    }
    const auto x = uniform_index(rng, pool.size());
    auto y = uniform_index(rng, pool.size() - 1);
    if (y >= x) ++y;
    return {pool[x], pool[y]};
  }

  std::vector<std::vector<std::uint32_t>> members_;
  std::vector<std::size_t> events_;
  std::vector<std::uint32_t> labeled_;
  std::vector<std::uint32_t> anchors_;
  std::vector<int> labels_;
};

// ---------------------------------------------------------------------------
// Adam.

class Adam {
 public:
  Adam(const GatParams& shape, double lr, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(epsilon) {
    shape.for_each_tensor([&](const double*, std::size_t n) {
      m_.emplace_back(n, 0.0);
      v_.emplace_back(n, 0.0);
    });
  }

  void step(GatParams& params, const GatParams& grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    std::vector<const double*> gs;
    grad.for_each_tensor([&](const double* g, std::size_t) { gs.push_back(g); });
    std::size_t idx = 0;
    params.for_each_tensor([&](double* p, std::size_t n) {
      auto& m = m_[idx];
      auto& v = v_[idx];
      const double* g = gs[idx];
      for (std::size_t i = 0; i < n; ++i) {
        m[i] = b1_ * m[i] + (1.0 - b1_) * g[i];
        v[i] = b2_ * v[i] + (1.0 - b2_) * g[i] * g[i];
        p[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
      }
      ++idx;
    });
  }

 private:
  double lr_, b1_, b2_, eps_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// ---------------------------------------------------------------------------
// Training.

struct GraphData {
  const TweetRelationGraph* graph = nullptr;
  const Matrix* features = nullptr;
  std::span<const int> labels;
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_ami = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  GatParams params;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  std::string optimizer = "adam(beta1=0.9,beta2=0.999,eps=1e-8)";
};

// Loss and full parameter gradient for one batch on one graph.
inline double loss_and_gradient(const GraphData& data, const GatParams& params, const TripleBatch& batch,
                                const TrainConfig& cfg, GatParams* grad) {
  ForwardCache cache;
  const Matrix emb = gat_forward(*data.graph, *data.features, params, grad ? &cache : nullptr);
  Matrix d_emb;
  const double loss = total_loss(batch, emb, cfg, grad ? &d_emb : nullptr);
  if (grad) *grad = gat_backward(*data.graph, params, cache, std::move(d_emb));
  return loss;
}

/// Contrastive training with early stopping on the validation split.
///
/// Every epoch each training anchor (a labeled tweet whose event has at least
/// two tweets) contributes one triplet and one quadruple, processed in shuffled
/// mini-batches of `batch_anchors`. The validation batch is sampled once.
/// Training stops after `max(patience, 1)` consecutive epochs without
/// improvement; the best-validation parameters are returned rounded to float.
inline TrainResult train(const GraphData& train_data, const GraphData& val_data, const TrainConfig& cfg,
                         const std::function<void(const EpochLog&)>& on_epoch = {}) {
  if (!(cfg.learning_rate > 0.0)) throw UsageError("learning rate must be positive");
  if (cfg.margin < 0.0) throw UsageError("margin must be non-negative");
  if (cfg.batch_anchors == 0) throw UsageError("batch size must be positive");
  const TripleSampler train_sampler(train_data.labels);
  const TripleSampler val_sampler(val_data.labels);
  if (!train_sampler.usable())
    throw DataError("training split needs at least two labeled events, one with two or more tweets");
  if (!val_sampler.usable())
    throw DataError("validation split needs at least two labeled events, one with two or more tweets");

  Rng rng(cfg.seed);
  TrainResult result;
  result.params = init_gat(static_cast<std::size_t>(train_data.features->cols()), cfg.arch, rng());
  const TripleBatch val_batch = val_sampler.sample(val_sampler.anchors(), rng);
  Adam opt(result.params, cfg.learning_rate);

  auto validate = [&](const GatParams& p, EpochLog& entry) {
    const Matrix emb = gat_forward(*val_data.graph, *val_data.features, p);
    entry.val_loss = total_loss(val_batch, emb, cfg);
    if (cfg.monitor == TrainConfig::Monitor::Ami) entry.val_ami = tune_eps(emb, val_data.labels, cfg.min_pts).ami;
  };
  auto better = [&](const EpochLog& a, const EpochLog& b) {
    return cfg.monitor == TrainConfig::Monitor::Ami ? a.val_ami > b.val_ami : a.val_loss < b.val_loss;
  };

  EpochLog initial;
  initial.epoch = 0;
  initial.train_loss =
      loss_and_gradient(train_data, result.params, train_sampler.sample(train_sampler.anchors(), rng), cfg, nullptr);
  validate(result.params, initial);
  result.log.push_back(initial);
  if (on_epoch) on_epoch(initial);
  EpochLog best = initial;
  GatParams params = result.params;

  std::size_t stale = 0;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    auto order = train_sampler.anchors();
    shuffle(order, rng);
    EpochLog entry;
    entry.epoch = epoch;
    double loss_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t lo = 0; lo < order.size(); lo += cfg.batch_anchors) {
      const std::vector<std::uint32_t> chunk(order.begin() + static_cast<std::ptrdiff_t>(lo),
                                             order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), lo + cfg.batch_anchors)));
      const auto batch = train_sampler.sample(chunk, rng);
      GatParams grad;
      loss_sum += loss_and_gradient(train_data, params, batch, cfg, &grad);
      ++steps;
      opt.step(params, grad);
      if (!params.all_finite()) throw NumericalError("non-finite parameters after epoch " + std::to_string(epoch));
    }
    entry.train_loss = loss_sum / static_cast<double>(steps);
    validate(params, entry);
    if (!std::isfinite(entry.val_loss)) throw NumericalError("non-finite validation loss");
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
    if (better(entry, best)) {
      best = entry;
      result.params = params;
      result.best_epoch = epoch;
      stale = 0;
    } else if (++stale >= std::max<std::size_t>(cfg.patience, 1)) {
      break;
    }
  }
  round_to_float(result.params);
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoint: "TWZP", u32 version, u32 layer count, f32 leaky slope, per layer
// (u32 d_in, u32 head_dim, u32 heads, u32 concat), then per layer the f32
// row-major tensors w_src, w_dst, attn, bias. A feature section follows:
// u32 text width, u32 temporal, u32 category, u32 hash_dim, u32 standardized,
// and when standardized four f64 values (mean0, mean1, scale0, scale1).

struct GatCheckpoint {
  GatParams params;
  FeatureBlocks blocks;
  FeatureLayout layout;
  std::optional<Standardizer> standardization;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {
inline void put_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  put_u32(out, static_cast<std::uint32_t>(bits & 0xFFFFFFFFu));
  put_u32(out, static_cast<std::uint32_t>(bits >> 32));
}
inline double get_f64(ByteReader& in) {
  const std::uint64_t lo = in.u32();
  const std::uint64_t hi = in.u32();
  return std::bit_cast<double>(lo | (hi << 32));
}
}  // namespace detail

inline std::string serialize_checkpoint(const GatCheckpoint& ck) {
  std::string out = "TWZP";
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(ck.params.layers.size()));
  put_f32(out, static_cast<float>(ck.params.leaky_slope));
  for (const auto& l : ck.params.layers) {
    put_u32(out, static_cast<std::uint32_t>(l.in_dim()));
    put_u32(out, static_cast<std::uint32_t>(l.head_dim()));
    put_u32(out, static_cast<std::uint32_t>(l.heads));
    put_u32(out, l.concat_heads ? 1u : 0u);
  }
  ck.params.for_each_tensor([&](const double* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) put_f32(out, static_cast<float>(p[i]));
  });
  put_u32(out, static_cast<std::uint32_t>(ck.layout.text));
  put_u32(out, ck.blocks.temporal ? 1u : 0u);
  put_u32(out, ck.blocks.category ? 1u : 0u);
  put_u32(out, static_cast<std::uint32_t>(ck.blocks.hash_dim));
  put_u32(out, ck.standardization ? 1u : 0u);
  if (ck.standardization) {
    for (double v : ck.standardization->mean) detail::put_f64(out, v);
    for (double v : ck.standardization->scale) detail::put_f64(out, v);
  }
  return out;
}

inline GatCheckpoint parse_checkpoint(std::string_view bytes) {
  ByteReader in(bytes);
  if (in.bytes(4) != "TWZP") throw DataError("checkpoint: bad magic (expected TWZP)");
  if (const auto v = in.u32(); v != kCheckpointVersion)
    throw DataError("checkpoint: unsupported version " + std::to_string(v));
  GatCheckpoint ck;
  const auto n_layers = in.u32();
  if (n_layers == 0 || n_layers > 64) throw DataError("checkpoint: implausible layer count");
  ck.params.leaky_slope = static_cast<double>(in.f32());
  for (std::uint32_t l = 0; l < n_layers; ++l) {
    LayerParams layer;
    const auto d_in = static_cast<Eigen::Index>(in.u32());
    const auto f = static_cast<Eigen::Index>(in.u32());
    layer.heads = in.u32();
    layer.concat_heads = in.u32() != 0;
    const auto h = static_cast<Eigen::Index>(layer.heads);
    if (h == 0 || f == 0 || d_in == 0) throw DataError("checkpoint: zero dimension");
    layer.w_src.resize(h * f, d_in);
    layer.w_dst.resize(h * f, d_in);
    layer.attn.resize(h, f);
    layer.bias.resize(static_cast<Eigen::Index>(layer.out_dim()));
    ck.params.layers.push_back(std::move(layer));
  }
  ck.params.for_each_tensor([&](double* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) p[i] = static_cast<double>(in.f32());
  });
  ck.layout.text = in.u32();
  ck.blocks.text = ck.layout.text > 0;
  ck.blocks.temporal = in.u32() != 0;
  ck.blocks.category = in.u32() != 0;
  ck.blocks.hash_dim = in.u32();
  ck.layout.temporal = ck.blocks.temporal ? 2 : 0;
  ck.layout.category = ck.blocks.category ? kNumCategories : 0;
  ck.blocks.standardize_temporal = in.u32() != 0;
  if (ck.blocks.standardize_temporal) {
    Standardizer s;
    for (auto& v : s.mean) v = detail::get_f64(in);
    for (auto& v : s.scale) v = detail::get_f64(in);
    ck.standardization = s;
  }
  if (!in.at_end()) throw DataError("checkpoint: trailing bytes");
  if (ck.layout.width() != ck.params.in_dim()) throw DataError("checkpoint: feature layout does not match model input");
  return ck;
}

inline std::string serialize_train_log(const std::vector<EpochLog>& log) {
  std::string out;
  for (const auto& e : log) {
    OrderedJson j;
    j["epoch"] = e.epoch;
    j["train_loss"] = e.train_loss;
    j["val_loss"] = e.val_loss;
    if (!std::isnan(e.val_ami)) j["val_ami"] = e.val_ami;
    out += j.dump() + '\n';
  }
  return out;
}

}  // namespace secevent

#endif  // SECEVENT_GATNET_HPP_
