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

#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace secevent;

namespace {

Matrix random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * normal(rng);
  return m;
}

TweetRelationGraph random_graph(Rng& rng, std::size_t n, double p) {
  std::vector<std::vector<std::uint32_t>> adj(n);
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t j = i + 1; j < n; ++j)
      if (uniform01(rng) < p) adj[i].push_back(j);
  return TweetRelationGraph(std::move(adj), true, {});
}

GatArchitecture small_arch(std::size_t layers, std::size_t hidden, std::size_t embed, std::size_t heads = 1) {
  GatArchitecture a;
  a.layers = layers;
  a.hidden_dim = hidden;
  a.embed_dim = embed;
  a.heads = heads;
  return a;
}

void randomize_bias(GatParams& p, Rng& rng) {
  for (auto& l : p.layers)
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias[i] = 0.1 * normal(rng);
}

std::vector<double> flatten(const GatParams& p) {
  std::vector<double> out;
  p.for_each_tensor([&](const double* x, std::size_t n) { out.insert(out.end(), x, x + n); });
  return out;
}

// Two clusters of `per` nodes each, linked inside the cluster, with features
// around two random centers.
struct Toy {
  TweetRelationGraph graph;
  Matrix features;
  std::vector<int> labels;
};

Toy two_event_toy(Rng& rng, std::size_t per, std::size_t d) {
  Toy t;
  const std::size_t n = 2 * per;
  std::vector<std::vector<std::uint32_t>> adj(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    t.labels.push_back(static_cast<int>(i / per));
    for (std::uint32_t j = i + 1; j < n; ++j)
      if (i / per == j / per) adj[i].push_back(j);
  }
  t.graph = TweetRelationGraph(std::move(adj), true, {});
  const Matrix centers = random_matrix(rng, 2, static_cast<Eigen::Index>(d), 0.5);
  t.features = random_matrix(rng, static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d), 1.0);
  for (std::size_t i = 0; i < n; ++i) t.features.row(static_cast<Eigen::Index>(i)) += centers.row(t.labels[i]);
  return t;
}

}  // namespace

TEST(GatForward, SingleNodeIsLinear) {
  Rng rng(1);
  const TweetRelationGraph g({{}}, true, {});
  auto p = init_gat(3, small_arch(1, 4, 4), 5);
  randomize_bias(p, rng);
  const Matrix x = random_matrix(rng, 1, 3);
  const Matrix out = gat_forward(g, x, p);
  const auto& l = p.layers[0];
  EXPECT_LT((out.row(0).transpose() - (l.w_src * x.row(0).transpose() + l.bias)).norm(), 1e-12);
  EXPECT_NEAR(attention_weights(0, g, x, l)[0], 1.0, 1e-15);
}

TEST(GatForward, IdenticalNeighborsShareAttention) {
  const TweetRelationGraph g({{1}, {}}, true, {});
  const auto p = init_gat(4, small_arch(1, 3, 3), 2);
  const Matrix x = Matrix::Constant(2, 4, 0.7);
  const auto a = attention_weights(0, g, x, p.layers[0]);
  ASSERT_EQ(a.size(), 2);
  EXPECT_NEAR(a[0], 0.5, 1e-15);
  EXPECT_NEAR(a[1], 0.5, 1e-15);
  // equal scores over k neighbors
  const TweetRelationGraph star({{1, 2, 3, 4}, {}, {}, {}, {}}, true, {});
  const auto s = attention_weights(0, star, Matrix::Constant(5, 4, -1.3), p.layers[0]);
  for (Eigen::Index k = 0; k < s.size(); ++k) EXPECT_NEAR(s[k], 0.2, 1e-15);
}

TEST(GatForward, PathGraphMatchesDenseReference) {
  Rng rng(3);
  const TweetRelationGraph g({{1}, {2}, {}}, true, {});
  GatParams p;
  LayerParams l;
  l.w_src = (Matrix(2, 2) << 0.5, -1.0, 0.25, 2.0).finished();
  l.w_dst = (Matrix(2, 2) << -0.75, 0.1, 1.5, 0.3).finished();
  l.attn = (Matrix(1, 2) << 1.2, -0.4).finished();
  l.bias = (Vector(2) << 0.05, -0.02).finished();
  p.layers.push_back(l);
  const Matrix x = (Matrix(3, 2) << 1.0, 0.0, -0.5, 2.0, 0.3, -1.1).finished();
  EXPECT_LT((gat_forward(g, x, p) - oracle::gat_dense(g, x, p)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(GatForward, RandomGraphsMatchDenseReference) {
  Rng rng(4);
  for (int k = 0; k < 30; ++k) {
    const auto n = 1 + uniform_index(rng, 25);
    const auto g = random_graph(rng, n, uniform(rng, 0.0, 0.5));
    const auto d = 1 + uniform_index(rng, 6);
    auto p = init_gat(d, small_arch(1 + uniform_index(rng, 3), 1 + uniform_index(rng, 5), 1 + uniform_index(rng, 5),
                                    1 + uniform_index(rng, 3)),
                      rng());
    randomize_bias(p, rng);
    const Matrix x = random_matrix(rng, static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    ASSERT_LT((gat_forward(g, x, p) - oracle::gat_dense(g, x, p)).cwiseAbs().maxCoeff(), 1e-9) << k;
  }
}

TEST(Attention, FiveNeighborsMatchDirectFormula) {
  Rng rng(5);
  const TweetRelationGraph g({{1, 2, 3, 4, 5}, {}, {}, {}, {}, {}}, false, {});
  const auto p = init_gat(3, small_arch(1, 4, 4), 9);
  const Matrix x = random_matrix(rng, 6, 3);
  const auto& l = p.layers[0];
  std::vector<double> e;
  for (int u = 1; u <= 5; ++u) {
    const Vector z = l.w_dst * x.row(0).transpose() + l.w_src * x.row(u).transpose();
    double s = 0.0;
    for (Eigen::Index c = 0; c < z.size(); ++c) s += l.attn(0, c) * (z[c] > 0 ? z[c] : 0.2 * z[c]);
    e.push_back(std::exp(s));
  }
  const double total = std::accumulate(e.begin(), e.end(), 0.0);
  const auto a = attention_weights(0, g, x, l);
  for (int k = 0; k < 5; ++k) EXPECT_NEAR(a[k], e[static_cast<std::size_t>(k)] / total, 1e-14);
  EXPECT_NEAR(a.sum(), 1.0, 1e-15);
}

TEST(Attention, LargeScoresStayFinite) {
  const TweetRelationGraph g({{1, 2}, {}, {}}, true, {});
  auto p = init_gat(2, small_arch(1, 2, 2), 1);
  p.layers[0].attn *= 1e4;
  Matrix x(3, 2);
  x << 100, -100, 50, 80, -90, 30;
  const auto a = attention_weights(0, g, x, p.layers[0]);
  EXPECT_TRUE(a.allFinite());
  EXPECT_NEAR(a.sum(), 1.0, 1e-12);
  EXPECT_TRUE(gat_forward(g, x, p).allFinite());
}

TEST(GatForward, ErrorsOnBadInput) {
  const TweetRelationGraph g({{1}, {}}, false, {});
  const TweetRelationGraph isolated({{}, {}}, false, {});
  const auto p = init_gat(3, small_arch(2, 4, 2), 1);
  EXPECT_THROW(gat_forward(g, Matrix::Zero(2, 4), p), DataError);
  EXPECT_THROW(gat_forward(g, Matrix::Zero(3, 3), p), DataError);
  EXPECT_THROW(gat_forward(isolated, Matrix::Zero(2, 3), p), DataError);
  EXPECT_TRUE(gat_forward(g, Matrix::Zero(2, 3), p).allFinite());
  EXPECT_EQ(p.embed_dim(), 2u);
}

TEST(Losses, Examples) {
  const Vector o = Vector::Zero(2);
  auto at = [](double x) { return (Vector(2) << x, 0.0).finished(); };
  EXPECT_DOUBLE_EQ(triplet_loss(o, at(5), at(3), 100.0), 102.0);
  EXPECT_DOUBLE_EQ(triplet_loss(o, o, at(150), 100.0), 0.0);
  EXPECT_DOUBLE_EQ(pairwise_loss(o, at(10), o, at(10), 100.0), 100.0);
  EXPECT_DOUBLE_EQ(pairwise_loss(o, o, o, at(200), 100.0), 0.0);
}

TEST(Losses, TotalOnIdenticalEmbeddings) {
  TripleBatch b;
  b.triplets = {{0, 1, 2}, {1, 0, 3}};
  b.quadruples = {{0, 1, 2, 3}};
  const Matrix e = Matrix::Constant(4, 3, 1.5);
  TrainConfig cfg;
  EXPECT_DOUBLE_EQ(total_loss(b, e, cfg), 200.0);
  cfg.margin = 0.0;
  Matrix sep(4, 1);
  sep << 0.0, 0.0, 10.0, 10.0;
  b.triplets = {{0, 1, 2}};
  b.quadruples = {{0, 1, 0, 2}};
  EXPECT_DOUBLE_EQ(total_loss(b, sep, cfg), 0.0);
  const std::vector<int> labels{0, 0, 1, 1};
  EXPECT_NO_THROW(validate_batch(b, labels));
  b.triplets = {{0, 2, 1}};
  EXPECT_THROW(validate_batch(b, labels), DataError);
}

TEST(Losses, EmbeddingGradientMatchesFiniteDifference) {
  Rng rng(6);
  const Matrix e = random_matrix(rng, 6, 4, 3.0);
  TripleBatch b;
  b.triplets = {{0, 1, 2}, {3, 4, 5}};
  b.quadruples = {{0, 1, 3, 5}, {2, 4, 0, 3}};
  TrainConfig cfg;
  cfg.pairwise_weight = 0.7;
  Matrix g;
  total_loss(b, e, cfg, &g);
  for (Eigen::Index i = 0; i < e.size(); ++i) {
    Matrix plus = e, minus = e;
    plus.data()[i] += 1e-6;
    minus.data()[i] -= 1e-6;
    EXPECT_NEAR((total_loss(b, plus, cfg) - total_loss(b, minus, cfg)) / 2e-6, g.data()[i], 1e-6);
  }
}

TEST(GatBackward, ParameterGradientMatchesFiniteDifference) {
  Rng rng(7);
  for (std::size_t heads : {1u, 2u}) {
    const auto g = random_graph(rng, 12, 0.3);
    const Matrix x = random_matrix(rng, 12, 5);
    std::vector<int> labels;
    for (int i = 0; i < 12; ++i) labels.push_back(i % 3);
    const TripleSampler sampler(labels);
    const auto batch = sampler.sample(sampler.anchors(), rng);
    auto p = init_gat(5, small_arch(2, 4, 3, heads), rng());
    randomize_bias(p, rng);
    TrainConfig cfg;
    const GraphData data{&g, &x, labels};
    GatParams grad;
    loss_and_gradient(data, p, batch, cfg, &grad);
    const auto analytic = flatten(grad);
    std::size_t idx = 0;
    double worst = 0.0;
    p.for_each_tensor([&](double* w, std::size_t n) {
      for (std::size_t i = 0; i < n; ++i, ++idx) {
        const double keep = w[i];
        w[i] = keep + 1e-5;
        const double up = loss_and_gradient(data, p, batch, cfg, nullptr);
        w[i] = keep - 1e-5;
        const double down = loss_and_gradient(data, p, batch, cfg, nullptr);
        w[i] = keep;
        const double numeric = (up - down) / 2e-5;
        worst = std::max(worst, std::abs(numeric - analytic[idx]) / std::max(1e-3, std::abs(numeric) + std::abs(analytic[idx])));
      }
    });
    EXPECT_LT(worst, 1e-4) << "heads=" << heads;
  }
}

TEST(Sampler, RespectsLabels) {
  const std::vector<int> labels{0, 0, 0, 1, 1, 2, -1, -1};
  const TripleSampler s(labels);
  EXPECT_TRUE(s.usable());
  EXPECT_EQ(s.event_count(), 3u);
  Rng rng(1);
  for (int k = 0; k < 50; ++k) {
    const auto b = s.sample(s.anchors(), rng);
    EXPECT_NO_THROW(validate_batch(b, labels));
    for (const auto& t : b.triplets) {
      EXPECT_NE(t.anchor, t.positive);
      EXPECT_GE(labels[t.negative], 0);
    }
  }
  EXPECT_FALSE(TripleSampler(std::vector<int>{0, 1, 2}).usable());
}

TEST(Train, TwoEventsSeparate) {
  Rng rng(8);
  const auto tr = two_event_toy(rng, 10, 6);
  const auto va = two_event_toy(rng, 8, 6);
  TrainConfig cfg;
  cfg.arch = small_arch(2, 16, 8);
  cfg.max_epochs = 30;
  cfg.seed = 3;
  const auto r = train({&tr.graph, &tr.features, tr.labels}, {&va.graph, &va.features, va.labels}, cfg);
  ASSERT_GE(r.log.size(), 2u);
  EXPECT_LT(r.log[r.best_epoch].val_loss, r.log[0].val_loss);
  EXPECT_GT(r.best_epoch, 0u);
  const Matrix emb = gat_forward(va.graph, va.features, r.params);
  double intra = 0, inter = 0;
  int ni = 0, ne = 0;
  for (Eigen::Index i = 0; i < emb.rows(); ++i)
    for (Eigen::Index j = i + 1; j < emb.rows(); ++j) {
      const double d = (emb.row(i) - emb.row(j)).norm();
      if (va.labels[static_cast<std::size_t>(i)] == va.labels[static_cast<std::size_t>(j)]) intra += d, ++ni;
      else inter += d, ++ne;
    }
  EXPECT_LT(intra / ni, inter / ne);
}

TEST(Train, PatienceZeroStopsAtFirstStall) {
  Rng rng(9);
  const auto tr = two_event_toy(rng, 6, 4);
  const auto va = two_event_toy(rng, 6, 4);
  TrainConfig cfg;
  cfg.arch = small_arch(2, 8, 4);
  cfg.patience = 0;
  cfg.max_epochs = 200;
  cfg.learning_rate = 0.5;  // overshoots quickly
  const auto r = train({&tr.graph, &tr.features, tr.labels}, {&va.graph, &va.features, va.labels}, cfg);
  ASSERT_GE(r.log.size(), 2u);
  const auto& last = r.log.back();
  double best_before = r.log[0].val_loss;
  for (std::size_t i = 1; i + 1 < r.log.size(); ++i) {
    EXPECT_LT(r.log[i].val_loss, best_before);  // every earlier epoch improved
    best_before = r.log[i].val_loss;
  }
  if (last.epoch < cfg.max_epochs) {
    EXPECT_GE(last.val_loss, best_before);
  }
}

TEST(Train, SameSeedIsBitIdentical) {
  Rng rng(10);
  const auto tr = two_event_toy(rng, 6, 4);
  const auto va = two_event_toy(rng, 5, 4);
  TrainConfig cfg;
  cfg.arch = small_arch(2, 8, 4);
  cfg.max_epochs = 5;
  cfg.seed = 11;
  std::vector<std::vector<double>> losses[2];
  GatParams finals[2];
  for (int run = 0; run < 2; ++run) {
    const auto r = train({&tr.graph, &tr.features, tr.labels}, {&va.graph, &va.features, va.labels}, cfg);
    for (const auto& e : r.log) losses[run].push_back({e.train_loss, e.val_loss});
    finals[run] = r.params;
  }
  EXPECT_EQ(losses[0], losses[1]);
  EXPECT_TRUE(finals[0] == finals[1]);
  cfg.seed = 12;
  const auto other = train({&tr.graph, &tr.features, tr.labels}, {&va.graph, &va.features, va.labels}, cfg);
  EXPECT_FALSE(other.params == finals[0]);
}

TEST(Train, RejectsUnusableSplits) {
  Rng rng(11);
  const auto tr = two_event_toy(rng, 4, 3);
  const std::vector<int> one_event(tr.labels.size(), 0);
  TrainConfig cfg;
  cfg.arch = small_arch(1, 2, 2);
  EXPECT_THROW(train({&tr.graph, &tr.features, one_event}, {&tr.graph, &tr.features, tr.labels}, cfg), DataError);
  cfg.learning_rate = 0.0;
  EXPECT_THROW(train({&tr.graph, &tr.features, tr.labels}, {&tr.graph, &tr.features, tr.labels}, cfg), UsageError);
}

TEST(Checkpoint, RoundTripAndErrors) {
  Rng rng(12);
  GatCheckpoint ck;
  ck.params = init_gat(5, small_arch(2, 3, 4, 2), 4);
  randomize_bias(ck.params, rng);
  round_to_float(ck.params);
  ck.blocks.hash_dim = 64;
  ck.layout.text = 3;
  ck.layout.temporal = 2;
  ck.standardization = Standardizer{{1.5, 2.5}, {3.0, 0.125}};
  const auto bytes = serialize_checkpoint(ck);
  EXPECT_EQ(bytes.substr(0, 4), "TWZP");
  const auto back = parse_checkpoint(bytes);
  EXPECT_TRUE(back.params == ck.params);
  EXPECT_EQ(*back.standardization, *ck.standardization);
  EXPECT_EQ(back.layout.width(), 5u);
  EXPECT_EQ(serialize_checkpoint(back), bytes);
  EXPECT_THROW(parse_checkpoint("TWZX" + bytes.substr(4)), DataError);
  EXPECT_THROW(parse_checkpoint(bytes.substr(0, bytes.size() - 3)), DataError);
  EXPECT_THROW(parse_checkpoint(bytes + "x"), DataError);
  auto wrong = ck;
  wrong.layout.text = 4;
  EXPECT_THROW(parse_checkpoint(serialize_checkpoint(wrong)), DataError);
}
