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

#include "secevent/categorizer.hpp"

#include <gtest/gtest.h>

using namespace secevent;

namespace {

// Two features, margin-separated; category c is set iff dir_c . x > 0.
struct Separable {
  Matrix x, gold;
};

Separable separable(Rng& rng, std::size_t n) {
  Separable s{Matrix(static_cast<Eigen::Index>(n), 2), Matrix::Zero(static_cast<Eigen::Index>(n), 7)};
  for (Eigen::Index i = 0; i < s.x.rows(); ++i) {
    for (;;) {
      const double a = uniform(rng, -1, 1), b = uniform(rng, -1, 1);
      bool ok = true;
      for (int c = 0; c < 7; ++c) {
        const double ang = 0.45 * c;
        ok = ok && std::abs(std::cos(ang) * a + std::sin(ang) * b) > 0.1;
      }
      if (!ok) continue;
      s.x(i, 0) = a;
      s.x(i, 1) = b;
      for (int c = 0; c < 7; ++c) s.gold(i, c) = std::cos(0.45 * c) * a + std::sin(0.45 * c) * b > 0;
      break;
    }
  }
  return s;
}

}  // namespace

TEST(CategoryLoss, Examples) {
  Matrix y = Matrix::Zero(1, 7), p = Matrix::Constant(1, 7, 1e-12);
  y(0, 2) = 1.0;
  p(0, 2) = 0.5;
  EXPECT_NEAR(category_loss(y, p, 1.0), -std::log(0.5), 1e-6);
  EXPECT_NEAR(category_loss(y, p, 0.8), 0.8 * 0.6931471805599453, 1e-6);
  // single-cell form without the other six clamped terms
  const Matrix y1 = Matrix::Ones(1, 1), p1 = Matrix::Constant(1, 1, 0.5);
  PosWeights w = uniform_pos_weights(0.8);
  Matrix y7 = Matrix::Zero(1, 7), p7 = Matrix::Zero(1, 7);
  y7(0, 0) = 1.0;
  p7.setConstant(kProbClamp);
  p7(0, 0) = 0.5;
  const double others = -6.0 * std::log(1.0 - kProbClamp);
  EXPECT_NEAR(category_loss(y7, p7, w) - others, 0.5545177444479562, 1e-12);
}

TEST(CategoryLoss, PerfectPredictionsNearZero) {
  Rng rng(1);
  Matrix y(10, 7);
  for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = uniform01(rng) < 0.4;
  EXPECT_LT(category_loss(y, y), 1e-5);
  EXPECT_TRUE(std::isfinite(category_loss(y, Matrix::Ones(10, 7) - y)));
}

TEST(CategoryLoss, GradientMatchesFiniteDifference) {
  Rng rng(2);
  auto m = CategorizerModel::zeros(4);
  for (Eigen::Index i = 0; i < m.weights.size(); ++i) m.weights.data()[i] = normal(rng);
  for (Eigen::Index i = 0; i < m.bias.size(); ++i) m.bias[i] = 0.3 * normal(rng);
  Matrix x(9, 4), y(9, 7);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
  for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = uniform01(rng) < 0.5;
  Matrix dw;
  Vector db;
  category_loss_and_gradient(m, x, y, dw, db);
  auto loss = [&](const CategorizerModel& mm) { return category_loss(y, predict_categories(mm, x).prob, mm.pos_weight); };
  for (Eigen::Index i = 0; i < m.weights.size(); ++i) {
    auto up = m, down = m;
    up.weights.data()[i] += 1e-6;
    down.weights.data()[i] -= 1e-6;
    EXPECT_NEAR((loss(up) - loss(down)) / 2e-6, dw.data()[i], 1e-6);
  }
  for (Eigen::Index i = 0; i < m.bias.size(); ++i) {
    auto up = m, down = m;
    up.bias[i] += 1e-6;
    down.bias[i] -= 1e-6;
    EXPECT_NEAR((loss(up) - loss(down)) / 2e-6, db[i], 1e-6);
  }
}

TEST(Predict, ZeroModelAssignsEverything) {
  const auto m = CategorizerModel::zeros(3);
  const auto p = predict_categories(m, Matrix::Random(4, 3));
  EXPECT_EQ(p.prob, Matrix::Constant(4, 7, 0.5));
  EXPECT_EQ(p.labels, Matrix::Ones(4, 7));
  for (const auto& s : p.sets()) EXPECT_TRUE(s.all());
  EXPECT_THROW(predict_categories(m, Matrix::Zero(2, 4)), DataError);
}

TEST(Predict, ProbabilitiesAreClamped) {
  auto m = CategorizerModel::zeros(1);
  m.weights.setConstant(1e4);
  const auto p = predict_categories(m, (Matrix(2, 1) << 1.0, -1.0).finished());
  EXPECT_EQ(p.prob(0, 0), 1.0 - kProbClamp);
  EXPECT_EQ(p.prob(1, 0), kProbClamp);
}

TEST(Train, SeparableReachesPerfectAccuracy) {
  Rng rng(3);
  const auto tr = separable(rng, 400);
  const auto va = separable(rng, 100);
  CategorizerTrainConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.max_epochs = 400;
  cfg.patience = 20;
  const auto r = train_categorizer(tr.x, tr.gold, va.x, va.gold, cfg);
  EXPECT_EQ(predict_categories(r.model, tr.x).labels, tr.gold);
  for (bool t : r.model.trained) EXPECT_TRUE(t);
}

TEST(Train, PatienceZeroAndDeterminism) {
  Rng rng(4);
  const auto tr = separable(rng, 100);
  const auto va = separable(rng, 30);
  CategorizerTrainConfig cfg;
  cfg.learning_rate = 5.0;
  cfg.patience = 0;
  cfg.max_epochs = 100;
  const auto a = train_categorizer(tr.x, tr.gold, va.x, va.gold, cfg);
  const auto b = train_categorizer(tr.x, tr.gold, va.x, va.gold, cfg);
  EXPECT_EQ(a.model.weights, b.model.weights);
  EXPECT_EQ(a.log, b.log);
  if (a.epochs_run < cfg.max_epochs) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < a.log.size(); ++i) best = std::min(best, a.log[i].second);
    EXPECT_GE(a.log.back().second, std::min(best, a.log.back().second));
  }
}

TEST(Train, SingleClassHeadIsSkipped) {
  Rng rng(5);
  auto tr = separable(rng, 60);
  tr.gold.col(6).setZero();
  const auto r = train_categorizer(tr.x, tr.gold, Matrix(0, 2), Matrix(0, 7), CategorizerTrainConfig{});
  EXPECT_FALSE(r.model.trained[6]);
  EXPECT_EQ(r.model.weights.row(6), Matrix::Zero(1, 2));
  EXPECT_EQ(predict_categories(r.model, tr.x).labels.col(6), Vector::Zero(60));
  EXPECT_THROW(train_categorizer(tr.x, Matrix::Zero(60, 7), Matrix(0, 2), Matrix(0, 7), {}), DataError);
}

TEST(Gate, KeepsOnlySecurityTweets) {
  std::vector<CategorySet> labels(5);
  labels[0].set(0);
  labels[1].set(1);
  labels[2].set(2);
  labels[3].set(1);
  labels[3].set(6);
  EXPECT_EQ(security_gate(labels), (std::vector<std::size_t>{2, 3}));
  Rng rng(6);
  for (int k = 0; k < 200; ++k) {
    std::vector<CategorySet> random(20);
    for (auto& s : random)
      for (std::size_t c = 0; c < 7; ++c) s[c] = uniform01(rng) < 0.2;
    const auto keep = security_gate(random);
    for (std::size_t i = 0, j = 0; i < random.size(); ++i) {
      const bool kept = j < keep.size() && keep[j] == i;
      EXPECT_EQ(kept, (random[i] >> 2).any());
      j += kept;
    }
  }
}

TEST(ModelFile, RoundTrip) {
  Rng rng(7);
  auto m = CategorizerModel::zeros(5);
  for (Eigen::Index i = 0; i < m.weights.size(); ++i) m.weights.data()[i] = static_cast<float>(normal(rng));
  m.bias[3] = 0.25;
  m.trained[3] = true;
  const auto bytes = serialize_categorizer(m);
  const auto back = parse_categorizer(bytes);
  EXPECT_EQ(back.weights, m.weights);
  EXPECT_EQ(back.bias, m.bias);
  EXPECT_EQ(back.trained, m.trained);
  EXPECT_EQ(back.pos_weight, m.pos_weight);
  EXPECT_EQ(serialize_categorizer(back), bytes);
  EXPECT_NE(bytes.find("\nTWZC"), std::string::npos);
  EXPECT_THROW(parse_categorizer(bytes.substr(0, bytes.size() - 2)), DataError);
  EXPECT_THROW(parse_categorizer("{}\nTWZC"), DataError);
  EXPECT_THROW(parse_categorizer("TWZC"), DataError);
}
