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

#ifndef SECEVENT_CATEGORIZER_HPP_
#define SECEVENT_CATEGORIZER_HPP_

#include "secevent/corpus.hpp"

#include <array>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

namespace secevent {

inline constexpr double kProbClamp = 1e-7;

inline double clamp_probability(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

inline double sigmoid(double z) {
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

using PosWeights = std::array<double, kNumCategories>;

inline PosWeights uniform_pos_weights(double w) {
  PosWeights p;
  p.fill(w);
  return p;
}

// One cell: -[w y log p + (1 - y) log(1 - p)] with p clamped.
inline double weighted_bce(double y, double p, double pos_weight) {
  p = clamp_probability(p);
  return -(pos_weight * y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
}

/// Sum over categories of the per-category mean weighted binary cross-entropy,
/// -(1/N) sum_i [w y log p + (1 - y) log(1 - p)], with p clamped to [1e-7, 1 - 1e-7].
inline double category_loss(const Matrix& gold, const Matrix& prob, const PosWeights& pos_weight) {
  if (gold.rows() != prob.rows() || gold.cols() != prob.cols() || gold.cols() != static_cast<Eigen::Index>(kNumCategories))
    throw DataError("category_loss: shape mismatch");
  if (gold.rows() == 0) return 0.0;
  const double inv_n = 1.0 / static_cast<double>(gold.rows());
  double loss = 0.0;
  for (Eigen::Index c = 0; c < gold.cols(); ++c) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < gold.rows(); ++i)
      sum += weighted_bce(gold(i, c), prob(i, c), pos_weight[static_cast<std::size_t>(c)]);
    loss += inv_n * sum;
  }
  return loss;
}

inline double category_loss(const Matrix& gold, const Matrix& prob, double pos_weight = 0.8) {
  return category_loss(gold, prob, uniform_pos_weights(pos_weight));
}

struct CategorizerModel {
  Matrix weights;  // 7 x d
  Vector bias;     // 7
  PosWeights pos_weight = uniform_pos_weights(0.8);
  double threshold = 0.5;
  std::array<bool, kNumCategories> trained{};  // heads skipped for single-class data stay false

  std::size_t input_dim() const { return static_cast<std::size_t>(weights.cols()); }

  static CategorizerModel zeros(std::size_t d) {
    CategorizerModel m;
    m.weights = Matrix::Zero(static_cast<Eigen::Index>(kNumCategories), static_cast<Eigen::Index>(d));
    m.bias = Vector::Zero(static_cast<Eigen::Index>(kNumCategories));
    return m;
  }
};

struct CategoryPrediction {
  Matrix labels;  // n x 7, 0/1
  Matrix prob;    // n x 7, in [1e-7, 1 - 1e-7]

  std::vector<CategorySet> sets() const {
    std::vector<CategorySet> out(static_cast<std::size_t>(labels.rows()));
    for (Eigen::Index i = 0; i < labels.rows(); ++i)
      for (Eigen::Index c = 0; c < labels.cols(); ++c)
        if (labels(i, c) != 0.0) out[static_cast<std::size_t>(i)].set(static_cast<std::size_t>(c));
    return out;
  }
};

inline Matrix category_logits(const CategorizerModel& m, const Matrix& x) {
  if (static_cast<std::size_t>(x.cols()) != m.input_dim())
    throw DataError("categorizer expects " + std::to_string(m.input_dim()) + " features, got " +
                    std::to_string(x.cols()));
  Matrix z = x * m.weights.transpose();
  z.rowwise() += m.bias.transpose();
  return z;
}

// Label assigned iff probability >= threshold.
inline CategoryPrediction predict_categories(const CategorizerModel& m, const Matrix& x) {
  CategoryPrediction out;
  out.prob = category_logits(m, x).unaryExpr([](double z) { return clamp_probability(sigmoid(z)); });
  out.labels = (out.prob.array() >= m.threshold).cast<double>();
  return out;
}

// Gradient of category_loss w.r.t. weights and bias (before clamping effects).
inline double category_loss_and_gradient(const CategorizerModel& m, const Matrix& x, const Matrix& gold, Matrix& d_w,
                                         Vector& d_b) {
  const Matrix z = category_logits(m, x);
  const Matrix p = z.unaryExpr([](double v) { return sigmoid(v); });
  const double loss = category_loss(gold, p, m.pos_weight);
  const double inv_n = 1.0 / static_cast<double>(std::max<Eigen::Index>(x.rows(), 1));
  Matrix d_z(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
      const double y = gold(i, c), pr = p(i, c);
      d_z(i, c) = inv_n * (-m.pos_weight[static_cast<std::size_t>(c)] * y * (1.0 - pr) + (1.0 - y) * pr);
    }
  d_w = d_z.transpose() * x;
  d_b = d_z.colwise().sum().transpose();
  return loss;
}

struct CategorizerTrainConfig {
  double learning_rate = 1e-5;
  std::size_t batch_size = 64;
  std::size_t patience = 5;
  std::size_t max_epochs = 200;
  std::uint64_t seed = 0;
  PosWeights pos_weight = uniform_pos_weights(0.8);
  double threshold = 0.5;
};

struct CategorizerTrainResult {
  CategorizerModel model;
  std::vector<std::pair<double, double>> log;  // (train loss, validation loss) per epoch
  std::size_t epochs_run = 0;
};

/// Mini-batch Adam over linear heads with early stopping on validation loss.
///
/// A head whose training labels are all one class is not trained; its bias is
/// pinned to the clamped logit of that class so it always predicts it.
inline CategorizerTrainResult train_categorizer(const Matrix& x, const Matrix& gold, const Matrix& val_x,
                                                const Matrix& val_gold, const CategorizerTrainConfig& cfg) {
  if (x.rows() != gold.rows() || gold.cols() != static_cast<Eigen::Index>(kNumCategories))
    throw DataError("train_categorizer: features and labels disagree in shape");
  if (val_x.rows() != val_gold.rows() || (val_x.rows() > 0 && val_x.cols() != x.cols()))
    throw DataError("train_categorizer: validation shape mismatch");
  if (cfg.batch_size == 0 || !(cfg.learning_rate > 0.0)) throw UsageError("invalid categorizer training config");

  auto model = CategorizerModel::zeros(static_cast<std::size_t>(x.cols()));
  model.pos_weight = cfg.pos_weight;
  model.threshold = cfg.threshold;
  std::size_t active = 0;
  for (std::size_t c = 0; c < kNumCategories; ++c) {
    const double pos = gold.col(static_cast<Eigen::Index>(c)).sum();
    if (pos >= 1.0 && pos <= static_cast<double>(x.rows()) - 1.0) {
      model.trained[c] = true;
      ++active;
    } else {
      warn("category '" + std::string(kCategoryNames[c]) + "' has single-class training data; head not trained");
      const double p = clamp_probability(pos > 0.0 ? 1.0 : 0.0);
      model.bias[static_cast<Eigen::Index>(c)] = std::log(p / (1.0 - p));
    }
  }
  if (active == 0) throw DataError("every category has single-class training data");

  const bool use_val = val_x.rows() > 0;
  const Matrix& mon_x = use_val ? val_x : x;
  const Matrix& mon_gold = use_val ? val_gold : gold;
  auto monitor_loss = [&](const CategorizerModel& m) {
    return category_loss(mon_gold, predict_categories(m, mon_x).prob, m.pos_weight);
  };

  Rng rng(cfg.seed);
  CategorizerTrainResult result;
  result.model = model;
  double best = monitor_loss(model);
  std::size_t stale = 0;

  Matrix mw = Matrix::Zero(model.weights.rows(), model.weights.cols()), vw = mw;
  Vector mb = Vector::Zero(model.bias.size()), vb = mb;
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  std::uint64_t t = 0;
  std::vector<std::size_t> order(static_cast<std::size_t>(x.rows()));
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    shuffle(order, rng);
    double train_loss = 0.0;
    std::size_t steps = 0;
    for (std::size_t lo = 0; lo < order.size(); lo += cfg.batch_size) {
      const auto hi = std::min(order.size(), lo + cfg.batch_size);
      Matrix bx(static_cast<Eigen::Index>(hi - lo), x.cols());
      Matrix by(static_cast<Eigen::Index>(hi - lo), gold.cols());
      for (std::size_t r = lo; r < hi; ++r) {
        bx.row(static_cast<Eigen::Index>(r - lo)) = x.row(static_cast<Eigen::Index>(order[r]));
        by.row(static_cast<Eigen::Index>(r - lo)) = gold.row(static_cast<Eigen::Index>(order[r]));
      }
      Matrix dw;
      Vector db;
      train_loss += category_loss_and_gradient(model, bx, by, dw, db);
      ++steps;
      for (std::size_t c = 0; c < kNumCategories; ++c)
        if (!model.trained[c]) dw.row(static_cast<Eigen::Index>(c)).setZero(), db[static_cast<Eigen::Index>(c)] = 0.0;
      ++t;
      const double c1 = 1.0 - std::pow(b1, static_cast<double>(t)), c2 = 1.0 - std::pow(b2, static_cast<double>(t));
      mw = b1 * mw + (1.0 - b1) * dw;
      vw = b2 * vw + (1.0 - b2) * dw.cwiseProduct(dw);
      mb = b1 * mb + (1.0 - b1) * db;
      vb = b2 * vb + (1.0 - b2) * db.cwiseProduct(db);
      model.weights.array() -= cfg.learning_rate * (mw.array() / c1) / ((vw.array() / c2).sqrt() + eps);
      model.bias.array() -= cfg.learning_rate * (mb.array() / c1) / ((vb.array() / c2).sqrt() + eps);
    }
    const double val = monitor_loss(model);
    if (!std::isfinite(val)) throw NumericalError("non-finite categorizer loss");
    result.log.emplace_back(train_loss / static_cast<double>(std::max<std::size_t>(steps, 1)), val);
    result.epochs_run = epoch;
    if (val < best) {
      best = val;
      result.model = model;
      stale = 0;
    } else if (++stale >= std::max<std::size_t>(cfg.patience, 1)) {
      break;
    }
  }
  return result;
}

inline Matrix category_matrix(const Corpus& corpus) {
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(corpus.size()), static_cast<Eigen::Index>(kNumCategories));
  for (std::size_t i = 0; i < corpus.size(); ++i)
    if (const auto& g = corpus.tweets[i].gold_categories)
      for (std::size_t c = 0; c < kNumCategories; ++c) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = (*g)[c];
  return m;
}

// A tweet proceeds to embedding iff one of the five security labels is set.
inline std::vector<std::size_t> security_gate(const std::vector<CategorySet>& labels) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (has_security_label(labels[i])) keep.push_back(i);
  return keep;
}

// ---------------------------------------------------------------------------
// Model file: one JSON header line, then "TWZC", u32 rows (7), u32 cols,
// f32 weights row-major, f32 bias.

inline std::string serialize_categorizer(const CategorizerModel& m) {
  OrderedJson header;
  header["dims"] = {m.weights.rows(), m.weights.cols()};
  header["labels"] = std::vector<std::string>(kCategoryNames.begin(), kCategoryNames.end());
  header["threshold"] = m.threshold;
  header["pos_weight"] = m.pos_weight;
  header["trained"] = m.trained;
  std::string out = header.dump() + '\n';
  out += "TWZC";
  put_u32(out, static_cast<std::uint32_t>(m.weights.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.weights.cols()));
  for (Eigen::Index i = 0; i < m.weights.size(); ++i) put_f32(out, static_cast<float>(m.weights.data()[i]));
  for (Eigen::Index i = 0; i < m.bias.size(); ++i) put_f32(out, static_cast<float>(m.bias[i]));
  return out;
}

inline CategorizerModel parse_categorizer(std::string_view bytes) {
  const auto nl = bytes.find('\n');
  if (nl == std::string_view::npos) throw DataError("categorizer model: missing JSON header");
  Json header;
  double threshold = 0.5;
  PosWeights pos_weight;
  std::array<bool, kNumCategories> trained{};
  try {
    header = Json::parse(bytes.substr(0, nl));
    const auto labels = header.at("labels").get<std::vector<std::string>>();
    if (labels != std::vector<std::string>(kCategoryNames.begin(), kCategoryNames.end()))
      throw DataError("categorizer model: unexpected label set");
    threshold = header.at("threshold").get<double>();
    pos_weight = header.at("pos_weight").get<PosWeights>();
    trained = header.at("trained").get<std::array<bool, kNumCategories>>();
  } catch (const Json::exception& e) {
    throw DataError(std::string("categorizer model header: ") + e.what());
  }
  ByteReader in(bytes.substr(nl + 1));
  if (in.bytes(4) != "TWZC") throw DataError("categorizer model: bad magic (expected TWZC)");
  const auto rows = in.u32();
  const auto cols = in.u32();
  if (rows != kNumCategories) throw DataError("categorizer model: expected 7 heads");
  auto m = CategorizerModel::zeros(cols);
  for (Eigen::Index i = 0; i < m.weights.size(); ++i) m.weights.data()[i] = static_cast<double>(in.f32());
  for (Eigen::Index i = 0; i < m.bias.size(); ++i) m.bias[i] = static_cast<double>(in.f32());
  if (!in.at_end()) throw DataError("categorizer model: trailing bytes");
  m.threshold = threshold;
  m.pos_weight = pos_weight;
  m.trained = trained;
  return m;
}

}  // namespace secevent

#endif  // SECEVENT_CATEGORIZER_HPP_
