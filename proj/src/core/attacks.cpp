/*
 * Copyright 2026 The mialab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "attacks.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

#include <nlohmann/json.hpp>

#include "errors.hpp"
#include "text_io.hpp"

namespace mialab {

std::vector<std::size_t> ProbabilityOracle::Labels(
    std::span<const Instance> queries) const {
  Eigen::MatrixXd probs = Probabilities(queries);
  std::vector<std::size_t> out(static_cast<std::size_t>(probs.cols()));
  for (Eigen::Index i = 0; i < probs.cols(); ++i) {
    out[static_cast<std::size_t>(i)] = ArgMax(probs.col(i));
  }
  return out;
}

Eigen::MatrixXd ModelOracle::Probabilities(std::span<const Instance> queries) const {
  return PredictProbabilities(*model_, queries);
}

// --- shadow models --------------------------------------------------------

void ShadowEnsemble::Validate() const {
  if (models.empty()) throw ParameterError("shadows: ensemble is empty");
  if (bitmaps.size() != models.size() || eval_probs.size() != models.size()) {
    throw InvariantError("shadows: models, bitmaps and outputs differ in count");
  }
  for (std::size_t s = 0; s < models.size(); ++s) {
    if (bitmaps[s].size() != eval_instances.size() ||
        static_cast<std::size_t>(eval_probs[s].cols()) != eval_instances.size()) {
      throw InvariantError("shadows: bitmap or output length differs from |D_E|");
    }
    if (bitmaps[s].count() * 2 != bitmaps[s].size()) {
      throw InvariantError("shadows: every bitmap must flag half of D_E");
    }
  }
}

ShadowEnsemble TrainShadowEnsemble(const Dataset& dataset, const SplitPlan& plan,
                                   const TrainConfig& config,
                                   const MmdConfig& mmd_config,
                                   const ShadowOptions& options,
                                   std::uint64_t seed) {
  if (options.count == 0) throw ParameterError("shadows: need at least one");
  const std::size_t train_size =
      options.train_size == 0 ? plan.eval_ids.size() / 2 : options.train_size;
  const std::size_t k = options.count;

  ShadowEnsemble ens;
  ens.eval_instances = dataset.Select(plan.eval_ids);
  std::vector<std::optional<MlpModel>> models(k);
  ens.bitmaps.resize(k);
  ens.eval_probs.resize(k);

  // Samples are drawn up front so pool exhaustion fails before any training.
  std::vector<TrainingSample> samples;
  samples.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    samples.push_back(SampleTrainingSet(plan, Pool::kHoldout, train_size,
                                        DeriveSeed(seed, 2 * i + 1),
                                        options.validation_ids));
  }

  auto train_one = [&](std::size_t i) {
    TrainConfig cfg = config;
    cfg.seed = DeriveSeed(seed, 2 * i + 2);
    TrainOptions topts;
    topts.record_history = false;
    TrainResult r = TrainModel(dataset, samples[i].indices, options.validation_ids,
                               cfg, mmd_config, topts);
    ens.eval_probs[i] = PredictProbabilities(r.model, ens.eval_instances);
    ens.bitmaps[i] = samples[i].bitmap;
    models[i].emplace(std::move(r.model));
  };

  const std::size_t threads = std::max<std::size_t>(1, std::min(options.threads, k));
  if (threads == 1) {
    for (std::size_t i = 0; i < k; ++i) train_one(i);
  } else {
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t i = t; i < k; i += threads) train_one(i);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  ens.models.reserve(k);
  for (auto& m : models) ens.models.push_back(std::move(*m));
  return ens;
}

// --- attack classifiers ---------------------------------------------------

namespace {

MlpModel FitLogistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                     const AttackClassifierConfig& config) {
  const Eigen::Index f = x.rows();
  const Eigen::Index n = x.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  Eigen::MatrixXd xa(f + 1, n);
  xa.topRows(f) = x;
  xa.row(f).setOnes();
  Eigen::VectorXd w = Eigen::VectorXd::Zero(f + 1);
  Eigen::VectorXd reg = Eigen::VectorXd::Constant(f + 1, config.l2_coeff);
  reg(f) = 1e-10;  // bias: only enough to keep the Hessian invertible

  auto objective = [&](const Eigen::VectorXd& v) {
    Eigen::ArrayXd z = (v.transpose() * xa).transpose().array();
    // log(1 + e^z) - y z, written to avoid overflow
    Eigen::ArrayXd softplus =
        z.max(0.0) + (-z.abs()).exp().log1p();
    return inv_n * (softplus - y.array() * z).sum() +
           0.5 * (reg.array() * v.array().square()).sum();
  };

  double current = objective(w);
  for (std::size_t it = 0; it < config.max_iterations; ++it) {
    Eigen::ArrayXd z = (w.transpose() * xa).transpose().array();
    Eigen::ArrayXd p = 1.0 / (1.0 + (-z).exp());
    Eigen::VectorXd grad =
        inv_n * (xa * (p - y.array()).matrix()) + (reg.array() * w.array()).matrix();
    Eigen::ArrayXd s = p * (1.0 - p);
    Eigen::MatrixXd hess = inv_n * (xa * s.matrix().asDiagonal() * xa.transpose());
    hess.diagonal() += reg;
    Eigen::VectorXd step = hess.ldlt().solve(grad);
    double t = 1.0;
    double next = objective(w - step);
    while (!(next <= current) && t > 1e-8) {
      t *= 0.5;
      next = objective(w - t * step);
    }
    if (!(next <= current)) break;
    w -= t * step;
    const double gain = current - next;
    current = next;
    if (gain < 1e-12 * (1.0 + std::abs(current))) break;
  }

  LayerParams layer{Eigen::MatrixXd::Zero(2, f), Eigen::VectorXd::Zero(2)};
  layer.weights.row(1) = w.head(f).transpose();
  layer.bias(1) = w(f);
  return MlpModel({static_cast<std::size_t>(f), 2}, {std::move(layer)});
}

MlpModel FitHidden(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                   const AttackClassifierConfig& config) {
  MlpModel model = MlpModel::Create(
      {static_cast<std::size_t>(x.rows()), config.hidden, 2}, config.seed);
  Rng rng(DeriveSeed(config.seed, 1));
  const auto n = static_cast<std::size_t>(x.cols());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batch = 64;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.Shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t len = std::min(batch, n - start);
      Eigen::MatrixXd inputs(x.rows(), static_cast<Eigen::Index>(len));
      Eigen::MatrixXd labels = Eigen::MatrixXd::Zero(2, static_cast<Eigen::Index>(len));
      for (std::size_t j = 0; j < len; ++j) {
        const auto col = static_cast<Eigen::Index>(order[start + j]);
        inputs.col(static_cast<Eigen::Index>(j)) = x.col(col);
        labels(y(col) > 0.5 ? 1 : 0, static_cast<Eigen::Index>(j)) = 1.0;
      }
      LossAndGradient lg = Backward(model, inputs, labels, {}, config.l2_coeff);
      ApplySgdUpdate(model, lg.gradient, config.learning_rate);
    }
  }
  return model;
}

}  // namespace

MlpModel TrainAttackClassifier(const Eigen::MatrixXd& features,
                               const std::vector<bool>& is_member,
                               const AttackClassifierConfig& config) {
  if (features.cols() == 0) throw ParameterError("attack classifier: no data");
  if (static_cast<std::size_t>(features.cols()) != is_member.size()) {
    throw ShapeError("attack classifier: label count differs from data");
  }
  if (!(config.l2_coeff >= 0.0)) {
    throw ParameterError("attack classifier: l2_coeff must be >= 0");
  }
  Eigen::VectorXd y(features.cols());
  for (std::size_t i = 0; i < is_member.size(); ++i) {
    y(static_cast<Eigen::Index>(i)) = is_member[i] ? 1.0 : 0.0;
  }
  return config.hidden == 0 ? FitLogistic(features, y, config)
                            : FitHidden(features, y, config);
}

Eigen::VectorXd MemberProbability(const MlpModel& classifier,
                                  const Eigen::MatrixXd& features) {
  if (classifier.num_classes() != 2) {
    throw ShapeError("attack classifier: output width must be 2");
  }
  BatchForward fwd = ForwardBatch(classifier, features);
  return fwd.probs.row(1).transpose();
}

// --- helpers --------------------------------------------------------------

AttackResult ScoreAttack(std::string name, std::vector<bool> predictions,
                         const BalancedEvalSet& eval_set) {
  if (predictions.size() != eval_set.size()) {
    throw ShapeError("score: prediction count differs from eval set size");
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i] == eval_set.membership()[i]) ++correct;
  }
  AttackResult r;
  r.attack_name = std::move(name);
  r.predictions = std::move(predictions);
  r.accuracy = static_cast<double>(correct) / static_cast<double>(eval_set.size());
  r.advantage = r.accuracy - 0.5;
  return r;
}

double BalancedAccuracy(std::span<const double> scores,
                        const std::vector<bool>& is_member, double threshold) {
  if (scores.size() != is_member.size()) {
    throw ShapeError("threshold: score and label counts differ");
  }
  std::size_t pos = 0, neg = 0, tp = 0, tn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    if (is_member[i]) {
      ++pos;
      if (pred) ++tp;
    } else {
      ++neg;
      if (!pred) ++tn;
    }
  }
  if (pos == 0 || neg == 0) {
    throw ParameterError("threshold: need both members and non-members");
  }
  return 0.5 * (static_cast<double>(tp) / static_cast<double>(pos) +
                static_cast<double>(tn) / static_cast<double>(neg));
}

ThresholdModel BestThreshold(std::span<const double> scores,
                             const std::vector<bool>& is_member) {
  if (scores.size() != is_member.size()) {
    throw ShapeError("threshold: score and label counts differ");
  }
  if (scores.empty()) throw ParameterError("threshold: no scores");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });
  std::size_t pos = 0;
  for (bool m : is_member) pos += m ? 1 : 0;
  const std::size_t neg = scores.size() - pos;
  if (pos == 0 || neg == 0) {
    throw ParameterError("threshold: need both members and non-members");
  }
  for (double s : scores) {
    if (std::isnan(s)) throw NumericError("threshold: NaN score");
  }

  // Walking up the sorted scores, `below_*` counts what falls under the
  // candidate threshold, i.e. what is predicted non-member.
  std::size_t below_pos = 0, below_neg = 0;
  double best_acc = -1.0;
  double best_t = scores[order.front()];
  std::size_t i = 0;
  while (i < order.size()) {
    const double t = scores[order[i]];
    const double acc =
        0.5 * (static_cast<double>(pos - below_pos) / static_cast<double>(pos) +
               static_cast<double>(below_neg) / static_cast<double>(neg));
    if (acc > best_acc) {
      best_acc = acc;
      best_t = t;
    }
    while (i < order.size() && scores[order[i]] == t) {
      if (is_member[order[i]]) {
        ++below_pos;
      } else {
        ++below_neg;
      }
      ++i;
    }
  }
  return {best_t, true};
}

double KlDivergence(const ProbVector& p, const ProbVector& q) {
  if (p.size() != q.size()) throw ShapeError("kl: length mismatch");
  double sum = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    if (p[j] > 0.0) {
      sum += p[j] * (std::log(p[j]) - std::log(std::max(q[j], kProbabilityFloor)));
    }
  }
  return sum;
}

Eigen::MatrixXd TopValues(const Eigen::MatrixXd& probs, std::size_t k) {
  const auto rows = static_cast<std::size_t>(probs.rows());
  if (k == 0 || k > rows) throw ParameterError("top values: k out of range");
  Eigen::MatrixXd out(static_cast<Eigen::Index>(k), probs.cols());
  std::vector<double> col(rows);
  for (Eigen::Index i = 0; i < probs.cols(); ++i) {
    for (std::size_t r = 0; r < rows; ++r) col[r] = probs(static_cast<Eigen::Index>(r), i);
    std::partial_sort(col.begin(), col.begin() + static_cast<std::ptrdiff_t>(k),
                      col.end(), std::greater<>());
    for (std::size_t r = 0; r < k; ++r) out(static_cast<Eigen::Index>(r), i) = col[r];
  }
  return out;
}

double TopPercentileThreshold(std::vector<double> scores, double percentile) {
  if (scores.empty()) throw ParameterError("percentile: no scores");
  if (!(percentile > 0.0 && percentile <= 100.0)) {
    throw ParameterError("percentile: must lie in (0, 100]");
  }
  std::sort(scores.begin(), scores.end());
  const double n = static_cast<double>(scores.size());
  auto idx = static_cast<std::size_t>(std::floor((1.0 - percentile / 100.0) * n));
  idx = std::min(idx, scores.size() - 1);
  return scores[idx];
}

namespace {

double TrueLabelProb(const Eigen::MatrixXd& probs, Eigen::Index col,
                     std::size_t label) {
  return probs(static_cast<Eigen::Index>(label), col);
}

double LossOf(double p) { return -std::log(std::max(p, kProbabilityFloor)); }

// Shadow outputs over D_E flattened into attack-training pairs.
struct ShadowPairs {
  Eigen::MatrixXd features;   // one column per (shadow, instance)
  std::vector<bool> is_member;
};

template <typename Featurize>
ShadowPairs CollectPairs(const ShadowEnsemble& ens, std::size_t dim,
                         Featurize&& featurize,
                         std::optional<std::size_t> only_class = std::nullopt) {
  std::vector<std::size_t> positions;
  for (std::size_t i = 0; i < ens.eval_instances.size(); ++i) {
    if (!only_class || ens.eval_instances[i].label == *only_class) positions.push_back(i);
  }
  ShadowPairs out;
  out.features.resize(static_cast<Eigen::Index>(dim),
                      static_cast<Eigen::Index>(positions.size() * ens.size()));
  out.is_member.reserve(positions.size() * ens.size());
  Eigen::Index col = 0;
  for (std::size_t s = 0; s < ens.size(); ++s) {
    for (std::size_t i : positions) {
      out.features.col(col++) = featurize(ens.eval_probs[s], static_cast<Eigen::Index>(i));
      out.is_member.push_back(ens.bitmaps[s][i]);
    }
  }
  return out;
}

std::size_t TopK(std::size_t num_classes) { return std::min<std::size_t>(3, num_classes); }

std::vector<bool> Thresholded(const Eigen::VectorXd& p) {
  std::vector<bool> out(static_cast<std::size_t>(p.size()));
  for (Eigen::Index i = 0; i < p.size(); ++i) out[static_cast<std::size_t>(i)] = p(i) >= 0.5;
  return out;
}

}  // namespace

// --- attacks --------------------------------------------------------------

std::vector<bool> BaselineAttack(const LabelOracle& target,
                                 std::span<const Instance> queries) {
  std::vector<std::size_t> labels = target.Labels(queries);
  std::vector<bool> out(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) out[i] = labels[i] == queries[i].label;
  return out;
}

double GlobalLossThreshold(const ShadowEnsemble& ens) {
  ens.Validate();
  double total = 0.0;
  for (std::size_t s = 0; s < ens.size(); ++s) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < ens.eval_instances.size(); ++i) {
      if (!ens.bitmaps[s][i]) continue;
      sum += LossOf(TrueLabelProb(ens.eval_probs[s], static_cast<Eigen::Index>(i),
                                  ens.eval_instances[i].label));
      ++count;
    }
    total += sum / static_cast<double>(count);
  }
  return total / static_cast<double>(ens.size());
}

std::vector<bool> GlobalLossAttack(const ProbabilityOracle& target,
                                   std::span<const Instance> queries,
                                   const ShadowEnsemble& ens) {
  const double threshold = GlobalLossThreshold(ens);
  Eigen::MatrixXd probs = target.Probabilities(queries);
  std::vector<bool> out(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    out[i] = LossOf(TrueLabelProb(probs, static_cast<Eigen::Index>(i), queries[i].label)) <
             threshold;
  }
  return out;
}

std::vector<bool> GlobalProbabilityAttack(const ProbabilityOracle& target,
                                          std::span<const Instance> queries,
                                          const ShadowEnsemble& ens) {
  ens.Validate();
  std::vector<double> scores;
  std::vector<bool> members;
  for (std::size_t s = 0; s < ens.size(); ++s) {
    for (std::size_t i = 0; i < ens.eval_instances.size(); ++i) {
      scores.push_back(TrueLabelProb(ens.eval_probs[s], static_cast<Eigen::Index>(i),
                                     ens.eval_instances[i].label));
      members.push_back(ens.bitmaps[s][i]);
    }
  }
  const ThresholdModel tm = BestThreshold(scores, members);
  Eigen::MatrixXd probs = target.Probabilities(queries);
  std::vector<bool> out(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    out[i] = TrueLabelProb(probs, static_cast<Eigen::Index>(i), queries[i].label) >=
             tm.threshold;
  }
  return out;
}

std::vector<bool> GlobalTopOneAttack(const ProbabilityOracle& target,
                                     std::span<const Instance> queries,
                                     const TopOneConfig& config) {
  if (queries.empty()) throw ParameterError("top-one: no queries");
  if (config.num_random_queries < 100) {
    throw ParameterError("top-one: need at least 100 random queries");
  }
  // Percentiles outside the explored 5..25 range still run.
  const std::size_t d = queries.front().features.size();
  std::vector<double> lo(queries.front().features), hi(queries.front().features);
  for (const Instance& q : queries) {
    for (std::size_t k = 0; k < d; ++k) {
      lo[k] = std::min(lo[k], q.features[k]);
      hi[k] = std::max(hi[k], q.features[k]);
    }
  }
  Rng rng(config.seed);
  std::vector<Instance> random(config.num_random_queries);
  for (Instance& r : random) {
    r.features.resize(d);
    for (std::size_t k = 0; k < d; ++k) r.features[k] = rng.Uniform(lo[k], hi[k]);
  }
  Eigen::MatrixXd rprobs = target.Probabilities(random);
  std::vector<double> top(random.size());
  for (Eigen::Index i = 0; i < rprobs.cols(); ++i) {
    top[static_cast<std::size_t>(i)] = rprobs.col(i).maxCoeff();
  }
  const double threshold = TopPercentileThreshold(std::move(top), config.percentile);
  Eigen::MatrixXd probs = target.Probabilities(queries);
  std::vector<bool> out(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    out[i] = probs.col(static_cast<Eigen::Index>(i)).maxCoeff() >= threshold;
  }
  return out;
}

std::vector<bool> GlobalTopThreeAttack(const ProbabilityOracle& target,
                                       std::span<const Instance> queries,
                                       const ShadowEnsemble& ens,
                                       const AttackClassifierConfig& config) {
  ens.Validate();
  const std::size_t c = static_cast<std::size_t>(ens.eval_probs.front().rows());
  const std::size_t k = TopK(c);
  ShadowPairs pairs = CollectPairs(ens, k, [k](const Eigen::MatrixXd& p, Eigen::Index i) {
    return Eigen::VectorXd(TopValues(p.col(i), k));
  });
  MlpModel clf = TrainAttackClassifier(pairs.features, pairs.is_member, config);
  return Thresholded(MemberProbability(clf, TopValues(target.Probabilities(queries), k)));
}

std::vector<bool> ClassVectorAttack(const ProbabilityOracle& target,
                                    std::span<const Instance> queries,
                                    const ShadowEnsemble& ens,
                                    const AttackClassifierConfig& config) {
  ens.Validate();
  const auto c = static_cast<std::size_t>(ens.eval_probs.front().rows());
  auto whole = [](const Eigen::MatrixXd& p, Eigen::Index i) {
    return Eigen::VectorXd(p.col(i));
  };
  std::vector<std::optional<MlpModel>> per_class(c);
  std::optional<MlpModel> global;
  for (std::size_t y = 0; y < c; ++y) {
    ShadowPairs pairs = CollectPairs(ens, c, whole, y);
    const auto members = std::count(pairs.is_member.begin(), pairs.is_member.end(), true);
    if (members == 0 || static_cast<std::size_t>(members) == pairs.is_member.size()) {
      continue;  // no usable training data: global fallback
    }
    AttackClassifierConfig cc = config;
    cc.seed = DeriveSeed(config.seed, y + 1);
    per_class[y].emplace(TrainAttackClassifier(pairs.features, pairs.is_member, cc));
  }

  Eigen::MatrixXd probs = target.Probabilities(queries);
  std::vector<bool> out(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const std::size_t y = queries[i].label;
    const MlpModel* clf = y < c && per_class[y] ? &*per_class[y] : nullptr;
    if (clf == nullptr) {
      if (!global) {
        ShadowPairs pairs = CollectPairs(ens, c, whole);
        global.emplace(TrainAttackClassifier(pairs.features, pairs.is_member, config));
      }
      clf = &*global;
    }
    Eigen::MatrixXd x = probs.col(static_cast<Eigen::Index>(i));
    out[i] = MemberProbability(*clf, x)(0) >= 0.5;
  }
  return out;
}

std::vector<bool> InstanceVectorAttack(const ProbabilityOracle& target,
                                       std::span<const Instance> queries,
                                       const ShadowEnsemble& ens) {
  ens.Validate();
  if (queries.size() != ens.eval_instances.size()) {
    throw ShapeError("instance-vector: queries must be the shadow ensemble's D_E");
  }
  for (std::size_t i = 0; i < queries.size(); ++i) {
    if (queries[i].label != ens.eval_instances[i].label ||
        queries[i].features != ens.eval_instances[i].features) {
      throw InvariantError("instance-vector: query order differs from D_E");
    }
  }
  Eigen::MatrixXd probs = target.Probabilities(queries);
  const Eigen::Index c = probs.rows();
  std::vector<bool> out(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    Eigen::VectorXd sum_in = Eigen::VectorXd::Zero(c);
    Eigen::VectorXd sum_out = Eigen::VectorXd::Zero(c);
    std::size_t n_in = 0, n_out = 0;
    for (std::size_t s = 0; s < ens.size(); ++s) {
      if (ens.bitmaps[s][i]) {
        sum_in += ens.eval_probs[s].col(col);
        ++n_in;
      } else {
        sum_out += ens.eval_probs[s].col(col);
        ++n_out;
      }
    }
    if (n_in < 2 || n_out < 2) {
      out[i] = ArgMax(probs.col(col)) == queries[i].label;
      continue;
    }
    ProbVector p(probs.col(col));
    ProbVector avg_in(sum_in / sum_in.sum());
    ProbVector avg_out(sum_out / sum_out.sum());
    out[i] = KlDivergence(p, avg_in) < KlDivergence(p, avg_out);
  }
  return out;
}

std::vector<AttackResult> RunAllAttacks(const ProbabilityOracle& target,
                                        const BalancedEvalSet& eval_set,
                                        const ShadowEnsemble& ensemble,
                                        const AttackSuiteConfig& config) {
  // Attacks see the queries only; membership is consulted in ScoreAttack.
  std::span<const Instance> queries = eval_set.queries();
  std::vector<AttackResult> results;
  auto run = [&](std::string_view name, auto&& attack) {
    try {
      results.push_back(ScoreAttack(std::string(name), attack(), eval_set));
    } catch (const std::exception& e) {
      AttackResult r;
      r.attack_name = std::string(name);
      r.accuracy = std::numeric_limits<double>::quiet_NaN();
      r.advantage = std::numeric_limits<double>::quiet_NaN();
      r.error = e.what();
      results.push_back(std::move(r));
    }
  };
  run(kAttackNames[0], [&] {
    if (!config.instance_vector) {
      throw ParameterError("instance-vector: not applicable to this eval set");
    }
    return InstanceVectorAttack(target, queries, ensemble);
  });
  run(kAttackNames[1], [&] {
    return ClassVectorAttack(target, queries, ensemble, config.classifier);
  });
  run(kAttackNames[2], [&] { return GlobalProbabilityAttack(target, queries, ensemble); });
  run(kAttackNames[3], [&] { return GlobalLossAttack(target, queries, ensemble); });
  run(kAttackNames[4], [&] {
    return GlobalTopThreeAttack(target, queries, ensemble, config.classifier);
  });
  run(kAttackNames[5], [&] { return GlobalTopOneAttack(target, queries, config.top_one); });
  run(kAttackNames[6], [&] { return BaselineAttack(target, queries); });
  return results;
}

std::string AttackResultsToCsv(std::span<const AttackResult> results) {
  std::string out = "attack,accuracy,advantage,n_eval\n";
  for (const auto& r : results) {
    out += r.attack_name + "," + FormatDouble(r.accuracy) + "," +
           FormatDouble(r.advantage) + "," + std::to_string(r.predictions.size()) + "\n";
  }
  return out;
}

std::string AttackResultsToJson(std::span<const AttackResult> results) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : results) {
    nlohmann::json j;
    j["attack"] = r.attack_name;
    j["accuracy"] = r.ok() ? nlohmann::json(r.accuracy) : nlohmann::json(nullptr);
    j["advantage"] = r.ok() ? nlohmann::json(r.advantage) : nlohmann::json(nullptr);
    j["n_eval"] = r.predictions.size();
    std::vector<int> preds(r.predictions.begin(), r.predictions.end());
    j["predictions"] = preds;
    if (!r.ok()) j["error"] = r.error;
    arr.push_back(std::move(j));
  }
  return arr.dump(1);
}

}  // namespace mialab
