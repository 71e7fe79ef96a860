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

#include "train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include <nlohmann/json.hpp>

#include "errors.hpp"
#include "json_util.hpp"
#include "text_io.hpp"

namespace mialab {

void TrainConfig::Validate() const {
  if (epochs == 0) throw ParameterError("train: epochs must be positive");
  if (batch_size == 0) throw ParameterError("train: batch_size must be positive");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ParameterError("train: learning_rate must be positive");
  }
  if (!(l2_coeff >= 0.0)) throw ParameterError("train: l2_coeff must be >= 0");
  if (!(dropout_keep > 0.0 && dropout_keep <= 1.0)) {
    throw ParameterError("train: dropout_keep must lie in (0, 1]");
  }
  if (!(mixup_alpha >= 0.0)) throw ParameterError("train: mixup_alpha must be >= 0");
  if (!(mmd_weight >= 0.0)) throw ParameterError("train: mmd_weight must be >= 0");
  if (dp_clip_norm && !(*dp_clip_norm > 0.0)) {
    throw ParameterError("train: dp_clip_norm must be positive");
  }
  if (!(dp_noise_scale >= 0.0)) {
    throw ParameterError("train: dp_noise_scale must be >= 0");
  }
  if (dp_clip_norm && mmd_weight > 0.0) {
    throw ParameterError("train: DP-SGD cannot be combined with the MMD regularizer");
  }
  for (std::size_t w : hidden_layers) {
    if (w == 0) throw ParameterError("train: hidden layer width must be positive");
  }
  for (const auto& m : lr_schedule) {
    if (!(m.multiplier > 0.0)) {
      throw ParameterError("train: schedule multipliers must be positive");
    }
  }
}

double TrainConfig::LearningRateAt(std::size_t epoch) const {
  double lr = learning_rate;
  for (const auto& m : lr_schedule) {
    if (epoch >= m.epoch) lr *= m.multiplier;
  }
  return lr;
}

void MmdConfig::Validate() const {
  if (bandwidth_multipliers.empty()) {
    throw ParameterError("mmd: bandwidth multipliers must be non-empty");
  }
  for (double m : bandwidth_multipliers) {
    if (!(m > 0.0)) throw ParameterError("mmd: multipliers must be positive");
  }
  if (rule == BandwidthRule::kFixed && !(bandwidth_base > 0.0)) {
    throw ParameterError("mmd: bandwidth base must be positive");
  }
}

nlohmann::json TrainConfigToJson(const TrainConfig& c) {
  nlohmann::json j;
  j["hidden_layers"] = c.hidden_layers;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  nlohmann::json schedule = nlohmann::json::array();
  for (const auto& m : c.lr_schedule) {
    schedule.push_back({m.epoch, m.multiplier});
  }
  j["lr_schedule"] = schedule;
  j["l2_coeff"] = c.l2_coeff;
  j["dropout_keep"] = c.dropout_keep;
  j["mixup_alpha"] = c.mixup_alpha;
  j["mmd_weight"] = c.mmd_weight;
  j["dp_clip_norm"] = c.dp_clip_norm ? nlohmann::json(*c.dp_clip_norm)
                                     : nlohmann::json(nullptr);
  j["dp_noise_scale"] = c.dp_noise_scale;
  j["seed"] = c.seed;
  return j;
}

TrainConfig TrainConfigFromJson(const nlohmann::json& j,
                                const TrainConfig& defaults) {
  CheckKnownKeys(j,
                 {"hidden_layers", "epochs", "batch_size", "learning_rate",
                  "lr_schedule", "l2_coeff", "dropout_keep", "mixup_alpha",
                  "mmd_weight", "dp_clip_norm", "dp_noise_scale", "seed"},
                 "train config");
  TrainConfig c = defaults;
  try {
    c.hidden_layers = j.value("hidden_layers", c.hidden_layers);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    if (j.contains("lr_schedule")) {
      c.lr_schedule.clear();
      for (const auto& m : j.at("lr_schedule")) {
        c.lr_schedule.push_back(
            {m.at(0).get<std::size_t>(), m.at(1).get<double>()});
      }
    }
    c.l2_coeff = j.value("l2_coeff", c.l2_coeff);
    c.dropout_keep = j.value("dropout_keep", c.dropout_keep);
    c.mixup_alpha = j.value("mixup_alpha", c.mixup_alpha);
    c.mmd_weight = j.value("mmd_weight", c.mmd_weight);
    if (j.contains("dp_clip_norm")) {
      if (j.at("dp_clip_norm").is_null()) {
        c.dp_clip_norm.reset();
      } else {
        c.dp_clip_norm = j.at("dp_clip_norm").get<double>();
      }
    }
    c.dp_noise_scale = j.value("dp_noise_scale", c.dp_noise_scale);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  return c;
}

nlohmann::json MmdConfigToJson(const MmdConfig& c) {
  nlohmann::json j;
  switch (c.rule) {
    case BandwidthRule::kFixed:
      j["bandwidth_base"] = c.bandwidth_base;
      break;
    case BandwidthRule::kMedian:
      j["bandwidth_base"] = "median-heuristic";
      break;
    case BandwidthRule::kMean:
      j["bandwidth_base"] = "mean-heuristic";
      break;
  }
  j["bandwidth_multipliers"] = c.bandwidth_multipliers;
  j["estimator"] = "biased-squared";
  return j;
}

MmdConfig MmdConfigFromJson(const nlohmann::json& j) {
  CheckKnownKeys(j, {"bandwidth_base", "bandwidth_multipliers", "estimator"},
                 "mmd config");
  MmdConfig c;
  try {
    if (j.contains("bandwidth_base")) {
      const auto& b = j.at("bandwidth_base");
      if (b.is_number()) {
        c.rule = BandwidthRule::kFixed;
        c.bandwidth_base = b.get<double>();
      } else if (b == "median-heuristic") {
        c.rule = BandwidthRule::kMedian;
      } else if (b == "mean-heuristic") {
        c.rule = BandwidthRule::kMean;
      } else {
        throw ConfigError("mmd config: bandwidth_base must be a number, "
                          "\"median-heuristic\" or \"mean-heuristic\"");
      }
    }
    c.bandwidth_multipliers =
        j.value("bandwidth_multipliers", c.bandwidth_multipliers);
    if (j.value("estimator", std::string("biased-squared")) != "biased-squared") {
      throw ConfigError("mmd config: only the biased-squared estimator exists");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("mmd config: ") + e.what());
  }
  return c;
}

// --- mix-up ---------------------------------------------------------------

LabeledBatch MixupWith(const LabeledBatch& batch,
                       std::span<const std::size_t> partners,
                       std::span<const double> lambdas) {
  const auto n = static_cast<std::size_t>(batch.inputs.cols());
  if (partners.size() != n || lambdas.size() != n ||
      static_cast<std::size_t>(batch.labels.cols()) != n) {
    throw ShapeError("mixup: partner/lambda count must equal batch size");
  }
  LabeledBatch out{Eigen::MatrixXd(batch.inputs.rows(), batch.inputs.cols()),
                   Eigen::MatrixXd(batch.labels.rows(), batch.labels.cols())};
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const auto jj = static_cast<Eigen::Index>(partners[i]);
    if (partners[i] >= n) throw ShapeError("mixup: partner out of range");
    const double lambda = lambdas[i];
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
      throw ParameterError("mixup: lambda must lie in [0, 1]");
    }
    out.inputs.col(ii) =
        lambda * batch.inputs.col(ii) + (1.0 - lambda) * batch.inputs.col(jj);
    out.labels.col(ii) =
        lambda * batch.labels.col(ii) + (1.0 - lambda) * batch.labels.col(jj);
  }
  return out;
}

LabeledBatch MixupBatch(const LabeledBatch& batch, double alpha, Rng& rng) {
  if (!(alpha > 0.0)) throw ParameterError("mixup: alpha must be positive");
  const auto n = static_cast<std::size_t>(batch.inputs.cols());
  if (n < 2) throw ParameterError("mixup: batch needs at least two instances");
  std::vector<std::size_t> partners(n);
  std::iota(partners.begin(), partners.end(), std::size_t{0});
  rng.Shuffle(std::span<std::size_t>(partners));
  std::vector<double> lambdas(n);
  for (double& l : lambdas) l = rng.Beta(alpha, alpha);
  return MixupWith(batch, partners, lambdas);
}

// --- MMD ------------------------------------------------------------------

namespace {

Eigen::MatrixXd SquaredDistances(const Eigen::MatrixXd& a,
                                 const Eigen::MatrixXd& b) {
  Eigen::MatrixXd d(a.cols(), b.cols());
  for (Eigen::Index i = 0; i < a.cols(); ++i) {
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
      d(i, j) = (a.col(i) - b.col(j)).squaredNorm();
    }
  }
  return d;
}

// Kernel sum and the derivative weights sum_m k_m / s_m^2.
struct KernelParts {
  Eigen::MatrixXd value;
  Eigen::MatrixXd slope;
};

KernelParts KernelFromDistances(const Eigen::MatrixXd& sq, double base,
                                std::span<const double> multipliers) {
  KernelParts k{Eigen::MatrixXd::Zero(sq.rows(), sq.cols()),
                Eigen::MatrixXd::Zero(sq.rows(), sq.cols())};
  for (double m : multipliers) {
    const double s2 = (m * base) * (m * base);
    Eigen::MatrixXd e = (-sq.array() / (2.0 * s2)).exp().matrix();
    k.value += e;
    k.slope += e / s2;
  }
  return k;
}

double HeuristicBandwidth(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                          BandwidthRule rule) {
  Eigen::MatrixXd all(a.rows(), a.cols() + b.cols());
  all << a, b;
  std::vector<double> sq;
  for (Eigen::Index i = 0; i < all.cols(); ++i) {
    for (Eigen::Index j = i + 1; j < all.cols(); ++j) {
      sq.push_back((all.col(i) - all.col(j)).squaredNorm());
    }
  }
  if (sq.empty()) return 1.0;
  double stat = 0.0;
  if (rule == BandwidthRule::kMean) {
    stat = std::accumulate(sq.begin(), sq.end(), 0.0) /
           static_cast<double>(sq.size());
  } else {
    std::sort(sq.begin(), sq.end());
    const std::size_t mid = sq.size() / 2;
    stat = sq.size() % 2 == 1 ? sq[mid] : 0.5 * (sq[mid - 1] + sq[mid]);
  }
  if (!(stat > 0.0)) return 1.0;
  return std::sqrt(stat);
}

}  // namespace

double ResolveBandwidth(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                        const MmdConfig& config) {
  if (config.rule == BandwidthRule::kFixed) return config.bandwidth_base;
  return HeuristicBandwidth(a, b, config.rule);
}

Eigen::MatrixXd GaussianKernelMatrix(const Eigen::MatrixXd& a,
                                     const Eigen::MatrixXd& b,
                                     const MmdConfig& config) {
  config.Validate();
  if (a.cols() == 0 || b.cols() == 0) throw ParameterError("kernel: empty input");
  if (a.rows() != b.rows()) throw ShapeError("kernel: vector length mismatch");
  const double base = ResolveBandwidth(a, b, config);
  return KernelFromDistances(SquaredDistances(a, b), base,
                             config.bandwidth_multipliers)
      .value;
}

MmdValue MmdSquared(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                    const MmdConfig& config) {
  config.Validate();
  if (x.cols() == 0 || y.cols() == 0) throw ParameterError("mmd: empty sample");
  if (x.rows() != y.rows()) throw ShapeError("mmd: vector length mismatch");
  const double base = ResolveBandwidth(x, y, config);
  const auto& mult = config.bandwidth_multipliers;
  KernelParts kxx = KernelFromDistances(SquaredDistances(x, x), base, mult);
  KernelParts kxy = KernelFromDistances(SquaredDistances(x, y), base, mult);
  KernelParts kyy = KernelFromDistances(SquaredDistances(y, y), base, mult);
  const double n = static_cast<double>(x.cols());
  const double m = static_cast<double>(y.cols());

  MmdValue out;
  out.value = kxx.value.mean() - 2.0 * kxy.value.mean() + kyy.value.mean();

  // d k(a, b) / d a = -slope(a, b) * (a - b)
  Eigen::VectorXd row_xx = kxx.slope.rowwise().sum();
  Eigen::VectorXd row_xy = kxy.slope.rowwise().sum();
  Eigen::MatrixXd pull_xx = x * kxx.slope.transpose();
  Eigen::MatrixXd pull_xy = y * kxy.slope.transpose();
  Eigen::MatrixXd grad_xx = -(x * row_xx.asDiagonal() - pull_xx);
  Eigen::MatrixXd grad_xy = -(x * row_xy.asDiagonal() - pull_xy);
  out.grad_x = (2.0 / (n * n)) * grad_xx - (2.0 / (n * m)) * grad_xy;
  return out;
}

RegularizedLoss MmdRegularizedLoss(const MlpModel& model,
                                   std::span<const Instance> train_batch,
                                   std::span<const Instance> validation_batch,
                                   double mmd_weight, const MmdConfig& config,
                                   const std::vector<Eigen::MatrixXd>& train_masks,
                                   double l2_coeff) {
  if (train_batch.empty() || validation_batch.empty()) {
    throw ParameterError("mmd loss: both batches must be non-empty");
  }
  const std::size_t label = train_batch.front().label;
  for (const auto& inst : train_batch) {
    if (inst.label != label) {
      throw ParameterError("mmd loss: training batch mixes classes");
    }
  }
  for (const auto& inst : validation_batch) {
    if (inst.label != label) {
      throw ParameterError("mmd loss: validation batch class differs from training batch");
    }
  }
  const double n = static_cast<double>(train_batch.size());
  Eigen::MatrixXd labels = OneHotMatrix(train_batch, model.num_classes());
  BatchForward fwd = ForwardBatch(model, FeatureMatrix(train_batch), train_masks);

  RegularizedLoss out;
  for (Eigen::Index i = 0; i < fwd.probs.cols(); ++i) {
    out.cross_entropy -= std::log(std::max(
        fwd.probs(static_cast<Eigen::Index>(label), i), kProbabilityFloor));
  }
  out.cross_entropy /= n;
  Eigen::MatrixXd logit_grad = (fwd.probs - labels) / n;

  if (mmd_weight != 0.0) {
    Eigen::MatrixXd val_probs = PredictProbabilities(model, validation_batch);
    MmdValue mmd = MmdSquared(fwd.probs, val_probs, config);
    out.mmd = mmd.value;
    logit_grad += SoftmaxBackward(fwd.probs, mmd_weight * mmd.grad_x);
  } else {
    out.mmd = 0.0;
  }
  out.loss = out.cross_entropy + mmd_weight * out.mmd + L2Penalty(model, l2_coeff);
  out.gradient = Backpropagate(model, fwd, logit_grad);
  AddL2Gradient(model, l2_coeff, out.gradient);
  return out;
}

// --- DP-SGD ---------------------------------------------------------------

void ClipGradient(GradientSet& grad, double clip_norm) {
  if (!(clip_norm > 0.0)) throw ParameterError("clip: norm bound must be positive");
  const double norm = grad.Norm();
  if (norm > clip_norm) grad *= clip_norm / norm;
}

namespace {

void AddDpNoise(GradientSet& total, double clip_norm, double noise_scale,
                Rng& rng) {
  if (noise_scale == 0.0) return;
  const double stddev = noise_scale * clip_norm;
  if (!std::isfinite(stddev)) {
    throw ParameterError("dp-sgd: noise needs a finite clip norm");
  }
  for (auto& layer : total.layers) {
    for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
      for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
        layer.weights(r, c) += rng.Gaussian(0.0, stddev);
      }
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) {
      layer.bias(r) += rng.Gaussian(0.0, stddev);
    }
  }
}

void CheckDpParameters(double clip_norm, double noise_scale) {
  if (!(clip_norm > 0.0)) throw ParameterError("dp-sgd: clip norm must be positive");
  if (!(noise_scale >= 0.0)) throw ParameterError("dp-sgd: sigma must be >= 0");
}

}  // namespace

GradientSet DpSgdStep(MlpModel& model, std::span<const GradientSet> per_example,
                      double clip_norm, double noise_scale,
                      double learning_rate, Rng& rng) {
  if (per_example.empty()) throw ParameterError("dp-sgd: empty batch");
  CheckDpParameters(clip_norm, noise_scale);
  GradientSet total = GradientSet::ZerosLike(model);
  for (const GradientSet& g : per_example) {
    GradientSet clipped = g;
    ClipGradient(clipped, clip_norm);
    total += clipped;
  }
  AddDpNoise(total, clip_norm, noise_scale, rng);
  total *= 1.0 / static_cast<double>(per_example.size());
  ApplySgdUpdate(model, total, learning_rate);
  return total;
}

GradientSet DpSgdBatchStep(MlpModel& model, const BatchForward& fwd,
                           const Eigen::MatrixXd& logit_grad, double clip_norm,
                           double noise_scale, double learning_rate, Rng& rng) {
  if (logit_grad.cols() == 0) throw ParameterError("dp-sgd: empty batch");
  CheckDpParameters(clip_norm, noise_scale);
  Eigen::VectorXd norms = PerExampleGradientNorms(model, fwd, logit_grad);
  Eigen::VectorXd scale(norms.size());
  for (Eigen::Index i = 0; i < norms.size(); ++i) {
    scale(i) = norms(i) > clip_norm ? clip_norm / norms(i) : 1.0;
  }
  GradientSet total = Backpropagate(model, fwd, logit_grad * scale.asDiagonal());
  AddDpNoise(total, clip_norm, noise_scale, rng);
  total *= 1.0 / static_cast<double>(logit_grad.cols());
  ApplySgdUpdate(model, total, learning_rate);
  return total;
}

// --- training loop --------------------------------------------------------

namespace {

double AccuracyOn(const MlpModel& model, const Dataset& dataset,
                  std::span<const std::size_t> ids) {
  if (ids.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::vector<Instance> instances = dataset.Select(ids);
  Eigen::MatrixXd probs = PredictProbabilities(model, instances);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (ArgMax(probs.col(static_cast<Eigen::Index>(i))) == instances[i].label) {
      ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(instances.size());
}

// Validation ids grouped by class, for same-class MMD pairing.
std::vector<std::vector<std::size_t>> GroupByClass(
    const Dataset& dataset, std::span<const std::size_t> ids) {
  std::vector<std::vector<std::size_t>> groups(dataset.num_classes());
  for (std::size_t id : ids) groups[dataset[id].label].push_back(id);
  return groups;
}

// The per-class MMD penalty of one minibatch. Returns its value (averaged
// over participating classes) and accumulates weight * d/d(probs) into
// prob_grad.
double MinibatchMmd(const MlpModel& model, const Dataset& dataset,
                    std::span<const std::size_t> batch_ids,
                    const Eigen::MatrixXd& train_probs,
                    const std::vector<std::vector<std::size_t>>& validation_groups,
                    double weight, const MmdConfig& config, Rng& rng,
                    Eigen::MatrixXd& prob_grad) {
  std::map<std::size_t, std::vector<Eigen::Index>> columns_by_class;
  for (std::size_t i = 0; i < batch_ids.size(); ++i) {
    columns_by_class[dataset[batch_ids[i]].label].push_back(
        static_cast<Eigen::Index>(i));
  }
  // Draw the validation sub-batches first so one forward pass covers them.
  struct ClassPart {
    std::vector<Eigen::Index> train_cols;
    std::size_t val_offset;
    std::size_t val_count;
  };
  std::vector<ClassPart> parts;
  std::vector<std::size_t> val_ids;
  for (auto& [label, cols] : columns_by_class) {
    const auto& pool = validation_groups[label];
    if (pool.empty()) continue;
    const std::size_t take = std::min(cols.size(), pool.size());
    std::vector<std::size_t> chosen = pool;
    // Partial Fisher-Yates: the first `take` slots become a uniform sample.
    for (std::size_t i = 0; i < take; ++i) {
      std::size_t j = i + rng.Index(chosen.size() - i);
      std::swap(chosen[i], chosen[j]);
    }
    parts.push_back({cols, val_ids.size(), take});
    val_ids.insert(val_ids.end(), chosen.begin(), chosen.begin() + take);
  }
  if (parts.empty()) return 0.0;

  std::vector<Instance> val_instances = dataset.Select(val_ids);
  Eigen::MatrixXd val_probs = PredictProbabilities(model, val_instances);
  // One bandwidth for the whole minibatch; class sub-batches are too small
  // to estimate it on their own.
  MmdConfig fixed = config;
  fixed.rule = BandwidthRule::kFixed;
  fixed.bandwidth_base = ResolveBandwidth(train_probs, val_probs, config);
  const double scale = weight / static_cast<double>(parts.size());
  double total = 0.0;
  for (const ClassPart& part : parts) {
    Eigen::MatrixXd x(train_probs.rows(),
                      static_cast<Eigen::Index>(part.train_cols.size()));
    for (std::size_t k = 0; k < part.train_cols.size(); ++k) {
      x.col(static_cast<Eigen::Index>(k)) = train_probs.col(part.train_cols[k]);
    }
    MmdValue mmd = MmdSquared(
        x,
        val_probs.middleCols(static_cast<Eigen::Index>(part.val_offset),
                             static_cast<Eigen::Index>(part.val_count)),
        fixed);
    total += mmd.value;
    for (std::size_t k = 0; k < part.train_cols.size(); ++k) {
      prob_grad.col(part.train_cols[k]) +=
          scale * mmd.grad_x.col(static_cast<Eigen::Index>(k));
    }
  }
  return total / static_cast<double>(parts.size());
}

}  // namespace

TrainResult TrainModel(const Dataset& dataset,
                       std::span<const std::size_t> train_ids,
                       std::span<const std::size_t> validation_ids,
                       const TrainConfig& config, const MmdConfig& mmd_config,
                       const TrainOptions& options) {
  config.Validate();
  if (train_ids.empty()) throw ParameterError("train: empty training set");
  if (config.mmd_enabled()) {
    mmd_config.Validate();
    if (validation_ids.empty()) {
      throw ParameterError("train: MMD enabled but no validation set given");
    }
  }

  std::vector<std::size_t> dims{dataset.dim()};
  dims.insert(dims.end(), config.hidden_layers.begin(), config.hidden_layers.end());
  dims.push_back(dataset.num_classes());
  MlpModel model = MlpModel::Create(dims, DeriveSeed(config.seed, 1));
  Rng rng(DeriveSeed(config.seed, 2));

  const auto validation_groups = config.mmd_enabled()
                                     ? GroupByClass(dataset, validation_ids)
                                     : std::vector<std::vector<std::size_t>>{};
  const bool use_dropout = config.dropout_keep < 1.0;
  const auto c = static_cast<Eigen::Index>(dataset.num_classes());

  std::vector<std::size_t> order(train_ids.begin(), train_ids.end());
  TrainResult result{model, {}};
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = config.LearningRateAt(epoch);
    rng.Shuffle(std::span<std::size_t>(order));
    double ce_sum = 0.0;
    double mmd_sum = 0.0;
    std::size_t steps = 0;

    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t len = std::min(config.batch_size, order.size() - start);
      std::span<const std::size_t> batch_ids(order.data() + start, len);
      std::vector<Instance> batch = dataset.Select(batch_ids);
      LabeledBatch clean{FeatureMatrix(batch), OneHotMatrix(batch, dataset.num_classes())};
      const double n = static_cast<double>(len);

      std::vector<Eigen::MatrixXd> masks;
      if (use_dropout) masks = SampleDropoutMasks(model, len, config.dropout_keep, rng);
      const bool mix = config.mixup_enabled() && len >= 2;
      LabeledBatch mixed = mix ? MixupBatch(clean, config.mixup_alpha, rng) : clean;

      BatchForward fwd = ForwardBatch(model, mixed.inputs, masks);
      for (Eigen::Index i = 0; i < fwd.probs.cols(); ++i) {
        for (Eigen::Index k = 0; k < c; ++k) {
          const double w = mixed.labels(k, i);
          if (w != 0.0) {
            ce_sum -= w * std::log(std::max(fwd.probs(k, i), kProbabilityFloor)) / n;
          }
        }
      }
      Eigen::MatrixXd ce_logit_grad = fwd.probs - mixed.labels;

      if (config.dp_enabled()) {
        GradientSet decay = GradientSet::ZerosLike(model);
        AddL2Gradient(model, config.l2_coeff, decay);
        DpSgdBatchStep(model, fwd, ce_logit_grad, *config.dp_clip_norm,
                       config.dp_noise_scale, lr, rng);
        ApplySgdUpdate(model, decay, lr);
      } else {
        GradientSet grad = Backpropagate(model, fwd, ce_logit_grad / n);
        if (config.mmd_enabled()) {
          // The penalty compares member outputs, so it uses the unmixed batch.
          BatchForward clean_fwd =
              mix ? ForwardBatch(model, clean.inputs, masks) : fwd;
          Eigen::MatrixXd prob_grad =
              Eigen::MatrixXd::Zero(c, static_cast<Eigen::Index>(len));
          mmd_sum += MinibatchMmd(model, dataset, batch_ids, clean_fwd.probs,
                                  validation_groups, config.mmd_weight,
                                  mmd_config, rng, prob_grad);
          grad += Backpropagate(model, clean_fwd,
                                SoftmaxBackward(clean_fwd.probs, prob_grad));
        }
        AddL2Gradient(model, config.l2_coeff, grad);
        ApplySgdUpdate(model, grad, lr);
      }
      ++steps;
    }
    if (!model.AllFinite()) {
      throw NumericError("train: parameters diverged at epoch " +
                         std::to_string(epoch));
    }
    if (options.record_history) {
      EpochRecord rec;
      rec.epoch = epoch;
      rec.train_acc = AccuracyOn(model, dataset, train_ids);
      rec.eval_acc = AccuracyOn(model, dataset, options.monitor_ids);
      rec.mean_ce = ce_sum / static_cast<double>(steps);
      rec.mean_mmd = mmd_sum / static_cast<double>(steps);
      result.history.push_back(rec);
    }
  }
  result.model = std::move(model);
  return result;
}

std::string HistoryToCsv(std::span<const EpochRecord> history) {
  std::string out = "epoch,train_acc,eval_acc,mean_ce,mean_mmd\n";
  for (const auto& r : history) {
    out += std::to_string(r.epoch) + "," + FormatDouble(r.train_acc) + "," +
           FormatDouble(r.eval_acc) + "," + FormatDouble(r.mean_ce) + "," +
           FormatDouble(r.mean_mmd) + "\n";
  }
  return out;
}

}  // namespace mialab
