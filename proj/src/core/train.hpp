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

#ifndef MIALAB_CORE_TRAIN_HPP_
#define MIALAB_CORE_TRAIN_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "dataset.hpp"
#include "model.hpp"
#include "rng.hpp"

namespace mialab {

struct LrMilestone {
  std::size_t epoch = 0;    // zero-based; applies from this epoch onwards
  double multiplier = 0.1;

  friend bool operator==(const LrMilestone&, const LrMilestone&) = default;
};

struct TrainConfig {
  std::vector<std::size_t> hidden_layers{256, 128};
  std::size_t epochs = 50;
  std::size_t batch_size = 64;
  double learning_rate = 0.1;
  std::vector<LrMilestone> lr_schedule;
  double l2_coeff = 0.0;
  double dropout_keep = 1.0;
  double mixup_alpha = 0.0;  // 0 disables mix-up
  double mmd_weight = 0.0;   // 0 disables the MMD regularizer
  std::optional<double> dp_clip_norm;  // set to enable DP-SGD
  double dp_noise_scale = 0.0;
  std::uint64_t seed = 0;

  void Validate() const;
  double LearningRateAt(std::size_t epoch) const;
  bool mixup_enabled() const { return mixup_alpha > 0.0; }
  bool mmd_enabled() const { return mmd_weight > 0.0; }
  bool dp_enabled() const { return dp_clip_norm.has_value(); }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

enum class BandwidthRule {
  kFixed,   // MmdConfig::bandwidth_base
  kMedian,  // h^2 = median pairwise squared distance
  kMean,    // h^2 = mean pairwise squared distance
};

struct MmdConfig {
  BandwidthRule rule = BandwidthRule::kMean;
  double bandwidth_base = 1.0;  // used by kFixed only
  std::vector<double> bandwidth_multipliers{0.25, 0.5, 1.0, 2.0, 4.0};

  void Validate() const;

  friend bool operator==(const MmdConfig&, const MmdConfig&) = default;
};

nlohmann::json TrainConfigToJson(const TrainConfig& config);
// Fields missing from `j` keep their value in `defaults`.
TrainConfig TrainConfigFromJson(const nlohmann::json& j,
                                const TrainConfig& defaults = {});
nlohmann::json MmdConfigToJson(const MmdConfig& config);
MmdConfig MmdConfigFromJson(const nlohmann::json& j);

// --- mix-up ---------------------------------------------------------------

struct LabeledBatch {
  Eigen::MatrixXd inputs;  // d x n
  Eigen::MatrixXd labels;  // c x n, rows sum to one per column
};

// Convex combination of column i with column partners[i], weight lambdas[i].
LabeledBatch MixupWith(const LabeledBatch& batch,
                       std::span<const std::size_t> partners,
                       std::span<const double> lambdas);

// Partners come from a random permutation of the batch; one lambda ~
// Beta(alpha, alpha) per pair.
LabeledBatch MixupBatch(const LabeledBatch& batch, double alpha, Rng& rng);

// --- MMD ------------------------------------------------------------------

// Base bandwidth h: the configured value, or the square root of the median
// (or mean) squared distance over distinct column pairs of [a b]. Falls back
// to 1 when that statistic is 0.
double ResolveBandwidth(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                        const MmdConfig& config);

// K(i, j) = sum_m exp(-|a_i - b_j|^2 / (2 (m h)^2)). Columns are vectors.
Eigen::MatrixXd GaussianKernelMatrix(const Eigen::MatrixXd& a,
                                     const Eigen::MatrixXd& b,
                                     const MmdConfig& config);

struct MmdValue {
  double value = 0.0;         // biased squared MMD
  Eigen::MatrixXd grad_x;     // d value / d x, same shape as x
};

// mean(K_xx) - 2 mean(K_xy) + mean(K_yy). The gradient is taken w.r.t. x only;
// y and the resolved bandwidth are held constant.
MmdValue MmdSquared(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                    const MmdConfig& config);

struct RegularizedLoss {
  double loss = 0.0;
  double cross_entropy = 0.0;
  double mmd = 0.0;
  GradientSet gradient;
};

// Cross-entropy of a single-class training batch plus
// mmd_weight * MMD^2(train softmax, validation softmax). Validation outputs are
// computed in inference mode and never receive gradient. `train_masks` are the
// dropout masks of the training pass (empty = none).
RegularizedLoss MmdRegularizedLoss(const MlpModel& model,
                                   std::span<const Instance> train_batch,
                                   std::span<const Instance> validation_batch,
                                   double mmd_weight, const MmdConfig& config,
                                   const std::vector<Eigen::MatrixXd>& train_masks = {},
                                   double l2_coeff = 0.0);

// --- DP-SGD ---------------------------------------------------------------

// Rescales by min(1, clip_norm / |g|) using the norm over all parameters.
void ClipGradient(GradientSet& grad, double clip_norm);

// Clips every example, sums, adds N(0, (sigma * C)^2) per coordinate, divides
// by the batch size, then takes an SGD step. clip_norm may be +infinity when
// sigma is 0. Returns the noisy averaged gradient that was applied.
GradientSet DpSgdStep(MlpModel& model,
                      std::span<const GradientSet> per_example,
                      double clip_norm, double noise_scale,
                      double learning_rate, Rng& rng);

// Same step computed from one batched pass: the clipped sum is the gradient
// of sum_i s_i loss_i with s_i = min(1, C / |g_i|). Draws noise in the same
// order as DpSgdStep, so both give the same update.
GradientSet DpSgdBatchStep(MlpModel& model, const BatchForward& fwd,
                           const Eigen::MatrixXd& logit_grad, double clip_norm,
                           double noise_scale, double learning_rate, Rng& rng);

// --- training loop --------------------------------------------------------

struct EpochRecord {
  std::size_t epoch = 0;
  double train_acc = 0.0;
  double eval_acc = 0.0;   // NaN when no monitor set was given
  double mean_ce = 0.0;
  double mean_mmd = 0.0;
};

struct TrainOptions {
  std::span<const std::size_t> monitor_ids;  // accuracy proxy for a_E
  bool record_history = true;
};

struct TrainResult {
  MlpModel model;
  std::vector<EpochRecord> history;
};

// Shuffled minibatch SGD over `train_ids`. With MMD enabled each step groups
// the (unmixed) minibatch by label and pairs every class sub-batch with an
// equal-size same-class sample from `validation_ids`; the class penalties are
// averaged. Model init uses DeriveSeed(seed, 1), the step stream
// DeriveSeed(seed, 2).
TrainResult TrainModel(const Dataset& dataset,
                       std::span<const std::size_t> train_ids,
                       std::span<const std::size_t> validation_ids,
                       const TrainConfig& config, const MmdConfig& mmd_config,
                       const TrainOptions& options = {});

std::string HistoryToCsv(std::span<const EpochRecord> history);

}  // namespace mialab

#endif  // MIALAB_CORE_TRAIN_HPP_
