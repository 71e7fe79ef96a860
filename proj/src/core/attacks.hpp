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

#ifndef MIALAB_CORE_ATTACKS_HPP_
#define MIALAB_CORE_ATTACKS_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "dataset.hpp"
#include "model.hpp"
#include "train.hpp"

namespace mialab {

// --- query access ---------------------------------------------------------

// Label-only access to a classifier.
class LabelOracle {
 public:
  virtual ~LabelOracle() = default;
  virtual std::vector<std::size_t> Labels(std::span<const Instance> queries) const = 0;
};

// Full probability-vector access; one column per query.
class ProbabilityOracle : public LabelOracle {
 public:
  virtual Eigen::MatrixXd Probabilities(std::span<const Instance> queries) const = 0;
  std::vector<std::size_t> Labels(std::span<const Instance> queries) const override;
};

class ModelOracle final : public ProbabilityOracle {
 public:
  explicit ModelOracle(const MlpModel& model) : model_(&model) {}
  Eigen::MatrixXd Probabilities(std::span<const Instance> queries) const override;

 private:
  const MlpModel* model_;
};

// --- shadow models --------------------------------------------------------

struct ShadowEnsemble {
  std::vector<MlpModel> models;
  std::vector<MembershipBitmap> bitmaps;      // over SplitPlan::eval_ids
  std::vector<Instance> eval_instances;       // D_E in plan order
  std::vector<Eigen::MatrixXd> eval_probs;    // per shadow, c x |D_E|

  std::size_t size() const { return models.size(); }
  void Validate() const;
};

struct ShadowOptions {
  std::size_t count = 50;
  std::size_t train_size = 0;           // 0: |D_E| / 2
  std::span<const std::size_t> validation_ids;  // needed when MMD is on
  std::size_t threads = 1;
};

// Shadow i trains on an independent half of D_E plus D_H fill, using the same
// recipe as the target. Its sample seed is DeriveSeed(seed, 2 i + 1) and its
// training seed DeriveSeed(seed, 2 i + 2).
ShadowEnsemble TrainShadowEnsemble(const Dataset& dataset, const SplitPlan& plan,
                                   const TrainConfig& config,
                                   const MmdConfig& mmd_config,
                                   const ShadowOptions& options,
                                   std::uint64_t seed);

// --- attack classifiers ---------------------------------------------------

struct AttackClassifierConfig {
  std::size_t hidden = 0;        // 0: logistic regression
  double l2_coeff = 1e-4;
  std::size_t max_iterations = 50;   // Newton steps (hidden = 0)
  std::size_t epochs = 30;           // SGD epochs (hidden > 0)
  double learning_rate = 0.1;
  std::uint64_t seed = 0;
};

// A [f, (h,) 2] model; column 1 of the softmax output is P(member).
MlpModel TrainAttackClassifier(const Eigen::MatrixXd& features,
                               const std::vector<bool>& is_member,
                               const AttackClassifierConfig& config);

Eigen::VectorXd MemberProbability(const MlpModel& classifier,
                                  const Eigen::MatrixXd& features);

// --- attacks --------------------------------------------------------------

inline constexpr std::array<std::string_view, 7> kAttackNames{
    "Instance-Vector", "Class-Vector",    "Global-Probability", "Global-Loss",
    "Global-TopThree", "Global-TopOne",   "Baseline"};

struct ThresholdModel {
  double threshold = 0.0;
  bool member_if_at_least = true;   // false: member iff score < threshold
};

struct AttackResult {
  std::string attack_name;
  std::vector<bool> predictions;
  double accuracy = 0.0;
  double advantage = 0.0;   // accuracy - 1/2
  std::string error;        // non-empty when the attack failed
  bool ok() const { return error.empty(); }
};

// Accuracy of member predictions against the balanced ground truth.
AttackResult ScoreAttack(std::string name, std::vector<bool> predictions,
                         const BalancedEvalSet& eval_set);

// Best member-iff-score>=t threshold over labeled scores by balanced accuracy.
// Candidates are the observed scores; ties go to the smallest threshold.
ThresholdModel BestThreshold(std::span<const double> scores,
                             const std::vector<bool>& is_member);
double BalancedAccuracy(std::span<const double> scores,
                        const std::vector<bool>& is_member, double threshold);

// Sum p_j ln(p_j / q_j) with q clamped below at 1e-12; 0 ln 0 = 0.
double KlDivergence(const ProbVector& p, const ProbVector& q);

// Sorted top-k probabilities (descending) for every column.
Eigen::MatrixXd TopValues(const Eigen::MatrixXd& probs, std::size_t k);

// Value v of `scores` with roughly t percent of scores at or above it:
// ascending sort s, index floor((1 - t/100) n) clamped to n - 1.
double TopPercentileThreshold(std::vector<double> scores, double percentile);

std::vector<bool> BaselineAttack(const LabelOracle& target,
                                 std::span<const Instance> queries);

std::vector<bool> GlobalLossAttack(const ProbabilityOracle& target,
                                   std::span<const Instance> queries,
                                   const ShadowEnsemble& ensemble);
double GlobalLossThreshold(const ShadowEnsemble& ensemble);

std::vector<bool> GlobalProbabilityAttack(const ProbabilityOracle& target,
                                          std::span<const Instance> queries,
                                          const ShadowEnsemble& ensemble);

struct TopOneConfig {
  double percentile = 10.0;
  std::size_t num_random_queries = 1000;
  std::uint64_t seed = 0;
};
std::vector<bool> GlobalTopOneAttack(const ProbabilityOracle& target,
                                     std::span<const Instance> queries,
                                     const TopOneConfig& config);

std::vector<bool> GlobalTopThreeAttack(const ProbabilityOracle& target,
                                       std::span<const Instance> queries,
                                       const ShadowEnsemble& ensemble,
                                       const AttackClassifierConfig& config);

std::vector<bool> ClassVectorAttack(const ProbabilityOracle& target,
                                    std::span<const Instance> queries,
                                    const ShadowEnsemble& ensemble,
                                    const AttackClassifierConfig& config);

// Query i must be D_E position i of the ensemble. Instances with fewer than
// two in-shadows or two out-shadows fall back to the baseline rule.
std::vector<bool> InstanceVectorAttack(const ProbabilityOracle& target,
                                       std::span<const Instance> queries,
                                       const ShadowEnsemble& ensemble);

struct AttackSuiteConfig {
  TopOneConfig top_one;
  AttackClassifierConfig classifier;
  bool instance_vector = true;   // needs queries aligned with D_E
};

// All seven attacks in kAttackNames order. A failing attack is recorded with
// its error message and the others still run.
std::vector<AttackResult> RunAllAttacks(const ProbabilityOracle& target,
                                        const BalancedEvalSet& eval_set,
                                        const ShadowEnsemble& ensemble,
                                        const AttackSuiteConfig& config);

std::string AttackResultsToCsv(std::span<const AttackResult> results);
std::string AttackResultsToJson(std::span<const AttackResult> results);

}  // namespace mialab

#endif  // MIALAB_CORE_ATTACKS_HPP_
