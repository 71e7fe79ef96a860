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


#ifndef MIALAB_CORE_RUNNER_HPP_
#define MIALAB_CORE_RUNNER_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "attacks.hpp"
#include "dataset.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "train.hpp"

namespace mialab {

enum class Defense { kNone, kMixup, kMmd, kMmdMixup, kDpSgd, kDpSgdMixup };

std::string_view DefenseName(Defense defense);
Defense ParseDefense(std::string_view name);  // ConfigError on unknown names
bool UsesMixup(Defense defense);
bool UsesMmd(Defense defense);
bool UsesDpSgd(Defense defense);

// Values a defense switches on when the runner applies it to a base recipe.
struct DefenseDefaults {
  double mixup_alpha = 4.0;
  double mmd_weight = 0.5;
  double dp_clip_norm = 5.0;
  double dp_noise_scale = 1.0;
};

struct AttackSettings {
  double top_one_percentile = 10.0;
  std::size_t num_random_queries = 1000;
  std::size_t classifier_hidden = 0;
  double classifier_l2 = 1e-4;
};

struct SweepSpec {
  std::string parameter;   // mmd_weight | dp_noise_scale | mixup_alpha | train_size
  std::vector<double> values;
};

// The desk-scale recipe: [256, 128] ReLU MLP, 50 epochs, batch 128, lr 0.1
// cut tenfold at epochs 25 and 37.
TrainConfig BenchmarkTrainConfig();

struct ExperimentConfig {
  std::uint64_t seed = 0;
  SyntheticSpec dataset{10, 20, 2000, 1.5};
  std::optional<std::uint64_t> dataset_seed;  // default: derived from seed
  std::size_t eval_size = 2000;
  std::size_t train_size = 1000;
  TrainConfig target = BenchmarkTrainConfig();
  std::size_t shadow_count = 20;
  std::optional<TrainConfig> shadow;   // default: the target recipe
  Defense defense = Defense::kNone;
  DefenseDefaults defense_defaults;
  MmdConfig mmd;
  AttackSettings attack;
  std::optional<SweepSpec> sweep;
  std::string output_dir = "mialab-out";
  std::size_t threads = 1;
  double bound_slack = kDefaultBoundSlack;

  // Throws ConfigError, e.g. when the defense tag disagrees with the recipe.
  void Validate() const;
  const TrainConfig& shadow_recipe() const { return shadow ? *shadow : target; }
};

nlohmann::json ExperimentConfigToJson(const ExperimentConfig& config);
ExperimentConfig ExperimentConfigFromJson(const nlohmann::json& j);
ExperimentConfig LoadExperimentConfig(const std::filesystem::path& path);

// Copy of `recipe` with exactly the defense's switches set from `defaults`
// (and all others cleared).
TrainConfig ApplyDefense(TrainConfig recipe, Defense defense,
                         const DefenseDefaults& defaults);

// Stage sub-seeds, all DeriveSeed(config.seed, stage).
enum class Stage : std::uint64_t {
  kDataset = 1,
  kSplit = 2,
  kValidation = 3,
  kTargetSample = 4,
  kTargetTrain = 5,
  kShadows = 6,
  kAttacks = 7,
};
std::uint64_t StageSeed(const ExperimentConfig& config, Stage stage);

struct PreparedData {
  Dataset dataset;
  SplitPlan plan;
  std::vector<std::size_t> validation_ids;  // empty unless MMD is active
  TrainingSample target_sample;
};

// Steps (1) and (2): data, split, validation reservation, target sample.
PreparedData PrepareData(const ExperimentConfig& config);

struct TargetRun {
  TrainResult training;
  ModelAccuracy accuracy;   // a_E on the non-member half of D_E
};

TargetRun TrainTarget(const ExperimentConfig& config, const PreparedData& data);

struct RunRecord {
  std::string run_id;
  std::string defense;
  std::size_t train_size = 0;
  std::string sweep_parameter;
  double sweep_value = 0.0;
  double mixup_alpha = 0.0;
  double mmd_weight = 0.0;
  double dp_noise_scale = 0.0;
  std::uint64_t seed = 0;
  ModelAccuracy accuracy;
  std::vector<AttackResult> attacks;
  HighestAdvantage highest;
  BoundVerdict verdict;
  // Validation-vs-test attacks, present when MMD is active.
  std::vector<AttackResult> validation_attacks;
  std::optional<HighestAdvantage> validation_highest;
  std::string error;   // a failed grid point; other fields are then unset
  double wall_clock_seconds = 0.0;

  // Artifacts, not part of the comparable report.
  std::optional<MlpModel> model;
  std::vector<EpochRecord> history;
  std::vector<double> member_confidence;     // true-label probability, sorted
  std::vector<double> nonmember_confidence;

  bool ok() const { return error.empty(); }
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<RunRecord> runs;
};

// Steps (1)-(6) for one configuration.
RunRecord RunExperiment(const ExperimentConfig& config);

// One run per (defense, sweep value). Sweep values apply to mmd_weight for
// MMD defenses and to dp_noise_scale for DP-SGD defenses; defenses without a
// tunable parameter run once. Failed grid points are recorded.
ExperimentReport RunDefenseComparison(const ExperimentConfig& base,
                                      std::span<const Defense> defenses,
                                      std::span<const double> sweep_values);

// Attacks against an eval set of validation instances (members) and unseen
// non-members; Instance-Vector does not apply and is reported as failed.
std::vector<AttackResult> RunValidationMiCheck(const ExperimentConfig& config);

ExperimentReport RunTrainSizeSweep(const ExperimentConfig& config,
                                   std::span<const std::size_t> sizes);

struct WeightSelection {
  double weight = 0.0;
  bool within_tolerance = false;   // false: no weight kept the drop small
  double reference_a_e = 0.0;      // no-defense testing accuracy
  std::vector<double> weights;
  std::vector<double> a_e;         // per weight
};

// Largest weight whose target testing accuracy is at most `max_drop` below
// the no-defense target trained on the same data. Trains targets only.
WeightSelection SelectMmdWeight(const ExperimentConfig& config,
                                std::span<const double> weights,
                                double max_drop);

// --- reports --------------------------------------------------------------

std::string ReportToCsv(const ExperimentReport& report);
nlohmann::json ReportToJson(const ExperimentReport& report);
// Train-vs-test and highest-advantage-vs-test tables.
std::string TradeoffAccuracyCsv(const ExperimentReport& report);
std::string TradeoffAdvantageCsv(const ExperimentReport& report);

// report.csv, report.json, timing.csv, attacks/, history/, checkpoints/, cdf/
// and, with more than one run, the two tradeoff tables.
void WriteReport(const ExperimentReport& report,
                 const std::filesystem::path& directory);

// Re-derives g, v and the bound verdict from the raw fields of a report.json
// and returns the list of inconsistencies (empty when self-consistent).
std::vector<std::string> CheckReportConsistency(const nlohmann::json& report);

}  // namespace mialab

#endif  // MIALAB_CORE_RUNNER_HPP_
