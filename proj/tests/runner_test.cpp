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

#include <cmath>
#include <filesystem>
#include <set>

#include <unistd.h>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "errors.hpp"
#include "runner.hpp"
#include "test_support.hpp"
#include "text_io.hpp"

namespace mialab {
namespace {

using testing::TinyExperiment;

std::filesystem::path TempDir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() /
             ("mialab_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  return dir;
}

ExperimentConfig WithDefense(ExperimentConfig c, Defense d) {
  c.defense = d;
  c.target = ApplyDefense(c.target, d, c.defense_defaults);
  return c;
}

TEST(Config, DefaultsAreValid) {
  EXPECT_NO_THROW(ExperimentConfig{}.Validate());
  EXPECT_NO_THROW(TinyExperiment().Validate());
}

TEST(Config, DefenseMustMatchRecipe) {
  ExperimentConfig c = TinyExperiment();
  c.defense = Defense::kMmd;   // weight still 0
  EXPECT_THROW(c.Validate(), ConfigError);
  c = TinyExperiment();
  c.target.mixup_alpha = 1.0;  // defense none
  EXPECT_THROW(c.Validate(), ConfigError);
  c = TinyExperiment();
  c.defense = Defense::kDpSgd;
  EXPECT_THROW(c.Validate(), ConfigError);
  for (Defense d : {Defense::kNone, Defense::kMixup, Defense::kMmd, Defense::kMmdMixup,
                    Defense::kDpSgd, Defense::kDpSgdMixup}) {
    EXPECT_NO_THROW(WithDefense(TinyExperiment(), d).Validate()) << DefenseName(d);
    EXPECT_EQ(ParseDefense(DefenseName(d)), d);
  }
  EXPECT_THROW(ParseDefense("dropout"), ConfigError);
}

TEST(Config, SizesAreChecked) {
  ExperimentConfig c = TinyExperiment();
  c.eval_size = 61;
  EXPECT_THROW(c.Validate(), ConfigError);
  c = TinyExperiment();
  c.train_size = 20;   // below |D_E| / 2
  EXPECT_THROW(c.Validate(), ConfigError);
  c = TinyExperiment();
  c.train_size = 200;
  EXPECT_THROW(c.Validate(), ConfigError);
  // The validation set needs room in D_G as well.
  c = WithDefense(TinyExperiment(), Defense::kMmd);
  c.train_size = 70;
  EXPECT_THROW(c.Validate(), ConfigError);
  c.defense = Defense::kNone;
  c.target.mmd_weight = 0.0;
  EXPECT_NO_THROW(c.Validate());
}

TEST(Config, JsonRoundTripAndStrictKeys) {
  ExperimentConfig c = WithDefense(TinyExperiment(), Defense::kMmdMixup);
  c.sweep = SweepSpec{"mmd_weight", {0.5, 1.0}};
  c.dataset_seed = 77;
  const auto j = ExperimentConfigToJson(c);
  EXPECT_EQ(ExperimentConfigToJson(ExperimentConfigFromJson(j)).dump(), j.dump());
  auto bad = j;
  bad["shadows"] = 3;
  EXPECT_THROW(ExperimentConfigFromJson(bad), ConfigError);
  bad = j;
  bad["target"]["epochs"] = "many";
  EXPECT_THROW(ExperimentConfigFromJson(bad), ConfigError);
  // Partial configs keep the defaults.
  ExperimentConfig partial = ExperimentConfigFromJson(nlohmann::json{{"seed", 3}});
  EXPECT_EQ(partial.seed, 3u);
  EXPECT_EQ(partial.train_size, ExperimentConfig{}.train_size);
}

TEST(Stages, SeedsFollowDerivation) {
  ExperimentConfig c;
  c.seed = 12345;
  EXPECT_EQ(StageSeed(c, Stage::kShadows), DeriveSeed(12345, 6));
  EXPECT_EQ(StageSeed(c, Stage::kDataset), 12345u ^ kSeedMixer);
}

TEST(Prepare, ValidationSetIsDisjoint) {
  ExperimentConfig c = WithDefense(TinyExperiment(), Defense::kMmd);
  PreparedData d = PrepareData(c);
  EXPECT_EQ(d.validation_ids.size(), c.train_size);
  std::set<std::size_t> val(d.validation_ids.begin(), d.validation_ids.end());
  EXPECT_EQ(val.size(), c.train_size);
  for (std::size_t id : d.target_sample.indices) EXPECT_FALSE(val.contains(id));
  for (std::size_t id : d.plan.eval_ids) EXPECT_FALSE(val.contains(id));
  for (std::size_t id : d.plan.holdout_ids) EXPECT_FALSE(val.contains(id));
  EXPECT_TRUE(PrepareData(TinyExperiment()).validation_ids.empty());
}

TEST(Experiment, ReportIsConsistentAndDeterministic) {
  ExperimentConfig c = TinyExperiment();
  c.train_size = c.eval_size / 2;
  ExperimentReport a{c, {RunExperiment(c)}};
  ExperimentReport b{c, {RunExperiment(c)}};
  const RunRecord& r = a.runs[0];
  ASSERT_TRUE(r.ok()) << r.error;
  EXPECT_EQ(r.attacks.size(), kAttackNames.size());
  EXPECT_EQ(r.accuracy.g, r.accuracy.a_r - r.accuracy.a_e);
  EXPECT_TRUE(CheckReportConsistency(ReportToJson(a)).empty());
  EXPECT_EQ(ReportToCsv(a), ReportToCsv(b));
  EXPECT_EQ(ReportToJson(a).dump(), ReportToJson(b).dump());

  // Train size |D_E|/2: the sample is exactly the member half, so the
  // baseline advantage is g/2.
  const auto& baseline = r.attacks.back();
  EXPECT_NEAR(baseline.advantage, r.accuracy.g / 2, 1e-12);

  const auto d1 = TempDir("a"), d2 = TempDir("b");
  WriteReport(a, d1);
  WriteReport(b, d2);
  std::size_t compared = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(d1)) {
    if (!e.is_regular_file() || e.path().filename() == "timing.csv") continue;
    const auto rel = std::filesystem::relative(e.path(), d1);
    EXPECT_EQ(ReadTextFile(e.path()), ReadTextFile(d2 / rel)) << rel;
    ++compared;
  }
  EXPECT_GE(compared, 7u);
  EXPECT_TRUE(std::filesystem::exists(d1 / "history" / "run000.csv"));
  EXPECT_TRUE(std::filesystem::exists(d1 / "checkpoints" / "run000.json"));
  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);
}

TEST(Experiment, ShadowStageDoesNotTouchTarget) {
  ExperimentConfig a = TinyExperiment();
  ExperimentConfig b = a;
  b.shadow_count = 2;
  TrainConfig other = b.target;
  other.epochs = 1;
  b.shadow = other;
  RunRecord ra = RunExperiment(a), rb = RunExperiment(b);
  EXPECT_EQ(ModelToJson(*ra.model), ModelToJson(*rb.model));
}

TEST(Experiment, MisconfiguredDefenseFailsBeforeCompute) {
  ExperimentConfig c = TinyExperiment();
  c.defense = Defense::kMmd;
  EXPECT_THROW(RunExperiment(c), ConfigError);
}

TEST(Report, TamperingIsDetected) {
  ExperimentConfig c = TinyExperiment();
  ExperimentReport rep{c, {RunExperiment(c)}};
  auto j = ReportToJson(rep);
  j["runs"][0]["g"] = j["runs"][0]["g"].get<double>() + 0.01;
  EXPECT_FALSE(CheckReportConsistency(j).empty());
  j = ReportToJson(rep);
  j["runs"][0]["v"] = 0.9;
  EXPECT_FALSE(CheckReportConsistency(j).empty());
  j = ReportToJson(rep);
  j["runs"][0]["bound"]["lower_ok"] = !j["runs"][0]["bound"]["lower_ok"].get<bool>();
  EXPECT_FALSE(CheckReportConsistency(j).empty());
}

TEST(DefenseComparison, GridShapeAndFailures) {
  ExperimentConfig c = TinyExperiment();
  c.shadow_count = 2;
  std::vector<Defense> defenses{Defense::kNone, Defense::kMmd};
  std::vector<double> weights{0.0, 0.5, 1.0};
  ExperimentReport rep = RunDefenseComparison(c, defenses, weights);
  ASSERT_EQ(rep.runs.size(), 4u);
  EXPECT_EQ(rep.runs[0].defense, "none");
  EXPECT_EQ(rep.runs[3].run_id, "run003");
  for (std::size_t i = 1; i < 4; ++i) {
    EXPECT_EQ(rep.runs[i].sweep_parameter, "mmd_weight");
    EXPECT_EQ(rep.runs[i].sweep_value, weights[i - 1]);
    EXPECT_TRUE(rep.runs[i].ok()) << rep.runs[i].error;
  }
  EXPECT_FALSE(rep.runs[1].validation_highest.has_value());   // weight 0: no MMD
  EXPECT_TRUE(rep.runs[2].validation_highest.has_value());
  const std::string acc = TradeoffAccuracyCsv(rep);
  EXPECT_EQ(std::count(acc.begin(), acc.end(), '\n'), 5);
  EXPECT_EQ(acc.substr(0, acc.find('\n')),
            "run_id,defense,sweep_parameter,sweep_value,train_acc,test_acc");

  std::vector<Defense> dp{Defense::kDpSgd};
  std::vector<double> sigmas{0.5, -1.0};
  ExperimentReport bad = RunDefenseComparison(c, dp, sigmas);
  ASSERT_EQ(bad.runs.size(), 2u);
  EXPECT_TRUE(bad.runs[0].ok());
  EXPECT_FALSE(bad.runs[1].ok());
  EXPECT_TRUE(CheckReportConsistency(ReportToJson(bad)).empty());
  const std::string csv = ReportToCsv(bad);
  EXPECT_NE(csv.find("run001,dpsgd"), std::string::npos);
  EXPECT_THROW(RunDefenseComparison(c, {}, sigmas), ParameterError);
}

TEST(SizeSweep, OneRowPerSizeAndSkips) {
  ExperimentConfig c = TinyExperiment();
  c.shadow_count = 2;
  std::vector<std::size_t> sizes{30, 50, 500};
  ExperimentReport rep = RunTrainSizeSweep(c, sizes);
  ASSERT_EQ(rep.runs.size(), 3u);
  EXPECT_EQ(rep.runs[1].train_size, 50u);
  EXPECT_TRUE(rep.runs[1].ok());
  EXPECT_FALSE(rep.runs[2].ok());
  EXPECT_NE(rep.runs[2].error.find("skipped"), std::string::npos);
  std::vector<std::size_t> unsorted{50, 30};
  EXPECT_THROW(RunTrainSizeSweep(c, unsorted), ParameterError);
  std::vector<std::size_t> one{30};
  EXPECT_EQ(RunTrainSizeSweep(c, one).runs.size(), 1u);
}

TEST(ValidationCheck, NeedsMmdAndSkipsInstanceVector) {
  EXPECT_THROW(RunValidationMiCheck(TinyExperiment()), ParameterError);
  ExperimentConfig c = WithDefense(TinyExperiment(), Defense::kMmd);
  c.shadow_count = 2;
  auto results = RunValidationMiCheck(c);
  ASSERT_EQ(results.size(), kAttackNames.size());
  EXPECT_FALSE(results[0].ok());
  for (std::size_t i = 1; i < results.size(); ++i) {
    ASSERT_TRUE(results[i].ok()) << results[i].error;
    // 30 validation members against 30 unseen D_E instances
    EXPECT_EQ(results[i].predictions.size(), 60u);
  }
}

TEST(WeightSelection, LargestWeightWithinTolerance) {
  ExperimentConfig c = WithDefense(TinyExperiment(), Defense::kMmd);
  std::vector<double> weights{0.1, 0.5, 2.0};
  WeightSelection sel = SelectMmdWeight(c, weights, 0.02);
  ASSERT_EQ(sel.a_e.size(), 3u);
  double expected = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    if (sel.a_e[i] >= sel.reference_a_e - 0.02) expected = std::max(expected, weights[i]);
  }
  if (sel.within_tolerance) {
    EXPECT_EQ(sel.weight, expected);
  } else {
    EXPECT_EQ(expected, 0.0);
    EXPECT_EQ(sel.weight, 0.1);
  }
  EXPECT_THROW(SelectMmdWeight(TinyExperiment(), weights, 0.02), ParameterError);
}

}  // namespace
}  // namespace mialab
