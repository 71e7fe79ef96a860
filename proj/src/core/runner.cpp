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


#include "runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>

#include <nlohmann/json.hpp>

#include "errors.hpp"
#include "json_util.hpp"
#include "text_io.hpp"

namespace mialab {

namespace {

constexpr std::array<std::pair<Defense, std::string_view>, 6> kDefenseNames{{
    {Defense::kNone, "none"},
    {Defense::kMixup, "mixup"},
    {Defense::kMmd, "mmd"},
    {Defense::kMmdMixup, "mmd+mixup"},
    {Defense::kDpSgd, "dpsgd"},
    {Defense::kDpSgdMixup, "dpsgd+mixup"},
}};

}  // namespace

std::string_view DefenseName(Defense defense) {
  for (const auto& [d, name] : kDefenseNames) {
    if (d == defense) return name;
  }
  return "unknown";
}

Defense ParseDefense(std::string_view name) {
  for (const auto& [d, n] : kDefenseNames) {
    if (n == name) return d;
  }
  throw ConfigError("unknown defense \"" + std::string(name) +
                    "\" (none, mixup, mmd, mmd+mixup, dpsgd, dpsgd+mixup)");
}

bool UsesMixup(Defense d) {
  return d == Defense::kMixup || d == Defense::kMmdMixup || d == Defense::kDpSgdMixup;
}
bool UsesMmd(Defense d) { return d == Defense::kMmd || d == Defense::kMmdMixup; }
bool UsesDpSgd(Defense d) { return d == Defense::kDpSgd || d == Defense::kDpSgdMixup; }

TrainConfig BenchmarkTrainConfig() {
  TrainConfig c;
  c.hidden_layers = {256, 128};
  c.epochs = 50;
  c.batch_size = 128;
  c.learning_rate = 0.1;
  c.lr_schedule = {{25, 0.1}, {37, 0.1}};
  return c;
}

TrainConfig ApplyDefense(TrainConfig recipe, Defense defense,
                         const DefenseDefaults& defaults) {
  recipe.mixup_alpha = UsesMixup(defense) ? defaults.mixup_alpha : 0.0;
  recipe.mmd_weight = UsesMmd(defense) ? defaults.mmd_weight : 0.0;
  if (UsesDpSgd(defense)) {
    recipe.dp_clip_norm = defaults.dp_clip_norm;
    recipe.dp_noise_scale = defaults.dp_noise_scale;
  } else {
    recipe.dp_clip_norm.reset();
    recipe.dp_noise_scale = 0.0;
  }
  return recipe;
}

namespace {

void CheckRecipe(const TrainConfig& recipe, Defense defense,
                 const std::string& which) {
  try {
    recipe.Validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(which + ": " + e.what());
  }
  const std::string tag(DefenseName(defense));
  if (UsesMixup(defense) != recipe.mixup_enabled()) {
    throw ConfigError(which + ": defense " + tag +
                      (UsesMixup(defense) ? " needs mixup_alpha > 0"
                                          : " requires mixup_alpha = 0"));
  }
  if (UsesMmd(defense) != recipe.mmd_enabled()) {
    throw ConfigError(which + ": defense " + tag +
                      (UsesMmd(defense) ? " needs mmd_weight > 0"
                                        : " requires mmd_weight = 0"));
  }
  if (UsesDpSgd(defense) != recipe.dp_enabled()) {
    throw ConfigError(which + ": defense " + tag +
                      (UsesDpSgd(defense) ? " needs dp_clip_norm"
                                          : " requires dp_clip_norm = null"));
  }
  if (!UsesDpSgd(defense) && recipe.dp_noise_scale != 0.0) {
    throw ConfigError(which + ": dp_noise_scale set without DP-SGD");
  }
}

}  // namespace

void ExperimentConfig::Validate() const {
  const auto& d = dataset;
  if (d.num_classes < 2) throw ConfigError("dataset.num_classes must be >= 2");
  if (d.dim < 1) throw ConfigError("dataset.dim must be >= 1");
  if (d.per_class < 1) throw ConfigError("dataset.per_class must be >= 1");
  if (!(d.cluster_spread >= 0.0) || !std::isfinite(d.cluster_spread)) {
    throw ConfigError("dataset.cluster_spread must be finite and >= 0");
  }
  const std::size_t total = d.num_classes * d.per_class;
  if (eval_size == 0 || eval_size % 2 != 0 || eval_size >= total) {
    throw ConfigError("eval_size must be even, positive and below the dataset size");
  }
  if (train_size < eval_size / 2) {
    throw ConfigError("train_size must be at least eval_size / 2");
  }
  const std::size_t rest = total - eval_size;
  const std::size_t general = rest - rest / 2;
  const std::size_t holdout = rest / 2;
  const std::size_t fill = train_size - eval_size / 2;
  const std::size_t reserved = UsesMmd(defense) ? train_size : 0;
  if (fill + reserved > general) {
    throw ConfigError("train_size too large: D_G holds " + std::to_string(general) +
                      " instances, need " + std::to_string(fill + reserved));
  }
  if (fill > holdout) {
    throw ConfigError("train_size too large for the shadow pool D_H (" +
                      std::to_string(holdout) + " instances)");
  }
  if (shadow_count == 0) throw ConfigError("shadow.count must be >= 1");
  CheckRecipe(target, defense, "target");
  if (shadow) CheckRecipe(*shadow, defense, "shadow.train");
  if (UsesMmd(defense)) {
    try {
      mmd.Validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("mmd: ") + e.what());
    }
  }
  if (!(attack.top_one_percentile > 0.0 && attack.top_one_percentile <= 100.0)) {
    throw ConfigError("attack.top_one_percentile must lie in (0, 100]");
  }
  if (attack.num_random_queries < 100) {
    throw ConfigError("attack.num_random_queries must be >= 100");
  }
  if (!(attack.classifier_l2 >= 0.0)) throw ConfigError("attack.classifier_l2 must be >= 0");
  if (threads == 0) throw ConfigError("threads must be >= 1");
  if (!(bound_slack >= 0.0)) throw ConfigError("bound_slack must be >= 0");
  if (sweep) {
    static constexpr std::array<std::string_view, 4> known{
        "mmd_weight", "dp_noise_scale", "mixup_alpha", "train_size"};
    if (std::find(known.begin(), known.end(), sweep->parameter) == known.end()) {
      throw ConfigError("sweep.parameter must be one of mmd_weight, dp_noise_scale, "
                        "mixup_alpha, train_size");
    }
    if (sweep->values.empty()) throw ConfigError("sweep.values must be non-empty");
  }
  if (output_dir.empty()) throw ConfigError("output_dir must be non-empty");
}

nlohmann::json ExperimentConfigToJson(const ExperimentConfig& c) {
  nlohmann::json j;
  j["seed"] = c.seed;
  j["dataset"] = {{"num_classes", c.dataset.num_classes},
                  {"dim", c.dataset.dim},
                  {"per_class", c.dataset.per_class},
                  {"cluster_spread", c.dataset.cluster_spread},
                  {"seed", c.dataset_seed ? nlohmann::json(*c.dataset_seed)
                                          : nlohmann::json(nullptr)}};
  j["eval_size"] = c.eval_size;
  j["train_size"] = c.train_size;
  j["target"] = TrainConfigToJson(c.target);
  j["shadow"] = {{"count", c.shadow_count},
                 {"train", c.shadow ? TrainConfigToJson(*c.shadow)
                                    : nlohmann::json(nullptr)}};
  j["defense"] = std::string(DefenseName(c.defense));
  j["defense_defaults"] = {{"mixup_alpha", c.defense_defaults.mixup_alpha},
                           {"mmd_weight", c.defense_defaults.mmd_weight},
                           {"dp_clip_norm", c.defense_defaults.dp_clip_norm},
                           {"dp_noise_scale", c.defense_defaults.dp_noise_scale}};
  j["mmd"] = MmdConfigToJson(c.mmd);
  j["attack"] = {{"top_one_percentile", c.attack.top_one_percentile},
                 {"num_random_queries", c.attack.num_random_queries},
                 {"classifier_hidden", c.attack.classifier_hidden},
                 {"classifier_l2", c.attack.classifier_l2}};
  j["sweep"] = c.sweep ? nlohmann::json{{"parameter", c.sweep->parameter},
                                        {"values", c.sweep->values}}
                       : nlohmann::json(nullptr);
  j["output_dir"] = c.output_dir;
  j["threads"] = c.threads;
  j["bound_slack"] = c.bound_slack;
  return j;
}

ExperimentConfig ExperimentConfigFromJson(const nlohmann::json& j) {
  CheckKnownKeys(j,
                 {"seed", "dataset", "eval_size", "train_size", "target", "shadow",
                  "defense", "defense_defaults", "mmd", "attack", "sweep",
                  "output_dir", "threads", "bound_slack"},
                 "experiment config");
  ExperimentConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      CheckKnownKeys(d, {"num_classes", "dim", "per_class", "cluster_spread", "seed"},
                     "dataset");
      c.dataset.num_classes = d.value("num_classes", c.dataset.num_classes);
      c.dataset.dim = d.value("dim", c.dataset.dim);
      c.dataset.per_class = d.value("per_class", c.dataset.per_class);
      c.dataset.cluster_spread = d.value("cluster_spread", c.dataset.cluster_spread);
      if (d.contains("seed") && !d.at("seed").is_null()) {
        c.dataset_seed = d.at("seed").get<std::uint64_t>();
      }
    }
    c.eval_size = j.value("eval_size", c.eval_size);
    c.train_size = j.value("train_size", c.train_size);
    if (j.contains("target")) c.target = TrainConfigFromJson(j.at("target"), c.target);
    if (j.contains("shadow")) {
      const auto& s = j.at("shadow");
      CheckKnownKeys(s, {"count", "train"}, "shadow");
      c.shadow_count = s.value("count", c.shadow_count);
      if (s.contains("train") && !s.at("train").is_null()) {
        c.shadow = TrainConfigFromJson(s.at("train"), c.target);
      }
    }
    if (j.contains("defense")) c.defense = ParseDefense(j.at("defense").get<std::string>());
    if (j.contains("defense_defaults")) {
      const auto& d = j.at("defense_defaults");
      CheckKnownKeys(d, {"mixup_alpha", "mmd_weight", "dp_clip_norm", "dp_noise_scale"},
                     "defense_defaults");
      auto& dd = c.defense_defaults;
      dd.mixup_alpha = d.value("mixup_alpha", dd.mixup_alpha);
      dd.mmd_weight = d.value("mmd_weight", dd.mmd_weight);
      dd.dp_clip_norm = d.value("dp_clip_norm", dd.dp_clip_norm);
      dd.dp_noise_scale = d.value("dp_noise_scale", dd.dp_noise_scale);
    }
    if (j.contains("mmd")) c.mmd = MmdConfigFromJson(j.at("mmd"));
    if (j.contains("attack")) {
      const auto& a = j.at("attack");
      CheckKnownKeys(a, {"top_one_percentile", "num_random_queries",
                         "classifier_hidden", "classifier_l2"},
                     "attack");
      c.attack.top_one_percentile = a.value("top_one_percentile", c.attack.top_one_percentile);
      c.attack.num_random_queries = a.value("num_random_queries", c.attack.num_random_queries);
      c.attack.classifier_hidden = a.value("classifier_hidden", c.attack.classifier_hidden);
      c.attack.classifier_l2 = a.value("classifier_l2", c.attack.classifier_l2);
    }
    if (j.contains("sweep") && !j.at("sweep").is_null()) {
      const auto& s = j.at("sweep");
      CheckKnownKeys(s, {"parameter", "values"}, "sweep");
      c.sweep = SweepSpec{s.at("parameter").get<std::string>(),
                          s.at("values").get<std::vector<double>>()};
    }
    c.output_dir = j.value("output_dir", c.output_dir);
    c.threads = j.value("threads", c.threads);
    c.bound_slack = j.value("bound_slack", c.bound_slack);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
  return c;
}

ExperimentConfig LoadExperimentConfig(const std::filesystem::path& path) {
  const std::string text = ReadTextFile(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return ExperimentConfigFromJson(j);
}

std::uint64_t StageSeed(const ExperimentConfig& config, Stage stage) {
  return DeriveSeed(config.seed, static_cast<std::uint64_t>(stage));
}

PreparedData PrepareData(const ExperimentConfig& config) {
  Dataset ds = GenerateSynthetic(
      config.dataset, config.dataset_seed.value_or(StageSeed(config, Stage::kDataset)));
  SplitPlan plan = SplitThreeWay(ds, config.eval_size, StageSeed(config, Stage::kSplit));
  std::vector<std::size_t> validation;
  if (UsesMmd(config.defense)) {
    validation = plan.general_ids;
    Rng rng(StageSeed(config, Stage::kValidation));
    rng.Shuffle(std::span<std::size_t>(validation));
    validation.resize(config.train_size);
  }
  TrainingSample sample =
      SampleTrainingSet(plan, Pool::kGeneral, config.train_size,
                        StageSeed(config, Stage::kTargetSample), validation);
  return {std::move(ds), std::move(plan), std::move(validation), std::move(sample)};
}

namespace {

std::vector<std::size_t> NonMemberIds(const PreparedData& data) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < data.plan.eval_ids.size(); ++i) {
    if (!data.target_sample.bitmap[i]) out.push_back(data.plan.eval_ids[i]);
  }
  return out;
}

AttackSuiteConfig SuiteConfig(const ExperimentConfig& config) {
  const std::uint64_t base = StageSeed(config, Stage::kAttacks);
  AttackSuiteConfig s;
  s.top_one.percentile = config.attack.top_one_percentile;
  s.top_one.num_random_queries = config.attack.num_random_queries;
  s.top_one.seed = DeriveSeed(base, 1);
  s.classifier.hidden = config.attack.classifier_hidden;
  s.classifier.l2_coeff = config.attack.classifier_l2;
  s.classifier.seed = DeriveSeed(base, 2);
  return s;
}

ShadowEnsemble TrainShadows(const ExperimentConfig& config, const PreparedData& data) {
  ShadowOptions opts;
  opts.count = config.shadow_count;
  opts.train_size = config.train_size;
  opts.validation_ids = data.validation_ids;
  opts.threads = config.threads;
  return TrainShadowEnsemble(data.dataset, data.plan, config.shadow_recipe(), config.mmd,
                             opts, StageSeed(config, Stage::kShadows));
}

// Validation instances as members against an equal number of unseen
// non-members from D_E.
BalancedEvalSet ValidationEvalSet(const PreparedData& data) {
  if (data.validation_ids.empty()) {
    throw ParameterError("validation check: no validation set (MMD inactive)");
  }
  std::vector<std::size_t> outside = NonMemberIds(data);
  const std::size_t n = std::min(outside.size(), data.validation_ids.size());
  std::vector<Instance> queries = data.dataset.Select(
      std::span<const std::size_t>(data.validation_ids.data(), n));
  std::vector<Instance> rest =
      data.dataset.Select(std::span<const std::size_t>(outside.data(), n));
  queries.insert(queries.end(), rest.begin(), rest.end());
  std::vector<bool> member(2 * n, false);
  std::fill(member.begin(), member.begin() + static_cast<std::ptrdiff_t>(n), true);
  return BalancedEvalSet(std::move(queries), std::move(member));
}

std::vector<AttackResult> ValidationAttacks(const ExperimentConfig& config,
                                            const PreparedData& data,
                                            const MlpModel& model,
                                            const ShadowEnsemble& shadows) {
  BalancedEvalSet eval = ValidationEvalSet(data);
  AttackSuiteConfig suite = SuiteConfig(config);
  suite.instance_vector = false;
  return RunAllAttacks(ModelOracle(model), eval, shadows, suite);
}

}  // namespace

TargetRun TrainTarget(const ExperimentConfig& config, const PreparedData& data) {
  TrainConfig recipe = config.target;
  recipe.seed = StageSeed(config, Stage::kTargetTrain);
  std::vector<std::size_t> monitor = NonMemberIds(data);
  TrainOptions opts;
  opts.monitor_ids = monitor;
  TrainResult result = TrainModel(data.dataset, data.target_sample.indices,
                                  data.validation_ids, recipe, config.mmd, opts);
  const double a_r = Accuracy(result.model, data.dataset.Select(data.target_sample.indices));
  const double a_e = Accuracy(result.model, data.dataset.Select(monitor));
  return {std::move(result), MakeModelAccuracy(a_r, a_e)};
}

RunRecord RunExperiment(const ExperimentConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  config.Validate();
  PreparedData data = PrepareData(config);
  TargetRun target = TrainTarget(config, data);
  ShadowEnsemble shadows = TrainShadows(config, data);
  BalancedEvalSet eval = BuildBalancedEvalSet(data.dataset, data.plan,
                                              data.target_sample.bitmap);
  const MlpModel& model = target.training.model;

  RunRecord rec;
  rec.run_id = "run000";
  rec.defense = std::string(DefenseName(config.defense));
  rec.train_size = config.train_size;
  rec.mixup_alpha = config.target.mixup_alpha;
  rec.mmd_weight = config.target.mmd_weight;
  rec.dp_noise_scale = config.target.dp_noise_scale;
  rec.seed = config.seed;
  rec.accuracy = target.accuracy;
  rec.attacks = RunAllAttacks(ModelOracle(model), eval, shadows, SuiteConfig(config));
  rec.highest = FindHighestAdvantage(rec.attacks);
  rec.verdict = BoundCheck(rec.accuracy.g, rec.highest.value, config.bound_slack);
  if (UsesMmd(config.defense)) {
    rec.validation_attacks = ValidationAttacks(config, data, model, shadows);
    rec.validation_highest = FindHighestAdvantage(rec.validation_attacks);
  }
  rec.member_confidence = ConfidenceCdf(model, eval.Members(), ConfidenceMode::kTrueLabel);
  rec.nonmember_confidence =
      ConfidenceCdf(model, eval.NonMembers(), ConfidenceMode::kTrueLabel);
  rec.history = std::move(target.training.history);
  rec.model.emplace(model);
  rec.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

namespace {

std::string RunId(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "run%03zu", index);
  return buf;
}

RunRecord FailedRun(const ExperimentConfig& config, std::string error) {
  RunRecord rec;
  rec.defense = std::string(DefenseName(config.defense));
  rec.train_size = config.train_size;
  rec.mixup_alpha = config.target.mixup_alpha;
  rec.mmd_weight = config.target.mmd_weight;
  rec.dp_noise_scale = config.target.dp_noise_scale;
  rec.seed = config.seed;
  rec.error = std::move(error);
  return rec;
}

}  // namespace

ExperimentReport RunDefenseComparison(const ExperimentConfig& base,
                                      std::span<const Defense> defenses,
                                      std::span<const double> sweep_values) {
  if (defenses.empty()) throw ParameterError("defense comparison: no defenses");
  ExperimentReport report;
  report.config = base;
  for (Defense defense : defenses) {
    const bool tunable = UsesMmd(defense) || UsesDpSgd(defense);
    const std::string param = UsesMmd(defense)     ? "mmd_weight"
                              : UsesDpSgd(defense) ? "dp_noise_scale"
                                                   : "";
    std::vector<double> values;
    if (tunable) {
      if (sweep_values.empty()) {
        throw ParameterError("defense comparison: sweep values required for " +
                             std::string(DefenseName(defense)));
      }
      values.assign(sweep_values.begin(), sweep_values.end());
    } else {
      values.push_back(std::numeric_limits<double>::quiet_NaN());
    }
    for (double value : values) {
      ExperimentConfig cfg = base;
      cfg.shadow.reset();
      cfg.sweep.reset();
      Defense effective = defense;
      TrainConfig recipe = ApplyDefense(base.target, defense, base.defense_defaults);
      if (UsesMmd(defense)) {
        recipe.mmd_weight = value;
        // Weight 0 is the same recipe without the regularizer.
        if (value == 0.0) effective = UsesMixup(defense) ? Defense::kMixup : Defense::kNone;
      } else if (UsesDpSgd(defense)) {
        recipe.dp_noise_scale = value;
      }
      cfg.target = recipe;
      cfg.defense = effective;
      RunRecord rec;
      try {
        rec = RunExperiment(cfg);
      } catch (const std::exception& e) {
        rec = FailedRun(cfg, e.what());
      }
      rec.defense = std::string(DefenseName(defense));
      rec.sweep_parameter = param;
      rec.sweep_value = value;
      rec.run_id = RunId(report.runs.size());
      report.runs.push_back(std::move(rec));
    }
  }
  return report;
}

std::vector<AttackResult> RunValidationMiCheck(const ExperimentConfig& config) {
  config.Validate();
  if (!UsesMmd(config.defense)) {
    throw ParameterError("validation check: needs an MMD defense (no validation set)");
  }
  PreparedData data = PrepareData(config);
  TargetRun target = TrainTarget(config, data);
  ShadowEnsemble shadows = TrainShadows(config, data);
  return ValidationAttacks(config, data, target.training.model, shadows);
}

ExperimentReport RunTrainSizeSweep(const ExperimentConfig& config,
                                   std::span<const std::size_t> sizes) {
  if (sizes.empty()) throw ParameterError("size sweep: no sizes");
  if (!std::is_sorted(sizes.begin(), sizes.end())) {
    throw ParameterError("size sweep: sizes must be ascending");
  }
  ExperimentReport report;
  report.config = config;
  for (std::size_t size : sizes) {
    ExperimentConfig cfg = config;
    cfg.sweep.reset();
    cfg.train_size = size;
    RunRecord rec;
    try {
      rec = RunExperiment(cfg);
    } catch (const std::exception& e) {
      rec = FailedRun(cfg, std::string("skipped: ") + e.what());
    }
    rec.sweep_parameter = "train_size";
    rec.sweep_value = static_cast<double>(size);
    rec.run_id = RunId(report.runs.size());
    report.runs.push_back(std::move(rec));
  }
  return report;
}

WeightSelection SelectMmdWeight(const ExperimentConfig& config,
                                std::span<const double> weights, double max_drop) {
  if (weights.empty()) throw ParameterError("weight selection: no weights");
  if (!UsesMmd(config.defense)) {
    throw ParameterError("weight selection: config must use an MMD defense");
  }
  ExperimentConfig reference = config;
  reference.defense = Defense::kNone;
  reference.target = ApplyDefense(config.target, Defense::kNone, config.defense_defaults);
  reference.shadow.reset();
  reference.Validate();
  WeightSelection sel;
  sel.reference_a_e = TrainTarget(reference, PrepareData(reference)).accuracy.a_e;

  PreparedData data = PrepareData(config);
  bool found = false;
  for (double w : weights) {
    if (!(w > 0.0)) throw ParameterError("weight selection: weights must be positive");
    ExperimentConfig cfg = config;
    cfg.target.mmd_weight = w;
    const double a_e = TrainTarget(cfg, data).accuracy.a_e;
    sel.weights.push_back(w);
    sel.a_e.push_back(a_e);
    if (a_e >= sel.reference_a_e - max_drop && (!found || w > sel.weight)) {
      sel.weight = w;
      found = true;
    }
  }
  sel.within_tolerance = found;
  if (!found) sel.weight = *std::min_element(weights.begin(), weights.end());
  return sel;
}

// --- reports --------------------------------------------------------------

namespace {

std::string CsvField(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

std::string AttackColumn(std::string_view name) {
  std::string out = "adv_";
  for (char ch : name) {
    out += ch == '-' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  }
  return out;
}

std::string Num(double v) { return FormatDouble(v); }

std::string SweepValue(const RunRecord& r) {
  return r.sweep_parameter.empty() ? "" : Num(r.sweep_value);
}

nlohmann::json NumOrNull(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

nlohmann::json AttacksJson(std::span<const AttackResult> results) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& a : results) {
    nlohmann::json j{{"attack", a.attack_name},
                     {"accuracy", NumOrNull(a.accuracy)},
                     {"advantage", NumOrNull(a.advantage)},
                     {"n_eval", a.predictions.size()}};
    if (!a.ok()) j["error"] = a.error;
    arr.push_back(std::move(j));
  }
  return arr;
}

}  // namespace

std::string ReportToCsv(const ExperimentReport& report) {
  std::string out =
      "run_id,defense,train_size,sweep_parameter,sweep_value,mixup_alpha,mmd_weight,"
      "dp_noise_scale,seed,a_r,a_e,g";
  for (auto name : kAttackNames) out += "," + AttackColumn(name);
  out += ",v,v_attack,bound_slack,lower_ok,upper_ok,validation_v,error\n";
  for (const RunRecord& r : report.runs) {
    out += r.run_id + "," + r.defense + "," + std::to_string(r.train_size) + "," +
           r.sweep_parameter + "," + SweepValue(r) + "," + Num(r.mixup_alpha) + "," +
           Num(r.mmd_weight) + "," + Num(r.dp_noise_scale) + "," + std::to_string(r.seed);
    if (!r.ok()) {
      out += std::string(3 + kAttackNames.size() + 7, ',');
      out += CsvField(r.error) + "\n";
      continue;
    }
    out += "," + Num(r.accuracy.a_r) + "," + Num(r.accuracy.a_e) + "," + Num(r.accuracy.g);
    for (const auto& a : r.attacks) out += "," + (a.ok() ? Num(a.advantage) : "");
    out += "," + Num(r.highest.value) + "," + r.highest.attack_name + "," +
           Num(r.verdict.slack) + "," + (r.verdict.lower_ok ? "1" : "0") + "," +
           (r.verdict.upper_ok ? "1" : "0") + "," +
           (r.validation_highest ? Num(r.validation_highest->value) : "") + ",\n";
  }
  return out;
}

nlohmann::json ReportToJson(const ExperimentReport& report) {
  nlohmann::json runs = nlohmann::json::array();
  for (const RunRecord& r : report.runs) {
    nlohmann::json j;
    j["run_id"] = r.run_id;
    j["defense"] = r.defense;
    j["train_size"] = r.train_size;
    j["sweep_parameter"] = r.sweep_parameter;
    j["sweep_value"] = r.sweep_parameter.empty() ? nlohmann::json(nullptr)
                                                 : NumOrNull(r.sweep_value);
    j["mixup_alpha"] = r.mixup_alpha;
    j["mmd_weight"] = r.mmd_weight;
    j["dp_noise_scale"] = r.dp_noise_scale;
    j["seed"] = r.seed;
    if (!r.ok()) {
      j["error"] = r.error;
      runs.push_back(std::move(j));
      continue;
    }
    j["a_r"] = r.accuracy.a_r;
    j["a_e"] = r.accuracy.a_e;
    j["g"] = r.accuracy.g;
    j["attacks"] = AttacksJson(r.attacks);
    j["v"] = r.highest.value;
    j["v_attack"] = r.highest.attack_name;
    j["bound"] = {{"g", r.verdict.g},
                  {"v", r.verdict.v},
                  {"slack", r.verdict.slack},
                  {"lower_ok", r.verdict.lower_ok},
                  {"upper_ok", r.verdict.upper_ok}};
    if (r.validation_highest) {
      j["validation_attacks"] = AttacksJson(r.validation_attacks);
      j["validation_v"] = r.validation_highest->value;
      j["validation_v_attack"] = r.validation_highest->attack_name;
    }
    runs.push_back(std::move(j));
  }
  // Where the report is written is not part of the result.
  nlohmann::json config = ExperimentConfigToJson(report.config);
  config.erase("output_dir");
  return {{"config", config}, {"runs", runs}};
}

std::string TradeoffAccuracyCsv(const ExperimentReport& report) {
  std::string out = "run_id,defense,sweep_parameter,sweep_value,train_acc,test_acc\n";
  for (const RunRecord& r : report.runs) {
    if (!r.ok()) continue;
    out += r.run_id + "," + r.defense + "," + r.sweep_parameter + "," + SweepValue(r) +
           "," + Num(r.accuracy.a_r) + "," + Num(r.accuracy.a_e) + "\n";
  }
  return out;
}

std::string TradeoffAdvantageCsv(const ExperimentReport& report) {
  std::string out =
      "run_id,defense,sweep_parameter,sweep_value,highest_advantage,test_acc\n";
  for (const RunRecord& r : report.runs) {
    if (!r.ok()) continue;
    out += r.run_id + "," + r.defense + "," + r.sweep_parameter + "," + SweepValue(r) +
           "," + Num(r.highest.value) + "," + Num(r.accuracy.a_e) + "\n";
  }
  return out;
}

void WriteReport(const ExperimentReport& report, const std::filesystem::path& dir) {
  WriteTextFile(dir / "report.csv", ReportToCsv(report));
  WriteTextFile(dir / "report.json", ReportToJson(report).dump(2) + "\n");
  std::string timing = "run_id,wall_clock_seconds\n";
  for (const RunRecord& r : report.runs) {
    timing += r.run_id + "," + Num(r.wall_clock_seconds) + "\n";
    if (!r.ok()) continue;
    WriteTextFile(dir / "attacks" / (r.run_id + ".csv"), AttackResultsToCsv(r.attacks));
    WriteTextFile(dir / "attacks" / (r.run_id + ".json"),
                  AttackResultsToJson(r.attacks) + "\n");
    if (!r.validation_attacks.empty()) {
      WriteTextFile(dir / "attacks" / (r.run_id + "_validation.csv"),
                    AttackResultsToCsv(r.validation_attacks));
      WriteTextFile(dir / "attacks" / (r.run_id + "_validation.json"),
                    AttackResultsToJson(r.validation_attacks) + "\n");
    }
    if (!r.history.empty()) {
      WriteTextFile(dir / "history" / (r.run_id + ".csv"), HistoryToCsv(r.history));
    }
    if (r.model) {
      WriteTextFile(dir / "checkpoints" / (r.run_id + ".json"), ModelToJson(*r.model) + "\n");
    }
    if (!r.member_confidence.empty()) {
      WriteTextFile(dir / "cdf" / (r.run_id + "_members.csv"), CdfToCsv(r.member_confidence));
      WriteTextFile(dir / "cdf" / (r.run_id + "_nonmembers.csv"),
                    CdfToCsv(r.nonmember_confidence));
    }
  }
  // Wall-clock times differ between identical runs; they stay out of the
  // report files so those can be compared byte for byte.
  WriteTextFile(dir / "timing.csv", timing);
  if (report.runs.size() > 1) {
    WriteTextFile(dir / "tradeoff_accuracy.csv", TradeoffAccuracyCsv(report));
    WriteTextFile(dir / "tradeoff_advantage.csv", TradeoffAdvantageCsv(report));
  }
}

std::vector<std::string> CheckReportConsistency(const nlohmann::json& report) {
  std::vector<std::string> problems;
  if (!report.contains("runs")) return {"report has no runs array"};
  for (const auto& r : report.at("runs")) {
    const std::string id = r.value("run_id", std::string("?"));
    if (r.contains("error")) continue;
    try {
      const double a_r = r.at("a_r").get<double>();
      const double a_e = r.at("a_e").get<double>();
      const double g = GeneralizationGap(a_r, a_e);
      if (g != r.at("g").get<double>()) problems.push_back(id + ": g != a_r - a_e");
      std::vector<AttackResult> attacks;
      for (const auto& a : r.at("attacks")) {
        AttackResult ar;
        ar.attack_name = a.at("attack").get<std::string>();
        if (a.contains("error")) {
          ar.error = a.at("error").get<std::string>();
        } else {
          ar.accuracy = a.at("accuracy").get<double>();
          ar.advantage = a.at("advantage").get<double>();
          if (ar.advantage != ar.accuracy - 0.5) {
            problems.push_back(id + ": " + ar.attack_name + " advantage != accuracy - 1/2");
          }
        }
        attacks.push_back(std::move(ar));
      }
      const HighestAdvantage hi = FindHighestAdvantage(attacks);
      if (hi.value != r.at("v").get<double>() ||
          hi.attack_name != r.at("v_attack").get<std::string>()) {
        problems.push_back(id + ": v does not match the attack advantages");
      }
      const auto& b = r.at("bound");
      const BoundVerdict verdict = BoundCheck(g, hi.value, b.at("slack").get<double>());
      if (verdict.lower_ok != b.at("lower_ok").get<bool>() ||
          verdict.upper_ok != b.at("upper_ok").get<bool>()) {
        problems.push_back(id + ": bound verdict does not match g and v");
      }
    } catch (const std::exception& e) {
      problems.push_back(id + ": " + e.what());
    }
  }
  return problems;
}

}  // namespace mialab
