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


// mialab command-line front end. Talks to the library only through the C API.

#include <cstdio>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mialab/mialab.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

// Thrown out of the handlers to unwind with an exit code.
struct Failure {
  int code;
};

int ExitCodeFor(mialab_status s) {
  if (s == MIALAB_OK) return kExitOk;
  if (s == MIALAB_ERR_CONFIG || s == MIALAB_ERR_ARGUMENT) return kExitConfig;
  return kExitRuntime;
}

void Check(mialab_status s, const char* what) {
  if (s == MIALAB_OK) return;
  std::fprintf(stderr, "mialab: %s: %s\n", what, mialab_last_error());
  throw Failure{ExitCodeFor(s)};
}

struct ConfigHandle {
  mialab_config* ptr = nullptr;
  ~ConfigHandle() { mialab_config_free(ptr); }
};

struct ReportHandle {
  mialab_report* ptr = nullptr;
  ~ReportHandle() { mialab_report_free(ptr); }
};

std::string TakeString(char* s) {
  std::string out = s ? s : "";
  mialab_free_string(s);
  return out;
}

// Flags that mirror ExperimentConfig fields. Each one that is given becomes a
// mialab_config_set call on top of --config.
struct Overrides {
  std::string config_path;
  std::optional<unsigned long long> seed;
  std::optional<std::string> output_dir;
  std::optional<std::size_t> classes, dim, per_class, eval_size, train_size, shadows,
      epochs, batch_size, threads, queries;
  std::optional<unsigned long long> dataset_seed;
  std::optional<double> spread, lr, l2, dropout_keep, mixup_alpha, mmd_weight, dp_clip,
      dp_noise, bound_slack, top_one_percentile;
  std::optional<std::string> defense;
  std::vector<std::size_t> hidden;
  std::vector<std::string> sets;

  void Attach(CLI::App* app) {
    app->add_option("--config", config_path, "Experiment config JSON");
    app->add_option("--seed", seed, "Global seed (overrides the config)");
    app->add_option("-o,--output-dir", output_dir, "Output directory");
    app->add_option("--classes", classes, "dataset.num_classes");
    app->add_option("--dim", dim, "dataset.dim");
    app->add_option("--per-class", per_class, "dataset.per_class");
    app->add_option("--spread", spread, "dataset.cluster_spread");
    app->add_option("--dataset-seed", dataset_seed, "dataset.seed");
    app->add_option("--eval-size", eval_size, "|D_E|");
    app->add_option("--train-size", train_size, "Training set size");
    app->add_option("--shadows", shadows, "shadow.count");
    app->add_option("--defense", defense,
                    "none | mixup | mmd | mmd+mixup | dpsgd | dpsgd+mixup");
    app->add_option("--hidden", hidden, "target.hidden_layers")->delimiter(',');
    app->add_option("--epochs", epochs, "target.epochs");
    app->add_option("--batch-size", batch_size, "target.batch_size");
    app->add_option("--lr", lr, "target.learning_rate");
    app->add_option("--l2", l2, "target.l2_coeff");
    app->add_option("--dropout-keep", dropout_keep, "target.dropout_keep");
    app->add_option("--mixup-alpha", mixup_alpha, "target.mixup_alpha");
    app->add_option("--mmd-weight", mmd_weight, "target.mmd_weight");
    app->add_option("--dp-clip", dp_clip, "target.dp_clip_norm");
    app->add_option("--dp-noise", dp_noise, "target.dp_noise_scale");
    app->add_option("--top-one-percentile", top_one_percentile,
                    "attack.top_one_percentile");
    app->add_option("--random-queries", queries, "attack.num_random_queries");
    app->add_option("--threads", threads, "Shadow training threads");
    app->add_option("--bound-slack", bound_slack, "Tolerance of the bound check");
    app->add_option("--set", sets, "Any field as key=json, e.g. mmd.bandwidth_base=2");
  }

  void Apply(mialab_config* c) const {
    auto set = [&](const std::string& key, const nlohmann::json& value) {
      Check(mialab_config_set(c, key.c_str(), value.dump().c_str()), key.c_str());
    };
    if (seed) set("seed", *seed);
    if (output_dir) set("output_dir", *output_dir);
    if (classes) set("dataset.num_classes", *classes);
    if (dim) set("dataset.dim", *dim);
    if (per_class) set("dataset.per_class", *per_class);
    if (spread) set("dataset.cluster_spread", *spread);
    if (dataset_seed) set("dataset.seed", *dataset_seed);
    if (eval_size) set("eval_size", *eval_size);
    if (train_size) set("train_size", *train_size);
    if (shadows) set("shadow.count", *shadows);
    if (defense) set("defense", *defense);
    if (!hidden.empty()) set("target.hidden_layers", hidden);
    if (epochs) set("target.epochs", *epochs);
    if (batch_size) set("target.batch_size", *batch_size);
    if (lr) set("target.learning_rate", *lr);
    if (l2) set("target.l2_coeff", *l2);
    if (dropout_keep) set("target.dropout_keep", *dropout_keep);
    if (mixup_alpha) set("target.mixup_alpha", *mixup_alpha);
    if (mmd_weight) set("target.mmd_weight", *mmd_weight);
    if (dp_clip) set("target.dp_clip_norm", *dp_clip);
    if (dp_noise) set("target.dp_noise_scale", *dp_noise);
    if (top_one_percentile) set("attack.top_one_percentile", *top_one_percentile);
    if (queries) set("attack.num_random_queries", *queries);
    if (threads) set("threads", *threads);
    if (bound_slack) set("bound_slack", *bound_slack);
    for (const std::string& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos || eq == 0) {
        std::fprintf(stderr, "mialab: --set expects key=value, got \"%s\"\n", kv.c_str());
        throw Failure{kExitConfig};
      }
      const std::string key = kv.substr(0, eq);
      Check(mialab_config_set(c, key.c_str(), kv.substr(eq + 1).c_str()), key.c_str());
    }
  }
};

struct Loaded {
  ConfigHandle config;
  nlohmann::json json;   // the effective config, for reading fields back
  std::string output_dir;
};

void Load(const Overrides& o, Loaded& out) {
  if (o.config_path.empty()) {
    Check(mialab_config_new(&out.config.ptr), "config");
  } else {
    Check(mialab_config_load(o.config_path.c_str(), &out.config.ptr), o.config_path.c_str());
  }
  o.Apply(out.config.ptr);
  Check(mialab_config_validate(out.config.ptr), "invalid config");
  char* text = nullptr;
  Check(mialab_config_to_json(out.config.ptr, &text), "config");
  out.json = nlohmann::json::parse(TakeString(text));
  out.output_dir = out.json.at("output_dir").get<std::string>();
}

void WriteAndSummarize(const ReportHandle& report, const std::string& dir) {
  Check(mialab_report_write(report.ptr, dir.c_str()), "writing report");
  char* summary = nullptr;
  Check(mialab_check_report_file((dir + "/report.json").c_str(), &summary), "report");
  std::fputs(TakeString(summary).c_str(), stdout);
  std::printf("wrote %s/report.csv\n", dir.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Membership inference attacks and defenses on synthetic data"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(mialab_version()));

  Overrides o;
  std::function<void()> action;

  auto* gen = app.add_subcommand("gen-data", "Generate the dataset and split manifest");
  o.Attach(gen);
  gen->callback([&] {
    action = [&] {
      Loaded l;
      Load(o, l);
      Check(mialab_generate_data(l.config.ptr, l.output_dir.c_str()), "gen-data");
      std::printf("wrote %s/dataset.csv and %s/split.json\n", l.output_dir.c_str(),
                  l.output_dir.c_str());
    };
  });

  auto* train = app.add_subcommand("train", "Train the target model only");
  o.Attach(train);
  train->callback([&] {
    action = [&] {
      Loaded l;
      Load(o, l);
      Check(mialab_train_target(l.config.ptr, l.output_dir.c_str()), "train");
      std::printf("wrote %s/checkpoints/target.json\n", l.output_dir.c_str());
    };
  });

  auto* attack = app.add_subcommand("attack", "Train target and shadows, run all attacks");
  o.Attach(attack);
  attack->callback([&] {
    action = [&] {
      Loaded l;
      Load(o, l);
      ReportHandle r;
      Check(mialab_run_experiment(l.config.ptr, &r.ptr), "attack");
      WriteAndSummarize(r, l.output_dir);
    };
  });

  std::vector<std::string> defenses;
  std::vector<double> values;
  auto* compare = app.add_subcommand("defend-compare", "Grid over defenses and parameters");
  o.Attach(compare);
  compare->add_option("--defenses", defenses, "Defenses to compare")
      ->delimiter(',')
      ->required();
  compare->add_option("--values", values,
                      "MMD weights or DP noise scales (default: config sweep values)")
      ->delimiter(',');
  compare->callback([&] {
    action = [&] {
      Loaded l;
      Load(o, l);
      if (values.empty() && !l.json.at("sweep").is_null()) {
        values = l.json.at("sweep").at("values").get<std::vector<double>>();
      }
      std::vector<const char*> names;
      for (const auto& d : defenses) names.push_back(d.c_str());
      ReportHandle r;
      Check(mialab_run_defense_comparison(l.config.ptr, names.data(), names.size(),
                                          values.data(), values.size(), &r.ptr),
            "defend-compare");
      WriteAndSummarize(r, l.output_dir);
    };
  });

  auto* vcheck = app.add_subcommand("validation-check",
                                    "Attack the validation set against unseen data");
  o.Attach(vcheck);
  vcheck->callback([&] {
    action = [&] {
      Loaded l;
      Load(o, l);
      Check(mialab_run_validation_check(l.config.ptr, l.output_dir.c_str()),
            "validation-check");
      std::printf("wrote %s/validation_attacks.csv\n", l.output_dir.c_str());
    };
  });

  std::vector<std::size_t> sizes;
  auto* sweep = app.add_subcommand("size-sweep", "One full run per training set size");
  o.Attach(sweep);
  sweep->add_option("--sizes", sizes, "Ascending training set sizes")->delimiter(',');
  sweep->callback([&] {
    action = [&] {
      Loaded l;
      Load(o, l);
      if (sizes.empty() && !l.json.at("sweep").is_null() &&
          l.json.at("sweep").at("parameter") == "train_size") {
        for (double v : l.json.at("sweep").at("values")) {
          sizes.push_back(static_cast<std::size_t>(v));
        }
      }
      if (sizes.empty()) {
        std::fprintf(stderr, "mialab: size-sweep needs --sizes\n");
        throw Failure{kExitConfig};
      }
      ReportHandle r;
      Check(mialab_run_size_sweep(l.config.ptr, sizes.data(), sizes.size(), &r.ptr),
            "size-sweep");
      WriteAndSummarize(r, l.output_dir);
    };
  });

  std::string report_path;
  auto* report = app.add_subcommand("report", "Check a report.json and print its runs");
  report->add_option("path", report_path, "report.json or the directory holding it")
      ->required();
  report->callback([&] {
    action = [&] {
      std::string path = report_path;
      if (path.size() < 5 || path.substr(path.size() - 5) != ".json") {
        path += "/report.json";
      }
      char* summary = nullptr;
      const mialab_status s = mialab_check_report_file(path.c_str(), &summary);
      std::fputs(TakeString(summary).c_str(), stdout);
      Check(s, "report");
      std::printf("report is consistent\n");
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }
  try {
    if (action) action();
  } catch (const Failure& f) {
    return f.code;
  }
  return kExitOk;
}
