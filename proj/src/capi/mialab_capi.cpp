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


#include "mialab/mialab.h"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <filesystem>
#include <limits>
#include <memory>
#include <new>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "attacks.hpp"
#include "errors.hpp"
#include "runner.hpp"
#include "text_io.hpp"

struct mialab_config {
  mialab::ExperimentConfig value;
};

struct mialab_report {
  mialab::ExperimentReport value;
};

namespace {

thread_local std::string g_last_error;

class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

template <typename Fn>
mialab_status Guard(Fn&& fn) {
  g_last_error.clear();
  try {
    fn();
    return MIALAB_OK;
  } catch (const mialab::ConfigError& e) {
    g_last_error = e.what();
    return MIALAB_ERR_CONFIG;
  } catch (const mialab::IoError& e) {
    g_last_error = e.what();
    return MIALAB_ERR_IO;
  } catch (const ArgumentError& e) {
    g_last_error = e.what();
    return MIALAB_ERR_ARGUMENT;
  } catch (const mialab::InvariantError& e) {
    g_last_error = e.what();
    return MIALAB_ERR_INVARIANT;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return MIALAB_ERR_RUNTIME;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return MIALAB_ERR_RUNTIME;
  } catch (...) {
    g_last_error = "unknown error";
    return MIALAB_ERR_RUNTIME;
  }
}

template <typename T>
void Require(const T* p, const char* what) {
  if (p == nullptr) throw ArgumentError(std::string(what) + " is null");
}

char* Dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::filesystem::path Dir(const char* out_dir) {
  Require(out_dir, "out_dir");
  return std::filesystem::path(out_dir);
}

nlohmann::json ParseJson(const std::string& text, const std::string& what) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw mialab::ConfigError(what + ": " + e.what());
  }
}

std::string SummaryTable(const nlohmann::json& report) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-7s %-12s %-15s %8s %8s %8s %8s  %-18s %s\n", "run",
                "defense", "sweep", "a_R", "a_E", "g", "v", "v_attack", "bound");
  out << line;
  for (const auto& r : report.at("runs")) {
    std::string sweep;
    if (!r.at("sweep_parameter").get<std::string>().empty() &&
        !r.at("sweep_value").is_null()) {
      sweep = r.at("sweep_parameter").get<std::string>() + "=" +
              mialab::FormatDouble(r.at("sweep_value").get<double>());
    }
    if (r.contains("error")) {
      std::snprintf(line, sizeof line, "%-7s %-12s %-15s  error: %s\n",
                    r.at("run_id").get<std::string>().c_str(),
                    r.at("defense").get<std::string>().c_str(), sweep.c_str(),
                    r.at("error").get<std::string>().c_str());
      out << line;
      continue;
    }
    const auto& b = r.at("bound");
    const char* verdict = b.at("lower_ok").get<bool>() && b.at("upper_ok").get<bool>()
                              ? "within"
                              : (b.at("lower_ok").get<bool>() ? "above" : "below");
    std::snprintf(line, sizeof line, "%-7s %-12s %-15s %8.4f %8.4f %8.4f %8.4f  %-18s %s\n",
                  r.at("run_id").get<std::string>().c_str(),
                  r.at("defense").get<std::string>().c_str(), sweep.c_str(),
                  r.at("a_r").get<double>(), r.at("a_e").get<double>(),
                  r.at("g").get<double>(), r.at("v").get<double>(),
                  r.at("v_attack").get<std::string>().c_str(), verdict);
    out << line;
  }
  return out.str();
}

}  // namespace

extern "C" {

const char* mialab_version(void) { return "0.1.0"; }

const char* mialab_last_error(void) { return g_last_error.c_str(); }

void mialab_free_string(char* s) { std::free(s); }

mialab_status mialab_config_new(mialab_config** out) {
  return Guard([&] {
    Require(out, "out");
    *out = new mialab_config{};
  });
}

mialab_status mialab_config_load(const char* path, mialab_config** out) {
  return Guard([&] {
    Require(path, "path");
    Require(out, "out");
    mialab::ExperimentConfig c;
    try {
      c = mialab::LoadExperimentConfig(path);
    } catch (const mialab::IoError& e) {
      throw mialab::ConfigError(e.what());
    }
    *out = new mialab_config{std::move(c)};
  });
}

mialab_status mialab_config_from_json(const char* json, mialab_config** out) {
  return Guard([&] {
    Require(json, "json");
    Require(out, "out");
    *out = new mialab_config{mialab::ExperimentConfigFromJson(ParseJson(json, "config"))};
  });
}

mialab_status mialab_config_clone(const mialab_config* config, mialab_config** out) {
  return Guard([&] {
    Require(config, "config");
    Require(out, "out");
    *out = new mialab_config{config->value};
  });
}

mialab_status mialab_config_set(mialab_config* config, const char* key,
                                const char* json_value) {
  return Guard([&] {
    Require(config, "config");
    Require(key, "key");
    Require(json_value, "value");
    nlohmann::json root = mialab::ExperimentConfigToJson(config->value);
    const std::string path(key);
    nlohmann::json* node = &root;
    std::size_t start = 0;
    while (true) {
      const std::size_t dot = path.find('.', start);
      const std::string part = path.substr(start, dot - start);
      if (part.empty() || !node->is_object() || !node->contains(part)) {
        throw mialab::ConfigError("unknown config field \"" + path + "\"");
      }
      if (dot == std::string::npos) {
        (*node)[part] = ParseJson(json_value, path);
        break;
      }
      node = &(*node)[part];
      // shadow.train defaults to the target recipe until it is set.
      if (node->is_null() && part == "train") *node = root.at("target");
      start = dot + 1;
    }
    config->value = mialab::ExperimentConfigFromJson(root);
  });
}

mialab_status mialab_config_validate(const mialab_config* config) {
  return Guard([&] {
    Require(config, "config");
    config->value.Validate();
  });
}

mialab_status mialab_config_to_json(const mialab_config* config, char** out) {
  return Guard([&] {
    Require(config, "config");
    Require(out, "out");
    *out = Dup(mialab::ExperimentConfigToJson(config->value).dump(2));
  });
}

void mialab_config_free(mialab_config* config) { delete config; }

mialab_status mialab_generate_data(const mialab_config* config, const char* out_dir) {
  return Guard([&] {
    Require(config, "config");
    const auto dir = Dir(out_dir);
    config->value.Validate();
    const auto& c = config->value;
    mialab::Dataset ds = mialab::GenerateSynthetic(
        c.dataset, c.dataset_seed.value_or(mialab::StageSeed(c, mialab::Stage::kDataset)));
    mialab::SplitPlan plan =
        mialab::SplitThreeWay(ds, c.eval_size, mialab::StageSeed(c, mialab::Stage::kSplit));
    mialab::WriteDatasetCsv(ds, dir / "dataset.csv");
    mialab::WriteTextFile(dir / "split.json", mialab::SplitPlanToJson(plan) + "\n");
  });
}

mialab_status mialab_train_target(const mialab_config* config, const char* out_dir) {
  return Guard([&] {
    Require(config, "config");
    const auto dir = Dir(out_dir);
    const auto& c = config->value;
    c.Validate();
    mialab::PreparedData data = mialab::PrepareData(c);
    mialab::TargetRun run = mialab::TrainTarget(c, data);
    mialab::TrainConfig recipe = c.target;
    recipe.seed = mialab::StageSeed(c, mialab::Stage::kTargetTrain);
    mialab::WriteTextFile(dir / "checkpoints" / "target.json",
                          mialab::ModelToJson(run.training.model) + "\n");
    mialab::WriteTextFile(dir / "history" / "target.csv",
                          mialab::HistoryToCsv(run.training.history));
    mialab::WriteTextFile(dir / "train_config.json",
                          mialab::TrainConfigToJson(recipe).dump(2) + "\n");
    nlohmann::json acc{{"a_r", run.accuracy.a_r},
                       {"a_e", run.accuracy.a_e},
                       {"g", run.accuracy.g}};
    mialab::WriteTextFile(dir / "accuracy.json", acc.dump(2) + "\n");
  });
}

mialab_status mialab_run_validation_check(const mialab_config* config,
                                          const char* out_dir) {
  return Guard([&] {
    Require(config, "config");
    const auto dir = Dir(out_dir);
    if (!mialab::UsesMmd(config->value.defense)) {
      throw mialab::ConfigError("validation check: the defense must include mmd");
    }
    const auto results = mialab::RunValidationMiCheck(config->value);
    mialab::WriteTextFile(dir / "validation_attacks.csv", mialab::AttackResultsToCsv(results));
    mialab::WriteTextFile(dir / "validation_attacks.json",
                          mialab::AttackResultsToJson(results) + "\n");
  });
}

mialab_status mialab_run_experiment(const mialab_config* config, mialab_report** out) {
  return Guard([&] {
    Require(config, "config");
    Require(out, "out");
    auto report = std::make_unique<mialab_report>();
    report->value.config = config->value;
    report->value.runs.push_back(mialab::RunExperiment(config->value));
    *out = report.release();
  });
}

mialab_status mialab_run_defense_comparison(const mialab_config* config,
                                            const char* const* defenses,
                                            size_t num_defenses, const double* values,
                                            size_t num_values, mialab_report** out) {
  return Guard([&] {
    Require(config, "config");
    Require(out, "out");
    if (num_defenses == 0) throw ArgumentError("no defenses given");
    Require(defenses, "defenses");
    if (num_values > 0) Require(values, "values");
    std::vector<mialab::Defense> list;
    for (size_t i = 0; i < num_defenses; ++i) {
      Require(defenses[i], "defense name");
      list.push_back(mialab::ParseDefense(defenses[i]));
    }
    config->value.Validate();
    auto report = std::make_unique<mialab_report>();
    report->value = mialab::RunDefenseComparison(
        config->value, list, std::span<const double>(values, num_values));
    *out = report.release();
  });
}

mialab_status mialab_run_size_sweep(const mialab_config* config, const size_t* sizes,
                                    size_t num_sizes, mialab_report** out) {
  return Guard([&] {
    Require(config, "config");
    Require(out, "out");
    if (num_sizes == 0) throw ArgumentError("no sizes given");
    Require(sizes, "sizes");
    std::vector<std::size_t> list(sizes, sizes + num_sizes);
    auto report = std::make_unique<mialab_report>();
    report->value = mialab::RunTrainSizeSweep(config->value, list);
    *out = report.release();
  });
}

mialab_status mialab_report_num_runs(const mialab_report* report, size_t* out) {
  return Guard([&] {
    Require(report, "report");
    Require(out, "out");
    *out = report->value.runs.size();
  });
}

mialab_status mialab_report_get(const mialab_report* report, size_t index,
                                const char* field, double* out) {
  return Guard([&] {
    Require(report, "report");
    Require(field, "field");
    Require(out, "out");
    if (index >= report->value.runs.size()) throw ArgumentError("run index out of range");
    const mialab::RunRecord& r = report->value.runs[index];
    const std::string f(field);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    if (f == "train_size") {
      *out = static_cast<double>(r.train_size);
    } else if (f == "sweep_value") {
      *out = r.sweep_parameter.empty() ? nan : r.sweep_value;
    } else if (!r.ok()) {
      if (f != "a_r" && f != "a_e" && f != "g" && f != "v" && f != "validation_v" &&
          f.rfind("adv:", 0) != 0) {
        throw ArgumentError("unknown report field \"" + f + "\"");
      }
      *out = nan;
    } else if (f == "a_r") {
      *out = r.accuracy.a_r;
    } else if (f == "a_e") {
      *out = r.accuracy.a_e;
    } else if (f == "g") {
      *out = r.accuracy.g;
    } else if (f == "v") {
      *out = r.highest.value;
    } else if (f == "validation_v") {
      *out = r.validation_highest ? r.validation_highest->value : nan;
    } else if (f.rfind("adv:", 0) == 0) {
      const std::string name = f.substr(4);
      for (const auto& a : r.attacks) {
        if (a.attack_name == name) {
          *out = a.ok() ? a.advantage : nan;
          return;
        }
      }
      throw ArgumentError("unknown attack \"" + name + "\"");
    } else {
      throw ArgumentError("unknown report field \"" + f + "\"");
    }
  });
}

mialab_status mialab_report_to_csv(const mialab_report* report, char** out) {
  return Guard([&] {
    Require(report, "report");
    Require(out, "out");
    *out = Dup(mialab::ReportToCsv(report->value));
  });
}

mialab_status mialab_report_to_json(const mialab_report* report, char** out) {
  return Guard([&] {
    Require(report, "report");
    Require(out, "out");
    *out = Dup(mialab::ReportToJson(report->value).dump(2));
  });
}

mialab_status mialab_report_write(const mialab_report* report, const char* out_dir) {
  return Guard([&] {
    Require(report, "report");
    mialab::WriteReport(report->value, Dir(out_dir));
  });
}

void mialab_report_free(mialab_report* report) { delete report; }

mialab_status mialab_check_report_file(const char* path, char** summary) {
  return Guard([&] {
    Require(path, "path");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(mialab::ReadTextFile(path));
    } catch (const nlohmann::json::exception& e) {
      throw mialab::IoError(std::string(path) + ": " + e.what());
    }
    const auto problems = mialab::CheckReportConsistency(j);
    if (summary != nullptr) {
      try {
        *summary = Dup(SummaryTable(j));
      } catch (const nlohmann::json::exception& e) {
        throw mialab::InvariantError(std::string("report: ") + e.what());
      }
    }
    if (!problems.empty()) {
      std::string msg = "report is inconsistent:";
      for (const auto& p : problems) msg += "\n  " + p;
      throw mialab::InvariantError(msg);
    }
  });
}

}  // extern "C"
