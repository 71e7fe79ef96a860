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

#include "dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "errors.hpp"
#include "rng.hpp"
#include "text_io.hpp"

namespace mialab {

Dataset::Dataset(std::vector<Instance> instances, std::size_t num_classes)
    : instances_(std::move(instances)), num_classes_(num_classes), dim_(0) {
  if (instances_.empty()) throw InvariantError("Dataset: no instances");
  if (num_classes_ == 0) throw InvariantError("Dataset: zero classes");
  dim_ = instances_.front().features.size();
  if (dim_ == 0) throw InvariantError("Dataset: zero-length features");
  for (const Instance& inst : instances_) {
    if (inst.features.size() != dim_) {
      throw InvariantError("Dataset: inconsistent feature length");
    }
    if (inst.label >= num_classes_) {
      throw InvariantError("Dataset: label out of range");
    }
  }
}

std::vector<Instance> Dataset::Select(std::span<const std::size_t> ids) const {
  std::vector<Instance> out;
  out.reserve(ids.size());
  for (std::size_t id : ids) {
    if (id >= instances_.size()) throw ParameterError("Dataset: bad index");
    out.push_back(instances_[id]);
  }
  return out;
}

bool operator==(const Dataset& a, const Dataset& b) {
  if (a.num_classes_ != b.num_classes_ || a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].label != b[i].label || a[i].features != b[i].features) {
      return false;
    }
  }
  return true;
}

Dataset GenerateSynthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.num_classes < 2) throw ParameterError("generate: need >= 2 classes");
  if (spec.dim < 1) throw ParameterError("generate: need dim >= 1");
  if (spec.per_class < 1) throw ParameterError("generate: need per_class >= 1");
  if (!(spec.cluster_spread >= 0.0) || !std::isfinite(spec.cluster_spread)) {
    throw ParameterError("generate: cluster_spread must be finite and >= 0");
  }
  Rng rng(seed);
  std::vector<std::vector<double>> means(spec.num_classes,
                                         std::vector<double>(spec.dim));
  for (auto& mean : means) {
    for (double& v : mean) v = rng.Gaussian();
  }
  std::vector<Instance> instances;
  instances.reserve(spec.num_classes * spec.per_class);
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    for (std::size_t i = 0; i < spec.per_class; ++i) {
      Instance inst;
      inst.label = c;
      inst.features.resize(spec.dim);
      for (std::size_t k = 0; k < spec.dim; ++k) {
        inst.features[k] = means[c][k] + spec.cluster_spread * rng.Gaussian();
      }
      instances.push_back(std::move(inst));
    }
  }
  return Dataset(std::move(instances), spec.num_classes);
}

SplitPlan SplitThreeWay(const Dataset& dataset, std::size_t eval_size,
                        std::uint64_t seed) {
  if (eval_size == 0 || eval_size % 2 != 0) {
    throw ParameterError("split: eval_size must be positive and even");
  }
  if (eval_size >= dataset.size()) {
    throw ParameterError("split: eval_size must be smaller than the dataset");
  }
  std::vector<std::size_t> ids(dataset.size());
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  Rng rng(seed);
  rng.Shuffle(std::span<std::size_t>(ids));

  const std::size_t rest = dataset.size() - eval_size;
  const std::size_t general = rest - rest / 2;
  SplitPlan plan;
  plan.seed = seed;
  plan.eval_ids.assign(ids.begin(), ids.begin() + eval_size);
  plan.general_ids.assign(ids.begin() + eval_size,
                          ids.begin() + eval_size + general);
  plan.holdout_ids.assign(ids.begin() + eval_size + general, ids.end());
  return plan;
}

std::size_t MembershipBitmap::count() const {
  return static_cast<std::size_t>(std::count(flags_.begin(), flags_.end(), true));
}

TrainingSample SampleTrainingSet(const SplitPlan& plan, Pool pool,
                                 std::size_t train_size, std::uint64_t seed,
                                 std::span<const std::size_t> exclude) {
  const std::size_t half = plan.eval_ids.size() / 2;
  if (train_size < half) {
    throw ParameterError("sample: train_size must be at least |D_E|/2");
  }
  const auto& source =
      pool == Pool::kGeneral ? plan.general_ids : plan.holdout_ids;
  std::vector<std::size_t> candidates;
  if (exclude.empty()) {
    candidates = source;
  } else {
    std::unordered_set<std::size_t> banned(exclude.begin(), exclude.end());
    for (std::size_t id : source) {
      if (!banned.contains(id)) candidates.push_back(id);
    }
  }
  const std::size_t fill = train_size - half;
  if (candidates.size() < fill) {
    throw ParameterError("sample: pool has " + std::to_string(candidates.size()) +
                         " instances, need " + std::to_string(fill));
  }

  Rng rng(seed);
  std::vector<std::size_t> positions(plan.eval_ids.size());
  std::iota(positions.begin(), positions.end(), std::size_t{0});
  rng.Shuffle(std::span<std::size_t>(positions));
  std::vector<bool> flags(plan.eval_ids.size(), false);
  for (std::size_t i = 0; i < half; ++i) flags[positions[i]] = true;

  TrainingSample sample;
  sample.indices.reserve(train_size);
  for (std::size_t i = 0; i < plan.eval_ids.size(); ++i) {
    if (flags[i]) sample.indices.push_back(plan.eval_ids[i]);
  }
  rng.Shuffle(std::span<std::size_t>(candidates));
  sample.indices.insert(sample.indices.end(), candidates.begin(),
                        candidates.begin() + fill);
  sample.bitmap = MembershipBitmap(std::move(flags));
  return sample;
}

BalancedEvalSet::BalancedEvalSet(std::vector<Instance> queries,
                                 std::vector<bool> is_member)
    : queries_(std::move(queries)), is_member_(std::move(is_member)) {
  if (queries_.size() != is_member_.size()) {
    throw InvariantError("eval set: membership length mismatch");
  }
  if (queries_.empty()) throw InvariantError("eval set: empty");
  const auto members = std::count(is_member_.begin(), is_member_.end(), true);
  if (static_cast<std::size_t>(members) * 2 != queries_.size()) {
    throw InvariantError("eval set: not balanced between members and non-members");
  }
}

std::vector<Instance> BalancedEvalSet::Members() const {
  std::vector<Instance> out;
  for (std::size_t i = 0; i < size(); ++i) {
    if (is_member_[i]) out.push_back(queries_[i]);
  }
  return out;
}

std::vector<Instance> BalancedEvalSet::NonMembers() const {
  std::vector<Instance> out;
  for (std::size_t i = 0; i < size(); ++i) {
    if (!is_member_[i]) out.push_back(queries_[i]);
  }
  return out;
}

BalancedEvalSet BuildBalancedEvalSet(const Dataset& dataset,
                                     const SplitPlan& plan,
                                     const MembershipBitmap& bitmap) {
  if (bitmap.size() != plan.eval_ids.size()) {
    throw InvariantError("eval set: bitmap length differs from |D_E|");
  }
  if (bitmap.count() * 2 != bitmap.size()) {
    throw InvariantError("eval set: bitmap must flag exactly half of D_E");
  }
  return BalancedEvalSet(dataset.Select(plan.eval_ids), bitmap.flags());
}

std::string DatasetToCsv(const Dataset& dataset) {
  std::string out;
  for (std::size_t k = 0; k < dataset.dim(); ++k) {
    out += "f" + std::to_string(k) + ",";
  }
  out += "label\n";
  for (const Instance& inst : dataset.instances()) {
    for (double v : inst.features) {
      out += FormatDouble(v);
      out += ',';
    }
    out += std::to_string(inst.label);
    out += '\n';
  }
  return out;
}

void WriteDatasetCsv(const Dataset& dataset, const std::filesystem::path& path) {
  WriteTextFile(path, DatasetToCsv(dataset));
}

Dataset DatasetFromCsv(const std::string& text,
                       std::optional<std::size_t> num_classes) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw IoError("dataset csv: missing header");
  const std::size_t columns = SplitFields(line, ',').size();
  if (columns < 2) throw IoError("dataset csv: need features and a label");
  std::vector<Instance> instances;
  std::size_t max_label = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto fields = SplitFields(line, ',');
    if (fields.size() != columns) throw IoError("dataset csv: ragged row");
    Instance inst;
    inst.features.reserve(columns - 1);
    for (std::size_t k = 0; k + 1 < columns; ++k) {
      inst.features.push_back(ParseDouble(fields[k]));
    }
    const double label = ParseDouble(fields.back());
    if (label < 0 || label != static_cast<double>(static_cast<std::size_t>(label))) {
      throw IoError("dataset csv: label must be a non-negative integer");
    }
    inst.label = static_cast<std::size_t>(label);
    max_label = std::max(max_label, inst.label);
    instances.push_back(std::move(inst));
  }
  return Dataset(std::move(instances), num_classes.value_or(max_label + 1));
}

Dataset ReadDatasetCsv(const std::filesystem::path& path,
                       std::optional<std::size_t> num_classes) {
  return DatasetFromCsv(ReadTextFile(path), num_classes);
}

std::string SplitPlanToJson(const SplitPlan& plan) {
  nlohmann::json j;
  j["seed"] = plan.seed;
  j["eval_ids"] = plan.eval_ids;
  j["general_ids"] = plan.general_ids;
  j["holdout_ids"] = plan.holdout_ids;
  return j.dump();
}

SplitPlan SplitPlanFromJson(const std::string& text) {
  try {
    auto j = nlohmann::json::parse(text);
    SplitPlan plan;
    plan.seed = j.at("seed").get<std::uint64_t>();
    plan.eval_ids = j.at("eval_ids").get<std::vector<std::size_t>>();
    plan.general_ids = j.at("general_ids").get<std::vector<std::size_t>>();
    plan.holdout_ids = j.at("holdout_ids").get<std::vector<std::size_t>>();
    return plan;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("split manifest: ") + e.what());
  }
}

}  // namespace mialab
