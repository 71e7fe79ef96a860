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

#ifndef MIALAB_CORE_DATASET_HPP_
#define MIALAB_CORE_DATASET_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mialab {

struct Instance {
  std::vector<double> features;
  std::size_t label = 0;
};

// An immutable labeled population. Every instance has `dim()` features and a
// label below `num_classes()`.
class Dataset {
 public:
  Dataset(std::vector<Instance> instances, std::size_t num_classes);

  std::size_t size() const { return instances_.size(); }
  std::size_t dim() const { return dim_; }
  std::size_t num_classes() const { return num_classes_; }
  const Instance& operator[](std::size_t i) const { return instances_[i]; }
  std::span<const Instance> instances() const { return instances_; }

  std::vector<Instance> Select(std::span<const std::size_t> ids) const;

  friend bool operator==(const Dataset& a, const Dataset& b);

 private:
  std::vector<Instance> instances_;
  std::size_t num_classes_;
  std::size_t dim_;
};

struct SyntheticSpec {
  std::size_t num_classes = 10;
  std::size_t dim = 20;
  std::size_t per_class = 2000;
  double cluster_spread = 1.0;
};

// Gaussian clusters. Class means are drawn once from N(0, I_d); each instance
// of class j is mean_j + cluster_spread * N(0, I_d). Instances are emitted in
// class order, `per_class` at a time. Draw order: all means (class-major,
// coordinate-minor), then the instances in emission order.
Dataset GenerateSynthetic(const SyntheticSpec& spec, std::uint64_t seed);

// Disjoint evaluation / general / holdout index sets (D_E, D_G, D_H).
struct SplitPlan {
  std::vector<std::size_t> eval_ids;
  std::vector<std::size_t> general_ids;
  std::vector<std::size_t> holdout_ids;
  std::uint64_t seed = 0;

  friend bool operator==(const SplitPlan&, const SplitPlan&) = default;
};

// Uniform random partition. D_E gets `eval_size` ids; the rest is halved with
// the odd remainder going to D_G.
SplitPlan SplitThreeWay(const Dataset& dataset, std::size_t eval_size,
                        std::uint64_t seed);

// One flag per position of SplitPlan::eval_ids.
class MembershipBitmap {
 public:
  MembershipBitmap() = default;
  explicit MembershipBitmap(std::vector<bool> flags)
      : flags_(std::move(flags)) {}

  std::size_t size() const { return flags_.size(); }
  bool operator[](std::size_t i) const { return flags_[i]; }
  std::size_t count() const;
  const std::vector<bool>& flags() const { return flags_; }

  friend bool operator==(const MembershipBitmap&,
                         const MembershipBitmap&) = default;

 private:
  std::vector<bool> flags_;
};

enum class Pool { kGeneral, kHoldout };

struct TrainingSample {
  std::vector<std::size_t> indices;  // dataset ids
  MembershipBitmap bitmap;
};

// Exactly |D_E|/2 ids drawn from D_E plus (train_size - |D_E|/2) drawn from
// the named pool. `exclude` removes ids from the pool before drawing (used to
// keep a reserved validation set out of training).
TrainingSample SampleTrainingSet(const SplitPlan& plan, Pool pool,
                                 std::size_t train_size, std::uint64_t seed,
                                 std::span<const std::size_t> exclude = {});

// Balanced member / non-member evaluation data. Queries carry no membership;
// the ground truth is kept apart and only consulted when scoring.
class BalancedEvalSet {
 public:
  BalancedEvalSet(std::vector<Instance> queries, std::vector<bool> is_member);

  std::span<const Instance> queries() const { return queries_; }
  const std::vector<bool>& membership() const { return is_member_; }
  std::size_t size() const { return queries_.size(); }
  std::size_t member_count() const { return size() / 2; }

  std::vector<Instance> Members() const;
  std::vector<Instance> NonMembers() const;

 private:
  std::vector<Instance> queries_;
  std::vector<bool> is_member_;
};

// All of D_E in plan order, each tagged member iff its bitmap flag is set.
BalancedEvalSet BuildBalancedEvalSet(const Dataset& dataset,
                                     const SplitPlan& plan,
                                     const MembershipBitmap& bitmap);

// CSV: header f0..f{d-1},label; features written in shortest round-trip
// decimal form (std::to_chars), so parsing restores every bit.
void WriteDatasetCsv(const Dataset& dataset, const std::filesystem::path& path);
std::string DatasetToCsv(const Dataset& dataset);
// num_classes defaults to max label + 1.
Dataset DatasetFromCsv(const std::string& text,
                       std::optional<std::size_t> num_classes = std::nullopt);
Dataset ReadDatasetCsv(const std::filesystem::path& path,
                       std::optional<std::size_t> num_classes = std::nullopt);

std::string SplitPlanToJson(const SplitPlan& plan);
SplitPlan SplitPlanFromJson(const std::string& text);

}  // namespace mialab

#endif  // MIALAB_CORE_DATASET_HPP_
