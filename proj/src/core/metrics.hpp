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


#ifndef MIALAB_CORE_METRICS_HPP_
#define MIALAB_CORE_METRICS_HPP_

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "attacks.hpp"
#include "dataset.hpp"
#include "model.hpp"

namespace mialab {

struct ModelAccuracy {
  double a_r = 0.0;  // training accuracy
  double a_e = 0.0;  // testing accuracy
  double g = 0.0;    // a_r - a_e
};

double Accuracy(const MlpModel& model, std::span<const Instance> instances);
// Fraction of `predicted` equal to the instances' labels.
double Accuracy(std::span<const std::size_t> predicted,
                std::span<const Instance> instances);

double GeneralizationGap(double a_r, double a_e);
ModelAccuracy MakeModelAccuracy(double a_r, double a_e);

double ExpectedBaselineAdvantage(double g);

struct HighestAdvantage {
  double value = 0.0;
  std::string attack_name;
};

// Failed attacks are skipped; ties go to the earliest result.
HighestAdvantage FindHighestAdvantage(std::span<const AttackResult> results);

struct BoundVerdict {
  double g = 0.0;
  double v = 0.0;
  double slack = 0.0;
  bool lower_ok = false;  // v >= g/2 - slack
  bool upper_ok = false;  // v <= g + slack
};

inline constexpr double kDefaultBoundSlack = 0.03;
BoundVerdict BoundCheck(double g, double v, double slack = kDefaultBoundSlack);

enum class ConfidenceMode { kTrueLabel, kTopOne };

// Ascending per-instance confidences.
std::vector<double> ConfidenceCdf(const MlpModel& model,
                                  std::span<const Instance> instances,
                                  ConfidenceMode mode);
// value,empirical_cdf with cdf_i = (i + 1) / n over the sorted values.
std::string CdfToCsv(std::span<const double> sorted_values);

}  // namespace mialab

#endif  // MIALAB_CORE_METRICS_HPP_
