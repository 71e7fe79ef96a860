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


#include "metrics.hpp"

#include <algorithm>
#include <cmath>

#include "errors.hpp"
#include "text_io.hpp"

namespace mialab {

double Accuracy(std::span<const std::size_t> predicted,
                std::span<const Instance> instances) {
  if (instances.empty()) throw ParameterError("accuracy: no instances");
  if (predicted.size() != instances.size()) {
    throw ShapeError("accuracy: prediction count differs from instance count");
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (predicted[i] == instances[i].label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(instances.size());
}

double Accuracy(const MlpModel& model, std::span<const Instance> instances) {
  if (instances.empty()) throw ParameterError("accuracy: no instances");
  Eigen::MatrixXd probs = PredictProbabilities(model, instances);
  std::vector<std::size_t> predicted(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) {
    predicted[i] = ArgMax(probs.col(static_cast<Eigen::Index>(i)));
  }
  return Accuracy(predicted, instances);
}

double GeneralizationGap(double a_r, double a_e) {
  if (!(a_r >= 0.0 && a_r <= 1.0 && a_e >= 0.0 && a_e <= 1.0)) {
    throw ParameterError("gap: accuracies must lie in [0, 1]");
  }
  return a_r - a_e;
}

ModelAccuracy MakeModelAccuracy(double a_r, double a_e) {
  return {a_r, a_e, GeneralizationGap(a_r, a_e)};
}

double ExpectedBaselineAdvantage(double g) { return g / 2.0; }

HighestAdvantage FindHighestAdvantage(std::span<const AttackResult> results) {
  const AttackResult* best = nullptr;
  for (const AttackResult& r : results) {
    if (!r.ok()) continue;
    if (best == nullptr || r.advantage > best->advantage) best = &r;
  }
  if (best == nullptr) throw ParameterError("highest advantage: no successful attack");
  return {best->advantage, best->attack_name};
}

BoundVerdict BoundCheck(double g, double v, double slack) {
  if (!(slack >= 0.0)) throw ParameterError("bound check: slack must be >= 0");
  BoundVerdict b;
  b.g = g;
  b.v = v;
  b.slack = slack;
  b.lower_ok = v >= g / 2.0 - slack;
  b.upper_ok = v <= g + slack;
  return b;
}

std::vector<double> ConfidenceCdf(const MlpModel& model,
                                  std::span<const Instance> instances,
                                  ConfidenceMode mode) {
  if (instances.empty()) throw ParameterError("cdf: no instances");
  Eigen::MatrixXd probs = PredictProbabilities(model, instances);
  std::vector<double> out(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    out[i] = mode == ConfidenceMode::kTrueLabel
                 ? probs(static_cast<Eigen::Index>(instances[i].label), col)
                 : probs.col(col).maxCoeff();
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string CdfToCsv(std::span<const double> sorted_values) {
  std::string out = "value,empirical_cdf\n";
  const double n = static_cast<double>(sorted_values.size());
  for (std::size_t i = 0; i < sorted_values.size(); ++i) {
    out += FormatDouble(sorted_values[i]) + "," +
           FormatDouble(static_cast<double>(i + 1) / n) + "\n";
  }
  return out;
}

}  // namespace mialab
