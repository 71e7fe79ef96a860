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

#ifndef MIALAB_CORE_MODEL_HPP_
#define MIALAB_CORE_MODEL_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dataset.hpp"
#include "rng.hpp"

namespace mialab {

// Probabilities are clamped to this floor before any logarithm.
inline constexpr double kProbabilityFloor = 1e-12;

// One dense layer: weights are (out x in), applied as W x + b.
struct LayerParams {
  Eigen::MatrixXd weights;
  Eigen::VectorXd bias;
};

// Feed-forward classifier [d, h1, ..., c] with ReLU on hidden layers and raw
// logits on the output layer. A model with layer_dims {d, c} is multinomial
// logistic regression.
class MlpModel {
 public:
  // He-uniform weights U(-sqrt(6/fan_in), sqrt(6/fan_in)), zero biases.
  static MlpModel Create(std::vector<std::size_t> layer_dims,
                         std::uint64_t seed);

  MlpModel(std::vector<std::size_t> layer_dims, std::vector<LayerParams> layers);

  const std::vector<std::size_t>& layer_dims() const { return layer_dims_; }
  std::size_t input_dim() const { return layer_dims_.front(); }
  std::size_t num_classes() const { return layer_dims_.back(); }
  std::size_t num_layers() const { return layers_.size(); }
  const std::vector<LayerParams>& layers() const { return layers_; }
  std::vector<LayerParams>& mutable_layers() { return layers_; }
  std::size_t ParameterCount() const;
  bool AllFinite() const;

 private:
  std::vector<std::size_t> layer_dims_;
  std::vector<LayerParams> layers_;
};

// Softmax output: every component in (0, 1], summing to 1.
class ProbVector {
 public:
  ProbVector() = default;
  explicit ProbVector(Eigen::VectorXd probs);

  std::size_t size() const { return static_cast<std::size_t>(probs_.size()); }
  double operator[](std::size_t i) const { return probs_(static_cast<Eigen::Index>(i)); }
  const Eigen::VectorXd& values() const { return probs_; }

 private:
  Eigen::VectorXd probs_;
};

// Same shapes as the model's layers.
struct GradientSet {
  std::vector<LayerParams> layers;

  static GradientSet ZerosLike(const MlpModel& model);
  double SquaredNorm() const;
  double Norm() const;
  GradientSet& operator+=(const GradientSet& other);
  GradientSet& operator*=(double scale);
  void AddScaled(const GradientSet& other, double scale);
  bool AllFinite() const;
};

struct ForwardResult {
  Eigen::VectorXd logits;
  std::vector<Eigen::VectorXd> hidden;  // post-activation (and dropout)
};

// Inverted dropout is applied to hidden activations only when `rng` is given.
ForwardResult Forward(const MlpModel& model, std::span<const double> x,
                      double dropout_keep = 1.0, Rng* rng = nullptr);

// Batched pass; column i of every matrix belongs to example i.
struct BatchForward {
  std::vector<Eigen::MatrixXd> activations;      // [0] = inputs
  std::vector<Eigen::MatrixXd> pre_activations;  // per layer, before ReLU
  std::vector<Eigen::MatrixXd> masks;            // per hidden layer; empty = none
  Eigen::MatrixXd logits;
  Eigen::MatrixXd probs;
};

// Scaled keep masks (entries 0 or 1/keep), one per hidden layer.
std::vector<Eigen::MatrixXd> SampleDropoutMasks(const MlpModel& model,
                                                std::size_t batch,
                                                double keep, Rng& rng);

BatchForward ForwardBatch(const MlpModel& model, const Eigen::MatrixXd& inputs,
                          const std::vector<Eigen::MatrixXd>& masks = {});

ProbVector Softmax(const Eigen::VectorXd& logits, double temperature = 1.0);
Eigen::MatrixXd SoftmaxColumns(const Eigen::MatrixXd& logits);

double CrossEntropy(const ProbVector& p, std::size_t label);
double CrossEntropy(const ProbVector& p, const Eigen::VectorXd& soft_label);

// Chain rule through the softmax: maps d/d(probs) to d/d(logits), per column.
Eigen::MatrixXd SoftmaxBackward(const Eigen::MatrixXd& probs,
                                const Eigen::MatrixXd& prob_grad);

// Propagates d(loss)/d(logits) through the network recorded in `fwd`.
GradientSet Backpropagate(const MlpModel& model, const BatchForward& fwd,
                          const Eigen::MatrixXd& logit_grad);

// Per-column gradients; column i of `logit_grad` seeds example i.
std::vector<GradientSet> PerExampleGradients(const MlpModel& model,
                                             const BatchForward& fwd,
                                             const Eigen::MatrixXd& logit_grad);

// Frobenius norm of each example's full gradient, without materializing it.
Eigen::VectorXd PerExampleGradientNorms(const MlpModel& model,
                                        const BatchForward& fwd,
                                        const Eigen::MatrixXd& logit_grad);

double L2Penalty(const MlpModel& model, double l2_coeff);
void AddL2Gradient(const MlpModel& model, double l2_coeff, GradientSet& grad);

struct LossAndGradient {
  double loss = 0.0;
  GradientSet gradient;
};

// Mean cross-entropy against soft labels (c x n) plus l2_coeff * |W|^2 / 2
// over weight matrices (biases are not penalized), with its exact gradient.
LossAndGradient Backward(const MlpModel& model, const Eigen::MatrixXd& inputs,
                         const Eigen::MatrixXd& soft_labels,
                         const std::vector<Eigen::MatrixXd>& masks,
                         double l2_coeff);

void ApplySgdUpdate(MlpModel& model, const GradientSet& grad,
                    double learning_rate);

// Lowest index wins ties.
std::size_t ArgMax(const Eigen::VectorXd& v);
std::size_t PredictLabel(const MlpModel& model, std::span<const double> x);

// Inference-mode probabilities for many instances, one column each.
Eigen::MatrixXd PredictProbabilities(const MlpModel& model,
                                     std::span<const Instance> instances,
                                     double temperature = 1.0);

Eigen::MatrixXd FeatureMatrix(std::span<const Instance> instances);
Eigen::MatrixXd OneHotMatrix(std::span<const Instance> instances,
                             std::size_t num_classes);

// {"layer_dims": [...], "activation": "relu",
//  "layers": [{"weights": [row-major], "bias": [...]}, ...]}
std::string ModelToJson(const MlpModel& model);
MlpModel ModelFromJson(const std::string& text);

}  // namespace mialab

#endif  // MIALAB_CORE_MODEL_HPP_
