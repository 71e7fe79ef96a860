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

#include "model.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "errors.hpp"

namespace mialab {

MlpModel MlpModel::Create(std::vector<std::size_t> layer_dims,
                          std::uint64_t seed) {
  if (layer_dims.size() < 2) {
    throw ParameterError("MlpModel: need at least input and output widths");
  }
  Rng rng(seed);
  std::vector<LayerParams> layers;
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    const auto fan_in = static_cast<Eigen::Index>(layer_dims[l]);
    const auto fan_out = static_cast<Eigen::Index>(layer_dims[l + 1]);
    if (fan_in == 0 || fan_out == 0) throw ParameterError("MlpModel: zero width");
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    LayerParams layer;
    layer.weights.resize(fan_out, fan_in);
    // Row-major draw order so the stream does not depend on Eigen storage.
    for (Eigen::Index r = 0; r < fan_out; ++r) {
      for (Eigen::Index c = 0; c < fan_in; ++c) {
        layer.weights(r, c) = rng.Uniform(-limit, limit);
      }
    }
    layer.bias = Eigen::VectorXd::Zero(fan_out);
    layers.push_back(std::move(layer));
  }
  return MlpModel(std::move(layer_dims), std::move(layers));
}

MlpModel::MlpModel(std::vector<std::size_t> layer_dims,
                   std::vector<LayerParams> layers)
    : layer_dims_(std::move(layer_dims)), layers_(std::move(layers)) {
  if (layer_dims_.size() < 2 || layers_.size() + 1 != layer_dims_.size()) {
    throw ShapeError("MlpModel: layer count does not match layer_dims");
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto in = static_cast<Eigen::Index>(layer_dims_[l]);
    const auto out = static_cast<Eigen::Index>(layer_dims_[l + 1]);
    if (layers_[l].weights.rows() != out || layers_[l].weights.cols() != in ||
        layers_[l].bias.size() != out) {
      throw ShapeError("MlpModel: layer " + std::to_string(l) +
                       " shape inconsistent with layer_dims");
    }
  }
  if (!AllFinite()) throw NumericError("MlpModel: non-finite parameter");
}

std::size_t MlpModel::ParameterCount() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) {
    n += static_cast<std::size_t>(layer.weights.size() + layer.bias.size());
  }
  return n;
}

bool MlpModel::AllFinite() const {
  for (const auto& layer : layers_) {
    if (!layer.weights.allFinite() || !layer.bias.allFinite()) return false;
  }
  return true;
}

ProbVector::ProbVector(Eigen::VectorXd probs) : probs_(std::move(probs)) {
  if (probs_.size() == 0) throw ShapeError("ProbVector: empty");
  if (!probs_.allFinite() || probs_.minCoeff() < 0.0 || probs_.maxCoeff() > 1.0) {
    throw NumericError("ProbVector: components must lie in [0, 1]");
  }
  if (std::abs(probs_.sum() - 1.0) > 1e-9) {
    throw NumericError("ProbVector: components must sum to 1");
  }
}

GradientSet GradientSet::ZerosLike(const MlpModel& model) {
  GradientSet g;
  for (const auto& layer : model.layers()) {
    g.layers.push_back({Eigen::MatrixXd::Zero(layer.weights.rows(),
                                              layer.weights.cols()),
                        Eigen::VectorXd::Zero(layer.bias.size())});
  }
  return g;
}

double GradientSet::SquaredNorm() const {
  double s = 0.0;
  for (const auto& layer : layers) {
    s += layer.weights.squaredNorm() + layer.bias.squaredNorm();
  }
  return s;
}

double GradientSet::Norm() const { return std::sqrt(SquaredNorm()); }

GradientSet& GradientSet::operator+=(const GradientSet& other) {
  AddScaled(other, 1.0);
  return *this;
}

GradientSet& GradientSet::operator*=(double scale) {
  for (auto& layer : layers) {
    layer.weights *= scale;
    layer.bias *= scale;
  }
  return *this;
}

void GradientSet::AddScaled(const GradientSet& other, double scale) {
  if (other.layers.size() != layers.size()) {
    throw ShapeError("GradientSet: layer count mismatch");
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].weights.rows() != other.layers[l].weights.rows() ||
        layers[l].weights.cols() != other.layers[l].weights.cols()) {
      throw ShapeError("GradientSet: shape mismatch");
    }
    layers[l].weights += scale * other.layers[l].weights;
    layers[l].bias += scale * other.layers[l].bias;
  }
}

bool GradientSet::AllFinite() const {
  for (const auto& layer : layers) {
    if (!layer.weights.allFinite() || !layer.bias.allFinite()) return false;
  }
  return true;
}

std::vector<Eigen::MatrixXd> SampleDropoutMasks(const MlpModel& model,
                                                std::size_t batch,
                                                double keep, Rng& rng) {
  if (!(keep > 0.0 && keep <= 1.0)) {
    throw ParameterError("dropout keep probability must lie in (0, 1]");
  }
  std::vector<Eigen::MatrixXd> masks;
  const double scale = 1.0 / keep;
  for (std::size_t l = 1; l + 1 < model.layer_dims().size(); ++l) {
    Eigen::MatrixXd mask(static_cast<Eigen::Index>(model.layer_dims()[l]),
                         static_cast<Eigen::Index>(batch));
    for (Eigen::Index c = 0; c < mask.cols(); ++c) {
      for (Eigen::Index r = 0; r < mask.rows(); ++r) {
        mask(r, c) = rng.Bernoulli(keep) ? scale : 0.0;
      }
    }
    masks.push_back(std::move(mask));
  }
  return masks;
}

BatchForward ForwardBatch(const MlpModel& model, const Eigen::MatrixXd& inputs,
                          const std::vector<Eigen::MatrixXd>& masks) {
  if (inputs.rows() != static_cast<Eigen::Index>(model.input_dim())) {
    throw ShapeError("forward: input dimension " + std::to_string(inputs.rows()) +
                     " != model input " + std::to_string(model.input_dim()));
  }
  const std::size_t hidden_layers = model.num_layers() - 1;
  if (!masks.empty() && masks.size() != hidden_layers) {
    throw ShapeError("forward: one dropout mask per hidden layer required");
  }
  BatchForward fwd;
  fwd.activations.reserve(model.num_layers());
  fwd.activations.push_back(inputs);
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    const LayerParams& layer = model.layers()[l];
    Eigen::MatrixXd z = layer.weights * fwd.activations.back();
    z.colwise() += layer.bias;
    if (l + 1 == model.num_layers()) {
      fwd.pre_activations.push_back(z);
      fwd.logits = std::move(z);
      break;
    }
    Eigen::MatrixXd a = z.cwiseMax(0.0);
    if (!masks.empty()) {
      if (masks[l].rows() != a.rows() || masks[l].cols() != a.cols()) {
        throw ShapeError("forward: dropout mask shape mismatch");
      }
      a = a.cwiseProduct(masks[l]);
    }
    fwd.pre_activations.push_back(std::move(z));
    fwd.activations.push_back(std::move(a));
  }
  fwd.masks = masks;
  fwd.probs = SoftmaxColumns(fwd.logits);
  return fwd;
}

ForwardResult Forward(const MlpModel& model, std::span<const double> x,
                      double dropout_keep, Rng* rng) {
  Eigen::MatrixXd input = Eigen::Map<const Eigen::VectorXd>(
      x.data(), static_cast<Eigen::Index>(x.size()));
  if (input.rows() != static_cast<Eigen::Index>(model.input_dim())) {
    throw ShapeError("forward: feature length mismatch");
  }
  std::vector<Eigen::MatrixXd> masks;
  if (rng != nullptr) masks = SampleDropoutMasks(model, 1, dropout_keep, *rng);
  BatchForward fwd = ForwardBatch(model, input, masks);
  ForwardResult out;
  out.logits = fwd.logits.col(0);
  for (std::size_t l = 1; l < fwd.activations.size(); ++l) {
    out.hidden.push_back(fwd.activations[l].col(0));
  }
  return out;
}

ProbVector Softmax(const Eigen::VectorXd& logits, double temperature) {
  if (logits.size() == 0) throw ShapeError("softmax: empty logits");
  if (logits.hasNaN()) throw NumericError("softmax: NaN logit");
  if (!(temperature > 0.0)) throw ParameterError("softmax: temperature <= 0");
  Eigen::VectorXd scaled = logits / temperature;
  const double max = scaled.maxCoeff();
  if (!std::isfinite(max)) throw NumericError("softmax: infinite logit");
  Eigen::VectorXd e = (scaled.array() - max).exp();
  return ProbVector(e / e.sum());
}

Eigen::MatrixXd SoftmaxColumns(const Eigen::MatrixXd& logits) {
  if (logits.hasNaN()) throw NumericError("softmax: NaN logit");
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    const double max = logits.col(c).maxCoeff();
    out.col(c) = (logits.col(c).array() - max).exp();
    out.col(c) /= out.col(c).sum();
  }
  if (!out.allFinite()) throw NumericError("softmax: non-finite output");
  return out;
}

double CrossEntropy(const ProbVector& p, std::size_t label) {
  if (label >= p.size()) throw ShapeError("cross_entropy: label out of range");
  return -std::log(std::max(p[label], kProbabilityFloor));
}

double CrossEntropy(const ProbVector& p, const Eigen::VectorXd& soft_label) {
  if (static_cast<std::size_t>(soft_label.size()) != p.size()) {
    throw ShapeError("cross_entropy: label vector length mismatch");
  }
  if (std::abs(soft_label.sum() - 1.0) > 1e-9) {
    throw ParameterError("cross_entropy: soft label must sum to 1");
  }
  double loss = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    const double w = soft_label(static_cast<Eigen::Index>(j));
    if (w != 0.0) loss -= w * std::log(std::max(p[j], kProbabilityFloor));
  }
  return loss;
}

Eigen::MatrixXd SoftmaxBackward(const Eigen::MatrixXd& probs,
                                const Eigen::MatrixXd& prob_grad) {
  // dz_k = p_k (g_k - sum_j g_j p_j)
  Eigen::RowVectorXd dots = probs.cwiseProduct(prob_grad).colwise().sum();
  Eigen::MatrixXd centered = prob_grad.rowwise() - dots;
  return probs.cwiseProduct(centered);
}

GradientSet Backpropagate(const MlpModel& model, const BatchForward& fwd,
                          const Eigen::MatrixXd& logit_grad) {
  if (logit_grad.rows() != fwd.logits.rows() ||
      logit_grad.cols() != fwd.logits.cols()) {
    throw ShapeError("backprop: logit gradient shape mismatch");
  }
  GradientSet grad;
  grad.layers.resize(model.num_layers());
  Eigen::MatrixXd delta = logit_grad;
  for (std::size_t l = model.num_layers(); l-- > 0;) {
    grad.layers[l].weights = delta * fwd.activations[l].transpose();
    grad.layers[l].bias = delta.rowwise().sum();
    if (l == 0) break;
    Eigen::MatrixXd upstream = model.layers()[l].weights.transpose() * delta;
    const Eigen::MatrixXd& z = fwd.pre_activations[l - 1];
    delta = upstream.cwiseProduct(
        (z.array() > 0.0).cast<double>().matrix());
    if (!fwd.masks.empty()) delta = delta.cwiseProduct(fwd.masks[l - 1]);
  }
  return grad;
}

namespace {

// d(loss)/d(pre-activation) for every layer, one column per example.
std::vector<Eigen::MatrixXd> LayerDeltas(const MlpModel& model,
                                         const BatchForward& fwd,
                                         const Eigen::MatrixXd& logit_grad) {
  if (logit_grad.rows() != fwd.logits.rows() ||
      logit_grad.cols() != fwd.logits.cols()) {
    throw ShapeError("per-example gradients: logit gradient shape mismatch");
  }
  std::vector<Eigen::MatrixXd> deltas(model.num_layers());
  deltas.back() = logit_grad;
  for (std::size_t l = model.num_layers() - 1; l > 0; --l) {
    Eigen::MatrixXd upstream = model.layers()[l].weights.transpose() * deltas[l];
    const Eigen::MatrixXd& z = fwd.pre_activations[l - 1];
    deltas[l - 1] =
        upstream.cwiseProduct((z.array() > 0.0).cast<double>().matrix());
    if (!fwd.masks.empty()) deltas[l - 1] = deltas[l - 1].cwiseProduct(fwd.masks[l - 1]);
  }
  return deltas;
}

}  // namespace

std::vector<GradientSet> PerExampleGradients(
    const MlpModel& model, const BatchForward& fwd,
    const Eigen::MatrixXd& logit_grad) {
  std::vector<Eigen::MatrixXd> deltas = LayerDeltas(model, fwd, logit_grad);
  const auto n = logit_grad.cols();
  std::vector<GradientSet> out(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    auto& g = out[static_cast<std::size_t>(i)];
    g.layers.resize(model.num_layers());
    for (std::size_t l = 0; l < model.num_layers(); ++l) {
      g.layers[l].weights =
          deltas[l].col(i) * fwd.activations[l].col(i).transpose();
      g.layers[l].bias = deltas[l].col(i);
    }
  }
  return out;
}

Eigen::VectorXd PerExampleGradientNorms(const MlpModel& model,
                                        const BatchForward& fwd,
                                        const Eigen::MatrixXd& logit_grad) {
  std::vector<Eigen::MatrixXd> deltas = LayerDeltas(model, fwd, logit_grad);
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(logit_grad.cols());
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    // |delta a^T|_F^2 = |delta|^2 |a|^2, plus |delta|^2 for the bias.
    Eigen::VectorXd d2 = deltas[l].colwise().squaredNorm().transpose();
    Eigen::VectorXd a2 = fwd.activations[l].colwise().squaredNorm().transpose();
    sq += d2.cwiseProduct(a2) + d2;
  }
  return sq.cwiseSqrt();
}

double L2Penalty(const MlpModel& model, double l2_coeff) {
  if (l2_coeff == 0.0) return 0.0;
  double s = 0.0;
  for (const auto& layer : model.layers()) s += layer.weights.squaredNorm();
  return 0.5 * l2_coeff * s;
}

void AddL2Gradient(const MlpModel& model, double l2_coeff, GradientSet& grad) {
  if (l2_coeff == 0.0) return;
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    grad.layers[l].weights += l2_coeff * model.layers()[l].weights;
  }
}

LossAndGradient Backward(const MlpModel& model, const Eigen::MatrixXd& inputs,
                         const Eigen::MatrixXd& soft_labels,
                         const std::vector<Eigen::MatrixXd>& masks,
                         double l2_coeff) {
  if (inputs.cols() == 0) throw ParameterError("backward: empty batch");
  if (soft_labels.cols() != inputs.cols() ||
      soft_labels.rows() != static_cast<Eigen::Index>(model.num_classes())) {
    throw ShapeError("backward: label matrix shape mismatch");
  }
  BatchForward fwd = ForwardBatch(model, inputs, masks);
  const double n = static_cast<double>(inputs.cols());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < inputs.cols(); ++i) {
    for (Eigen::Index k = 0; k < soft_labels.rows(); ++k) {
      const double w = soft_labels(k, i);
      if (w != 0.0) loss -= w * std::log(std::max(fwd.probs(k, i), kProbabilityFloor));
    }
  }
  LossAndGradient out;
  out.loss = loss / n + L2Penalty(model, l2_coeff);
  out.gradient = Backpropagate(model, fwd, (fwd.probs - soft_labels) / n);
  AddL2Gradient(model, l2_coeff, out.gradient);
  return out;
}

void ApplySgdUpdate(MlpModel& model, const GradientSet& grad,
                    double learning_rate) {
  auto& layers = model.mutable_layers();
  if (grad.layers.size() != layers.size()) {
    throw ShapeError("sgd: gradient layer count mismatch");
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    layers[l].weights -= learning_rate * grad.layers[l].weights;
    layers[l].bias -= learning_rate * grad.layers[l].bias;
  }
}

std::size_t ArgMax(const Eigen::VectorXd& v) {
  std::size_t best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(static_cast<Eigen::Index>(best))) best = static_cast<std::size_t>(i);
  }
  return best;
}

std::size_t PredictLabel(const MlpModel& model, std::span<const double> x) {
  return ArgMax(Softmax(Forward(model, x).logits).values());
}

Eigen::MatrixXd FeatureMatrix(std::span<const Instance> instances) {
  if (instances.empty()) return {};
  const auto d = static_cast<Eigen::Index>(instances.front().features.size());
  Eigen::MatrixXd x(d, static_cast<Eigen::Index>(instances.size()));
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (static_cast<Eigen::Index>(instances[i].features.size()) != d) {
      throw ShapeError("feature matrix: ragged instances");
    }
    x.col(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::VectorXd>(
        instances[i].features.data(), d);
  }
  return x;
}

Eigen::MatrixXd OneHotMatrix(std::span<const Instance> instances,
                             std::size_t num_classes) {
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(
      static_cast<Eigen::Index>(num_classes),
      static_cast<Eigen::Index>(instances.size()));
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (instances[i].label >= num_classes) throw ShapeError("one-hot: bad label");
    y(static_cast<Eigen::Index>(instances[i].label), static_cast<Eigen::Index>(i)) = 1.0;
  }
  return y;
}

Eigen::MatrixXd PredictProbabilities(const MlpModel& model,
                                     std::span<const Instance> instances,
                                     double temperature) {
  if (instances.empty()) {
    return Eigen::MatrixXd(static_cast<Eigen::Index>(model.num_classes()), 0);
  }
  if (!(temperature > 0.0)) throw ParameterError("temperature must be positive");
  // Chunked so peak memory stays bounded for large query sets.
  constexpr std::size_t kChunk = 4096;
  Eigen::MatrixXd out(static_cast<Eigen::Index>(model.num_classes()),
                      static_cast<Eigen::Index>(instances.size()));
  for (std::size_t start = 0; start < instances.size(); start += kChunk) {
    const std::size_t len = std::min(kChunk, instances.size() - start);
    BatchForward fwd =
        ForwardBatch(model, FeatureMatrix(instances.subspan(start, len)));
    Eigen::MatrixXd probs = temperature == 1.0
                                ? std::move(fwd.probs)
                                : SoftmaxColumns(fwd.logits / temperature);
    out.middleCols(static_cast<Eigen::Index>(start),
                   static_cast<Eigen::Index>(len)) = probs;
  }
  return out;
}

std::string ModelToJson(const MlpModel& model) {
  nlohmann::json j;
  j["layer_dims"] = model.layer_dims();
  j["activation"] = "relu";
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : model.layers()) {
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(layer.weights.size()));
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
        w.push_back(layer.weights(r, c));
      }
    }
    std::vector<double> b(layer.bias.data(), layer.bias.data() + layer.bias.size());
    layers.push_back({{"weights", w}, {"bias", b}});
  }
  j["layers"] = std::move(layers);
  return j.dump();
}

MlpModel ModelFromJson(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint: ") + e.what());
  }
  try {
    if (j.value("activation", std::string("relu")) != "relu") {
      throw IoError("checkpoint: unsupported activation");
    }
    auto dims = j.at("layer_dims").get<std::vector<std::size_t>>();
    const auto& jl = j.at("layers");
    if (dims.size() < 2 || jl.size() + 1 != dims.size()) {
      throw ShapeError("checkpoint: layer count does not match layer_dims");
    }
    std::vector<LayerParams> layers;
    for (std::size_t l = 0; l < jl.size(); ++l) {
      auto w = jl[l].at("weights").get<std::vector<double>>();
      auto b = jl[l].at("bias").get<std::vector<double>>();
      const auto rows = static_cast<Eigen::Index>(dims[l + 1]);
      const auto cols = static_cast<Eigen::Index>(dims[l]);
      if (static_cast<Eigen::Index>(w.size()) != rows * cols ||
          static_cast<Eigen::Index>(b.size()) != rows) {
        throw ShapeError("checkpoint: array length mismatch in layer " +
                         std::to_string(l));
      }
      LayerParams layer;
      layer.weights.resize(rows, cols);
      for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
          layer.weights(r, c) = w[static_cast<std::size_t>(r * cols + c)];
        }
      }
      layer.bias = Eigen::Map<Eigen::VectorXd>(b.data(), rows);
      layers.push_back(std::move(layer));
    }
    return MlpModel(std::move(dims), std::move(layers));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint: ") + e.what());
  }
}

}  // namespace mialab
