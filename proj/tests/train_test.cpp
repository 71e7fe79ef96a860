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
#include <limits>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "errors.hpp"
#include "metrics.hpp"
#include "train.hpp"
#include "test_support.hpp"

namespace mialab {
namespace {

using testing::Flatten;
using testing::NumericGradient;
using testing::RandomModel;
using testing::ReferenceLogits;
using testing::ReferenceSoftmax;
using testing::RelativeError;

Eigen::MatrixXd RandomMatrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed,
                             double scale = 1.0) {
  Rng rng(seed);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.Gaussian();
  return m;
}

MmdConfig FixedBandwidth(double h) {
  MmdConfig c;
  c.rule = BandwidthRule::kFixed;
  c.bandwidth_base = h;
  c.bandwidth_multipliers = {0.5, 1.0, 2.0};
  return c;
}

// Plain-loop biased MMD^2 with the multi-bandwidth Gaussian kernel.
double ReferenceMmd(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, double h,
                    const std::vector<double>& mult) {
  auto k = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    double s = 0.0;
    for (double m : mult) s += std::exp(-(a - b).squaredNorm() / (2.0 * m * h * m * h));
    return s;
  };
  double xx = 0, xy = 0, yy = 0;
  for (Eigen::Index i = 0; i < x.cols(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) xx += k(x.col(i), x.col(j));
  for (Eigen::Index i = 0; i < x.cols(); ++i)
    for (Eigen::Index j = 0; j < y.cols(); ++j) xy += k(x.col(i), y.col(j));
  for (Eigen::Index i = 0; i < y.cols(); ++i)
    for (Eigen::Index j = 0; j < y.cols(); ++j) yy += k(y.col(i), y.col(j));
  const double n = static_cast<double>(x.cols()), m = static_cast<double>(y.cols());
  return xx / (n * n) - 2.0 * xy / (n * m) + yy / (m * m);
}

std::vector<double> Col(const Eigen::MatrixXd& m, Eigen::Index c) {
  return std::vector<double>(m.col(c).data(), m.col(c).data() + m.rows());
}

// --- mix-up ---

TEST(Mixup, CombinesPairsAsSpecified) {
  LabeledBatch b{RandomMatrix(3, 4, 1), Eigen::MatrixXd::Identity(4, 4).topRows(4)};
  std::vector<std::size_t> partners{1, 0, 3, 2};
  std::vector<double> lambdas{0.25, 1.0, 0.0, 0.5};
  LabeledBatch out = MixupWith(b, partners, lambdas);
  for (Eigen::Index i = 0; i < 4; ++i) {
    const double l = lambdas[static_cast<std::size_t>(i)];
    const auto p = static_cast<Eigen::Index>(partners[static_cast<std::size_t>(i)]);
    EXPECT_LT((out.inputs.col(i) - (l * b.inputs.col(i) + (1 - l) * b.inputs.col(p))).norm(),
              1e-15);
    EXPECT_NEAR(out.labels.col(i).sum(), 1.0, 1e-15);
  }
  EXPECT_TRUE(out.inputs.col(1) == b.inputs.col(1));   // lambda 1 keeps the row
  EXPECT_TRUE(out.inputs.col(2) == b.inputs.col(3));   // lambda 0 takes the partner
}

TEST(Mixup, RejectsBadArguments) {
  LabeledBatch b{RandomMatrix(2, 3, 1), Eigen::MatrixXd::Identity(3, 3)};
  std::vector<std::size_t> partners{0, 1, 2};
  EXPECT_THROW(MixupWith(b, partners, std::vector<double>{0.5, 1.5, 0.0}), ParameterError);
  EXPECT_THROW(MixupWith(b, std::vector<std::size_t>{0, 1}, std::vector<double>{0.5, 0.5}),
               ShapeError);
  Rng rng(1);
  EXPECT_THROW(MixupBatch(b, 0.0, rng), ParameterError);
}

TEST(Mixup, BetaLambdasAreSymmetric) {
  Rng rng(12);
  double sum = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double l = rng.Beta(4.0, 4.0);
    ASSERT_GE(l, 0.0);
    ASSERT_LE(l, 1.0);
    sum += l;
  }
  EXPECT_NEAR(sum / n, 0.5, 0.01);
}

// Gradient of the soft-label loss on a mixed batch, checked against finite
// differences of a loss assembled from scratch.
TEST(Mixup, GradientMatchesFiniteDifferences) {
  MlpModel m = RandomModel({4, 6, 3}, 31);
  Eigen::MatrixXd x = RandomMatrix(4, 5, 2);
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(3, 5);
  for (Eigen::Index c = 0; c < 5; ++c) y(c % 3, c) = 1.0;
  std::vector<std::size_t> partners{3, 4, 0, 2, 1};
  std::vector<double> lambdas{0.3, 0.8, 0.55, 0.1, 0.95};
  LabeledBatch mixed = MixupWith({x, y}, partners, lambdas);

  auto loss = [&](const MlpModel& mm) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < 5; ++i) {
      const double l = lambdas[static_cast<std::size_t>(i)];
      const auto p = static_cast<Eigen::Index>(partners[static_cast<std::size_t>(i)]);
      Eigen::VectorXd xi = l * x.col(i) + (1 - l) * x.col(p);
      Eigen::VectorXd yi = l * y.col(i) + (1 - l) * y.col(p);
      auto prob = ReferenceSoftmax(ReferenceLogits(mm, Col(xi, 0)));
      for (std::size_t k = 0; k < prob.size(); ++k) {
        total -= yi(static_cast<Eigen::Index>(k)) * std::log(prob[k]);
      }
    }
    return total / 5.0;
  };
  LossAndGradient lg = Backward(m, mixed.inputs, mixed.labels, {}, 0.0);
  EXPECT_NEAR(lg.loss, loss(m), 1e-12);
  EXPECT_LE(RelativeError(Flatten(lg.gradient), NumericGradient(m, loss)), 1e-4);
}

// --- MMD ---

TEST(Mmd, KernelMatchesReference) {
  Eigen::MatrixXd a = RandomMatrix(3, 4, 1), b = RandomMatrix(3, 2, 2);
  MmdConfig cfg = FixedBandwidth(0.7);
  Eigen::MatrixXd k = GaussianKernelMatrix(a, b, cfg);
  for (Eigen::Index i = 0; i < 4; ++i) {
    for (Eigen::Index j = 0; j < 2; ++j) {
      double ref = 0.0;
      for (double m : cfg.bandwidth_multipliers) {
        ref += std::exp(-(a.col(i) - b.col(j)).squaredNorm() / (2 * 0.49 * m * m));
      }
      EXPECT_NEAR(k(i, j), ref, 1e-14);
    }
  }
}

TEST(Mmd, ValueMatchesReference) {
  Eigen::MatrixXd x = RandomMatrix(3, 5, 3), y = RandomMatrix(3, 7, 4);
  MmdConfig cfg = FixedBandwidth(1.3);
  EXPECT_NEAR(MmdSquared(x, y, cfg).value, ReferenceMmd(x, y, 1.3, cfg.bandwidth_multipliers),
              1e-13);
}

TEST(Mmd, SelfDistanceIsZero) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Eigen::MatrixXd x = RandomMatrix(4, 6, seed);
    EXPECT_LE(std::abs(MmdSquared(x, x, FixedBandwidth(0.9)).value), 1e-12);
    EXPECT_LE(std::abs(MmdSquared(x, x, MmdConfig{}).value), 1e-12);
    MmdConfig median;
    median.rule = BandwidthRule::kMedian;
    EXPECT_LE(std::abs(MmdSquared(x, x, median).value), 1e-12);
  }
}

TEST(Mmd, SymmetricAndNonNegative) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Eigen::MatrixXd x = RandomMatrix(3, 5, seed), y = RandomMatrix(3, 4, seed + 50, 2.0);
    for (const MmdConfig& cfg : {FixedBandwidth(0.5), MmdConfig{}}) {
      const double xy = MmdSquared(x, y, cfg).value;
      const double yx = MmdSquared(y, x, cfg).value;
      EXPECT_NEAR(xy, yx, 1e-12);
      EXPECT_GE(xy, -1e-12);
    }
  }
}

TEST(Mmd, GrowsWithShift) {
  Eigen::MatrixXd x = RandomMatrix(2, 30, 1);
  MmdConfig cfg = FixedBandwidth(1.0);
  double prev = 0.0;
  for (double shift : {0.5, 1.0, 2.0}) {
    Eigen::MatrixXd y = RandomMatrix(2, 30, 2).array() + shift;
    const double v = MmdSquared(x, y, cfg).value;
    EXPECT_GT(v, prev);
    prev = v;
  }
}

TEST(Mmd, InputGradientMatchesFiniteDifferences) {
  Eigen::MatrixXd x = RandomMatrix(3, 5, 7), y = RandomMatrix(3, 4, 8);
  MmdConfig cfg = FixedBandwidth(0.8);
  MmdValue v = MmdSquared(x, y, cfg);
  const double h = 1e-6;
  Eigen::MatrixXd fd(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::MatrixXd up = x, down = x;
    up.data()[i] += h;
    down.data()[i] -= h;
    fd.data()[i] = (ReferenceMmd(up, y, 0.8, cfg.bandwidth_multipliers) -
                    ReferenceMmd(down, y, 0.8, cfg.bandwidth_multipliers)) /
                   (2 * h);
  }
  EXPECT_LE((fd - v.grad_x).norm() / fd.norm(), 1e-4);
}

TEST(Mmd, HeuristicBandwidths) {
  Eigen::MatrixXd a(1, 2), b(1, 1);
  a << 0.0, 1.0;
  b << 3.0;
  // squared distances 1, 9, 4
  MmdConfig mean;
  mean.rule = BandwidthRule::kMean;
  EXPECT_DOUBLE_EQ(ResolveBandwidth(a, b, mean), std::sqrt(14.0 / 3.0));
  MmdConfig median;
  median.rule = BandwidthRule::kMedian;
  EXPECT_DOUBLE_EQ(ResolveBandwidth(a, b, median), 2.0);
  Eigen::MatrixXd same = Eigen::MatrixXd::Zero(2, 3);
  EXPECT_DOUBLE_EQ(ResolveBandwidth(same, same, mean), 1.0);
}

// Regularized loss: cross-entropy + w * MMD^2(train softmax, validation
// softmax), with the validation softmax held fixed at the current weights.
TEST(Mmd, RegularizedLossGradientMatchesFiniteDifferences) {
  MlpModel m = RandomModel({4, 6, 3}, 41);
  Dataset ds = testing::SmallDataset(3, 20);
  std::vector<Instance> train, val;
  for (const Instance& inst : ds.instances()) {
    if (inst.label != 1) continue;
    (train.size() < 5 ? train : val).push_back(inst);
    if (val.size() == 4) break;
  }
  const double w = 0.7, l2 = 1e-3;
  MmdConfig cfg = FixedBandwidth(0.3);
  Eigen::MatrixXd val_probs = PredictProbabilities(m, val);

  auto loss = [&](const MlpModel& mm) {
    double ce = 0.0;
    Eigen::MatrixXd p(3, static_cast<Eigen::Index>(train.size()));
    for (std::size_t i = 0; i < train.size(); ++i) {
      auto prob = ReferenceSoftmax(ReferenceLogits(mm, train[i].features));
      ce -= std::log(prob[1]);
      for (std::size_t k = 0; k < 3; ++k) {
        p(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) = prob[k];
      }
    }
    double w2 = 0.0;
    for (const auto& layer : mm.layers()) w2 += layer.weights.squaredNorm();
    return ce / static_cast<double>(train.size()) +
           w * ReferenceMmd(p, val_probs, 0.3, cfg.bandwidth_multipliers) + 0.5 * l2 * w2;
  };
  RegularizedLoss r = MmdRegularizedLoss(m, train, val, w, cfg, {}, l2);
  EXPECT_GT(r.mmd, 0.0);
  EXPECT_NEAR(r.loss, loss(m), 1e-12);
  EXPECT_LE(RelativeError(Flatten(r.gradient), NumericGradient(m, loss)), 1e-4);
}

TEST(Mmd, RegularizedLossRejectsMixedClasses) {
  MlpModel m = RandomModel({4, 3}, 1);
  Dataset ds = testing::SmallDataset(3, 5);
  std::vector<Instance> all(ds.instances().begin(), ds.instances().end());
  EXPECT_THROW(MmdRegularizedLoss(m, all, all, 1.0, MmdConfig{}), ParameterError);
}

// --- DP-SGD ---

struct DpFixture {
  MlpModel model = RandomModel({4, 8, 3}, 17);
  Eigen::MatrixXd x = RandomMatrix(4, 9, 5);
  Eigen::MatrixXd y;
  BatchForward fwd;
  Eigen::MatrixXd logit_grad;   // per-example loss gradients (no 1/n)

  DpFixture() {
    y = Eigen::MatrixXd::Zero(3, 9);
    for (Eigen::Index c = 0; c < 9; ++c) y(c % 3, c) = 1.0;
    fwd = ForwardBatch(model, x);
    logit_grad = fwd.probs - y;
  }
};

TEST(DpSgd, NoNoiseAndNoClipIsPlainSgd) {
  DpFixture f;
  auto per = PerExampleGradients(f.model, f.fwd, f.logit_grad);
  MlpModel dp = f.model, sgd = f.model;
  Rng rng(1);
  DpSgdStep(dp, per, std::numeric_limits<double>::infinity(), 0.0, 0.1, rng);
  ApplySgdUpdate(sgd, Backward(f.model, f.x, f.y, {}, 0.0).gradient, 0.1);
  MlpModel batch = f.model;
  DpSgdBatchStep(batch, f.fwd, f.logit_grad, 1e300, 0.0, 0.1, rng);
  for (std::size_t l = 0; l < sgd.num_layers(); ++l) {
    EXPECT_LE((dp.layers()[l].weights - sgd.layers()[l].weights).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((dp.layers()[l].bias - sgd.layers()[l].bias).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((batch.layers()[l].weights - sgd.layers()[l].weights).cwiseAbs().maxCoeff(),
              1e-12);
  }
}

TEST(DpSgd, BatchStepEqualsPerExampleStep) {
  DpFixture f;
  auto per = PerExampleGradients(f.model, f.fwd, f.logit_grad);
  const double clip = 0.4;   // below most per-example norms
  ASSERT_GT(PerExampleGradientNorms(f.model, f.fwd, f.logit_grad).maxCoeff(), clip);
  MlpModel a = f.model, b = f.model;
  Rng ra(99), rb(99);
  GradientSet ga = DpSgdStep(a, per, clip, 1.3, 0.05, ra);
  GradientSet gb = DpSgdBatchStep(b, f.fwd, f.logit_grad, clip, 1.3, 0.05, rb);
  EXPECT_LE(RelativeError(Flatten(ga), Flatten(gb)), 1e-12);
  EXPECT_EQ(ra.NextU64(), rb.NextU64());
}

TEST(DpSgd, ClippingBoundsEveryExample) {
  DpFixture f;
  for (GradientSet g : PerExampleGradients(f.model, f.fwd, f.logit_grad)) {
    const double before = g.Norm();
    ClipGradient(g, 0.3);
    EXPECT_LE(g.Norm(), 0.3 + 1e-12);
    if (before <= 0.3) EXPECT_DOUBLE_EQ(g.Norm(), before);
  }
  GradientSet g = GradientSet::ZerosLike(f.model);
  EXPECT_THROW(ClipGradient(g, 0.0), ParameterError);
}

TEST(DpSgd, NoiseHasRequestedScale) {
  MlpModel m = RandomModel({60, 60, 10}, 3);
  Eigen::MatrixXd x = RandomMatrix(60, 1, 4);
  BatchForward fwd = ForwardBatch(m, x);
  Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(10, 1);
  Rng rng(5);
  GradientSet g = DpSgdBatchStep(m, fwd, zero, 0.5, 2.0, 0.0 + 1e-9, rng);
  Eigen::VectorXd v = Flatten(g);
  const double mean = v.mean();
  const double sd = std::sqrt((v.array() - mean).square().sum() / static_cast<double>(v.size() - 1));
  EXPECT_NEAR(mean, 0.0, 0.05);
  EXPECT_NEAR(sd, 1.0, 0.04);   // sigma * C / batch = 2 * 0.5 / 1
}

TEST(DpSgd, RejectsBadParameters) {
  DpFixture f;
  Rng rng(1);
  MlpModel m = f.model;
  EXPECT_THROW(DpSgdBatchStep(m, f.fwd, f.logit_grad, 1.0, -1.0, 0.1, rng), ParameterError);
  EXPECT_THROW(DpSgdBatchStep(m, f.fwd, f.logit_grad, 0.0, 1.0, 0.1, rng), ParameterError);
  EXPECT_THROW(DpSgdBatchStep(m, f.fwd, f.logit_grad, std::numeric_limits<double>::infinity(),
                              1.0, 0.1, rng),
               ParameterError);
}

// --- configuration ---

TEST(TrainConfig, JsonRoundTrip) {
  TrainConfig c;
  c.hidden_layers = {32, 16};
  c.lr_schedule = {{3, 0.5}};
  c.mixup_alpha = 2.0;
  c.dp_clip_norm = 1.5;
  c.dp_noise_scale = 0.7;
  c.seed = 123456789012345ULL;
  EXPECT_EQ(TrainConfigFromJson(TrainConfigToJson(c)), c);
  MmdConfig mc;
  mc.rule = BandwidthRule::kMedian;
  EXPECT_EQ(MmdConfigFromJson(MmdConfigToJson(mc)), mc);
}

TEST(TrainConfig, UnknownKeysAreRejected) {
  nlohmann::json j = TrainConfigToJson(TrainConfig{});
  j["learning_rat"] = 0.1;
  EXPECT_THROW(TrainConfigFromJson(j), ConfigError);
}

TEST(TrainConfig, ValidationCatchesBadValues) {
  TrainConfig c;
  c.epochs = 0;
  EXPECT_THROW(c.Validate(), ParameterError);
  c = TrainConfig{};
  c.dp_clip_norm = 1.0;
  c.mmd_weight = 0.5;
  EXPECT_THROW(c.Validate(), ParameterError);
  c = TrainConfig{};
  c.dropout_keep = 0.0;
  EXPECT_THROW(c.Validate(), ParameterError);
}

TEST(TrainConfig, ScheduleMultipliesFromMilestone) {
  TrainConfig c;
  c.learning_rate = 1.0;
  c.lr_schedule = {{2, 0.1}, {4, 0.5}};
  EXPECT_DOUBLE_EQ(c.LearningRateAt(1), 1.0);
  EXPECT_DOUBLE_EQ(c.LearningRateAt(2), 0.1);
  EXPECT_DOUBLE_EQ(c.LearningRateAt(5), 0.05);
}

// --- training loop ---

TrainConfig QuickRecipe() {
  TrainConfig c;
  c.hidden_layers = {16};
  c.epochs = 15;
  c.batch_size = 16;
  c.learning_rate = 0.1;
  c.seed = 4;
  return c;
}

TEST(TrainModel, LearnsSeparableClusters) {
  Dataset ds = GenerateSynthetic({3, 4, 60, 0.3}, 1);
  std::vector<std::size_t> ids(ds.size());
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  TrainResult r = TrainModel(ds, ids, {}, QuickRecipe(), MmdConfig{});
  EXPECT_GE(Accuracy(r.model, ds.instances()), 0.95);
  ASSERT_EQ(r.history.size(), 15u);
  EXPECT_TRUE(std::isnan(r.history.back().eval_acc));
  EXPECT_LT(r.history.back().mean_ce, r.history.front().mean_ce);
}

TEST(TrainModel, DeterministicForSeed) {
  Dataset ds = testing::SmallDataset(2);
  std::vector<std::size_t> ids(60);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  TrainConfig c = QuickRecipe();
  c.mixup_alpha = 1.0;
  c.dropout_keep = 0.8;
  auto a = TrainModel(ds, ids, {}, c, MmdConfig{});
  auto b = TrainModel(ds, ids, {}, c, MmdConfig{});
  EXPECT_EQ(ModelToJson(a.model), ModelToJson(b.model));
  EXPECT_EQ(HistoryToCsv(a.history), HistoryToCsv(b.history));
  c.seed = 5;
  EXPECT_NE(ModelToJson(TrainModel(ds, ids, {}, c, MmdConfig{}).model), ModelToJson(a.model));
}

TEST(TrainModel, MmdAndDpPathsRun) {
  Dataset ds = testing::SmallDataset(3, 60);
  std::vector<std::size_t> train(90), val(60);
  std::iota(train.begin(), train.end(), std::size_t{0});
  std::iota(val.begin(), val.end(), std::size_t{90});
  // Instances are grouped by class; interleave so every class appears.
  for (std::size_t i = 0; i < train.size(); ++i) train[i] = (i % 3) * 60 + i / 3;
  for (std::size_t i = 0; i < val.size(); ++i) val[i] = (i % 3) * 60 + 30 + i / 3;
  TrainConfig c = QuickRecipe();
  c.epochs = 3;
  c.mmd_weight = 0.5;
  auto mmd = TrainModel(ds, train, val, c, MmdConfig{});
  EXPECT_TRUE(mmd.model.AllFinite());
  EXPECT_GT(mmd.history.back().mean_mmd, 0.0);
  EXPECT_THROW(TrainModel(ds, train, {}, c, MmdConfig{}), ParameterError);

  c.mmd_weight = 0.0;
  c.dp_clip_norm = 1.0;
  c.dp_noise_scale = 1.0;
  auto dp = TrainModel(ds, train, {}, c, MmdConfig{});
  EXPECT_TRUE(dp.model.AllFinite());
}

TEST(TrainModel, HistoryCsvHeader) {
  std::vector<EpochRecord> h{{0, 0.5, 0.25, 1.0, 0.0}};
  EXPECT_EQ(HistoryToCsv(h), "epoch,train_acc,eval_acc,mean_ce,mean_mmd\n0,0.5,0.25,1,0\n");
}

}  // namespace
}  // namespace mialab
