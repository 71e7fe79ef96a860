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

#include <algorithm>
#include <cmath>
#include <map>

#include <gtest/gtest.h>

#include "attacks.hpp"
#include "errors.hpp"
#include "test_support.hpp"

namespace mialab {
namespace {

// Serves fixed probability vectors keyed by the first feature.
class TableOracle final : public ProbabilityOracle {
 public:
  explicit TableOracle(std::map<double, Eigen::VectorXd> table) : table_(std::move(table)) {}
  Eigen::MatrixXd Probabilities(std::span<const Instance> queries) const override {
    Eigen::MatrixXd out(table_.begin()->second.size(), static_cast<Eigen::Index>(queries.size()));
    for (std::size_t i = 0; i < queries.size(); ++i) {
      out.col(static_cast<Eigen::Index>(i)) = table_.at(queries[i].features[0]);
    }
    return out;
  }

 private:
  std::map<double, Eigen::VectorXd> table_;
};

Eigen::VectorXd Vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

// Exhaustive reference: every observed score as a candidate, balanced
// accuracy by direct counting, smallest threshold among the best.
std::pair<double, double> ExhaustiveThreshold(const std::vector<double>& s,
                                              const std::vector<bool>& m) {
  double best_acc = -1.0, best_t = 0.0;
  for (double t : s) {
    double tp = 0, tn = 0, pos = 0, neg = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (m[i]) {
        ++pos;
        tp += s[i] >= t;
      } else {
        ++neg;
        tn += s[i] < t;
      }
    }
    const double acc = 0.5 * (tp / pos + tn / neg);
    if (acc > best_acc || (acc == best_acc && t < best_t)) {
      best_acc = acc;
      best_t = t;
    }
  }
  return {best_t, best_acc};
}

TEST(Kl, SelfDivergenceIsZero) {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd z(6);
    for (Eigen::Index i = 0; i < 6; ++i) z(i) = 3.0 * rng.Gaussian();
    ProbVector p = Softmax(z);
    EXPECT_EQ(KlDivergence(p, p), 0.0);
  }
  ProbVector onehot(Vec({0.0, 1.0, 0.0}));
  EXPECT_EQ(KlDivergence(onehot, onehot), 0.0);
}

TEST(Kl, KnownValueAndNonNegativity) {
  ProbVector p(Vec({0.5, 0.5})), q(Vec({0.25, 0.75}));
  EXPECT_NEAR(KlDivergence(p, q), 0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0), 1e-15);
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd a(4), b(4);
    for (Eigen::Index i = 0; i < 4; ++i) {
      a(i) = rng.Gaussian();
      b(i) = rng.Gaussian();
    }
    EXPECT_GE(KlDivergence(Softmax(a), Softmax(b)), -1e-15);
  }
  EXPECT_THROW(KlDivergence(p, ProbVector(Vec({1.0}))), ShapeError);
}

TEST(Threshold, MatchesExhaustiveScan) {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.Index(60);
    std::vector<double> s(n);
    std::vector<bool> m(n);
    // Coarse grid so ties are common.
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = i % 2 == 0 || rng.Bernoulli(0.3);
      s[i] = std::round((m[i] ? 0.6 : 0.4) * 10 + 2 * rng.Gaussian()) / 10.0;
    }
    if (std::all_of(m.begin(), m.end(), [](bool b) { return b; })) m[1] = false;
    const auto [t, acc] = ExhaustiveThreshold(s, m);
    const ThresholdModel tm = BestThreshold(s, m);
    EXPECT_EQ(tm.threshold, t) << "trial " << trial;
    EXPECT_TRUE(tm.member_if_at_least);
    EXPECT_DOUBLE_EQ(BalancedAccuracy(s, m, tm.threshold), acc);
  }
}

TEST(Threshold, PerfectSeparation) {
  std::vector<double> s{0.1, 0.2, 0.8, 0.9};
  std::vector<bool> m{false, false, true, true};
  EXPECT_EQ(BestThreshold(s, m).threshold, 0.8);
  EXPECT_EQ(BalancedAccuracy(s, m, 0.8), 1.0);
  EXPECT_THROW(BestThreshold(s, std::vector<bool>(4, true)), ParameterError);
}

TEST(Percentile, TopTenPercent) {
  std::vector<double> s(100);
  for (std::size_t i = 0; i < 100; ++i) s[i] = static_cast<double>(100 - i);
  const double t = TopPercentileThreshold(s, 10.0);
  EXPECT_EQ(t, 91.0);
  EXPECT_EQ(std::count_if(s.begin(), s.end(), [&](double v) { return v >= t; }), 10);
  EXPECT_EQ(TopPercentileThreshold(s, 100.0), 1.0);
  EXPECT_EQ(TopPercentileThreshold({5.0}, 0.5), 5.0);
  EXPECT_THROW(TopPercentileThreshold(s, 0.0), ParameterError);
}

TEST(TopValues, SortedDescending) {
  Eigen::MatrixXd p(4, 1);
  p << 0.1, 0.4, 0.2, 0.3;
  Eigen::MatrixXd t = TopValues(p, 3);
  EXPECT_EQ(t(0, 0), 0.4);
  EXPECT_EQ(t(1, 0), 0.3);
  EXPECT_EQ(t(2, 0), 0.2);
  EXPECT_THROW(TopValues(p, 5), ParameterError);
}

TEST(AttackClassifier, SeparatesSeparableData) {
  Rng rng(3);
  Eigen::MatrixXd x(2, 200);
  std::vector<bool> y(200);
  for (Eigen::Index i = 0; i < 200; ++i) {
    y[static_cast<std::size_t>(i)] = i % 2 == 0;
    const double c = y[static_cast<std::size_t>(i)] ? 2.0 : -2.0;
    x(0, i) = c + 0.5 * rng.Gaussian();
    x(1, i) = rng.Gaussian();
  }
  for (std::size_t hidden : {std::size_t{0}, std::size_t{8}}) {
    AttackClassifierConfig cfg;
    cfg.hidden = hidden;
    MlpModel clf = TrainAttackClassifier(x, y, cfg);
    Eigen::VectorXd p = MemberProbability(clf, x);
    std::size_t correct = 0;
    for (Eigen::Index i = 0; i < 200; ++i) {
      correct += (p(i) >= 0.5) == y[static_cast<std::size_t>(i)];
    }
    EXPECT_GE(correct, 198u) << "hidden " << hidden;
  }
}

// Two classes, four eval instances, two shadows with hand-set outputs.
struct HandEnsemble {
  ShadowEnsemble ens;
  std::vector<Instance> queries;
  HandEnsemble() {
    for (int i = 0; i < 4; ++i) {
      ens.eval_instances.push_back({{static_cast<double>(i)}, static_cast<std::size_t>(i % 2)});
    }
    queries = ens.eval_instances;
    ens.models = {MlpModel::Create({1, 2}, 1), MlpModel::Create({1, 2}, 2)};
    ens.bitmaps = {MembershipBitmap({true, true, false, false}),
                   MembershipBitmap({false, true, true, false})};
    Eigen::MatrixXd a(2, 4), b(2, 4);
    a << 0.9, 0.2, 0.6, 0.5, 0.1, 0.8, 0.4, 0.5;
    b << 0.7, 0.1, 0.95, 0.3, 0.3, 0.9, 0.05, 0.7;
    ens.eval_probs = {a, b};
  }
};

TEST(GlobalLoss, ThresholdIsMeanShadowMemberLoss) {
  HandEnsemble h;
  // shadow 0 members: 0 (p=0.9), 1 (p=0.8); shadow 1 members: 1 (0.9), 2 (0.95)
  const double expected = 0.5 * (-(std::log(0.9) + std::log(0.8)) / 2) +
                          0.5 * (-(std::log(0.9) + std::log(0.95)) / 2);
  EXPECT_NEAR(GlobalLossThreshold(h.ens), expected, 1e-15);
  TableOracle target({{0.0, Vec({0.99, 0.01})},
                      {1.0, Vec({0.5, 0.5})},
                      {2.0, Vec({0.2, 0.8})},
                      {3.0, Vec({0.05, 0.95})}});
  auto pred = GlobalLossAttack(target, h.queries, h.ens);
  EXPECT_EQ(pred, (std::vector<bool>{true, false, false, true}));
}

TEST(GlobalProbability, UsesPooledBestThreshold) {
  HandEnsemble h;
  std::vector<double> s{0.9, 0.8, 0.6, 0.5, 0.7, 0.9, 0.95, 0.7};
  std::vector<bool> m{true, true, false, false, false, true, true, false};
  const double t = ExhaustiveThreshold(s, m).first;
  TableOracle target({{0.0, Vec({0.85, 0.15})},
                      {1.0, Vec({0.3, 0.7})},
                      {2.0, Vec({0.9, 0.1})},
                      {3.0, Vec({0.1, 0.9})}});
  auto pred = GlobalProbabilityAttack(target, h.queries, h.ens);
  std::vector<double> true_prob{0.85, 0.7, 0.9, 0.9};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(pred[i], true_prob[i] >= t);
}

TEST(Baseline, MemberIffCorrect) {
  HandEnsemble h;
  TableOracle target({{0.0, Vec({0.9, 0.1})},
                      {1.0, Vec({0.9, 0.1})},
                      {2.0, Vec({0.4, 0.6})},
                      {3.0, Vec({0.2, 0.8})}});
  EXPECT_EQ(BaselineAttack(target, h.queries), (std::vector<bool>{true, false, false, true}));
}

TEST(InstanceVector, FallsBackWithoutEnoughShadows) {
  HandEnsemble h;   // every instance has at most one in-shadow
  TableOracle target({{0.0, Vec({0.9, 0.1})},
                      {1.0, Vec({0.9, 0.1})},
                      {2.0, Vec({0.9, 0.1})},
                      {3.0, Vec({0.9, 0.1})}});
  EXPECT_EQ(InstanceVectorAttack(target, h.queries, h.ens),
            BaselineAttack(target, h.queries));
  std::vector<Instance> shuffled{h.queries[1], h.queries[0], h.queries[2], h.queries[3]};
  EXPECT_THROW(InstanceVectorAttack(target, shuffled, h.ens), InvariantError);
}

TEST(InstanceVector, PicksCloserAverage) {
  ShadowEnsemble ens;
  ens.eval_instances = {{{0.0}, 0}, {{1.0}, 0}};
  for (int s = 0; s < 4; ++s) {
    ens.models.push_back(MlpModel::Create({1, 2}, 1));
    const bool first_in = s < 2;
    ens.bitmaps.push_back(MembershipBitmap({first_in, !first_in}));
    Eigen::MatrixXd p(2, 2);
    // In-shadows are confident on an instance, out-shadows are not.
    p.col(0) = first_in ? Vec({0.95, 0.05}) : Vec({0.6, 0.4});
    p.col(1) = first_in ? Vec({0.6, 0.4}) : Vec({0.95, 0.05});
    ens.eval_probs.push_back(p);
  }
  TableOracle target({{0.0, Vec({0.97, 0.03})}, {1.0, Vec({0.55, 0.45})}});
  EXPECT_EQ(InstanceVectorAttack(target, ens.eval_instances, ens),
            (std::vector<bool>{true, false}));
}

TEST(TopOne, ConfidentQueriesAreMembers) {
  std::vector<Instance> q{{{0.0, 0.0}, 0}, {{1.0, 1.0}, 1}};
  class Fixed final : public ProbabilityOracle {
   public:
    Eigen::MatrixXd Probabilities(std::span<const Instance> qs) const override {
      Eigen::MatrixXd out(2, static_cast<Eigen::Index>(qs.size()));
      for (std::size_t i = 0; i < qs.size(); ++i) {
        const double top = qs[i].features[0] == 1.0 ? 0.99 : 0.6;
        out.col(static_cast<Eigen::Index>(i)) = Vec({top, 1.0 - top});
      }
      return out;
    }
  } target;
  TopOneConfig cfg;
  EXPECT_EQ(GlobalTopOneAttack(target, q, cfg), (std::vector<bool>{true, true}));
  cfg.num_random_queries = 50;
  EXPECT_THROW(GlobalTopOneAttack(target, q, cfg), ParameterError);
}

TEST(Score, AdvantageIsAccuracyMinusHalf) {
  std::vector<Instance> q(4, Instance{{0.0}, 0});
  BalancedEvalSet e(q, {true, true, false, false});
  AttackResult r = ScoreAttack("x", {true, false, false, false}, e);
  EXPECT_EQ(r.accuracy, 0.75);
  EXPECT_EQ(r.advantage, 0.25);
  EXPECT_THROW(ScoreAttack("x", {true}, e), ShapeError);
}

TEST(Suite, RunsAllAttacksAndRecordsFailures) {
  Dataset ds = GenerateSynthetic({3, 4, 60, 1.0}, 5);
  SplitPlan plan = SplitThreeWay(ds, 40, 6);
  TrainingSample sample = SampleTrainingSet(plan, Pool::kGeneral, 30, 7);
  TrainConfig cfg;
  cfg.hidden_layers = {16};
  cfg.epochs = 5;
  cfg.batch_size = 8;
  MlpModel target = TrainModel(ds, sample.indices, {}, cfg, MmdConfig{}).model;
  ShadowOptions opts;
  opts.count = 4;
  opts.train_size = 30;
  ShadowEnsemble ens = TrainShadowEnsemble(ds, plan, cfg, MmdConfig{}, opts, 8);
  EXPECT_NO_THROW(ens.Validate());
  BalancedEvalSet eval = BuildBalancedEvalSet(ds, plan, sample.bitmap);
  AttackSuiteConfig suite;
  suite.top_one.num_random_queries = 200;
  auto results = RunAllAttacks(ModelOracle(target), eval, ens, suite);
  ASSERT_EQ(results.size(), kAttackNames.size());
  for (std::size_t i = 0; i < results.size(); ++i) {
    EXPECT_EQ(results[i].attack_name, kAttackNames[i]);
    EXPECT_TRUE(results[i].ok()) << results[i].error;
    EXPECT_EQ(results[i].advantage, results[i].accuracy - 0.5);
  }
  suite.instance_vector = false;
  results = RunAllAttacks(ModelOracle(target), eval, ens, suite);
  EXPECT_FALSE(results[0].ok());
  EXPECT_TRUE(std::isnan(results[0].advantage));
  for (std::size_t i = 1; i < results.size(); ++i) EXPECT_TRUE(results[i].ok());
  const std::string csv = AttackResultsToCsv(results);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "attack,accuracy,advantage,n_eval");
}

TEST(Shadows, SeededAndThreadIndependent) {
  Dataset ds = GenerateSynthetic({3, 4, 60, 1.0}, 5);
  SplitPlan plan = SplitThreeWay(ds, 40, 6);
  TrainConfig cfg;
  cfg.hidden_layers = {8};
  cfg.epochs = 2;
  ShadowOptions opts;
  opts.count = 3;
  ShadowEnsemble a = TrainShadowEnsemble(ds, plan, cfg, MmdConfig{}, opts, 1);
  opts.threads = 3;
  ShadowEnsemble b = TrainShadowEnsemble(ds, plan, cfg, MmdConfig{}, opts, 1);
  for (std::size_t s = 0; s < 3; ++s) {
    EXPECT_EQ(ModelToJson(a.models[s]), ModelToJson(b.models[s]));
    EXPECT_EQ(a.bitmaps[s], b.bitmaps[s]);
  }
  EXPECT_NE(a.bitmaps[0], a.bitmaps[1]);
}

}  // namespace
}  // namespace mialab
