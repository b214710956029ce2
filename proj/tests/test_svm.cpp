#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "eak/rng.hpp"
#include "eak/svm.hpp"
#include "support/qp_oracle.hpp"
#include "support/svm_corpus.hpp"

using namespace eak;

namespace {

FeatureMatrix make(std::vector<std::vector<double>> rows, std::vector<int> labels) {
  FeatureMatrix X(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) X(i, j) = rows[i][j];
    X.labels()[i] = labels[i];
  }
  return X;
}

FeatureMatrix two_points() { return make({{-1, -1}, {1, 1}}, {-1, 1}); }
FeatureMatrix xor_set() { return make({{0, 0}, {1, 1}, {0, 1}, {1, 0}}, {-1, -1, 1, 1}); }

double training_accuracy(const SvmModel& m, const FeatureMatrix& X) {
  int ok = 0;
  for (std::size_t i = 0; i < X.rows(); ++i) ok += predict(m, X.row(i)) == X.labels()[i];
  return static_cast<double>(ok) / static_cast<double>(X.rows());
}

std::vector<double> gram(const FeatureMatrix& X, const KernelSpec& k) {
  std::vector<double> K(X.rows() * X.rows());
  for (std::size_t i = 0; i < X.rows(); ++i)
    for (std::size_t j = 0; j < X.rows(); ++j) K[i * X.rows() + j] = k(X.row(i), X.row(j));
  return K;
}

std::vector<double> bounds(const FeatureMatrix& X, const TrainConfig& cfg) {
  std::vector<double> u;
  for (int y : X.labels()) u.push_back(cfg.bound(y));
  return u;
}

/// Planted data: feature 0 carries the label, the rest is noise; values in [0,1].
FeatureMatrix planted(std::size_t n_per_class, std::size_t d, double shift, std::uint64_t seed) {
  FeatureMatrix X(2 * n_per_class, d);
  CounterRng rng(seed);
  for (std::size_t i = 0; i < X.rows(); ++i) {
    X.labels()[i] = i < n_per_class ? 1 : -1;
    for (std::size_t j = 0; j < d; ++j) X(i, j) = 0.4 * rng.uniform() + (j == 0 && X.labels()[i] > 0 ? shift : 0.0);
  }
  return X;
}

}  // namespace

TEST(TrainSvm, TwoPointClosedForm) {
  TrainConfig cfg;
  cfg.C = 10;
  cfg.kkt_tolerance = 1e-12;
  const auto m = train_svm(two_points(), cfg, KernelSpec::linear());
  const auto w = linear_weights(m);
  EXPECT_NEAR(w[0], 0.5, 1e-9);
  EXPECT_NEAR(w[1], 0.5, 1e-9);
  EXPECT_NEAR(m.bias, 0.0, 1e-9);
  ASSERT_EQ(m.alphas.size(), 2u);
  EXPECT_NEAR(m.alphas[0], 0.25, 1e-9);
  EXPECT_NEAR(m.dual_objective, -0.25, 1e-9);
  const std::vector<double> a{1, 1}, origin{0, 0}, three{1, 1, 1};
  EXPECT_NEAR(decision_value(m, a), 1.0, 1e-9);
  EXPECT_NEAR(decision_value(m, origin), 0.0, 1e-9);
}

TEST(TrainSvm, TieBreaksToPositive) {
  SvmModel m;
  m.dim = 2;
  m.bias = 0;
  const std::vector<double> origin{0, 0};
  EXPECT_EQ(predict(m, origin), 1);
}

TEST(TrainSvm, DimensionMismatch) {
  const auto m = train_svm(two_points(), TrainConfig{}, KernelSpec::linear());
  const std::vector<double> three{1, 1, 1};
  try {
    decision_value(m, three);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DimensionMismatch);
  }
}

TEST(TrainSvm, XorIsNotLinearlySeparable) {
  TrainConfig cfg;
  cfg.C = 10;
  const auto m = train_svm(xor_set(), cfg, KernelSpec::linear());
  const double acc = training_accuracy(m, xor_set());
  EXPECT_GE(acc, 0.5);
  EXPECT_LE(acc, 0.75);
}

TEST(TrainSvm, XorWithRbfMatchesOracleAndSeparates) {
  TrainConfig cfg;
  cfg.C = 10;
  cfg.kkt_tolerance = 1e-12;
  const auto k = KernelSpec::rbf(2);
  const auto X = xor_set();
  const auto m = train_svm(X, cfg, k);
  EXPECT_EQ(training_accuracy(m, X), 1.0);
  const auto oracle = testkit::brute_force_dual(gram(X, k), X.labels(), bounds(X, cfg));
  EXPECT_NEAR(m.dual_objective, oracle.objective, 1e-6 * std::abs(oracle.objective));
}

TEST(TrainSvm, SingleClassInput) {
  const auto X = make({{0, 0}, {1, 1}}, {1, 1});
  try {
    train_svm(X, TrainConfig{}, KernelSpec::linear());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SingleClassInput);
  }
}

TEST(TrainSvm, IterationCapFlagsNonConvergence) {
  TrainConfig cfg;
  cfg.max_passes = 1;
  cfg.kkt_tolerance = 1e-12;
  const auto m = train_svm(planted(10, 3, 0.1, 1), cfg, KernelSpec::linear());
  EXPECT_FALSE(m.converged);
}

TEST(LinearWeights, DegenerateAndNonLinear) {
  SvmModel zero;
  zero.dim = 3;
  zero.support_vectors = {{1, 2, 3}};
  zero.alphas = {0.0};
  zero.labels = {1};
  EXPECT_EQ(linear_weights(zero), (std::vector<double>{0, 0, 0}));
  const auto rbf = train_svm(xor_set(), TrainConfig{}, KernelSpec::rbf(1));
  try {
    linear_weights(rbf);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonLinearKernel);
  }
}

TEST(SvmProperties, OracleEquivalenceOnCorpus) {
  for (const auto& p : testkit::tiny_svm_corpus()) {
    const auto m = train_svm(p.X, p.cfg, p.kernel);
    const auto oracle = testkit::brute_force_dual(gram(p.X, p.kernel), p.X.labels(), bounds(p.X, p.cfg));
    EXPECT_NEAR(m.dual_objective, oracle.objective, 1e-6 * std::abs(oracle.objective));
  }
}

TEST(SvmProperties, DualFeasibility) {
  for (const auto& p : testkit::tiny_svm_corpus()) {
    const auto m = train_svm(p.X, p.cfg, p.kernel);
    double eq = 0, sum = 0;
    for (std::size_t k = 0; k < m.alphas.size(); ++k) {
      EXPECT_GE(m.alphas[k], 0.0);
      EXPECT_LE(m.alphas[k], p.cfg.bound(m.labels[k]) * (1 + 1e-12));
      eq += m.alphas[k] * m.labels[k];
      sum += m.alphas[k];
    }
    EXPECT_LE(std::abs(eq), 1e-6 * sum);
    // Unbounded support vectors sit on their margin.
    for (std::size_t k = 0; k < m.alphas.size(); ++k) {
      if (m.alphas[k] >= p.cfg.bound(m.labels[k]) * (1 - 1e-9)) continue;
      EXPECT_NEAR(decision_value(m, m.support_vectors[k]), m.labels[k], 1e-6);
    }
  }
}

TEST(SvmProperties, LinearWeightsReproduceDecisionValues) {
  const auto X = planted(20, 5, 0.3, 9);
  const auto m = train_svm(X, TrainConfig{}, KernelSpec::linear());
  const auto w = linear_weights(m);
  CounterRng rng(10);
  for (int q = 0; q < 100; ++q) {
    std::vector<double> x(5);
    for (auto& v : x) v = rng.uniform();
    const double direct = std::inner_product(w.begin(), w.end(), x.begin(), m.bias);
    EXPECT_NEAR(direct, decision_value(m, x), 1e-9);
  }
}

TEST(SvmProperties, LabelSymmetry) {
  auto X = planted(15, 3, 0.2, 11);
  auto flipped = X;
  for (auto& y : flipped.labels()) y = -y;
  TrainConfig cfg;
  cfg.kkt_tolerance = 1e-10;
  for (const auto& k : {KernelSpec::linear(), KernelSpec::rbf(2)}) {
    const auto a = train_svm(X, cfg, k);
    const auto b = train_svm(flipped, cfg, k);
    CounterRng rng(12);
    for (int q = 0; q < 20; ++q) {
      std::vector<double> x{rng.uniform(), rng.uniform(), rng.uniform()};
      EXPECT_NEAR(decision_value(b, x), -decision_value(a, x), 1e-9);
    }
  }
}

TEST(SvmProperties, CostSensitivityRaisesPositiveRecall) {
  // 10 positives vs 40 negatives with overlapping classes.
  FeatureMatrix X(50, 2);
  CounterRng rng(13);
  for (std::size_t i = 0; i < 50; ++i) {
    X.labels()[i] = i < 10 ? 1 : -1;
    X(i, 0) = 0.5 + 0.15 * rng.normal() + (i < 10 ? 0.1 : 0.0);
    X(i, 1) = 0.5 + 0.15 * rng.normal();
  }
  auto recall = [&](double wpos) {
    TrainConfig cfg;
    cfg.C = 1;
    cfg.class_weight_pos = wpos;
    const auto m = train_svm(X, cfg, KernelSpec::rbf(2));
    Confusion c;
    for (std::size_t i = 0; i < X.rows(); ++i) c.add(X.labels()[i], predict(m, X.row(i)));
    return static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  };
  EXPECT_GE(recall(10.0), recall(1.0));
}

TEST(KFold, SeparablePlantedIsPerfect) {
  const auto X = planted(30, 4, 1.0, 14);
  const auto cv = k_fold_cv(X, 10, TrainConfig{}, KernelSpec::linear(), 99);
  EXPECT_EQ(cv.mean_accuracy, 1.0);
  EXPECT_EQ(cv.fold_models.size(), 10u);
}

TEST(KFold, ShuffledLabelsAreNearChance) {
  double total = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto X = planted(63, 10, 0.0, 100 + seed);
    CounterRng rng(200 + seed);
    rng.shuffle(std::span<int>(X.labels()));
    const auto cv = k_fold_cv(X, 10, TrainConfig{}, KernelSpec::linear(), seed);
    EXPECT_NEAR(cv.mean_accuracy, 0.5, 0.15);
    total += cv.mean_accuracy;
  }
  EXPECT_NEAR(total / 10, 0.5, 0.1);
}

TEST(KFold, StratificationArithmetic) {
  FeatureMatrix X(6, 1);
  X.labels() = {1, 1, 1, -1, -1, -1};
  const auto folds = stratified_folds(X.labels(), 2, 5);
  for (int cls : {1, -1}) {
    int f0 = 0, f1 = 0;
    for (std::size_t i = 0; i < 6; ++i)
      if (X.labels()[i] == cls) (folds[i] == 0 ? f0 : f1)++;
    EXPECT_EQ(std::max(f0, f1), 2);
    EXPECT_EQ(std::min(f0, f1), 1);
  }
  for (std::size_t i = 0; i < 6; ++i) X(i, 0) = X.labels()[i];
  EXPECT_NO_THROW(k_fold_cv(X, 2, TrainConfig{}, KernelSpec::linear(), 5));
}

TEST(KFold, LowersKForSmallClasses) {
  const auto X = planted(4, 2, 1.0, 15);
  const auto cv = k_fold_cv(X, 10, TrainConfig{}, KernelSpec::linear(), 1);
  EXPECT_EQ(cv.k, 4);
  EXPECT_EQ(cv.warnings.size(), 1u);
  try {
    k_fold_cv(X, 1, TrainConfig{}, KernelSpec::linear(), 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::TooFewFolds);
  }
  const auto tiny = make({{0}, {1}, {2}}, {1, -1, -1});
  try {
    k_fold_cv(tiny, 2, TrainConfig{}, KernelSpec::linear(), 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::TooFewSamples);
  }
}

TEST(ModelJson, RoundTripPreservesDecisions) {
  const auto X = planted(10, 3, 0.3, 16);
  const auto m = train_svm(X, TrainConfig{}, KernelSpec::rbf(4));
  const auto back = model_from_json(nlohmann::json::parse(model_to_json(m).dump()));
  for (std::size_t i = 0; i < X.rows(); ++i) EXPECT_DOUBLE_EQ(decision_value(back, X.row(i)), decision_value(m, X.row(i)));
}
