#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "ber/errors.hpp"
#include "ber/learner.hpp"
#include "test_util.hpp"

namespace ber {
namespace {

LearnerParams random_params(std::size_t classes, std::size_t hidden, Rng& rng, double scale = 1.0) {
  auto p = LearnerParams::zeros(classes, hidden);
  for (auto& w : p.weights.data) w = scale * rng.normal();
  for (auto& b : p.bias) b = scale * rng.normal();
  return p;
}

std::vector<LabeledExample> random_examples(std::size_t n, std::size_t dim, int classes, Rng& rng) {
  std::vector<LabeledExample> out(n);
  for (auto& ex : out) {
    ex.features.resize(dim);
    for (auto& v : ex.features) v = rng.normal();
    ex.label = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
  }
  return out;
}

TEST(Forward, ZeroHeadIsUniform) {
  FrozenFeaturizer feat(6, 9, 1);
  const auto params = LearnerParams::zeros(4, 9);
  const std::vector<double> x = {0.3, -1, 2, 0, 5, -3};
  for (double p : forward(params, feat, x)) EXPECT_DOUBLE_EQ(p, 0.25);
}

TEST(Forward, ClosedFormSoftmax) {
  FrozenFeaturizer feat(1, 1, 3);
  auto params = LearnerParams::zeros(3, 1);
  params.bias = {std::log(1.0), std::log(2.0), std::log(3.0)};
  const std::vector<double> x = {1.0};
  const auto p = forward(params, feat, x);
  EXPECT_NEAR(p[0], 1.0 / 6.0, 1e-15);
  EXPECT_NEAR(p[1], 2.0 / 6.0, 1e-15);
  EXPECT_NEAR(p[2], 3.0 / 6.0, 1e-15);
}

TEST(Forward, MatchesExtendedPrecisionOracle) {
  Rng rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    FrozenFeaturizer feat(7, 11, static_cast<std::uint64_t>(trial));
    const auto params = random_params(5, 11, rng, 3.0);
    std::vector<double> x(7);
    for (auto& v : x) v = 2.0 * rng.normal();

    std::vector<long double> phi(11);
    for (std::size_t j = 0; j < 11; ++j) {
      long double acc = feat.bias()[j];
      for (std::size_t k = 0; k < 7; ++k) acc += static_cast<long double>(feat.weights()(j, k)) * x[k];
      phi[j] = acc > 0 ? acc : 0.0L;
    }
    std::vector<long double> e(5);
    long double total = 0;
    for (std::size_t c = 0; c < 5; ++c) {
      long double z = params.bias[c];
      for (std::size_t j = 0; j < 11; ++j) z += static_cast<long double>(params.weights(c, j)) * phi[j];
      e[c] = std::exp(z);
      total += e[c];
    }
    const auto p = forward(params, feat, x);
    for (std::size_t c = 0; c < 5; ++c) {
      const long double ref = e[c] / total;
      EXPECT_LT(std::abs((p[c] - ref) / ref), 1e-12L) << "trial " << trial << " class " << c;
    }
  }
}

TEST(Forward, ProbabilitySimplex) {
  Rng rng(5);
  FrozenFeaturizer feat(4, 8, 2);
  for (int trial = 0; trial < 200; ++trial) {
    const auto params = random_params(6, 8, rng, 50.0);
    std::vector<double> x(4);
    for (auto& v : x) v = 10.0 * rng.normal();
    const auto p = forward(params, feat, x);
    double sum = 0.0;
    for (double v : p) {
      EXPECT_GE(v, 0.0);
      sum += v;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Forward, NonFiniteInputIsNumericError) {
  FrozenFeaturizer feat(2, 3, 0);
  const auto params = LearnerParams::zeros(2, 3);
  const std::vector<double> x = {1.0, std::numeric_limits<double>::quiet_NaN()};
  EXPECT_THROW(forward(params, feat, x), NumericError);
}

// Flattened parameter access for the finite-difference oracle.
double& param_at(LearnerParams& p, std::size_t i) {
  return i < p.weights.data.size() ? p.weights.data[i] : p.bias[i - p.weights.data.size()];
}

TEST(Gradient, MatchesCentralDifferencesOn100Instances) {
  Rng rng(7);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t dim = 2 + rng.below(7);
    const std::size_t hidden = 2 + rng.below(9);
    const int classes = 2 + static_cast<int>(rng.below(5));
    const std::size_t n = 1 + rng.below(8);
    FrozenFeaturizer feat(dim, hidden, static_cast<std::uint64_t>(100 + trial));
    auto params = random_params(static_cast<std::size_t>(classes), hidden, rng);
    const auto data = random_examples(n, dim, classes, rng);

    const auto g = gradient(params, feat, data);
    const std::size_t count = params.weights.data.size() + params.bias.size();
    const double h = 1e-6;
    double diff_sq = 0.0, analytic_sq = 0.0, numeric_sq = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      double& w = param_at(params, i);
      const double saved = w;
      w = saved + h;
      const double up = mean_loss(params, feat, data);
      w = saved - h;
      const double down = mean_loss(params, feat, data);
      w = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = i < g.weights.data.size() ? g.weights.data[i] : g.bias[i - g.weights.data.size()];
      diff_sq += (numeric - analytic) * (numeric - analytic);
      analytic_sq += analytic * analytic;
      numeric_sq += numeric * numeric;
    }
    const double rel = std::sqrt(diff_sq) / std::max(std::sqrt(analytic_sq) + std::sqrt(numeric_sq), 1e-12);
    worst = std::max(worst, rel);
    EXPECT_LT(rel, 1e-5) << "trial " << trial;
  }
  RecordProperty("worst_relative_error", std::to_string(worst));
}

TEST(Gradient, UniformPredictionClosedForm) {
  FrozenFeaturizer feat(3, 4, 1);
  const auto params = LearnerParams::zeros(4, 4);
  LabeledExample ex;
  ex.features = {1.0, 2.0, -1.0};
  ex.label = 2;
  const std::vector<LabeledExample> batch = {ex};
  const auto g = gradient(params, feat, batch);
  for (int c = 0; c < 4; ++c) EXPECT_NEAR(g.bias[c], 0.25 - (c == 2 ? 1.0 : 0.0), 1e-15);
  EXPECT_NEAR(g.loss, std::log(4.0), 1e-15);
}

LearnerParams saturated_head(const FrozenFeaturizer& feat, const LabeledExample& ex) {
  auto params = LearnerParams::zeros(3, feat.hidden());
  params.bias = {0.0, 0.0, 0.0};
  params.bias[static_cast<std::size_t>(ex.label)] = 800.0;
  return params;
}

TEST(Gradient, PerfectPredictionIsZero) {
  FrozenFeaturizer feat(2, 5, 4);
  LabeledExample ex;
  ex.features = {0.5, -0.25};
  ex.label = 1;
  const std::vector<LabeledExample> batch = {ex};
  const auto params = saturated_head(feat, ex);
  const auto g = gradient(params, feat, batch);
  for (double v : g.weights.data) EXPECT_LE(std::abs(v), 1e-12);
  for (double v : g.bias) EXPECT_LE(std::abs(v), 1e-12);

  auto trained = params;
  Rng rng(0);
  sgd_epoch(trained, feat, batch, {0.1, 32, 0.0}, rng);
  for (std::size_t i = 0; i < trained.bias.size(); ++i) EXPECT_NEAR(trained.bias[i], params.bias[i], 1e-12);
  for (std::size_t i = 0; i < trained.weights.data.size(); ++i)
    EXPECT_NEAR(trained.weights.data[i], params.weights.data[i], 1e-12);
}

TEST(SgdEpoch, ZeroLearningRateIsNoOp) {
  Rng rng(2);
  FrozenFeaturizer feat(4, 6, 9);
  auto params = random_params(3, 6, rng);
  const auto before = params;
  const auto data = random_examples(50, 4, 3, rng);
  sgd_epoch(params, feat, data, {0.0, 8, 0.0}, rng);
  EXPECT_EQ(params, before);
}

TEST(SgdEpoch, LossDecreasesOnSeparableToySet) {
  FrozenFeaturizer feat(2, 16, 3);
  std::vector<LabeledExample> data;
  Rng gen(11);
  for (int i = 0; i < 200; ++i) {
    LabeledExample ex;
    ex.label = i % 2;
    const double centre = ex.label == 0 ? -2.0 : 2.0;
    ex.features = {centre + 0.3 * gen.normal(), centre + 0.3 * gen.normal()};
    data.push_back(ex);
  }
  auto params = LearnerParams::zeros(2, 16);
  Rng rng(1);
  double previous = mean_loss(params, feat, data);
  for (int epoch = 0; epoch < 5; ++epoch) {
    sgd_epoch(params, feat, data, {0.05, 32, 0.0}, rng);
    const double now = mean_loss(params, feat, data);
    EXPECT_LT(now, previous) << "epoch " << epoch;
    previous = now;
  }
  EXPECT_DOUBLE_EQ(evaluate(params, feat, data), 1.0);
}

TEST(SgdEpoch, PartialLastMinibatchAndDeterminism) {
  Rng gen(3);
  FrozenFeaturizer feat(5, 7, 1);
  const auto data = random_examples(70, 5, 4, gen);
  auto a = LearnerParams::zeros(4, 7);
  auto b = a;
  Rng r1(99), r2(99);
  const auto stats = sgd_epoch(a, feat, data, {0.1, 32, 0.0}, r1);
  sgd_epoch(b, feat, data, {0.1, 32, 0.0}, r2);
  EXPECT_EQ(stats.minibatches, 3u);
  EXPECT_EQ(a, b);

  auto c = LearnerParams::zeros(4, 7);
  Rng r3(100);
  sgd_epoch(c, feat, data, {0.1, 32, 0.0}, r3);
  EXPECT_NE(a, c);
}

TEST(SgdEpoch, FeaturizerStaysFrozen) {
  auto learner = fresh_learner(5, 8, 3, 17);
  const auto weights = learner.featurizer->weights();
  const auto bias = learner.featurizer->bias();
  Rng rng(4);
  const auto data = random_examples(64, 5, 3, rng);
  for (int i = 0; i < 10; ++i) sgd_epoch(learner.params, *learner.featurizer, data, {0.5, 16, 0.9}, rng);
  EXPECT_EQ(learner.featurizer->weights(), weights);
  EXPECT_EQ(learner.featurizer->bias(), bias);
}

TEST(SgdEpoch, NonFiniteStepReportsMinibatch) {
  FrozenFeaturizer feat(2, 4, 0);
  auto params = LearnerParams::zeros(2, 4);
  params.weights.data[0] = std::numeric_limits<double>::infinity();
  LabeledExample ex;
  ex.features = {1.0, 1.0};
  const std::vector<LabeledExample> data(4, ex);
  Rng rng(0);
  try {
    sgd_epoch(params, feat, data, {0.1, 2, 0.0}, rng);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("minibatch 0"), std::string::npos) << e.what();
  }
}

TEST(Evaluate, AllCorrectIsOne) {
  FrozenFeaturizer feat(2, 3, 0);
  auto params = LearnerParams::zeros(3, 3);
  params.bias = {0.0, 5.0, 0.0};
  std::vector<LabeledExample> data(7);
  for (auto& ex : data) {
    ex.features = {0.1, 0.2};
    ex.label = 1;
  }
  EXPECT_DOUBLE_EQ(evaluate(params, feat, data), 1.0);
}

TEST(Evaluate, UntrainedModelNearChance) {
  const int classes = 10;
  const std::size_t n = 2000;
  auto learner = fresh_learner(8, 16, classes, 3);
  Rng rng(8);
  std::vector<LabeledExample> data;
  for (std::size_t i = 0; i < n; ++i) {
    LabeledExample ex;
    ex.features.resize(8);
    for (auto& v : ex.features) v = rng.normal();
    ex.label = static_cast<int>(i % classes);
    data.push_back(ex);
  }
  const double p = 1.0 / classes;
  const double sigma = std::sqrt(p * (1 - p) / n);
  EXPECT_NEAR(evaluate(learner.params, *learner.featurizer, data), p, 3.0 * sigma);
}

TEST(Evaluate, TiesGoToLowestClassAndEmptyIsError) {
  FrozenFeaturizer feat(1, 1, 0);
  auto params = LearnerParams::zeros(3, 1);
  params.bias = {0.0, 1.0, 1.0};
  const std::vector<double> x = {1.0};
  EXPECT_EQ(predict(params, feat, x), 1);
  EXPECT_THROW(evaluate(params, feat, std::vector<LabeledExample>{}), std::invalid_argument);
}

TEST(FreshLearner, SharedFeaturizerAndZeroHead) {
  const auto a = fresh_learner(6, 12, 4, 21);
  const auto b = fresh_learner(6, 12, 4, 21);
  EXPECT_EQ(a.featurizer->weights(), b.featurizer->weights());
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.params, LearnerParams::zeros(4, 12));
  const std::vector<double> x = {1, 2, 3, 4, 5, 6};
  for (double p : forward(a.params, *a.featurizer, x)) EXPECT_DOUBLE_EQ(p, 0.25);
  EXPECT_NE(fresh_learner(6, 12, 4, 22).featurizer->weights(), a.featurizer->weights());
}

TEST(FrozenFeaturizer, ActiveFractionIsNonDegenerate) {
  const std::size_t dim = 32, hidden = 64;
  FrozenFeaturizer feat(dim, hidden, 0);
  Rng rng(5);
  std::size_t active = 0, total = 0;
  for (int i = 0; i < 2000; ++i) {
    std::vector<double> x(dim);
    for (auto& v : x) v = rng.normal();
    for (double v : feat(x)) {
      active += v > 0.0 ? 1 : 0;
      ++total;
    }
  }
  const double frac = static_cast<double>(active) / static_cast<double>(total);
  EXPECT_GT(frac, 0.2);
  EXPECT_LT(frac, 0.8);
}

TEST(FrozenFeaturizer, InitScale) {
  const std::size_t dim = 50, hidden = 200;
  FrozenFeaturizer feat(dim, hidden, 8);
  double sum = 0.0, sq = 0.0;
  for (double w : feat.weights().data) {
    sum += w;
    sq += w * w;
  }
  const double n = static_cast<double>(dim * hidden);
  // sample variance of N(0, 1/d) entries: std error sqrt(2/n)/d
  EXPECT_NEAR(sq / n - (sum / n) * (sum / n), 1.0 / dim, 3.0 * std::sqrt(2.0 / n) / dim);
  for (double b : feat.bias()) EXPECT_EQ(b, 0.0);
}

TEST(Checkpoint, RoundTripAndSize) {
  testing::TempDir dir("ckpt");
  Rng rng(1);
  const auto params = random_params(5, 9, rng);
  save_checkpoint(dir / "c.bin", params);
  EXPECT_EQ(std::filesystem::file_size(dir / "c.bin"), checkpoint_bytes(params));
  EXPECT_EQ(checkpoint_bytes(params), 24u + 8u * (5u * 9u + 5u));
  EXPECT_EQ(load_checkpoint(dir / "c.bin"), params);
  testing::write_file(dir / "bad.bin", "garbage");
  EXPECT_THROW(load_checkpoint(dir / "bad.bin"), LoadError);
}

}  // namespace
}  // namespace ber
