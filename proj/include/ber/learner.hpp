#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "ber/rng.hpp"
#include "ber/stream.hpp"

namespace ber {

/// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  bool operator==(const Matrix&) const = default;
};

/// phi(x) = max(0, W x + b), fixed at construction.
class FrozenFeaturizer {
public:
  /// Weights i.i.d. N(0, 1/input_dim), bias zero.
  FrozenFeaturizer(std::size_t input_dim, std::size_t hidden, std::uint64_t seed);

  std::size_t input_dim() const { return weights_.cols; }
  std::size_t hidden() const { return weights_.rows; }
  const Matrix& weights() const { return weights_; }
  const std::vector<double>& bias() const { return bias_; }

  std::vector<double> operator()(std::span<const double> x) const;

private:
  Matrix weights_;
  std::vector<double> bias_;
};

/// Trainable softmax head.
struct LearnerParams {
  Matrix weights;  // classes x hidden
  std::vector<double> bias;

  static LearnerParams zeros(std::size_t classes, std::size_t hidden) {
    return {Matrix(classes, hidden), std::vector<double>(classes, 0.0)};
  }
  std::size_t classes() const { return weights.rows; }
  std::size_t hidden() const { return weights.cols; }
  std::size_t byte_size() const { return (weights.data.size() + bias.size()) * sizeof(double); }

  bool operator==(const LearnerParams&) const = default;
};

struct Learner {
  std::shared_ptr<const FrozenFeaturizer> featurizer;
  LearnerParams params;
};

/// Shared frozen featurizer (one per featurizer_seed) with a zero head.
Learner fresh_learner(std::size_t input_dim, std::size_t hidden, std::size_t classes,
                      std::uint64_t featurizer_seed);

struct SgdConfig {
  double lr = 0.01;
  std::size_t batch_size = 32;
  /// Heavy-ball momentum; the velocity is reset at the start of every pass.
  double momentum = 0.0;

  bool operator==(const SgdConfig&) const = default;
};

struct Gradient {
  Matrix weights;
  std::vector<double> bias;
  double loss = 0.0;  // mean cross-entropy
};

/// Softmax probabilities of the head over phi(x).
std::vector<double> forward(const LearnerParams& params, const FrozenFeaturizer& feat, std::span<const double> x);

/// Softmax with max-subtraction.
std::vector<double> softmax(std::span<const double> logits);

/// Exact mean softmax cross-entropy gradient over the minibatch.
Gradient gradient(const LearnerParams& params, const FrozenFeaturizer& feat,
                  std::span<const LabeledExample> minibatch);

/// Mean cross-entropy over data.
double mean_loss(const LearnerParams& params, const FrozenFeaturizer& feat, std::span<const LabeledExample> data);

struct EpochStats {
  double mean_loss = 0.0;  // average of minibatch losses before each step
  std::size_t minibatches = 0;
};

/// One shuffled pass of minibatch SGD over data, updating params in place.
EpochStats sgd_epoch(LearnerParams& params, const FrozenFeaturizer& feat, std::span<const LabeledExample> data,
                     const SgdConfig& cfg, Rng& rng);

/// Argmax class, ties to the lowest id.
int predict(const LearnerParams& params, const FrozenFeaturizer& feat, std::span<const double> x);

/// Fraction of examples whose predicted class equals the label.
double evaluate(const LearnerParams& params, const FrozenFeaturizer& feat, std::span<const LabeledExample> data);

/// Header: magic, classes, hidden (u64); then weights row-major and bias as f64.
void save_checkpoint(const std::filesystem::path& path, const LearnerParams& params);
LearnerParams load_checkpoint(const std::filesystem::path& path);
std::size_t checkpoint_bytes(const LearnerParams& params);

}  // namespace ber
