#include "ber/learner.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>

#include "ber/errors.hpp"

namespace ber {
namespace {

constexpr char kCheckpointMagic[8] = {'B', 'E', 'R', 'C', 'K', 'P', 'T', '1'};

void require_finite(std::span<const double> x) {
  for (double v : x)
    if (!std::isfinite(v)) throw NumericError("non-finite input feature");
}

std::vector<double> logits_of(const LearnerParams& params, std::span<const double> phi) {
  std::vector<double> z(params.bias);
  for (std::size_t c = 0; c < z.size(); ++c) {
    const auto w = params.weights.row(c);
    z[c] += std::inner_product(w.begin(), w.end(), phi.begin(), 0.0);
  }
  return z;
}

void check_label(const LabeledExample& ex, std::size_t classes) {
  if (ex.label < 0 || static_cast<std::size_t>(ex.label) >= classes)
    throw std::invalid_argument("label " + std::to_string(ex.label) + " outside head with " +
                                std::to_string(classes) + " classes");
}

}  // namespace

FrozenFeaturizer::FrozenFeaturizer(std::size_t input_dim, std::size_t hidden, std::uint64_t seed)
    : weights_(hidden, input_dim), bias_(hidden, 0.0) {
  if (input_dim == 0 || hidden == 0) throw std::invalid_argument("featurizer: dims must be > 0");
  Rng rng(derive_seed(seed, "featurizer"));
  const double scale = 1.0 / std::sqrt(static_cast<double>(input_dim));
  for (auto& w : weights_.data) w = scale * rng.normal();
}

std::vector<double> FrozenFeaturizer::operator()(std::span<const double> x) const {
  if (x.size() != input_dim())
    throw std::invalid_argument("featurizer: input has " + std::to_string(x.size()) + " features, expected " +
                                std::to_string(input_dim()));
  require_finite(x);
  std::vector<double> out(hidden());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto w = weights_.row(i);
    out[i] = std::max(0.0, std::inner_product(w.begin(), w.end(), x.begin(), bias_[i]));
  }
  return out;
}

Learner fresh_learner(std::size_t input_dim, std::size_t hidden, std::size_t classes, std::uint64_t featurizer_seed) {
  return {std::make_shared<const FrozenFeaturizer>(input_dim, hidden, featurizer_seed),
          LearnerParams::zeros(classes, hidden)};
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const double m = *std::max_element(p.begin(), p.end());
  double sum = 0.0;
  for (auto& v : p) {
    v = std::exp(v - m);
    sum += v;
  }
  for (auto& v : p) v /= sum;
  return p;
}

std::vector<double> forward(const LearnerParams& params, const FrozenFeaturizer& feat, std::span<const double> x) {
  const auto phi = feat(x);
  return softmax(logits_of(params, phi));
}

namespace {

// Accumulates the minibatch gradient given precomputed features.
void accumulate(const LearnerParams& params, std::span<const double> phi, int label, Gradient& g) {
  auto p = softmax(logits_of(params, phi));
  const auto y = static_cast<std::size_t>(label);
  g.loss += -std::log(std::max(p[y], std::numeric_limits<double>::min()));
  p[y] -= 1.0;
  for (std::size_t c = 0; c < p.size(); ++c) {
    g.bias[c] += p[c];
    double* row = g.weights.data.data() + c * g.weights.cols;
    for (std::size_t j = 0; j < phi.size(); ++j) row[j] += p[c] * phi[j];
  }
}

void scale(Gradient& g, double s) {
  for (auto& v : g.weights.data) v *= s;
  for (auto& v : g.bias) v *= s;
  g.loss *= s;
}

bool finite(const Gradient& g) {
  if (!std::isfinite(g.loss)) return false;
  return std::all_of(g.weights.data.begin(), g.weights.data.end(), [](double v) { return std::isfinite(v); }) &&
         std::all_of(g.bias.begin(), g.bias.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace

Gradient gradient(const LearnerParams& params, const FrozenFeaturizer& feat,
                  std::span<const LabeledExample> minibatch) {
  if (minibatch.empty()) throw std::invalid_argument("gradient: empty minibatch");
  Gradient g{Matrix(params.classes(), params.hidden()), std::vector<double>(params.classes(), 0.0), 0.0};
  for (const auto& ex : minibatch) {
    check_label(ex, params.classes());
    accumulate(params, feat(ex.features), ex.label, g);
  }
  scale(g, 1.0 / static_cast<double>(minibatch.size()));
  if (!finite(g)) throw NumericError("non-finite loss or gradient");
  return g;
}

double mean_loss(const LearnerParams& params, const FrozenFeaturizer& feat, std::span<const LabeledExample> data) {
  if (data.empty()) throw std::invalid_argument("mean_loss: empty data");
  double total = 0.0;
  for (const auto& ex : data) {
    check_label(ex, params.classes());
    const auto p = forward(params, feat, ex.features);
    total += -std::log(std::max(p[static_cast<std::size_t>(ex.label)], std::numeric_limits<double>::min()));
  }
  return total / static_cast<double>(data.size());
}

EpochStats sgd_epoch(LearnerParams& params, const FrozenFeaturizer& feat, std::span<const LabeledExample> data,
                     const SgdConfig& cfg, Rng& rng) {
  if (data.empty()) throw std::invalid_argument("sgd_epoch: empty data");
  if (!(cfg.lr >= 0.0) || cfg.batch_size == 0) throw std::invalid_argument("sgd_epoch: need lr >= 0, batch_size >= 1");

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);

  // phi is fixed for the whole pass
  std::vector<std::vector<double>> phi(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    check_label(data[i], params.classes());
    phi[i] = feat(data[i].features);
  }

  Gradient g{Matrix(params.classes(), params.hidden()), std::vector<double>(params.classes()), 0.0};
  Gradient velocity{Matrix(params.classes(), params.hidden()), std::vector<double>(params.classes()), 0.0};
  EpochStats stats;
  for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
    const std::size_t end = std::min(order.size(), start + cfg.batch_size);
    std::fill(g.weights.data.begin(), g.weights.data.end(), 0.0);
    std::fill(g.bias.begin(), g.bias.end(), 0.0);
    g.loss = 0.0;
    for (std::size_t i = start; i < end; ++i) accumulate(params, phi[order[i]], data[order[i]].label, g);
    scale(g, 1.0 / static_cast<double>(end - start));
    if (!finite(g))
      throw NumericError("non-finite loss or gradient in minibatch " + std::to_string(stats.minibatches));

    if (cfg.momentum != 0.0) {
      for (std::size_t k = 0; k < g.weights.data.size(); ++k)
        velocity.weights.data[k] = cfg.momentum * velocity.weights.data[k] + g.weights.data[k];
      for (std::size_t k = 0; k < g.bias.size(); ++k) velocity.bias[k] = cfg.momentum * velocity.bias[k] + g.bias[k];
    }
    const Gradient& step = cfg.momentum != 0.0 ? velocity : g;
    for (std::size_t k = 0; k < params.weights.data.size(); ++k) params.weights.data[k] -= cfg.lr * step.weights.data[k];
    for (std::size_t k = 0; k < params.bias.size(); ++k) params.bias[k] -= cfg.lr * step.bias[k];

    stats.mean_loss += g.loss;
    ++stats.minibatches;
  }
  stats.mean_loss /= static_cast<double>(stats.minibatches);
  return stats;
}

int predict(const LearnerParams& params, const FrozenFeaturizer& feat, std::span<const double> x) {
  const auto z = logits_of(params, feat(x));
  // max_element returns the first maximum, i.e. the lowest class id on ties
  return static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
}

double evaluate(const LearnerParams& params, const FrozenFeaturizer& feat, std::span<const LabeledExample> data) {
  if (data.empty()) throw std::invalid_argument("evaluate: empty dataset");
  std::size_t correct = 0;
  for (const auto& ex : data)
    if (predict(params, feat, ex.features) == ex.label) ++correct;
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

std::size_t checkpoint_bytes(const LearnerParams& params) {
  return sizeof(kCheckpointMagic) + 2 * sizeof(std::uint64_t) + params.byte_size();
}

void save_checkpoint(const std::filesystem::path& path, const LearnerParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  const std::uint64_t dims[2] = {params.classes(), params.hidden()};
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  out.write(reinterpret_cast<const char*>(params.weights.data.data()),
            static_cast<std::streamsize>(params.weights.data.size() * sizeof(double)));
  out.write(reinterpret_cast<const char*>(params.bias.data()),
            static_cast<std::streamsize>(params.bias.size() * sizeof(double)));
}

LearnerParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(magic, magic + 8, kCheckpointMagic)) throw LoadError("not a checkpoint: " + path.string());
  std::uint64_t dims[2];
  in.read(reinterpret_cast<char*>(dims), sizeof(dims));
  if (!in || dims[0] == 0 || dims[1] == 0 || dims[0] > (1u << 20) || dims[1] > (1u << 20))
    throw LoadError("corrupt checkpoint header: " + path.string());
  auto params = LearnerParams::zeros(dims[0], dims[1]);
  in.read(reinterpret_cast<char*>(params.weights.data.data()),
          static_cast<std::streamsize>(params.weights.data.size() * sizeof(double)));
  in.read(reinterpret_cast<char*>(params.bias.data()), static_cast<std::streamsize>(params.bias.size() * sizeof(double)));
  if (!in) throw LoadError("truncated checkpoint: " + path.string());
  return params;
}

}  // namespace ber
