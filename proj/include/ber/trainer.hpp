#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ber/augment.hpp"
#include "ber/learner.hpp"
#include "ber/memory.hpp"
#include "ber/metrics.hpp"
#include "ber/rng.hpp"
#include "ber/stream.hpp"

namespace ber {

struct TrainerConfig {
  std::size_t mem_sz = 10000;
  std::size_t replay_sz = 10000;
  std::size_t review_sz = 20000;
  std::size_t batch_sz = 32;
  double lr_replay = 0.01;
  double review_lr_decay = 0.5;
  double momentum = 0.0;
  std::size_t epochs = 2;
  std::size_t review_epochs = 1;

  double lr_review() const { return lr_replay * review_lr_decay; }
  SgdConfig replay_sgd() const { return {lr_replay, batch_sz, momentum}; }
  SgdConfig review_sgd() const { return {lr_review(), batch_sz, momentum}; }
  /// Throws ConfigError; checks the fields used by the given strategy parts.
  void validate(bool uses_memory, bool uses_review) const;

  bool operator==(const TrainerConfig&) const = default;
};

struct EvalSets {
  std::vector<LabeledExample> validation;
  std::vector<LabeledExample> test;
};

/// Instrumentation emitted during training.
struct TrainEvent {
  enum class Kind { Epoch, MemoryUpdate, BatchEnd, Review } kind;
  std::size_t batch = 0;
  std::size_t epoch = 0;
  std::size_t replay_drawn = 0;  // memory examples concatenated into D_train
  std::size_t train_size = 0;    // |D_train|
  std::size_t inserted = 0;      // MemoryUpdate only
  std::size_t memory_size = 0;
  double loss = 0.0;
  double val_acc = 0.0;
};

/// State after a completed stream batch, enough to continue the run exactly.
struct ResumePoint {
  std::size_t completed_batches = 0;
  LearnerParams params;
  std::optional<ReplayMemory> memory;
  MetricsLog log;
};

struct TrainerOptions {
  InputEncoder encoder;
  SeedStreams seeds;
  /// When set, a checkpoint and memory snapshot are written after every batch.
  std::optional<std::filesystem::path> checkpoint_dir;
  std::function<void(const TrainEvent&)> on_event;
  std::optional<ResumePoint> resume;
};

/// Per-task heads over one shared frozen featurizer; routes by task label.
struct MultiHeadModel {
  std::shared_ptr<const FrozenFeaturizer> featurizer;
  std::vector<std::optional<LearnerParams>> heads;  // indexed by task label
  std::vector<std::vector<int>> task_classes;

  /// Global class id; throws RoutingError for a task without a trained head.
  int predict(std::span<const double> x, int task) const;
  /// Examples of tasks without a head count as wrong when count_unseen_as_wrong,
  /// otherwise they raise RoutingError.
  double evaluate(std::span<const LabeledExample> data, bool count_unseen_as_wrong = false) const;
};

struct RunResult {
  Learner learner;
  std::optional<MultiHeadModel> multi_head;
  MetricsLog log;
  std::optional<ReplayMemory> memory;
  std::vector<std::string> warnings;
};

/// Batch-level experience replay; review runs after the stream when with_review.
RunResult train_ber(const std::vector<StreamBatch>& stream, const TrainerConfig& cfg, Learner learner,
                    ReplayMemory memory, const EvalSets& eval, const TrainerOptions& opts, bool with_review = true);

/// Samples review_sz examples from memory and runs review_epochs passes at lr_review.
/// Returns false (and leaves params unchanged) when memory is empty.
bool review(LearnerParams& params, const FrozenFeaturizer& feat, const ReplayMemory& memory,
            const TrainerConfig& cfg, const TrainerOptions& opts, double* last_loss = nullptr);

/// Plain sequential fine-tuning: no memory, replay, or review.
RunResult train_finetune_baseline(const std::vector<StreamBatch>& stream, const TrainerConfig& cfg, Learner learner,
                                  const EvalSets& eval, const TrainerOptions& opts);

/// A fresh head per task label, restricted to that task's classes.
RunResult train_multitask_nc(const std::vector<StreamBatch>& stream, const std::vector<std::vector<int>>& task_classes,
                             const TrainerConfig& cfg, const Learner& prototype, const EvalSets& eval,
                             const TrainerOptions& opts);

/// Offline training on the pooled stream for the given number of passes.
LearnerParams train_joint(const std::vector<StreamBatch>& stream, const TrainerConfig& cfg, Learner learner,
                          std::size_t epochs, const TrainerOptions& opts);

/// Reads the newest per-batch checkpoint written under dir.
ResumePoint load_resume_point(const std::filesystem::path& dir);

}  // namespace ber
