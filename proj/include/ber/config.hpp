#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ber/augment.hpp"
#include "ber/rng.hpp"
#include "ber/stream.hpp"
#include "ber/trainer.hpp"

namespace ber {

enum class Strategy { Baseline, Ber, BerReview, BerReviewPreproc, IndModel, IndModelPreproc };

std::string to_string(Strategy s);
Strategy parse_strategy(const std::string& text);
bool uses_memory(Strategy s);
bool uses_review(Strategy s);
bool uses_preprocessing(Strategy s);
bool is_independent_model(Strategy s);

enum class DataSource { Synthetic, Raster, Corpus };

std::string to_string(DataSource s);

struct DataConfig {
  DataSource source = DataSource::Synthetic;
  // synthetic feature vectors
  int feature_dim = 32;
  double class_scale = 1.0;
  double session_scale = 1.0;
  double noise = 1.0;
  // synthetic rasters
  int image_size = 128;
  double pixel_noise = 8.0;
  // on-disk corpus
  std::string manifest;
  // raster inputs are average-pooled on this grid before the featurizer
  int pool_grid = 4;

  bool operator==(const DataConfig&) const = default;
};

struct RunConfig {
  ScenarioSpec scenario;
  DataConfig data;
  Strategy strategy = Strategy::BerReview;
  std::string optimizer = "SGD";
  TrainerConfig trainer;
  /// Alternative to replay.examples: mem_sz = per-batch count x scenario.batches.
  std::optional<std::size_t> replay_examples_per_batch;
  bool preload_data = false;
  std::size_t hidden = 64;
  std::uint64_t featurizer_seed = 0;
  AugmentPlan augment;
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> seed_data;
  std::optional<std::uint64_t> seed_memory;
  std::optional<std::uint64_t> seed_sgd;
  std::optional<std::uint64_t> seed_augment;
  std::string output_dir = "runs/default";
  bool checkpoints = true;

  std::size_t memory_capacity() const;
  SeedStreams seed_streams() const;
  bool operator==(const RunConfig&) const = default;
};

/// key -> (value, 1-based line)
using KeyValues = std::map<std::string, std::pair<std::string, std::size_t>>;

/// `key = value` lines; '#' starts a comment. Throws ConfigError with line numbers.
KeyValues parse_key_values(const std::string& text);

/// All problems are reported in one ConfigError, one per line.
RunConfig config_from_key_values(const KeyValues& kv);
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

/// Canonical form: every key, fixed order, shortest round-trip numbers.
std::string serialize(const RunConfig& cfg);

/// Cross-field checks (strategy/scenario compatibility, trainer ranges).
void validate(const RunConfig& cfg);

struct AblationMatrix {
  RunConfig base;  // strategy and seed are overridden per arm
  std::vector<Strategy> strategies;
  std::vector<std::uint64_t> seeds;
  std::size_t workers = 1;
  std::string output_dir = "runs/ablation";
};

/// Matrix keys: matrix.strategies, matrix.seeds, matrix.workers, matrix.base
/// (a base config path, relative to the matrix file); other keys override the base.
AblationMatrix load_matrix(const std::filesystem::path& path);

}  // namespace ber
