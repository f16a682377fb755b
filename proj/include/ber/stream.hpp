#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ber/image.hpp"
#include "ber/rng.hpp"

namespace ber {

/// One example of the stream. Either features or image is populated; a lazily
/// loaded corpus entry carries image_path until materialize() decodes it.
struct LabeledExample {
  std::vector<double> features;
  std::shared_ptr<const RasterImage> image;
  std::string image_path;
  int label = 0;
  int session = 0;
  std::optional<int> task;

  bool is_raster() const { return image != nullptr || !image_path.empty(); }
};

struct StreamBatch {
  std::size_t index = 1;  // 1-based
  std::vector<LabeledExample> examples;
  std::optional<int> task_label;
};

enum class ScenarioKind { NI, MultiTaskNC, NIC };

std::string to_string(ScenarioKind kind);
ScenarioKind parse_scenario_kind(const std::string& text);

struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::NI;
  int batches = 8;
  int classes = 10;
  int sessions = 8;
  /// Examples drawn per (class, session) cell of a training batch.
  int examples_per_cell = 100;
  int val_per_cell = 20;
  int test_per_cell = 20;
  /// MT-NC class-group sizes; empty means first_batch_larger_partition().
  std::vector<int> task_sizes;
  std::uint64_t seed = 0;

  bool operator==(const ScenarioSpec&) const = default;
};

/// Group sizes with a larger first group, e.g. (50, 9) -> [10, 5, 5, 5, 5, 5, 5, 5, 5].
std::vector<int> first_batch_larger_partition(int classes, int batches);

/// Throws ConfigError naming the violated constraint.
void validate(const ScenarioSpec& spec, int source_classes, int source_sessions);

enum class Split { Train, Validation, Test };

/// Supplies examples of a given (class, session) cell.
class ExampleSource {
public:
  virtual ~ExampleSource() = default;
  virtual int classes() const = 0;
  virtual int sessions() const = 0;
  /// Up to count examples of the cell; synthetic sources always return count.
  virtual std::vector<LabeledExample> draw(int label, int session, Split split, std::size_t count,
                                           Rng& rng) const = 0;
};

/// Features x = class_means[c] + session_offsets[s] + noise * N(0, I).
class SyntheticDriftModel final : public ExampleSource {
public:
  SyntheticDriftModel(std::vector<std::vector<double>> class_means,
                      std::vector<std::vector<double>> session_offsets, double noise);

  /// Means and offsets i.i.d. Gaussian per coordinate with the given scales.
  static SyntheticDriftModel make(int classes, int sessions, int dim, double class_scale,
                                  double session_scale, double noise, std::uint64_t seed);

  int classes() const override { return static_cast<int>(class_means_.size()); }
  int sessions() const override { return static_cast<int>(session_offsets_.size()); }
  int dim() const { return dim_; }
  double noise() const { return noise_; }
  const std::vector<double>& class_mean(int c) const { return class_means_.at(static_cast<std::size_t>(c)); }
  const std::vector<double>& session_offset(int s) const {
    return session_offsets_.at(static_cast<std::size_t>(s));
  }

  LabeledExample sample(int label, int session, Rng& rng) const;
  std::vector<LabeledExample> draw(int label, int session, Split split, std::size_t count,
                                   Rng& rng) const override;

private:
  std::vector<std::vector<double>> class_means_;
  std::vector<std::vector<double>> session_offsets_;
  double noise_;
  int dim_;
};

/// Desk-scale image analog: a centered object whose colour encodes the class
/// on a session-specific background and lighting.
class SyntheticRasterModel final : public ExampleSource {
public:
  SyntheticRasterModel(int classes, int sessions, int size, double noise, std::uint64_t seed);

  int classes() const override { return static_cast<int>(class_colors_.size()); }
  int sessions() const override { return static_cast<int>(backgrounds_.size()); }
  int size() const { return size_; }

  RasterImage render(int label, int session, Rng& rng) const;
  std::vector<LabeledExample> draw(int label, int session, Split split, std::size_t count,
                                   Rng& rng) const override;

private:
  struct Rgb {
    double r, g, b;
  };
  std::vector<Rgb> class_colors_;
  std::vector<Rgb> backgrounds_;
  std::vector<double> lighting_;
  int size_;
  double noise_;
};

/// A loaded corpus split per cell into train/validation/test by a fixed seed.
class CorpusSource final : public ExampleSource {
public:
  CorpusSource(std::vector<LabeledExample> examples, int classes, int sessions, std::uint64_t split_seed,
               double train_fraction = 0.7, double val_fraction = 0.15);

  int classes() const override { return classes_; }
  int sessions() const override { return sessions_; }
  std::vector<LabeledExample> draw(int label, int session, Split split, std::size_t count,
                                   Rng& rng) const override;

private:
  int classes_;
  int sessions_;
  // [cell][split] -> examples
  std::vector<std::array<std::vector<LabeledExample>, 3>> cells_;
};

struct Scenario {
  std::vector<StreamBatch> stream;
  std::vector<LabeledExample> validation;
  std::vector<LabeledExample> test;
  /// MT-NC: classes of each task, indexed by task label. Empty otherwise.
  std::vector<std::vector<int>> task_classes;
};

/// Pure function of (spec, source, spec.seed).
Scenario generate_scenario(const ScenarioSpec& spec, const ExampleSource& source);

struct Corpus {
  std::vector<LabeledExample> examples;
  std::optional<int> declared_classes;
  std::optional<int> declared_sessions;
};

/// Manifest: optional "# classes = C" / "# sessions = S" lines, then the header
/// `path,label,session` and one row per example. Paths are relative to the
/// manifest's directory. `.ppm` rows are images, `.csv` rows are feature files
/// holding one comma-separated row. With preload=false images are only
/// size-checked and decoded later by materialize().
Corpus load_corpus(const std::filesystem::path& manifest, bool preload = true);

/// Decodes any lazily referenced images in place.
void materialize(std::vector<LabeledExample>& examples);

}  // namespace ber
