#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ber {

enum class Phase { Train, Review };

std::string to_string(Phase phase);

/// One row of metrics.csv.
struct BatchRecord {
  std::size_t t = 0;
  Phase phase = Phase::Train;
  double val_acc = 0.0;
  double elapsed_ms = 0.0;  // since run start
  std::size_t ram_bytes = 0;
  std::size_t disk_bytes = 0;
  double loss = 0.0;  // mean minibatch loss of the last pass

  bool operator==(const BatchRecord&) const = default;
};

struct PhaseTimes {
  double train_ms = 0.0;
  double review_ms = 0.0;
  double eval_ms = 0.0;
  double total_ms = 0.0;
};

struct MetricsLog {
  std::vector<BatchRecord> records;  // one per stream batch, then the review entry if any
  std::vector<std::size_t> ram_samples;  // accounting model, one per training pass
  std::vector<std::size_t> checkpoint_bytes;  // one per checkpoint written
  std::size_t memory_snapshot_bytes = 0;
  std::optional<double> final_test_acc;
  PhaseTimes times;

  void append(const BatchRecord& r) { records.push_back(r); }
};

/// Mean validation accuracy over the stream batches; the review entry is excluded.
double avg_val_acc(const MetricsLog& log);
/// Validation accuracy of the final parameters (the review entry when present).
double final_val_acc(const MetricsLog& log);
/// Test accuracy of the final parameters.
double final_acc(const MetricsLog& log);

struct ResourceReport {
  std::size_t ram_peak_bytes = 0;
  double ram_mean_bytes = 0.0;
  std::size_t disk_bytes = 0;  // all checkpoints + memory snapshot
  PhaseTimes times;
};

ResourceReport resource_report(const MetricsLog& log);

struct RunSummary {
  std::string strategy;
  std::string scenario;
  unsigned long long seed = 0;
  std::size_t batches = 0;
  double final_test_acc = 0.0;
  double final_val_acc = 0.0;
  double avg_val_acc = 0.0;
  ResourceReport resources;
  std::vector<std::string> warnings;
};

RunSummary summarize(const MetricsLog& log, std::string strategy, std::string scenario, unsigned long long seed,
                     std::vector<std::string> warnings = {});

/// Header: t,phase,val_acc,elapsed_ms,ram_bytes,disk_bytes
void write_metrics_csv(const std::filesystem::path& path, const MetricsLog& log);
std::vector<BatchRecord> read_metrics_csv(const std::filesystem::path& path);

/// Wall-clock values live under the "timing" key only.
void write_run_json(const std::filesystem::path& path, const RunSummary& summary);
RunSummary read_run_json(const std::filesystem::path& path);

/// Shortest round-trip decimal form.
std::string format_double(double v);

}  // namespace ber
