#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ber/config.hpp"
#include "ber/metrics.hpp"
#include "ber/stream.hpp"
#include "ber/trainer.hpp"

namespace ber {

/// The data source a config describes, seeded from its data stream.
std::unique_ptr<ExampleSource> make_source(const RunConfig& cfg);
Scenario build_scenario(const RunConfig& cfg);
std::size_t input_dim(const RunConfig& cfg);

struct RunOptions {
  /// Write metrics.csv, run.json, config.cfg, memory.bin and checkpoints under cfg.output_dir.
  bool write_artifacts = true;
  /// Continue from checkpoints left in cfg.output_dir by an interrupted run.
  bool resume = false;
  std::function<void(const TrainEvent&)> on_event;
};

struct RunOutcome {
  RunSummary summary;
  RunResult result;
};

/// Executes one configured strategy end to end.
RunOutcome run_experiment(const RunConfig& cfg, const RunOptions& opts = {});
/// Same, on an already generated scenario (avoids regenerating data across arms).
RunOutcome run_experiment(const RunConfig& cfg, const Scenario& scenario, const RunOptions& opts = {});

struct AblationRow {
  std::string method;
  std::size_t runs = 0;
  double avg_val_mean = 0.0;
  double avg_val_std = 0.0;
  double final_val_mean = 0.0;
  double final_val_std = 0.0;
  double final_test_mean = 0.0;
};

struct AblationResult {
  std::vector<RunSummary> runs;  // ordered by (method, seed) as listed in the matrix
  std::vector<AblationRow> rows;
};

/// Cross product of strategies x seeds on up to matrix.workers threads.
AblationResult run_ablation(const AblationMatrix& matrix, bool write_artifacts = true);

/// Columns method, avg_val_acc, final_val_acc as mean +- sample std over seeds.
void print_ablation_table(std::ostream& out, const AblationResult& result);
void write_ablation_csv(const std::filesystem::path& path, const AblationResult& result);

/// The five challenge metrics of a finished run directory.
void print_run_metrics(std::ostream& out, const RunSummary& summary);

}  // namespace ber
