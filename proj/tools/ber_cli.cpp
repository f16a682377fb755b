// Command-line entry point: run, ablation, inspect.

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ber/config.hpp"
#include "ber/errors.hpp"
#include "ber/experiment.hpp"

namespace {

enum class Verbosity { Quiet, Info, Debug };

Verbosity verbosity_from_env() {
  const char* v = std::getenv("BER_LOG_LEVEL");
  if (!v) return Verbosity::Info;
  const std::string s = v;
  if (s == "quiet" || s == "error") return Verbosity::Quiet;
  if (s == "debug") return Verbosity::Debug;
  return Verbosity::Info;
}

int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed, const std::string& out, bool resume,
            Verbosity verbosity) {
  ber::RunConfig cfg = ber::load_config(config_path);
  if (seed) cfg.seed = *seed;
  if (!out.empty()) cfg.output_dir = out;

  ber::RunOptions opts;
  opts.resume = resume;
  if (verbosity == Verbosity::Debug) {
    opts.on_event = [](const ber::TrainEvent& ev) {
      if (ev.kind == ber::TrainEvent::Kind::BatchEnd)
        std::fprintf(stderr, "batch %zu: val_acc=%.4f loss=%.4f memory=%zu\n", ev.batch, ev.val_acc, ev.loss,
                     ev.memory_size);
      else if (ev.kind == ber::TrainEvent::Kind::Review)
        std::fprintf(stderr, "review: val_acc=%.4f loss=%.4f\n", ev.val_acc, ev.loss);
    };
  }
  const auto outcome = ber::run_experiment(cfg, opts);
  if (verbosity != Verbosity::Quiet) {
    ber::print_run_metrics(std::cout, outcome.summary);
    std::cout << "artifacts: " << cfg.output_dir << '\n';
  }
  return 0;
}

int cmd_ablation(const std::string& matrix_path, Verbosity verbosity) {
  const auto matrix = ber::load_matrix(matrix_path);
  const auto result = ber::run_ablation(matrix);
  if (verbosity != Verbosity::Quiet) {
    std::cout << result.runs.size() << " runs\n";
    ber::print_ablation_table(std::cout, result);
  }
  return 0;
}

int cmd_inspect(const std::string& run_dir) {
  const auto summary = ber::read_run_json(std::filesystem::path(run_dir) / "run.json");
  ber::print_run_metrics(std::cout, summary);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Batch-level experience replay with review: continual-learning experiments"};
  app.require_subcommand(1);

  std::string config_path, out_dir, matrix_path, run_dir;
  std::optional<std::uint64_t> seed;
  bool resume = false;

  auto* run = app.add_subcommand("run", "Run one configured experiment");
  run->add_option("--config", config_path, "Run config file")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Override the base seed");
  run->add_option("--out", out_dir, "Override output.dir");
  run->add_flag("--resume", resume, "Continue from checkpoints in the output directory");

  auto* ablation = app.add_subcommand("ablation", "Run a strategies x seeds matrix");
  ablation->add_option("--matrix", matrix_path, "Matrix file")->required()->check(CLI::ExistingFile);

  auto* inspect = app.add_subcommand("inspect", "Print the five metrics of a finished run");
  inspect->add_option("--run", run_dir, "Run output directory")->required()->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const auto verbosity = verbosity_from_env();
  try {
    if (*run) return cmd_run(config_path, seed, out_dir, resume, verbosity);
    if (*ablation) return cmd_ablation(matrix_path, verbosity);
    if (*inspect) return cmd_inspect(run_dir);
  } catch (const ber::ConfigError& e) {
    std::cerr << "config error:\n" << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
