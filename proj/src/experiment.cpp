#include "ber/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <thread>

#include "ber/errors.hpp"

namespace ber {

std::unique_ptr<ExampleSource> make_source(const RunConfig& cfg) {
  const auto seeds = cfg.seed_streams();
  const auto& d = cfg.data;
  switch (d.source) {
    case DataSource::Synthetic:
      return std::make_unique<SyntheticDriftModel>(SyntheticDriftModel::make(
          cfg.scenario.classes, cfg.scenario.sessions, d.feature_dim, d.class_scale, d.session_scale, d.noise,
          derive_seed(seeds.data, "model")));
    case DataSource::Raster:
      return std::make_unique<SyntheticRasterModel>(cfg.scenario.classes, cfg.scenario.sessions, d.image_size,
                                                    d.pixel_noise, derive_seed(seeds.data, "model"));
    case DataSource::Corpus: {
      auto corpus = load_corpus(d.manifest, cfg.preload_data);
      for (const auto& ex : corpus.examples)
        if (!ex.is_raster()) throw ConfigError("data.source = corpus currently expects image rows (.ppm)");
      const int classes = corpus.declared_classes.value_or(cfg.scenario.classes);
      const int sessions = corpus.declared_sessions.value_or(cfg.scenario.sessions);
      return std::make_unique<CorpusSource>(std::move(corpus.examples), classes, sessions,
                                            derive_seed(seeds.data, "split"));
    }
  }
  throw ConfigError("unknown data source");
}

Scenario build_scenario(const RunConfig& cfg) {
  auto source = make_source(cfg);
  ScenarioSpec spec = cfg.scenario;
  spec.seed = cfg.seed_streams().data;
  return generate_scenario(spec, *source);
}

std::size_t input_dim(const RunConfig& cfg) {
  if (cfg.data.source == DataSource::Synthetic) return static_cast<std::size_t>(cfg.data.feature_dim);
  return static_cast<std::size_t>(cfg.data.pool_grid * cfg.data.pool_grid * 3);
}

RunOutcome run_experiment(const RunConfig& cfg, const RunOptions& opts) {
  return run_experiment(cfg, build_scenario(cfg), opts);
}

RunOutcome run_experiment(const RunConfig& cfg, const Scenario& scenario, const RunOptions& opts) {
  validate(cfg);
  const std::filesystem::path out_dir = cfg.output_dir;
  if (opts.write_artifacts) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw ConfigError("output.dir '" + out_dir.string() + "' is not writable: " + ec.message());
  }

  TrainerOptions topts;
  topts.seeds = cfg.seed_streams();
  topts.encoder.pool_grid = cfg.data.pool_grid;
  if (uses_preprocessing(cfg.strategy)) topts.encoder.plan = cfg.augment;
  topts.on_event = opts.on_event;
  if (opts.write_artifacts && cfg.checkpoints) topts.checkpoint_dir = out_dir / "checkpoints";
  if (opts.resume) {
    if (!topts.checkpoint_dir) throw ConfigError("--resume needs output.checkpoints = yes");
    if (is_independent_model(cfg.strategy)) throw ConfigError("--resume is not supported for ind_model strategies");
    topts.resume = load_resume_point(*topts.checkpoint_dir);
  }

  TrainerConfig tcfg = cfg.trainer;
  tcfg.mem_sz = cfg.memory_capacity();
  const auto learner = fresh_learner(input_dim(cfg), cfg.hidden, static_cast<std::size_t>(cfg.scenario.classes),
                                     cfg.featurizer_seed);
  const EvalSets eval{scenario.validation, scenario.test};

  RunResult result;
  switch (cfg.strategy) {
    case Strategy::Baseline:
      result = train_finetune_baseline(scenario.stream, tcfg, learner, eval, topts);
      break;
    case Strategy::Ber:
    case Strategy::BerReview:
    case Strategy::BerReviewPreproc: {
      ReplayMemory memory(tcfg.mem_sz, scenario.stream.size());
      result = train_ber(scenario.stream, tcfg, learner, std::move(memory), eval, topts, uses_review(cfg.strategy));
      break;
    }
    case Strategy::IndModel:
    case Strategy::IndModelPreproc:
      result = train_multitask_nc(scenario.stream, scenario.task_classes, tcfg, learner, eval, topts);
      break;
  }

  RunOutcome outcome{summarize(result.log, to_string(cfg.strategy), to_string(cfg.scenario.kind), cfg.seed,
                               result.warnings),
                     std::move(result)};
  if (opts.write_artifacts) {
    write_metrics_csv(out_dir / "metrics.csv", outcome.result.log);
    write_run_json(out_dir / "run.json", outcome.summary);
    std::ofstream(out_dir / "config.cfg") << serialize(cfg);
    if (outcome.result.memory) outcome.result.memory->save_snapshot(out_dir / "memory.bin");
  }
  return outcome;
}

namespace {

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

}  // namespace

AblationResult run_ablation(const AblationMatrix& matrix, bool write_artifacts) {
  struct Arm {
    Strategy strategy;
    std::uint64_t seed;
  };
  std::vector<Arm> arms;
  for (auto s : matrix.strategies)
    for (auto seed : matrix.seeds) arms.push_back({s, seed});

  AblationResult result;
  if (arms.empty()) return result;

  std::vector<std::optional<RunSummary>> slots(arms.size());
  std::vector<std::exception_ptr> errors(arms.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < arms.size(); i = next++) {
      try {
        RunConfig cfg = matrix.base;
        cfg.strategy = arms[i].strategy;
        cfg.seed = arms[i].seed;
        cfg.output_dir = (std::filesystem::path(matrix.output_dir) / to_string(arms[i].strategy) /
                          ("seed_" + std::to_string(arms[i].seed)))
                             .string();
        slots[i] = run_experiment(cfg, {write_artifacts, false, {}}).summary;
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n_workers = std::min(matrix.workers, arms.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  for (auto& s : slots) result.runs.push_back(std::move(*s));
  for (auto s : matrix.strategies) {
    std::vector<double> avg, fin, test;
    for (const auto& r : result.runs) {
      if (r.strategy != to_string(s)) continue;
      avg.push_back(r.avg_val_acc);
      fin.push_back(r.final_val_acc);
      test.push_back(r.final_test_acc);
    }
    AblationRow row;
    row.method = to_string(s);
    row.runs = avg.size();
    std::tie(row.avg_val_mean, row.avg_val_std) = mean_std(avg);
    std::tie(row.final_val_mean, row.final_val_std) = mean_std(fin);
    row.final_test_mean = mean_std(test).first;
    result.rows.push_back(row);
  }
  if (write_artifacts) {
    std::filesystem::create_directories(matrix.output_dir);
    write_ablation_csv(std::filesystem::path(matrix.output_dir) / "summary.csv", result);
  }
  return result;
}

void print_ablation_table(std::ostream& out, const AblationResult& result) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-20s %-20s %-20s\n", "method", "avg_val_acc", "final_val_acc");
  out << buf;
  for (const auto& r : result.rows) {
    char a[48], f[48];
    std::snprintf(a, sizeof(a), "%.2f%% +- %.2f", 100 * r.avg_val_mean, 100 * r.avg_val_std);
    std::snprintf(f, sizeof(f), "%.2f%% +- %.2f", 100 * r.final_val_mean, 100 * r.final_val_std);
    std::snprintf(buf, sizeof(buf), "%-20s %-20s %-20s\n", r.method.c_str(), a, f);
    out << buf;
  }
}

void write_ablation_csv(const std::filesystem::path& path, const AblationResult& result) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "method,runs,avg_val_acc_mean,avg_val_acc_std,final_val_acc_mean,final_val_acc_std,final_test_acc_mean\n";
  for (const auto& r : result.rows)
    out << r.method << ',' << r.runs << ',' << format_double(r.avg_val_mean) << ',' << format_double(r.avg_val_std)
        << ',' << format_double(r.final_val_mean) << ',' << format_double(r.final_val_std) << ','
        << format_double(r.final_test_mean) << '\n';
}

void print_run_metrics(std::ostream& out, const RunSummary& s) {
  char buf[200];
  out << "strategy:             " << s.strategy << " (" << s.scenario << ", seed " << s.seed << ", " << s.batches
      << " batches)\n";
  std::snprintf(buf, sizeof(buf), "final test accuracy:  %.4f\n", s.final_test_acc);
  out << buf;
  std::snprintf(buf, sizeof(buf), "avg val accuracy:     %.4f (final val %.4f)\n", s.avg_val_acc, s.final_val_acc);
  out << buf;
  const auto& t = s.resources.times;
  std::snprintf(buf, sizeof(buf), "train/test time:      %.1f ms total (train %.1f, review %.1f, eval %.1f)\n",
                t.total_ms, t.train_ms, t.review_ms, t.eval_ms);
  out << buf;
  std::snprintf(buf, sizeof(buf), "RAM (accounted):      peak %zu B, mean %.0f B\n", s.resources.ram_peak_bytes,
                s.resources.ram_mean_bytes);
  out << buf;
  out << "disk usage:           " << s.resources.disk_bytes << " B\n";
  for (const auto& w : s.warnings) out << "warning: " << w << '\n';
}

}  // namespace ber
