#include "ber/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include <json.hpp>

#include "ber/errors.hpp"

namespace ber {
namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::uint64_t batch_epoch_seed(std::uint64_t stream_seed, std::string_view purpose, std::size_t batch,
                               std::size_t epoch) {
  return derive_seed(derive_seed(derive_seed(stream_seed, purpose), batch), epoch);
}

std::size_t resident_bytes(std::span<const LabeledExample> data) {
  std::size_t total = 0;
  for (const auto& ex : data) total += ex.features.size() * sizeof(double) + ReplayMemory::kRecordFieldBytes;
  return total;
}

void emit(const TrainerOptions& opts, const TrainEvent& ev) {
  if (opts.on_event) opts.on_event(ev);
}

std::string checkpoint_name(std::size_t t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "ckpt_%04zu.bin", t);
  return buf;
}

void write_state(const std::filesystem::path& dir, std::size_t t, const MetricsLog& log) {
  nlohmann::ordered_json j;
  j["completed_batches"] = t;
  j["checkpoint"] = checkpoint_name(t);
  auto& recs = j["records"] = nlohmann::json::array();
  for (const auto& r : log.records)
    recs.push_back({r.t, to_string(r.phase), r.val_acc, r.elapsed_ms, r.ram_bytes, r.disk_bytes, r.loss});
  j["ram_samples"] = log.ram_samples;
  j["checkpoint_bytes"] = log.checkpoint_bytes;
  const auto tmp = dir / "state.json.tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << j.dump(2) << '\n';
  }
  std::filesystem::rename(tmp, dir / "state.json");
}

struct EncodedEval {
  std::vector<LabeledExample> validation;
  std::vector<LabeledExample> test;
};

EncodedEval encode_eval(const EvalSets& eval, const TrainerOptions& opts) {
  auto val = eval.validation;
  auto test = eval.test;
  materialize(val);
  materialize(test);
  return {opts.encoder.encode_all(val, derive_seed(opts.seeds.augment, "validation"), false),
          opts.encoder.encode_all(test, derive_seed(opts.seeds.augment, "test"), false)};
}

std::vector<std::string> memory_warnings(const ReplayMemory& mem) {
  std::vector<std::string> out;
  for (const auto& w : mem.warnings()) out.push_back("batch " + std::to_string(w.batch) + ": " + w.message);
  return out;
}

// Shared loop for BER (memory != nullptr) and the fine-tuning baseline.
RunResult run_stream(const std::vector<StreamBatch>& stream, const TrainerConfig& cfg, Learner learner,
                     std::optional<ReplayMemory> memory, const EvalSets& eval, const TrainerOptions& opts,
                     bool with_review) {
  if (stream.empty()) throw std::invalid_argument("training stream is empty");
  if (!learner.featurizer) throw std::invalid_argument("learner has no featurizer");
  const auto run_start = Clock::now();
  RunResult result;
  MetricsLog& log = result.log;
  LearnerParams& params = learner.params;
  const FrozenFeaturizer& feat = *learner.featurizer;

  std::size_t first = 1;
  if (opts.resume) {
    first = opts.resume->completed_batches + 1;
    params = opts.resume->params;
    log = opts.resume->log;
    if (memory && opts.resume->memory) memory = opts.resume->memory;
  }

  auto eval_start = Clock::now();
  const EncodedEval enc = encode_eval(eval, opts);
  log.times.eval_ms += ms_since(eval_start);
  const std::size_t eval_bytes = resident_bytes(enc.validation) + resident_bytes(enc.test);

  for (std::size_t t = first; t <= stream.size(); ++t) {
    const StreamBatch& batch = stream[t - 1];
    StreamBatch current{batch.index, batch.examples, batch.task_label};
    materialize(current.examples);
    if (current.examples.empty()) throw std::invalid_argument("stream batch " + std::to_string(t) + " is empty");

    const auto train_start = Clock::now();
    EpochStats stats;
    std::size_t ram = 0;
    for (std::size_t e = 1; e <= cfg.epochs; ++e) {
      std::vector<LabeledExample> d_train;
      std::size_t drawn = 0;
      if (t > 1 && memory && !memory->empty()) {
        Rng replay_rng(batch_epoch_seed(opts.seeds.memory, "replay", t, e));
        d_train = memory->sample_capped(cfg.replay_sz, replay_rng);
        drawn = d_train.size();
      }
      d_train.insert(d_train.end(), current.examples.begin(), current.examples.end());
      const auto encoded = opts.encoder.encode_all(d_train, batch_epoch_seed(opts.seeds.augment, "train", t, e), true);
      Rng sgd_rng(batch_epoch_seed(opts.seeds.sgd, "train", t, e));
      stats = sgd_epoch(params, feat, encoded, cfg.replay_sgd(), sgd_rng);

      ram = params.byte_size() + (memory ? memory->footprint_bytes() : 0) + resident_bytes(encoded) + eval_bytes;
      log.ram_samples.push_back(ram);
      emit(opts, {TrainEvent::Kind::Epoch, t, e, drawn, encoded.size(), 0, memory ? memory->size() : 0,
                  stats.mean_loss, 0.0});
    }
    if (memory) {
      Rng update_rng(batch_epoch_seed(opts.seeds.memory, "update", t, 0));
      const auto inserted = memory->update(current, update_rng);
      emit(opts, {TrainEvent::Kind::MemoryUpdate, t, cfg.epochs, 0, 0, inserted, memory->size(), 0.0, 0.0});
    }
    log.times.train_ms += ms_since(train_start);

    eval_start = Clock::now();
    const double val = evaluate(params, feat, enc.validation);
    log.times.eval_ms += ms_since(eval_start);

    const std::size_t memory_bytes = memory ? memory->footprint_bytes() : 0;
    if (opts.checkpoint_dir) {
      std::filesystem::create_directories(*opts.checkpoint_dir);
      save_checkpoint(*opts.checkpoint_dir / checkpoint_name(t), params);
      log.checkpoint_bytes.push_back(checkpoint_bytes(params));
      if (memory) memory->save_snapshot(*opts.checkpoint_dir / "memory.bin");
    }
    const std::size_t disk =
        std::accumulate(log.checkpoint_bytes.begin(), log.checkpoint_bytes.end(), std::size_t{0}) + memory_bytes;
    log.append({t, Phase::Train, val, ms_since(run_start), ram, disk, stats.mean_loss});
    if (opts.checkpoint_dir) write_state(*opts.checkpoint_dir, t, log);
    emit(opts, {TrainEvent::Kind::BatchEnd, t, cfg.epochs, 0, 0, 0, memory ? memory->size() : 0, stats.mean_loss, val});
  }

  if (memory) result.warnings = memory_warnings(*memory);
  if (with_review && memory) {
    const auto review_start = Clock::now();
    double loss = 0.0;
    const bool ran = review(params, feat, *memory, cfg, opts, &loss);
    log.times.review_ms += ms_since(review_start);
    if (ran) {
      eval_start = Clock::now();
      const double val = evaluate(params, feat, enc.validation);
      log.times.eval_ms += ms_since(eval_start);
      const std::size_t disk =
          std::accumulate(log.checkpoint_bytes.begin(), log.checkpoint_bytes.end(), std::size_t{0}) +
          memory->footprint_bytes();
      const std::size_t ram = log.ram_samples.empty() ? 0 : log.ram_samples.back();
      log.append({stream.size(), Phase::Review, val, ms_since(run_start), ram, disk, loss});
      emit(opts, {TrainEvent::Kind::Review, stream.size(), cfg.review_epochs, 0, 0, 0, memory->size(), loss, val});
    } else {
      result.warnings.push_back("review skipped: replay memory is empty");
    }
  }

  eval_start = Clock::now();
  log.final_test_acc = evaluate(params, feat, enc.test);
  log.times.eval_ms += ms_since(eval_start);
  log.memory_snapshot_bytes = memory ? memory->footprint_bytes() : 0;
  log.times.total_ms = ms_since(run_start);

  result.learner = std::move(learner);
  result.memory = std::move(memory);
  return result;
}

}  // namespace

void TrainerConfig::validate(bool uses_memory, bool uses_review) const {
  auto fail = [](const std::string& m) { throw ConfigError("trainer: " + m); };
  if (batch_sz == 0) fail("batch_size must be >= 1");
  if (epochs == 0) fail("epochs must be >= 1");
  if (!(lr_replay > 0.0)) fail("learning rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must lie in [0, 1)");
  if (uses_memory) {
    if (mem_sz == 0) fail("replay.examples (mem_sz) must be >= 1");
    if (replay_sz == 0) fail("replay.used (replay_sz) must be >= 1");
  }
  if (uses_review) {
    if (review_sz == 0) fail("review.size must be >= 1");
    if (review_epochs == 0) fail("review.epoch must be >= 1");
    if (!(review_lr_decay > 0.0 && review_lr_decay <= 1.0)) fail("review.lr_decay_factor must lie in (0, 1]");
  }
}

bool review(LearnerParams& params, const FrozenFeaturizer& feat, const ReplayMemory& memory, const TrainerConfig& cfg,
            const TrainerOptions& opts, double* last_loss) {
  if (memory.empty()) return false;
  Rng draw_rng(derive_seed(opts.seeds.memory, "review"));
  const auto d_review = memory.sample(cfg.review_sz, draw_rng);
  for (std::size_t e = 1; e <= cfg.review_epochs; ++e) {
    const auto encoded = opts.encoder.encode_all(d_review, batch_epoch_seed(opts.seeds.augment, "review", 0, e), true);
    Rng sgd_rng(batch_epoch_seed(opts.seeds.sgd, "review", 0, e));
    const auto stats = sgd_epoch(params, feat, encoded, cfg.review_sgd(), sgd_rng);
    if (last_loss) *last_loss = stats.mean_loss;
  }
  return true;
}

RunResult train_ber(const std::vector<StreamBatch>& stream, const TrainerConfig& cfg, Learner learner,
                    ReplayMemory memory, const EvalSets& eval, const TrainerOptions& opts, bool with_review) {
  return run_stream(stream, cfg, std::move(learner), std::move(memory), eval, opts, with_review);
}

RunResult train_finetune_baseline(const std::vector<StreamBatch>& stream, const TrainerConfig& cfg, Learner learner,
                                  const EvalSets& eval, const TrainerOptions& opts) {
  return run_stream(stream, cfg, std::move(learner), std::nullopt, eval, opts, false);
}

int MultiHeadModel::predict(std::span<const double> x, int task) const {
  if (task < 0 || static_cast<std::size_t>(task) >= heads.size() || !heads[static_cast<std::size_t>(task)])
    throw RoutingError("no trained head for task label " + std::to_string(task));
  const int local = ber::predict(*heads[static_cast<std::size_t>(task)], *featurizer, x);
  return task_classes[static_cast<std::size_t>(task)][static_cast<std::size_t>(local)];
}

double MultiHeadModel::evaluate(std::span<const LabeledExample> data, bool count_unseen_as_wrong) const {
  if (data.empty()) throw std::invalid_argument("evaluate: empty dataset");
  std::size_t correct = 0;
  for (const auto& ex : data) {
    if (!ex.task) throw RoutingError("query without task label");
    const auto task = static_cast<std::size_t>(*ex.task);
    if (count_unseen_as_wrong && (task >= heads.size() || !heads[task])) continue;
    if (predict(ex.features, *ex.task) == ex.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

RunResult train_multitask_nc(const std::vector<StreamBatch>& stream, const std::vector<std::vector<int>>& task_classes,
                             const TrainerConfig& cfg, const Learner& prototype, const EvalSets& eval,
                             const TrainerOptions& opts) {
  if (stream.empty()) throw std::invalid_argument("training stream is empty");
  const auto run_start = Clock::now();
  RunResult result;
  MetricsLog& log = result.log;
  MultiHeadModel model{prototype.featurizer, std::vector<std::optional<LearnerParams>>(task_classes.size()),
                       task_classes};
  const FrozenFeaturizer& feat = *prototype.featurizer;
  const std::size_t hidden = feat.hidden();

  auto eval_start = Clock::now();
  const EncodedEval enc = encode_eval(eval, opts);
  log.times.eval_ms += ms_since(eval_start);
  const std::size_t eval_bytes = resident_bytes(enc.validation) + resident_bytes(enc.test);

  for (std::size_t t = 1; t <= stream.size(); ++t) {
    const auto& batch = stream[t - 1];
    if (!batch.task_label) throw RoutingError("batch " + std::to_string(t) + " has no task label");
    const int task = *batch.task_label;
    if (task < 0 || static_cast<std::size_t>(task) >= task_classes.size())
      throw RoutingError("batch " + std::to_string(t) + " task label " + std::to_string(task) + " out of range");
    const auto& classes = task_classes[static_cast<std::size_t>(task)];
    std::unordered_map<int, int> local;
    for (std::size_t i = 0; i < classes.size(); ++i) local[classes[i]] = static_cast<int>(i);

    std::vector<LabeledExample> data = batch.examples;
    materialize(data);
    for (auto& ex : data) {
      const auto it = local.find(ex.label);
      if (it == local.end())
        throw RoutingError("class " + std::to_string(ex.label) + " is not part of task " + std::to_string(task));
      ex.label = it->second;
    }

    const auto train_start = Clock::now();
    auto head = LearnerParams::zeros(classes.size(), hidden);
    EpochStats stats;
    std::size_t ram = 0;
    for (std::size_t e = 1; e <= cfg.epochs; ++e) {
      const auto encoded = opts.encoder.encode_all(data, batch_epoch_seed(opts.seeds.augment, "train", t, e), true);
      Rng sgd_rng(batch_epoch_seed(opts.seeds.sgd, "train", t, e));
      stats = sgd_epoch(head, feat, encoded, cfg.replay_sgd(), sgd_rng);
      std::size_t head_bytes = head.byte_size();
      for (const auto& h : model.heads)
        if (h) head_bytes += h->byte_size();
      ram = head_bytes + resident_bytes(encoded) + eval_bytes;
      log.ram_samples.push_back(ram);
      emit(opts, {TrainEvent::Kind::Epoch, t, e, 0, encoded.size(), 0, 0, stats.mean_loss, 0.0});
    }
    model.heads[static_cast<std::size_t>(task)] = std::move(head);
    log.times.train_ms += ms_since(train_start);

    eval_start = Clock::now();
    const double val = model.evaluate(enc.validation, true);
    log.times.eval_ms += ms_since(eval_start);

    if (opts.checkpoint_dir) {
      std::filesystem::create_directories(*opts.checkpoint_dir);
      const auto& h = *model.heads[static_cast<std::size_t>(task)];
      save_checkpoint(*opts.checkpoint_dir / checkpoint_name(t), h);
      log.checkpoint_bytes.push_back(checkpoint_bytes(h));
    }
    const std::size_t disk =
        std::accumulate(log.checkpoint_bytes.begin(), log.checkpoint_bytes.end(), std::size_t{0});
    log.append({t, Phase::Train, val, ms_since(run_start), ram, disk, stats.mean_loss});
    emit(opts, {TrainEvent::Kind::BatchEnd, t, cfg.epochs, 0, 0, 0, 0, stats.mean_loss, val});
  }

  eval_start = Clock::now();
  log.final_test_acc = model.evaluate(enc.test);
  log.times.eval_ms += ms_since(eval_start);
  log.times.total_ms = ms_since(run_start);
  result.learner = prototype;
  result.multi_head = std::move(model);
  return result;
}

LearnerParams train_joint(const std::vector<StreamBatch>& stream, const TrainerConfig& cfg, Learner learner,
                          std::size_t epochs, const TrainerOptions& opts) {
  std::vector<LabeledExample> pooled;
  for (const auto& b : stream) pooled.insert(pooled.end(), b.examples.begin(), b.examples.end());
  materialize(pooled);
  if (pooled.empty()) throw std::invalid_argument("train_joint: no data");
  for (std::size_t e = 1; e <= epochs; ++e) {
    const auto encoded = opts.encoder.encode_all(pooled, batch_epoch_seed(opts.seeds.augment, "joint", 0, e), true);
    Rng rng(batch_epoch_seed(opts.seeds.sgd, "joint", 0, e));
    sgd_epoch(learner.params, *learner.featurizer, encoded, cfg.replay_sgd(), rng);
  }
  return learner.params;
}

ResumePoint load_resume_point(const std::filesystem::path& dir) {
  std::ifstream in(dir / "state.json");
  if (!in) throw LoadError("no resumable state in " + dir.string());
  ResumePoint rp;
  try {
    const auto j = nlohmann::json::parse(in);
    rp.completed_batches = j.at("completed_batches").get<std::size_t>();
    rp.params = load_checkpoint(dir / j.at("checkpoint").get<std::string>());
    for (const auto& r : j.at("records")) {
      BatchRecord rec;
      rec.t = r.at(0).get<std::size_t>();
      rec.phase = r.at(1).get<std::string>() == "review" ? Phase::Review : Phase::Train;
      rec.val_acc = r.at(2).get<double>();
      rec.elapsed_ms = r.at(3).get<double>();
      rec.ram_bytes = r.at(4).get<std::size_t>();
      rec.disk_bytes = r.at(5).get<std::size_t>();
      rec.loss = r.at(6).get<double>();
      rp.log.records.push_back(rec);
    }
    rp.log.ram_samples = j.at("ram_samples").get<std::vector<std::size_t>>();
    rp.log.checkpoint_bytes = j.at("checkpoint_bytes").get<std::vector<std::size_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("malformed state.json: ") + e.what());
  }
  if (std::filesystem::exists(dir / "memory.bin")) rp.memory = ReplayMemory::load_snapshot(dir / "memory.bin");
  return rp;
}

}  // namespace ber
