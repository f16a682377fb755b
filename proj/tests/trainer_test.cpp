#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

#include "ber/errors.hpp"
#include "ber/trainer.hpp"
#include "test_util.hpp"

namespace ber {
namespace {

struct Fixture {
  Scenario scenario;
  EvalSets eval;
  int classes = 0;
  std::size_t dim = 0;
};

Fixture make_fixture(ScenarioKind kind, int batches, int classes, int sessions, int per_cell,
                     double session_scale = 1.0, std::uint64_t seed = 3, int dim = 8) {
  const auto model = SyntheticDriftModel::make(classes, sessions, dim, 1.0, session_scale, 1.0, seed);
  ScenarioSpec spec;
  spec.kind = kind;
  spec.batches = batches;
  spec.classes = classes;
  spec.sessions = sessions;
  spec.examples_per_cell = per_cell;
  spec.val_per_cell = 10;
  spec.test_per_cell = 10;
  spec.seed = seed;
  Fixture f;
  f.scenario = generate_scenario(spec, model);
  f.eval = {f.scenario.validation, f.scenario.test};
  f.classes = classes;
  f.dim = static_cast<std::size_t>(dim);
  return f;
}

TrainerConfig small_config() {
  TrainerConfig cfg;
  cfg.mem_sz = 60;
  cfg.replay_sz = 40;
  cfg.review_sz = 100;
  cfg.batch_sz = 16;
  cfg.lr_replay = 0.05;
  cfg.epochs = 2;
  return cfg;
}

TrainerOptions options(std::uint64_t seed, std::vector<TrainEvent>* events = nullptr) {
  TrainerOptions opts;
  opts.seeds = SeedStreams::from_base(seed);
  if (events) opts.on_event = [events](const TrainEvent& e) { events->push_back(e); };
  return opts;
}

Learner learner_for(const Fixture& f) {
  return fresh_learner(f.dim, 16, static_cast<std::size_t>(f.classes), 1);
}

TEST(TrainerConfig, ReviewLearningRate) {
  TrainerConfig cfg;
  cfg.lr_replay = 0.01;
  cfg.review_lr_decay = 0.5;
  EXPECT_DOUBLE_EQ(cfg.lr_review(), 0.005);
  EXPECT_EQ(cfg.review_epochs, 1u);
  EXPECT_LE(cfg.lr_review(), cfg.lr_replay);
  cfg.review_lr_decay = 0.0;
  EXPECT_THROW(cfg.validate(true, true), ConfigError);
  EXPECT_NO_THROW(cfg.validate(true, false));
}

TEST(TrainBer, SingleBatchStreamNeverReplays) {
  const auto f = make_fixture(ScenarioKind::NI, 1, 3, 1, 20);
  std::vector<TrainEvent> events;
  const auto result = train_ber(f.scenario.stream, small_config(), learner_for(f), ReplayMemory(60, 1), f.eval,
                                options(0, &events));
  std::size_t updates = 0;
  bool reviewed = false;
  for (const auto& e : events) {
    if (e.kind == TrainEvent::Kind::Epoch) EXPECT_EQ(e.replay_drawn, 0u);
    if (e.kind == TrainEvent::Kind::MemoryUpdate) {
      ++updates;
      EXPECT_EQ(e.inserted, 60u);
    }
    reviewed |= e.kind == TrainEvent::Kind::Review;
  }
  EXPECT_EQ(updates, 1u);
  EXPECT_TRUE(reviewed);
  ASSERT_EQ(result.log.records.size(), 2u);
  EXPECT_EQ(result.log.records[1].phase, Phase::Review);
  EXPECT_EQ(result.memory->size(), 60u);
}

TEST(TrainBer, ReplayScheduleAndTrainingSetSizes) {
  const auto f = make_fixture(ScenarioKind::NI, 4, 3, 4, 10);  // 30 examples per batch
  auto cfg = small_config();
  cfg.mem_sz = 60;  // quota 15
  cfg.replay_sz = 40;
  cfg.epochs = 3;
  std::vector<TrainEvent> events;
  train_ber(f.scenario.stream, cfg, learner_for(f), ReplayMemory(60, 4), f.eval, options(1, &events));

  std::map<std::size_t, std::size_t> updates;
  std::size_t last_epoch_seen = 0;
  std::size_t memory_size = 0;
  for (const auto& e : events) {
    if (e.kind == TrainEvent::Kind::Epoch) {
      const std::size_t expected_drawn = e.batch == 1 ? 0 : std::min<std::size_t>(40, memory_size);
      EXPECT_EQ(e.replay_drawn, expected_drawn) << "batch " << e.batch << " epoch " << e.epoch;
      EXPECT_EQ(e.train_size, 30u + expected_drawn);
      EXPECT_EQ(e.memory_size, memory_size) << "memory changed mid-batch";
      last_epoch_seen = e.epoch;
    } else if (e.kind == TrainEvent::Kind::MemoryUpdate) {
      EXPECT_EQ(last_epoch_seen, cfg.epochs) << "memory updated before the last epoch";
      ++updates[e.batch];
      EXPECT_EQ(e.inserted, 15u);
      memory_size = e.memory_size;
    }
  }
  for (std::size_t t = 1; t <= 4; ++t) EXPECT_EQ(updates[t], 1u);
}

TEST(TrainBer, ReplayDrawsDifferPerEpoch) {
  const auto f = make_fixture(ScenarioKind::NI, 2, 3, 2, 40);
  auto cfg = small_config();
  cfg.mem_sz = 120;
  cfg.replay_sz = 10;
  cfg.epochs = 2;
  // replay_rng is keyed by (batch, epoch): identical seeds give identical draws
  const auto a = train_ber(f.scenario.stream, cfg, learner_for(f), ReplayMemory(120, 2), f.eval, options(5));
  const auto b = train_ber(f.scenario.stream, cfg, learner_for(f), ReplayMemory(120, 2), f.eval, options(5));
  EXPECT_EQ(a.learner.params, b.learner.params);
  const auto c = train_ber(f.scenario.stream, cfg, learner_for(f), ReplayMemory(120, 2), f.eval, options(6));
  EXPECT_NE(a.learner.params, c.learner.params);
}

TEST(Review, ZeroRateLeavesParamsAndEmptyMemorySkips) {
  const auto f = make_fixture(ScenarioKind::NI, 1, 3, 1, 20);
  auto learner = learner_for(f);
  ReplayMemory mem(30, 1);
  Rng rng(0);
  auto cfg = small_config();
  const auto opts = options(0);
  EXPECT_FALSE(review(learner.params, *learner.featurizer, mem, cfg, opts));
  mem.update(f.scenario.stream[0], rng);
  cfg.review_lr_decay = 0.0;
  auto params = learner.params;
  params.bias[0] = 0.3;
  const auto before = params;
  EXPECT_TRUE(review(params, *learner.featurizer, mem, cfg, opts));
  EXPECT_EQ(params, before);
}

TEST(TrainBer, EmptyMemoryReviewWarns) {
  const auto f = make_fixture(ScenarioKind::NI, 2, 3, 2, 10);
  auto cfg = small_config();
  cfg.mem_sz = 1;  // quota floor(1 / 2) = 0
  const auto result = train_ber(f.scenario.stream, cfg, learner_for(f), ReplayMemory(1, 2), f.eval, options(0));
  EXPECT_TRUE(result.memory->empty());
  ASSERT_FALSE(result.warnings.empty());
  EXPECT_NE(result.warnings.back().find("review skipped"), std::string::npos);
  EXPECT_EQ(result.log.records.size(), 2u);
}

TEST(Baseline, EqualsBerWhenQuotaIsZero) {
  const auto f = make_fixture(ScenarioKind::NI, 3, 4, 3, 15);
  auto cfg = small_config();
  cfg.mem_sz = 2;
  const auto ber = train_ber(f.scenario.stream, cfg, learner_for(f), ReplayMemory(2, 3), f.eval, options(2));
  const auto base = train_finetune_baseline(f.scenario.stream, cfg, learner_for(f), f.eval, options(2));
  EXPECT_EQ(ber.learner.params, base.learner.params);
  ASSERT_EQ(ber.log.records.size(), base.log.records.size());
  for (std::size_t i = 0; i < base.log.records.size(); ++i)
    EXPECT_EQ(ber.log.records[i].val_acc, base.log.records[i].val_acc);
  EXPECT_EQ(ber.log.final_test_acc, base.log.final_test_acc);
}

TEST(Baseline, NicCollapsesToLastClass) {
  const int classes = 5;
  const auto f = make_fixture(ScenarioKind::NIC, 10, classes, 2, 30, 5.0);
  auto cfg = small_config();
  const auto base = train_finetune_baseline(f.scenario.stream, cfg, learner_for(f), f.eval, options(0));
  // with session drift the head collapses onto the most recent class of each session
  std::map<int, int> latest_in_session;
  for (const auto& batch : f.scenario.stream)
    latest_in_session[batch.examples.front().session] = batch.examples.front().label;
  std::set<int> recent;
  for (const auto& [session, label] : latest_in_session) recent.insert(label);
  std::size_t onto_recent = 0;
  for (const auto& ex : f.eval.validation)
    onto_recent += recent.count(predict(base.learner.params, *base.learner.featurizer, ex.features));
  EXPECT_GE(onto_recent, static_cast<std::size_t>(0.9 * f.eval.validation.size()));
  EXPECT_LE(final_val_acc(base.log), 1.5 / classes);
}

TEST(Baseline, MatchesBerOnIidStream) {
  // no session drift: every batch is drawn from the same distribution
  std::vector<double> diffs;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto f = make_fixture(ScenarioKind::NI, 4, 5, 4, 20, 0.0, seed);
    auto cfg = small_config();
    cfg.mem_sz = 200;
    cfg.replay_sz = 100;
    const auto ber = train_ber(f.scenario.stream, cfg, learner_for(f), ReplayMemory(200, 4), f.eval,
                               options(seed), false);
    const auto base = train_finetune_baseline(f.scenario.stream, cfg, learner_for(f), f.eval, options(seed));
    diffs.push_back(final_val_acc(ber.log) - final_val_acc(base.log));
  }
  double mean = 0.0;
  for (double d : diffs) mean += d / diffs.size();
  double var = 0.0;
  for (double d : diffs) var += (d - mean) * (d - mean) / (diffs.size() - 1);
  // accuracy on 500 validation examples has a binomial floor on its noise
  const double se = std::sqrt(std::max(var, 2 * 0.25 / 500.0) / diffs.size());
  EXPECT_LE(std::abs(mean), 3.0 * se) << "mean paired difference " << mean;
}

TEST(MultiTask, HeadsAreIndependentAndRouted) {
  const auto f = make_fixture(ScenarioKind::MultiTaskNC, 3, 7, 2, 15);
  std::vector<TrainEvent> events;
  const auto result = train_multitask_nc(f.scenario.stream, f.scenario.task_classes, small_config(),
                                         learner_for(f), f.eval, options(0, &events));
  ASSERT_TRUE(result.multi_head);
  const auto& model = *result.multi_head;
  ASSERT_EQ(model.heads.size(), 3u);
  for (std::size_t j = 0; j < 3; ++j) {
    ASSERT_TRUE(model.heads[j]);
    EXPECT_EQ(model.heads[j]->classes(), f.scenario.task_classes[j].size());
  }
  // a stream stopped after task 1 reproduces head 1, so later batches never touched it
  EvalSets seen;
  for (const auto* src : {&f.eval.validation, &f.eval.test})
    for (const auto& ex : *src)
      if (*ex.task < 2) (src == &f.eval.test ? seen.test : seen.validation).push_back(ex);
  const auto alone = train_multitask_nc(std::vector<StreamBatch>{f.scenario.stream[0], f.scenario.stream[1]},
                                        f.scenario.task_classes, small_config(), learner_for(f), seen, options(0));
  EXPECT_EQ(*alone.multi_head->heads[1], *model.heads[1]);
  EXPECT_FALSE(alone.multi_head->heads[2]);
  for (const auto& e : events)
    if (e.kind == TrainEvent::Kind::Epoch) EXPECT_EQ(e.replay_drawn, 0u);
  EXPECT_EQ(result.log.records.size(), 3u);

  for (const auto& ex : f.eval.test) {
    const int pred = model.predict(ex.features, *ex.task);
    const auto& cls = f.scenario.task_classes[static_cast<std::size_t>(*ex.task)];
    EXPECT_TRUE(std::find(cls.begin(), cls.end(), pred) != cls.end());
  }
  EXPECT_THROW(model.predict(f.eval.test[0].features, 7), RoutingError);
  EXPECT_THROW(alone.multi_head->evaluate(f.eval.test), RoutingError);
  EXPECT_LT(alone.multi_head->evaluate(f.eval.test, true), 1.0);
}

TEST(MultiTask, SingleTaskEqualsBaseline) {
  const auto f = make_fixture(ScenarioKind::MultiTaskNC, 1, 4, 2, 20);
  const auto cfg = small_config();
  const auto mt = train_multitask_nc(f.scenario.stream, f.scenario.task_classes, cfg, learner_for(f), f.eval,
                                     options(9));
  const auto base = train_finetune_baseline(f.scenario.stream, cfg, learner_for(f), f.eval, options(9));
  EXPECT_EQ(f.scenario.task_classes[0], (std::vector<int>{0, 1, 2, 3}));
  EXPECT_EQ(*mt.multi_head->heads[0], base.learner.params);
  EXPECT_EQ(mt.log.final_test_acc, base.log.final_test_acc);
}

TEST(Joint, PooledTrainingIsDeterministic) {
  const auto f = make_fixture(ScenarioKind::NI, 2, 3, 2, 20);
  const auto a = train_joint(f.scenario.stream, small_config(), learner_for(f), 3, options(1));
  const auto b = train_joint(f.scenario.stream, small_config(), learner_for(f), 3, options(1));
  EXPECT_EQ(a, b);
  EXPECT_GT(evaluate(a, *learner_for(f).featurizer, f.eval.test), 0.6);
}

TEST(Resume, ContinuesBitIdentically) {
  const auto f = make_fixture(ScenarioKind::NI, 4, 4, 4, 15);
  const auto cfg = small_config();
  testing::TempDir full_dir("resume_full"), part_dir("resume_part");

  auto opts = options(4);
  opts.checkpoint_dir = full_dir.path();
  const auto full = train_ber(f.scenario.stream, cfg, learner_for(f), ReplayMemory(cfg.mem_sz, 4), f.eval, opts);

  // an interrupted run: only the first two batches completed
  const std::vector<StreamBatch> head(f.scenario.stream.begin(), f.scenario.stream.begin() + 2);
  auto part_opts = options(4);
  part_opts.checkpoint_dir = part_dir.path();
  train_ber(head, cfg, learner_for(f), ReplayMemory(cfg.mem_sz, 4), f.eval, part_opts, false);

  auto resume_opts = options(4);
  resume_opts.checkpoint_dir = part_dir.path();
  resume_opts.resume = load_resume_point(part_dir.path());
  EXPECT_EQ(resume_opts.resume->completed_batches, 2u);
  const auto resumed =
      train_ber(f.scenario.stream, cfg, learner_for(f), ReplayMemory(cfg.mem_sz, 4), f.eval, resume_opts);

  EXPECT_EQ(resumed.learner.params, full.learner.params);
  ASSERT_EQ(resumed.log.records.size(), full.log.records.size());
  for (std::size_t i = 0; i < full.log.records.size(); ++i) {
    auto a = full.log.records[i];
    auto b = resumed.log.records[i];
    a.elapsed_ms = b.elapsed_ms = 0.0;
    EXPECT_EQ(a, b) << "record " << i;
  }
  EXPECT_EQ(resumed.log.ram_samples, full.log.ram_samples);
  EXPECT_EQ(resumed.log.final_test_acc, full.log.final_test_acc);
  EXPECT_EQ(testing::read_file(part_dir / "ckpt_0004.bin"), testing::read_file(full_dir / "ckpt_0004.bin"));
  EXPECT_EQ(testing::read_file(part_dir / "memory.bin"), testing::read_file(full_dir / "memory.bin"));
}

TEST(TrainBer, DeterministicRunResult) {
  const auto f = make_fixture(ScenarioKind::NIC, 6, 3, 2, 10);
  const auto cfg = small_config();
  const auto a = train_ber(f.scenario.stream, cfg, learner_for(f), ReplayMemory(60, 6), f.eval, options(8));
  const auto b = train_ber(f.scenario.stream, cfg, learner_for(f), ReplayMemory(60, 6), f.eval, options(8));
  EXPECT_EQ(a.learner.params, b.learner.params);
  for (std::size_t i = 0; i < a.log.records.size(); ++i) EXPECT_EQ(a.log.records[i].val_acc, b.log.records[i].val_acc);
  EXPECT_EQ(a.log.ram_samples, b.log.ram_samples);
}

}  // namespace
}  // namespace ber
