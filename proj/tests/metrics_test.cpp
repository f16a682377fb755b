#include <gtest/gtest.h>

#include <json.hpp>

#include <stdexcept>

#include "ber/errors.hpp"
#include "ber/memory.hpp"
#include "ber/metrics.hpp"
#include "ber/trainer.hpp"
#include "test_util.hpp"

namespace ber {
namespace {

MetricsLog log_of(const std::vector<double>& accs) {
  MetricsLog log;
  for (std::size_t i = 0; i < accs.size(); ++i) log.append({i + 1, Phase::Train, accs[i], 1.0 * i, 10, 20, 0.0});
  return log;
}

TEST(AvgValAcc, ArithmeticMean) { EXPECT_DOUBLE_EQ(avg_val_acc(log_of({0.5, 0.7, 0.9})), 0.7); }

TEST(AvgValAcc, SingleBatchEqualsFinal) {
  const auto log = log_of({0.625});
  EXPECT_DOUBLE_EQ(avg_val_acc(log), final_val_acc(log));
}

TEST(AvgValAcc, ReviewEntryExcludedButUsedAsFinal) {
  auto log = log_of({0.5, 0.7, 0.9});
  log.append({3, Phase::Review, 0.95, 4.0, 10, 20, 0.0});
  EXPECT_DOUBLE_EQ(avg_val_acc(log), 0.7);
  EXPECT_DOUBLE_EQ(final_val_acc(log), 0.95);
  const auto before = avg_val_acc(log);
  EXPECT_DOUBLE_EQ(avg_val_acc(log), before);
}

TEST(FinalAcc, RequiresTestEvaluation) {
  auto log = log_of({0.4});
  EXPECT_THROW(final_acc(log), std::invalid_argument);
  log.final_test_acc = 1.0;
  EXPECT_DOUBLE_EQ(final_acc(log), 1.0);
}

TEST(ResourceReport, DiskIsSnapshotOnlyWithoutCheckpoints) {
  MetricsLog log = log_of({0.5});
  log.memory_snapshot_bytes = 1234;
  log.ram_samples = {100, 300, 200};
  const auto r = resource_report(log);
  EXPECT_EQ(r.disk_bytes, 1234u);
  EXPECT_EQ(r.ram_peak_bytes, 300u);
  EXPECT_DOUBLE_EQ(r.ram_mean_bytes, 200.0);
  log.checkpoint_bytes = {10, 20};
  EXPECT_EQ(resource_report(log).disk_bytes, 1264u);
}

TEST(ResourceReport, DoublingMemoryDoublesSnapshotRecords) {
  auto snapshot_records = [](std::size_t mem_sz) {
    ReplayMemory mem(mem_sz, 2);
    Rng rng(1);
    for (std::size_t t = 1; t <= 2; ++t) mem.update(testing::make_feature_batch(t, 5000, 32), rng);
    return mem.footprint_bytes() - ReplayMemory::kHeaderBytes;
  };
  EXPECT_EQ(snapshot_records(2000), 2 * snapshot_records(1000));
}

TEST(ResourceReport, TimingIsMonotoneOnInstrumentedRun) {
  const auto model = SyntheticDriftModel::make(3, 3, 6, 1.0, 1.0, 1.0, 2);
  ScenarioSpec spec;
  spec.kind = ScenarioKind::NI;
  spec.batches = 3;
  spec.classes = 3;
  spec.sessions = 3;
  spec.examples_per_cell = 30;
  const auto sc = generate_scenario(spec, model);
  TrainerConfig cfg;
  cfg.mem_sz = 90;
  cfg.replay_sz = 90;
  cfg.review_sz = 90;
  TrainerOptions opts;
  const auto result =
      train_ber(sc.stream, cfg, fresh_learner(6, 16, 3, 0), ReplayMemory(90, 3), {sc.validation, sc.test}, opts);
  const auto& t = result.log.times;
  EXPECT_GE(t.total_ms, t.train_ms + t.review_ms + t.eval_ms);
  EXPECT_GE(t.total_ms, std::max({t.train_ms, t.review_ms, t.eval_ms}));
  for (std::size_t i = 1; i < result.log.records.size(); ++i)
    EXPECT_GE(result.log.records[i].elapsed_ms, result.log.records[i - 1].elapsed_ms);
  EXPECT_LE(result.log.records.back().elapsed_ms, t.total_ms);
  ASSERT_EQ(result.log.records.size(), 4u);
  EXPECT_EQ(result.log.records.back().phase, Phase::Review);
  for (const auto& r : result.log.records) {
    EXPECT_GE(r.val_acc, 0.0);
    EXPECT_LE(r.val_acc, 1.0);
  }
}

TEST(MetricsCsv, RoundTripWithFixedHeader) {
  testing::TempDir dir("metrics_csv");
  auto log = log_of({0.1, 0.2 / 3.0});
  log.append({2, Phase::Review, 0.3, 7.25, 99, 1000, 0.0});
  write_metrics_csv(dir / "m.csv", log);
  const auto text = testing::read_file(dir / "m.csv");
  EXPECT_EQ(text.substr(0, text.find('\n')), "t,phase,val_acc,elapsed_ms,ram_bytes,disk_bytes");
  const auto back = read_metrics_csv(dir / "m.csv");
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].t, log.records[i].t);
    EXPECT_EQ(back[i].phase, log.records[i].phase);
    EXPECT_EQ(back[i].val_acc, log.records[i].val_acc);
    EXPECT_EQ(back[i].ram_bytes, log.records[i].ram_bytes);
  }
  testing::write_file(dir / "bad.csv", "t,phase,val_acc,elapsed_ms,ram_bytes,disk_bytes\n1,train,x,0,0,0\n");
  try {
    read_metrics_csv(dir / "bad.csv");
    FAIL();
  } catch (const LoadError& e) {
    EXPECT_EQ(e.row(), 1u);
  }
}

TEST(RunJson, TimingSeparatedFromMetrics) {
  testing::TempDir dir("run_json");
  auto log = log_of({0.5, 0.75});
  log.final_test_acc = 0.8;
  log.times = {1.5, 0.5, 0.25, 3.0};
  const auto s = summarize(log, "ber", "NI", 4, {"note"});
  write_run_json(dir / "run.json", s);
  const auto j = nlohmann::json::parse(testing::read_file(dir / "run.json"));
  EXPECT_EQ(j.at("timing").at("total_ms").get<double>(), 3.0);
  EXPECT_FALSE(j.at("metrics").contains("total_ms"));
  const auto back = read_run_json(dir / "run.json");
  EXPECT_EQ(back.strategy, "ber");
  EXPECT_EQ(back.batches, 2u);
  EXPECT_DOUBLE_EQ(back.avg_val_acc, 0.625);
  EXPECT_DOUBLE_EQ(back.final_test_acc, 0.8);
  EXPECT_EQ(back.warnings, std::vector<std::string>{"note"});
}

TEST(FormatDouble, ShortestRoundTrip) {
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(0.7), "0.7");
  EXPECT_EQ(std::stod(format_double(2.0 / 3.0)), 2.0 / 3.0);
}

}  // namespace
}  // namespace ber
