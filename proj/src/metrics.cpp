#include "ber/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "ber/errors.hpp"

namespace ber {

std::string to_string(Phase phase) { return phase == Phase::Train ? "train" : "review"; }

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return {buf, ptr};
}

double avg_val_acc(const MetricsLog& log) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : log.records) {
    if (r.phase != Phase::Train) continue;
    sum += r.val_acc;
    ++n;
  }
  if (n == 0) throw std::invalid_argument("avg_val_acc: no stream batches recorded");
  return sum / static_cast<double>(n);
}

double final_val_acc(const MetricsLog& log) {
  if (log.records.empty()) throw std::invalid_argument("final_val_acc: empty log");
  return log.records.back().val_acc;
}

double final_acc(const MetricsLog& log) {
  if (!log.final_test_acc) throw std::invalid_argument("final_acc: test set was not evaluated");
  return *log.final_test_acc;
}

ResourceReport resource_report(const MetricsLog& log) {
  ResourceReport r;
  if (!log.ram_samples.empty()) {
    r.ram_peak_bytes = *std::max_element(log.ram_samples.begin(), log.ram_samples.end());
    r.ram_mean_bytes = std::accumulate(log.ram_samples.begin(), log.ram_samples.end(), 0.0) /
                       static_cast<double>(log.ram_samples.size());
  }
  r.disk_bytes = std::accumulate(log.checkpoint_bytes.begin(), log.checkpoint_bytes.end(), std::size_t{0}) +
                 log.memory_snapshot_bytes;
  r.times = log.times;
  return r;
}

RunSummary summarize(const MetricsLog& log, std::string strategy, std::string scenario, unsigned long long seed,
                     std::vector<std::string> warnings) {
  RunSummary s;
  s.strategy = std::move(strategy);
  s.scenario = std::move(scenario);
  s.seed = seed;
  s.batches = static_cast<std::size_t>(
      std::count_if(log.records.begin(), log.records.end(), [](const BatchRecord& r) { return r.phase == Phase::Train; }));
  s.final_test_acc = final_acc(log);
  s.final_val_acc = final_val_acc(log);
  s.avg_val_acc = avg_val_acc(log);
  s.resources = resource_report(log);
  s.warnings = std::move(warnings);
  return s;
}

void write_metrics_csv(const std::filesystem::path& path, const MetricsLog& log) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "t,phase,val_acc,elapsed_ms,ram_bytes,disk_bytes\n";
  for (const auto& r : log.records) {
    out << r.t << ',' << to_string(r.phase) << ',' << format_double(r.val_acc) << ',' << format_double(r.elapsed_ms)
        << ',' << r.ram_bytes << ',' << r.disk_bytes << '\n';
  }
}

std::vector<BatchRecord> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "t,phase,val_acc,elapsed_ms,ram_bytes,disk_bytes") throw LoadError("unexpected metrics.csv header");
  std::vector<BatchRecord> out;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell[6];
    for (auto& c : cell)
      if (!std::getline(ss, c, ',')) throw LoadError("expected 6 fields", row);
    BatchRecord r;
    try {
      r.t = std::stoull(cell[0]);
      if (cell[1] == "train") r.phase = Phase::Train;
      else if (cell[1] == "review") r.phase = Phase::Review;
      else throw std::invalid_argument(cell[1]);
      r.val_acc = std::stod(cell[2]);
      r.elapsed_ms = std::stod(cell[3]);
      r.ram_bytes = std::stoull(cell[4]);
      r.disk_bytes = std::stoull(cell[5]);
    } catch (const std::exception&) {
      throw LoadError("malformed metrics row", row);
    }
    out.push_back(r);
  }
  return out;
}

void write_run_json(const std::filesystem::path& path, const RunSummary& s) {
  nlohmann::ordered_json j;
  j["strategy"] = s.strategy;
  j["scenario"] = s.scenario;
  j["seed"] = s.seed;
  j["batches"] = s.batches;
  j["metrics"] = {
      {"final_test_acc", s.final_test_acc},
      {"final_val_acc", s.final_val_acc},
      {"avg_val_acc", s.avg_val_acc},
      {"ram_peak_bytes", s.resources.ram_peak_bytes},
      {"ram_mean_bytes", s.resources.ram_mean_bytes},
      {"disk_bytes", s.resources.disk_bytes},
  };
  j["timing"] = {
      {"train_ms", s.resources.times.train_ms},
      {"review_ms", s.resources.times.review_ms},
      {"eval_ms", s.resources.times.eval_ms},
      {"total_ms", s.resources.times.total_ms},
  };
  j["warnings"] = s.warnings;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

RunSummary read_run_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    RunSummary s;
    s.strategy = j.at("strategy").get<std::string>();
    s.scenario = j.at("scenario").get<std::string>();
    s.seed = j.at("seed").get<unsigned long long>();
    s.batches = j.at("batches").get<std::size_t>();
    const auto& m = j.at("metrics");
    s.final_test_acc = m.at("final_test_acc").get<double>();
    s.final_val_acc = m.at("final_val_acc").get<double>();
    s.avg_val_acc = m.at("avg_val_acc").get<double>();
    s.resources.ram_peak_bytes = m.at("ram_peak_bytes").get<std::size_t>();
    s.resources.ram_mean_bytes = m.at("ram_mean_bytes").get<double>();
    s.resources.disk_bytes = m.at("disk_bytes").get<std::size_t>();
    const auto& t = j.at("timing");
    s.resources.times = {t.at("train_ms").get<double>(), t.at("review_ms").get<double>(),
                         t.at("eval_ms").get<double>(), t.at("total_ms").get<double>()};
    s.warnings = j.at("warnings").get<std::vector<std::string>>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("malformed run.json: ") + e.what());
  }
}

}  // namespace ber
