#include "ber/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "ber/errors.hpp"
#include "ber/metrics.hpp"

namespace ber {

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::Baseline: return "baseline";
    case Strategy::Ber: return "ber";
    case Strategy::BerReview: return "ber_review";
    case Strategy::BerReviewPreproc: return "ber_review_preproc";
    case Strategy::IndModel: return "ind_model";
    case Strategy::IndModelPreproc: return "ind_model_preproc";
  }
  return "?";
}

Strategy parse_strategy(const std::string& text) {
  for (auto s : {Strategy::Baseline, Strategy::Ber, Strategy::BerReview, Strategy::BerReviewPreproc,
                 Strategy::IndModel, Strategy::IndModelPreproc})
    if (to_string(s) == text) return s;
  throw std::invalid_argument("unknown strategy '" + text +
                              "' (expected baseline, ber, ber_review, ber_review_preproc, ind_model, "
                              "ind_model_preproc)");
}

bool uses_memory(Strategy s) {
  return s == Strategy::Ber || s == Strategy::BerReview || s == Strategy::BerReviewPreproc;
}
bool uses_review(Strategy s) { return s == Strategy::BerReview || s == Strategy::BerReviewPreproc; }
bool uses_preprocessing(Strategy s) { return s == Strategy::BerReviewPreproc || s == Strategy::IndModelPreproc; }
bool is_independent_model(Strategy s) { return s == Strategy::IndModel || s == Strategy::IndModelPreproc; }

std::string to_string(DataSource s) {
  switch (s) {
    case DataSource::Synthetic: return "synthetic";
    case DataSource::Raster: return "raster";
    case DataSource::Corpus: return "corpus";
  }
  return "?";
}

std::size_t RunConfig::memory_capacity() const {
  if (replay_examples_per_batch) return *replay_examples_per_batch * static_cast<std::size_t>(scenario.batches);
  return trainer.mem_sz;
}

SeedStreams RunConfig::seed_streams() const {
  auto s = SeedStreams::from_base(seed);
  if (seed_data) s.data = *seed_data;
  if (seed_memory) s.memory = *seed_memory;
  if (seed_sgd) s.sgd = *seed_sgd;
  if (seed_augment) s.augment = *seed_augment;
  return s;
}

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T> T parse_integral(const std::string& v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw std::invalid_argument("expected an integer, got '" + v + "'");
  return out;
}

double parse_real(const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw std::invalid_argument("expected a number, got '" + v + "'");
  return out;
}

bool parse_flag(const std::string& v) {
  if (v == "yes" || v == "true") return true;
  if (v == "no" || v == "false") return false;
  throw std::invalid_argument("expected yes/no, got '" + v + "'");
}

std::string flag(bool b) { return b ? "yes" : "no"; }

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  if (trim(v).empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

template <typename T> std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

struct Field {
  std::string key;
  std::function<std::optional<std::string>(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define BER_INT_FIELD(KEY, MEMBER, TYPE)                                                            \
  Field {                                                                                          \
    KEY, [](const RunConfig& c) -> std::optional<std::string> { return std::to_string(c.MEMBER); }, \
        [](RunConfig& c, const std::string& v) { c.MEMBER = parse_integral<TYPE>(v); }             \
  }
#define BER_REAL_FIELD(KEY, MEMBER)                                                                 \
  Field {                                                                                          \
    KEY, [](const RunConfig& c) -> std::optional<std::string> { return format_double(c.MEMBER); },  \
        [](RunConfig& c, const std::string& v) { c.MEMBER = parse_real(v); }                       \
  }
#define BER_SEED_FIELD(KEY, MEMBER)                                                                      \
  Field {                                                                                               \
    KEY,                                                                                                \
        [](const RunConfig& c) -> std::optional<std::string> {                                          \
          if (!c.MEMBER) return std::nullopt;                                                           \
          return std::to_string(*c.MEMBER);                                                             \
        },                                                                                              \
        [](RunConfig& c, const std::string& v) { c.MEMBER = parse_integral<std::uint64_t>(v); }         \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"strategy", [](const RunConfig& c) -> std::optional<std::string> { return to_string(c.strategy); },
       [](RunConfig& c, const std::string& v) { c.strategy = parse_strategy(v); }},
      {"optimizer", [](const RunConfig& c) -> std::optional<std::string> { return c.optimizer; },
       [](RunConfig& c, const std::string& v) {
         if (v != "SGD") throw std::invalid_argument("only optimizer = SGD is supported");
         c.optimizer = v;
       }},
      {"scenario.kind", [](const RunConfig& c) -> std::optional<std::string> { return to_string(c.scenario.kind); },
       [](RunConfig& c, const std::string& v) {
         try {
           c.scenario.kind = parse_scenario_kind(v);
         } catch (const ConfigError& e) {
           throw std::invalid_argument(e.what());
         }
       }},
      BER_INT_FIELD("scenario.batches", scenario.batches, int),
      BER_INT_FIELD("scenario.classes", scenario.classes, int),
      BER_INT_FIELD("scenario.sessions", scenario.sessions, int),
      BER_INT_FIELD("scenario.examples_per_cell", scenario.examples_per_cell, int),
      BER_INT_FIELD("scenario.val_per_cell", scenario.val_per_cell, int),
      BER_INT_FIELD("scenario.test_per_cell", scenario.test_per_cell, int),
      {"scenario.task_sizes",
       [](const RunConfig& c) -> std::optional<std::string> {
         if (c.scenario.task_sizes.empty()) return std::nullopt;
         return join(c.scenario.task_sizes);
       },
       [](RunConfig& c, const std::string& v) {
         c.scenario.task_sizes.clear();
         for (const auto& item : split_list(v)) c.scenario.task_sizes.push_back(parse_integral<int>(item));
       }},
      {"data.source", [](const RunConfig& c) -> std::optional<std::string> { return to_string(c.data.source); },
       [](RunConfig& c, const std::string& v) {
         if (v == "synthetic") c.data.source = DataSource::Synthetic;
         else if (v == "raster") c.data.source = DataSource::Raster;
         else if (v == "corpus") c.data.source = DataSource::Corpus;
         else throw std::invalid_argument("expected synthetic, raster or corpus, got '" + v + "'");
       }},
      BER_INT_FIELD("data.feature_dim", data.feature_dim, int),
      BER_REAL_FIELD("data.class_scale", data.class_scale),
      BER_REAL_FIELD("data.session_scale", data.session_scale),
      BER_REAL_FIELD("data.noise", data.noise),
      BER_INT_FIELD("data.image_size", data.image_size, int),
      BER_REAL_FIELD("data.pixel_noise", data.pixel_noise),
      {"data.manifest",
       [](const RunConfig& c) -> std::optional<std::string> {
         if (c.data.manifest.empty()) return std::nullopt;
         return c.data.manifest;
       },
       [](RunConfig& c, const std::string& v) { c.data.manifest = v; }},
      BER_INT_FIELD("data.pool_grid", data.pool_grid, int),
      {"preload_data", [](const RunConfig& c) -> std::optional<std::string> { return flag(c.preload_data); },
       [](RunConfig& c, const std::string& v) { c.preload_data = parse_flag(v); }},
      BER_INT_FIELD("batch_size", trainer.batch_sz, std::size_t),
      BER_REAL_FIELD("lr_replay", trainer.lr_replay),
      BER_REAL_FIELD("momentum", trainer.momentum),
      BER_INT_FIELD("epochs", trainer.epochs, std::size_t),
      {"replay.examples",
       [](const RunConfig& c) -> std::optional<std::string> {
         if (c.replay_examples_per_batch) return std::nullopt;
         return std::to_string(c.trainer.mem_sz);
       },
       [](RunConfig& c, const std::string& v) { c.trainer.mem_sz = parse_integral<std::size_t>(v); }},
      {"replay.examples_per_batch",
       [](const RunConfig& c) -> std::optional<std::string> {
         if (!c.replay_examples_per_batch) return std::nullopt;
         return std::to_string(*c.replay_examples_per_batch);
       },
       [](RunConfig& c, const std::string& v) { c.replay_examples_per_batch = parse_integral<std::size_t>(v); }},
      BER_INT_FIELD("replay.used", trainer.replay_sz, std::size_t),
      BER_INT_FIELD("review.size", trainer.review_sz, std::size_t),
      BER_INT_FIELD("review.epoch", trainer.review_epochs, std::size_t),
      BER_REAL_FIELD("review.lr_decay_factor", trainer.review_lr_decay),
      BER_INT_FIELD("learner.hidden", hidden, std::size_t),
      BER_INT_FIELD("learner.featurizer_seed", featurizer_seed, std::uint64_t),
      BER_INT_FIELD("augment.crop_w", augment.crop_w, int),
      BER_INT_FIELD("augment.crop_h", augment.crop_h, int),
      BER_REAL_FIELD("augment.p_spatial", augment.p_spatial),
      BER_REAL_FIELD("augment.p_photometric", augment.p_photometric),
      BER_REAL_FIELD("augment.p_distortion", augment.p_distortion),
      BER_REAL_FIELD("augment.contrast_limit", augment.contrast_limit),
      BER_REAL_FIELD("augment.gamma_min", augment.gamma_min),
      BER_REAL_FIELD("augment.gamma_max", augment.gamma_max),
      BER_REAL_FIELD("augment.brightness_limit", augment.brightness_limit),
      BER_REAL_FIELD("augment.elastic.alpha", augment.elastic.alpha),
      BER_REAL_FIELD("augment.elastic.sigma", augment.elastic.sigma),
      BER_REAL_FIELD("augment.elastic.alpha_affine", augment.elastic.alpha_affine),
      BER_INT_FIELD("augment.grid.steps", augment.grid.steps, int),
      BER_REAL_FIELD("augment.grid.limit", augment.grid.limit),
      BER_REAL_FIELD("augment.optical.distort_limit", augment.optical.distort_limit),
      BER_REAL_FIELD("augment.optical.shift_limit", augment.optical.shift_limit),
      BER_INT_FIELD("augment.resize_w", augment.resize_w, int),
      BER_INT_FIELD("augment.resize_h", augment.resize_h, int),
      BER_INT_FIELD("seed", seed, std::uint64_t),
      BER_SEED_FIELD("seed.data", seed_data),
      BER_SEED_FIELD("seed.memory", seed_memory),
      BER_SEED_FIELD("seed.sgd", seed_sgd),
      BER_SEED_FIELD("seed.augment", seed_augment),
      {"output.dir", [](const RunConfig& c) -> std::optional<std::string> { return c.output_dir; },
       [](RunConfig& c, const std::string& v) { c.output_dir = v; }},
      {"output.checkpoints", [](const RunConfig& c) -> std::optional<std::string> { return flag(c.checkpoints); },
       [](RunConfig& c, const std::string& v) { c.checkpoints = parse_flag(v); }},
  };
  return table;
}

#undef BER_INT_FIELD
#undef BER_REAL_FIELD
#undef BER_SEED_FIELD

std::string line_prefix(std::size_t line) { return line ? "line " + std::to_string(line) + ": " : ""; }

}  // namespace

KeyValues parse_key_values(const std::string& text) {
  KeyValues kv;
  std::vector<std::string> errors;
  std::stringstream in(text);
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const auto content = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (content.empty()) continue;
    const auto eq = content.find('=');
    if (eq == std::string::npos) {
      errors.push_back(line_prefix(line) + "expected 'key = value'");
      continue;
    }
    const auto key = trim(content.substr(0, eq));
    const auto value = trim(content.substr(eq + 1));
    if (key.empty()) {
      errors.push_back(line_prefix(line) + "empty key");
      continue;
    }
    if (const auto it = kv.find(key); it != kv.end()) {
      errors.push_back(line_prefix(line) + "duplicate key '" + key + "' (first set on line " +
                       std::to_string(it->second.second) + ")");
      continue;
    }
    kv.emplace(key, std::pair{value, line});
  }
  if (!errors.empty()) {
    std::string msg;
    for (const auto& e : errors) msg += (msg.empty() ? "" : "\n") + e;
    throw ConfigError(msg);
  }
  return kv;
}

RunConfig config_from_key_values(const KeyValues& kv) {
  RunConfig cfg;
  std::vector<std::string> errors;
  std::set<std::string> known;
  for (const auto& f : fields()) {
    known.insert(f.key);
    const auto it = kv.find(f.key);
    if (it == kv.end()) continue;
    try {
      f.set(cfg, it->second.first);
    } catch (const std::exception& e) {
      errors.push_back(line_prefix(it->second.second) + f.key + ": " + e.what());
    }
  }
  for (const auto& [key, entry] : kv)
    if (!known.count(key)) errors.push_back(line_prefix(entry.second) + "unknown key '" + key + "'");

  auto require = [&](const std::string& key, const std::string& why) {
    if (!kv.count(key)) errors.push_back("missing required key '" + key + "'" + why);
  };
  require("strategy", "");
  require("scenario.kind", "");
  if (kv.count("strategy") && errors.empty()) {
    const auto why = " for strategy=" + to_string(cfg.strategy);
    if (uses_memory(cfg.strategy)) {
      if (!kv.count("replay.examples") && !kv.count("replay.examples_per_batch"))
        errors.push_back("missing required key 'replay.examples' (mem_sz)" + why);
      if (kv.count("replay.examples") && kv.count("replay.examples_per_batch"))
        errors.push_back(line_prefix(kv.at("replay.examples_per_batch").second) +
                         "set only one of 'replay.examples' and 'replay.examples_per_batch'");
      require("replay.used", " (replay_sz)" + why);
    }
    if (uses_review(cfg.strategy)) require("review.size", " (review_sz)" + why);
  }
  if (!errors.empty()) {
    std::string msg;
    for (const auto& e : errors) msg += (msg.empty() ? "" : "\n") + e;
    throw ConfigError(msg);
  }
  validate(cfg);
  return cfg;
}

RunConfig parse_config(const std::string& text) { return config_from_key_values(parse_key_values(text)); }

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : fields())
    if (const auto v = f.get(cfg)) out += f.key + " = " + *v + "\n";
  return out;
}

void validate(const RunConfig& cfg) {
  if (is_independent_model(cfg.strategy) && cfg.scenario.kind != ScenarioKind::MultiTaskNC)
    throw ConfigError("strategy=" + to_string(cfg.strategy) + " requires scenario.kind = MT-NC");
  if (uses_preprocessing(cfg.strategy) && cfg.data.source == DataSource::Synthetic)
    throw ConfigError("strategy=" + to_string(cfg.strategy) + " needs raster inputs (data.source = raster or corpus)");
  if (cfg.data.source == DataSource::Corpus && cfg.data.manifest.empty())
    throw ConfigError("data.source = corpus requires data.manifest");
  if (cfg.hidden == 0) throw ConfigError("learner.hidden must be >= 1");
  if (cfg.data.feature_dim < 1) throw ConfigError("data.feature_dim must be >= 1");
  if (cfg.data.pool_grid < 1) throw ConfigError("data.pool_grid must be >= 1");
  if (!(cfg.data.noise > 0.0)) throw ConfigError("data.noise must be > 0");
  if (uses_memory(cfg.strategy) && cfg.memory_capacity() == 0)
    throw ConfigError("replay memory capacity must be >= 1");
  try {
    cfg.augment.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  TrainerConfig t = cfg.trainer;
  t.mem_sz = cfg.memory_capacity();
  t.validate(uses_memory(cfg.strategy), uses_review(cfg.strategy));
}

AblationMatrix load_matrix(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read matrix " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  auto kv = parse_key_values(ss.str());

  AblationMatrix m;
  auto take = [&](const std::string& key) -> std::optional<std::pair<std::string, std::size_t>> {
    const auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    auto v = it->second;
    kv.erase(it);
    return v;
  };
  auto fail = [](std::size_t line, const std::string& msg) { throw ConfigError(line_prefix(line) + msg); };

  KeyValues merged;
  if (const auto base = take("matrix.base")) {
    const auto base_path = path.parent_path() / base->first;
    std::ifstream bin(base_path);
    if (!bin) fail(base->second, "cannot read base config " + base_path.string());
    std::stringstream bss;
    bss << bin.rdbuf();
    merged = parse_key_values(bss.str());
  }
  if (const auto v = take("matrix.strategies")) {
    for (const auto& s : split_list(v->first)) {
      try {
        m.strategies.push_back(parse_strategy(s));
      } catch (const std::exception& e) {
        fail(v->second, e.what());
      }
    }
  }
  if (const auto v = take("matrix.seeds")) {
    for (const auto& s : split_list(v->first)) {
      try {
        m.seeds.push_back(parse_integral<std::uint64_t>(s));
      } catch (const std::exception& e) {
        fail(v->second, std::string("matrix.seeds: ") + e.what());
      }
    }
  }
  if (const auto v = take("matrix.workers")) {
    try {
      m.workers = std::max<std::size_t>(1, parse_integral<std::size_t>(v->first));
    } catch (const std::exception& e) {
      fail(v->second, std::string("matrix.workers: ") + e.what());
    }
  }
  for (auto& [key, entry] : kv) merged[key] = entry;
  if (!m.strategies.empty()) merged["strategy"] = {to_string(m.strategies.front()), 0};
  else if (!merged.count("strategy")) merged["strategy"] = {"baseline", 0};
  if (!merged.count("scenario.kind") && (m.strategies.empty() || m.seeds.empty())) merged["scenario.kind"] = {"NI", 0};
  m.base = config_from_key_values(merged);
  m.output_dir = m.base.output_dir;
  // every arm must validate on its own
  for (auto s : m.strategies) {
    auto arm = merged;
    arm["strategy"] = {to_string(s), 0};
    config_from_key_values(arm);
  }
  return m;
}

}  // namespace ber
