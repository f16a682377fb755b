#include "ber/stream.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <utility>

#include "ber/errors.hpp"

namespace ber {

std::string to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::NI: return "NI";
    case ScenarioKind::MultiTaskNC: return "MT-NC";
    case ScenarioKind::NIC: return "NIC";
  }
  return "?";
}

ScenarioKind parse_scenario_kind(const std::string& text) {
  if (text == "NI") return ScenarioKind::NI;
  if (text == "MT-NC" || text == "NC") return ScenarioKind::MultiTaskNC;
  if (text == "NIC") return ScenarioKind::NIC;
  throw ConfigError("unknown scenario kind '" + text + "' (expected NI, MT-NC or NIC)");
}

std::vector<int> first_batch_larger_partition(int classes, int batches) {
  if (batches < 1 || classes < batches) throw ConfigError("MT-NC: need 1 <= batches <= classes");
  if (batches == 1) return {classes};
  const int rest = std::max(1, classes / (batches + 1));
  const int first = classes - rest * (batches - 1);
  std::vector<int> sizes(static_cast<std::size_t>(batches), rest);
  sizes.front() = first;
  return sizes;
}

void validate(const ScenarioSpec& spec, int source_classes, int source_sessions) {
  auto fail = [](const std::string& msg) { throw ConfigError("scenario: " + msg); };
  if (spec.classes < 1) fail("classes must be >= 1");
  if (spec.sessions < 1) fail("sessions must be >= 1");
  if (spec.batches < 1) fail("batches must be >= 1");
  if (spec.examples_per_cell < 1) fail("examples_per_cell must be >= 1");
  if (spec.val_per_cell < 1 || spec.test_per_cell < 1) fail("val_per_cell and test_per_cell must be >= 1");
  if (spec.classes != source_classes)
    fail("classes (" + std::to_string(spec.classes) + ") != data source classes (" +
         std::to_string(source_classes) + ")");
  if (spec.sessions != source_sessions)
    fail("sessions (" + std::to_string(spec.sessions) + ") != data source sessions (" +
         std::to_string(source_sessions) + ")");
  switch (spec.kind) {
    case ScenarioKind::NI:
      if (spec.batches > spec.sessions) fail("NI needs batches <= sessions (one session per batch)");
      break;
    case ScenarioKind::MultiTaskNC: {
      const auto sizes = spec.task_sizes.empty() ? first_batch_larger_partition(spec.classes, spec.batches)
                                                 : spec.task_sizes;
      if (static_cast<int>(sizes.size()) != spec.batches) fail("MT-NC task_sizes length must equal batches");
      int sum = 0;
      for (int s : sizes) {
        if (s < 1) fail("MT-NC task sizes must be >= 1");
        sum += s;
      }
      if (sum != spec.classes) fail("MT-NC class partition sums to " + std::to_string(sum) + ", expected classes=" +
                                    std::to_string(spec.classes));
      break;
    }
    case ScenarioKind::NIC:
      if (spec.batches != spec.classes * spec.sessions)
        fail("NIC needs batches == classes x sessions (" + std::to_string(spec.classes * spec.sessions) + ")");
      break;
  }
  if (!spec.task_sizes.empty() && spec.kind != ScenarioKind::MultiTaskNC) fail("task_sizes only apply to MT-NC");
}

// ---------------------------------------------------------------------------

SyntheticDriftModel::SyntheticDriftModel(std::vector<std::vector<double>> class_means,
                                         std::vector<std::vector<double>> session_offsets, double noise)
    : class_means_(std::move(class_means)), session_offsets_(std::move(session_offsets)), noise_(noise) {
  if (class_means_.empty() || session_offsets_.empty()) throw ConfigError("drift model: need classes and sessions");
  if (!(noise_ > 0.0)) throw ConfigError("drift model: noise must be > 0");
  dim_ = static_cast<int>(class_means_.front().size());
  for (const auto& v : class_means_)
    if (static_cast<int>(v.size()) != dim_) throw ConfigError("drift model: ragged class means");
  for (const auto& v : session_offsets_)
    if (static_cast<int>(v.size()) != dim_) throw ConfigError("drift model: session offset dim mismatch");
}

SyntheticDriftModel SyntheticDriftModel::make(int classes, int sessions, int dim, double class_scale,
                                              double session_scale, double noise, std::uint64_t seed) {
  if (classes < 1 || sessions < 1 || dim < 1) throw ConfigError("drift model: classes, sessions, dim must be >= 1");
  Rng rng(derive_seed(seed, "drift-model"));
  auto gaussian_rows = [&](int rows, double scale) {
    std::vector<std::vector<double>> m(static_cast<std::size_t>(rows), std::vector<double>(static_cast<std::size_t>(dim)));
    for (auto& row : m)
      for (auto& v : row) v = scale * rng.normal();
    return m;
  };
  auto means = gaussian_rows(classes, class_scale);
  auto offsets = gaussian_rows(sessions, session_scale);
  return SyntheticDriftModel(std::move(means), std::move(offsets), noise);
}

LabeledExample SyntheticDriftModel::sample(int label, int session, Rng& rng) const {
  const auto& mu = class_mean(label);
  const auto& delta = session_offset(session);
  LabeledExample ex;
  ex.features.resize(static_cast<std::size_t>(dim_));
  for (std::size_t i = 0; i < ex.features.size(); ++i) ex.features[i] = mu[i] + delta[i] + noise_ * rng.normal();
  ex.label = label;
  ex.session = session;
  return ex;
}

std::vector<LabeledExample> SyntheticDriftModel::draw(int label, int session, Split, std::size_t count,
                                                      Rng& rng) const {
  std::vector<LabeledExample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(sample(label, session, rng));
  return out;
}

// ---------------------------------------------------------------------------

SyntheticRasterModel::SyntheticRasterModel(int classes, int sessions, int size, double noise, std::uint64_t seed)
    : size_(size), noise_(noise) {
  if (classes < 1 || sessions < 1 || size < 8) throw ConfigError("raster model: bad dimensions");
  Rng rng(derive_seed(seed, "raster-model"));
  for (int c = 0; c < classes; ++c)
    class_colors_.push_back({rng.uniform(30, 225), rng.uniform(30, 225), rng.uniform(30, 225)});
  for (int s = 0; s < sessions; ++s) {
    backgrounds_.push_back({rng.uniform(0, 255), rng.uniform(0, 255), rng.uniform(0, 255)});
    lighting_.push_back(rng.uniform(0.7, 1.3));
  }
}

RasterImage SyntheticRasterModel::render(int label, int session, Rng& rng) const {
  const auto& obj = class_colors_.at(static_cast<std::size_t>(label));
  const auto& bg = backgrounds_.at(static_cast<std::size_t>(session));
  const double light = lighting_.at(static_cast<std::size_t>(session));
  RasterImage img(size_, size_, 3);
  const int half = size_ / 5;  // object spans ~40% of the frame
  const int cx = size_ / 2 + static_cast<int>(rng.below(5)) - 2;
  const int cy = size_ / 2 + static_cast<int>(rng.below(5)) - 2;
  for (int y = 0; y < size_; ++y) {
    for (int x = 0; x < size_; ++x) {
      const bool inside = std::abs(x - cx) <= half && std::abs(y - cy) <= half;
      // background stripes keep the session signal spatially structured
      const double stripe = ((x / 8 + y / 8) % 2 == 0) ? 1.0 : 0.8;
      const double base[3] = {inside ? obj.r : bg.r * stripe, inside ? obj.g : bg.g * stripe,
                              inside ? obj.b : bg.b * stripe};
      for (int c = 0; c < 3; ++c) {
        const double v = base[c] * light + noise_ * rng.normal();
        img.at(x, y, c) = static_cast<float>(std::clamp(std::round(v), 0.0, 255.0));
      }
    }
  }
  return img;
}

std::vector<LabeledExample> SyntheticRasterModel::draw(int label, int session, Split, std::size_t count,
                                                       Rng& rng) const {
  std::vector<LabeledExample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    LabeledExample ex;
    ex.image = std::make_shared<const RasterImage>(render(label, session, rng));
    ex.label = label;
    ex.session = session;
    out.push_back(std::move(ex));
  }
  return out;
}

// ---------------------------------------------------------------------------

CorpusSource::CorpusSource(std::vector<LabeledExample> examples, int classes, int sessions,
                           std::uint64_t split_seed, double train_fraction, double val_fraction)
    : classes_(classes), sessions_(sessions),
      cells_(static_cast<std::size_t>(classes) * static_cast<std::size_t>(sessions)) {
  if (train_fraction <= 0 || val_fraction < 0 || train_fraction + val_fraction >= 1.0)
    throw ConfigError("corpus: split fractions must satisfy 0 < train, train + val < 1");
  std::vector<std::vector<LabeledExample>> grouped(cells_.size());
  for (auto& ex : examples) {
    if (ex.label < 0 || ex.label >= classes || ex.session < 0 || ex.session >= sessions)
      throw ConfigError("corpus: example outside declared classes/sessions");
    grouped[static_cast<std::size_t>(ex.label * sessions + ex.session)].push_back(std::move(ex));
  }
  for (std::size_t cell = 0; cell < grouped.size(); ++cell) {
    auto& items = grouped[cell];
    Rng rng(derive_seed(split_seed, cell));
    rng.shuffle(items);
    const auto n = items.size();
    const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * train_fraction));
    const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(n) * val_fraction));
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t split = i < n_train ? 0 : (i < n_train + n_val ? 1 : 2);
      cells_[cell][split].push_back(std::move(items[i]));
    }
  }
}

std::vector<LabeledExample> CorpusSource::draw(int label, int session, Split split, std::size_t count, Rng&) const {
  const auto& items = cells_.at(static_cast<std::size_t>(label * sessions_ + session))[static_cast<std::size_t>(split)];
  const auto n = std::min(count, items.size());
  return {items.begin(), items.begin() + static_cast<std::ptrdiff_t>(n)};
}

// ---------------------------------------------------------------------------

namespace {

void append_eval_sets(const ScenarioSpec& spec, const ExampleSource& source, Scenario& out,
                      const std::vector<int>& task_of_class) {
  const std::uint64_t val_seed = derive_seed(spec.seed, "validation");
  const std::uint64_t test_seed = derive_seed(spec.seed, "test");
  for (int c = 0; c < spec.classes; ++c) {
    for (int s = 0; s < spec.sessions; ++s) {
      const auto cell = static_cast<std::uint64_t>(c * spec.sessions + s);
      Rng vr(derive_seed(val_seed, cell));
      Rng tr(derive_seed(test_seed, cell));
      auto val = source.draw(c, s, Split::Validation, static_cast<std::size_t>(spec.val_per_cell), vr);
      auto test = source.draw(c, s, Split::Test, static_cast<std::size_t>(spec.test_per_cell), tr);
      for (auto* part : {&val, &test}) {
        for (auto& ex : *part) {
          if (!task_of_class.empty()) ex.task = task_of_class[static_cast<std::size_t>(c)];
        }
      }
      std::move(val.begin(), val.end(), std::back_inserter(out.validation));
      std::move(test.begin(), test.end(), std::back_inserter(out.test));
    }
  }
}

}  // namespace

Scenario generate_scenario(const ScenarioSpec& spec, const ExampleSource& source) {
  validate(spec, source.classes(), source.sessions());
  Scenario out;
  const std::uint64_t train_seed = derive_seed(spec.seed, "train");
  auto cell_rng = [&](int batch, int c, int s) {
    const auto key = (static_cast<std::uint64_t>(batch) << 40) ^
                     static_cast<std::uint64_t>(c * spec.sessions + s);
    return Rng(derive_seed(train_seed, key));
  };
  const auto per_cell = static_cast<std::size_t>(spec.examples_per_cell);
  std::vector<int> task_of_class;

  switch (spec.kind) {
    case ScenarioKind::NI:
      for (int t = 1; t <= spec.batches; ++t) {
        StreamBatch b;
        b.index = static_cast<std::size_t>(t);
        const int s = t - 1;
        for (int c = 0; c < spec.classes; ++c) {
          auto rng = cell_rng(t, c, s);
          auto ex = source.draw(c, s, Split::Train, per_cell, rng);
          std::move(ex.begin(), ex.end(), std::back_inserter(b.examples));
        }
        out.stream.push_back(std::move(b));
      }
      break;
    case ScenarioKind::MultiTaskNC: {
      const auto sizes = spec.task_sizes.empty() ? first_batch_larger_partition(spec.classes, spec.batches)
                                                 : spec.task_sizes;
      task_of_class.assign(static_cast<std::size_t>(spec.classes), 0);
      int next_class = 0;
      for (int t = 1; t <= spec.batches; ++t) {
        const int task = t - 1;
        StreamBatch b;
        b.index = static_cast<std::size_t>(t);
        b.task_label = task;
        std::vector<int> group;
        for (int k = 0; k < sizes[static_cast<std::size_t>(task)]; ++k) group.push_back(next_class++);
        for (int c : group) {
          task_of_class[static_cast<std::size_t>(c)] = task;
          for (int s = 0; s < spec.sessions; ++s) {
            auto rng = cell_rng(t, c, s);
            auto ex = source.draw(c, s, Split::Train, per_cell, rng);
            for (auto& e : ex) e.task = task;
            std::move(ex.begin(), ex.end(), std::back_inserter(b.examples));
          }
        }
        out.task_classes.push_back(std::move(group));
        out.stream.push_back(std::move(b));
      }
      break;
    }
    case ScenarioKind::NIC: {
      std::vector<std::pair<int, int>> pairs;
      for (int c = 0; c < spec.classes; ++c)
        for (int s = 0; s < spec.sessions; ++s) pairs.emplace_back(c, s);
      Rng order(derive_seed(spec.seed, "nic-order"));
      order.shuffle(pairs);
      for (int t = 1; t <= spec.batches; ++t) {
        const auto [c, s] = pairs[static_cast<std::size_t>(t - 1)];
        StreamBatch b;
        b.index = static_cast<std::size_t>(t);
        auto rng = cell_rng(t, c, s);
        b.examples = source.draw(c, s, Split::Train, per_cell, rng);
        out.stream.push_back(std::move(b));
      }
      break;
    }
  }
  for (const auto& b : out.stream)
    if (b.examples.empty())
      throw ConfigError("scenario: batch " + std::to_string(b.index) + " is empty (data source has no examples)");
  append_eval_sets(spec, source, out, task_of_class);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool parse_int(const std::string& s, int& out) {
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

std::vector<double> read_feature_file(const std::filesystem::path& path, std::size_t row) {
  std::ifstream in(path);
  if (!in) throw LoadError("missing file " + path.string(), row);
  std::string line;
  while (std::getline(in, line) && trim(line).empty()) {
  }
  std::vector<double> v;
  for (const auto& cell : split_csv(line)) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(cell, &used));
      if (used != cell.size()) throw std::invalid_argument(cell);
    } catch (const std::exception&) {
      throw LoadError("malformed feature value '" + cell + "' in " + path.string(), row);
    }
  }
  if (v.empty()) throw LoadError("empty feature file " + path.string(), row);
  return v;
}

}  // namespace

Corpus load_corpus(const std::filesystem::path& manifest, bool preload) {
  std::ifstream in(manifest);
  if (!in) throw LoadError("cannot open manifest " + manifest.string());
  const auto base = manifest.parent_path();
  Corpus corpus;
  std::string line;
  bool seen_header = false;
  std::size_t row = 0;
  std::optional<std::pair<int, int>> image_size;
  std::optional<std::size_t> feature_dim;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      const auto key = trim(line.substr(1, eq - 1));
      int value = 0;
      if (!parse_int(trim(line.substr(eq + 1)), value) || value < 1) throw LoadError("bad declaration: " + line);
      if (key == "classes") corpus.declared_classes = value;
      else if (key == "sessions") corpus.declared_sessions = value;
      continue;
    }
    if (!seen_header) {
      if (split_csv(line) != std::vector<std::string>{"path", "label", "session"})
        throw LoadError("manifest header must be 'path,label,session'");
      seen_header = true;
      continue;
    }
    ++row;
    const auto cells = split_csv(line);
    if (cells.size() != 3 || cells[0].empty()) throw LoadError("expected 3 fields 'path,label,session'", row);
    LabeledExample ex;
    if (!parse_int(cells[1], ex.label) || ex.label < 0) throw LoadError("bad label '" + cells[1] + "'", row);
    if (!parse_int(cells[2], ex.session) || ex.session < 0) throw LoadError("bad session '" + cells[2] + "'", row);
    if (corpus.declared_classes && ex.label >= *corpus.declared_classes)
      throw LoadError("label " + cells[1] + " >= declared classes " + std::to_string(*corpus.declared_classes), row);
    if (corpus.declared_sessions && ex.session >= *corpus.declared_sessions)
      throw LoadError("session " + cells[2] + " >= declared sessions " + std::to_string(*corpus.declared_sessions),
                      row);
    const auto path = base / cells[0];
    if (!std::filesystem::exists(path)) throw LoadError("missing file " + path.string(), row);
    const auto ext = path.extension().string();
    if (ext == ".ppm") {
      if (feature_dim) throw LoadError("mixed image and feature rows", row);
      std::pair<int, int> size;
      try {
        if (preload) {
          auto img = std::make_shared<const RasterImage>(read_ppm(path));
          size = {img->width, img->height};
          ex.image = std::move(img);
        } else {
          size = read_ppm_size(path);
          ex.image_path = path.string();
        }
      } catch (const LoadError& e) {
        throw LoadError(e.what(), row);
      }
      if (image_size && *image_size != size) throw LoadError("inconsistent image size", row);
      image_size = size;
    } else if (ext == ".csv") {
      if (image_size) throw LoadError("mixed image and feature rows", row);
      ex.features = read_feature_file(path, row);
      if (feature_dim && *feature_dim != ex.features.size()) throw LoadError("inconsistent feature dimension", row);
      feature_dim = ex.features.size();
    } else {
      throw LoadError("unsupported file type '" + ext + "'", row);
    }
    corpus.examples.push_back(std::move(ex));
  }
  return corpus;
}

void materialize(std::vector<LabeledExample>& examples) {
  for (auto& ex : examples) {
    if (!ex.image && !ex.image_path.empty()) ex.image = std::make_shared<const RasterImage>(read_ppm(ex.image_path));
  }
}

}  // namespace ber
