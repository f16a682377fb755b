#include "ber/memory.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "ber/errors.hpp"

namespace ber {
namespace {

constexpr char kMagic[8] = {'B', 'E', 'R', 'M', 'E', 'M', '0', '1'};

template <typename T> void put(std::ostream& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.write(buf, sizeof(T));
}

template <typename T> T get(std::istream& in) {
  char buf[sizeof(T)];
  in.read(buf, sizeof(T));
  if (!in) throw LoadError("truncated memory snapshot");
  T value;
  std::memcpy(&value, buf, sizeof(T));
  return value;
}

}  // namespace

ReplayMemory::ReplayMemory(std::size_t capacity, std::size_t declared_batches)
    : capacity_(capacity), declared_batches_(declared_batches) {
  if (capacity_ == 0) throw ConfigError("replay memory: mem_sz must be > 0");
  if (declared_batches_ == 0) throw ConfigError("replay memory: declared batch count n must be >= 1");
}

std::size_t ReplayMemory::count_from_batch(std::size_t batch) const {
  return static_cast<std::size_t>(
      std::count_if(slots_.begin(), slots_.end(), [&](const MemorySlot& s) { return s.batch == batch; }));
}

void ReplayMemory::check_layout(const LabeledExample& ex) {
  if (ex.is_raster()) {
    if (!ex.image) throw std::logic_error("replay memory: raster example must be materialized");
    const std::size_t d[3] = {static_cast<std::size_t>(ex.image->width), static_cast<std::size_t>(ex.image->height),
                              static_cast<std::size_t>(ex.image->channels)};
    if (layout_ == Layout::Unset) {
      layout_ = Layout::Raster;
      std::copy(d, d + 3, dims_);
    } else if (layout_ != Layout::Raster || !std::equal(d, d + 3, dims_)) {
      throw std::invalid_argument("replay memory: example layout differs from stored examples");
    }
  } else {
    if (layout_ == Layout::Unset) {
      layout_ = Layout::Features;
      dims_[0] = ex.features.size();
    } else if (layout_ != Layout::Features || dims_[0] != ex.features.size()) {
      throw std::invalid_argument("replay memory: example layout differs from stored examples");
    }
  }
}

std::size_t ReplayMemory::record_bytes() const {
  switch (layout_) {
    case Layout::Features: return kRecordFieldBytes + dims_[0] * sizeof(double);
    case Layout::Raster: return kRecordFieldBytes + dims_[0] * dims_[1] * dims_[2];
    case Layout::Unset: break;
  }
  return 0;
}

void ReplayMemory::insert(MemorySlot slot, Rng& rng, bool& warned) {
  ++seen_;
  if (slots_.size() < capacity_) {
    slots_.push_back(std::move(slot));
    return;
  }
  if (!warned) {
    warnings_.push_back({slot.batch, "quota exceeds capacity (stream longer than declared n=" +
                                         std::to_string(declared_batches_) + "); using reservoir replacement"});
    warned = true;
  }
  const auto j = rng.below(seen_);
  if (j < capacity_) slots_[static_cast<std::size_t>(j)] = std::move(slot);
}

std::size_t ReplayMemory::update(const StreamBatch& batch, Rng& rng) {
  const auto& examples = batch.examples;
  const std::size_t k = std::min(quota(), examples.size());
  if (k == 0) return 0;
  if (batch.index > declared_batches_)
    warnings_.push_back({batch.index, "batch index exceeds declared n=" + std::to_string(declared_batches_)});

  // partial Fisher-Yates: the first k positions become a uniform k-subset
  std::vector<std::size_t> idx(examples.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(idx.size() - i));
    std::swap(idx[i], idx[j]);
  }
  bool warned = false;
  for (std::size_t i = 0; i < k; ++i) {
    const auto& ex = examples[idx[i]];
    check_layout(ex);
    insert({ex, batch.index}, rng, warned);
  }
  return k;
}

std::vector<std::size_t> ReplayMemory::sample_indices(std::size_t count, Rng& rng) const {
  if (slots_.empty()) throw std::logic_error("replay memory: cannot sample from empty memory");
  const std::size_t n = slots_.size();
  std::vector<std::size_t> out;
  out.reserve(count);
  if (count > n) {
    for (std::size_t i = 0; i < count; ++i) out.push_back(static_cast<std::size_t>(rng.below(n)));
    return out;
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < count; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(idx[i], idx[j]);
    out.push_back(idx[i]);
  }
  return out;
}

std::vector<LabeledExample> ReplayMemory::sample(std::size_t count, Rng& rng) const {
  std::vector<LabeledExample> out;
  out.reserve(count);
  for (auto i : sample_indices(count, rng)) out.push_back(slots_[i].example);
  return out;
}

std::vector<LabeledExample> ReplayMemory::sample_capped(std::size_t count, Rng& rng) const {
  return sample(std::min(count, slots_.size()), rng);
}

void ReplayMemory::save_snapshot(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put<std::uint64_t>(out, capacity_);
  put<std::uint64_t>(out, declared_batches_);
  put<std::uint64_t>(out, slots_.size());
  put<std::uint64_t>(out, static_cast<std::uint64_t>(layout_));
  for (auto d : dims_) put<std::uint64_t>(out, d);
  std::vector<unsigned char> pixels;
  for (const auto& s : slots_) {
    put<std::int64_t>(out, s.example.label);
    put<std::int64_t>(out, s.example.session);
    put<std::uint64_t>(out, s.batch);
    if (layout_ == Layout::Features) {
      for (double v : s.example.features) put<double>(out, v);
    } else {
      const auto& data = s.example.image->data;
      pixels.resize(data.size());
      std::transform(data.begin(), data.end(), pixels.begin(), [](float v) {
        return static_cast<unsigned char>(std::clamp(std::lround(v), 0L, 255L));
      });
      out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    }
  }
}

ReplayMemory ReplayMemory::load_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(magic, magic + 8, kMagic)) throw LoadError("not a memory snapshot: " + path.string());
  const auto capacity = get<std::uint64_t>(in);
  const auto n = get<std::uint64_t>(in);
  const auto count = get<std::uint64_t>(in);
  const auto layout = get<std::uint64_t>(in);
  std::size_t dims[3];
  for (auto& d : dims) d = get<std::uint64_t>(in);
  ReplayMemory mem(capacity, n);
  if (count > capacity || layout > 2) throw LoadError("corrupt memory snapshot header: " + path.string());
  mem.layout_ = static_cast<Layout>(layout);
  std::copy(dims, dims + 3, mem.dims_);
  std::vector<unsigned char> pixels;
  for (std::uint64_t i = 0; i < count; ++i) {
    MemorySlot s;
    s.example.label = static_cast<int>(get<std::int64_t>(in));
    s.example.session = static_cast<int>(get<std::int64_t>(in));
    s.batch = get<std::uint64_t>(in);
    if (mem.layout_ == Layout::Features) {
      s.example.features.resize(dims[0]);
      for (auto& v : s.example.features) v = get<double>(in);
    } else {
      RasterImage img(static_cast<int>(dims[0]), static_cast<int>(dims[1]), static_cast<int>(dims[2]));
      pixels.resize(img.data.size());
      in.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
      if (!in) throw LoadError("truncated memory snapshot");
      std::transform(pixels.begin(), pixels.end(), img.data.begin(), [](unsigned char b) { return float(b); });
      s.example.image = std::make_shared<const RasterImage>(std::move(img));
    }
    mem.slots_.push_back(std::move(s));
  }
  mem.seen_ = count;
  return mem;
}

}  // namespace ber
