#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ber/rng.hpp"
#include "ber/stream.hpp"

namespace ber {

struct MemorySlot {
  LabeledExample example;
  std::size_t batch = 0;  // originating stream batch index
};

struct MemoryWarning {
  std::size_t batch;
  std::string message;
};

/// Episodic buffer with a per-batch insertion quota of floor(capacity / n).
///
/// With a truthful n the quota never overflows capacity and earlier batches are
/// never evicted. When more than n batches arrive the overflow falls back to
/// reservoir replacement and a warning is recorded.
class ReplayMemory {
public:
  static constexpr std::size_t kHeaderBytes = 64;
  static constexpr std::size_t kRecordFieldBytes = 24;  // label, session, batch

  ReplayMemory(std::size_t capacity, std::size_t declared_batches);

  std::size_t capacity() const { return capacity_; }
  std::size_t declared_batches() const { return declared_batches_; }
  std::size_t quota() const { return capacity_ / declared_batches_; }
  std::size_t size() const { return slots_.size(); }
  bool empty() const { return slots_.empty(); }
  const std::vector<MemorySlot>& slots() const { return slots_; }
  const std::vector<MemoryWarning>& warnings() const { return warnings_; }
  std::size_t count_from_batch(std::size_t batch) const;

  /// Inserts min(quota, |batch|) examples drawn uniformly without replacement.
  /// Returns the number inserted.
  std::size_t update(const StreamBatch& batch, Rng& rng);

  /// Slot indices: without replacement when count <= size, else with replacement.
  std::vector<std::size_t> sample_indices(std::size_t count, Rng& rng) const;
  std::vector<LabeledExample> sample(std::size_t count, Rng& rng) const;
  /// Without replacement, capped at size().
  std::vector<LabeledExample> sample_capped(std::size_t count, Rng& rng) const;

  /// Serialized size of one record; 0 until the first example fixes the layout.
  std::size_t record_bytes() const;
  /// Exact byte size of save_snapshot()'s output.
  std::size_t footprint_bytes() const { return kHeaderBytes + slots_.size() * record_bytes(); }

  /// Header: magic, mem_sz, n, count, kind, three dims (u64 each); then
  /// fixed-width records: label, session, batch (i64/i64/u64) and payload
  /// (f64 features, or u8 pixels for raster examples).
  void save_snapshot(const std::filesystem::path& path) const;
  static ReplayMemory load_snapshot(const std::filesystem::path& path);

private:
  enum class Layout : std::uint64_t { Unset = 0, Features = 1, Raster = 2 };

  void check_layout(const LabeledExample& ex);
  void insert(MemorySlot slot, Rng& rng, bool& warned);

  std::size_t capacity_;
  std::size_t declared_batches_;
  std::vector<MemorySlot> slots_;
  std::vector<MemoryWarning> warnings_;
  std::uint64_t seen_ = 0;  // examples offered, for the reservoir fallback
  Layout layout_ = Layout::Unset;
  std::size_t dims_[3] = {0, 0, 0};
};

}  // namespace ber
