#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "memprop/feature_grid.hpp"
#include "memprop/numkernel.hpp"

namespace memprop {

enum class ColumnOrigin : std::uint8_t { exemplar, shortterm, longterm };

/// Where the per-column usage signal comes from: key-vs-key similarity of each
/// observed frame against the stored keys, or the readout affinity.
enum class UsageSource { keys, readout };

struct BankConfig {
  std::size_t gamma = 5;
  std::size_t ne = 5;
  /// Short-term frame count that triggers compaction. 0 disables compaction.
  std::size_t ns = 10;
  std::size_t m = 128;
  /// Long-term column cap; 0 means unbounded.
  std::size_t longterm_cap = 4096;
  Real temperature = Real{1};
  bool track_usage = true;
  UsageSource usage_source = UsageSource::keys;
};

struct ColumnCounts {
  std::size_t shortterm = 0;
  std::size_t longterm = 0;
  std::size_t exemplar = 0;
  std::size_t total = 0;

  friend bool operator==(const ColumnCounts&, const ColumnCounts&) = default;
};

struct ReadoutOptions {
  bool keep_affinity = false;
  bool column_mass = false;
};

struct ReadoutResult {
  FeatureGrid value_grid;
  /// locations x T, row-stochastic. Only filled when requested.
  std::optional<Mat> affinity;
  /// Per location, the column with the largest affinity.
  std::vector<std::size_t> best_column;
  /// Per column, the affinity summed over locations (when requested).
  std::vector<Real> column_mass;
  std::size_t columns_used = 0;
};

/// Key/value memory with strided insertion, usage accounting and top-M
/// compaction of the oldest short-term frames into a long-term store.
///
/// Column layout is [exemplar | long-term | short-term frames oldest first].
/// Every per-column array is permuted by the same index set on compaction.
class MemoryBank {
 public:
  static MemoryBank init_with_exemplar(const FeatureGrid& keys, const FeatureGrid& values, BankConfig config);

  /// Accounts usage of the stored columns by frame `frame`, inserts the frame
  /// when frame % gamma == 0 and compacts when the short-term store is full.
  /// `readout_mass` is required when usage comes from the readout affinity.
  void observe_frame(const FeatureGrid& keys, const FeatureGrid& values, std::size_t frame,
                     std::span<const Real> readout_mass = {});

  /// usage_raw / max(1, now - 1 - born_at) per column.
  Mat normalized_usage(std::size_t now) const;

  /// Promotes the top-M columns of the `ne` oldest short-term frames and drops
  /// the rest. `frame` is the last observed frame.
  void compact(std::size_t frame);

  ReadoutResult readout(const FeatureGrid& query, ReadoutOptions options = {}) const;

  ColumnCounts column_count() const;
  std::size_t shortterm_frames() const noexcept { return frames_.size(); }
  const std::deque<std::size_t>& shortterm_frame_indices() const noexcept { return frames_; }

  /// Drops all but the newest `n` short-term frames.
  void retain_newest_frames(std::size_t n);

  /// Largest column count held during the last observe_frame call.
  std::size_t last_peak_columns() const noexcept { return last_peak_; }
  std::size_t last_frame() const noexcept { return last_frame_; }

  const BankConfig& config() const noexcept { return config_; }
  std::size_t key_channels() const noexcept { return key_channels_; }
  std::size_t value_channels() const noexcept { return value_channels_; }
  std::size_t frame_locations() const noexcept { return locations_; }
  std::size_t columns() const noexcept { return origin_.size(); }

  Mat keys() const;
  Mat values() const;
  std::span<const Real> key_data() const noexcept { return keys_; }
  std::span<const Real> value_data() const noexcept { return values_; }
  std::span<const Real> usage_raw() const noexcept { return usage_; }
  std::span<const std::size_t> born_at() const noexcept { return born_; }
  std::span<const ColumnOrigin> origin() const noexcept { return origin_; }
  std::span<const std::size_t> source_frame() const noexcept { return source_frame_; }
  std::span<const std::size_t> source_location() const noexcept { return source_location_; }

  std::size_t bytes_per_column() const noexcept;
  std::size_t bytes() const noexcept { return bytes_per_column() * columns(); }

  /// Debug snapshot: keys.bin and values.bin in the feature-file format
  /// (height 1, width T) plus manifest.txt with one line per column.
  void dump(const std::filesystem::path& dir) const;

 private:
  MemoryBank() = default;

  void append_columns(const FeatureGrid& keys, const FeatureGrid& values, ColumnOrigin origin, std::size_t born,
                      std::size_t source);
  void keep_columns(std::span<const std::size_t> order);

  BankConfig config_;
  std::size_t key_channels_ = 0;
  std::size_t value_channels_ = 0;
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t locations_ = 0;
  std::size_t last_frame_ = 0;
  std::size_t last_peak_ = 0;

  std::vector<Real> keys_;    // T x key_channels
  std::vector<Real> values_;  // T x value_channels
  std::vector<Real> usage_;
  std::vector<std::size_t> born_;
  std::vector<ColumnOrigin> origin_;
  std::vector<std::size_t> source_frame_;
  std::vector<std::size_t> source_location_;
  std::deque<std::size_t> frames_;  // short-term frame indices, oldest first
};

const char* to_string(ColumnOrigin origin) noexcept;

}  // namespace memprop
