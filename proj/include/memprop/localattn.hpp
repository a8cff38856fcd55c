#pragma once

#include <cstddef>
#include <deque>

#include "memprop/feature_grid.hpp"

namespace memprop {

/// The key/value grids of the last `capacity` frames, newest first.
class RingBuffer {
 public:
  struct Entry {
    FeatureGrid keys;
    FeatureGrid values;
    std::size_t frame = 0;
  };

  explicit RingBuffer(std::size_t capacity) : capacity_(capacity) {}

  void push(FeatureGrid keys, FeatureGrid values, std::size_t frame);

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  std::size_t evicted() const noexcept { return evicted_; }
  const Entry& operator[](std::size_t i) const { return entries_.at(i); }

 private:
  std::size_t capacity_;
  std::size_t evicted_ = 0;
  std::deque<Entry> entries_;
};

struct LocalAttentionResult {
  FeatureGrid output;
  /// True when the buffer was empty and the output is all zeros.
  bool cold_start = false;
};

/// For every location p, softmax(q_p . K^T / beta) V over the lambda x lambda
/// neighbourhood of p in each buffered frame (oldest frame first, row-major
/// within a window). Windows are clipped at the grid border. An empty buffer
/// yields a zero grid with `cold_channels` channels.
LocalAttentionResult local_attention(const FeatureGrid& query, const RingBuffer& buffer, std::size_t lambda,
                                     Real beta, std::size_t cold_channels = 0);

}  // namespace memprop
