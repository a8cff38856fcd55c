#include "memprop/localattn.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace memprop {

void RingBuffer::push(FeatureGrid keys, FeatureGrid values, std::size_t frame) {
  require(keys.same_spatial(values), "RingBuffer::push: key and value grids differ in spatial size");
  if (!entries_.empty()) {
    const Entry& head = entries_.front();
    require(keys.same_shape(head.keys) && values.same_shape(head.values),
            "RingBuffer::push: grid shape differs from buffered entries");
    require(frame > head.frame, "RingBuffer::push: frame indices must increase");
  }
  if (capacity_ == 0) {
    ++evicted_;
    return;
  }
  entries_.push_front({std::move(keys), std::move(values), frame});
  while (entries_.size() > capacity_) {
    entries_.pop_back();
    ++evicted_;
  }
}

LocalAttentionResult local_attention(const FeatureGrid& query, const RingBuffer& buffer, std::size_t lambda,
                                     Real beta, std::size_t cold_channels) {
  require(lambda % 2 == 1, "local_attention: lambda must be odd");
  require(beta > 0, "local_attention: beta must be positive");
  if (buffer.empty()) {
    return {FeatureGrid(query.height(), query.width(), cold_channels), true};
  }
  const FeatureGrid& head = buffer[0].keys;
  require(query.same_spatial(head) && query.channels() == head.channels(),
          "local_attention: query shape does not match the buffered keys");
  const std::size_t h = query.height();
  const std::size_t w = query.width();
  const std::size_t ck = query.channels();
  const std::size_t cv = buffer[0].values.channels();
  const auto radius = static_cast<std::ptrdiff_t>(lambda / 2);

  FeatureGrid out(h, w, cv);
  std::vector<Real> logits;
  std::vector<const Real*> gathered;
  logits.reserve(buffer.size() * lambda * lambda);
  gathered.reserve(logits.capacity());

  for (std::size_t y = 0; y < h; ++y) {
    const std::size_t y0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(y) - radius));
    const std::size_t y1 = std::min(h, y + static_cast<std::size_t>(radius) + 1);
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t x0 =
          static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(x) - radius));
      const std::size_t x1 = std::min(w, x + static_cast<std::size_t>(radius) + 1);
      const auto q = query.vec(y, x);
      logits.clear();
      gathered.clear();
      for (std::size_t e = buffer.size(); e-- > 0;) {
        const auto& entry = buffer[e];
        for (std::size_t yy = y0; yy < y1; ++yy) {
          for (std::size_t xx = x0; xx < x1; ++xx) {
            const auto k = entry.keys.vec(yy, xx);
            Real acc = 0;
            for (std::size_t c = 0; c < ck; ++c) acc += q[c] * k[c];
            logits.push_back(acc / beta);
            gathered.push_back(entry.values.vec(yy, xx).data());
          }
        }
      }
      const Real peak = *std::max_element(logits.begin(), logits.end());
      Real sum = 0;
      for (Real& l : logits) {
        const Real z = l - peak;
        l = z < kExpUnderflow ? Real{0} : std::exp(z);
        sum += l;
      }
      auto dst = out.vec(y * w + x);
      for (std::size_t i = 0; i < logits.size(); ++i) {
        if (logits[i] == Real{0}) continue;
        const Real wgt = logits[i] / sum;
        for (std::size_t c = 0; c < cv; ++c) dst[c] += wgt * gathered[i][c];
      }
    }
  }
  return {std::move(out), false};
}

}  // namespace memprop
