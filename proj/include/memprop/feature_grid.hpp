#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "memprop/core.hpp"
#include "memprop/numkernel.hpp"

namespace memprop {

/// Single-channel image plane, row-major.
struct Plane {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<Real> values;

  Plane() = default;
  Plane(std::size_t h, std::size_t w, Real fill = Real{0}) : height(h), width(w), values(h * w, fill) {}

  Real& at(std::size_t y, std::size_t x) noexcept { return values[y * width + x]; }
  Real at(std::size_t y, std::size_t x) const noexcept { return values[y * width + x]; }

  friend bool operator==(const Plane&, const Plane&) = default;
};

/// Height x width grid of feature vectors stored pixel-major: the channels of
/// one location are contiguous, so each location is directly a matrix column.
class FeatureGrid {
 public:
  FeatureGrid() = default;
  FeatureGrid(std::size_t height, std::size_t width, std::size_t channels, Real fill = Real{0});
  FeatureGrid(std::size_t height, std::size_t width, std::size_t channels, std::vector<Real> values);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t channels() const noexcept { return channels_; }
  std::size_t locations() const noexcept { return height_ * width_; }

  Real& at(std::size_t y, std::size_t x, std::size_t c) noexcept { return values_[(y * width_ + x) * channels_ + c]; }
  Real at(std::size_t y, std::size_t x, std::size_t c) const noexcept {
    return values_[(y * width_ + x) * channels_ + c];
  }

  std::span<Real> vec(std::size_t location) noexcept { return {values_.data() + location * channels_, channels_}; }
  std::span<const Real> vec(std::size_t location) const noexcept {
    return {values_.data() + location * channels_, channels_};
  }
  std::span<const Real> vec(std::size_t y, std::size_t x) const noexcept { return vec(y * width_ + x); }

  std::span<Real> values() noexcept { return values_; }
  std::span<const Real> values() const noexcept { return values_; }

  bool same_shape(const FeatureGrid& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }
  bool same_spatial(const FeatureGrid& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_;
  }
  bool all_finite() const noexcept;

  /// Channels x locations matrix view (the flattened form used by the attention equations).
  Mat to_matrix() const;
  static FeatureGrid from_matrix(const Mat& m, std::size_t height, std::size_t width);

  friend bool operator==(const FeatureGrid&, const FeatureGrid&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t channels_ = 0;
  std::vector<Real> values_;
};

}  // namespace memprop
