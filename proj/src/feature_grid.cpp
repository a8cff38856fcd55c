#include "memprop/feature_grid.hpp"

#include <algorithm>
#include <cmath>

namespace memprop {

FeatureGrid::FeatureGrid(std::size_t height, std::size_t width, std::size_t channels, Real fill)
    : height_(height), width_(width), channels_(channels), values_(height * width * channels, fill) {}

FeatureGrid::FeatureGrid(std::size_t height, std::size_t width, std::size_t channels, std::vector<Real> values)
    : height_(height), width_(width), channels_(channels), values_(std::move(values)) {
  require(values_.size() == height_ * width_ * channels_, "FeatureGrid: value count does not match shape");
}

bool FeatureGrid::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](Real v) { return std::isfinite(v); });
}

Mat FeatureGrid::to_matrix() const {
  Mat m(channels_, locations());
  for (std::size_t p = 0; p < locations(); ++p)
    for (std::size_t c = 0; c < channels_; ++c) m(c, p) = values_[p * channels_ + c];
  return m;
}

FeatureGrid FeatureGrid::from_matrix(const Mat& m, std::size_t height, std::size_t width) {
  require(m.cols() == height * width, "FeatureGrid::from_matrix: column count does not match spatial size");
  FeatureGrid g(height, width, m.rows());
  for (std::size_t p = 0; p < g.locations(); ++p)
    for (std::size_t c = 0; c < m.rows(); ++c) g.values_[p * m.rows() + c] = m(c, p);
  return g;
}

}  // namespace memprop
