#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "memprop/feature_grid.hpp"

namespace memprop {

/// Channel projection standing in for the learned 3x3 convolutions.
struct Projection {
  enum class Kind { identity, linear, conv3x3 };

  Kind kind = Kind::identity;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  /// linear: out x in, row-major. conv3x3: [out][in][ky][kx].
  std::vector<Real> weights;
  std::uint64_t seed = 0;

  static Projection identity(std::size_t channels);
  static Projection linear(const Mat& weights);
  /// Linear map keeping the first `out` channels, multiplied by `gain`.
  static Projection select_first(std::size_t in, std::size_t out, Real gain = Real{1});
  static Projection conv3x3(std::size_t in, std::size_t out, std::vector<Real> weights);
  /// 3x3 kernel with a single centered 1 per channel.
  static Projection delta_conv3x3(std::size_t channels);
  /// Linear projection with orthonormal rows (or columns when out > in), reproducible from `seed`.
  static Projection random_orthogonal(std::size_t in, std::size_t out, std::uint64_t seed);
  static Projection random_conv3x3(std::size_t in, std::size_t out, std::uint64_t seed);
};

FeatureGrid apply_projection(const FeatureGrid& x, const Projection& p);

struct ExtractorSpec {
  enum class Kind { synthetic, file };

  Kind kind = Kind::synthetic;
  std::size_t stride = 16;
  std::size_t channels = 8;
  /// Coarsest-first offset into the statistics pyramid; the global stream starts one level up.
  std::size_t first_level = 0;
  /// Multiplies every emitted feature. Larger values sharpen L2 softmax matches.
  Real scale = Real{1};
  /// File extractor only: path with an `{idx}` (or `{idx:N}` zero-padded) placeholder.
  std::string path_template;
};

/// Per-frame feature grid.
///
/// The synthetic extractor computes, for every stride x stride cell and for
/// each pyramid level k = first_level, first_level + 1, ...:
///   mean, standard deviation, mean horizontal gradient, mean vertical gradient
/// over a window of `stride` level-k pixels centered on the cell, where level k
/// is the (edge-padded) plane box-downscaled by 2^k. Channels are filled four
/// per level and truncated or zero-padded to `channels`.
///
/// The file extractor reads `path_template` with `frame_index` substituted.
FeatureGrid extract(const Plane& plane, const ExtractorSpec& spec, std::size_t frame_index);

/// Raw feature file: four little-endian uint32 (height, width, channels,
/// frame_index) followed by height*width*channels little-endian float32 in
/// pixel-major order.
FeatureGrid read_feature_file(const std::filesystem::path& path, std::size_t expected_frame);
void write_feature_file(const std::filesystem::path& path, const FeatureGrid& grid, std::size_t frame_index);

std::string expand_index_template(const std::string& tmpl, std::size_t index);

struct FusionProjections {
  Projection query;
  Projection key;
  Projection value;
};

/// Cross-channel fusion of a global stream `g` and a local stream `l`:
/// reshape(softmax(Q K^T / alpha) V) with Q = P_q(g), K = P_k(l), V = P_v(l)
/// flattened to channels x locations. The affinity is channels x channels.
FeatureGrid pvgfe_fuse(const FeatureGrid& g, const FeatureGrid& l, const FusionProjections& projections, Real alpha);

}  // namespace memprop
