#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "memprop/featex.hpp"
#include "memprop/feature_grid.hpp"

namespace memprop {

/// 8-bit sRGB image, interleaved RGB.
struct RgbImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(std::size_t h, std::size_t w) : height(h), width(w), pixels(h * w * 3, 0) {}

  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c) noexcept { return pixels[(y * width + x) * 3 + c]; }
  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const noexcept {
    return pixels[(y * width + x) * 3 + c];
  }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

/// CIE LAB frame: luminance in [0, 100], optional chrominance in [-128, 127].
struct LabFrame {
  Plane l;
  std::optional<Plane> a;
  std::optional<Plane> b;

  std::size_t height() const noexcept { return l.height; }
  std::size_t width() const noexcept { return l.width; }
  bool has_color() const noexcept { return a.has_value() && b.has_value(); }

  static LabFrame grayscale(Plane luminance) { return LabFrame{std::move(luminance), std::nullopt, std::nullopt}; }
};

inline constexpr Real kAbMin = Real{-128};
inline constexpr Real kAbMax = Real{127};

/// sRGB (D65) to float CIELAB.
std::array<Real, 3> srgb_to_lab(std::uint8_t r, std::uint8_t g, std::uint8_t b) noexcept;
std::array<std::uint8_t, 3> lab_to_srgb(Real l, Real a, Real b) noexcept;

LabFrame rgb_to_lab(const RgbImage& rgb);
/// Grayscale frames render with a = b = 0.
RgbImage lab_to_rgb(const LabFrame& lab);

/// Luminance frame from an 8-bit gray plane: L = v / 255 * 100.
Plane luminance_from_gray(std::size_t height, std::size_t width, const std::vector<std::uint8_t>& gray);

/// Half-pixel-centred bilinear upsampling with edge clamping.
FeatureGrid bilinear_upsample(const FeatureGrid& grid, std::size_t factor_y, std::size_t factor_x);

/// Mean of each stride x stride cell of one or more planes, one channel per plane.
FeatureGrid cell_mean(std::span<const Plane* const> planes, std::size_t stride);

/// head(v + la) upsampled to target_height x target_width, before clamping.
/// `la` may have zero channels (cold start), in which case only `v` is decoded.
FeatureGrid fuse_decode_unclamped(const FeatureGrid& v, const FeatureGrid& la, std::size_t target_height,
                                  std::size_t target_width, const Projection& head);

struct AbPlanes {
  Plane a;
  Plane b;
};

/// fuse_decode_unclamped, clamped to the valid chrominance range.
AbPlanes fuse_decode(const FeatureGrid& v, const FeatureGrid& la, std::size_t target_height, std::size_t target_width,
                     const Projection& head);

}  // namespace memprop
