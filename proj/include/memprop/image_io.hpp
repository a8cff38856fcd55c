#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "memprop/render.hpp"

namespace memprop {

struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;

  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

/// Decoded 8-bit image with either one (gray) or three (RGB) channels.
struct DecodedImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> pixels;
};

/// PNG (any 8-bit layout) or binary PPM (P6) / PGM (P5), chosen by extension.
DecodedImage read_image(const std::filesystem::path& path);

RgbImage read_rgb(const std::filesystem::path& path);
/// One-channel files scale to L = v / 255 * 100; colour files use their CIELAB L.
Plane read_luminance(const std::filesystem::path& path);

/// Writes PNG or PPM depending on the extension (.ppm -> P6, anything else PNG).
void write_rgb(const std::filesystem::path& path, const RgbImage& image);
/// Writes PNG or PGM depending on the extension.
void write_gray(const std::filesystem::path& path, const GrayImage& image);

GrayImage gray_from_luminance(const Plane& l);

/// Zero-padded numeric frame files (e.g. 00001.png) in a directory, or files
/// matching a single-`*` pattern such as frames/*.png, sorted by their number.
std::vector<std::filesystem::path> discover_frames(const std::filesystem::path& dir_or_pattern);

}  // namespace memprop
