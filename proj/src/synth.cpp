#include <algorithm>
#include <cmath>
#include <cstdint>

#include "memprop/pipeline.hpp"

namespace memprop {

namespace {

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

double lattice_value(std::uint64_t seed, std::uint64_t channel, std::uint64_t octave, std::uint64_t iy,
                     std::uint64_t ix) {
  const std::uint64_t key =
      (seed * 0x9E3779B97F4A7C15ull) ^ ((channel << 48) | (octave << 40) | (iy << 20) | ix);
  return static_cast<double>(splitmix64(key) >> 11) * 0x1.0p-53;
}

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

// Periodic value noise in [0, 1): two octaves on lattices of 16 and 8 pixels.
Plane value_noise(std::size_t h, std::size_t w, std::uint64_t seed, std::uint64_t channel) {
  constexpr std::size_t kSpacing[2] = {16, 8};
  constexpr double kAmp[2] = {0.65, 0.35};
  Plane out(h, w);
  for (std::uint64_t o = 0; o < 2; ++o) {
    const std::size_t s = kSpacing[o];
    const std::size_t gy = h / s;
    const std::size_t gx = w / s;
    for (std::size_t y = 0; y < h; ++y) {
      const std::size_t iy = y / s;
      const double ty = smoothstep(static_cast<double>(y % s) / static_cast<double>(s));
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t ix = x / s;
        const double tx = smoothstep(static_cast<double>(x % s) / static_cast<double>(s));
        const double v00 = lattice_value(seed, channel, o, iy, ix);
        const double v01 = lattice_value(seed, channel, o, iy, (ix + 1) % gx);
        const double v10 = lattice_value(seed, channel, o, (iy + 1) % gy, ix);
        const double v11 = lattice_value(seed, channel, o, (iy + 1) % gy, (ix + 1) % gx);
        const double top = v00 + (v01 - v00) * tx;
        const double bottom = v10 + (v11 - v10) * tx;
        out.at(y, x) += static_cast<Real>(kAmp[o] * (top + (bottom - top) * ty));
      }
    }
  }
  return out;
}

Plane shifted(const Plane& base, std::size_t shift) {
  Plane out(base.height, base.width);
  const std::size_t w = base.width;
  const std::size_t s = shift % w;
  for (std::size_t y = 0; y < base.height; ++y) {
    const auto src = base.values.begin() + static_cast<std::ptrdiff_t>(y * w);
    const auto dst = out.values.begin() + static_cast<std::ptrdiff_t>(y * w);
    std::rotate_copy(src, src + static_cast<std::ptrdiff_t>(s), src + static_cast<std::ptrdiff_t>(w), dst);
  }
  return out;
}

}  // namespace

SynthKind parse_synth_kind(const std::string& text) {
  if (text == "translate") return SynthKind::translate;
  if (text == "rotate_palette") return SynthKind::rotate_palette;
  if (text == "static") return SynthKind::still;
  throw ContractViolation("unknown synthetic video kind '" + text + "'");
}

SynthVideo::SynthVideo(SynthOptions options) : options_(options) {
  require(options_.height % 16 == 0 && options_.width % 16 == 0 && options_.height > 0 && options_.width > 0,
          "SynthVideo: frame size must be a positive multiple of 16");
  require(options_.frames >= 1, "SynthVideo: need at least one frame");
  const std::size_t h = options_.height, w = options_.width;
  base_l_ = value_noise(h, w, options_.seed, 0);
  base_a_ = value_noise(h, w, options_.seed, 1);
  base_b_ = value_noise(h, w, options_.seed, 2);
  for (std::size_t i = 0; i < h * w; ++i) {
    base_l_.values[i] = Real{20} + Real{60} * base_l_.values[i];
    base_a_.values[i] = Real{50} * (Real{2} * base_a_.values[i] - Real{1});
    base_b_.values[i] = Real{50} * (Real{2} * base_b_.values[i] - Real{1});
  }
}

std::size_t SynthVideo::shift(std::size_t frame) const noexcept {
  if (options_.kind != SynthKind::translate) return 0;
  return ((frame - 1) * options_.offset) % options_.width;
}

LabFrame SynthVideo::truth(std::size_t frame) const {
  require(frame >= 1 && frame <= options_.frames, "SynthVideo: frame index out of range");
  const std::size_t s = shift(frame);
  LabFrame out{shifted(base_l_, s), shifted(base_a_, s), shifted(base_b_, s)};
  if (options_.kind == SynthKind::rotate_palette) {
    const double theta = static_cast<double>(frame - 1) * options_.hue_step;
    const double c = std::cos(theta), sn = std::sin(theta);
    for (std::size_t i = 0; i < out.l.values.size(); ++i) {
      const double a = out.a->values[i], b = out.b->values[i];
      out.a->values[i] = static_cast<Real>(c * a - sn * b);
      out.b->values[i] = static_cast<Real>(sn * a + c * b);
    }
  }
  return out;
}

LabFrame SynthVideo::gray(std::size_t frame) const {
  return LabFrame::grayscale(truth(frame).l);
}

}  // namespace memprop
