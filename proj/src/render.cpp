#include "memprop/render.hpp"

#include <algorithm>
#include <cmath>

namespace memprop {

namespace {

// D65 reference white.
constexpr double kXn = 0.95047;
constexpr double kYn = 1.0;
constexpr double kZn = 1.08883;
constexpr double kDelta = 6.0 / 29.0;

double srgb_decode(double c) { return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4); }

double srgb_encode(double v) { return v <= 0.0031308 ? 12.92 * v : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055; }

double lab_f(double t) {
  return t > kDelta * kDelta * kDelta ? std::cbrt(t) : t / (3.0 * kDelta * kDelta) + 4.0 / 29.0;
}

double lab_f_inv(double f) { return f > kDelta ? f * f * f : 3.0 * kDelta * kDelta * (f - 4.0 / 29.0); }

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

std::array<Real, 3> srgb_to_lab(std::uint8_t r8, std::uint8_t g8, std::uint8_t b8) noexcept {
  const double r = srgb_decode(r8 / 255.0);
  const double g = srgb_decode(g8 / 255.0);
  const double b = srgb_decode(b8 / 255.0);
  const double x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
  const double y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
  const double z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
  const double fx = lab_f(x / kXn);
  const double fy = lab_f(y / kYn);
  const double fz = lab_f(z / kZn);
  return {static_cast<Real>(116.0 * fy - 16.0), static_cast<Real>(500.0 * (fx - fy)),
          static_cast<Real>(200.0 * (fy - fz))};
}

std::array<std::uint8_t, 3> lab_to_srgb(Real l, Real a, Real b) noexcept {
  const double fy = (static_cast<double>(l) + 16.0) / 116.0;
  const double fx = fy + static_cast<double>(a) / 500.0;
  const double fz = fy - static_cast<double>(b) / 200.0;
  const double x = kXn * lab_f_inv(fx);
  const double y = kYn * lab_f_inv(fy);
  const double z = kZn * lab_f_inv(fz);
  const double rl = 3.2404542 * x - 1.5371385 * y - 0.4985314 * z;
  const double gl = -0.9692660 * x + 1.8760108 * y + 0.0415560 * z;
  const double bl = 0.0556434 * x - 0.2040259 * y + 1.0572252 * z;
  return {to_byte(srgb_encode(std::max(rl, 0.0))), to_byte(srgb_encode(std::max(gl, 0.0))),
          to_byte(srgb_encode(std::max(bl, 0.0)))};
}

LabFrame rgb_to_lab(const RgbImage& rgb) {
  LabFrame out{Plane(rgb.height, rgb.width), Plane(rgb.height, rgb.width), Plane(rgb.height, rgb.width)};
  for (std::size_t y = 0; y < rgb.height; ++y) {
    for (std::size_t x = 0; x < rgb.width; ++x) {
      const auto lab = srgb_to_lab(rgb.at(y, x, 0), rgb.at(y, x, 1), rgb.at(y, x, 2));
      out.l.at(y, x) = lab[0];
      out.a->at(y, x) = lab[1];
      out.b->at(y, x) = lab[2];
    }
  }
  return out;
}

RgbImage lab_to_rgb(const LabFrame& lab) {
  RgbImage out(lab.height(), lab.width());
  const bool color = lab.has_color();
  if (color) {
    require(lab.a->height == lab.height() && lab.a->width == lab.width() && lab.b->height == lab.height() &&
                lab.b->width == lab.width(),
            "lab_to_rgb: chrominance planes differ in size from luminance");
  }
  for (std::size_t y = 0; y < lab.height(); ++y) {
    for (std::size_t x = 0; x < lab.width(); ++x) {
      const auto px = lab_to_srgb(lab.l.at(y, x), color ? lab.a->at(y, x) : Real{0}, color ? lab.b->at(y, x) : Real{0});
      for (std::size_t c = 0; c < 3; ++c) out.at(y, x, c) = px[c];
    }
  }
  return out;
}

Plane luminance_from_gray(std::size_t height, std::size_t width, const std::vector<std::uint8_t>& gray) {
  require(gray.size() == height * width, "luminance_from_gray: pixel count does not match size");
  Plane p(height, width);
  for (std::size_t i = 0; i < gray.size(); ++i) p.values[i] = static_cast<Real>(gray[i]) * Real{100} / Real{255};
  return p;
}

FeatureGrid bilinear_upsample(const FeatureGrid& grid, std::size_t factor_y, std::size_t factor_x) {
  require(factor_y >= 1 && factor_x >= 1, "bilinear_upsample: factors must be positive");
  if (factor_y == 1 && factor_x == 1) return grid;
  const std::size_t h = grid.height() * factor_y;
  const std::size_t w = grid.width() * factor_x;
  const std::size_t c = grid.channels();
  FeatureGrid out(h, w, c);

  // Source coordinate of each output row/column: (i + 0.5) / factor - 0.5, clamped.
  struct Tap {
    std::size_t i0, i1;
    Real t;
  };
  const auto taps = [](std::size_t n_out, std::size_t n_in, std::size_t factor) {
    std::vector<Tap> out(n_out);
    for (std::size_t i = 0; i < n_out; ++i) {
      Real s = (static_cast<Real>(i) + Real{0.5}) / static_cast<Real>(factor) - Real{0.5};
      s = std::clamp(s, Real{0}, static_cast<Real>(n_in - 1));
      const auto i0 = static_cast<std::size_t>(std::floor(s));
      const std::size_t i1 = std::min(i0 + 1, n_in - 1);
      out[i] = {i0, i1, s - static_cast<Real>(i0)};
    }
    return out;
  };
  const auto ty = taps(h, grid.height(), factor_y);
  const auto tx = taps(w, grid.width(), factor_x);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const auto& [y0, y1, fy] = ty[y];
      const auto& [x0, x1, fx] = tx[x];
      const auto v00 = grid.vec(y0, x0), v01 = grid.vec(y0, x1), v10 = grid.vec(y1, x0), v11 = grid.vec(y1, x1);
      auto dst = out.vec(y * w + x);
      for (std::size_t k = 0; k < c; ++k) {
        const Real top = v00[k] + (v01[k] - v00[k]) * fx;
        const Real bottom = v10[k] + (v11[k] - v10[k]) * fx;
        dst[k] = top + (bottom - top) * fy;
      }
    }
  }
  return out;
}

FeatureGrid cell_mean(std::span<const Plane* const> planes, std::size_t stride) {
  require(!planes.empty() && stride >= 1, "cell_mean: need at least one plane and a positive stride");
  const std::size_t h = planes.front()->height;
  const std::size_t w = planes.front()->width;
  require(h % stride == 0 && w % stride == 0, "cell_mean: plane size must be a multiple of the stride");
  const std::size_t gh = h / stride;
  const std::size_t gw = w / stride;
  FeatureGrid out(gh, gw, planes.size());
  const Real area = static_cast<Real>(stride * stride);
  for (std::size_t c = 0; c < planes.size(); ++c) {
    const Plane& p = *planes[c];
    require(p.height == h && p.width == w, "cell_mean: planes differ in size");
    for (std::size_t cy = 0; cy < gh; ++cy) {
      for (std::size_t cx = 0; cx < gw; ++cx) {
        Real acc = 0;
        for (std::size_t y = cy * stride; y < (cy + 1) * stride; ++y)
          for (std::size_t x = cx * stride; x < (cx + 1) * stride; ++x) acc += p.at(y, x);
        out.at(cy, cx, c) = acc / area;
      }
    }
  }
  return out;
}

FeatureGrid fuse_decode_unclamped(const FeatureGrid& v, const FeatureGrid& la, std::size_t target_height,
                                  std::size_t target_width, const Projection& head) {
  require(head.out_channels == 2, "fuse_decode: head must produce two chrominance channels");
  require(v.height() > 0 && v.width() > 0, "fuse_decode: empty value grid");
  require(target_height % v.height() == 0 && target_width % v.width() == 0,
          "fuse_decode: upsampling ratio is not an integer");
  FeatureGrid enhanced = v;
  if (la.channels() != 0) {
    require(la.same_shape(v), "fuse_decode: local attention output differs in shape from the readout");
    auto dst = enhanced.values();
    const auto src = la.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
  const FeatureGrid ab = apply_projection(enhanced, head);
  return bilinear_upsample(ab, target_height / v.height(), target_width / v.width());
}

AbPlanes fuse_decode(const FeatureGrid& v, const FeatureGrid& la, std::size_t target_height, std::size_t target_width,
                     const Projection& head) {
  const FeatureGrid up = fuse_decode_unclamped(v, la, target_height, target_width, head);
  AbPlanes out{Plane(target_height, target_width), Plane(target_height, target_width)};
  for (std::size_t p = 0; p < up.locations(); ++p) {
    out.a.values[p] = std::clamp(up.vec(p)[0], kAbMin, kAbMax);
    out.b.values[p] = std::clamp(up.vec(p)[1], kAbMin, kAbMax);
  }
  return out;
}

}  // namespace memprop
