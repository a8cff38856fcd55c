#include <doctest.h>

#include <random>

#include "memprop/render.hpp"
#include "oracle.hpp"

using namespace memprop;

namespace {

// Textbook sRGB -> XYZ (D65) -> CIELAB, written out independently.
std::array<double, 3> reference_lab(int r, int g, int b) {
  auto lin = [](int v) {
    const double c = v / 255.0;
    return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
  };
  const double R = lin(r), G = lin(g), B = lin(b);
  const double X = 0.4124564 * R + 0.3575761 * G + 0.1804375 * B;
  const double Y = 0.2126729 * R + 0.7151522 * G + 0.0721750 * B;
  const double Z = 0.0193339 * R + 0.1191920 * G + 0.9503041 * B;
  auto f = [](double t) { return t > 216.0 / 24389.0 ? std::cbrt(t) : (24389.0 / 27.0 * t + 16.0) / 116.0; };
  const double fx = f(X / 0.95047), fy = f(Y / 1.0), fz = f(Z / 1.08883);
  return {116 * fy - 16, 500 * (fx - fy), 200 * (fy - fz)};
}

}  // namespace

TEST_CASE("srgb_to_lab: reference colours") {
  const auto white = srgb_to_lab(255, 255, 255);
  CHECK(white[0] == doctest::Approx(100.0).epsilon(1e-3));
  CHECK(std::abs(white[1]) < 0.01);
  CHECK(std::abs(white[2]) < 0.01);
  const auto black = srgb_to_lab(0, 0, 0);
  CHECK(black[0] == 0.0);
  CHECK(std::abs(black[1]) < 1e-9);
  CHECK(std::abs(black[2]) < 1e-9);

  std::mt19937_64 rng(51);
  for (int i = 0; i < 500; ++i) {
    const int r = static_cast<int>(rng() % 256), g = static_cast<int>(rng() % 256), b = static_cast<int>(rng() % 256);
    const auto got = srgb_to_lab(static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g), static_cast<std::uint8_t>(b));
    const auto ref = reference_lab(r, g, b);
    for (int c = 0; c < 3; ++c) CHECK(std::abs(got[c] - ref[c]) < 0.01);
  }
}

TEST_CASE("rgb -> lab -> rgb round trip is within 1 per channel at stride 7") {
  int worst = 0;
  for (int r = 0; r < 256; r += 7)
    for (int g = 0; g < 256; g += 7)
      for (int b = 0; b < 256; b += 7) {
        const auto lab = srgb_to_lab(static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g), static_cast<std::uint8_t>(b));
        const auto back = lab_to_srgb(lab[0], lab[1], lab[2]);
        worst = std::max({worst, std::abs(back[0] - r), std::abs(back[1] - g), std::abs(back[2] - b)});
      }
  CHECK(worst <= 1);
  const auto gray = srgb_to_lab(128, 128, 128);
  const auto back = lab_to_srgb(gray[0], gray[1], gray[2]);
  CHECK(std::abs(back[0] - 128) <= 1);
  CHECK(std::abs(back[1] - 128) <= 1);
  CHECK(std::abs(back[2] - 128) <= 1);
}

TEST_CASE("frame conversions and grayscale rendering") {
  RgbImage img(2, 3);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(i * 13);
  const LabFrame lab = rgb_to_lab(img);
  CHECK(lab.has_color());
  CHECK(lab.height() == 2);
  CHECK(lab_to_rgb(lab) == img);

  const LabFrame gray = LabFrame::grayscale(Plane(1, 1, 50.0));
  const RgbImage g = lab_to_rgb(gray);
  CHECK(g.pixels[0] == g.pixels[1]);
  CHECK(g.pixels[1] == g.pixels[2]);

  const Plane l = luminance_from_gray(1, 2, {0, 255});
  CHECK(l.at(0, 0) == 0.0);
  CHECK(l.at(0, 1) == doctest::Approx(100.0));
}

TEST_CASE("bilinear_upsample matches hand-evaluated weights") {
  FeatureGrid g(2, 2, 1);
  g.at(0, 0, 0) = 0;
  g.at(0, 1, 0) = 4;
  g.at(1, 0, 0) = 8;
  g.at(1, 1, 0) = 12;
  const FeatureGrid up = bilinear_upsample(g, 2, 2);
  // Output row/col 1 samples source coordinate 0.25, row/col 2 samples 0.75, the edges clamp.
  const double expect[4][4] = {{0, 1, 3, 4}, {2, 3, 5, 6}, {6, 7, 9, 10}, {8, 9, 11, 12}};
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) CHECK(up.at(y, x, 0) == doctest::Approx(expect[y][x]));

  std::mt19937_64 rng(52);
  const FeatureGrid r = oracle::random_grid(rng, 3, 5, 2);
  const FeatureGrid ru = bilinear_upsample(r, 4, 3);
  CHECK(ru.height() == 12);
  CHECK(ru.width() == 15);
  for (std::size_t y = 0; y < 12; ++y)
    for (std::size_t x = 0; x < 15; ++x)
      for (std::size_t c = 0; c < 2; ++c) CHECK(ru.at(y, x, c) == doctest::Approx(oracle::bilinear(r, c, 4, 3, y, x)));
  CHECK(bilinear_upsample(r, 1, 1) == r);
}

TEST_CASE("bilinear_upsample preserves constants and is monotone between samples") {
  for (Real v : bilinear_upsample(FeatureGrid(3, 4, 2, -7.25), 16, 16).values()) CHECK(v == doctest::Approx(-7.25));
  FeatureGrid ramp(1, 6, 1);
  const double samples[6] = {0, 2, 3, 10, 11, 40};
  for (std::size_t x = 0; x < 6; ++x) ramp.at(0, x, 0) = samples[x];
  const FeatureGrid up = bilinear_upsample(ramp, 1, 8);
  for (std::size_t x = 1; x < up.width(); ++x) CHECK(up.at(0, x, 0) >= up.at(0, x - 1, 0));
}

TEST_CASE("cell_mean averages stride cells per plane") {
  Plane a(4, 4), b(4, 4, 2.0);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) a.at(y, x) = static_cast<Real>(y * 4 + x);
  const Plane* planes[] = {&a, &b};
  const FeatureGrid g = cell_mean(planes, 2);
  CHECK(g.height() == 2);
  CHECK(g.channels() == 2);
  CHECK(g.at(0, 0, 0) == doctest::Approx(2.5));
  CHECK(g.at(1, 1, 0) == doctest::Approx(12.5));
  CHECK(g.at(1, 0, 1) == doctest::Approx(2.0));
}

TEST_CASE("fuse_decode: identity case, linearity, clamping, ratio errors") {
  std::mt19937_64 rng(53);
  const FeatureGrid v = oracle::random_grid(rng, 4, 4, 2, -100, 100);
  const FeatureGrid zero(4, 4, 2);
  const AbPlanes same = fuse_decode(v, zero, 4, 4, Projection::identity(2));
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) {
      CHECK(same.a.at(y, x) == v.at(y, x, 0));
      CHECK(same.b.at(y, x) == v.at(y, x, 1));
    }
  const AbPlanes cold = fuse_decode(v, FeatureGrid(4, 4, 0), 4, 4, Projection::identity(2));
  CHECK(cold.a == same.a);

  const FeatureGrid c(2, 2, 3, 1.5);
  const AbPlanes flat = fuse_decode(c, c, 32, 32, Projection::select_first(3, 2));
  for (Real x : flat.a.values) CHECK(x == doctest::Approx(3.0));

  const FeatureGrid la = oracle::random_grid(rng, 4, 4, 2, -100, 100);
  FeatureGrid v2 = v, la2 = la;
  for (auto& x : v2.values()) x *= 3.0;
  for (auto& x : la2.values()) x *= 3.0;
  const FeatureGrid base = fuse_decode_unclamped(v, la, 16, 8, Projection::identity(2));
  const FeatureGrid scaled = fuse_decode_unclamped(v2, la2, 16, 8, Projection::identity(2));
  for (std::size_t i = 0; i < base.values().size(); ++i) CHECK(scaled.values()[i] == doctest::Approx(3 * base.values()[i]));

  const AbPlanes clamped = fuse_decode(v2, la2, 16, 8, Projection::identity(2));
  for (Real x : clamped.a.values) {
    CHECK(x >= kAbMin);
    CHECK(x <= kAbMax);
  }

  CHECK_THROWS_AS(fuse_decode(v, zero, 10, 8, Projection::identity(2)), ContractViolation);
  CHECK_THROWS_AS(fuse_decode(v, FeatureGrid(3, 4, 2), 4, 4, Projection::identity(2)), ContractViolation);
  CHECK_THROWS_AS(fuse_decode(v, zero, 4, 4, Projection::identity(3)), ContractViolation);
}
