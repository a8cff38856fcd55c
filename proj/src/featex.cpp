#include "memprop/featex.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <regex>

namespace memprop {

Projection Projection::identity(std::size_t channels) {
  Projection p;
  p.kind = Kind::identity;
  p.in_channels = channels;
  p.out_channels = channels;
  return p;
}

Projection Projection::linear(const Mat& weights) {
  Projection p;
  p.kind = Kind::linear;
  p.out_channels = weights.rows();
  p.in_channels = weights.cols();
  p.weights.assign(weights.data().begin(), weights.data().end());
  return p;
}

Projection Projection::select_first(std::size_t in, std::size_t out, Real gain) {
  require(out <= in, "Projection::select_first: cannot select more channels than exist");
  Mat w(out, in);
  for (std::size_t o = 0; o < out; ++o) w(o, o) = gain;
  return linear(w);
}

Projection Projection::conv3x3(std::size_t in, std::size_t out, std::vector<Real> weights) {
  require(weights.size() == in * out * 9, "Projection::conv3x3: weight count must be out*in*9");
  Projection p;
  p.kind = Kind::conv3x3;
  p.in_channels = in;
  p.out_channels = out;
  p.weights = std::move(weights);
  return p;
}

Projection Projection::delta_conv3x3(std::size_t channels) {
  std::vector<Real> w(channels * channels * 9, Real{0});
  for (std::size_t c = 0; c < channels; ++c) w[((c * channels + c) * 3 + 1) * 3 + 1] = Real{1};
  return conv3x3(channels, channels, std::move(w));
}

Projection Projection::random_orthogonal(std::size_t in, std::size_t out, std::uint64_t seed) {
  const std::size_t n = std::max(in, out);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> basis(n, std::vector<double>(n));
  for (auto& row : basis)
    for (double& v : row) v = normal(rng);
  // Modified Gram-Schmidt over the rows.
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      double dot = 0;
      for (std::size_t c = 0; c < n; ++c) dot += basis[i][c] * basis[j][c];
      for (std::size_t c = 0; c < n; ++c) basis[i][c] -= dot * basis[j][c];
    }
    double norm = 0;
    for (double v : basis[i]) norm += v * v;
    norm = std::sqrt(norm);
    for (double& v : basis[i]) v /= norm;
  }
  Mat w(out, in);
  for (std::size_t o = 0; o < out; ++o)
    for (std::size_t c = 0; c < in; ++c) w(o, c) = static_cast<Real>(basis[o][c]);
  Projection p = linear(w);
  p.seed = seed;
  return p;
}

Projection Projection::random_conv3x3(std::size_t in, std::size_t out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(9.0 * static_cast<double>(in)));
  std::vector<Real> w(in * out * 9);
  for (Real& v : w) v = static_cast<Real>(normal(rng));
  Projection p = conv3x3(in, out, std::move(w));
  p.seed = seed;
  return p;
}

FeatureGrid apply_projection(const FeatureGrid& x, const Projection& p) {
  require(x.channels() == p.in_channels, "apply_projection: input channels do not match the projection");
  switch (p.kind) {
    case Projection::Kind::identity:
      return x;
    case Projection::Kind::linear: {
      FeatureGrid out(x.height(), x.width(), p.out_channels);
      for (std::size_t loc = 0; loc < x.locations(); ++loc) {
        const auto in = x.vec(loc);
        auto dst = out.vec(loc);
        for (std::size_t o = 0; o < p.out_channels; ++o) {
          Real acc = 0;
          const Real* w = p.weights.data() + o * p.in_channels;
          for (std::size_t c = 0; c < p.in_channels; ++c) acc += w[c] * in[c];
          dst[o] = acc;
        }
      }
      return out;
    }
    case Projection::Kind::conv3x3: {
      const auto h = static_cast<std::ptrdiff_t>(x.height());
      const auto wd = static_cast<std::ptrdiff_t>(x.width());
      FeatureGrid out(x.height(), x.width(), p.out_channels);
      for (std::ptrdiff_t y = 0; y < h; ++y) {
        for (std::ptrdiff_t xx = 0; xx < wd; ++xx) {
          auto dst = out.vec(static_cast<std::size_t>(y * wd + xx));
          for (std::ptrdiff_t ky = 0; ky < 3; ++ky) {
            const std::ptrdiff_t sy = y + ky - 1;
            if (sy < 0 || sy >= h) continue;
            for (std::ptrdiff_t kx = 0; kx < 3; ++kx) {
              const std::ptrdiff_t sx = xx + kx - 1;
              if (sx < 0 || sx >= wd) continue;
              const auto in = x.vec(static_cast<std::size_t>(sy * wd + sx));
              for (std::size_t o = 0; o < p.out_channels; ++o) {
                Real acc = 0;
                for (std::size_t c = 0; c < p.in_channels; ++c)
                  acc += p.weights[((o * p.in_channels + c) * 3 + static_cast<std::size_t>(ky)) * 3 +
                                   static_cast<std::size_t>(kx)] *
                         in[c];
                dst[o] += acc;
              }
            }
          }
        }
      }
      return out;
    }
  }
  throw ContractViolation("apply_projection: unknown projection kind");
}

namespace {

Plane pad_to_multiple(const Plane& src, std::size_t stride) {
  const std::size_t gh = (src.height + stride - 1) / stride;
  const std::size_t gw = (src.width + stride - 1) / stride;
  if (gh * stride == src.height && gw * stride == src.width) return src;
  Plane out(gh * stride, gw * stride);
  for (std::size_t y = 0; y < out.height; ++y)
    for (std::size_t x = 0; x < out.width; ++x)
      out.at(y, x) = src.at(std::min(y, src.height - 1), std::min(x, src.width - 1));
  return out;
}

Plane box_downscale(const Plane& src, std::size_t factor) {
  if (factor == 1) return src;
  Plane out(src.height / factor, src.width / factor);
  const Real area = static_cast<Real>(factor * factor);
  for (std::size_t y = 0; y < out.height; ++y) {
    for (std::size_t x = 0; x < out.width; ++x) {
      Real acc = 0;
      for (std::size_t dy = 0; dy < factor; ++dy)
        for (std::size_t dx = 0; dx < factor; ++dx) acc += src.at(y * factor + dy, x * factor + dx);
      out.at(y, x) = acc / area;
    }
  }
  return out;
}

struct Window {
  std::size_t y0, y1, x0, x1;  // half-open
};

Window centered_window(std::size_t cy, std::size_t cx, std::size_t stride, std::size_t level, const Plane& img) {
  const auto half = static_cast<std::ptrdiff_t>(stride / 2);
  const auto center_y = static_cast<std::ptrdiff_t>((cy * stride + stride / 2) >> level);
  const auto center_x = static_cast<std::ptrdiff_t>((cx * stride + stride / 2) >> level);
  const auto clip = [](std::ptrdiff_t v, std::size_t hi) {
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(v, 0, static_cast<std::ptrdiff_t>(hi)));
  };
  const auto s = static_cast<std::ptrdiff_t>(stride);
  return {clip(center_y - half, img.height), clip(center_y - half + s, img.height), clip(center_x - half, img.width),
          clip(center_x - half + s, img.width)};
}

std::array<Real, 4> window_stats(const Plane& img, const Window& w) {
  std::array<Real, 4> st{0, 0, 0, 0};
  if (w.y1 <= w.y0 || w.x1 <= w.x0) return st;
  const auto count = static_cast<Real>((w.y1 - w.y0) * (w.x1 - w.x0));
  Real sum = 0;
  for (std::size_t y = w.y0; y < w.y1; ++y)
    for (std::size_t x = w.x0; x < w.x1; ++x) sum += img.at(y, x);
  const Real mean = sum / count;
  Real var = 0;
  for (std::size_t y = w.y0; y < w.y1; ++y)
    for (std::size_t x = w.x0; x < w.x1; ++x) {
      const Real d = img.at(y, x) - mean;
      var += d * d;
    }
  st[0] = mean;
  st[1] = std::sqrt(var / count);

  if (w.x1 - w.x0 > 1) {
    Real gx = 0;
    for (std::size_t y = w.y0; y < w.y1; ++y)
      for (std::size_t x = w.x0; x + 1 < w.x1; ++x) gx += img.at(y, x + 1) - img.at(y, x);
    st[2] = gx / static_cast<Real>((w.y1 - w.y0) * (w.x1 - w.x0 - 1));
  }
  if (w.y1 - w.y0 > 1) {
    Real gy = 0;
    for (std::size_t y = w.y0; y + 1 < w.y1; ++y)
      for (std::size_t x = w.x0; x < w.x1; ++x) gy += img.at(y + 1, x) - img.at(y, x);
    st[3] = gy / static_cast<Real>((w.y1 - w.y0 - 1) * (w.x1 - w.x0));
  }
  return st;
}

FeatureGrid extract_synthetic(const Plane& plane, const ExtractorSpec& spec) {
  const Plane padded = pad_to_multiple(plane, spec.stride);
  const std::size_t gh = padded.height / spec.stride;
  const std::size_t gw = padded.width / spec.stride;
  FeatureGrid out(gh, gw, spec.channels);
  const std::size_t levels = (spec.channels + 3) / 4;
  for (std::size_t l = 0; l < levels; ++l) {
    const std::size_t level = spec.first_level + l;
    if (level >= 31) break;
    const Plane img = box_downscale(padded, std::size_t{1} << level);
    for (std::size_t cy = 0; cy < gh; ++cy) {
      for (std::size_t cx = 0; cx < gw; ++cx) {
        const auto st = window_stats(img, centered_window(cy, cx, spec.stride, level, img));
        for (std::size_t k = 0; k < 4; ++k) {
          const std::size_t ch = l * 4 + k;
          if (ch < spec.channels) out.at(cy, cx, ch) = st[k] * spec.scale;
        }
      }
    }
  }
  return out;
}

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
  }
  return v;
}

}  // namespace

std::string expand_index_template(const std::string& tmpl, std::size_t index) {
  static const std::regex placeholder(R"(\{idx(?::(\d+))?\})");
  std::string out;
  std::sregex_iterator it(tmpl.begin(), tmpl.end(), placeholder);
  std::size_t last = 0;
  for (; it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    out.append(tmpl, last, static_cast<std::size_t>(m.position()) - last);
    std::string digits = std::to_string(index);
    if (m[1].matched) {
      const auto width = static_cast<std::size_t>(std::stoul(m[1].str()));
      if (digits.size() < width) digits.insert(0, width - digits.size(), '0');
    }
    out += digits;
    last = static_cast<std::size_t>(m.position() + m.length());
  }
  out.append(tmpl, last);
  return out;
}

FeatureGrid read_feature_file(const std::filesystem::path& path, std::size_t expected_frame) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open feature file " + path.string(), expected_frame);
  std::array<std::uint32_t, 4> header{};
  in.read(reinterpret_cast<char*>(header.data()), sizeof(header));
  if (!in) throw IoError("truncated feature header in " + path.string(), expected_frame);
  for (auto& h : header) h = to_le(h);
  const std::size_t h = header[0], w = header[1], c = header[2];
  if (h == 0 || w == 0 || c == 0) throw IoError("empty feature grid in " + path.string(), expected_frame);
  if (header[3] != expected_frame)
    throw IoError("feature file " + path.string() + " carries frame index " + std::to_string(header[3]),
                  expected_frame);
  std::vector<float> raw(h * w * c);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * sizeof(float)));
  if (!in) throw IoError("truncated feature payload in " + path.string(), expected_frame);
  in.peek();
  if (!in.eof()) throw IoError("trailing bytes in feature file " + path.string(), expected_frame);
  std::vector<Real> values(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    float f = raw[i];
    if constexpr (std::endian::native == std::endian::big) {
      auto bits = to_le(std::bit_cast<std::uint32_t>(f));
      f = std::bit_cast<float>(bits);
    }
    if (!std::isfinite(f)) throw IoError("non-finite value in feature file " + path.string(), expected_frame);
    values[i] = static_cast<Real>(f);
  }
  return FeatureGrid(h, w, c, std::move(values));
}

void write_feature_file(const std::filesystem::path& path, const FeatureGrid& grid, std::size_t frame_index) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write feature file " + path.string(), frame_index);
  const std::array<std::uint32_t, 4> header{
      to_le(static_cast<std::uint32_t>(grid.height())), to_le(static_cast<std::uint32_t>(grid.width())),
      to_le(static_cast<std::uint32_t>(grid.channels())), to_le(static_cast<std::uint32_t>(frame_index))};
  out.write(reinterpret_cast<const char*>(header.data()), sizeof(header));
  for (Real v : grid.values()) {
    auto bits = to_le(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    out.write(reinterpret_cast<const char*>(&bits), sizeof(bits));
  }
  if (!out) throw IoError("failed writing feature file " + path.string(), frame_index);
}

FeatureGrid extract(const Plane& plane, const ExtractorSpec& spec, std::size_t frame_index) {
  switch (spec.kind) {
    case ExtractorSpec::Kind::synthetic:
      require(spec.stride >= 1 && spec.channels >= 1, "extract: stride and channels must be positive");
      require(plane.height >= spec.stride && plane.width >= spec.stride,
              "extract: frame is smaller than the extractor stride");
      return extract_synthetic(plane, spec);
    case ExtractorSpec::Kind::file:
      return read_feature_file(expand_index_template(spec.path_template, frame_index), frame_index);
  }
  throw ContractViolation("extract: unknown extractor kind");
}

FeatureGrid pvgfe_fuse(const FeatureGrid& g, const FeatureGrid& l, const FusionProjections& projections, Real alpha) {
  require(g.same_spatial(l), "pvgfe_fuse: global and local streams differ in spatial size");
  require(alpha > 0, "pvgfe_fuse: alpha must be positive");
  const FeatureGrid q = apply_projection(g, projections.query);
  const FeatureGrid k = apply_projection(l, projections.key);
  const FeatureGrid v = apply_projection(l, projections.value);
  require(q.channels() == k.channels() && k.channels() == v.channels(),
          "pvgfe_fuse: projected channel counts differ");
  const Mat fused = dot_attention(q.to_matrix(), k.to_matrix(), v.to_matrix(), alpha);
  return FeatureGrid::from_matrix(fused, g.height(), g.width());
}

}  // namespace memprop
