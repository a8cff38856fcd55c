#include "memprop/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <string>

namespace memprop {

namespace {

std::string lower_ext(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

DecodedImage read_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw IoError("cannot read PNG " + path.string() + ": " + image.message);
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  DecodedImage out;
  out.height = image.height;
  out.width = image.width;
  out.channels = color ? 3 : 1;
  out.pixels.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    throw IoError("cannot decode PNG " + path.string() + ": " + image.message);
  }
  return out;
}

void write_png(const std::filesystem::path& path, std::size_t height, std::size_t width, bool color,
               const std::vector<std::uint8_t>& pixels) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, pixels.data(), 0, nullptr))
    throw IoError("cannot write PNG " + path.string() + ": " + image.message);
}

// Next whitespace-separated header token of a PNM file, skipping comments.
std::string pnm_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

DecodedImage read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string magic = pnm_token(in);
  if (magic != "P6" && magic != "P5") throw IoError("unsupported PNM variant in " + path.string());
  DecodedImage out;
  try {
    out.width = std::stoul(pnm_token(in));
    out.height = std::stoul(pnm_token(in));
    if (std::stoul(pnm_token(in)) != 255) throw IoError("only 8-bit PNM is supported: " + path.string());
  } catch (const std::logic_error&) {
    throw IoError("malformed PNM header in " + path.string());
  }
  out.channels = magic == "P6" ? 3 : 1;
  out.pixels.resize(out.width * out.height * out.channels);
  in.read(reinterpret_cast<char*>(out.pixels.data()), static_cast<std::streamsize>(out.pixels.size()));
  if (!in) throw IoError("truncated PNM payload in " + path.string());
  return out;
}

void write_pnm(const std::filesystem::path& path, std::size_t height, std::size_t width, bool color,
               const std::vector<std::uint8_t>& pixels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << (color ? "P6" : "P5") << '\n' << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

DecodedImage read_image(const std::filesystem::path& path) {
  const std::string ext = lower_ext(path);
  if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") return read_pnm(path);
  return read_png(path);
}

RgbImage read_rgb(const std::filesystem::path& path) {
  const DecodedImage img = read_image(path);
  RgbImage out(img.height, img.width);
  if (img.channels == 3) {
    out.pixels = img.pixels;
  } else {
    for (std::size_t i = 0; i < img.height * img.width; ++i)
      for (std::size_t c = 0; c < 3; ++c) out.pixels[i * 3 + c] = img.pixels[i];
  }
  return out;
}

Plane read_luminance(const std::filesystem::path& path) {
  const DecodedImage img = read_image(path);
  if (img.channels == 1) return luminance_from_gray(img.height, img.width, img.pixels);
  RgbImage rgb(img.height, img.width);
  rgb.pixels = img.pixels;
  return rgb_to_lab(rgb).l;
}

void write_rgb(const std::filesystem::path& path, const RgbImage& image) {
  if (lower_ext(path) == ".ppm")
    write_pnm(path, image.height, image.width, true, image.pixels);
  else
    write_png(path, image.height, image.width, true, image.pixels);
}

void write_gray(const std::filesystem::path& path, const GrayImage& image) {
  if (lower_ext(path) == ".pgm")
    write_pnm(path, image.height, image.width, false, image.pixels);
  else
    write_png(path, image.height, image.width, false, image.pixels);
}

GrayImage gray_from_luminance(const Plane& l) {
  GrayImage out{l.height, l.width, std::vector<std::uint8_t>(l.values.size())};
  for (std::size_t i = 0; i < l.values.size(); ++i) {
    const double v = std::clamp(static_cast<double>(l.values[i]) * 255.0 / 100.0, 0.0, 255.0);
    out.pixels[i] = static_cast<std::uint8_t>(std::lround(v));
  }
  return out;
}

std::vector<std::filesystem::path> discover_frames(const std::filesystem::path& dir_or_pattern) {
  namespace fs = std::filesystem;
  fs::path dir = dir_or_pattern;
  std::string prefix, suffix;
  const std::string name = dir_or_pattern.filename().string();
  const auto star = name.find('*');
  const bool pattern = star != std::string::npos;
  if (pattern) {
    dir = dir_or_pattern.parent_path();
    if (dir.empty()) dir = ".";
    prefix = name.substr(0, star);
    suffix = name.substr(star + 1);
  }
  if (!fs::is_directory(dir)) throw IoError("frame directory does not exist: " + dir.string());

  static const std::vector<std::string> kImageExts{".png", ".ppm", ".pgm", ".pnm"};
  std::vector<std::pair<unsigned long long, fs::path>> found;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string fname = entry.path().filename().string();
    std::string digits;
    if (pattern) {
      if (fname.size() < prefix.size() + suffix.size() || fname.compare(0, prefix.size(), prefix) != 0 ||
          fname.compare(fname.size() - suffix.size(), suffix.size(), suffix) != 0)
        continue;
      digits = fname.substr(prefix.size(), fname.size() - prefix.size() - suffix.size());
    } else {
      if (std::find(kImageExts.begin(), kImageExts.end(), lower_ext(entry.path())) == kImageExts.end()) continue;
      digits = entry.path().stem().string();
    }
    if (digits.empty() || !std::all_of(digits.begin(), digits.end(), [](unsigned char c) { return std::isdigit(c); }))
      continue;
    found.emplace_back(std::stoull(digits), entry.path());
  }
  std::sort(found.begin(), found.end());
  std::vector<fs::path> out;
  out.reserve(found.size());
  for (auto& [n, p] : found) out.push_back(std::move(p));
  return out;
}

}  // namespace memprop
