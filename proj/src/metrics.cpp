#include "memprop/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include <json.hpp>

namespace memprop {

double psnr(const RgbImage& pred, const RgbImage& gt) {
  require(pred.height == gt.height && pred.width == gt.width, "psnr: image sizes differ");
  double sse = 0;
  for (std::size_t i = 0; i < pred.pixels.size(); ++i) {
    const double d = static_cast<double>(pred.pixels[i]) - static_cast<double>(gt.pixels[i]);
    sse += d * d;
  }
  if (sse == 0) return kPsnrIdentical;
  const double mse = sse / static_cast<double>(pred.pixels.size());
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

double psnr(std::span<const Real> pred, std::span<const Real> gt, double peak) {
  require(pred.size() == gt.size() && !pred.empty(), "psnr: sample counts differ");
  double sse = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(gt[i]);
    sse += d * d;
  }
  if (sse == 0) return kPsnrIdentical;
  return 10.0 * std::log10(peak * peak / (sse / static_cast<double>(pred.size())));
}

double js_divergence(const Histogram& p, const Histogram& q) {
  double js = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0) js += 0.5 * p[i] * std::log2(p[i] / m);
    if (q[i] > 0) js += 0.5 * q[i] * std::log2(q[i] / m);
  }
  return std::max(js, 0.0);
}

namespace {

std::array<Histogram, 3> channel_histograms(const RgbImage& img) {
  std::array<Histogram, 3> h{};
  for (std::size_t i = 0; i < img.height * img.width; ++i)
    for (std::size_t c = 0; c < 3; ++c) h[c][img.pixels[i * 3 + c]] += 1.0;
  const double n = static_cast<double>(img.height * img.width);
  for (auto& ch : h)
    for (double& v : ch) v /= n;
  return h;
}

}  // namespace

double cdc(std::span<const RgbImage> frames) {
  require(frames.size() >= 5, "cdc: need at least 5 frames");
  std::vector<std::array<Histogram, 3>> hists;
  hists.reserve(frames.size());
  for (const auto& f : frames) hists.push_back(channel_histograms(f));
  double total = 0;
  const std::array<std::size_t, 3> strides{1, 2, 4};
  for (std::size_t stride : strides) {
    double acc = 0;
    std::size_t pairs = 0;
    for (std::size_t t = 0; t + stride < frames.size(); ++t, ++pairs)
      for (std::size_t c = 0; c < 3; ++c) acc += js_divergence(hists[t][c], hists[t + stride][c]);
    total += acc / static_cast<double>(3 * pairs);
  }
  return total / static_cast<double>(strides.size());
}

Report summarize(const Telemetry& telemetry) {
  Report r;
  r.frames = telemetry.frames.size();
  if (r.frames == 0) return r;
  double col_sum = 0;
  for (const auto& f : telemetry.frames) {
    r.max_columns = std::max(r.max_columns, f.columns.total);
    col_sum += static_cast<double>(f.columns.total);
    r.peak_columns = std::max(r.peak_columns, f.peak_columns);
    r.peak_bank_bytes = std::max(r.peak_bank_bytes, f.bank_bytes);
    r.max_readout_seconds = std::max(r.max_readout_seconds, f.readout_seconds);
    r.total_readout_seconds += f.readout_seconds;
  }
  r.mean_columns = col_sum / static_cast<double>(r.frames);
  r.mean_readout_seconds = r.total_readout_seconds / static_cast<double>(r.frames);
  return r;
}

std::string to_key_value(const Report& report) {
  std::ostringstream out;
  out << std::setprecision(10);
  out << "frames=" << report.frames << '\n';
  if (report.frames != 0) {
    out << "max_columns=" << report.max_columns << '\n'
        << "mean_columns=" << report.mean_columns << '\n'
        << "peak_columns=" << report.peak_columns << '\n'
        << "peak_bank_bytes=" << report.peak_bank_bytes << '\n'
        << "mean_readout_seconds=" << report.mean_readout_seconds << '\n'
        << "max_readout_seconds=" << report.max_readout_seconds << '\n'
        << "total_readout_seconds=" << report.total_readout_seconds << '\n';
  }
  for (const auto& [k, v] : report.extra) out << k << '=' << v << '\n';
  return out.str();
}

std::string to_json(const Report& report) {
  nlohmann::ordered_json j;
  j["frames"] = report.frames;
  if (report.frames != 0) {
    j["max_columns"] = report.max_columns;
    j["mean_columns"] = report.mean_columns;
    j["peak_columns"] = report.peak_columns;
    j["peak_bank_bytes"] = report.peak_bank_bytes;
    j["mean_readout_seconds"] = report.mean_readout_seconds;
    j["max_readout_seconds"] = report.max_readout_seconds;
    j["total_readout_seconds"] = report.total_readout_seconds;
  }
  for (const auto& [k, v] : report.extra) j[k] = v;
  return j.dump(2) + "\n";
}

std::string telemetry_counts_tsv(const Telemetry& telemetry) {
  std::ostringstream out;
  out << "frame\tshortterm\tlongterm\texemplar\ttotal\tpeak\tbank_bytes\n";
  for (const auto& f : telemetry.frames) {
    out << f.frame << '\t' << f.columns.shortterm << '\t' << f.columns.longterm << '\t' << f.columns.exemplar << '\t'
        << f.columns.total << '\t' << f.peak_columns << '\t' << f.bank_bytes << '\n';
  }
  return out.str();
}

std::string telemetry_timing_tsv(const Telemetry& telemetry) {
  std::ostringstream out;
  out << std::setprecision(9) << "frame\treadout_seconds\n";
  for (const auto& f : telemetry.frames) out << f.frame << '\t' << f.readout_seconds << '\n';
  return out.str();
}

double mean_readout_seconds(const Telemetry& telemetry, std::size_t first, std::size_t last) {
  double sum = 0;
  std::size_t n = 0;
  for (const auto& f : telemetry.frames) {
    if (f.frame < first || f.frame > last) continue;
    sum += f.readout_seconds;
    ++n;
  }
  require(n > 0, "mean_readout_seconds: no frames in range");
  return sum / static_cast<double>(n);
}

double median_readout_seconds(const Telemetry& telemetry, std::size_t first, std::size_t last) {
  std::vector<double> times;
  for (const auto& f : telemetry.frames)
    if (f.frame >= first && f.frame <= last) times.push_back(f.readout_seconds);
  require(!times.empty(), "median_readout_seconds: no frames in range");
  const auto mid = times.begin() + static_cast<std::ptrdiff_t>(times.size() / 2);
  std::nth_element(times.begin(), mid, times.end());
  return *mid;
}

}  // namespace memprop
