#pragma once

#include <array>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "memprop/membank.hpp"
#include "memprop/render.hpp"

namespace memprop {

/// PSNR of identical inputs.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

/// 10 log10(255^2 / MSE) over all RGB channels.
double psnr(const RgbImage& pred, const RgbImage& gt);
/// Same formula over arbitrary real samples with the given peak value.
double psnr(std::span<const Real> pred, std::span<const Real> gt, double peak);

using Histogram = std::array<double, 256>;

/// Jensen-Shannon divergence in bits (bounded by 1) between two normalized histograms.
double js_divergence(const Histogram& p, const Histogram& q);

/// Colour distribution consistency: for strides 1, 2 and 4, the mean over
/// frame pairs (t, t + stride) and RGB channels of the JS divergence between
/// normalized 256-bin channel histograms; the three stride means are averaged.
/// Requires at least 5 frames.
double cdc(std::span<const RgbImage> frames);

struct FrameTelemetry {
  std::size_t frame = 0;
  /// Bank composition seen by this frame's readout.
  ColumnCounts columns;
  /// Largest column count resident while processing this frame.
  std::size_t peak_columns = 0;
  std::size_t bank_bytes = 0;
  double readout_seconds = 0.0;
};

struct Telemetry {
  std::vector<FrameTelemetry> frames;
};

struct Report {
  std::size_t frames = 0;
  std::size_t max_columns = 0;
  double mean_columns = 0.0;
  std::size_t peak_columns = 0;
  std::size_t peak_bank_bytes = 0;
  double mean_readout_seconds = 0.0;
  double max_readout_seconds = 0.0;
  double total_readout_seconds = 0.0;
  /// Additional named values (run settings, quality metrics), emitted in order.
  std::vector<std::pair<std::string, std::string>> extra;
};

Report summarize(const Telemetry& telemetry);

/// One key=value per line.
std::string to_key_value(const Report& report);
std::string to_json(const Report& report);

/// Per-frame column counts only; bytewise reproducible across runs.
std::string telemetry_counts_tsv(const Telemetry& telemetry);
/// Per-frame readout wall time.
std::string telemetry_timing_tsv(const Telemetry& telemetry);

/// Mean readout time over the 1-based inclusive frame range [first, last].
double mean_readout_seconds(const Telemetry& telemetry, std::size_t first, std::size_t last);
/// Median over the same range; the upper middle value for an even count.
double median_readout_seconds(const Telemetry& telemetry, std::size_t first, std::size_t last);

}  // namespace memprop
