#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "memprop/config.hpp"
#include "memprop/featex.hpp"
#include "memprop/localattn.hpp"
#include "memprop/membank.hpp"
#include "memprop/metrics.hpp"
#include "memprop/render.hpp"

namespace memprop {

/// Turns luminance and chrominance planes into the feature grids the bank and
/// local attention consume, according to a PipelineConfig.
class FrameEncoder {
 public:
  explicit FrameEncoder(const PipelineConfig& config);

  /// Cross-channel fusion of the global and local luminance streams.
  FeatureGrid fused_features(const Plane& luminance, std::size_t frame) const;

  struct Embedding {
    FeatureGrid query;
    FeatureGrid key;
  };
  Embedding embed(const Plane& luminance, std::size_t frame) const;

  /// Value grid for chrominance planes at full resolution.
  FeatureGrid encode_values(const Plane& a, const Plane& b) const;

  std::size_t value_channels() const noexcept;
  const FusionProjections& fusion() const noexcept { return fusion_; }
  const ExtractorSpec& local_spec() const noexcept { return local_; }
  const ExtractorSpec& global_spec() const noexcept { return global_; }

 private:
  PipelineConfig config_;
  ExtractorSpec local_;
  ExtractorSpec global_;
  FusionProjections fusion_;
  Projection query_embed_;
  Projection key_embed_;
  Projection value_embed_;
};

/// Everything a test or diagnostic hook may inspect right after a frame's readout.
struct FrameView {
  std::size_t frame = 0;
  const MemoryBank& bank;
  const ReadoutResult& readout;
  const LocalAttentionResult& local;
  const FrameEncoder::Embedding& embedding;
  const AbPlanes& prediction;
};

struct RunHooks {
  std::function<void(const FrameView&)> on_readout;
  /// Receives each colorized frame as soon as it is ready.
  std::function<void(std::size_t, const LabFrame&)> on_frame;
  /// Keep colorized frames in RunResult::frames.
  bool keep_frames = true;
  /// Fill ReadoutResult::affinity for on_readout.
  bool keep_affinity = false;
};

struct RunResult {
  std::vector<LabFrame> frames;
  Telemetry telemetry;
  Report report;
};

/// Returns the grayscale frame with 1-based index `frame`.
using FrameProvider = std::function<LabFrame(std::size_t frame)>;

BankConfig bank_config_for(const PipelineConfig& config);

/// Colorizes frames 1..count from the exemplar, in the mode selected by config.mode.
RunResult colorize_sequence(std::size_t count, const FrameProvider& frames, const LabFrame& exemplar,
                            const PipelineConfig& config, const RunHooks& hooks = {});
RunResult colorize_sequence(std::span<const LabFrame> frames, const LabFrame& exemplar, const PipelineConfig& config,
                            const RunHooks& hooks = {});

/// Stacking (every past frame, no compaction) or recurrent (exemplar plus the
/// previous frame) ablation; every other stage matches colorize_sequence.
RunResult run_baseline(std::span<const LabFrame> frames, const LabFrame& exemplar, const PipelineConfig& config,
                       const RunHooks& hooks = {});

enum class SynthKind { translate, rotate_palette, still };

SynthKind parse_synth_kind(const std::string& text);

struct SynthOptions {
  SynthKind kind = SynthKind::translate;
  std::size_t frames = 24;
  std::size_t height = 256;
  std::size_t width = 256;
  std::uint64_t seed = 0;
  /// translate: horizontal pixel shift per frame.
  std::size_t offset = 16;
  /// rotate_palette: ab rotation per frame, radians.
  double hue_step = 0.1;
};

/// Deterministic periodic colour texture animated per SynthOptions. Frames are
/// generated on demand so long sequences do not have to be held in memory.
class SynthVideo {
 public:
  explicit SynthVideo(SynthOptions options);

  const SynthOptions& options() const noexcept { return options_; }
  std::size_t size() const noexcept { return options_.frames; }

  /// Ground-truth colour frame, 1-based.
  LabFrame truth(std::size_t frame) const;
  LabFrame gray(std::size_t frame) const;
  /// Frame 1 in colour.
  LabFrame exemplar() const { return truth(1); }
  /// Horizontal texture offset of a frame in pixels.
  std::size_t shift(std::size_t frame) const noexcept;

 private:
  SynthOptions options_;
  Plane base_l_, base_a_, base_b_;
};

struct BenchOptions {
  PipelineConfig config;
  std::size_t frames = 200;
  std::size_t height = 448;
  std::size_t width = 448;
  std::uint64_t seed = 0;
  /// When non-empty: key=value report here, JSON next to it (.json) and per-frame tables
  /// (.frames.tsv for column counts, .timing.tsv for readout times).
  std::filesystem::path report;
};

struct BenchResult {
  Telemetry telemetry;
  Report report;
};

/// Runs config.mode on a synthetic translating video and reports memory and latency.
BenchResult run_bench(const BenchOptions& options);

}  // namespace memprop
