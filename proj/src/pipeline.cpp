#include "memprop/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <string>

namespace memprop {

FrameEncoder::FrameEncoder(const PipelineConfig& config) : config_(config) {
  local_.kind = config.extractor;
  local_.stride = config.stride;
  local_.channels = config.channels;
  local_.first_level = 0;
  local_.scale = config.feature_scale;
  local_.path_template = config.feature_path;

  global_ = local_;
  global_.first_level = 1;
  if (!config.global_feature_path.empty()) global_.path_template = config.global_feature_path;

  const std::size_t c = config.channels;
  if (config.projections == ProjectionMode::analytic) {
    fusion_ = {Projection::identity(c), Projection::identity(c), Projection::identity(c)};
    query_embed_ = Projection::identity(c);
    key_embed_ = Projection::identity(c);
  } else {
    fusion_ = {Projection::random_orthogonal(c, c, config.seed * 8 + 1),
               Projection::random_orthogonal(c, c, config.seed * 8 + 2),
               Projection::random_orthogonal(c, c, config.seed * 8 + 3)};
    // Query and key embeddings share weights so the L2 readout compares like with like.
    query_embed_ = Projection::random_conv3x3(c, c, config.seed * 8 + 4);
    key_embed_ = query_embed_;
  }
  value_embed_ = Projection::identity(value_channels());
}

std::size_t FrameEncoder::value_channels() const noexcept {
  return config_.value_mode == ValueMode::identity_ab ? 2 : config_.value_channels;
}

FeatureGrid FrameEncoder::fused_features(const Plane& luminance, std::size_t frame) const {
  const FeatureGrid local = extract(luminance, local_, frame);
  const bool shared_file = global_.kind == ExtractorSpec::Kind::file && global_.path_template == local_.path_template;
  const FeatureGrid global = shared_file ? local : extract(luminance, global_, frame);
  const Real alpha = config_.alpha.value_or(std::sqrt(static_cast<Real>(fusion_.query.out_channels)));
  return pvgfe_fuse(global, local, fusion_, alpha);
}

FrameEncoder::Embedding FrameEncoder::embed(const Plane& luminance, std::size_t frame) const {
  const FeatureGrid fused = fused_features(luminance, frame);
  return {apply_projection(fused, query_embed_), apply_projection(fused, key_embed_)};
}

FeatureGrid FrameEncoder::encode_values(const Plane& a, const Plane& b) const {
  if (config_.value_mode == ValueMode::identity_ab) {
    const Plane* planes[] = {&a, &b};
    return apply_projection(cell_mean(planes, config_.stride), value_embed_);
  }
  ExtractorSpec spec;
  spec.stride = config_.stride;
  spec.channels = config_.value_channels / 2;
  const FeatureGrid fa = extract(a, spec, 0);
  const FeatureGrid fb = extract(b, spec, 0);
  FeatureGrid out(fa.height(), fa.width(), config_.value_channels);
  for (std::size_t p = 0; p < fa.locations(); ++p) {
    for (std::size_t c = 0; c < spec.channels; ++c) {
      out.vec(p)[2 * c] = fa.vec(p)[c];
      out.vec(p)[2 * c + 1] = fb.vec(p)[c];
    }
  }
  return apply_projection(out, value_embed_);
}

BankConfig bank_config_for(const PipelineConfig& config) {
  BankConfig bank;
  bank.temperature = config.tau;
  bank.m = config.m;
  bank.ne = config.ne;
  if (config.mode == PipelineMode::mfp) {
    bank.gamma = config.gamma;
    bank.ns = config.ns;
    bank.longterm_cap = config.longterm_cap;
    bank.track_usage = config.ns != 0;
    bank.usage_source = config.usage_source;
  } else {
    bank.gamma = 1;
    bank.ns = 0;
    bank.longterm_cap = 0;
    bank.track_usage = false;
  }
  return bank;
}

RunResult colorize_sequence(std::size_t count, const FrameProvider& frames, const LabFrame& exemplar,
                            const PipelineConfig& config, const RunHooks& hooks) {
  config.validate();
  require(count >= 1, "colorize_sequence: need at least one frame");
  require(exemplar.has_color(), "colorize_sequence: the exemplar must carry chrominance");
  const std::size_t h = exemplar.height();
  const std::size_t w = exemplar.width();
  require(h % config.stride == 0 && w % config.stride == 0,
          "colorize_sequence: frame size must be a multiple of the stride");

  const FrameEncoder encoder(config);
  const BankConfig bank_config = bank_config_for(config);
  const bool readout_usage = bank_config.track_usage && bank_config.usage_source == UsageSource::readout;

  const FeatureGrid exemplar_keys = encoder.embed(exemplar.l, 0).key;
  const FeatureGrid exemplar_values = encoder.encode_values(*exemplar.a, *exemplar.b);
  MemoryBank bank = MemoryBank::init_with_exemplar(exemplar_keys, exemplar_values, bank_config);
  RingBuffer ring(config.d);
  const Real beta = config.beta.value_or(std::sqrt(static_cast<Real>(exemplar_keys.channels())));
  const std::size_t value_channels = exemplar_values.channels();

  RunResult result;
  for (std::size_t i = 1; i <= count; ++i) {
    LabFrame frame = frames(i);
    if (frame.height() != h || frame.width() != w) {
      throw ContractViolation("frame " + std::to_string(i) + ": size " + std::to_string(frame.height()) + "x" +
                              std::to_string(frame.width()) + " differs from the exemplar's " + std::to_string(h) +
                              "x" + std::to_string(w));
    }
    const FrameEncoder::Embedding embedding = encoder.embed(frame.l, i);
    const ColumnCounts counts = bank.column_count();

    const auto t0 = std::chrono::steady_clock::now();
    const ReadoutResult readout =
        bank.readout(embedding.query, {.keep_affinity = hooks.keep_affinity, .column_mass = readout_usage});
    const auto t1 = std::chrono::steady_clock::now();

    const LocalAttentionResult local = local_attention(embedding.query, ring, config.lambda, beta, value_channels);
    // The readout and local attention estimates are averaged once both exist.
    const Projection head = Projection::select_first(value_channels, 2, local.cold_start ? Real{1} : Real{0.5});
    AbPlanes ab = fuse_decode(readout.value_grid, local.output, h, w, head);

    if (hooks.on_readout) hooks.on_readout(FrameView{i, bank, readout, local, embedding, ab});

    FeatureGrid values = encoder.encode_values(ab.a, ab.b);
    bank.observe_frame(embedding.key, values, i, readout.column_mass);
    if (config.mode == PipelineMode::recurrent) bank.retain_newest_frames(1);
    ring.push(embedding.key, std::move(values), i);

    FrameTelemetry t;
    t.frame = i;
    t.columns = counts;
    t.peak_columns = std::max(counts.total, bank.last_peak_columns());
    t.bank_bytes = t.peak_columns * bank.bytes_per_column();
    t.readout_seconds = std::chrono::duration<double>(t1 - t0).count();
    result.telemetry.frames.push_back(t);

    LabFrame colored{std::move(frame.l), std::move(ab.a), std::move(ab.b)};
    if (hooks.on_frame) hooks.on_frame(i, colored);
    if (hooks.keep_frames) result.frames.push_back(std::move(colored));
  }
  result.report = summarize(result.telemetry);
  result.report.extra.emplace_back("mode", to_string(config.mode));
  return result;
}

RunResult colorize_sequence(std::span<const LabFrame> frames, const LabFrame& exemplar, const PipelineConfig& config,
                            const RunHooks& hooks) {
  return colorize_sequence(
      frames.size(), [&](std::size_t i) { return frames[i - 1]; }, exemplar, config, hooks);
}

RunResult run_baseline(std::span<const LabFrame> frames, const LabFrame& exemplar, const PipelineConfig& config,
                       const RunHooks& hooks) {
  require(config.mode == PipelineMode::stacking || config.mode == PipelineMode::recurrent,
          "run_baseline: mode must be stacking or recurrent");
  return colorize_sequence(frames, exemplar, config, hooks);
}

}  // namespace memprop
