#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "memprop/featex.hpp"
#include "memprop/membank.hpp"

namespace memprop {

enum class PipelineMode { mfp, stacking, recurrent };
/// identity_ab: values are the stride-downsampled ab planes (2 channels).
/// extractor: values are synthetic-extractor features of the a and b planes.
enum class ValueMode { identity_ab, extractor };
/// analytic: identity projections everywhere. stress: seeded random projections.
enum class ProjectionMode { analytic, stress };

struct PipelineConfig {
  std::size_t gamma = 5;
  std::size_t ne = 5;
  /// 0 disables compaction.
  std::size_t ns = 10;
  std::size_t m = 128;
  std::size_t d = 1;
  std::size_t lambda = 7;
  /// Unset means sqrt of the channel count.
  std::optional<Real> alpha;
  std::optional<Real> beta;
  Real tau = Real{1};

  std::size_t stride = 16;
  std::size_t channels = 8;
  Real feature_scale = Real{1};
  ExtractorSpec::Kind extractor = ExtractorSpec::Kind::synthetic;
  std::string feature_path;
  std::string global_feature_path;

  ValueMode value_mode = ValueMode::identity_ab;
  std::size_t value_channels = 4;
  PipelineMode mode = PipelineMode::mfp;
  std::size_t longterm_cap = 4096;
  std::uint64_t seed = 0;
  ProjectionMode projections = ProjectionMode::analytic;
  UsageSource usage_source = UsageSource::keys;

  /// Sets one field from its textual form; throws ContractViolation on unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  /// Checks the cross-field invariants (Ne < Ns, lambda odd, gamma >= 1, ...).
  void validate() const;
  /// Flat key=value rendering that load_config reads back.
  std::string to_text() const;
};

/// Flat key=value file, '#' starts a comment.
PipelineConfig load_config(const std::filesystem::path& path);
/// Applies a "key=value" override on top of `config`.
void apply_override(PipelineConfig& config, const std::string& assignment);

const char* to_string(PipelineMode mode) noexcept;
PipelineMode parse_mode(const std::string& text);

}  // namespace memprop
