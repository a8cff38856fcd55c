#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "memprop/pipeline.hpp"

namespace memprop {

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(9);
  s << v;
  return s.str();
}

}  // namespace

BenchResult run_bench(const BenchOptions& options) {
  require(options.frames >= 1, "bench: need at least one frame");
  SynthOptions synth;
  synth.kind = SynthKind::translate;
  synth.frames = options.frames;
  synth.height = options.height;
  synth.width = options.width;
  synth.seed = options.seed;
  synth.offset = options.config.stride;
  const SynthVideo video(synth);

  double psnr_sum = 0.0;
  std::size_t psnr_frames = 0;
  RunHooks hooks;
  hooks.keep_frames = false;
  hooks.on_frame = [&](std::size_t i, const LabFrame& out) {
    const LabFrame truth = video.truth(i);
    std::vector<Real> pred(out.a->values);
    pred.insert(pred.end(), out.b->values.begin(), out.b->values.end());
    std::vector<Real> gt(truth.a->values);
    gt.insert(gt.end(), truth.b->values.begin(), truth.b->values.end());
    const double p = psnr(pred, gt, 255.0);
    if (std::isfinite(p)) {
      psnr_sum += p;
      ++psnr_frames;
    }
  };

  RunResult run = colorize_sequence(
      video.size(), [&](std::size_t i) { return video.gray(i); }, video.exemplar(), options.config, hooks);

  BenchResult result{std::move(run.telemetry), std::move(run.report)};
  auto& extra = result.report.extra;
  extra.emplace_back("height", std::to_string(options.height));
  extra.emplace_back("width", std::to_string(options.width));
  extra.emplace_back("stride", std::to_string(options.config.stride));
  extra.emplace_back("gamma", std::to_string(options.config.gamma));
  extra.emplace_back("ne", std::to_string(options.config.ne));
  extra.emplace_back("ns", std::to_string(options.config.ns));
  extra.emplace_back("m", std::to_string(options.config.m));
  extra.emplace_back("longterm_cap", std::to_string(options.config.longterm_cap));
  extra.emplace_back("ab_psnr_mean", psnr_frames ? fmt(psnr_sum / static_cast<double>(psnr_frames)) : "inf");

  // Early window: frames n/10 .. n/5. Late window: the last n/10 frames.
  const std::size_t n = options.frames;
  if (n >= 40) {
    const std::size_t e0 = n / 10, e1 = n / 5, l0 = n - n / 10;
    const double early = median_readout_seconds(result.telemetry, e0, e1);
    const double late = median_readout_seconds(result.telemetry, l0, n);
    extra.emplace_back("early_window", std::to_string(e0) + "-" + std::to_string(e1));
    extra.emplace_back("late_window", std::to_string(l0) + "-" + std::to_string(n));
    extra.emplace_back("early_readout_seconds", fmt(early));
    extra.emplace_back("late_readout_seconds", fmt(late));
    extra.emplace_back("latency_ratio", fmt(early > 0 ? late / early : 0.0));
  }

  if (!options.report.empty()) {
    write_text(options.report, to_key_value(result.report));
    std::filesystem::path json = options.report;
    json += ".json";
    write_text(json, to_json(result.report));
    std::filesystem::path table = options.report;
    table += ".frames.tsv";
    write_text(table, telemetry_counts_tsv(result.telemetry));
    std::filesystem::path timing = options.report;
    timing += ".timing.tsv";
    write_text(timing, telemetry_timing_tsv(result.telemetry));
  }
  return result;
}

}  // namespace memprop
