#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "memprop/config.hpp"
#include "memprop/image_io.hpp"
#include "memprop/metrics.hpp"
#include "memprop/pipeline.hpp"

namespace fs = std::filesystem;
using namespace memprop;

namespace {

std::pair<std::size_t, std::size_t> parse_size(const std::string& text) {
  const auto x = text.find('x');
  std::size_t h = 0, w = 0;
  try {
    if (x == std::string::npos) throw std::invalid_argument(text);
    std::size_t used = 0;
    h = std::stoul(text.substr(0, x), &used);
    if (used != x) throw std::invalid_argument(text);
    w = std::stoul(text.substr(x + 1), &used);
    if (used != text.size() - x - 1) throw std::invalid_argument(text);
  } catch (const std::exception&) {
    throw ContractViolation("--size expects HxW, got '" + text + "'");
  }
  if (h == 0 || w == 0) throw ContractViolation("--size must be positive, got '" + text + "'");
  return {h, w};
}

std::string frame_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05zu.png", i);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

PipelineConfig make_config(const std::string& path, const std::vector<std::string>& overrides) {
  PipelineConfig config = path.empty() ? PipelineConfig{} : load_config(path);
  for (const auto& o : overrides) apply_override(config, o);
  config.validate();
  return config;
}

struct ColorizeArgs {
  std::string input, exemplar, config, out, dump_bank;
  std::vector<std::string> overrides;
};

int run_colorize(const ColorizeArgs& args) {
  const PipelineConfig config = make_config(args.config, args.overrides);
  const std::vector<fs::path> paths = discover_frames(args.input);
  if (paths.empty()) throw IoError("no frames found at " + args.input);
  const LabFrame exemplar = rgb_to_lab(read_rgb(args.exemplar));
  fs::create_directories(args.out);

  const auto load = [&](std::size_t i) {
    try {
      return LabFrame::grayscale(read_luminance(paths[i - 1]));
    } catch (const IoError& e) {
      throw IoError(e.what(), i);
    }
  };
  RunHooks hooks;
  hooks.keep_frames = false;
  hooks.on_frame = [&](std::size_t i, const LabFrame& frame) { write_rgb(fs::path(args.out) / frame_name(i), lab_to_rgb(frame)); };
  std::optional<MemoryBank> last_bank;
  if (!args.dump_bank.empty()) {
    hooks.on_readout = [&](const FrameView& view) {
      if (view.frame == paths.size()) last_bank.emplace(view.bank);
    };
  }

  const RunResult run = colorize_sequence(paths.size(), load, exemplar, config, hooks);
  const fs::path out(args.out);
  write_text(out / "telemetry.tsv", telemetry_counts_tsv(run.telemetry));
  write_text(out / "timing.tsv", telemetry_timing_tsv(run.telemetry));
  write_text(out / "report.txt", to_key_value(run.report));
  write_text(out / "report.json", to_json(run.report));
  if (last_bank) last_bank->dump(args.dump_bank);
  std::cout << "colorized " << paths.size() << " frames into " << args.out << "\n";
  return 0;
}

struct BenchArgs {
  std::string mode = "mfp", size = "448x448", report, config;
  std::size_t frames = 200;
  std::uint64_t seed = 0;
  std::vector<std::string> overrides;
};

int run_bench_cmd(const BenchArgs& args) {
  BenchOptions options;
  options.config = make_config(args.config, args.overrides);
  options.config.mode = parse_mode(args.mode);
  options.frames = args.frames;
  std::tie(options.height, options.width) = parse_size(args.size);
  options.seed = args.seed;
  options.report = args.report;
  const BenchResult result = run_bench(options);
  std::cout << to_key_value(result.report);
  return 0;
}

struct SynthArgs {
  std::string kind = "translate", out, size = "256x256";
  std::size_t frames = 24;
  std::size_t offset = 16;
  std::uint64_t seed = 0;
};

int run_synth(const SynthArgs& args) {
  SynthOptions options;
  options.kind = parse_synth_kind(args.kind);
  options.frames = args.frames;
  std::tie(options.height, options.width) = parse_size(args.size);
  options.offset = args.offset;
  options.seed = args.seed;
  const SynthVideo video(options);
  const fs::path out(args.out);
  fs::create_directories(out / "gray");
  fs::create_directories(out / "gt");
  write_rgb(out / "exemplar.png", lab_to_rgb(video.exemplar()));
  for (std::size_t i = 1; i <= video.size(); ++i) {
    write_gray(out / "gray" / frame_name(i), gray_from_luminance(video.gray(i).l));
    write_rgb(out / "gt" / frame_name(i), lab_to_rgb(video.truth(i)));
  }
  std::cout << "wrote " << video.size() << " frames to " << args.out << "\n";
  return 0;
}

int run_metrics(const std::string& pred_dir, const std::string& gt_dir) {
  const auto pred_paths = discover_frames(pred_dir);
  const auto gt_paths = discover_frames(gt_dir);
  if (pred_paths.empty()) throw IoError("no frames found at " + pred_dir);
  if (pred_paths.size() != gt_paths.size()) {
    throw IoError("frame count mismatch: " + std::to_string(pred_paths.size()) + " predicted, " +
                  std::to_string(gt_paths.size()) + " ground truth");
  }
  std::vector<RgbImage> preds;
  double sum = 0.0;
  std::size_t finite = 0;
  for (std::size_t i = 0; i < pred_paths.size(); ++i) {
    RgbImage p = read_rgb(pred_paths[i]);
    const RgbImage g = read_rgb(gt_paths[i]);
    if (p.height != g.height || p.width != g.width) throw IoError("frame size mismatch", i + 1);
    const double v = psnr(p, g);
    std::cout << "frame " << (i + 1) << " psnr=" << v << "\n";
    if (std::isfinite(v)) {
      sum += v;
      ++finite;
    }
    preds.push_back(std::move(p));
  }
  std::cout << "frames=" << preds.size() << "\n";
  if (finite > 0) {
    std::cout << "psnr_mean=" << sum / static_cast<double>(finite) << "\n";
  } else {
    std::cout << "psnr_mean=inf\n";
  }
  if (preds.size() >= 5) std::cout << "cdc=" << cdc(preds) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"memprop: exemplar-based feature propagation for video colorization"};
  app.require_subcommand(1);

  ColorizeArgs colorize;
  auto* c = app.add_subcommand("colorize", "Colorize a grayscale frame sequence from an exemplar");
  c->add_option("--input", colorize.input, "Frame directory or pattern such as dir/*.png")->required();
  c->add_option("--exemplar", colorize.exemplar, "Colour exemplar image")->required()->check(CLI::ExistingFile);
  c->add_option("--config", colorize.config, "key=value configuration file")->check(CLI::ExistingFile);
  c->add_option("--out", colorize.out, "Output directory")->required();
  c->add_option("--set", colorize.overrides, "Override a config key, key=value (repeatable)");
  c->add_option("--dump-bank", colorize.dump_bank, "Write the final memory bank to this directory");

  BenchArgs bench;
  auto* b = app.add_subcommand("bench", "Memory and latency benchmark on a synthetic translating video");
  b->add_option("--mode", bench.mode, "mfp, stacking or recurrent")->check(CLI::IsMember({"mfp", "stacking", "recurrent"}));
  b->add_option("--frames", bench.frames, "Frame count")->check(CLI::PositiveNumber);
  b->add_option("--size", bench.size, "Frame size HxW");
  b->add_option("--report", bench.report, "Report path (JSON and per-frame tables are written next to it)");
  b->add_option("--config", bench.config, "key=value configuration file")->check(CLI::ExistingFile);
  b->add_option("--set", bench.overrides, "Override a config key, key=value (repeatable)");
  b->add_option("--seed", bench.seed, "Texture seed");

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Write a synthetic video with ground truth");
  s->add_option("--kind", synth.kind, "translate, rotate_palette or static");
  s->add_option("--frames", synth.frames, "Frame count")->check(CLI::PositiveNumber);
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--size", synth.size, "Frame size HxW");
  s->add_option("--offset", synth.offset, "translate: pixels per frame");
  s->add_option("--seed", synth.seed, "Texture seed");

  std::string pred_dir, gt_dir;
  auto* m = app.add_subcommand("metrics", "PSNR and colour distribution consistency of a prediction");
  m->add_option("--pred", pred_dir, "Predicted frames")->required();
  m->add_option("--gt", gt_dir, "Ground-truth frames")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (c->parsed()) return run_colorize(colorize);
    if (b->parsed()) return run_bench_cmd(bench);
    if (s->parsed()) return run_synth(synth);
    if (m->parsed()) return run_metrics(pred_dir, gt_dir);
  } catch (const IoError& e) {
    std::cerr << "memprop: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "memprop: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
