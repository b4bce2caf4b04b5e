#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "fresco/config.hpp"
#include "fresco/frtf.hpp"
#include "fresco/io.hpp"
#include "fresco/manifest.hpp"
#include "fresco/pipeline.hpp"
#include "fresco/selfcheck.hpp"

namespace fs = std::filesystem;
using namespace fresco;

namespace {

int run_translate(const std::string& in, const std::string& out, const std::string& config_path,
                  std::optional<std::uint64_t> seed, bool timing) {
  auto cfg = config::load(config_path);
  if (seed) cfg.seed = *seed;
  const auto video = io::read_frames(in);
  const auto t0 = std::chrono::steady_clock::now();
  const pipeline::Translator translator(cfg);
  const auto result = translator.translate_video(video);
  const auto t1 = std::chrono::steady_clock::now();

  manifest::RunInfo info;
  info.output_files = io::write_frames(result.frames, out);
  if (result.frames.size() >= 2) info.pixel_mse = pipeline::pixel_mse(result.frames, cfg.match, cfg.tau);
  if (timing) info.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
  std::ofstream f(fs::path(out) / "manifest.json", std::ios::binary);
  if (!f) throw Error("cannot write " + (fs::path(out) / "manifest.json").string());
  f << manifest::build(cfg, result, info);
  std::cerr << "translated " << result.frames.size() << " frames (" << result.keyframes.keyframes.size()
            << " keyframes) into " << out << "\n";
  return 0;
}

int run_keyframes(const std::string& in, int smin, int smax) {
  const auto plan = pipeline::select_keyframes(io::read_frames(in), smin, smax);
  std::cout << nlohmann::json(plan.keyframes).dump() << "\n";
  return 0;
}

int run_flow(const std::string& src, const std::string& dst, const std::string& out, flow::BlockMatchParams p) {
  const Grid a = io::read_ppm(src);
  const Grid b = io::read_ppm(dst);
  if (!a.same_shape(b)) throw Error("flow: " + src + " and " + dst + " differ in size");
  frtf::write(out, frtf::from_flow(flow::estimate_flow_block_matching(a, b, p)), frtf::DType::f32);
  return 0;
}

int run_metrics(const std::string& in) {
  const double mse = pipeline::pixel_mse(io::read_frames(in));
  std::cout << "{\"pixel_mse\": " << nlohmann::json(mse).dump() << "}\n";
  return 0;
}

int run_selftest(std::uint64_t seed) {
  bool ok = true;
  for (const auto& r : selfcheck::run_all(seed)) {
    std::printf("%-4s %-30s worst %.3e (tol %.0e)%s%s\n", r.passed ? "ok" : "FAIL", r.name.c_str(), r.worst,
                r.tolerance, r.detail.empty() ? "" : "  ", r.detail.c_str());
    ok = ok && r.passed;
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zero-shot video translation with spatial-temporal correspondence guidance"};
  app.require_subcommand(1);

  std::string in, out, config_path;
  std::uint64_t seed = 0;
  bool timing = false;
  auto* translate = app.add_subcommand("translate", "translate a frame directory");
  translate->add_option("--in", in, "input directory of frame_%05d.ppm")->required();
  translate->add_option("--out", out, "output directory")->required();
  translate->add_option("--config", config_path, "config JSON")->required();
  auto* seed_opt = translate->add_option("--seed", seed, "run seed (overrides the config)");
  translate->add_flag("--timing", timing, "record wall-clock time in the manifest");

  int smin = 0, smax = 0;
  auto* keyframes = app.add_subcommand("keyframes", "print selected keyframes as a JSON array");
  keyframes->add_option("--in", in, "input directory")->required();
  keyframes->add_option("--smin", smin, "minimum keyframe spacing")->required()->check(CLI::PositiveNumber);
  keyframes->add_option("--smax", smax, "maximum keyframe spacing")->required()->check(CLI::PositiveNumber);

  std::string src, dst;
  flow::BlockMatchParams match;
  auto* flowcmd = app.add_subcommand("flow", "block-matching flow from src to dst as an FRTF file");
  flowcmd->add_option("--src", src, "source PPM")->required();
  flowcmd->add_option("--dst", dst, "destination PPM")->required();
  flowcmd->add_option("--out", out, "output FRTF file")->required();
  flowcmd->add_option("--block", match.block, "block size")->check(CLI::PositiveNumber);
  flowcmd->add_option("--radius", match.radius, "search radius")->check(CLI::NonNegativeNumber);

  auto* metrics = app.add_subcommand("metrics", "print Pixel-MSE of a frame directory");
  metrics->add_option("--in", in, "input directory")->required();

  std::uint64_t selftest_seed = 0;
  auto* selftest = app.add_subcommand("selftest", "gradient checks and attention oracles");
  selftest->add_option("--seed", selftest_seed, "instance seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*translate)
      return run_translate(in, out, config_path, seed_opt->count() ? std::optional(seed) : std::nullopt, timing);
    if (*keyframes) return run_keyframes(in, smin, smax);
    if (*flowcmd) return run_flow(src, dst, out, match);
    if (*metrics) return run_metrics(in);
    if (*selftest) return run_selftest(selftest_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
