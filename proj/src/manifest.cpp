#include "fresco/manifest.hpp"

#include "json.hpp"
#include "fresco/config.hpp"

namespace fresco::manifest {

namespace {

nlohmann::ordered_json loss_json(const featopt::LossBreakdown& l) {
  nlohmann::ordered_json j;
  j["temporal"] = l.temporal;
  j["spatial"] = l.spatial;
  j["total"] = l.total();
  return j;
}

}  // namespace

std::string build(const pipeline::TranslationConfig& config, const pipeline::TranslationResult& result,
                  const RunInfo& info) {
  nlohmann::ordered_json j;
  j["manifest_version"] = kManifestVersion;
  j["config"] = nlohmann::ordered_json::parse(config::to_json(config));
  j["seed"] = config.seed;
  j["frame_count"] = result.frames.size();
  if (!result.frames.empty()) j["frame_size"] = {result.frames[0].height, result.frames[0].width};

  auto& kp = j["keyframe_plan"];
  kp["keyframes"] = result.keyframes.keyframes;
  kp["s_min"] = result.keyframes.s_min;
  kp["s_max"] = result.keyframes.s_max;
  std::vector<double> scores(result.keyframes.motion.begin() + (result.keyframes.motion.empty() ? 0 : 1),
                             result.keyframes.motion.end());
  kp["motion_scores"] = scores;

  auto& bp = j["batch_plan"];
  bp["N"] = result.batches.batch_size;
  bp["positions"] = result.batches.batches;
  auto frames = nlohmann::ordered_json::array();
  for (const auto& b : result.batch_results) {
    std::vector<int> one;
    for (int f : b.frames) one.push_back(f + 1);
    frames.push_back(one);
  }
  bp["frames"] = frames;

  auto traj = nlohmann::ordered_json::array();
  for (const auto& b : result.batch_results) {
    auto steps = nlohmann::ordered_json::array();
    for (const auto& s : b.steps) {
      nlohmann::ordered_json e;
      e["t"] = s.t;
      e["before"] = loss_json(s.before);
      e["after"] = loss_json(s.after);
      steps.push_back(e);
    }
    traj.push_back(steps);
  }
  j["loss_trajectories"] = traj;

  auto& m = j["metrics"];
  m = nlohmann::ordered_json::object();
  if (info.pixel_mse) m["pixel_mse"] = *info.pixel_mse;
  j["outputs"] = info.output_files;
  if (info.wall_seconds) j["timing"] = {{"wall_seconds", *info.wall_seconds}};
  return j.dump(2) + "\n";
}

}  // namespace fresco::manifest
