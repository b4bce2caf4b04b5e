#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fresco/pipeline.hpp"

namespace fresco::manifest {

inline constexpr int kManifestVersion = 1;

struct RunInfo {
  std::vector<std::string> output_files;
  std::optional<double> pixel_mse;
  std::optional<double> wall_seconds;  // only written when requested; breaks byte-identity
};

/// manifest.json: version, config echo, seed, keyframe plan, batch plan,
/// per-step feature-optimisation losses per batch, metrics. Key order is
/// fixed so identical runs give identical bytes.
std::string build(const pipeline::TranslationConfig& config, const pipeline::TranslationResult& result,
                  const RunInfo& info);

}  // namespace fresco::manifest
