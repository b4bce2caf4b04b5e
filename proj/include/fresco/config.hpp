#pragma once

#include <filesystem>
#include <string>

#include "fresco/pipeline.hpp"

namespace fresco::config {

/// Parses a translation config. Missing keys take their defaults; unknown
/// keys and out-of-range values throw Error naming the offending field path.
///
/// Keys: N, s_min, s_max, T, T_start, beta_first, beta_last, t_ref,
/// lambda_s, lambda_t, lambda_spat, K, lr, adam_beta1, adam_beta2, adam_eps,
/// tau, block, radius, seed, guided_attention, feature_optimization, style,
/// condition_seed, denoiser{...}. When T is given without T_start,
/// T_start = round(0.75 T).
pipeline::TranslationConfig parse(const std::string& json_text);
pipeline::TranslationConfig load(const std::filesystem::path& path);

/// Full config as JSON with every key present; parse(to_json(c)) == c.
std::string to_json(const pipeline::TranslationConfig& c);

}  // namespace fresco::config
