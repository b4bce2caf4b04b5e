#include "fresco/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace fresco::config {

namespace {

using nlohmann::json;

template <typename T>
T field(const json& v, const std::string& path) {
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw Error("expected a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw Error("expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_integer() && !v.is_number_unsigned()) throw Error("expected a non-negative integer");
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw Error("expected a number");
    }
    return v.get<T>();
  } catch (const Error& e) {
    throw Error("config field '" + path + "': " + e.what());
  } catch (const json::exception& e) {
    throw Error("config field '" + path + "': " + e.what());
  }
}

void range_check(bool ok, const std::string& path, const std::string& rule) {
  if (!ok) throw Error("config field '" + path + "': " + rule);
}

diffusion::ArchitectureDescriptor parse_denoiser(const json& j) {
  if (!j.is_object()) throw Error("config field 'denoiser': expected an object");
  diffusion::ArchitectureDescriptor d;
  bool channels_given = false;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string k = it.key(), path = "denoiser." + k;
    if (k == "name") d.name = field<std::string>(*it, path);
    else if (k == "patch_size") d.patch_size = field<int>(*it, path);
    else if (k == "latent_channels") {
      d.latent_channels = field<int>(*it, path);
      channels_given = true;
    } else if (k == "feature_dim") d.feature_dim = field<int>(*it, path);
    else if (k == "style_length") d.style_length = field<int>(*it, path);
    else if (k == "seed") d.seed = field<std::uint64_t>(*it, path);
    else if (k == "attention_gain") d.attention_gain = field<double>(*it, path);
    else if (k == "attention_mix") d.attention_mix = field<double>(*it, path);
    else if (k == "feature_scale") d.feature_scale = field<double>(*it, path);
    else if (k == "signal_variance") d.signal_variance = field<double>(*it, path);
    else if (k == "position_gain") d.position_gain = field<double>(*it, path);
    else throw Error("config: unknown key '" + path + "'");
  }
  range_check(d.patch_size >= 1, "denoiser.patch_size", "must be >= 1");
  if (!channels_given) d.latent_channels = 3 * d.patch_size * d.patch_size;
  range_check(d.latent_channels == 3 * d.patch_size * d.patch_size, "denoiser.latent_channels",
              "must equal 3 * patch_size^2");
  range_check(d.feature_dim >= d.latent_channels, "denoiser.feature_dim", "must be >= latent_channels");
  range_check(d.style_length >= 0, "denoiser.style_length", "must be >= 0");
  range_check(d.attention_gain > 0.0, "denoiser.attention_gain", "must be positive");
  range_check(d.attention_mix >= 0.0 && d.attention_mix <= 1.0, "denoiser.attention_mix", "must lie in [0, 1]");
  range_check(d.feature_scale > 0.0, "denoiser.feature_scale", "must be positive");
  range_check(d.signal_variance >= 0.0, "denoiser.signal_variance", "must be >= 0");
  range_check(d.position_gain >= 0.0, "denoiser.position_gain", "must be >= 0");
  return d;
}

}  // namespace

pipeline::TranslationConfig parse(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(std::string("config: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error("config: expected a JSON object");

  pipeline::TranslationConfig c;
  bool t_start_given = false;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    const json& v = *it;
    if (k == "N") c.batch_size = field<int>(v, k);
    else if (k == "s_min") c.s_min = field<int>(v, k);
    else if (k == "s_max") c.s_max = field<int>(v, k);
    else if (k == "T") c.steps = field<int>(v, k);
    else if (k == "T_start") {
      c.t_start = field<int>(v, k);
      t_start_given = true;
    } else if (k == "beta_first") c.beta_first = field<double>(v, k);
    else if (k == "beta_last") c.beta_last = field<double>(v, k);
    else if (k == "t_ref") c.t_ref = field<int>(v, k);
    else if (k == "lambda_s") c.scales.spatial = field<double>(v, k);
    else if (k == "lambda_t") c.scales.temporal = field<double>(v, k);
    else if (k == "lambda_spat") c.optim.lambda_spat = field<double>(v, k);
    else if (k == "K") c.optim.iterations = field<int>(v, k);
    else if (k == "lr") c.optim.lr = field<double>(v, k);
    else if (k == "adam_beta1") c.optim.beta1 = field<double>(v, k);
    else if (k == "adam_beta2") c.optim.beta2 = field<double>(v, k);
    else if (k == "adam_eps") c.optim.eps = field<double>(v, k);
    else if (k == "tau") c.tau = field<double>(v, k);
    else if (k == "block") c.match.block = field<int>(v, k);
    else if (k == "radius") c.match.radius = field<int>(v, k);
    else if (k == "seed") c.seed = field<std::uint64_t>(v, k);
    else if (k == "guided_attention") c.guided_attention = field<bool>(v, k);
    else if (k == "feature_optimization") c.feature_optimization = field<bool>(v, k);
    else if (k == "condition_seed") c.condition.seed = field<std::uint64_t>(v, k);
    else if (k == "style") {
      if (!v.is_array()) throw Error("config field 'style': expected an array of numbers");
      c.condition.style.clear();
      for (std::size_t i = 0; i < v.size(); ++i)
        c.condition.style.push_back(field<double>(v[i], "style[" + std::to_string(i) + "]"));
    } else if (k == "denoiser") c.denoiser = parse_denoiser(v);
    else throw Error("config: unknown key '" + k + "'");
  }
  if (!t_start_given) c.t_start = static_cast<int>(std::lround(0.75 * c.steps));

  range_check(c.batch_size >= 3, "N", "must be >= 3 (batch overlap needs two shared slots)");
  range_check(c.s_min >= 1, "s_min", "must be >= 1");
  range_check(c.s_max >= c.s_min, "s_max", "must be >= s_min");
  range_check(c.steps >= 1, "T", "must be >= 1");
  range_check(c.t_start >= 1 && c.t_start <= c.steps, "T_start", "must lie in [1, T]");
  range_check(c.t_ref >= 1 && c.t_ref <= c.steps, "t_ref", "must lie in [1, T]");
  range_check(c.beta_first > 0.0 && c.beta_first < 1.0, "beta_first", "must lie in (0, 1)");
  range_check(c.beta_last >= c.beta_first && c.beta_last < 1.0, "beta_last", "must lie in [beta_first, 1)");
  range_check(c.scales.spatial > 0.0, "lambda_s", "must be positive");
  range_check(c.scales.temporal > 0.0, "lambda_t", "must be positive");
  range_check(c.optim.lambda_spat >= 0.0, "lambda_spat", "must be >= 0");
  range_check(c.optim.iterations >= 0, "K", "must be >= 0");
  range_check(c.optim.lr > 0.0, "lr", "must be positive");
  range_check(c.optim.beta1 >= 0.0 && c.optim.beta1 < 1.0, "adam_beta1", "must lie in [0, 1)");
  range_check(c.optim.beta2 >= 0.0 && c.optim.beta2 < 1.0, "adam_beta2", "must lie in [0, 1)");
  range_check(c.optim.eps > 0.0, "adam_eps", "must be positive");
  range_check(c.tau > 0.0, "tau", "must be positive");
  range_check(c.match.block >= 1, "block", "must be >= 1");
  range_check(c.match.radius >= 0, "radius", "must be >= 0");
  range_check(c.condition.style.empty() || static_cast<int>(c.condition.style.size()) == c.denoiser.style_length,
              "style", "length must equal denoiser.style_length");
  c.validate();
  return c;
}

pipeline::TranslationConfig load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  try {
    return parse(ss.str());
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

std::string to_json(const pipeline::TranslationConfig& c) {
  nlohmann::ordered_json j;
  j["N"] = c.batch_size;
  j["s_min"] = c.s_min;
  j["s_max"] = c.s_max;
  j["T"] = c.steps;
  j["T_start"] = c.t_start;
  j["beta_first"] = c.beta_first;
  j["beta_last"] = c.beta_last;
  j["t_ref"] = c.t_ref;
  j["lambda_s"] = c.scales.spatial;
  j["lambda_t"] = c.scales.temporal;
  j["lambda_spat"] = c.optim.lambda_spat;
  j["K"] = c.optim.iterations;
  j["lr"] = c.optim.lr;
  j["adam_beta1"] = c.optim.beta1;
  j["adam_beta2"] = c.optim.beta2;
  j["adam_eps"] = c.optim.eps;
  j["tau"] = c.tau;
  j["block"] = c.match.block;
  j["radius"] = c.match.radius;
  j["seed"] = c.seed;
  j["guided_attention"] = c.guided_attention;
  j["feature_optimization"] = c.feature_optimization;
  j["condition_seed"] = c.condition.seed;
  j["style"] = c.condition.style;
  j["denoiser"] = nlohmann::ordered_json::parse(c.denoiser.to_json());
  return j.dump(2);
}

}  // namespace fresco::config
