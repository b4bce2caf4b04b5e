#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fresco/featopt.hpp"

namespace fresco::selfcheck {

struct CheckResult {
  std::string name;
  bool passed = false;
  double worst = 0.0;  // largest observed error
  double tolerance = 0.0;
  std::string detail;
};

/// A seeded feature batch with fractional flows and random occlusion masks.
struct GradientInstance {
  featopt::FeatureBatch batch;
  std::vector<Grid> reference;
  double lambda_spat = 50.0;
};

GradientInstance random_gradient_instance(std::uint64_t seed, int frames = 3, int height = 8, int width = 8,
                                          int channels = 4);

/// Total loss evaluated independently in long double with the features given
/// as flat per-frame arrays.
long double oracle_loss(const GradientInstance& inst, const std::vector<std::vector<long double>>& features);

/// Analytic gradient against central differences of oracle_loss. The
/// relative error of each component is |a - n| / max(|a|, |n|, floor).
CheckResult gradient_check(const GradientInstance& inst, long double step = 1e-4L, double tolerance = 1e-4,
                           double floor = 1e-6);

CheckResult cross_frame_oracle(std::uint64_t seed, int instances = 50, double tolerance = 1e-6);
CheckResult cross_frame_dense(std::uint64_t seed, int instances = 50, double tolerance = 1e-6);
CheckResult spatial_guided_oracle(std::uint64_t seed, double tolerance = 1e-8);
CheckResult temporal_guided_oracle(std::uint64_t seed, double tolerance = 1e-8);

std::vector<CheckResult> run_all(std::uint64_t seed = 0);

}  // namespace fresco::selfcheck
