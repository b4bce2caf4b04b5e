#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include "fresco/grid.hpp"
#include "fresco/rng.hpp"

namespace testing {

inline std::filesystem::path fixture(const std::string& rel) { return std::filesystem::path(FRESCO_FIXTURE_DIR) / rel; }

inline fresco::Grid random_grid(std::uint64_t seed, int h, int w, int c, double scale = 1.0) {
  fresco::NormalSource rng(seed);
  fresco::Grid g(h, w, c);
  for (double& v : g.data) v = scale * rng.normal();
  return g;
}

inline double max_abs_diff(const fresco::Grid& a, const fresco::Grid& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::fabs(a.data[i] - b.data[i]));
  return m;
}

// Fresh scratch directory under the build tree.
inline std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::path(FRESCO_SCRATCH_DIR) / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testing
