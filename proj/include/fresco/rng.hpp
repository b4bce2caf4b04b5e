#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "fresco/grid.hpp"

namespace fresco {

// Seed splitting: every random stream is derived from the run seed plus a
// purpose code and up to two indices (usually frame and step), mixed with
// SplitMix64. Streams never share state, so adding a consumer never shifts
// another consumer's numbers.
enum class Stream : std::uint64_t {
  init_noise = 1,       // SDEdit noise at T_start, index = global frame
  step_noise = 2,       // z_t of the backward step, indices = (global frame, t)
  reference_noise = 3,  // single-step reference pass, index = global frame
  denoiser_weights = 4,
  codec_weights = 5,
  fixture = 6,
};

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, Stream purpose, std::uint64_t a = 0,
                                    std::uint64_t b = 0) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(purpose));
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ b);
  return h;
}

/// Portable normal sampler: std::mt19937_64 bits are fixed by the standard but
/// std::normal_distribution is not, so Box-Muller is done by hand.
class NormalSource {
 public:
  explicit NormalSource(std::uint64_t seed) : engine_(seed) {}

  double uniform() {
    // 53 random bits -> (0, 1)
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  void fill_normal(Grid& g) {
    for (double& v : g.data) v = normal();
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace fresco
