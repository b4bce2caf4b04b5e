#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fresco {

/// Raised on any contract violation (shape mismatch, bad parameter, malformed file).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense row-major height x width x channels array of doubles.
///
/// Carries images (channels = 3), latents, decoder features and attention
/// tensors. Attention code treats a grid as a (height*width) x channels
/// matrix: one row per patch.
struct Grid {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;

  Grid() = default;
  Grid(int h, int w, int c, double fill = 0.0)
      : height(h), width(w), channels(c) {
    if (h < 0 || w < 0 || c < 0) throw Error("Grid: negative dimension");
    data.assign(static_cast<std::size_t>(h) * w * c, fill);
  }

  std::size_t index(int y, int x, int c = 0) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  double& at(int y, int x, int c = 0) { return data[index(y, x, c)]; }
  double at(int y, int x, int c = 0) const { return data[index(y, x, c)]; }

  int rows() const { return height * width; }
  std::span<double> row(int r) {
    return {data.data() + static_cast<std::size_t>(r) * channels,
            static_cast<std::size_t>(channels)};
  }
  std::span<const double> row(int r) const {
    return {data.data() + static_cast<std::size_t>(r) * channels,
            static_cast<std::size_t>(channels)};
  }

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }

  bool same_shape(const Grid& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
  bool operator==(const Grid&) const = default;
};

/// Per-pixel displacement (dx, dy), indexed on the target frame: pixel p of the
/// target samples the source at p + vector(p).
struct FlowField {
  Grid vectors;  // height x width x 2, channel 0 = dx, channel 1 = dy

  FlowField() = default;
  FlowField(int h, int w, double dx = 0.0, double dy = 0.0) : vectors(h, w, 2) {
    for (std::size_t i = 0; i < vectors.data.size(); i += 2) {
      vectors.data[i] = dx;
      vectors.data[i + 1] = dy;
    }
  }

  int height() const { return vectors.height; }
  int width() const { return vectors.width; }
  double dx(int y, int x) const { return vectors.at(y, x, 0); }
  double dy(int y, int x) const { return vectors.at(y, x, 1); }
  void set(int y, int x, double dx, double dy) {
    vectors.at(y, x, 0) = dx;
    vectors.at(y, x, 1) = dy;
  }
  bool operator==(const FlowField&) const = default;
};

/// Binary validity map; 1 = valid correspondence, 0 = occluded or out of bounds.
struct OcclusionMask {
  int height = 0;
  int width = 0;
  std::vector<unsigned char> values;

  OcclusionMask() = default;
  OcclusionMask(int h, int w, unsigned char fill = 1)
      : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}

  unsigned char at(int y, int x) const {
    return values[static_cast<std::size_t>(y) * width + x];
  }
  unsigned char& at(int y, int x) {
    return values[static_cast<std::size_t>(y) * width + x];
  }
  std::size_t count_valid() const {
    std::size_t n = 0;
    for (auto v : values) n += v ? 1 : 0;
    return n;
  }
  bool operator==(const OcclusionMask&) const = default;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

}  // namespace fresco
