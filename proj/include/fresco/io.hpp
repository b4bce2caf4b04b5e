#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fresco/grid.hpp"

namespace fresco::io {

inline constexpr const char* kFramePattern = "frame_%05d.ppm";

/// Binary PPM (P6, maxval 255) to a height x width x 3 grid in [0, 1].
Grid read_ppm(const std::filesystem::path& path);

/// Values are clamped to [0, 1] and rounded to 8 bits.
void write_ppm(const std::filesystem::path& path, const Grid& frame);

/// File name for 1-based frame number `index` under a printf-style pattern.
std::string frame_name(const std::string& pattern, int index);

/// Reads frame_00001.ppm, frame_00002.ppm, ... . Fails on a numbering gap,
/// naming the first missing file.
std::vector<Grid> read_frames(const std::filesystem::path& dir, const std::string& pattern = kFramePattern);

/// Writes frames as frame_00001.ppm onwards, creating dir if needed. Returns the file names.
std::vector<std::string> write_frames(const std::vector<Grid>& frames, const std::filesystem::path& dir,
                                      const std::string& pattern = kFramePattern);

}  // namespace fresco::io
