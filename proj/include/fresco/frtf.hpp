#pragma once

// FRTF binary tensor files: "FRTF", u32 version (1), u32 dtype (0 = f32,
// 1 = f64), u32 ndim, ndim x u32 dims, row-major payload. All integers and
// floats little-endian.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fresco/grid.hpp"

namespace fresco::frtf {

enum class DType : std::uint32_t { f32 = 0, f64 = 1 };

struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<double> values;  // widened on read, narrowed on write for f32

  std::size_t element_count() const;
};

std::vector<unsigned char> encode(const Tensor& t, DType dtype);
Tensor decode(const std::vector<unsigned char>& bytes);

void write(const std::filesystem::path& path, const Tensor& t, DType dtype = DType::f64);
Tensor read(const std::filesystem::path& path);

// Shape adapters: grids as [H, W, C], flows as [H, W, 2], masks as [H, W],
// sequences of equal-shape grids as [N, H, W, C].
Tensor from_grid(const Grid& g);
Grid to_grid(const Tensor& t);
Tensor from_flow(const FlowField& f);
FlowField to_flow(const Tensor& t);
Tensor from_mask(const OcclusionMask& m);
OcclusionMask to_mask(const Tensor& t);
Tensor from_grids(const std::vector<Grid>& gs);
std::vector<Grid> to_grids(const Tensor& t);
Tensor from_flows(const std::vector<FlowField>& fs);
std::vector<FlowField> to_flows(const Tensor& t);
Tensor from_masks(const std::vector<OcclusionMask>& ms);
std::vector<OcclusionMask> to_masks(const Tensor& t);

}  // namespace fresco::frtf
