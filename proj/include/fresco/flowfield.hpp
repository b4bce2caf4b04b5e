#pragma once

#include <string>
#include <utility>

#include "fresco/grid.hpp"

namespace fresco::flow {

/// Bilinear sample of channel c at real coordinates (y, x). Coordinates are
/// clamped to the grid first, so out-of-bounds reads return border values.
double sample_bilinear(const Grid& src, double y, double x, int c);

/// out(p) = bilinear sample of src at p + flow(p), border-clamped.
/// Throws Error when the flow and src spatial sizes differ.
Grid backward_warp(const Grid& src, const FlowField& flow);

/// Adjoint of backward_warp with respect to src: scatters each output
/// gradient into the (up to) four source cells with their bilinear weights.
Grid backward_warp_adjoint(const Grid& grad_out, const FlowField& flow);

/// Forward-backward consistency check. Pixel p is valid iff p + fwd(p) lies
/// inside the frame and |fwd(p) + bwd(p + fwd(p))| <= tau.
OcclusionMask compute_occlusion_mask(const FlowField& fwd, const FlowField& bwd, double tau = 1.0);

struct BlockMatchParams {
  int block = 4;
  int radius = 8;
};

/// Exhaustive SSD block matching. For each block of src, finds the integer
/// displacement d with |d| <= radius (per axis) minimising the SSD between
/// the block and dst sampled at block + d (border-replicated), then writes d
/// to every pixel of the block. The result is indexed on src: src(p) ~ dst(p + flow(p)).
/// Ties: smaller |d|^2, then smaller dy, then smaller dx.
FlowField estimate_flow_block_matching(const Grid& src, const Grid& dst, BlockMatchParams params = {});

/// Flow and mask at a coarser resolution. Vectors are area-averaged and
/// divided by factor; a coarse cell is valid only if every covered pixel is.
std::pair<FlowField, OcclusionMask> downsample_to_latent(const FlowField& flow,
                                                         const OcclusionMask& mask, int factor);

/// Chains two backward-convention flows: `first` on frame A pointing into B,
/// `second` on B pointing into C. Result on A pointing into C.
FlowField compose(const FlowField& first, const FlowField& second);

enum class SynthKind { zero, constant, rotation };

SynthKind parse_synth_kind(const std::string& name);

struct SynthParams {
  int height = 0;
  int width = 0;
  double dx = 0.0;         // constant
  double dy = 0.0;         // constant
  double angle_deg = 0.0;  // rotation about the grid centre ((W-1)/2, (H-1)/2)
};

struct SynthFlow {
  FlowField flow;
  FlowField inverse;  // exact inverse mapping, indexed on the other frame
};

SynthFlow synth_flow(SynthKind kind, const SynthParams& params);

namespace reference {

// Single-threaded versions kept as the test and benchmark baseline for the
// OpenMP kernels above. Outputs must match them bit for bit.
Grid backward_warp(const Grid& src, const FlowField& flow);
FlowField estimate_flow_block_matching(const Grid& src, const Grid& dst, BlockMatchParams params = {});

}  // namespace reference

}  // namespace fresco::flow
