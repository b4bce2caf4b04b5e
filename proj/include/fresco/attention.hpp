#pragma once

#include <compare>
#include <vector>

#include "fresco/grid.hpp"

namespace fresco::attn {

/// A patch address. Frames are 0-based here; row/col index the attention grid.
struct PatchRef {
  int frame = 0;
  int row = 0;
  int col = 0;
  auto operator<=>(const PatchRef&) const = default;
};

/// Key/value support of the cross-frame stage, frame-major then row-major.
using PatchIndexSet = std::vector<PatchRef>;

/// One entry per trajectory; each trajectory visits consecutive frames.
using TrajectorySet = std::vector<std::vector<PatchRef>>;

struct ScaleParams {
  double spatial = 5.0;   // lambda_s
  double temporal = 5.0;  // lambda_t
};

/// Per-frame attention tensors at one hook point. Each grid is h x w x d.
struct AttentionBundle {
  std::vector<Grid> queries;
  std::vector<Grid> keys;
  std::vector<Grid> values;
  std::vector<Grid> ref_queries;  // from the single-step reference pass
  std::vector<Grid> ref_keys;

  int frames() const { return static_cast<int>(queries.size()); }
};

/// Row-stochastic weights softmax(Q K^T / (scale * sqrt(d))), one row per
/// query, using the max-subtracted form.
std::vector<double> softmax_weights(const Grid& q, const Grid& k, double scale);

/// softmax(Q K^T / (scale * sqrt(d))) V. Rows of Q, K, V are patches; d is the
/// shared channel count of Q and K. Output has Q's spatial shape and V's channels.
Grid scaled_softmax_attention(const Grid& q, const Grid& k, const Grid& v, double scale);

/// Q'_i = softmax(Q^r_i K^r_i^T / (lambda_s sqrt(d))) Q_i for every frame.
std::vector<Grid> spatial_guided_attention(const std::vector<Grid>& q, const std::vector<Grid>& ref_q,
                                           const std::vector<Grid>& ref_k, double lambda_s);

/// All patches of frame 0 plus every patch of frame i >= 1 whose mask (w.r.t.
/// frame i-1) is 0. masks[i-1] belongs to frame i, so masks.size() == frames - 1.
PatchIndexSet build_unique_patch_index(int frames, int height, int width,
                                       const std::vector<OcclusionMask>& masks);

/// Gathers rows at `index` from per-frame grids into a |index| x 1 x d grid.
Grid gather(const std::vector<Grid>& per_frame, const PatchIndexSet& index);

/// V'_i = softmax(Q'_i K[p_u]^T / sqrt(d)) V[p_u] for every frame.
std::vector<Grid> efficient_cross_frame_attention(const std::vector<Grid>& q_prime,
                                                  const std::vector<Grid>& keys,
                                                  const std::vector<Grid>& values,
                                                  const PatchIndexSet& unique_patches);

/// Chains patches along forward flows. flows[i] lives on frame i and points
/// into frame i+1 (in attention cells); masks[i] lives on frame i+1. A chain
/// stops at an out-of-bounds, masked or already claimed target; unclaimed
/// patches start new chains. The result partitions every patch.
TrajectorySet build_flow_trajectories(int frames, int height, int width,
                                      const std::vector<FlowField>& flows,
                                      const std::vector<OcclusionMask>& masks);

/// Throws unless `trajectories` covers each patch of frames x height x width exactly once.
void check_partition(const TrajectorySet& trajectories, int frames, int height, int width);

/// H[p_f] = softmax(Q[p_f] K[p_f]^T / (lambda_t sqrt(d))) V'[p_f] per trajectory.
std::vector<Grid> temporal_guided_attention(const std::vector<Grid>& q, const std::vector<Grid>& k,
                                            const std::vector<Grid>& v_prime,
                                            const TrajectorySet& trajectories, double lambda_t);

/// Spatial-guided -> efficient cross-frame -> temporal-guided. The temporal
/// stage uses the original queries and keys with V' from the cross-frame stage.
std::vector<Grid> fresco_attention_layer(const AttentionBundle& bundle,
                                         const PatchIndexSet& unique_patches,
                                         const TrajectorySet& trajectories, const ScaleParams& scales);

namespace reference {

Grid scaled_softmax_attention(const Grid& q, const Grid& k, const Grid& v, double scale);

}  // namespace reference

}  // namespace fresco::attn
