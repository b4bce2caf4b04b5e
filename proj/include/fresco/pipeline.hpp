#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <vector>

#include "fresco/attention.hpp"
#include "fresco/diffusion.hpp"
#include "fresco/featopt.hpp"
#include "fresco/flowfield.hpp"
#include "fresco/grid.hpp"

namespace fresco::pipeline {

/// Frames are height x width x 3 grids with values in [0, 1].
using Video = std::vector<Grid>;

// ---------------------------------------------------------------------------
// Keyframes and batches. Keyframe numbers and batch positions are 1-based,
// matching how they are printed and stored in manifests.

struct KeyframePlan {
  std::vector<int> keyframes;  // ascending, contains 1 and frame_count
  int frame_count = 0;
  int s_min = 1;
  int s_max = 1;
  std::vector<double> motion;  // motion[i] = score of frame i (index 0 unused)
};

/// L2 distance between frame i and i-1 for i in [s_min + 1, M - s_min], 0 elsewhere.
std::vector<double> motion_scores(const Video& video, int s_min);

/// Greedy keyframe insertion until no gap exceeds s_max. The argmax only
/// considers frames strictly inside an oversized gap; when all of those have
/// zero score, the midpoint of the leftmost oversized gap is inserted.
KeyframePlan select_keyframes_from_scores(int frame_count, std::vector<double> motion, int s_min, int s_max);
KeyframePlan select_keyframes(const Video& video, int s_min, int s_max);

struct BatchPlan {
  int batch_size = 0;
  std::vector<std::vector<int>> batches;  // 1-based positions into the keyframe list
};

/// Batch k holds positions {1, (k-1)(N-2)+2, ..., k(N-2)+2}, truncated at the
/// keyframe count. Requires N >= 3.
BatchPlan plan_batches(int keyframe_count, int batch_size);

// ---------------------------------------------------------------------------
// Correspondence of the input video.

/// Adjacent-frame flows at pixel resolution. backward[i] lives on frame i+1
/// and points into frame i; forward[i] lives on frame i and points into
/// frame i+1; mask[i] lives on frame i+1 (1 = seen in frame i).
struct Correspondence {
  std::vector<FlowField> backward;
  std::vector<FlowField> forward;
  std::vector<OcclusionMask> mask;
  double tau = 1.0;
};

Correspondence estimate_correspondence(const Video& video, flow::BlockMatchParams match, double tau);

/// Flows between frames a < b (0-based), composed from adjacent flows.
struct PairFlow {
  FlowField backward;           // on b, into a
  FlowField forward;            // on a, into b
  OcclusionMask backward_mask;  // on b
  OcclusionMask forward_mask;   // on a
};

PairFlow pair_flow(const Correspondence& corr, int a, int b);

// ---------------------------------------------------------------------------
// Translation.

struct TranslationConfig {
  int batch_size = 6;
  int s_min = 2;
  int s_max = 4;
  int steps = 50;
  int t_start = 38;
  double beta_first = 1e-4;
  double beta_last = 0.02;
  int t_ref = 1;
  attn::ScaleParams scales;
  featopt::OptimConfig optim;
  double tau = 1.0;
  flow::BlockMatchParams match;
  std::uint64_t seed = 0;
  bool guided_attention = true;
  bool feature_optimization = true;
  diffusion::ArchitectureDescriptor denoiser;
  diffusion::DenoiseCondition condition;

  void validate() const;
};

/// Latents x'_t of selected frames for every visited step t, keyed by
/// global frame index (0-based). latents[frame][t] for t in 0..t_start.
struct AnchorCache {
  std::map<int, std::vector<Grid>> latents;

  bool contains(int frame) const { return latents.count(frame) != 0; }
};

struct StepLog {
  int t = 0;
  featopt::LossBreakdown before;
  featopt::LossBreakdown after;
};

struct BatchResult {
  std::vector<int> frames;     // global 0-based frame indices
  std::vector<Grid> latents;   // x'_0 per frame
  std::vector<Grid> decoded;   // decoded x'_0 per frame
  AnchorCache anchors;         // this batch's first and last frames
  std::vector<StepLog> steps;  // feature optimisation per step (empty when disabled)
};

struct TranslationResult {
  Video frames;
  KeyframePlan keyframes;
  BatchPlan batches;
  std::vector<BatchResult> batch_results;
};

/// Owns the schedule, codec and denoiser for one configuration.
class Translator {
 public:
  explicit Translator(TranslationConfig config);
  Translator(TranslationConfig config, std::shared_ptr<const diffusion::Denoiser> denoiser);

  const TranslationConfig& config() const { return config_; }
  const diffusion::NoiseSchedule& schedule() const { return schedule_; }
  const diffusion::ToyLatentCodec& codec() const { return codec_; }
  const diffusion::Denoiser& denoiser() const { return *denoiser_; }

  /// Jointly denoises video[frames[0]], video[frames[1]], ... from t_start to 0.
  /// Frames present in anchors_in have their latents overwritten with the
  /// recorded values at initialisation and after every backward step.
  BatchResult translate_batch(const Video& video, const Correspondence& corr, const std::vector<int>& frames,
                              const AnchorCache& anchors_in = {}) const;

  TranslationResult translate_video(const Video& video) const;

 private:
  TranslationConfig config_;
  diffusion::NoiseSchedule schedule_;
  diffusion::ToyLatentCodec codec_;
  std::shared_ptr<const diffusion::Denoiser> denoiser_;
};

/// Fills the frames between translated keyframes. Each in-between frame warps
/// its two enclosing keyframes along composed input flows and blends them with
/// weights proportional to temporal proximity, renormalised over valid
/// warps; pixels valid in neither take the nearer keyframe's warp.
/// keyframes are 0-based indices, translated[k] belongs to keyframes[k].
Video interpolate_nonkeyframes(const std::vector<int>& keyframes, const Video& translated,
                               const Correspondence& corr, int frame_count);

/// Mean over consecutive pairs of the masked MSE between frame i+1 and frame
/// i warped onto it along block-matching flow. Pixel values are clamped to
/// [0, 1]. Pairs with no valid pixel are skipped; if all are, throws.
double pixel_mse(const Video& video, flow::BlockMatchParams match = {}, double tau = 1.0);

}  // namespace fresco::pipeline
