#pragma once

#include <iosfwd>
#include <vector>

#include "fresco/grid.hpp"

namespace fresco::featopt {

/// Decoder features of N frames plus the latent-resolution correspondence
/// between neighbours. flows[i] lives on frame i+1 and points into frame i
/// (backward convention), masks[i] lives on frame i+1.
struct FeatureBatch {
  std::vector<Grid> features;
  std::vector<FlowField> flows;
  std::vector<OcclusionMask> masks;

  void validate() const;
};

struct OptimConfig {
  double lambda_spat = 50.0;
  int iterations = 20;
  double lr = 0.4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

struct AdamState {
  std::vector<Grid> m;
  std::vector<Grid> v;
  int step = 0;

  static AdamState zeros_like(const std::vector<Grid>& params);
};

struct LossBreakdown {
  double temporal = 0.0;
  double spatial = 0.0;
  double total() const { return temporal + spatial; }
};

/// Norm guard for patch normalisation: f / (|f| + kNormEps).
inline constexpr double kNormEps = 1e-8;

/// sum_i |M_i (f_{i+1} - warp(f_i))|_1 with the mask broadcast over channels.
double temporal_loss(const FeatureBatch& batch);

/// lambda * sum_i |G(f_i) - G(f^r_i)|_F^2 where G is the gram matrix of the
/// per-patch unit-normalised features.
double spatial_loss(const std::vector<Grid>& features, const std::vector<Grid>& reference, double lambda);

/// Patch vectors scaled to unit length (with the kNormEps guard).
Grid normalize_patches(const Grid& f);

/// (h*w) x (h*w) gram matrix of normalised patches, row-major.
std::vector<double> gram_matrix(const Grid& f);

struct LossAndGrad {
  LossBreakdown loss;
  std::vector<Grid> grad;  // one per frame, shaped like the features
};

/// Total loss and its exact gradient. The warp term includes the bilinear
/// adjoint for f_i; sign(0) is taken as 0; the reference is constant.
LossAndGrad loss_and_grad(const FeatureBatch& batch, const std::vector<Grid>& reference,
                          const OptimConfig& config);

/// One bias-corrected Adam step, in place.
void adam_update(AdamState& state, std::vector<Grid>& params, const std::vector<Grid>& grad,
                 const OptimConfig& config);

struct OptimizeResult {
  std::vector<Grid> features;
  /// history[k] is the loss before update k; the last entry is the final loss.
  std::vector<LossBreakdown> history;
};

/// Runs config.iterations Adam steps from a fresh state.
OptimizeResult optimize_features(const FeatureBatch& batch, const std::vector<Grid>& reference,
                                 const OptimConfig& config);

/// CSV with header "iteration,L_temp,L_spat,total".
void write_loss_csv(std::ostream& os, const std::vector<LossBreakdown>& history);

namespace reference {

/// Serial spatial loss and gradient; the OpenMP version must match it exactly.
/// The gradient is added into *grad, which is zero-sized to f if its shape differs.
double spatial_loss_and_grad(const Grid& f, const Grid& ref, double lambda, Grid* grad);

}  // namespace reference

}  // namespace fresco::featopt
