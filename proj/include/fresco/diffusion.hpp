#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fresco/grid.hpp"

namespace fresco::diffusion {

/// DDPM noise schedule. Index t runs 0..T; index 0 is the clean state
/// (beta = 0, alpha_bar = 1).
struct NoiseSchedule {
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;

  int steps() const { return static_cast<int>(beta.size()) - 1; }
  void check_step(int t, int lo, const char* op) const;
};

/// Linear beta from beta_first to beta_last over T steps; cumulative
/// products are accumulated in long double.
NoiseSchedule build_schedule(int steps, double beta_first, double beta_last);

/// Schedule from explicit betas (betas[0] is step 1).
NoiseSchedule schedule_from_betas(const std::vector<double>& betas);

/// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) noise. t = 0 returns x0.
Grid forward_sample(const Grid& x0, int t, const Grid& noise, const NoiseSchedule& s);

/// x0_hat = (x_t - sqrt(1 - abar_t) eps) / sqrt(abar_t), t in [1, T].
Grid predict_x0(const Grid& x_t, const Grid& eps, int t, const NoiseSchedule& s);

/// One ancestral step:
///   x_{t-1} = sqrt(abar_{t-1}) beta_t / (1 - abar_t) * x0_hat
///           + (1 - abar_{t-1}) (sqrt(alpha_t) x_t + beta_t z_t) / (1 - abar_t)
Grid backward_step(const Grid& x_t, const Grid& x0_hat, const Grid& z, int t, const NoiseSchedule& s);

/// Lossless stand-in for the image encoder/decoder: each p x p x 3 pixel patch
/// is multiplied by a seeded orthogonal matrix, giving an (H/p) x (W/p) x 3p^2
/// latent.
class ToyLatentCodec {
 public:
  ToyLatentCodec(int patch_size, std::uint64_t seed);

  int patch_size() const { return patch_; }
  int latent_channels() const { return 3 * patch_ * patch_; }

  Grid encode(const Grid& frame) const;
  Grid decode(const Grid& latent) const;

 private:
  int patch_;
  std::vector<double> basis_;  // k x k row-major, orthogonal
};

/// Seeded orthogonal n x n matrix (Gram-Schmidt on Gaussian columns), row-major.
std::vector<double> random_orthogonal(int n, std::uint64_t seed);

/// Stand-in for prompt c and control e. Identical payloads give identical
/// denoiser behaviour.
struct DenoiseCondition {
  std::uint64_t seed = 0;
  std::vector<double> style;
};

/// Serializable shape/seed contract of a denoiser. Hook tensors are
/// (latent h*w) x feature_dim.
struct ArchitectureDescriptor {
  std::string name = "toy";
  int patch_size = 2;
  int latent_channels = 12;
  int feature_dim = 16;
  int style_length = 3;
  std::uint64_t seed = 1234;
  double attention_gain = 0.6;  // scales Q and K
  double attention_mix = 1.0;   // weight of the attention branch in the decoder feature
  double feature_scale = 64.0;  // magnitude of hook features; Q and K see features / feature_scale
  // Attention weight at step t is attention_mix * s2 / (s2 + signal_variance),
  // s2 = (1 - abar_t) / abar_t. Zero keeps it constant.
  double signal_variance = 0.03;
  // Sinusoidal position code added in the feature directions the head ignores.
  double position_gain = 10.0;

  std::string to_json() const;
  static ArchitectureDescriptor from_json(const std::string& text);
  void validate() const;
  bool operator==(const ArchitectureDescriptor&) const = default;
};

struct AttentionTensors {
  Grid q, k, v;
};

struct DenoiserOutput {
  Grid eps;
  Grid features;
  Grid q, k, v;
};

/// Capability contract for a noise predictor with one FRESCO hook point.
///
/// A forward pass is split at the hook: hook_features() runs up to the
/// decoder feature f, attention_inputs() projects f to Q, K, V, and
/// predict_noise() finishes from a (possibly replaced) f and attention
/// output H. denoise() chains them with plain per-frame self-attention.
class Denoiser {
 public:
  virtual ~Denoiser() = default;

  virtual const ArchitectureDescriptor& descriptor() const = 0;
  virtual Grid hook_features(const Grid& x_t, int t, const DenoiseCondition& cond) const = 0;
  virtual AttentionTensors attention_inputs(const Grid& features) const = 0;
  virtual Grid predict_noise(const Grid& x_t, int t, const DenoiseCondition& cond, const Grid& features,
                             const Grid& attention_out) const = 0;

  DenoiserOutput denoise(const Grid& x_t, int t, const DenoiseCondition& cond) const;
};

/// Seeded linear encoder -> single-head attention block -> linear head.
/// The head produces an x0 estimate, shifted by a style bias, which is
/// converted to a noise prediction through the schedule.
class ToyDenoiser final : public Denoiser {
 public:
  ToyDenoiser(ArchitectureDescriptor desc, NoiseSchedule schedule);

  const ArchitectureDescriptor& descriptor() const override { return desc_; }
  Grid hook_features(const Grid& x_t, int t, const DenoiseCondition& cond) const override;
  AttentionTensors attention_inputs(const Grid& features) const override;
  Grid predict_noise(const Grid& x_t, int t, const DenoiseCondition& cond, const Grid& features,
                     const Grid& attention_out) const override;

 private:
  std::vector<double> condition_bias(const DenoiseCondition& cond) const;

  ArchitectureDescriptor desc_;
  NoiseSchedule schedule_;
  std::vector<double> enc_;        // feature_dim x latent_channels, orthonormal columns
  std::vector<double> pos_;        // feature_dim x (feature_dim - latent_channels), orthonormal columns
  std::vector<double> enc_bias_;   // feature_dim
  std::vector<double> qk_;         // feature_dim x feature_dim, shared by Q and K
  std::vector<double> val_;        // feature_dim x feature_dim, orthogonal; output uses its transpose
  std::vector<double> style_map_;  // latent_channels x style_length
};

struct ReferenceCapture {
  Grid features;
  Grid q;
  Grid k;
};

/// Encodes a frame, noises it to t_ref with the given noise, runs the
/// denoiser once and captures f, Q, K at the hook.
ReferenceCapture single_step_reference(const Denoiser& denoiser, const ToyLatentCodec& codec,
                                       const NoiseSchedule& schedule, const Grid& frame, int t_ref,
                                       const Grid& noise, const DenoiseCondition& cond);

}  // namespace fresco::diffusion
