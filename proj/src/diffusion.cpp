#include "fresco/diffusion.hpp"

#include <cmath>
#include <numbers>

#include "json.hpp"
#include "fresco/attention.hpp"
#include "fresco/parallel.hpp"
#include "fresco/rng.hpp"

namespace fresco::diffusion {

namespace {

void check_same(const Grid& a, const Grid& b, const char* op) {
  if (!a.same_shape(b)) throw Error(std::string(op) + ": operand shapes differ");
}

// y = A x for a rows x cols row-major A.
void matvec(const std::vector<double>& a, int rows, int cols, std::span<const double> x, std::span<double> y) {
  for (int r = 0; r < rows; ++r) {
    double s = 0.0;
    for (int c = 0; c < cols; ++c) s += a[static_cast<std::size_t>(r) * cols + c] * x[c];
    y[r] = s;
  }
}

// y = A^T x.
void matvec_t(const std::vector<double>& a, int rows, int cols, std::span<const double> x, std::span<double> y) {
  for (int c = 0; c < cols; ++c) {
    double s = 0.0;
    for (int r = 0; r < rows; ++r) s += a[static_cast<std::size_t>(r) * cols + c] * x[r];
    y[c] = s;
  }
}

}  // namespace

void NoiseSchedule::check_step(int t, int lo, const char* op) const {
  if (t < lo || t > steps())
    throw Error(std::string(op) + ": step " + std::to_string(t) + " outside [" + std::to_string(lo) + ", " +
                std::to_string(steps()) + "]");
}

NoiseSchedule schedule_from_betas(const std::vector<double>& betas) {
  if (betas.empty()) throw Error("schedule: need at least one step");
  NoiseSchedule s;
  s.beta.push_back(0.0);
  s.alpha.push_back(1.0);
  s.alpha_bar.push_back(1.0);
  long double cum = 1.0L;
  for (double b : betas) {
    if (!(b > 0.0 && b < 1.0)) throw Error("schedule: beta must lie in (0, 1)");
    s.beta.push_back(b);
    s.alpha.push_back(1.0 - b);
    cum *= 1.0L - static_cast<long double>(b);
    s.alpha_bar.push_back(static_cast<double>(cum));
  }
  return s;
}

NoiseSchedule build_schedule(int steps, double beta_first, double beta_last) {
  if (steps < 1) throw Error("build_schedule: T must be >= 1");
  if (!(beta_first > 0.0 && beta_first <= beta_last && beta_last < 1.0))
    throw Error("build_schedule: need 0 < beta_first <= beta_last < 1");
  std::vector<double> betas(steps);
  for (int i = 0; i < steps; ++i) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / (steps - 1);
    betas[i] = beta_first + (beta_last - beta_first) * frac;
  }
  return schedule_from_betas(betas);
}

Grid forward_sample(const Grid& x0, int t, const Grid& noise, const NoiseSchedule& s) {
  s.check_step(t, 0, "forward_sample");
  check_same(x0, noise, "forward_sample");
  if (t == 0) return x0;
  const double a = std::sqrt(s.alpha_bar[t]), b = std::sqrt(1.0 - s.alpha_bar[t]);
  Grid out(x0.height, x0.width, x0.channels);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = a * x0.data[i] + b * noise.data[i];
  return out;
}

Grid predict_x0(const Grid& x_t, const Grid& eps, int t, const NoiseSchedule& s) {
  s.check_step(t, 1, "predict_x0");
  check_same(x_t, eps, "predict_x0");
  const double a = std::sqrt(s.alpha_bar[t]), b = std::sqrt(1.0 - s.alpha_bar[t]);
  Grid out(x_t.height, x_t.width, x_t.channels);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = (x_t.data[i] - b * eps.data[i]) / a;
  return out;
}

Grid backward_step(const Grid& x_t, const Grid& x0_hat, const Grid& z, int t, const NoiseSchedule& s) {
  s.check_step(t, 1, "backward_step");
  check_same(x_t, x0_hat, "backward_step");
  check_same(x_t, z, "backward_step");
  const double abar = s.alpha_bar[t], abar_prev = s.alpha_bar[t - 1];
  const double beta = s.beta[t], alpha = s.alpha[t];
  const double c0 = std::sqrt(abar_prev) * beta / (1.0 - abar);
  const double ct = (1.0 - abar_prev) / (1.0 - abar);
  const double sa = std::sqrt(alpha);
  Grid out(x_t.height, x_t.width, x_t.channels);
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = c0 * x0_hat.data[i] + ct * (sa * x_t.data[i] + beta * z.data[i]);
  return out;
}

std::vector<double> random_orthogonal(int n, std::uint64_t seed) {
  if (n < 1) throw Error("random_orthogonal: n must be >= 1");
  NormalSource rng(seed);
  // columns stored contiguously while orthogonalising
  std::vector<std::vector<double>> cols(n, std::vector<double>(n));
  for (auto& col : cols)
    for (double& v : col) v = rng.normal();
  for (int j = 0; j < n; ++j) {
    for (int pass = 0; pass < 2; ++pass) {
      for (int i = 0; i < j; ++i) {
        double dot = 0.0;
        for (int r = 0; r < n; ++r) dot += cols[i][r] * cols[j][r];
        for (int r = 0; r < n; ++r) cols[j][r] -= dot * cols[i][r];
      }
    }
    double norm = 0.0;
    for (double v : cols[j]) norm += v * v;
    norm = std::sqrt(norm);
    if (norm < 1e-12) throw Error("random_orthogonal: degenerate draw");
    for (double& v : cols[j]) v /= norm;
  }
  std::vector<double> m(static_cast<std::size_t>(n) * n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) m[static_cast<std::size_t>(r) * n + c] = cols[c][r];
  return m;
}

ToyLatentCodec::ToyLatentCodec(int patch_size, std::uint64_t seed) : patch_(patch_size) {
  if (patch_size < 1) throw Error("ToyLatentCodec: patch size must be >= 1");
  basis_ = random_orthogonal(latent_channels(), derive_seed(seed, Stream::codec_weights));
}

Grid ToyLatentCodec::encode(const Grid& frame) const {
  if (frame.channels != 3) throw Error("ToyLatentCodec::encode: expected 3 channels");
  if (frame.height % patch_ != 0 || frame.width % patch_ != 0)
    throw Error("ToyLatentCodec::encode: frame " + std::to_string(frame.height) + "x" + std::to_string(frame.width) +
                " not divisible by patch size " + std::to_string(patch_));
  const int k = latent_channels();
  Grid out(frame.height / patch_, frame.width / patch_, k);
  std::vector<double> patch(k);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      int i = 0;
      for (int py = 0; py < patch_; ++py)
        for (int px = 0; px < patch_; ++px)
          for (int c = 0; c < 3; ++c) patch[i++] = frame.at(y * patch_ + py, x * patch_ + px, c);
      matvec(basis_, k, k, patch, out.row(y * out.width + x));
    }
  return out;
}

Grid ToyLatentCodec::decode(const Grid& latent) const {
  const int k = latent_channels();
  if (latent.channels != k)
    throw Error("ToyLatentCodec::decode: expected " + std::to_string(k) + " latent channels");
  Grid out(latent.height * patch_, latent.width * patch_, 3);
  std::vector<double> patch(k);
  for (int y = 0; y < latent.height; ++y)
    for (int x = 0; x < latent.width; ++x) {
      matvec_t(basis_, k, k, latent.row(y * latent.width + x), patch);
      int i = 0;
      for (int py = 0; py < patch_; ++py)
        for (int px = 0; px < patch_; ++px)
          for (int c = 0; c < 3; ++c) out.at(y * patch_ + py, x * patch_ + px, c) = patch[i++];
    }
  return out;
}

std::string ArchitectureDescriptor::to_json() const {
  nlohmann::ordered_json j;
  j["name"] = name;
  j["patch_size"] = patch_size;
  j["latent_channels"] = latent_channels;
  j["feature_dim"] = feature_dim;
  j["style_length"] = style_length;
  j["seed"] = seed;
  j["attention_gain"] = attention_gain;
  j["attention_mix"] = attention_mix;
  j["feature_scale"] = feature_scale;
  j["signal_variance"] = signal_variance;
  j["position_gain"] = position_gain;
  return j.dump(2);
}

ArchitectureDescriptor ArchitectureDescriptor::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("architecture descriptor: ") + e.what());
  }
  if (!j.is_object()) throw Error("architecture descriptor: expected a JSON object");
  ArchitectureDescriptor d;
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const auto& k = it.key();
      if (k == "name") d.name = it->get<std::string>();
      else if (k == "patch_size") d.patch_size = it->get<int>();
      else if (k == "latent_channels") d.latent_channels = it->get<int>();
      else if (k == "feature_dim") d.feature_dim = it->get<int>();
      else if (k == "style_length") d.style_length = it->get<int>();
      else if (k == "seed") d.seed = it->get<std::uint64_t>();
      else if (k == "attention_gain") d.attention_gain = it->get<double>();
      else if (k == "attention_mix") d.attention_mix = it->get<double>();
      else if (k == "feature_scale") d.feature_scale = it->get<double>();
      else if (k == "signal_variance") d.signal_variance = it->get<double>();
      else if (k == "position_gain") d.position_gain = it->get<double>();
      else throw Error("architecture descriptor: unknown key '" + k + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("architecture descriptor: ") + e.what());
  }
  d.validate();
  return d;
}

void ArchitectureDescriptor::validate() const {
  if (patch_size < 1) throw Error("architecture descriptor: patch_size must be >= 1");
  if (latent_channels != 3 * patch_size * patch_size)
    throw Error("architecture descriptor: latent_channels must equal 3 * patch_size^2");
  if (feature_dim < latent_channels) throw Error("architecture descriptor: feature_dim must be >= latent_channels");
  if (style_length < 0) throw Error("architecture descriptor: style_length must be >= 0");
  if (!(attention_gain > 0.0)) throw Error("architecture descriptor: attention_gain must be positive");
  if (!(attention_mix >= 0.0 && attention_mix <= 1.0))
    throw Error("architecture descriptor: attention_mix must lie in [0, 1]");
  if (!(feature_scale > 0.0)) throw Error("architecture descriptor: feature_scale must be positive");
  if (!(signal_variance >= 0.0)) throw Error("architecture descriptor: signal_variance must be >= 0");
  if (!(position_gain >= 0.0)) throw Error("architecture descriptor: position_gain must be >= 0");
}

DenoiserOutput Denoiser::denoise(const Grid& x_t, int t, const DenoiseCondition& cond) const {
  DenoiserOutput out;
  out.features = hook_features(x_t, t, cond);
  auto qkv = attention_inputs(out.features);
  const Grid h = attn::scaled_softmax_attention(qkv.q, qkv.k, qkv.v, 1.0);
  out.eps = predict_noise(x_t, t, cond, out.features, h);
  out.q = std::move(qkv.q);
  out.k = std::move(qkv.k);
  out.v = std::move(qkv.v);
  return out;
}

ToyDenoiser::ToyDenoiser(ArchitectureDescriptor desc, NoiseSchedule schedule)
    : desc_(std::move(desc)), schedule_(std::move(schedule)) {
  desc_.validate();
  const int d = desc_.feature_dim, c = desc_.latent_channels;
  const auto full = random_orthogonal(d, derive_seed(desc_.seed, Stream::denoiser_weights, 0));
  enc_.resize(static_cast<std::size_t>(d) * c);
  for (int r = 0; r < d; ++r)
    for (int j = 0; j < c; ++j) enc_[static_cast<std::size_t>(r) * c + j] = full[static_cast<std::size_t>(r) * d + j];
  // Remaining columns span the directions the head ignores; positions live there.
  pos_.resize(static_cast<std::size_t>(d) * (d - c));
  for (int r = 0; r < d; ++r)
    for (int j = c; j < d; ++j) pos_[static_cast<std::size_t>(r) * (d - c) + (j - c)] = full[static_cast<std::size_t>(r) * d + j];
  NormalSource rng(derive_seed(desc_.seed, Stream::denoiser_weights, 1));
  enc_bias_.resize(d);
  for (double& v : enc_bias_) v = 0.25 * rng.normal();
  qk_ = random_orthogonal(d, derive_seed(desc_.seed, Stream::denoiser_weights, 2));
  for (double& v : qk_) v *= desc_.attention_gain;
  val_ = random_orthogonal(d, derive_seed(desc_.seed, Stream::denoiser_weights, 3));
  style_map_.resize(static_cast<std::size_t>(c) * desc_.style_length);
  NormalSource srng(derive_seed(desc_.seed, Stream::denoiser_weights, 4));
  for (double& v : style_map_) v = srng.normal() / std::sqrt(static_cast<double>(c));
}

Grid ToyDenoiser::hook_features(const Grid& x_t, int t, const DenoiseCondition&) const {
  schedule_.check_step(t, 0, "toy_denoise");
  if (x_t.channels != desc_.latent_channels)
    throw Error("toy_denoise: latent has " + std::to_string(x_t.channels) + " channels, descriptor says " +
                std::to_string(desc_.latent_channels));
  const double inv = 1.0 / std::sqrt(schedule_.alpha_bar[t]);
  const int d = desc_.feature_dim, c = desc_.latent_channels;
  Grid f(x_t.height, x_t.width, d);
  const int np = d - c;
  const double omega = std::numbers::pi / std::max(x_t.height, x_t.width);
  std::vector<double> u(c), code(np), pe(d);
  for (int r = 0; r < x_t.rows(); ++r) {
    const auto src = x_t.row(r);
    for (int j = 0; j < c; ++j) u[j] = src[j] * inv;
    auto dst = f.row(r);
    matvec(enc_, d, c, u, dst);
    if (np > 0 && desc_.position_gain > 0.0) {
      const double py = r / x_t.width, px = r % x_t.width;
      for (int j = 0; j < np; ++j) {
        const double ang = omega * (j % 4 < 2 ? py : px) * (1 + j / 4);
        code[j] = desc_.position_gain * (j % 2 == 0 ? std::cos(ang) : std::sin(ang));
      }
      matvec(pos_, d, np, code, pe);
      for (int j = 0; j < d; ++j) dst[j] += pe[j];
    }
    for (int j = 0; j < d; ++j) dst[j] = desc_.feature_scale * (dst[j] + enc_bias_[j]);
  }
  return f;
}

AttentionTensors ToyDenoiser::attention_inputs(const Grid& features) const {
  const int d = desc_.feature_dim;
  if (features.channels != d) throw Error("toy_denoise: feature dim mismatch");
  AttentionTensors a{Grid(features.height, features.width, d), Grid(features.height, features.width, d),
                     Grid(features.height, features.width, d)};
  std::vector<double> unit(d);
  for (int r = 0; r < features.rows(); ++r) {
    const auto f = features.row(r);
    for (int j = 0; j < d; ++j) unit[j] = f[j] / desc_.feature_scale;
    matvec(qk_, d, d, unit, a.q.row(r));
    matvec(val_, d, d, f, a.v.row(r));
  }
  a.k = a.q;
  return a;
}

std::vector<double> ToyDenoiser::condition_bias(const DenoiseCondition& cond) const {
  const int c = desc_.latent_channels;
  std::vector<double> bias(c, 0.0);
  if (!cond.style.empty()) {
    if (static_cast<int>(cond.style.size()) != desc_.style_length)
      throw Error("toy_denoise: style vector has length " + std::to_string(cond.style.size()) + ", expected " +
                  std::to_string(desc_.style_length));
    matvec(style_map_, c, desc_.style_length, cond.style, bias);
  }
  if (cond.seed != 0) {
    NormalSource rng(derive_seed(cond.seed, Stream::denoiser_weights, 5));
    for (double& b : bias) b += 0.1 * rng.normal() / std::sqrt(static_cast<double>(c));
  }
  return bias;
}

Grid ToyDenoiser::predict_noise(const Grid& x_t, int t, const DenoiseCondition& cond, const Grid& features,
                                const Grid& attention_out) const {
  schedule_.check_step(t, 1, "toy_denoise");
  const int d = desc_.feature_dim, c = desc_.latent_channels;
  if (features.channels != d || attention_out.channels != d || features.rows() != x_t.rows() ||
      attention_out.rows() != x_t.rows())
    throw Error("toy_denoise: hook tensor shapes do not match the latent");
  const auto bias = condition_bias(cond);
  const double sa = std::sqrt(schedule_.alpha_bar[t]), sb = std::sqrt(1.0 - schedule_.alpha_bar[t]);
  const double noise_var = (1.0 - schedule_.alpha_bar[t]) / schedule_.alpha_bar[t];
  const double mix = desc_.attention_mix * noise_var / (noise_var + desc_.signal_variance);
  Grid eps(x_t.height, x_t.width, c);
  std::vector<double> back(d), mixed(d), x0(c);
  for (int r = 0; r < x_t.rows(); ++r) {
    matvec_t(val_, d, d, attention_out.row(r), back);
    const auto f = features.row(r);
    for (int j = 0; j < d; ++j) mixed[j] = ((1.0 - mix) * f[j] + mix * back[j]) / desc_.feature_scale - enc_bias_[j];
    matvec_t(enc_, d, c, mixed, x0);
    const auto xt = x_t.row(r);
    auto e = eps.row(r);
    for (int j = 0; j < c; ++j) e[j] = (xt[j] - sa * (x0[j] + bias[j])) / sb;
  }
  return eps;
}

ReferenceCapture single_step_reference(const Denoiser& denoiser, const ToyLatentCodec& codec,
                                       const NoiseSchedule& schedule, const Grid& frame, int t_ref,
                                       const Grid& noise, const DenoiseCondition& cond) {
  schedule.check_step(t_ref, 1, "single_step_reference");
  const Grid x0 = codec.encode(frame);
  const Grid xt = forward_sample(x0, t_ref, noise, schedule);
  auto out = denoiser.denoise(xt, t_ref, cond);
  return {std::move(out.features), std::move(out.q), std::move(out.k)};
}

}  // namespace fresco::diffusion
