#include "fresco/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "fresco/parallel.hpp"
#include "fresco/rng.hpp"

namespace fresco::pipeline {

namespace {

Grid seeded_normal(int h, int w, int c, std::uint64_t seed) {
  Grid g(h, w, c);
  NormalSource rng(seed);
  rng.fill_normal(g);
  return g;
}

void check_video(const Video& video, const char* op) {
  if (video.empty()) throw Error(std::string(op) + ": empty video");
  for (std::size_t i = 0; i < video.size(); ++i) {
    if (!video[i].same_shape(video[0]))
      throw Error(std::string(op) + ": frame " + std::to_string(i + 1) + " differs in shape from frame 1");
    if (video[i].channels != 3) throw Error(std::string(op) + ": frames must have 3 channels");
  }
}

Grid clamp01(Grid g) {
  for (double& v : g.data) v = std::clamp(v, 0.0, 1.0);
  return g;
}

}  // namespace

std::vector<double> motion_scores(const Video& video, int s_min) {
  check_video(video, "motion_scores");
  const int m = static_cast<int>(video.size());
  std::vector<double> d(m + 1, 0.0);
  for (int i = std::max(2, s_min + 1); i <= m - s_min; ++i) {
    const auto& a = video[i - 1].data;
    const auto& b = video[i - 2].data;
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
    d[i] = std::sqrt(s);
  }
  return d;
}

KeyframePlan select_keyframes_from_scores(int frame_count, std::vector<double> motion, int s_min, int s_max) {
  if (frame_count < 2) throw Error("select_keyframes: need at least 2 frames");
  if (s_min < 1 || s_min > s_max || s_max >= frame_count)
    throw Error("select_keyframes: need 1 <= s_min <= s_max < M (got s_min=" + std::to_string(s_min) +
                ", s_max=" + std::to_string(s_max) + ", M=" + std::to_string(frame_count) + ")");
  if (static_cast<int>(motion.size()) != frame_count + 1)
    throw Error("select_keyframes: motion scores must have M + 1 entries");
  KeyframePlan plan{{}, frame_count, s_min, s_max, motion};
  std::set<int> omega{1, frame_count};
  auto& d = motion;
  for (int iter = 0; iter <= frame_count; ++iter) {
    int best = -1, first_gap_lo = -1, first_gap_hi = -1;
    for (auto it = omega.begin(); std::next(it) != omega.end(); ++it) {
      const int lo = *it, hi = *std::next(it);
      if (hi - lo <= s_max) continue;
      if (first_gap_lo < 0) {
        first_gap_lo = lo;
        first_gap_hi = hi;
      }
      for (int j = lo + 1; j < hi; ++j)
        if (best < 0 || d[j] > d[best]) best = j;
    }
    if (first_gap_lo < 0) {
      plan.keyframes.assign(omega.begin(), omega.end());
      return plan;
    }
    if (d[best] <= 0.0) best = (first_gap_lo + first_gap_hi) / 2;
    omega.insert(best);
    for (int j = std::max(1, best - s_min + 1); j <= std::min(frame_count, best + s_min - 1); ++j) d[j] = 0.0;
  }
  throw Error("select_keyframes: failed to terminate");
}

KeyframePlan select_keyframes(const Video& video, int s_min, int s_max) {
  const int m = static_cast<int>(video.size());
  if (m < 2) throw Error("select_keyframes: need at least 2 frames");
  if (s_min < 1 || s_min > s_max || s_max >= m)
    throw Error("select_keyframes: need 1 <= s_min <= s_max < M (got s_min=" + std::to_string(s_min) +
                ", s_max=" + std::to_string(s_max) + ", M=" + std::to_string(m) + ")");
  return select_keyframes_from_scores(m, motion_scores(video, s_min), s_min, s_max);
}

BatchPlan plan_batches(int keyframe_count, int batch_size) {
  if (batch_size < 3) throw Error("plan_batches: batch size N must be >= 3 (got " + std::to_string(batch_size) + ")");
  if (keyframe_count < 2) throw Error("plan_batches: need at least 2 keyframes");
  BatchPlan plan{batch_size, {}};
  for (int k = 1;; ++k) {
    const int start = (k - 1) * (batch_size - 2) + 2;
    if (k > 1 && start >= keyframe_count) break;
    const int stop = std::min(k * (batch_size - 2) + 2, keyframe_count);
    std::vector<int> batch{1};
    for (int p = start; p <= stop; ++p) batch.push_back(p);
    plan.batches.push_back(std::move(batch));
    if (stop == keyframe_count) break;
  }
  return plan;
}

Correspondence estimate_correspondence(const Video& video, flow::BlockMatchParams match, double tau) {
  check_video(video, "estimate_correspondence");
  const int m = static_cast<int>(video.size());
  Correspondence c;
  c.tau = tau;
  c.backward.resize(m - 1);
  c.forward.resize(m - 1);
  c.mask.resize(m - 1);
  for (int i = 0; i + 1 < m; ++i) {
    c.backward[i] = flow::estimate_flow_block_matching(video[i + 1], video[i], match);
    c.forward[i] = flow::estimate_flow_block_matching(video[i], video[i + 1], match);
    c.mask[i] = flow::compute_occlusion_mask(c.backward[i], c.forward[i], tau);
  }
  return c;
}

PairFlow pair_flow(const Correspondence& corr, int a, int b) {
  const int pairs = static_cast<int>(corr.backward.size());
  if (a < 0 || b <= a || b > pairs) throw Error("pair_flow: need 0 <= a < b < frame count");
  PairFlow p;
  p.backward = corr.backward[b - 1];
  for (int j = b - 2; j >= a; --j) p.backward = flow::compose(p.backward, corr.backward[j]);
  p.forward = corr.forward[a];
  for (int j = a + 1; j < b; ++j) p.forward = flow::compose(p.forward, corr.forward[j]);
  if (b == a + 1) {
    p.backward_mask = corr.mask[a];
  } else {
    p.backward_mask = flow::compute_occlusion_mask(p.backward, p.forward, corr.tau);
  }
  p.forward_mask = flow::compute_occlusion_mask(p.forward, p.backward, corr.tau);
  return p;
}

void TranslationConfig::validate() const {
  if (batch_size < 3) throw Error("config: N must be >= 3 (batch overlap needs two shared slots)");
  if (s_min < 1) throw Error("config: s_min must be >= 1");
  if (s_max < s_min) throw Error("config: s_max must be >= s_min");
  if (steps < 1) throw Error("config: T must be >= 1");
  if (t_start < 1 || t_start > steps) throw Error("config: T_start must lie in [1, T]");
  if (t_ref < 1 || t_ref > steps) throw Error("config: t_ref must lie in [1, T]");
  if (!(beta_first > 0.0 && beta_first <= beta_last && beta_last < 1.0))
    throw Error("config: need 0 < beta_first <= beta_last < 1");
  if (!(scales.spatial > 0.0)) throw Error("config: lambda_s must be positive");
  if (!(scales.temporal > 0.0)) throw Error("config: lambda_t must be positive");
  optim.validate();
  if (!(tau > 0.0)) throw Error("config: tau must be positive");
  if (match.block < 1) throw Error("config: block must be >= 1");
  if (match.radius < 0) throw Error("config: radius must be >= 0");
  denoiser.validate();
  if (!condition.style.empty() && static_cast<int>(condition.style.size()) != denoiser.style_length)
    throw Error("config: style vector length must equal denoiser.style_length");
}

Translator::Translator(TranslationConfig config) : Translator(config, nullptr) {}

Translator::Translator(TranslationConfig config, std::shared_ptr<const diffusion::Denoiser> denoiser)
    : config_(std::move(config)),
      schedule_(diffusion::build_schedule(config_.steps, config_.beta_first, config_.beta_last)),
      codec_(config_.denoiser.patch_size, config_.denoiser.seed),
      denoiser_(std::move(denoiser)) {
  config_.validate();
  if (!denoiser_) denoiser_ = std::make_shared<diffusion::ToyDenoiser>(config_.denoiser, schedule_);
  if (denoiser_->descriptor().latent_channels != codec_.latent_channels())
    throw Error("Translator: denoiser latent channels do not match the codec");
}

BatchResult Translator::translate_batch(const Video& video, const Correspondence& corr,
                                        const std::vector<int>& frames, const AnchorCache& anchors_in) const {
  check_video(video, "translate_batch");
  if (frames.empty()) throw Error("translate_batch: empty batch");
  for (std::size_t j = 0; j < frames.size(); ++j) {
    if (frames[j] < 0 || frames[j] >= static_cast<int>(video.size()))
      throw Error("translate_batch: frame index out of range");
    if (j > 0 && frames[j] <= frames[j - 1]) throw Error("translate_batch: frames must be strictly increasing");
  }
  const int n = static_cast<int>(frames.size());
  const int p = codec_.patch_size();
  const int T0 = config_.t_start;
  const auto& cond = config_.condition;

  for (const auto& [frame, lat] : anchors_in.latents)
    if (static_cast<int>(lat.size()) != T0 + 1)
      throw Error("translate_batch: anchor for frame " + std::to_string(frame + 1) + " does not cover every step");

  // Latent-resolution correspondence between consecutive batch members.
  std::vector<FlowField> lat_backward, lat_forward;
  std::vector<OcclusionMask> lat_mask;
  for (int j = 0; j + 1 < n; ++j) {
    const PairFlow pf = pair_flow(corr, frames[j], frames[j + 1]);
    auto [bw, bm] = flow::downsample_to_latent(pf.backward, pf.backward_mask, p);
    auto [fw, fm] = flow::downsample_to_latent(pf.forward, pf.forward_mask, p);
    lat_backward.push_back(std::move(bw));
    lat_mask.push_back(std::move(bm));
    lat_forward.push_back(std::move(fw));
  }

  std::vector<Grid> x(n);
  std::vector<diffusion::ReferenceCapture> refs(n);
  for (int j = 0; j < n; ++j) {
    const Grid x0 = codec_.encode(video[frames[j]]);
    const Grid ref_noise =
        seeded_normal(x0.height, x0.width, x0.channels, derive_seed(config_.seed, Stream::reference_noise, frames[j]));
    refs[j] = diffusion::single_step_reference(*denoiser_, codec_, schedule_, video[frames[j]], config_.t_ref,
                                               ref_noise, cond);
    const Grid init_noise =
        seeded_normal(x0.height, x0.width, x0.channels, derive_seed(config_.seed, Stream::init_noise, frames[j]));
    x[j] = diffusion::forward_sample(x0, T0, init_noise, schedule_);
  }
  const int h = x[0].height, w = x[0].width;

  const auto unique_patches = attn::build_unique_patch_index(n, h, w, lat_mask);
  const auto trajectories = attn::build_flow_trajectories(n, h, w, lat_forward, lat_mask);
  std::vector<Grid> ref_features, ref_q, ref_k;
  for (const auto& r : refs) {
    ref_features.push_back(r.features);
    ref_q.push_back(r.q);
    ref_k.push_back(r.k);
  }

  BatchResult result;
  result.frames = frames;
  const int first = frames.front(), last = frames.back();
  result.anchors.latents[first].resize(T0 + 1);
  result.anchors.latents[last].resize(T0 + 1);

  auto replace_and_record = [&](int t) {
    for (int j = 0; j < n; ++j) {
      auto it = anchors_in.latents.find(frames[j]);
      if (it == anchors_in.latents.end()) continue;
      if (!it->second[t].same_shape(x[j])) throw Error("translate_batch: anchor shape mismatch");
      x[j] = it->second[t];
    }
    result.anchors.latents[first][t] = x.front();
    result.anchors.latents[last][t] = x.back();
  };
  replace_and_record(T0);

  for (int t = T0; t >= 1; --t) {
    std::vector<Grid> features(n);
    FRESCO_PRAGMA_PARALLEL_FOR
    for (int j = 0; j < n; ++j) features[j] = denoiser_->hook_features(x[j], t, cond);

    if (config_.feature_optimization) {
      featopt::FeatureBatch fb{std::move(features), lat_backward, lat_mask};
      auto opt = featopt::optimize_features(fb, ref_features, config_.optim);
      result.steps.push_back({t, opt.history.front(), opt.history.back()});
      features = std::move(opt.features);
    }

    attn::AttentionBundle bundle;
    for (int j = 0; j < n; ++j) {
      auto qkv = denoiser_->attention_inputs(features[j]);
      bundle.queries.push_back(std::move(qkv.q));
      bundle.keys.push_back(std::move(qkv.k));
      bundle.values.push_back(std::move(qkv.v));
    }
    std::vector<Grid> attended;
    if (config_.guided_attention) {
      bundle.ref_queries = ref_q;
      bundle.ref_keys = ref_k;
      attended = attn::fresco_attention_layer(bundle, unique_patches, trajectories, config_.scales);
    } else {
      attended = attn::efficient_cross_frame_attention(bundle.queries, bundle.keys, bundle.values, unique_patches);
    }

    FRESCO_PRAGMA_PARALLEL_FOR
    for (int j = 0; j < n; ++j) {
      const Grid eps = denoiser_->predict_noise(x[j], t, cond, features[j], attended[j]);
      const Grid x0_hat = diffusion::predict_x0(x[j], eps, t, schedule_);
      const Grid z = t > 1 ? seeded_normal(h, w, x[j].channels,
                                           derive_seed(config_.seed, Stream::step_noise, frames[j],
                                                       static_cast<std::uint64_t>(t)))
                           : Grid(h, w, x[j].channels);
      x[j] = diffusion::backward_step(x[j], x0_hat, z, t, schedule_);
    }
    replace_and_record(t - 1);
  }

  result.latents = x;
  for (const auto& l : x) result.decoded.push_back(codec_.decode(l));
  return result;
}

TranslationResult Translator::translate_video(const Video& video) const {
  check_video(video, "translate_video");
  TranslationResult out;
  out.keyframes = select_keyframes(video, config_.s_min, config_.s_max);
  out.batches = plan_batches(static_cast<int>(out.keyframes.keyframes.size()), config_.batch_size);
  const Correspondence corr = estimate_correspondence(video, config_.match, config_.tau);

  std::map<int, Grid> translated;
  AnchorCache anchors;
  for (const auto& batch : out.batches.batches) {
    std::vector<int> frames;
    for (int pos : batch) frames.push_back(out.keyframes.keyframes[pos - 1] - 1);
    auto res = translate_batch(video, corr, frames, anchors);
    anchors = res.anchors;
    for (std::size_t j = 0; j < frames.size(); ++j) translated.insert_or_assign(frames[j], res.decoded[j]);
    out.batch_results.push_back(std::move(res));
  }

  std::vector<int> keys;
  Video key_frames;
  for (int k : out.keyframes.keyframes) {
    keys.push_back(k - 1);
    key_frames.push_back(translated.at(k - 1));
  }
  out.frames = interpolate_nonkeyframes(keys, key_frames, corr, static_cast<int>(video.size()));
  for (auto& f : out.frames) f = clamp01(std::move(f));
  return out;
}

Video interpolate_nonkeyframes(const std::vector<int>& keyframes, const Video& translated,
                               const Correspondence& corr, int frame_count) {
  if (keyframes.size() != translated.size()) throw Error("interpolate_nonkeyframes: keyframe/output count mismatch");
  if (keyframes.empty()) throw Error("interpolate_nonkeyframes: no keyframes");
  for (std::size_t k = 1; k < keyframes.size(); ++k)
    if (keyframes[k] <= keyframes[k - 1]) throw Error("interpolate_nonkeyframes: keyframes must be ascending");
  if (static_cast<int>(corr.backward.size()) != frame_count - 1)
    throw Error("interpolate_nonkeyframes: correspondence does not match frame count");

  Video out(frame_count);
  for (std::size_t k = 0; k < keyframes.size(); ++k) {
    if (keyframes[k] < 0 || keyframes[k] >= frame_count) throw Error("interpolate_nonkeyframes: keyframe out of range");
    out[keyframes[k]] = translated[k];
  }
  for (int i = 0; i < frame_count; ++i) {
    if (!out[i].empty()) continue;
    const auto hi = std::upper_bound(keyframes.begin(), keyframes.end(), i);
    if (hi == keyframes.begin() || hi == keyframes.end())
      throw Error("interpolate_nonkeyframes: frame " + std::to_string(i + 1) + " has no enclosing keyframes");
    const int b = *hi, a = *(hi - 1);
    const Grid& ka = translated[hi - 1 - keyframes.begin()];
    const Grid& kb = translated[hi - keyframes.begin()];
    const PairFlow from_a = pair_flow(corr, a, i);  // backward: on i, into a
    const PairFlow to_b = pair_flow(corr, i, b);    // forward: on i, into b
    const Grid wa = flow::backward_warp(ka, from_a.backward);
    const Grid wb = flow::backward_warp(kb, to_b.forward);
    const double weight_a = static_cast<double>(b - i) / (b - a);
    const double weight_b = static_cast<double>(i - a) / (b - a);
    const bool a_nearer = (i - a) <= (b - i);
    Grid f(ka.height, ka.width, ka.channels);
    for (int y = 0; y < f.height; ++y)
      for (int x = 0; x < f.width; ++x) {
        const bool va = from_a.backward_mask.at(y, x), vb = to_b.forward_mask.at(y, x);
        for (int c = 0; c < f.channels; ++c) {
          double v;
          if (va && vb) v = weight_a * wa.at(y, x, c) + weight_b * wb.at(y, x, c);
          else if (va) v = wa.at(y, x, c);
          else if (vb) v = wb.at(y, x, c);
          else v = a_nearer ? wa.at(y, x, c) : wb.at(y, x, c);
          f.at(y, x, c) = v;
        }
      }
    out[i] = std::move(f);
  }
  return out;
}

double pixel_mse(const Video& video, flow::BlockMatchParams match, double tau) {
  check_video(video, "pixel_mse");
  if (video.size() < 2) throw Error("pixel_mse: need at least 2 frames");
  Video v;
  for (const auto& f : video) v.push_back(clamp01(f));
  double total = 0.0;
  int used = 0;
  for (std::size_t i = 0; i + 1 < v.size(); ++i) {
    const FlowField bwd = flow::estimate_flow_block_matching(v[i + 1], v[i], match);
    const FlowField fwd = flow::estimate_flow_block_matching(v[i], v[i + 1], match);
    const OcclusionMask mask = flow::compute_occlusion_mask(bwd, fwd, tau);
    const Grid warped = flow::backward_warp(v[i], bwd);
    double se = 0.0;
    std::size_t count = 0;
    for (int y = 0; y < warped.height; ++y)
      for (int x = 0; x < warped.width; ++x) {
        if (!mask.at(y, x)) continue;
        for (int c = 0; c < warped.channels; ++c) {
          const double d = v[i + 1].at(y, x, c) - warped.at(y, x, c);
          se += d * d;
          ++count;
        }
      }
    if (count == 0) continue;
    total += se / static_cast<double>(count);
    ++used;
  }
  if (used == 0) throw Error("pixel_mse: every frame pair is fully occluded");
  return total / used;
}

}  // namespace fresco::pipeline
