#include "fresco/attention.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "fresco/parallel.hpp"

namespace fresco::attn {

namespace {

void check_qkv(const Grid& q, const Grid& k, const Grid& v, double scale) {
  if (k.rows() == 0) throw Error("attention: empty key set");
  if (q.channels != k.channels)
    throw Error("attention: query dim " + std::to_string(q.channels) + " != key dim " +
                std::to_string(k.channels));
  if (k.rows() != v.rows()) throw Error("attention: key and value counts differ");
  if (!(scale > 0.0)) throw Error("attention: scale must be positive");
}

// Softmax weights of one query row against all keys, written into w.
void row_weights(const Grid& q, const Grid& k, double inv_temp, int r, std::vector<double>& w) {
  const auto qr = q.row(r);
  const int n = k.rows();
  w.resize(n);
  double mx = -INFINITY;
  for (int j = 0; j < n; ++j) {
    const auto kr = k.row(j);
    double s = 0.0;
    for (int c = 0; c < q.channels; ++c) s += qr[c] * kr[c];
    w[j] = s * inv_temp;
    mx = std::max(mx, w[j]);
  }
  double sum = 0.0;
  for (int j = 0; j < n; ++j) {
    w[j] = std::exp(w[j] - mx);
    sum += w[j];
  }
  for (int j = 0; j < n; ++j) w[j] /= sum;
}

void attend_row(const Grid& q, const Grid& k, const Grid& v, double inv_temp, int r,
                std::vector<double>& w, Grid& out) {
  row_weights(q, k, inv_temp, r, w);
  auto o = out.row(r);
  std::fill(o.begin(), o.end(), 0.0);
  for (int j = 0; j < k.rows(); ++j) {
    const auto vr = v.row(j);
    for (int c = 0; c < v.channels; ++c) o[c] += w[j] * vr[c];
  }
}

double inverse_temperature(int d, double scale) { return 1.0 / (scale * std::sqrt(static_cast<double>(d))); }

void check_frames(const std::vector<Grid>& a, const std::vector<Grid>& b, const char* what) {
  if (a.size() != b.size()) throw Error(std::string(what) + ": frame counts differ");
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].height != b[i].height || a[i].width != b[i].width)
      throw Error(std::string(what) + ": spatial shapes differ at frame " + std::to_string(i));
}

void check_uniform(const std::vector<Grid>& g, const char* what) {
  if (g.empty()) throw Error(std::string(what) + ": no frames");
  for (const auto& x : g)
    if (!x.same_shape(g[0])) throw Error(std::string(what) + ": frames differ in shape");
}

std::size_t flat(const PatchRef& p, int h, int w) {
  return (static_cast<std::size_t>(p.frame) * h + p.row) * w + p.col;
}

}  // namespace

std::vector<double> softmax_weights(const Grid& q, const Grid& k, double scale) {
  check_qkv(q, k, k, scale);
  const double it = inverse_temperature(q.channels, scale);
  std::vector<double> all(static_cast<std::size_t>(q.rows()) * k.rows());
  std::vector<double> w;
  for (int r = 0; r < q.rows(); ++r) {
    row_weights(q, k, it, r, w);
    std::copy(w.begin(), w.end(), all.begin() + static_cast<std::ptrdiff_t>(r) * k.rows());
  }
  return all;
}

Grid scaled_softmax_attention(const Grid& q, const Grid& k, const Grid& v, double scale) {
  check_qkv(q, k, v, scale);
  const double it = inverse_temperature(q.channels, scale);
  Grid out(q.height, q.width, v.channels);
#if defined(_OPENMP)
#pragma omp parallel
  {
    std::vector<double> w;
#pragma omp for schedule(static)
    for (int r = 0; r < q.rows(); ++r) attend_row(q, k, v, it, r, w, out);
  }
#else
  std::vector<double> w;
  for (int r = 0; r < q.rows(); ++r) attend_row(q, k, v, it, r, w, out);
#endif
  return out;
}

std::vector<Grid> spatial_guided_attention(const std::vector<Grid>& q, const std::vector<Grid>& ref_q,
                                           const std::vector<Grid>& ref_k, double lambda_s) {
  if (ref_q.empty() || ref_k.empty()) throw Error("spatial_guided_attention: missing reference tensors");
  check_frames(q, ref_q, "spatial_guided_attention");
  check_frames(q, ref_k, "spatial_guided_attention");
  std::vector<Grid> out;
  out.reserve(q.size());
  for (std::size_t i = 0; i < q.size(); ++i)
    out.push_back(scaled_softmax_attention(ref_q[i], ref_k[i], q[i], lambda_s));
  return out;
}

PatchIndexSet build_unique_patch_index(int frames, int height, int width,
                                       const std::vector<OcclusionMask>& masks) {
  if (frames < 1) throw Error("build_unique_patch_index: need at least one frame");
  if (static_cast<int>(masks.size()) != frames - 1)
    throw Error("build_unique_patch_index: expected " + std::to_string(frames - 1) + " masks, got " +
                std::to_string(masks.size()));
  for (const auto& m : masks)
    if (m.height != height || m.width != width) throw Error("build_unique_patch_index: mask shape mismatch");
  PatchIndexSet out;
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c) out.push_back({0, r, c});
  for (int f = 1; f < frames; ++f)
    for (int r = 0; r < height; ++r)
      for (int c = 0; c < width; ++c)
        if (masks[f - 1].at(r, c) == 0) out.push_back({f, r, c});
  return out;
}

Grid gather(const std::vector<Grid>& per_frame, const PatchIndexSet& index) {
  check_uniform(per_frame, "gather");
  const auto& g0 = per_frame[0];
  Grid out(static_cast<int>(index.size()), 1, g0.channels);
  for (std::size_t i = 0; i < index.size(); ++i) {
    const auto& p = index[i];
    if (p.frame < 0 || p.frame >= static_cast<int>(per_frame.size()) || p.row < 0 ||
        p.row >= g0.height || p.col < 0 || p.col >= g0.width)
      throw Error("gather: patch index out of range");
    const auto src = per_frame[p.frame].row(p.row * g0.width + p.col);
    std::copy(src.begin(), src.end(), out.row(static_cast<int>(i)).begin());
  }
  return out;
}

std::vector<Grid> efficient_cross_frame_attention(const std::vector<Grid>& q_prime,
                                                  const std::vector<Grid>& keys,
                                                  const std::vector<Grid>& values,
                                                  const PatchIndexSet& unique_patches) {
  if (unique_patches.empty()) throw Error("efficient_cross_frame_attention: empty unique patch index");
  check_frames(q_prime, keys, "efficient_cross_frame_attention");
  check_frames(q_prime, values, "efficient_cross_frame_attention");
  const Grid k = gather(keys, unique_patches);
  const Grid v = gather(values, unique_patches);
  std::vector<Grid> out;
  out.reserve(q_prime.size());
  for (const auto& q : q_prime) out.push_back(scaled_softmax_attention(q, k, v, 1.0));
  return out;
}

TrajectorySet build_flow_trajectories(int frames, int height, int width,
                                      const std::vector<FlowField>& flows,
                                      const std::vector<OcclusionMask>& masks) {
  if (frames < 1) throw Error("build_flow_trajectories: need at least one frame");
  if (static_cast<int>(flows.size()) != frames - 1 || static_cast<int>(masks.size()) != frames - 1)
    throw Error("build_flow_trajectories: expected " + std::to_string(frames - 1) + " flows and masks");
  for (int i = 0; i + 1 < frames; ++i) {
    if (flows[i].height() != height || flows[i].width() != width || masks[i].height != height ||
        masks[i].width != width)
      throw Error("build_flow_trajectories: shape mismatch at frame pair " + std::to_string(i));
  }
  TrajectorySet out;
  // open[r*w + c] = trajectory ending at (current frame, r, c), or -1
  std::vector<std::int64_t> open(static_cast<std::size_t>(height) * width, -1);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      open[static_cast<std::size_t>(r) * width + c] = static_cast<std::int64_t>(out.size());
      out.push_back({{0, r, c}});
    }
  }
  for (int f = 0; f + 1 < frames; ++f) {
    std::vector<std::int64_t> next(open.size(), -1);
    for (int r = 0; r < height; ++r) {
      for (int c = 0; c < width; ++c) {
        const auto t = open[static_cast<std::size_t>(r) * width + c];
        if (t < 0) continue;
        const long tr = std::lround(r + flows[f].dy(r, c));
        const long tc = std::lround(c + flows[f].dx(r, c));
        if (tr < 0 || tc < 0 || tr >= height || tc >= width) continue;
        if (masks[f].at(static_cast<int>(tr), static_cast<int>(tc)) == 0) continue;
        auto& slot = next[static_cast<std::size_t>(tr) * width + tc];
        if (slot >= 0) continue;
        slot = t;
        out[t].push_back({f + 1, static_cast<int>(tr), static_cast<int>(tc)});
      }
    }
    for (int r = 0; r < height; ++r) {
      for (int c = 0; c < width; ++c) {
        auto& slot = next[static_cast<std::size_t>(r) * width + c];
        if (slot >= 0) continue;
        slot = static_cast<std::int64_t>(out.size());
        out.push_back({{f + 1, r, c}});
      }
    }
    open = std::move(next);
  }
  return out;
}

void check_partition(const TrajectorySet& trajectories, int frames, int height, int width) {
  std::vector<unsigned char> seen(static_cast<std::size_t>(frames) * height * width, 0);
  std::size_t total = 0;
  for (const auto& traj : trajectories) {
    if (traj.empty()) throw Error("trajectory set: empty trajectory");
    for (const auto& p : traj) {
      if (p.frame < 0 || p.frame >= frames || p.row < 0 || p.row >= height || p.col < 0 || p.col >= width)
        throw Error("trajectory set: patch out of range");
      auto& s = seen[flat(p, height, width)];
      if (s) throw Error("trajectory set: patch appears twice");
      s = 1;
      ++total;
    }
  }
  if (total != seen.size()) throw Error("trajectory set: does not cover every patch");
}

std::vector<Grid> temporal_guided_attention(const std::vector<Grid>& q, const std::vector<Grid>& k,
                                            const std::vector<Grid>& v_prime,
                                            const TrajectorySet& trajectories, double lambda_t) {
  check_uniform(q, "temporal_guided_attention");
  check_frames(q, k, "temporal_guided_attention");
  check_frames(q, v_prime, "temporal_guided_attention");
  if (!(lambda_t > 0.0)) throw Error("temporal_guided_attention: lambda_t must be positive");
  const int h = q[0].height, w = q[0].width;
  check_partition(trajectories, static_cast<int>(q.size()), h, w);
  std::vector<Grid> out;
  for (const auto& v : v_prime) out.emplace_back(v.height, v.width, v.channels);
  const int n = static_cast<int>(trajectories.size());
  FRESCO_PRAGMA_PARALLEL_FOR_DYNAMIC
  for (int t = 0; t < n; ++t) {
    const auto& traj = trajectories[t];
    const Grid tq = gather(q, traj), tk = gather(k, traj), tv = gather(v_prime, traj);
    const Grid th = reference::scaled_softmax_attention(tq, tk, tv, lambda_t);
    for (std::size_t i = 0; i < traj.size(); ++i) {
      const auto src = th.row(static_cast<int>(i));
      std::copy(src.begin(), src.end(), out[traj[i].frame].row(traj[i].row * w + traj[i].col).begin());
    }
  }
  return out;
}

std::vector<Grid> fresco_attention_layer(const AttentionBundle& b, const PatchIndexSet& unique_patches,
                                         const TrajectorySet& trajectories, const ScaleParams& scales) {
  if (b.ref_queries.size() != b.queries.size() || b.ref_keys.size() != b.queries.size())
    throw Error("fresco_attention_layer: reference tensors missing");
  const auto q_prime = spatial_guided_attention(b.queries, b.ref_queries, b.ref_keys, scales.spatial);
  const auto v_prime = efficient_cross_frame_attention(q_prime, b.keys, b.values, unique_patches);
  return temporal_guided_attention(b.queries, b.keys, v_prime, trajectories, scales.temporal);
}

namespace reference {

Grid scaled_softmax_attention(const Grid& q, const Grid& k, const Grid& v, double scale) {
  check_qkv(q, k, v, scale);
  const double it = inverse_temperature(q.channels, scale);
  Grid out(q.height, q.width, v.channels);
  std::vector<double> w;
  for (int r = 0; r < q.rows(); ++r) attend_row(q, k, v, it, r, w, out);
  return out;
}

}  // namespace reference

}  // namespace fresco::attn
