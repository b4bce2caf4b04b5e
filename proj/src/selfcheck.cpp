#include "fresco/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fresco/attention.hpp"
#include "fresco/flowfield.hpp"
#include "fresco/rng.hpp"

namespace fresco::selfcheck {

namespace {

using LD = long double;

Grid random_grid(NormalSource& rng, int h, int w, int c, double scale = 1.0) {
  Grid g(h, w, c);
  for (double& v : g.data) v = scale * rng.normal();
  return g;
}

// Clamped bilinear sample, written out independently of the library kernel.
LD sample(const std::vector<LD>& f, int h, int w, int d, LD y, LD x, int c) {
  y = std::clamp<LD>(y, 0, h - 1);
  x = std::clamp<LD>(x, 0, w - 1);
  const int y0 = static_cast<int>(std::floor(y)), x0 = static_cast<int>(std::floor(x));
  const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
  const LD wy = y - y0, wx = x - x0;
  auto at = [&](int yy, int xx) { return f[(static_cast<std::size_t>(yy) * w + xx) * d + c]; };
  return (1 - wy) * ((1 - wx) * at(y0, x0) + wx * at(y0, x1)) + wy * ((1 - wx) * at(y1, x0) + wx * at(y1, x1));
}

LD gram_term(const std::vector<LD>& f, const std::vector<LD>& r, int n, int d) {
  auto unit = [&](const std::vector<LD>& g) {
    std::vector<LD> u(g.size());
    for (int a = 0; a < n; ++a) {
      LD s = 0;
      for (int c = 0; c < d; ++c) s += g[a * d + c] * g[a * d + c];
      const LD q = std::sqrt(s) + static_cast<LD>(featopt::kNormEps);
      for (int c = 0; c < d; ++c) u[a * d + c] = g[a * d + c] / q;
    }
    return u;
  };
  const auto uf = unit(f), ur = unit(r);
  LD total = 0;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      LD gf = 0, gr = 0;
      for (int c = 0; c < d; ++c) {
        gf += uf[a * d + c] * uf[b * d + c];
        gr += ur[a * d + c] * ur[b * d + c];
      }
      total += (gf - gr) * (gf - gr);
    }
  return total;
}

CheckResult finish(std::string name, double worst, double tol, std::string detail = {}) {
  CheckResult r;
  r.name = std::move(name);
  r.worst = worst;
  r.tolerance = tol;
  r.passed = std::isfinite(worst) && worst <= tol;
  r.detail = std::move(detail);
  return r;
}

// softmax(q . k_j * inv) v_j over explicit key/value lists, in long double.
std::vector<LD> attend(std::span<const double> q, const std::vector<std::span<const double>>& keys,
                       const std::vector<std::span<const double>>& vals, LD inv) {
  std::vector<LD> logits(keys.size());
  for (std::size_t j = 0; j < keys.size(); ++j) {
    LD s = 0;
    for (std::size_t c = 0; c < q.size(); ++c) s += static_cast<LD>(q[c]) * keys[j][c];
    logits[j] = s * inv;
  }
  LD z = 0;
  for (auto& l : logits) z += (l = std::exp(l));
  std::vector<LD> out(vals[0].size(), 0);
  for (std::size_t j = 0; j < vals.size(); ++j)
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += logits[j] / z * vals[j][c];
  return out;
}

double max_diff(std::span<const double> got, const std::vector<LD>& want) {
  double worst = 0.0;
  for (std::size_t c = 0; c < want.size(); ++c)
    worst = std::max(worst, static_cast<double>(std::fabs(static_cast<LD>(got[c]) - want[c])));
  return worst;
}

struct CrossInstance {
  int frames, h, w, d;
  std::vector<Grid> q, k, v;
  std::vector<OcclusionMask> masks;
};

CrossInstance random_cross_instance(NormalSource& rng) {
  CrossInstance in;
  in.frames = 2 + static_cast<int>(rng.uniform() * 3);
  in.h = 2 + static_cast<int>(rng.uniform() * 3);
  in.w = 2 + static_cast<int>(rng.uniform() * 3);
  in.d = 2 + static_cast<int>(rng.uniform() * 5);
  for (int f = 0; f < in.frames; ++f) {
    in.q.push_back(random_grid(rng, in.h, in.w, in.d));
    in.k.push_back(random_grid(rng, in.h, in.w, in.d));
    in.v.push_back(random_grid(rng, in.h, in.w, in.d));
  }
  for (int f = 1; f < in.frames; ++f) {
    OcclusionMask m(in.h, in.w, 1);
    for (auto& b : m.values) b = rng.uniform() < 0.7 ? 1 : 0;
    in.masks.push_back(m);
  }
  return in;
}

double cross_error(const CrossInstance& in, const attn::PatchIndexSet& pu) {
  const auto got = attn::efficient_cross_frame_attention(in.q, in.k, in.v, pu);
  std::vector<std::span<const double>> keys, vals;
  for (const auto& p : pu) {
    keys.push_back(in.k[p.frame].row(p.row * in.w + p.col));
    vals.push_back(in.v[p.frame].row(p.row * in.w + p.col));
  }
  const LD inv = 1 / std::sqrt(static_cast<LD>(in.d));
  double worst = 0.0;
  for (int f = 0; f < in.frames; ++f)
    for (int r = 0; r < in.h * in.w; ++r)
      worst = std::max(worst, max_diff(got[f].row(r), attend(in.q[f].row(r), keys, vals, inv)));
  return worst;
}

}  // namespace

GradientInstance random_gradient_instance(std::uint64_t seed, int frames, int height, int width, int channels) {
  NormalSource rng(derive_seed(seed, Stream::fixture, 1));
  GradientInstance inst;
  for (int f = 0; f < frames; ++f) {
    inst.batch.features.push_back(random_grid(rng, height, width, channels));
    inst.reference.push_back(random_grid(rng, height, width, channels));
  }
  for (int f = 0; f + 1 < frames; ++f) {
    FlowField flow(height, width);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) flow.set(y, x, 1.5 * rng.normal() + 0.3, 1.5 * rng.normal() - 0.2);
    OcclusionMask m(height, width, 1);
    for (auto& b : m.values) b = rng.uniform() < 0.75 ? 1 : 0;
    inst.batch.flows.push_back(std::move(flow));
    inst.batch.masks.push_back(std::move(m));
  }
  return inst;
}

long double oracle_loss(const GradientInstance& inst, const std::vector<std::vector<long double>>& f) {
  const auto& b = inst.batch;
  const int h = b.features[0].height, w = b.features[0].width, d = b.features[0].channels;
  LD temporal = 0;
  for (std::size_t i = 0; i + 1 < f.size(); ++i)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        if (!b.masks[i].at(y, x)) continue;
        const LD sy = y + static_cast<LD>(b.flows[i].dy(y, x));
        const LD sx = x + static_cast<LD>(b.flows[i].dx(y, x));
        for (int c = 0; c < d; ++c)
          temporal += std::fabs(f[i + 1][(static_cast<std::size_t>(y) * w + x) * d + c] - sample(f[i], h, w, d, sy, sx, c));
      }
  LD spatial = 0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    std::vector<LD> r(inst.reference[i].data.begin(), inst.reference[i].data.end());
    spatial += gram_term(f[i], r, h * w, d);
  }
  return temporal + static_cast<LD>(inst.lambda_spat) * spatial;
}

CheckResult gradient_check(const GradientInstance& inst, long double step, double tolerance, double floor) {
  featopt::OptimConfig cfg;
  cfg.lambda_spat = inst.lambda_spat;
  const auto analytic = featopt::loss_and_grad(inst.batch, inst.reference, cfg);
  std::vector<std::vector<LD>> f;
  for (const auto& g : inst.batch.features) f.emplace_back(g.data.begin(), g.data.end());
  double worst = 0.0;
  std::size_t worst_frame = 0, worst_idx = 0;
  for (std::size_t i = 0; i < f.size(); ++i)
    for (std::size_t k = 0; k < f[i].size(); ++k) {
      const LD x = f[i][k];
      f[i][k] = x + step;
      const LD up = oracle_loss(inst, f);
      f[i][k] = x - step;
      const LD down = oracle_loss(inst, f);
      f[i][k] = x;
      const double num = static_cast<double>((up - down) / (2 * step));
      const double a = analytic.grad[i].data[k];
      const double rel = std::fabs(a - num) / std::max({std::fabs(a), std::fabs(num), floor});
      if (rel > worst) {
        worst = rel;
        worst_frame = i;
        worst_idx = k;
      }
    }
  std::ostringstream os;
  os << "worst component frame " << worst_frame << " index " << worst_idx;
  return finish("gradient", worst, tolerance, os.str());
}

CheckResult cross_frame_oracle(std::uint64_t seed, int instances, double tolerance) {
  NormalSource rng(derive_seed(seed, Stream::fixture, 2));
  double worst = 0.0;
  for (int n = 0; n < instances; ++n) {
    const auto in = random_cross_instance(rng);
    worst = std::max(worst, cross_error(in, attn::build_unique_patch_index(in.frames, in.h, in.w, in.masks)));
  }
  return finish("cross-frame vs gather oracle", worst, tolerance);
}

CheckResult cross_frame_dense(std::uint64_t seed, int instances, double tolerance) {
  NormalSource rng(derive_seed(seed, Stream::fixture, 3));
  double worst = 0.0;
  for (int n = 0; n < instances; ++n) {
    const auto in = random_cross_instance(rng);
    attn::PatchIndexSet all;
    for (int f = 0; f < in.frames; ++f)
      for (int r = 0; r < in.h; ++r)
        for (int c = 0; c < in.w; ++c) all.push_back({f, r, c});
    worst = std::max(worst, cross_error(in, all));
  }
  return finish("cross-frame vs dense", worst, tolerance);
}

CheckResult spatial_guided_oracle(std::uint64_t seed, double tolerance) {
  NormalSource rng(derive_seed(seed, Stream::fixture, 4));
  double worst = 0.0;
  for (int patches = 2; patches <= 3; ++patches) {
    const int d = 3;
    const double lambda = 5.0;
    std::vector<Grid> q{random_grid(rng, 1, patches, d)}, rq{random_grid(rng, 1, patches, d)},
        rk{random_grid(rng, 1, patches, d)};
    const auto got = attn::spatial_guided_attention(q, rq, rk, lambda);
    for (int a = 0; a < patches; ++a) {
      // Scalar evaluation: weights from reference dot products, then mix the queries.
      std::vector<LD> wts(patches);
      LD z = 0;
      for (int b = 0; b < patches; ++b) {
        LD s = 0;
        for (int c = 0; c < d; ++c) s += static_cast<LD>(rq[0].at(0, a, c)) * rk[0].at(0, b, c);
        wts[b] = std::exp(s / (lambda * std::sqrt(static_cast<LD>(d))));
        z += wts[b];
      }
      std::vector<LD> want(d, 0);
      for (int b = 0; b < patches; ++b)
        for (int c = 0; c < d; ++c) want[c] += wts[b] / z * q[0].at(0, b, c);
      worst = std::max(worst, max_diff(got[0].row(a), want));
    }
  }
  return finish("spatial-guided vs scalar", worst, tolerance);
}

CheckResult temporal_guided_oracle(std::uint64_t seed, double tolerance) {
  NormalSource rng(derive_seed(seed, Stream::fixture, 5));
  double worst = 0.0;
  const double lambda = 5.0;
  const int d = 3;
  // 2 and 3 frames of a single patch: one trajectory through every frame.
  for (int frames = 2; frames <= 3; ++frames) {
    std::vector<Grid> q, k, v;
    std::vector<FlowField> flows;
    std::vector<OcclusionMask> masks;
    for (int f = 0; f < frames; ++f) {
      q.push_back(random_grid(rng, 1, 1, d));
      k.push_back(random_grid(rng, 1, 1, d));
      v.push_back(random_grid(rng, 1, 1, d));
    }
    for (int f = 1; f < frames; ++f) {
      flows.emplace_back(1, 1);
      masks.emplace_back(1, 1, 1);
    }
    const auto traj = attn::build_flow_trajectories(frames, 1, 1, flows, masks);
    if (traj.size() != 1) return finish("temporal-guided vs scalar", INFINITY, tolerance, "expected one trajectory");
    const auto got = attn::temporal_guided_attention(q, k, v, traj, lambda);
    for (int a = 0; a < frames; ++a) {
      LD z = 0;
      std::vector<LD> wts(frames), want(d, 0);
      for (int b = 0; b < frames; ++b) {
        LD s = 0;
        for (int c = 0; c < d; ++c) s += static_cast<LD>(q[a].data[c]) * k[b].data[c];
        wts[b] = std::exp(s / (lambda * std::sqrt(static_cast<LD>(d))));
        z += wts[b];
      }
      for (int b = 0; b < frames; ++b)
        for (int c = 0; c < d; ++c) want[c] += wts[b] / z * v[b].data[c];
      worst = std::max(worst, max_diff(got[a].row(0), want));
    }
  }
  return finish("temporal-guided vs scalar", worst, tolerance);
}

std::vector<CheckResult> run_all(std::uint64_t seed) {
  return {gradient_check(random_gradient_instance(seed)), cross_frame_oracle(seed), cross_frame_dense(seed),
          spatial_guided_oracle(seed), temporal_guided_oracle(seed)};
}

}  // namespace fresco::selfcheck
