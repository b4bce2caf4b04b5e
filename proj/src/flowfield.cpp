#include "fresco/flowfield.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "fresco/parallel.hpp"

namespace fresco::flow {

namespace {

void check_flow_matches(const Grid& g, const FlowField& flow, const char* op) {
  if (g.height != flow.height() || g.width != flow.width())
    throw Error(std::string(op) + ": flow is " + std::to_string(flow.height()) + "x" +
                std::to_string(flow.width()) + " but grid is " + std::to_string(g.height) + "x" +
                std::to_string(g.width));
}

struct Tap {
  int y0, y1, x0, x1;
  double wy, wx;
};

inline Tap bilinear_tap(int height, int width, double y, double x) {
  y = std::clamp(y, 0.0, static_cast<double>(height - 1));
  x = std::clamp(x, 0.0, static_cast<double>(width - 1));
  Tap t;
  t.y0 = static_cast<int>(std::floor(y));
  t.x0 = static_cast<int>(std::floor(x));
  t.y1 = std::min(t.y0 + 1, height - 1);
  t.x1 = std::min(t.x0 + 1, width - 1);
  t.wy = y - t.y0;
  t.wx = x - t.x0;
  return t;
}

inline double apply_tap(const Grid& src, const Tap& t, int c) {
  const double top = (1.0 - t.wx) * src.at(t.y0, t.x0, c) + t.wx * src.at(t.y0, t.x1, c);
  const double bot = (1.0 - t.wx) * src.at(t.y1, t.x0, c) + t.wx * src.at(t.y1, t.x1, c);
  return (1.0 - t.wy) * top + t.wy * bot;
}

void warp_row(const Grid& src, const FlowField& flow, Grid& out, int y) {
  for (int x = 0; x < src.width; ++x) {
    const double fx = flow.dx(y, x);
    const double fy = flow.dy(y, x);
    if (fx == 0.0 && fy == 0.0) {
      for (int c = 0; c < src.channels; ++c) out.at(y, x, c) = src.at(y, x, c);
      continue;
    }
    const Tap t = bilinear_tap(src.height, src.width, y + fy, x + fx);
    for (int c = 0; c < src.channels; ++c) out.at(y, x, c) = apply_tap(src, t, c);
  }
}

double block_ssd(const Grid& src, const Grid& dst, int y0, int y1, int x0, int x1, int dy, int dx) {
  double ssd = 0.0;
  for (int y = y0; y < y1; ++y) {
    const int sy = std::clamp(y + dy, 0, dst.height - 1);
    for (int x = x0; x < x1; ++x) {
      const int sx = std::clamp(x + dx, 0, dst.width - 1);
      for (int c = 0; c < src.channels; ++c) {
        const double d = src.at(y, x, c) - dst.at(sy, sx, c);
        ssd += d * d;
      }
    }
  }
  return ssd;
}

// Search order visits candidates by (|d|^2, dy, dx) so the first strict
// minimum wins ties.
std::vector<std::pair<int, int>> search_order(int radius) {
  std::vector<std::pair<int, int>> cands;
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx) cands.emplace_back(dy, dx);
  std::stable_sort(cands.begin(), cands.end(), [](const auto& a, const auto& b) {
    const int ma = a.first * a.first + a.second * a.second;
    const int mb = b.first * b.first + b.second * b.second;
    if (ma != mb) return ma < mb;
    return a < b;
  });
  return cands;
}

void match_block(const Grid& src, const Grid& dst, const BlockMatchParams& p,
                 const std::vector<std::pair<int, int>>& order, int by, int bx, FlowField& out) {
  const int y0 = by * p.block, y1 = std::min(y0 + p.block, src.height);
  const int x0 = bx * p.block, x1 = std::min(x0 + p.block, src.width);
  double best = std::numeric_limits<double>::infinity();
  int best_dy = 0, best_dx = 0;
  for (const auto& [dy, dx] : order) {
    const double s = block_ssd(src, dst, y0, y1, x0, x1, dy, dx);
    if (s < best) {
      best = s;
      best_dy = dy;
      best_dx = dx;
    }
  }
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) out.set(y, x, best_dx, best_dy);
}

void check_match_args(const Grid& src, const Grid& dst, const BlockMatchParams& p) {
  if (!src.same_shape(dst)) throw Error("estimate_flow_block_matching: src and dst shapes differ");
  if (p.block < 1) throw Error("estimate_flow_block_matching: block must be >= 1");
  if (p.radius < 0) throw Error("estimate_flow_block_matching: radius must be >= 0");
}

}  // namespace

double sample_bilinear(const Grid& src, double y, double x, int c) {
  return apply_tap(src, bilinear_tap(src.height, src.width, y, x), c);
}

Grid backward_warp(const Grid& src, const FlowField& flow) {
  check_flow_matches(src, flow, "backward_warp");
  Grid out(src.height, src.width, src.channels);
  FRESCO_PRAGMA_PARALLEL_FOR
  for (int y = 0; y < src.height; ++y) warp_row(src, flow, out, y);
  return out;
}

Grid backward_warp_adjoint(const Grid& grad_out, const FlowField& flow) {
  check_flow_matches(grad_out, flow, "backward_warp_adjoint");
  Grid g(grad_out.height, grad_out.width, grad_out.channels);
  // Channels scatter into disjoint elements, so they can run in parallel while
  // each channel keeps the serial pixel order.
  FRESCO_PRAGMA_PARALLEL_FOR
  for (int c = 0; c < grad_out.channels; ++c) {
    for (int y = 0; y < grad_out.height; ++y) {
      for (int x = 0; x < grad_out.width; ++x) {
        const double go = grad_out.at(y, x, c);
        if (go == 0.0) continue;
        const double fx = flow.dx(y, x), fy = flow.dy(y, x);
        if (fx == 0.0 && fy == 0.0) {
          g.at(y, x, c) += go;
          continue;
        }
        const Tap t = bilinear_tap(grad_out.height, grad_out.width, y + fy, x + fx);
        g.at(t.y0, t.x0, c) += go * (1.0 - t.wy) * (1.0 - t.wx);
        g.at(t.y0, t.x1, c) += go * (1.0 - t.wy) * t.wx;
        g.at(t.y1, t.x0, c) += go * t.wy * (1.0 - t.wx);
        g.at(t.y1, t.x1, c) += go * t.wy * t.wx;
      }
    }
  }
  return g;
}

OcclusionMask compute_occlusion_mask(const FlowField& fwd, const FlowField& bwd, double tau) {
  if (fwd.height() != bwd.height() || fwd.width() != bwd.width())
    throw Error("compute_occlusion_mask: forward and backward flows differ in size");
  if (!(tau > 0.0)) throw Error("compute_occlusion_mask: tau must be positive");
  const int h = fwd.height(), w = fwd.width();
  OcclusionMask mask(h, w, 0);
  FRESCO_PRAGMA_PARALLEL_FOR
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double ty = y + fwd.dy(y, x);
      const double tx = x + fwd.dx(y, x);
      if (ty < 0.0 || tx < 0.0 || ty > h - 1 || tx > w - 1) continue;
      const double ex = fwd.dx(y, x) + sample_bilinear(bwd.vectors, ty, tx, 0);
      const double ey = fwd.dy(y, x) + sample_bilinear(bwd.vectors, ty, tx, 1);
      mask.at(y, x) = std::hypot(ex, ey) <= tau ? 1 : 0;
    }
  }
  return mask;
}

FlowField estimate_flow_block_matching(const Grid& src, const Grid& dst, BlockMatchParams params) {
  check_match_args(src, dst, params);
  FlowField out(src.height, src.width);
  const int nby = (src.height + params.block - 1) / params.block;
  const int nbx = (src.width + params.block - 1) / params.block;
  const auto order = search_order(params.radius);
  FRESCO_PRAGMA_PARALLEL_FOR_DYNAMIC
  for (int b = 0; b < nby * nbx; ++b) match_block(src, dst, params, order, b / nbx, b % nbx, out);
  return out;
}

std::pair<FlowField, OcclusionMask> downsample_to_latent(const FlowField& flow,
                                                         const OcclusionMask& mask, int factor) {
  if (factor < 1) throw Error("downsample_to_latent: factor must be >= 1");
  if (flow.height() != mask.height || flow.width() != mask.width)
    throw Error("downsample_to_latent: flow and mask sizes differ");
  if (flow.height() % factor != 0 || flow.width() % factor != 0)
    throw Error("downsample_to_latent: factor " + std::to_string(factor) + " does not divide " +
                std::to_string(flow.height()) + "x" + std::to_string(flow.width()));
  if (factor == 1) return {flow, mask};
  const int h = flow.height() / factor, w = flow.width() / factor;
  FlowField f(h, w);
  OcclusionMask m(h, w, 1);
  const double area = static_cast<double>(factor) * factor;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double sx = 0.0, sy = 0.0;
      unsigned char valid = 1;
      for (int yy = y * factor; yy < (y + 1) * factor; ++yy) {
        for (int xx = x * factor; xx < (x + 1) * factor; ++xx) {
          sx += flow.dx(yy, xx);
          sy += flow.dy(yy, xx);
          valid &= mask.at(yy, xx);
        }
      }
      f.set(y, x, sx / area / factor, sy / area / factor);
      m.at(y, x) = valid;
    }
  }
  return {std::move(f), std::move(m)};
}

FlowField compose(const FlowField& first, const FlowField& second) {
  if (first.height() != second.height() || first.width() != second.width())
    throw Error("compose: flow sizes differ");
  FlowField out(first.height(), first.width());
  for (int y = 0; y < first.height(); ++y) {
    for (int x = 0; x < first.width(); ++x) {
      const double ty = y + first.dy(y, x), tx = x + first.dx(y, x);
      out.set(y, x, first.dx(y, x) + sample_bilinear(second.vectors, ty, tx, 0),
              first.dy(y, x) + sample_bilinear(second.vectors, ty, tx, 1));
    }
  }
  return out;
}

SynthKind parse_synth_kind(const std::string& name) {
  if (name == "zero") return SynthKind::zero;
  if (name == "constant") return SynthKind::constant;
  if (name == "rotation") return SynthKind::rotation;
  throw Error("synth_flow: unknown kind '" + name + "'");
}

SynthFlow synth_flow(SynthKind kind, const SynthParams& p) {
  if (p.height < 1 || p.width < 1) throw Error("synth_flow: dimensions must be positive");
  SynthFlow out{FlowField(p.height, p.width), FlowField(p.height, p.width)};
  switch (kind) {
    case SynthKind::zero:
      break;
    case SynthKind::constant:
      out.flow = FlowField(p.height, p.width, p.dx, p.dy);
      out.inverse = FlowField(p.height, p.width, -p.dx, -p.dy);
      break;
    case SynthKind::rotation: {
      const double cy = (p.height - 1) / 2.0, cx = (p.width - 1) / 2.0;
      const double a = p.angle_deg * std::numbers::pi / 180.0;
      const double ca = std::cos(a), sa = std::sin(a);
      for (int y = 0; y < p.height; ++y) {
        for (int x = 0; x < p.width; ++x) {
          const double rx = x - cx, ry = y - cy;
          out.flow.set(y, x, ca * rx - sa * ry + cx - x, sa * rx + ca * ry + cy - y);
          out.inverse.set(y, x, ca * rx + sa * ry + cx - x, -sa * rx + ca * ry + cy - y);
        }
      }
      break;
    }
    default:
      throw Error("synth_flow: unknown kind");
  }
  return out;
}

namespace reference {

Grid backward_warp(const Grid& src, const FlowField& flow) {
  check_flow_matches(src, flow, "backward_warp");
  Grid out(src.height, src.width, src.channels);
  for (int y = 0; y < src.height; ++y) warp_row(src, flow, out, y);
  return out;
}

FlowField estimate_flow_block_matching(const Grid& src, const Grid& dst, BlockMatchParams params) {
  check_match_args(src, dst, params);
  FlowField out(src.height, src.width);
  const int nby = (src.height + params.block - 1) / params.block;
  const int nbx = (src.width + params.block - 1) / params.block;
  const auto order = search_order(params.radius);
  for (int by = 0; by < nby; ++by)
    for (int bx = 0; bx < nbx; ++bx) match_block(src, dst, params, order, by, bx, out);
  return out;
}

}  // namespace reference

}  // namespace fresco::flow
