#include "fresco/featopt.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>

#include "fresco/flowfield.hpp"
#include "fresco/parallel.hpp"

namespace fresco::featopt {

namespace {

struct Normalized {
  Grid unit;                 // f / (|f| + eps)
  std::vector<double> norm;  // |f| per patch
};

Normalized normalize(const Grid& f) {
  Normalized n{Grid(f.height, f.width, f.channels), std::vector<double>(f.rows())};
  for (int r = 0; r < f.rows(); ++r) {
    const auto src = f.row(r);
    double s = 0.0;
    for (double v : src) s += v * v;
    s = std::sqrt(s);
    n.norm[r] = s;
    const double q = s + kNormEps;
    auto dst = n.unit.row(r);
    for (int c = 0; c < f.channels; ++c) dst[c] = src[c] / q;
  }
  return n;
}

// Squared gram-difference of row a, and (optionally) d loss / d unit_a scaled by 4*lambda.
double spatial_row(const Grid& unit, const Grid& ref_unit, int a, double lambda, double* grad_unit) {
  const int n = unit.rows(), d = unit.channels;
  const auto fa = unit.row(a);
  const auto ra = ref_unit.row(a);
  double acc = 0.0;
  if (grad_unit) std::fill(grad_unit, grad_unit + d, 0.0);
  for (int b = 0; b < n; ++b) {
    const auto fb = unit.row(b);
    const auto rb = ref_unit.row(b);
    double g = 0.0, r = 0.0;
    for (int c = 0; c < d; ++c) {
      g += fa[c] * fb[c];
      r += ra[c] * rb[c];
    }
    const double diff = g - r;
    acc += diff * diff;
    if (grad_unit)
      for (int c = 0; c < d; ++c) grad_unit[c] += 4.0 * lambda * diff * fb[c];
  }
  return acc;
}

// Chain rule through unit = f / (|f| + eps).
void unnormalize_grad(std::span<const double> f, double norm, const double* grad_unit, std::span<double> out) {
  const double q = norm + kNormEps;
  double dot = 0.0;
  for (std::size_t c = 0; c < f.size(); ++c) dot += f[c] * grad_unit[c];
  for (std::size_t c = 0; c < f.size(); ++c) {
    double g = grad_unit[c] / q;
    if (norm > 0.0) g -= f[c] * dot / (q * q * norm);
    out[c] += g;
  }
}

void check_pair(const std::vector<Grid>& f, const std::vector<Grid>& ref) {
  if (f.size() != ref.size()) throw Error("spatial_loss: frame counts differ");
  for (std::size_t i = 0; i < f.size(); ++i)
    if (!f[i].same_shape(ref[i])) throw Error("spatial_loss: reference shape mismatch at frame " + std::to_string(i));
}

double spatial_frame(const Grid& f, const Grid& ref, double lambda, Grid* grad) {
  if (lambda == 0.0) return 0.0;
  const Normalized nf = normalize(f);
  const Normalized nr = normalize(ref);
  const int n = f.rows(), d = f.channels;
  std::vector<double> per_row(n);
#if defined(_OPENMP)
#pragma omp parallel
#endif
  {
    std::vector<double> gu(grad ? d : 0);
#if defined(_OPENMP)
#pragma omp for schedule(static)
#endif
    for (int a = 0; a < n; ++a) {
      per_row[a] = spatial_row(nf.unit, nr.unit, a, lambda, grad ? gu.data() : nullptr);
      if (grad) unnormalize_grad(f.row(a), nf.norm[a], gu.data(), grad->row(a));
    }
  }
  double total = 0.0;
  for (double v : per_row) total += v;
  return lambda * total;
}

}  // namespace

void FeatureBatch::validate() const {
  if (features.empty()) throw Error("FeatureBatch: no frames");
  for (const auto& f : features)
    if (!f.same_shape(features[0])) throw Error("FeatureBatch: frames differ in shape");
  const std::size_t pairs = features.size() - 1;
  if (flows.size() != pairs || masks.size() != pairs)
    throw Error("FeatureBatch: expected " + std::to_string(pairs) + " flows and masks");
  for (std::size_t i = 0; i < pairs; ++i) {
    if (flows[i].height() != features[0].height || flows[i].width() != features[0].width ||
        masks[i].height != features[0].height || masks[i].width != features[0].width)
      throw Error("FeatureBatch: flow/mask " + std::to_string(i) + " does not match feature size");
  }
}

void OptimConfig::validate() const {
  if (iterations < 0) throw Error("OptimConfig: iterations must be >= 0");
  if (!(lr > 0.0)) throw Error("OptimConfig: lr must be positive");
  if (!(lambda_spat >= 0.0)) throw Error("OptimConfig: lambda_spat must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw Error("OptimConfig: Adam betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw Error("OptimConfig: Adam eps must be positive");
}

AdamState AdamState::zeros_like(const std::vector<Grid>& params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.emplace_back(p.height, p.width, p.channels);
    s.v.emplace_back(p.height, p.width, p.channels);
  }
  return s;
}

Grid normalize_patches(const Grid& f) { return normalize(f).unit; }

std::vector<double> gram_matrix(const Grid& f) {
  const Grid u = normalize_patches(f);
  const int n = u.rows();
  std::vector<double> g(static_cast<std::size_t>(n) * n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      double s = 0.0;
      for (int c = 0; c < u.channels; ++c) s += u.row(a)[c] * u.row(b)[c];
      g[static_cast<std::size_t>(a) * n + b] = s;
    }
  return g;
}

double temporal_loss(const FeatureBatch& batch) {
  batch.validate();
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < batch.features.size(); ++i) {
    const Grid warped = flow::backward_warp(batch.features[i], batch.flows[i]);
    const Grid& next = batch.features[i + 1];
    const auto& m = batch.masks[i];
    for (int y = 0; y < next.height; ++y)
      for (int x = 0; x < next.width; ++x) {
        if (!m.at(y, x)) continue;
        for (int c = 0; c < next.channels; ++c) total += std::abs(next.at(y, x, c) - warped.at(y, x, c));
      }
  }
  return total;
}

double spatial_loss(const std::vector<Grid>& features, const std::vector<Grid>& reference, double lambda) {
  check_pair(features, reference);
  double total = 0.0;
  for (std::size_t i = 0; i < features.size(); ++i) total += spatial_frame(features[i], reference[i], lambda, nullptr);
  return total;
}

LossAndGrad loss_and_grad(const FeatureBatch& batch, const std::vector<Grid>& reference,
                          const OptimConfig& config) {
  batch.validate();
  check_pair(batch.features, reference);
  LossAndGrad out;
  for (const auto& f : batch.features) out.grad.emplace_back(f.height, f.width, f.channels);

  for (std::size_t i = 0; i + 1 < batch.features.size(); ++i) {
    const Grid warped = flow::backward_warp(batch.features[i], batch.flows[i]);
    const Grid& next = batch.features[i + 1];
    const auto& m = batch.masks[i];
    Grid residual_sign(next.height, next.width, next.channels);
    for (int y = 0; y < next.height; ++y)
      for (int x = 0; x < next.width; ++x) {
        if (!m.at(y, x)) continue;
        for (int c = 0; c < next.channels; ++c) {
          const double r = next.at(y, x, c) - warped.at(y, x, c);
          out.loss.temporal += std::abs(r);
          residual_sign.at(y, x, c) = r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
        }
      }
    auto& gn = out.grad[i + 1].data;
    for (std::size_t k = 0; k < gn.size(); ++k) gn[k] += residual_sign.data[k];
    const Grid back = flow::backward_warp_adjoint(residual_sign, batch.flows[i]);
    auto& gp = out.grad[i].data;
    for (std::size_t k = 0; k < gp.size(); ++k) gp[k] -= back.data[k];
  }

  for (std::size_t i = 0; i < batch.features.size(); ++i)
    out.loss.spatial += spatial_frame(batch.features[i], reference[i], config.lambda_spat, &out.grad[i]);
  return out;
}

void adam_update(AdamState& state, std::vector<Grid>& params, const std::vector<Grid>& grad,
                 const OptimConfig& config) {
  if (params.size() != grad.size() || state.m.size() != params.size() || state.v.size() != params.size())
    throw Error("adam_update: state, parameter and gradient counts differ");
  ++state.step;
  const double c1 = 1.0 - std::pow(config.beta1, state.step);
  const double c2 = 1.0 - std::pow(config.beta2, state.step);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i].data;
    const auto& g = grad[i].data;
    auto& m = state.m[i].data;
    auto& v = state.v[i].data;
    if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size())
      throw Error("adam_update: shape mismatch at frame " + std::to_string(i));
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(p.size());
    FRESCO_PRAGMA_PARALLEL_FOR
    for (std::ptrdiff_t k = 0; k < n; ++k) {
      m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * g[k];
      v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * g[k] * g[k];
      const double mh = m[k] / c1;
      const double vh = v[k] / c2;
      p[k] -= config.lr * mh / (std::sqrt(vh) + config.eps);
    }
  }
}

OptimizeResult optimize_features(const FeatureBatch& batch, const std::vector<Grid>& reference,
                                 const OptimConfig& config) {
  config.validate();
  batch.validate();
  FeatureBatch work = batch;
  OptimizeResult result;
  AdamState state = AdamState::zeros_like(work.features);
  for (int k = 0; k < config.iterations; ++k) {
    const auto lg = loss_and_grad(work, reference, config);
    result.history.push_back(lg.loss);
    adam_update(state, work.features, lg.grad, config);
  }
  result.history.push_back({temporal_loss(work), spatial_loss(work.features, reference, config.lambda_spat)});
  result.features = std::move(work.features);
  return result;
}

void write_loss_csv(std::ostream& os, const std::vector<LossBreakdown>& history) {
  os << "iteration,L_temp,L_spat,total\n";
  os << std::setprecision(17);
  for (std::size_t k = 0; k < history.size(); ++k)
    os << k << ',' << history[k].temporal << ',' << history[k].spatial << ',' << history[k].total() << '\n';
}

namespace reference {

double spatial_loss_and_grad(const Grid& f, const Grid& ref, double lambda, Grid* grad) {
  if (!f.same_shape(ref)) throw Error("spatial_loss: reference shape mismatch");
  if (grad && !grad->same_shape(f)) *grad = Grid(f.height, f.width, f.channels);
  if (lambda == 0.0) return 0.0;
  const Normalized nf = normalize(f);
  const Normalized nr = normalize(ref);
  std::vector<double> gu(f.channels);
  double total = 0.0;
  for (int a = 0; a < f.rows(); ++a) {
    total += spatial_row(nf.unit, nr.unit, a, lambda, grad ? gu.data() : nullptr);
    if (grad) unnormalize_grad(f.row(a), nf.norm[a], gu.data(), grad->row(a));
  }
  return lambda * total;
}

}  // namespace reference

}  // namespace fresco::featopt
