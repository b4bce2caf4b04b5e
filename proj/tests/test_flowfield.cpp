#include <algorithm>
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "fresco/flowfield.hpp"
#include "fresco/frtf.hpp"
#include "fresco/parallel.hpp"
#include "support.hpp"

using namespace fresco;
using testing::random_grid;

TEST_CASE("zero flow warp is the identity") {
  const Grid src = random_grid(1, 7, 9, 3);
  CHECK(flow::backward_warp(src, FlowField(7, 9)) == src);
}

TEST_CASE("warp hand values") {
  Grid src(1, 2, 1);
  src.data = {1.0, 3.0};
  CHECK(flow::backward_warp(src, FlowField(1, 2, 1.0, 0.0)).at(0, 0) == doctest::Approx(3.0));
  CHECK(flow::backward_warp(src, FlowField(1, 2, 0.5, 0.0)).at(0, 0) == doctest::Approx(2.0));
  // Out of bounds clamps to the border.
  CHECK(flow::backward_warp(src, FlowField(1, 2, 5.0, -3.0)).at(0, 0) == doctest::Approx(3.0));
  CHECK(flow::backward_warp(src, FlowField(1, 2, -5.0, 0.0)).at(0, 1) == doctest::Approx(1.0));
}

TEST_CASE("warp rejects mismatched flow") {
  CHECK_THROWS_AS(flow::backward_warp(Grid(3, 3, 1), FlowField(3, 4)), Error);
}

TEST_CASE("warp is linear in src") {
  const Grid u = random_grid(2, 6, 5, 2), v = random_grid(3, 6, 5, 2);
  FlowField f(6, 5);
  NormalSource rng(4);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 5; ++x) f.set(y, x, 2 * rng.normal(), 2 * rng.normal());
  const double a = 0.7, b = -1.3;
  Grid mix(6, 5, 2);
  for (std::size_t i = 0; i < mix.data.size(); ++i) mix.data[i] = a * u.data[i] + b * v.data[i];
  const Grid wu = flow::backward_warp(u, f), wv = flow::backward_warp(v, f), wm = flow::backward_warp(mix, f);
  for (std::size_t i = 0; i < wm.data.size(); ++i) CHECK(std::fabs(wm.data[i] - (a * wu.data[i] + b * wv.data[i])) < 1e-6);
}

TEST_CASE("warp adjoint satisfies <warp(x), y> = <x, adjoint(y)>") {
  const Grid x = random_grid(5, 5, 6, 3), y = random_grid(6, 5, 6, 3);
  FlowField f(5, 6);
  NormalSource rng(7);
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 6; ++c) f.set(r, c, 3 * rng.normal(), 3 * rng.normal());
  const Grid wx = flow::backward_warp(x, f), ay = flow::backward_warp_adjoint(y, f);
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    lhs += wx.data[i] * y.data[i];
    rhs += x.data[i] * ay.data[i];
  }
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("occlusion mask examples") {
  const int h = 4, w = 5;
  SUBCASE("consistent constant pair") {
    const auto m = flow::compute_occlusion_mask(FlowField(h, w, 1, 0), FlowField(h, w, -1, 0), 0.5);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) CHECK(m.at(y, x) == (x == w - 1 ? 0 : 1));
  }
  SUBCASE("zero flows") {
    CHECK(flow::compute_occlusion_mask(FlowField(h, w), FlowField(h, w), 1.0).count_valid() == std::size_t(h * w));
  }
  SUBCASE("inconsistent pair") {
    CHECK(flow::compute_occlusion_mask(FlowField(h, w, 1, 0), FlowField(h, w, 1, 0), 0.5).count_valid() == 0);
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(flow::compute_occlusion_mask(FlowField(h, w), FlowField(h, w + 1)), Error);
  }
}

TEST_CASE("synthetic flows") {
  SUBCASE("zero and constant") {
    const auto z = flow::synth_flow(flow::SynthKind::zero, {3, 4});
    CHECK(z.flow == FlowField(3, 4));
    const auto c = flow::synth_flow(flow::SynthKind::constant, {3, 4, 2.0, 0.0});
    CHECK(c.flow == FlowField(3, 4, 2.0, 0.0));
    CHECK(c.inverse == FlowField(3, 4, -2.0, 0.0));
  }
  SUBCASE("90 degree rotation on 3x3 maps cells onto rotated cells") {
    const auto r = flow::synth_flow(flow::SynthKind::rotation, {3, 3, 0, 0, 90.0});
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 3; ++x) {
        // (x, y) -> (cx - (y - cy), cy + (x - cx)), centre (1, 1)
        const int tx = 1 - (y - 1), ty = 1 + (x - 1);
        CHECK(x + r.flow.dx(y, x) == doctest::Approx(tx));
        CHECK(y + r.flow.dy(y, x) == doctest::Approx(ty));
      }
  }
  SUBCASE("unknown kind") {
    CHECK(flow::parse_synth_kind("rotation") == flow::SynthKind::rotation);
    CHECK_THROWS_AS(flow::parse_synth_kind("spiral"), Error);
  }
}

TEST_CASE("synthetic flow with its inverse is valid in the interior") {
  for (double angle : {5.0, 12.0, -20.0}) {
    const int n = 21;
    const auto r = flow::synth_flow(flow::SynthKind::rotation, {n, n, 0, 0, angle});
    const auto m = flow::compute_occlusion_mask(r.flow, r.inverse, 1.0);
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const double ty = y + r.flow.dy(y, x), tx = x + r.flow.dx(y, x);
        const bool inside = ty >= 0 && tx >= 0 && ty <= n - 1 && tx <= n - 1;
        CHECK(m.at(y, x) == (inside ? 1 : 0));
      }
  }
  const auto c = flow::synth_flow(flow::SynthKind::constant, {6, 6, 2.0, -1.0});
  const auto m = flow::compute_occlusion_mask(c.flow, c.inverse, 0.1);
  for (int y = 1; y < 6; ++y)
    for (int x = 0; x < 4; ++x) CHECK(m.at(y, x) == 1);
}

namespace {

Grid textured(int h, int w) {
  Grid g(h, w, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) g.at(y, x, c) = std::sin(0.9 * x + 1.7 * y + c) + 0.5 * std::cos(2.3 * x * y + c);
  return g;
}

Grid shift(const Grid& src, int dx, int dy) {
  // dst(p) = src(p - d), border-replicated, so src(p) = dst(p + d)
  Grid out(src.height, src.width, src.channels);
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x)
      for (int c = 0; c < src.channels; ++c)
        out.at(y, x, c) = src.at(std::clamp(y - dy, 0, src.height - 1), std::clamp(x - dx, 0, src.width - 1), c);
  return out;
}

}  // namespace

TEST_CASE("block matching") {
  const Grid src = textured(24, 24);
  SUBCASE("identical frames give zero flow") {
    CHECK(flow::estimate_flow_block_matching(src, src) == FlowField(24, 24));
  }
  SUBCASE("radius 0 gives zero flow") {
    CHECK(flow::estimate_flow_block_matching(src, shift(src, 2, 1), {4, 0}) == FlowField(24, 24));
  }
  SUBCASE("global integer shifts are recovered on interior blocks") {
    for (auto [dx, dy] : {std::pair{2, 0}, {-3, 1}, {1, -2}, {0, 3}}) {
      const auto f = flow::estimate_flow_block_matching(src, shift(src, dx, dy), {4, 4});
      for (int y = 4; y < 20; ++y)
        for (int x = 4; x < 20; ++x) {
          CHECK(f.dx(y, x) == dx);
          CHECK(f.dy(y, x) == dy);
        }
    }
  }
  SUBCASE("ties prefer the smallest displacement") {
    const Grid flat(8, 8, 3, 0.5);
    CHECK(flow::estimate_flow_block_matching(flat, flat, {4, 3}) == FlowField(8, 8));
  }
  SUBCASE("size mismatch") {
    CHECK_THROWS_AS(flow::estimate_flow_block_matching(src, Grid(24, 23, 3)), Error);
  }
}

TEST_CASE("parallel kernels match the serial reference bit for bit") {
  const Grid src = textured(37, 29);
  FlowField f(37, 29);
  NormalSource rng(9);
  for (int y = 0; y < 37; ++y)
    for (int x = 0; x < 29; ++x) f.set(y, x, 3 * rng.normal(), 3 * rng.normal());
  for (int threads : {1, 2, 4}) {
    set_threads(threads);
    CHECK(flow::backward_warp(src, f) == flow::reference::backward_warp(src, f));
    const Grid dst = shift(src, 2, -1);
    CHECK(flow::estimate_flow_block_matching(src, dst, {5, 3}) ==
          flow::reference::estimate_flow_block_matching(src, dst, {5, 3}));
  }
  set_threads(max_threads());
}

TEST_CASE("downsample to latent") {
  SUBCASE("factor 1 is the identity") {
    FlowField f(4, 4);
    f.set(1, 2, 0.5, -1.5);
    OcclusionMask m(4, 4, 1);
    m.at(3, 3) = 0;
    const auto [df, dm] = flow::downsample_to_latent(f, m, 1);
    CHECK(df == f);
    CHECK(dm == m);
  }
  SUBCASE("constant flow is rescaled") {
    const auto [df, dm] = flow::downsample_to_latent(FlowField(4, 4, 4.0, 0.0), OcclusionMask(4, 4, 1), 4);
    CHECK(df.height() == 1);
    CHECK(df.dx(0, 0) == doctest::Approx(1.0));
    CHECK(df.dy(0, 0) == doctest::Approx(0.0));
    CHECK(dm.at(0, 0) == 1);
  }
  SUBCASE("mask needs every covered pixel valid") {
    OcclusionMask m(2, 2, 1);
    m.at(1, 1) = 0;
    CHECK(flow::downsample_to_latent(FlowField(2, 2), m, 2).second.at(0, 0) == 0);
  }
  SUBCASE("mask is monotone under added occlusion") {
    NormalSource rng(11);
    OcclusionMask m(8, 8, 1);
    for (auto& v : m.values) v = rng.uniform() < 0.9;
    OcclusionMask worse = m;
    for (auto& v : worse.values)
      if (rng.uniform() < 0.2) v = 0;
    const auto a = flow::downsample_to_latent(FlowField(8, 8), m, 2).second;
    const auto b = flow::downsample_to_latent(FlowField(8, 8), worse, 2).second;
    for (std::size_t i = 0; i < a.values.size(); ++i) CHECK(b.values[i] <= a.values[i]);
  }
  SUBCASE("non-divisible size") {
    CHECK_THROWS_AS(flow::downsample_to_latent(FlowField(5, 4), OcclusionMask(5, 4), 2), Error);
  }
}

TEST_CASE("compose chains two constant flows") {
  const auto c = flow::compose(FlowField(6, 6, 1.0, 0.0), FlowField(6, 6, 0.5, 2.0));
  CHECK(c.dx(2, 2) == doctest::Approx(1.5));
  CHECK(c.dy(2, 2) == doctest::Approx(2.0));
}

TEST_CASE("FRTF flow and mask round trip with exact bytes") {
  FlowField f(3, 2);
  f.set(0, 1, 1.25, -2.5);
  const auto bytes = frtf::encode(frtf::from_flow(f), frtf::DType::f32);
  // magic, version 1, dtype 0, ndim 3, dims 3 2 2
  const std::vector<unsigned char> head{'F', 'R', 'T', 'F', 1, 0, 0, 0, 0, 0, 0, 0, 3, 0, 0, 0,
                                        3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0};
  REQUIRE(bytes.size() == head.size() + 12 * 4);
  CHECK(std::equal(head.begin(), head.end(), bytes.begin()));
  CHECK(frtf::to_flow(frtf::decode(bytes)) == f);

  OcclusionMask m(2, 3, 1);
  m.at(1, 0) = 0;
  CHECK(frtf::to_mask(frtf::decode(frtf::encode(frtf::from_mask(m), frtf::DType::f64))) == m);
}

TEST_CASE("FRTF rejects malformed input") {
  auto bytes = frtf::encode(frtf::from_grid(Grid(2, 2, 1, 1.0)), frtf::DType::f64);
  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(frtf::decode(bad), Error);
  bad = bytes;
  bad[4] = 2;
  CHECK_THROWS_AS(frtf::decode(bad), Error);
  bad = bytes;
  bad.pop_back();
  CHECK_THROWS_AS(frtf::decode(bad), Error);
  CHECK_THROWS_AS(frtf::to_flow(frtf::from_grid(Grid(2, 2, 3))), Error);
}
