#include <cmath>

#include "doctest.h"
#include "fresco/diffusion.hpp"
#include "fresco/frtf.hpp"
#include "support.hpp"

using namespace fresco;
using namespace fresco::diffusion;
using testing::max_abs_diff;
using testing::random_grid;

namespace {

NoiseSchedule rational_schedule() {
  // beta_1 = 1/4, beta_2 = 1/3: alpha = 3/4, 2/3; abar = 3/4, 1/2.
  return schedule_from_betas({0.25, 1.0 / 3.0});
}

double norm2(const Grid& g) {
  double s = 0.0;
  for (double v : g.data) s += v * v;
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("noise schedule") {
  SUBCASE("single step") {
    const auto s = build_schedule(1, 0.02, 0.02);
    CHECK(s.steps() == 1);
    CHECK(s.alpha_bar[0] == 1.0);
    CHECK(s.alpha_bar[1] == doctest::Approx(0.98).epsilon(1e-15));
  }
  SUBCASE("decreasing and positive") {
    for (int T : {2, 10, 50, 1000}) {
      const auto s = build_schedule(T, 1e-4, 0.02);
      for (int t = 1; t <= T; ++t) CHECK(s.alpha_bar[t] < s.alpha_bar[t - 1]);
      CHECK(s.alpha_bar[T] > 0.0);
      CHECK(s.beta[1] == doctest::Approx(1e-4));
      CHECK(s.beta[T] == doctest::Approx(0.02));
    }
  }
  SUBCASE("T = 1000 against an independent product") {
    const auto s = build_schedule(1000, 1e-4, 0.02);
    double logsum = 0.0;
    for (int t = 1; t <= 1000; ++t) logsum += std::log1p(-(1e-4 + (0.02 - 1e-4) * (t - 1) / 999.0));
    CHECK(s.alpha_bar[1000] == doctest::Approx(std::exp(logsum)).epsilon(1e-10));
    CHECK(s.alpha_bar[1000] > 3e-5);
    CHECK(s.alpha_bar[1000] < 5e-5);
  }
  SUBCASE("invalid ranges") {
    CHECK_THROWS_AS(build_schedule(0, 1e-4, 0.02), Error);
    CHECK_THROWS_AS(build_schedule(10, 0.0, 0.02), Error);
    CHECK_THROWS_AS(build_schedule(10, 0.03, 0.02), Error);
    CHECK_THROWS_AS(build_schedule(10, 1e-4, 1.0), Error);
  }
}

TEST_CASE("forward_sample and predict_x0") {
  const auto s = schedule_from_betas({0.75});  // abar_1 = 0.25
  SUBCASE("scalar forward") {
    const Grid x = forward_sample(Grid(1, 1, 1, 1.0), 1, Grid(1, 1, 1, -1.0), s);
    CHECK(x.data[0] == doctest::Approx(0.5 - std::sqrt(0.75)).epsilon(1e-15));
  }
  SUBCASE("t = 0 and zero noise") {
    const Grid x0 = random_grid(1, 2, 3, 4);
    CHECK(forward_sample(x0, 0, random_grid(2, 2, 3, 4), s) == x0);
    const Grid x = forward_sample(x0, 1, Grid(2, 3, 4), s);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(x.data[i] == doctest::Approx(0.5 * x0.data[i]));
  }
  SUBCASE("scalar predict") {
    const auto s64 = schedule_from_betas({0.36});  // abar_1 = 0.64
    CHECK(predict_x0(Grid(1, 1, 1, 1.0), Grid(1, 1, 1, 0.5), 1, s64).data[0] == doctest::Approx(0.875).epsilon(1e-15));
  }
  SUBCASE("round trip for every step") {
    const auto sc = build_schedule(50, 1e-4, 0.02);
    const Grid x0 = random_grid(3, 4, 4, 3), n = random_grid(4, 4, 4, 3);
    for (int t = 1; t <= 50; ++t) CHECK(max_abs_diff(predict_x0(forward_sample(x0, t, n, sc), n, t, sc), x0) < 1e-6);
  }
  SUBCASE("range errors") {
    CHECK_THROWS_AS(forward_sample(Grid(1, 1, 1), 2, Grid(1, 1, 1), s), Error);
    CHECK_THROWS_AS(predict_x0(Grid(1, 1, 1), Grid(1, 1, 1), 0, s), Error);
    CHECK_THROWS_AS(forward_sample(Grid(1, 1, 1), 1, Grid(1, 2, 1), s), Error);
  }
}

TEST_CASE("backward_step") {
  const auto s = rational_schedule();
  SUBCASE("rational hand evaluation at t = 2") {
    // abar_1 = 3/4, abar_2 = 1/2, beta_2 = 1/3, alpha_2 = 2/3
    const double x0 = 2.0, xt = 1.0, z = 0.5;
    const double want = std::sqrt(0.75) * (1.0 / 3.0) / 0.5 * x0 + 0.25 * (std::sqrt(2.0 / 3.0) * xt + z / 3.0) / 0.5;
    const Grid out = backward_step(Grid(1, 1, 1, xt), Grid(1, 1, 1, x0), Grid(1, 1, 1, z), 2, s);
    CHECK(out.data[0] == doctest::Approx(want).epsilon(1e-15));
  }
  SUBCASE("last step returns x0_hat") {
    const Grid x0 = random_grid(5, 2, 2, 3);
    const Grid out = backward_step(random_grid(6, 2, 2, 3), x0, Grid(2, 2, 3), 1, s);
    CHECK(max_abs_diff(out, x0) < 1e-15);
  }
  SUBCASE("zero z is affine in x0_hat and x_t") {
    const Grid a = backward_step(Grid(1, 1, 1, 1.0), Grid(1, 1, 1, 0.0), Grid(1, 1, 1), 2, s);
    const Grid b = backward_step(Grid(1, 1, 1, 0.0), Grid(1, 1, 1, 1.0), Grid(1, 1, 1), 2, s);
    const Grid c = backward_step(Grid(1, 1, 1, 3.0), Grid(1, 1, 1, -2.0), Grid(1, 1, 1), 2, s);
    CHECK(c.data[0] == doctest::Approx(3.0 * a.data[0] - 2.0 * b.data[0]).epsilon(1e-14));
  }
  SUBCASE("near-zero beta is almost the identity") {
    const auto tiny = schedule_from_betas({1e-4, 1e-12});
    const Grid xt = random_grid(7, 2, 2, 2);
    CHECK(max_abs_diff(backward_step(xt, random_grid(8, 2, 2, 2), Grid(2, 2, 2), 2, tiny), xt) < 1e-7);
  }
  SUBCASE("range errors") {
    CHECK_THROWS_AS(backward_step(Grid(1, 1, 1), Grid(1, 1, 1), Grid(1, 1, 1), 3, s), Error);
    CHECK_THROWS_AS(backward_step(Grid(1, 1, 1), Grid(1, 1, 1), Grid(1, 1, 1), 0, s), Error);
  }
}

TEST_CASE("toy latent codec") {
  const ToyLatentCodec codec(2, 99);
  const Grid frame = random_grid(10, 6, 8, 3);
  SUBCASE("round trip and energy") {
    const Grid lat = codec.encode(frame);
    CHECK(lat.height == 3);
    CHECK(lat.width == 4);
    CHECK(lat.channels == 12);
    CHECK(max_abs_diff(codec.decode(lat), frame) < 1e-6);
    CHECK(norm2(lat) == doctest::Approx(norm2(frame)).epsilon(1e-9));
  }
  SUBCASE("zero frame") { CHECK(codec.encode(Grid(4, 4, 3)) == Grid(2, 2, 12)); }
  SUBCASE("non-divisible sizes") {
    CHECK_THROWS_AS(codec.encode(Grid(5, 4, 3)), Error);
    CHECK_THROWS_AS(codec.encode(Grid(4, 4, 1)), Error);
    CHECK_THROWS_AS(codec.decode(Grid(2, 2, 11)), Error);
  }
  SUBCASE("random orthogonal") {
    const auto q = random_orthogonal(7, 5);
    for (int i = 0; i < 7; ++i)
      for (int j = 0; j < 7; ++j) {
        double dot = 0.0;
        for (int k = 0; k < 7; ++k) dot += q[k * 7 + i] * q[k * 7 + j];
        CHECK(dot == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-12));
      }
  }
}

TEST_CASE("toy denoiser") {
  const auto sched = build_schedule(50, 1e-4, 0.02);
  const ArchitectureDescriptor desc;
  const ToyDenoiser den(desc, sched);
  const Grid x = random_grid(20, 4, 5, desc.latent_channels);
  const DenoiseCondition cond{3, {0.1, -0.2, 0.3}};
  SUBCASE("deterministic with descriptor shapes") {
    const auto a = den.denoise(x, 17, cond), b = den.denoise(x, 17, cond);
    CHECK(a.eps == b.eps);
    CHECK(a.features == b.features);
    CHECK(a.eps.same_shape(x));
    for (const Grid* g : {&a.features, &a.q, &a.k, &a.v}) {
      CHECK(g->rows() == x.rows());
      CHECK(g->channels == desc.feature_dim);
    }
    const ToyDenoiser twin(desc, sched);
    CHECK(twin.denoise(x, 17, cond).eps == a.eps);
  }
  SUBCASE("golden noise prediction for a zero latent") {
    const Grid golden = frtf::to_grid(frtf::read(testing::fixture("golden/toy_eps_zero_t10.frtf")));
    const Grid eps = den.denoise(Grid(4, 4, 12), 10, {}).eps;
    REQUIRE(eps.same_shape(golden));
    CHECK(max_abs_diff(eps, golden) < 1e-12);
  }
  SUBCASE("style changes the prediction") {
    const auto a = den.denoise(x, 17, cond).eps;
    const auto b = den.denoise(x, 17, {3, {0.5, 0.0, 0.0}}).eps;
    CHECK(max_abs_diff(a, b) > 1e-6);
  }
  SUBCASE("split pass equals denoise") {
    const Grid f = den.hook_features(x, 12, cond);
    const auto qkv = den.attention_inputs(f);
    const auto out = den.denoise(x, 12, cond);
    CHECK(f == out.features);
    CHECK(qkv.q == out.q);
    CHECK(qkv.v == out.v);
  }
  SUBCASE("bounded on [-10, 10]") {
    NormalSource rng(21);
    for (int trial = 0; trial < 20; ++trial) {
      Grid g(3, 3, desc.latent_channels);
      for (double& v : g.data) v = 20.0 * rng.uniform() - 10.0;
      for (int t : {1, 25, 50}) {
        const auto out = den.denoise(g, t, cond);
        CHECK(out.eps.all_finite());
        CHECK(out.features.all_finite());
      }
    }
  }
  SUBCASE("bad inputs") {
    CHECK_THROWS_AS(den.denoise(Grid(2, 2, 5), 10, cond), Error);
    CHECK_THROWS_AS(den.denoise(x, 51, cond), Error);
    CHECK_THROWS_AS(den.denoise(x, 10, {0, {1.0}}), Error);
  }
}

TEST_CASE("architecture descriptor") {
  ArchitectureDescriptor d;
  d.feature_dim = 20;
  d.seed = 77;
  d.attention_mix = 0.5;
  CHECK(ArchitectureDescriptor::from_json(d.to_json()) == d);
  d.feature_dim = 4;
  CHECK_THROWS_AS(d.validate(), Error);
  CHECK_THROWS_AS(ArchitectureDescriptor::from_json("{\"bogus\": 1}"), Error);
}

TEST_CASE("single step reference") {
  const auto sched = build_schedule(50, 1e-4, 0.02);
  const ToyDenoiser den(ArchitectureDescriptor{}, sched);
  const ToyLatentCodec codec(2, 5);
  Grid frame = random_grid(30, 8, 6, 3, 0.2);
  for (double& v : frame.data) v += 0.5;
  const Grid noise = random_grid(31, 4, 3, 12);
  const auto a = single_step_reference(den, codec, sched, frame, 1, noise, {});
  const auto b = single_step_reference(den, codec, sched, frame, 1, noise, {});
  CHECK(a.features == b.features);
  CHECK(a.q == b.q);
  CHECK(a.k == b.k);
  CHECK(a.features.rows() == 12);
  CHECK(a.q.channels == den.descriptor().feature_dim);

  const auto clean = single_step_reference(den, codec, sched, frame, 1, Grid(4, 3, 12), {});
  const Grid direct = den.hook_features(forward_sample(codec.encode(frame), 1, Grid(4, 3, 12), sched), 1, {});
  CHECK(clean.features == direct);
  CHECK_THROWS_AS(single_step_reference(den, codec, sched, frame, 0, noise, {}), Error);
}
