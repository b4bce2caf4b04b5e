// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <mutex>
#include <set>
#include <sstream>
#include <string>

#include "fresco/config.hpp"
#include "fresco/diffusion.hpp"
#include "fresco/featopt.hpp"
#include "fresco/flowfield.hpp"
#include "fresco/frtf.hpp"
#include "fresco/io.hpp"
#include "fresco/pipeline.hpp"
#include "fresco/rng.hpp"
#include "fresco/selfcheck.hpp"

namespace fs = std::filesystem;
using namespace fresco;

namespace {

struct Outcome {
  bool passed = true;
  std::string detail;
};

class Notes {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok) {
      passed_ = false;
      if (failures_++ < 5) fails_ << (fails_.tellp() > 0 ? "; " : "") << what;
    }
  }
  void info(const std::string& s) { info_ << (info_.tellp() > 0 ? ", " : "") << s; }
  Outcome done() const {
    std::string d = info_.str();
    if (!passed_) d += (d.empty() ? "" : "; ") + std::string("failed: ") + fails_.str();
    return {passed_, d};
  }

 private:
  bool passed_ = true;
  int failures_ = 0;
  std::ostringstream info_, fails_;
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

fs::path fixture(const std::string& rel) { return fs::path(FRESCO_FIXTURE_DIR) / rel; }

fs::path scratch(const std::string& name) {
  auto p = fs::path(FRESCO_SCRATCH_DIR) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

Grid random_grid(std::uint64_t seed, int h, int w, int c) {
  Grid g(h, w, c);
  NormalSource(seed).fill_normal(g);
  return g;
}

double max_abs_diff(const Grid& a, const Grid& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::fabs(a.data[i] - b.data[i]));
  return m;
}

// 1 -------------------------------------------------------------------------
Outcome gradient_correctness() {
  Notes n;
  const auto inst = selfcheck::random_gradient_instance(2024, 3, 8, 8, 4);
  const auto r = selfcheck::gradient_check(inst, 1e-4L, 1e-4);
  n.info("max rel err " + num(r.worst));
  n.expect(r.passed, r.detail);
  return n.done();
}

// 2 -------------------------------------------------------------------------
Outcome optimization_descent() {
  Notes n;
  featopt::FeatureBatch b;
  b.features = frtf::to_grids(frtf::read(fixture("misalignment/features.frtf")));
  b.flows = frtf::to_flows(frtf::read(fixture("misalignment/flows.frtf")));
  b.masks = frtf::to_masks(frtf::read(fixture("misalignment/masks.frtf")));
  const auto ref = frtf::to_grids(frtf::read(fixture("misalignment/reference.frtf")));
  featopt::OptimConfig cfg;
  cfg.iterations = 20;
  cfg.lr = 0.4;
  cfg.lambda_spat = 50.0;
  const auto r = featopt::optimize_features(b, ref, cfg);
  const double first = r.history.front().total(), last = r.history.back().total();
  n.info("loss " + num(first) + " -> " + num(last) + " (ratio " + num(last / first) + ")");
  n.expect(r.history.size() == 21, "expected 21 loss values");
  n.expect(last < 0.5 * first, "final loss not below half the initial");
  for (std::size_t k = 6; k < r.history.size(); ++k)
    n.expect(r.history[k].total() <= r.history[k - 1].total(), "loss increased at iteration " + std::to_string(k));
  return n.done();
}

// 3 -------------------------------------------------------------------------
Outcome attention_oracles() {
  Notes n;
  const auto a = selfcheck::cross_frame_oracle(3, 50, 1e-6);
  const auto b = selfcheck::cross_frame_dense(4, 50, 1e-6);
  const auto c = selfcheck::spatial_guided_oracle(5, 1e-8);
  const auto d = selfcheck::temporal_guided_oracle(6, 1e-8);
  for (const auto* r : {&a, &b, &c, &d}) {
    n.info(r->name + " " + num(r->worst));
    n.expect(r->passed, r->name + ": " + r->detail);
  }
  return n.done();
}

// 4 -------------------------------------------------------------------------
Outcome ablation_ordering() {
  Notes n;
  const auto video = io::read_frames(fixture("moving_square"));
  auto run = [&](bool guided, bool optimize) {
    pipeline::TranslationConfig cfg;
    cfg.guided_attention = guided;
    cfg.feature_optimization = optimize;
    return pipeline::pixel_mse(pipeline::Translator(cfg).translate_video(video).frames);
  };
  const double base = run(false, false), attn = run(true, false), opt = run(false, true), full = run(true, true);
  n.info("baseline " + num(base) + ", attention " + num(attn) + ", optimization " + num(opt) + ", full " + num(full) +
         " (" + num(100.0 * (1.0 - full / base)) + "% below baseline)");
  n.expect(full <= attn && attn <= base, "full <= attention-only <= baseline violated");
  n.expect(full <= opt && opt <= base, "full <= optimization-only <= baseline violated");
  n.expect(full <= 0.9 * base, "full not 10% below baseline");
  return n.done();
}

// 5 -------------------------------------------------------------------------
Outcome ddpm_identities() {
  Notes n;
  const auto s = diffusion::build_schedule(1000, 1e-4, 0.02);
  NormalSource rng(derive_seed(5, Stream::fixture));
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) {
    const int t = 1 + static_cast<int>(rng.uniform() * 1000);
    const Grid x0 = random_grid(derive_seed(5, Stream::fixture, k, 0), 4, 4, 12);
    const Grid noise = random_grid(derive_seed(5, Stream::fixture, k, 1), 4, 4, 12);
    worst = std::max(worst, max_abs_diff(diffusion::predict_x0(diffusion::forward_sample(x0, t, noise, s), noise, t, s), x0));
  }
  n.info("max round-trip err " + num(worst));
  n.expect(worst < 1e-6, "round trip above 1e-6");
  bool decreasing = s.alpha_bar[1000] > 0.0;
  for (int t = 1; t <= 1000; ++t) decreasing = decreasing && s.alpha_bar[t] < s.alpha_bar[t - 1];
  n.expect(decreasing, "alpha_bar not strictly decreasing and positive");
  return n.done();
}

// 6 -------------------------------------------------------------------------
Outcome keyframe_postconditions() {
  Notes n;
  NormalSource rng(derive_seed(6, Stream::fixture));
  for (int k = 0; k < 200; ++k) {
    const int m = 2 + static_cast<int>(rng.uniform() * 63);
    const int s_max = 1 + static_cast<int>(rng.uniform() * (m - 1));
    const int s_min = 1 + static_cast<int>(rng.uniform() * s_max);
    pipeline::Video video;
    for (int i = 0; i < m; ++i) {
      Grid g(4, 4, 3);
      // random walk with occasional cuts and static stretches
      if (i == 0 || rng.uniform() < 0.1) {
        for (double& v : g.data) v = rng.uniform();
      } else {
        g = video.back();
        if (rng.uniform() < 0.7)
          for (double& v : g.data) v = std::clamp(v + 0.05 * rng.normal(), 0.0, 1.0);
      }
      video.push_back(g);
    }
    const std::string tag = "M=" + std::to_string(m) + " s_min=" + std::to_string(s_min) + " s_max=" + std::to_string(s_max);
    try {
      const auto p = pipeline::select_keyframes(video, s_min, s_max);
      const auto& o = p.keyframes;
      bool ok = !o.empty() && o.front() == 1 && o.back() == m;
      for (std::size_t i = 1; ok && i < o.size(); ++i) ok = o[i] > o[i - 1] && o[i] - o[i - 1] <= s_max;
      n.expect(ok, tag);
    } catch (const std::exception& e) {
      n.expect(false, tag + " threw " + e.what());
    }
  }
  const auto hand = pipeline::select_keyframes(io::read_frames(fixture("keyframes10")), 2, 4).keyframes;
  n.expect(hand == std::vector<int>{1, 3, 6, 10}, "10-frame fixture did not give [1,3,6,10]");
  n.info("200 random cases, fixture gives [1,3,6,10]");
  return n.done();
}

// 7 -------------------------------------------------------------------------

// Records the latent each hook call sees, keyed by step.
class RecordingDenoiser final : public diffusion::Denoiser {
 public:
  explicit RecordingDenoiser(std::shared_ptr<const diffusion::Denoiser> inner) : inner_(std::move(inner)) {}
  const diffusion::ArchitectureDescriptor& descriptor() const override { return inner_->descriptor(); }
  Grid hook_features(const Grid& x_t, int t, const diffusion::DenoiseCondition& cond) const override {
    {
      std::lock_guard<std::mutex> lock(mu_);
      seen_[t].insert(bytes(x_t));
    }
    return inner_->hook_features(x_t, t, cond);
  }
  diffusion::AttentionTensors attention_inputs(const Grid& f) const override { return inner_->attention_inputs(f); }
  Grid predict_noise(const Grid& x_t, int t, const diffusion::DenoiseCondition& cond, const Grid& f,
                     const Grid& h) const override {
    return inner_->predict_noise(x_t, t, cond, f, h);
  }

  static std::vector<unsigned char> bytes(const Grid& g) { return frtf::encode(frtf::from_grid(g), frtf::DType::f64); }
  bool saw(int t, const Grid& g) const { return seen_.count(t) && seen_.at(t).count(bytes(g)); }
  void clear() { seen_.clear(); }

 private:
  std::shared_ptr<const diffusion::Denoiser> inner_;
  mutable std::mutex mu_;
  mutable std::map<int, std::set<std::vector<unsigned char>>> seen_;
};

Outcome batch_anchor_contract() {
  Notes n;
  const auto b8 = pipeline::plan_batches(8, 8);
  n.expect(b8.batches == std::vector<std::vector<int>>{{1, 2, 3, 4, 5, 6, 7, 8}}, "|Omega|=8 plan");
  const auto b14 = pipeline::plan_batches(14, 8);
  n.expect(b14.batches == std::vector<std::vector<int>>{{1, 2, 3, 4, 5, 6, 7, 8}, {1, 8, 9, 10, 11, 12, 13, 14}},
           "|Omega|=14 plan");

  const auto video = io::read_frames(fixture("moving_square"));
  pipeline::TranslationConfig cfg;
  const auto sched = diffusion::build_schedule(cfg.steps, cfg.beta_first, cfg.beta_last);
  auto rec = std::make_shared<RecordingDenoiser>(std::make_shared<diffusion::ToyDenoiser>(cfg.denoiser, sched));
  const pipeline::Translator tr(cfg, rec);
  const auto corr = pipeline::estimate_correspondence(video, cfg.match, cfg.tau);
  const auto first = tr.translate_batch(video, corr, {0, 2, 4, 6});
  rec->clear();
  const auto second = tr.translate_batch(video, corr, {0, 6, 7}, first.anchors);
  int compared = 0;
  for (int frame : {0, 6}) {
    const auto& lat = first.anchors.latents.at(frame);
    for (int t = cfg.t_start; t >= 1; --t) {
      n.expect(rec->saw(t, lat[t]), "frame " + std::to_string(frame + 1) + " differs at t=" + std::to_string(t));
      ++compared;
    }
  }
  n.expect(RecordingDenoiser::bytes(second.latents[0]) == RecordingDenoiser::bytes(first.latents[0]), "frame 1 at t=0");
  n.expect(RecordingDenoiser::bytes(second.latents[1]) == RecordingDenoiser::bytes(first.latents[3]), "frame 7 at t=0");
  const auto& a0 = first.anchors.latents.at(0);
  const auto& c0 = second.anchors.latents.at(0);
  for (int t = 0; t <= cfg.t_start; ++t)
    n.expect(RecordingDenoiser::bytes(a0[t]) == RecordingDenoiser::bytes(c0[t]), "recorded anchor t=" + std::to_string(t));
  n.info("plans for 8 and 14 keyframes, " + std::to_string(compared + 2) + " shared latents byte-identical");
  return n.done();
}

// 8 -------------------------------------------------------------------------
int run_cli(const std::string& args) {
  const int status = std::system((std::string("\"") + FRESCO_CLI + "\" " + args + " 2>/dev/null").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome determinism() {
  Notes n;
  const auto work = scratch("acceptance_determinism");
  std::ofstream(work / "config.json") << "{}\n";
  std::vector<std::string> listing[2];
  for (int k = 0; k < 2; ++k) {
    const auto out = work / (k ? "b" : "a");
    const int code = run_cli("translate --in \"" + fixture("moving_square").string() + "\" --out \"" + out.string() +
                             "\" --config \"" + (work / "config.json").string() + "\" --seed 7");
    n.expect(code == 0, "translate exited with " + std::to_string(code));
    for (const auto& e : fs::directory_iterator(out)) listing[k].push_back(e.path().filename().string());
    std::sort(listing[k].begin(), listing[k].end());
  }
  n.expect(listing[0] == listing[1], "file lists differ");
  n.expect(std::count(listing[0].begin(), listing[0].end(), "manifest.json") == 1, "no manifest.json");
  for (const auto& name : listing[0])
    n.expect(slurp(work / "a" / name) == slurp(work / "b" / name), name + " differs");
  n.info(std::to_string(listing[0].size()) + " files byte-identical");
  return n.done();
}

// 9 -------------------------------------------------------------------------
Grid textured(int h, int w) {
  Grid g(h, w, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) g.at(y, x, c) = std::sin(0.9 * x + 1.7 * y + c) + 0.5 * std::cos(2.3 * x * y + c);
  return g;
}

Outcome flow_properties() {
  Notes n;
  const Grid a = random_grid(91, 17, 23, 3), b = random_grid(92, 17, 23, 3);
  n.expect(flow::backward_warp(a, FlowField(17, 23)) == a, "zero-flow warp not bit-exact");

  FlowField f(17, 23);
  NormalSource rng(93);
  for (int y = 0; y < 17; ++y)
    for (int x = 0; x < 23; ++x) f.set(y, x, 3.0 * rng.normal(), 3.0 * rng.normal());
  Grid mix(17, 23, 3);
  for (std::size_t i = 0; i < mix.size(); ++i) mix.data[i] = 0.7 * a.data[i] - 1.3 * b.data[i];
  const Grid wa = flow::backward_warp(a, f), wb = flow::backward_warp(b, f), wm = flow::backward_warp(mix, f);
  double lin = 0.0;
  for (std::size_t i = 0; i < wm.size(); ++i) lin = std::max(lin, std::fabs(wm.data[i] - (0.7 * wa.data[i] - 1.3 * wb.data[i])));
  n.expect(lin < 1e-6, "warp linearity error " + num(lin));

  const Grid src = textured(32, 32);
  int shifts = 0;
  for (auto [dx, dy] : {std::pair{2, 0}, {-3, 1}, {1, -2}, {0, 3}, {5, -4}}) {
    Grid dst(32, 32, 3);
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x)
        for (int c = 0; c < 3; ++c) dst.at(y, x, c) = src.at(std::clamp(y - dy, 0, 31), std::clamp(x - dx, 0, 31), c);
    const auto est = flow::estimate_flow_block_matching(src, dst, {4, 6});
    bool ok = true;
    for (int y = 8; y < 24; ++y)
      for (int x = 8; x < 24; ++x) ok = ok && est.dx(y, x) == dx && est.dy(y, x) == dy;
    n.expect(ok, "shift (" + std::to_string(dx) + "," + std::to_string(dy) + ") not recovered");
    ++shifts;
  }

  int pairs = 0;
  for (double angle : {4.0, 15.0, -25.0}) {
    const int s = 25;
    const auto r = flow::synth_flow(flow::SynthKind::rotation, {s, s, 0, 0, angle});
    const auto m = flow::compute_occlusion_mask(r.flow, r.inverse, 1.0);
    bool ok = true;
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x) {
        const double ty = y + r.flow.dy(y, x), tx = x + r.flow.dx(y, x);
        ok = ok && m.at(y, x) == (ty >= 0 && tx >= 0 && ty <= s - 1 && tx <= s - 1 ? 1 : 0);
      }
    // Breaking the inverse must invalidate pixels.
    FlowField broken = r.inverse;
    for (double& v : broken.vectors.data) v += 2.0;
    ok = ok && flow::compute_occlusion_mask(r.flow, broken, 1.0).count_valid() == 0;
    n.expect(ok, "occlusion mask wrong for rotation " + num(angle));
    ++pairs;
  }
  const auto c = flow::synth_flow(flow::SynthKind::constant, {12, 12, 3.0, -2.0});
  const auto cm = flow::compute_occlusion_mask(c.flow, c.inverse, 0.5);
  bool ok = true;
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 12; ++x) ok = ok && cm.at(y, x) == (x + 3 <= 11 && y - 2 >= 0 ? 1 : 0);
  n.expect(ok, "occlusion mask wrong for constant flow");

  n.info("linearity err " + num(lin) + ", " + std::to_string(shifts) + " shifts, " + std::to_string(pairs + 1) +
         " flow/inverse pairs");
  return n.done();
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double limit_seconds;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "gradient correctness", 10, gradient_correctness},
      {2, "optimization descent", 5, optimization_descent},
      {3, "attention oracles", 10, attention_oracles},
      {4, "ablation ordering", 120, ablation_ordering},
      {5, "DDPM identities", 1, ddpm_identities},
      {6, "keyframe postconditions", 5, keyframe_postconditions},
      {7, "batch/anchor contract", 30, batch_anchor_contract},
      {8, "determinism", 120, determinism},
      {9, "flow/warp properties", 5, flow_properties},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs > c.limit_seconds) {
      o.passed = false;
      o.detail += "; over the " + num(c.limit_seconds) + " s limit";
    }
    failed += o.passed ? 0 : 1;
    std::printf("%s [%d] %s: %s (%.2f s)\n", o.passed ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
