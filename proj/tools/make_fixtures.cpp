// Regenerates the files under tests/fixtures. Output is deterministic.
#include <cmath>
#include <filesystem>
#include <iostream>

#include "fresco/diffusion.hpp"
#include "fresco/featopt.hpp"
#include "fresco/frtf.hpp"
#include "fresco/io.hpp"
#include "fresco/pipeline.hpp"
#include "fresco/rng.hpp"

namespace fs = std::filesystem;
using namespace fresco;

namespace {

// Smooth background with mild texture plus a textured square at (top, left).
Grid square_frame(int size, int top, int left, int side) {
  Grid g(size, size, 3);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double tex = 0.08 * std::sin(0.9 * x + 0.4 * y) + 0.05 * std::cos(0.7 * y - 0.3 * x);
      g.at(y, x, 0) = 0.25 + 0.3 * y / size + tex;
      g.at(y, x, 1) = 0.35 + 0.2 * x / size - tex;
      g.at(y, x, 2) = 0.45 + tex;
      if (y >= top && y < top + side && x >= left && x < left + side) {
        const int u = y - top, v = x - left;
        const double check = ((u / 2 + v / 2) % 2) ? 0.15 : -0.15;
        g.at(y, x, 0) = 0.8 + check;
        g.at(y, x, 1) = 0.3 - 0.5 * check;
        g.at(y, x, 2) = 0.2 + 0.02 * u;
      }
    }
  return g;
}

void moving_square(const fs::path& dir) {
  pipeline::Video v;
  for (int i = 0; i < 8; ++i) v.push_back(square_frame(32, 8 + i, 4 + 2 * i, 12));
  io::write_frames(v, dir);
}

// Flat frames whose inter-frame distance peaks at frame 6, then frame 3.
void keyframes10(const fs::path& dir) {
  const double level[10] = {0.20, 0.22, 0.50, 0.52, 0.54, 0.94, 0.95, 0.96, 0.97, 0.98};
  pipeline::Video v;
  for (double l : level) v.emplace_back(8, 8, 3, l);
  io::write_frames(v, dir);
}

// Three frames of a smooth feature field moving one cell right per frame,
// perturbed so neither the temporal nor the spatial term is satisfied.
void misalignment(const fs::path& dir) {
  const int n = 3, h = 8, w = 8, d = 4;
  NormalSource rng(derive_seed(2024, Stream::fixture, 7));
  auto field = [&](int y, int x, int c) {
    return std::sin(0.6 * x + 0.9 * c) + std::cos(0.5 * y - 0.4 * c) + 0.3 * c;
  };
  std::vector<Grid> feats, refs;
  for (int i = 0; i < n; ++i) {
    Grid f(h, w, d), r(h, w, d);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < d; ++c) {
          r.at(y, x, c) = field(y, x - i, c);
          f.at(y, x, c) = r.at(y, x, c) + 0.8 * rng.normal();
        }
    feats.push_back(f);
    refs.push_back(r);
  }
  std::vector<FlowField> flows;
  std::vector<OcclusionMask> masks;
  for (int i = 0; i + 1 < n; ++i) {
    flows.emplace_back(h, w, -1.0, 0.0);
    OcclusionMask m(h, w, 1);
    for (int y = 0; y < h; ++y) m.at(y, 0) = 0;
    masks.push_back(m);
  }
  fs::create_directories(dir);
  frtf::write(dir / "features.frtf", frtf::from_grids(feats));
  frtf::write(dir / "reference.frtf", frtf::from_grids(refs));
  frtf::write(dir / "flows.frtf", frtf::from_flows(flows));
  frtf::write(dir / "masks.frtf", frtf::from_masks(masks));
}

// Noise prediction for x_t = 0 with an empty condition, and a one-frame
// translation with every cross-frame stage neutralised.
void goldens(const fs::path& dir, const fs::path& square_dir) {
  fs::create_directories(dir);
  const auto schedule = diffusion::build_schedule(50, 1e-4, 0.02);
  const diffusion::ToyDenoiser den(diffusion::ArchitectureDescriptor{}, schedule);
  const Grid zero(4, 4, 12);
  frtf::write(dir / "toy_eps_zero_t10.frtf", frtf::from_grid(den.denoise(zero, 10, {}).eps));

  pipeline::TranslationConfig cfg;
  cfg.scales.spatial = 1e6;
  cfg.optim.iterations = 0;
  cfg.seed = 7;
  const pipeline::Translator tr(cfg);
  const auto video = io::read_frames(square_dir);
  const auto corr = pipeline::estimate_correspondence(video, cfg.match, cfg.tau);
  const auto res = tr.translate_batch(video, corr, {0});
  frtf::write(dir / "single_frame_seed7.frtf", frtf::from_grid(res.decoded[0]));
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_fixtures OUTDIR\n";
    return 2;
  }
  try {
    const fs::path out = argv[1];
    moving_square(out / "moving_square");
    keyframes10(out / "keyframes10");
    misalignment(out / "misalignment");
    goldens(out / "golden", out / "moving_square");
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
