#include "fresco/frtf.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace fresco::frtf {

namespace {

constexpr char kMagic[4] = {'F', 'R', 'T', 'F'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "FRTF I/O assumes a little-endian host");

template <typename T>
void put(std::vector<unsigned char>& out, T v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

template <typename T>
T take(const std::vector<unsigned char>& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw Error("FRTF: truncated data");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

void expect_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.dims.size() != rank)
    throw Error(std::string("FRTF: expected rank ") + std::to_string(rank) + " for " + what +
                ", got " + std::to_string(t.dims.size()));
}

}  // namespace

std::size_t Tensor::element_count() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::vector<unsigned char> encode(const Tensor& t, DType dtype) {
  if (t.element_count() != t.values.size()) throw Error("FRTF: dims do not match payload size");
  std::vector<unsigned char> out(kMagic, kMagic + 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(dtype));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(t.dims.size()));
  for (auto d : t.dims) put<std::uint32_t>(out, d);
  if (dtype == DType::f32) {
    for (double v : t.values) put<float>(out, static_cast<float>(v));
  } else {
    for (double v : t.values) put<double>(out, v);
  }
  return out;
}

Tensor decode(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw Error("FRTF: bad magic");
  std::size_t pos = 4;
  auto version = take<std::uint32_t>(bytes, pos);
  if (version != kVersion) throw Error("FRTF: unsupported version " + std::to_string(version));
  auto dtype = take<std::uint32_t>(bytes, pos);
  if (dtype > 1) throw Error("FRTF: unknown dtype code " + std::to_string(dtype));
  auto ndim = take<std::uint32_t>(bytes, pos);
  if (ndim > 16) throw Error("FRTF: implausible rank " + std::to_string(ndim));
  Tensor t;
  for (std::uint32_t i = 0; i < ndim; ++i) t.dims.push_back(take<std::uint32_t>(bytes, pos));
  const std::size_t n = t.element_count();
  const std::size_t width = dtype == 0 ? 4 : 8;
  if (bytes.size() - pos != n * width) throw Error("FRTF: payload size mismatch");
  t.values.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    t.values[i] = dtype == 0 ? static_cast<double>(take<float>(bytes, pos)) : take<double>(bytes, pos);
  return t;
}

void write(const std::filesystem::path& path, const Tensor& t, DType dtype) {
  auto bytes = encode(t, dtype);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("FRTF: cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("FRTF: write failed for " + path.string());
}

Tensor read(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("FRTF: cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  try {
    return decode(bytes);
  } catch (const Error& e) {
    throw Error(std::string(e.what()) + " (" + path.string() + ")");
  }
}

Tensor from_grid(const Grid& g) {
  return {{static_cast<std::uint32_t>(g.height), static_cast<std::uint32_t>(g.width),
           static_cast<std::uint32_t>(g.channels)},
          g.data};
}

Grid to_grid(const Tensor& t) {
  expect_rank(t, 3, "grid");
  Grid g(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]), static_cast<int>(t.dims[2]));
  g.data = t.values;
  return g;
}

Tensor from_flow(const FlowField& f) { return from_grid(f.vectors); }

FlowField to_flow(const Tensor& t) {
  expect_rank(t, 3, "flow");
  if (t.dims[2] != 2) throw Error("FRTF: flow must have last dim 2");
  FlowField f;
  f.vectors = to_grid(t);
  return f;
}

Tensor from_mask(const OcclusionMask& m) {
  Tensor t{{static_cast<std::uint32_t>(m.height), static_cast<std::uint32_t>(m.width)}, {}};
  t.values.assign(m.values.begin(), m.values.end());
  return t;
}

OcclusionMask to_mask(const Tensor& t) {
  expect_rank(t, 2, "mask");
  OcclusionMask m(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]));
  for (std::size_t i = 0; i < t.values.size(); ++i) {
    if (t.values[i] != 0.0 && t.values[i] != 1.0) throw Error("FRTF: mask values must be 0 or 1");
    m.values[i] = t.values[i] != 0.0 ? 1 : 0;
  }
  return m;
}

Tensor from_grids(const std::vector<Grid>& gs) {
  if (gs.empty()) throw Error("FRTF: empty grid sequence");
  Tensor t{{static_cast<std::uint32_t>(gs.size()), static_cast<std::uint32_t>(gs[0].height),
            static_cast<std::uint32_t>(gs[0].width), static_cast<std::uint32_t>(gs[0].channels)},
           {}};
  for (const auto& g : gs) {
    if (!g.same_shape(gs[0])) throw Error("FRTF: grid sequence with mixed shapes");
    t.values.insert(t.values.end(), g.data.begin(), g.data.end());
  }
  return t;
}

std::vector<Grid> to_grids(const Tensor& t) {
  expect_rank(t, 4, "grid sequence");
  std::vector<Grid> out;
  const std::size_t per = static_cast<std::size_t>(t.dims[1]) * t.dims[2] * t.dims[3];
  for (std::uint32_t i = 0; i < t.dims[0]; ++i) {
    Grid g(static_cast<int>(t.dims[1]), static_cast<int>(t.dims[2]), static_cast<int>(t.dims[3]));
    std::copy_n(t.values.begin() + static_cast<std::ptrdiff_t>(i * per), per, g.data.begin());
    out.push_back(std::move(g));
  }
  return out;
}

Tensor from_flows(const std::vector<FlowField>& fs) {
  std::vector<Grid> gs;
  for (const auto& f : fs) gs.push_back(f.vectors);
  return from_grids(gs);
}

std::vector<FlowField> to_flows(const Tensor& t) {
  if (t.dims.size() != 4 || t.dims[3] != 2) throw Error("FRTF: flow sequence must be [N, H, W, 2]");
  std::vector<FlowField> out;
  for (auto& g : to_grids(t)) {
    FlowField f;
    f.vectors = std::move(g);
    out.push_back(std::move(f));
  }
  return out;
}

Tensor from_masks(const std::vector<OcclusionMask>& ms) {
  if (ms.empty()) throw Error("FRTF: empty mask sequence");
  Tensor t{{static_cast<std::uint32_t>(ms.size()), static_cast<std::uint32_t>(ms[0].height),
            static_cast<std::uint32_t>(ms[0].width)},
           {}};
  for (const auto& m : ms) t.values.insert(t.values.end(), m.values.begin(), m.values.end());
  return t;
}

std::vector<OcclusionMask> to_masks(const Tensor& t) {
  expect_rank(t, 3, "mask sequence");
  std::vector<OcclusionMask> out;
  const std::size_t per = static_cast<std::size_t>(t.dims[1]) * t.dims[2];
  for (std::uint32_t i = 0; i < t.dims[0]; ++i) {
    Tensor one{{t.dims[1], t.dims[2]},
               {t.values.begin() + static_cast<std::ptrdiff_t>(i * per),
                t.values.begin() + static_cast<std::ptrdiff_t>((i + 1) * per)}};
    out.push_back(to_mask(one));
  }
  return out;
}

}  // namespace fresco::frtf
