#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "ift/ops.hpp"
#include "ift/radiometry.hpp"
#include "ift/rng.hpp"
#include "ift/tensor.hpp"
#include "ift/tensor_io.hpp"

namespace ift {

struct SceneSpec {
  index_t height = 64, width = 64;
  int n_objects = 2;
  int motion_px = 12;              // max per-frame translation of foreground objects
  int motion_snap = 1;             // offsets land on multiples of this
  double dynamic_range = 1000.0;   // brightest:darkest radiance ratio
  std::uint64_t seed = 1;
  std::array<ExposureValue, 3> evs = {ExposureValue{-2.0}, ExposureValue{0.0},
                                      ExposureValue{2.0}};
  double gamma = 2.2;
  int bits = 16;
  double object_texture = 0.0;  // log-radiance grain riding each shape (0 = flat)
};

template <typename S>
struct LdrStack {
  Tensor<S> I1, I2, I3;  // LDR frames [3,H,W], frame 2 is the reference
  Tensor<S> G1, G2, G3;  // gamma-corrected companions
  std::array<ExposureValue, 3> evs;

  index_t height() const { return I2.dim(1); }
  index_t width() const { return I2.dim(2); }

  const Tensor<S>& ldr(int i) const { return i == 0 ? I1 : (i == 1 ? I2 : I3); }
  const Tensor<S>& corrected(int i) const { return i == 0 ? G1 : (i == 1 ? G2 : G3); }
};

template <typename S>
struct SceneSample {
  LdrStack<S> stack;
  Tensor<S> gt;  // radiance aligned to the reference frame, [3,H,W] in [0,1]
};

// Per-frame object coverage masks [H,W] (1 inside any object), for tests.
struct SceneMasks {
  Tensor<float> m1, m2, m3;
};

namespace detail {

// Bilinearly upsampled coarse grid of values; the smooth building block of
// the synthetic backgrounds.
inline void smooth_field(std::vector<double>& out, index_t H, index_t W, index_t grid, Rng& rng,
                         double lo, double hi) {
  std::vector<double> g(static_cast<std::size_t>((grid + 1) * (grid + 1)));
  for (auto& v : g) v = rng.uniform(lo, hi);
  out.resize(static_cast<std::size_t>(H * W));
  for (index_t y = 0; y < H; ++y) {
    const double fy = static_cast<double>(y) / static_cast<double>(H) * grid;
    const index_t y0 = static_cast<index_t>(fy);
    const double ty = fy - y0;
    for (index_t x = 0; x < W; ++x) {
      const double fx = static_cast<double>(x) / static_cast<double>(W) * grid;
      const index_t x0 = static_cast<index_t>(fx);
      const double tx = fx - x0;
      const double v00 = g[static_cast<std::size_t>(y0 * (grid + 1) + x0)];
      const double v01 = g[static_cast<std::size_t>(y0 * (grid + 1) + x0 + 1)];
      const double v10 = g[static_cast<std::size_t>((y0 + 1) * (grid + 1) + x0)];
      const double v11 = g[static_cast<std::size_t>((y0 + 1) * (grid + 1) + x0 + 1)];
      out[static_cast<std::size_t>(y * W + x)] =
          (1 - ty) * ((1 - tx) * v00 + tx * v01) + ty * ((1 - tx) * v10 + tx * v11);
    }
  }
}

struct SceneObject {
  bool disc;
  index_t cx, cy, half;       // reference-pose center and half-size
  index_t dx1, dy1, dx3, dy3;  // frame 1 / frame 3 offsets
  double color[3];             // linear radiance
  std::vector<double> tex;     // optional log-radiance lattice, 4-px pitch
  index_t lat_n = 0;
};

inline bool object_covers(const SceneObject& o, index_t x, index_t y, index_t dx, index_t dy) {
  const index_t rx = x - (o.cx + dx), ry = y - (o.cy + dy);
  if (o.disc) return rx * rx + ry * ry <= o.half * o.half;
  return std::abs(rx) <= o.half && std::abs(ry) <= o.half;
}

// Bilinear texture lookup in object-local coordinates, so the grain moves
// rigidly with the shape between frames.
inline double object_grain(const SceneObject& o, index_t x, index_t y, index_t dx, index_t dy) {
  if (o.lat_n == 0) return 1.0;
  const double fx = static_cast<double>(x - (o.cx + dx) + o.half) / 4.0;
  const double fy = static_cast<double>(y - (o.cy + dy) + o.half) / 4.0;
  const index_t x0 = static_cast<index_t>(fx), y0 = static_cast<index_t>(fy);
  const double tx = fx - x0, ty = fy - y0;
  const auto at = [&](index_t yy, index_t xx) {
    return o.tex[static_cast<std::size_t>(yy * o.lat_n + xx)];
  };
  const double v = (1 - ty) * ((1 - tx) * at(y0, x0) + tx * at(y0, x0 + 1)) +
                   ty * ((1 - tx) * at(y0 + 1, x0) + tx * at(y0 + 1, x0 + 1));
  return std::exp(v);
}

}  // namespace detail

// Synthesizes a dynamic bracketed scene: smooth wide-range background plus
// solid moving shapes. Frame 2 is the reference pose; gt is its radiance.
template <typename S = float>
SceneSample<S> generate(const SceneSpec& spec, SceneMasks* masks = nullptr) {
  const index_t H = spec.height, W = spec.width;
  require(H > 0 && W > 0, "generate: empty image");
  require(spec.motion_px >= 0, "generate: negative motion");
  require(spec.motion_snap >= 1, "generate: motion snap must be positive");
  require(spec.dynamic_range > 1.0, "generate: dynamic range must exceed 1");
  Rng rng(spec.seed);

  const double log_lo = std::log(1.0 / spec.dynamic_range);
  // two octaves of log-radiance: coarse structure plus mid-frequency texture
  std::vector<double> coarse, fine, chroma;
  detail::smooth_field(coarse, H, W, 4, rng, log_lo, 0.0);
  detail::smooth_field(fine, H, W, 16, rng, -0.4, 0.4);

  Tensor<S> bg({3, H, W});
  for (index_t c = 0; c < 3; ++c) {
    detail::smooth_field(chroma, H, W, 8, rng, -0.25, 0.25);
    S* p = bg.data() + c * H * W;
    for (index_t i = 0; i < H * W; ++i) {
      const double lv = coarse[static_cast<std::size_t>(i)] + fine[static_cast<std::size_t>(i)] +
                        chroma[static_cast<std::size_t>(i)];
      p[i] = static_cast<S>(std::clamp(std::exp(std::min(lv, 0.0)), 1.0 / spec.dynamic_range, 1.0));
    }
  }

  std::vector<detail::SceneObject> objs;
  for (int k = 0; k < spec.n_objects; ++k) {
    detail::SceneObject o;
    o.disc = rng.coin();
    const index_t max_half = std::min(H, W) / 3;
    require(max_half >= 3, "generate: objects larger than image");
    o.half = 3 + rng.uniform_int(max_half - 2);
    o.cx = o.half + rng.uniform_int(std::max<index_t>(W - 2 * o.half, 1));
    o.cy = o.half + rng.uniform_int(std::max<index_t>(H - 2 * o.half, 1));
    const index_t steps = spec.motion_px / spec.motion_snap;
    const auto offset = [&]() {
      return steps == 0 ? index_t{0}
                        : (rng.uniform_int(2 * steps + 1) - steps) * spec.motion_snap;
    };
    o.dx1 = offset();
    o.dy1 = offset();
    o.dx3 = offset();
    o.dy3 = offset();
    for (double& c : o.color) c = std::exp(rng.uniform(log_lo, 0.0));
    if (spec.object_texture > 0) {
      o.lat_n = o.half / 2 + 2;
      o.tex.resize(static_cast<std::size_t>(o.lat_n * o.lat_n));
      for (double& v : o.tex) v = rng.uniform(-spec.object_texture, spec.object_texture);
    }
    objs.push_back(o);
  }

  // radiance per frame pose: 0 -> frame1 offsets, 1 -> reference, 2 -> frame3
  auto paint = [&](int pose, Tensor<S>& out, Tensor<float>* mask) {
    out = bg.clone();
    if (mask) *mask = Tensor<float>::zeros({H, W});
    for (const auto& o : objs) {
      const index_t dx = pose == 0 ? o.dx1 : (pose == 2 ? o.dx3 : 0);
      const index_t dy = pose == 0 ? o.dy1 : (pose == 2 ? o.dy3 : 0);
      for (index_t y = 0; y < H; ++y)
        for (index_t x = 0; x < W; ++x)
          if (detail::object_covers(o, x, y, dx, dy)) {
            const double g = detail::object_grain(o, x, y, dx, dy);
            for (index_t c = 0; c < 3; ++c)
              out.data()[(c * H + y) * W + x] = static_cast<S>(std::min(o.color[c] * g, 1.0));
            if (mask) mask->data()[y * W + x] = 1.0f;
          }
    }
  };

  Tensor<S> r1, r2, r3;
  paint(0, r1, masks ? &masks->m1 : nullptr);
  paint(1, r2, masks ? &masks->m2 : nullptr);
  paint(2, r3, masks ? &masks->m3 : nullptr);

  SceneSample<S> s;
  s.gt = r2;
  s.stack.evs = spec.evs;
  s.stack.I1 = render_exposure(r1, spec.evs[0], spec.gamma, spec.bits);
  s.stack.I2 = render_exposure(r2, spec.evs[1], spec.gamma, spec.bits);
  s.stack.I3 = render_exposure(r3, spec.evs[2], spec.gamma, spec.bits);
  s.stack.G1 = gamma_correct(s.stack.I1, spec.evs[0], spec.gamma);
  s.stack.G2 = gamma_correct(s.stack.I2, spec.evs[1], spec.gamma);
  s.stack.G3 = gamma_correct(s.stack.I3, spec.evs[2], spec.gamma);
  return s;
}

// Classic ghost-prone fusion baseline: triangle-weighted average of the
// gamma-corrected frames, weights from LDR intensities.
template <typename S>
Tensor<S> naive_merge(const LdrStack<S>& stack) {
  const index_t n = stack.I2.numel();
  Tensor<S> out(stack.I2.shape());
  const S eps = static_cast<S>(1e-6);
  const Tensor<S>* ldr[3] = {&stack.I1, &stack.I2, &stack.I3};
  const Tensor<S>* rad[3] = {&stack.G1, &stack.G2, &stack.G3};
  for (index_t i = 0; i < n; ++i) {
    S wsum = 0, acc = 0;
    for (int f = 0; f < 3; ++f) {
      const S p = (*ldr[f])[i];
      const S w = static_cast<S>(1) - std::abs(2 * p - static_cast<S>(1));
      wsum += w;
      acc += w * (*rad[f])[i];
    }
    out[i] = (acc + eps * (*rad[1])[i]) / (wsum + eps);
  }
  return out;
}

// Stack whose supporting frames are exact cell_px-patch permutations of the
// reference (equal exposures), each cell filled with iid noise inset by
// `margin` pixels over a zero background. Returns the position maps the
// search should recover: expected[i] = source cell of destination cell i,
// i.e. the inverse of the applied permutation.
template <typename S = float>
SceneSample<S> make_permutation_sample(index_t H, index_t W, int cell_px, Rng& rng,
                                       std::vector<index_t>& expected1,
                                       std::vector<index_t>& expected3,
                                       int margin = 0) {
  require(H % cell_px == 0 && W % cell_px == 0, "permutation sample: cell must divide size");
  require(margin >= 0 && 2 * margin < cell_px, "permutation sample: margin too large for cell");
  const index_t gh = H / cell_px, gw = W / cell_px, n = gh * gw;

  // Zero background matching the extractor's zero padding; each cell carries
  // iid noise inset by `margin`. With margin >= the downsampling halo every
  // matching token sees a bitwise-identical footprint, so recovery is exact;
  // margin 0 lets neighbouring cells bleed into the features, which makes the
  // matching imperfect and therefore trainable.
  Tensor<S> ref({3, H, W});
  std::fill(ref.data(), ref.data() + ref.numel(), S(0));
  for (index_t t = 0; t < n; ++t) {
    const index_t oy = (t / gw) * cell_px, ox = (t % gw) * cell_px;
    for (index_t c = 0; c < 3; ++c)
      for (index_t y = margin; y < cell_px - margin; ++y)
        for (index_t x = margin; x < cell_px - margin; ++x)
          ref.data()[(c * H + oy + y) * W + ox + x] =
              static_cast<S>(0.05 + 0.95 * rng.uniform());
  }

  auto rand_perm = [&](std::vector<index_t>& fwd, std::vector<index_t>& inv) {
    fwd.resize(static_cast<std::size_t>(n));
    std::iota(fwd.begin(), fwd.end(), index_t{0});
    for (index_t i = n - 1; i > 0; --i)
      std::swap(fwd[static_cast<std::size_t>(i)],
                fwd[static_cast<std::size_t>(rng.uniform_int(i + 1))]);
    inv.assign(static_cast<std::size_t>(n), 0);
    for (index_t i = 0; i < n; ++i) inv[static_cast<std::size_t>(fwd[static_cast<std::size_t>(i)])] = i;
  };
  std::vector<index_t> q1, q3;
  rand_perm(q1, expected1);
  rand_perm(q3, expected3);

  SceneSample<S> s;
  s.gt = ref;
  s.stack.evs = {ExposureValue{0.0}, ExposureValue{0.0}, ExposureValue{0.0}};
  Tensor<S> ref4 = reshape(ref, {1, 3, H, W});
  s.stack.I2 = ref.clone();
  s.stack.I1 = reshape(gather_patches(ref4, q1, cell_px), {3, H, W});
  s.stack.I3 = reshape(gather_patches(ref4, q3, cell_px), {3, H, W});
  s.stack.G1 = gamma_correct(s.stack.I1, s.stack.evs[0]);
  s.stack.G2 = gamma_correct(s.stack.I2, s.stack.evs[1]);
  s.stack.G3 = gamma_correct(s.stack.I3, s.stack.evs[2]);
  return s;
}

// ---- dataset persistence: one directory per sample + JSON manifest ----

template <typename S>
void save_sample(const std::string& dir, const SceneSample<S>& s) {
  std::filesystem::create_directories(dir);
  save_tensor(dir + "/I1.ten", s.stack.I1);
  save_tensor(dir + "/I2.ten", s.stack.I2);
  save_tensor(dir + "/I3.ten", s.stack.I3);
  save_tensor(dir + "/gt.ten", s.gt);
  nlohmann::json m;
  m["evs"] = {s.stack.evs[0].ev, s.stack.evs[1].ev, s.stack.evs[2].ev};
  std::ofstream os(dir + "/manifest.json");
  if (!os) throw Error("cannot write manifest in " + dir);
  os << m.dump(2) << "\n";
}

template <typename S>
SceneSample<S> load_sample(const std::string& dir) {
  SceneSample<S> s;
  s.stack.I1 = load_tensor<S>(dir + "/I1.ten");
  s.stack.I2 = load_tensor<S>(dir + "/I2.ten");
  s.stack.I3 = load_tensor<S>(dir + "/I3.ten");
  s.gt = load_tensor<S>(dir + "/gt.ten");
  std::ifstream is(dir + "/manifest.json");
  if (!is) throw Error("missing manifest in " + dir);
  nlohmann::json m = nlohmann::json::parse(is);
  for (int i = 0; i < 3; ++i)
    s.stack.evs[static_cast<std::size_t>(i)].ev = m.at("evs").at(i).get<double>();
  s.stack.G1 = gamma_correct(s.stack.I1, s.stack.evs[0]);
  s.stack.G2 = gamma_correct(s.stack.I2, s.stack.evs[1]);
  s.stack.G3 = gamma_correct(s.stack.I3, s.stack.evs[2]);
  return s;
}

template <typename Sw, typename S>
LdrStack<Sw> cast_stack(const LdrStack<S>& in) {
  LdrStack<Sw> out;
  out.I1 = in.I1.template cast<Sw>();
  out.I2 = in.I2.template cast<Sw>();
  out.I3 = in.I3.template cast<Sw>();
  out.G1 = in.G1.template cast<Sw>();
  out.G2 = in.G2.template cast<Sw>();
  out.G3 = in.G3.template cast<Sw>();
  out.evs = in.evs;
  return out;
}

}  // namespace ift
