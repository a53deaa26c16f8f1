#pragma once

#include <algorithm>
#include <vector>

#include "ift/nn.hpp"
#include "ift/ops.hpp"
#include "ift/scene.hpp"

namespace ift {

// Fast global patch search: a shared downsampling feature extractor, three
// token projections, and cosine-similarity matching of reference tokens
// against each supporting frame's tokens.
template <typename S>
struct Fgps {
  Conv2dLayer<S> fe1, fe2, fe3;  // shared across frames: one copy of weights
  Linear<S> phi, varphi, zeta;   // query / low-key / high-key projections
  int patch = 2;
  int dim = 32;

  Fgps() = default;
  Fgps(int patch_, int dim_, Rng& rng)
      : fe1(3, 16, 3, 2, 1, rng),
        fe2(16, 32, 3, 2, 1, rng),
        fe3(32, 64, 3, 2, 1, rng),
        phi(64 * patch_ * patch_, dim_, rng, false),
        varphi(64 * patch_ * patch_, dim_, rng, false),
        zeta(64 * patch_ * patch_, dim_, rng, false),
        patch(patch_),
        dim(dim_) {
    // The three projections start from one shared draw: identical content
    // then lands on identical embeddings, so cosine matching is meaningful
    // before any training. They remain separate parameters and specialize
    // independently once training starts.
    std::copy(phi.w.data(), phi.w.data() + phi.w.numel(), varphi.w.data());
    std::copy(phi.w.data(), phi.w.data() + phi.w.numel(), zeta.w.data());
  }

  static constexpr int total_stride = 8;

  // [1,3,h,w] -> [1,64,h/8,w/8]
  Tensor<S> features(const Tensor<S>& g) const {
    require(g.dim(2) % total_stride == 0 && g.dim(3) % total_stride == 0,
            "fgps: search resolution not divisible by total stride");
    return elu(fe3(elu(fe2(elu(fe1(g))))));
  }

  void collect(ParamMap<S>& pm, const std::string& prefix) {
    fe1.collect(pm, prefix + ".fe1");
    fe2.collect(pm, prefix + ".fe2");
    fe3.collect(pm, prefix + ".fe3");
    pm.add(prefix + ".phi.w", phi.w);
    pm.add(prefix + ".varphi.w", varphi.w);
    pm.add(prefix + ".zeta.w", zeta.w);
  }
};

// Smallest integer downsample factor that brings the search resolution to at
// most 256 (so the feature grid stays within 32x32).
inline index_t search_factor(index_t h, index_t w) {
  const index_t m = std::max(h, w);
  const index_t f = (m + 255) / 256;
  require(h % f == 0 && w % f == 0,
          "fgps: input size not divisible by the search downsample factor " + std::to_string(f));
  return f;
}

// Full cosine-similarity matrix between token rows; epsilon-guarded norms.
template <typename S>
Tensor<S> similarity(const Tensor<S>& q, const Tensor<S>& k) {
  require(q.rank() == 2 && k.rank() == 2 && q.dim(1) == k.dim(1),
          "similarity: token shapes mismatch");
  auto unit = [](const Tensor<S>& t) {
    Tensor<S> n = pow(add(sum(mul(t, t), -1, true), static_cast<S>(1e-24)), static_cast<S>(0.5));
    return div(t, n);
  };
  return matmul(unit(q), permute(unit(k), {1, 0}));
}

// Row-wise argmax of the similarity matrix; lowest index wins ties.
template <typename S>
std::vector<index_t> position_map(const Tensor<S>& m) {
  require(m.rank() == 2, "position_map: similarity matrix must be rank 2");
  const index_t n = m.dim(0), c = m.dim(1);
  std::vector<index_t> idx(static_cast<std::size_t>(n));
  for (index_t i = 0; i < n; ++i) {
    index_t best = 0;
    S bv = m[i * c];
    for (index_t j = 1; j < c; ++j)
      if (m[i * c + j] > bv) {
        bv = m[i * c + j];
        best = j;
      }
    idx[static_cast<std::size_t>(i)] = best;
  }
  return idx;
}

// Expands a position map on the (gh x gw) search grid to the (GH x GW)
// feature grid: each coarse cell moves rigidly as a block of fine cells.
inline std::vector<index_t> rescale_position_map(const std::vector<index_t>& p, index_t gh,
                                                 index_t gw, index_t GH, index_t GW) {
  require(static_cast<index_t>(p.size()) == gh * gw, "rescale_position_map: map length mismatch");
  require(GH % gh == 0 && GW % gw == 0,
          "rescale_position_map: fine grid not divisible by coarse grid");
  const index_t ry = GH / gh, rx = GW / gw;
  std::vector<index_t> out(static_cast<std::size_t>(GH * GW));
  for (index_t gy = 0; gy < gh; ++gy)
    for (index_t gx = 0; gx < gw; ++gx) {
      const index_t src = p[static_cast<std::size_t>(gy * gw + gx)];
      const index_t sy = src / gw, sx = src % gw;
      for (index_t y = 0; y < ry; ++y)
        for (index_t x = 0; x < rx; ++x)
          out[static_cast<std::size_t>((gy * ry + y) * GW + gx * rx + x)] =
              (sy * ry + y) * GW + (sx * rx + x);
    }
  return out;
}

// Patch rearrangement by an explicit position map.
template <typename S>
Tensor<S> warp(const Tensor<S>& f, const std::vector<index_t>& pos, int patch) {
  return gather_patches(f, pos, patch);
}

// Differentiable warp: hard gather of (H/gh x W/gw) super-patches in the
// forward pass, softmax-surrogate gradients into both the features and the
// similarity matrix. `soft` switches the forward to the surrogate too, which
// makes the whole model smooth for finite-difference checks.
template <typename S>
Tensor<S> warp_by_similarity(const Tensor<S>& f, const Tensor<S>& m, index_t gh, index_t gw,
                             S tau, bool soft = false) {
  require(f.rank() == 4 && f.dim(0) == 1, "warp_by_similarity: features must be [1,C,H,W]");
  const index_t C = f.dim(1), H = f.dim(2), W = f.dim(3);
  require(H % gh == 0 && W % gw == 0 && H / gh == W / gw,
          "warp_by_similarity: feature map incompatible with the token grid");
  require(m.rank() == 2 && m.dim(0) == gh * gw && m.dim(1) == gh * gw,
          "warp_by_similarity: similarity matrix does not match the grid");
  const int p = static_cast<int>(H / gh);
  Tensor<S> rows = patchify(f, p);
  Tensor<S> picked = soft ? soft_gather(rows, m, tau) : ste_gather(rows, m, tau);
  return unpatchify(picked, C, H, W, p);
}

template <typename S>
struct FgpsResult {
  Tensor<S> m_low, m_high;           // cosine maps, rows = reference tokens
  std::vector<index_t> p_low, p_high;
  index_t grid_h = 0, grid_w = 0;    // token grid of the search resolution
};

// Whole search pipeline: downsample, shared FE, tokens, cosine maps, argmax.
template <typename S>
FgpsResult<S> run_fgps(const LdrStack<S>& stack, const Fgps<S>& p) {
  const index_t H = stack.height(), W = stack.width();
  const index_t f = search_factor(H, W);

  auto prep = [&](const Tensor<S>& g) {
    Tensor<S> x = reshape(g, {1, 3, H, W});
    return f > 1 ? avg_pool2d(x, static_cast<int>(f)) : x;
  };
  Tensor<S> f1 = p.features(prep(stack.G1));
  Tensor<S> f2 = p.features(prep(stack.G2));
  Tensor<S> f3 = p.features(prep(stack.G3));

  const index_t fh = f1.dim(2), fw = f1.dim(3);
  require(fh % p.patch == 0 && fw % p.patch == 0,
          "fgps: feature grid not divisible by token patch");

  Tensor<S> q = p.phi(patchify(f2, p.patch));
  Tensor<S> k_low = p.varphi(patchify(f1, p.patch));
  Tensor<S> k_high = p.zeta(patchify(f3, p.patch));

  FgpsResult<S> r;
  r.grid_h = fh / p.patch;
  r.grid_w = fw / p.patch;
  r.m_low = similarity(q, k_low);
  r.m_high = similarity(q, k_high);
  r.p_low = position_map(r.m_low);
  r.p_high = position_map(r.m_high);
  return r;
}

}  // namespace ift
