#pragma once

#include <string>
#include <vector>

#include "ift/nn.hpp"
#include "ift/ops.hpp"
#include "ift/scf.hpp"

namespace ift {

// [1,D,H,W] <-> [H*W, D] token views (token = spatial position).
template <typename S>
Tensor<S> to_tokens(const Tensor<S>& x) {
  const index_t D = x.dim(1), H = x.dim(2), W = x.dim(3);
  return permute(reshape(x, {D, H * W}), {1, 0});
}

template <typename S>
Tensor<S> from_tokens(const Tensor<S>& t, index_t D, index_t H, index_t W) {
  return reshape(permute(t, {1, 0}), {1, D, H, W});
}

// Non-overlapping window partition: [1,D,H,W] -> [nw, win*win, D].
template <typename S>
Tensor<S> window_partition(const Tensor<S>& x, int win) {
  const index_t D = x.dim(1), H = x.dim(2), W = x.dim(3);
  require(H % win == 0 && W % win == 0, "window_msa: dims not divisible by window");
  const index_t gh = H / win, gw = W / win;
  Tensor<S> r = reshape(x, {D, gh, win, gw, win});
  Tensor<S> p = permute(r, {1, 3, 2, 4, 0});  // [gh, gw, win, win, D]
  return reshape(p, {gh * gw, static_cast<index_t>(win) * win, D});
}

template <typename S>
Tensor<S> window_merge(const Tensor<S>& wnd, index_t D, index_t H, index_t W, int win) {
  const index_t gh = H / win, gw = W / win;
  Tensor<S> r = reshape(wnd, {gh, gw, win, win, D});
  Tensor<S> p = permute(r, {4, 0, 2, 1, 3});  // [D, gh, win, gw, win]
  return reshape(p, {1, D, H, W});
}

// One CA-ViT block: parallel window attention and channel attention added to
// the residual stream, then a feed-forward sublayer. Shared pre-norm.
template <typename S>
struct CaVitBlock {
  Linear<S> wq, wk, wv, wo;  // window MSA projections
  Linear<S> ca1, ca2;        // channel attention squeeze/excite
  Mlp<S> mlp;
  int heads = 4;

  CaVitBlock() = default;
  CaVitBlock(index_t D, int heads_, Rng& rng)
      : wq(D, D, rng),
        wk(D, D, rng),
        wv(D, D, rng),
        wo(D, D, rng),
        ca1(D, D / 4, rng),
        ca2(D / 4, D, rng),
        mlp(D, 2 * D, rng),
        heads(heads_) {
    require(D % heads_ == 0, "lrt: dim not divisible by heads");
  }

  // Softmax attention within each window; no cross-window mixing.
  Tensor<S> window_msa(const Tensor<S>& x, int win) const {
    const index_t D = x.dim(1), H = x.dim(2), W = x.dim(3);
    const index_t dh = D / heads;
    Tensor<S> wnd = window_partition(x, win);  // [nw, n, D]
    const index_t nw = wnd.dim(0), n = wnd.dim(1);
    auto heads_of = [&](const Linear<S>& proj) {
      return permute(reshape(proj(wnd), {nw, n, heads, dh}), {0, 2, 1, 3});
    };
    Tensor<S> att = attention_quadratic(heads_of(wq), heads_of(wk), heads_of(wv));
    Tensor<S> merged = reshape(permute(att, {0, 2, 1, 3}), {nw, n, D});
    return window_merge(wo(merged), D, H, W, win);
  }

  // Per-channel gate from the global average: x * sigmoid(W2 relu(W1 gap)).
  Tensor<S> channel_attention(const Tensor<S>& x) const {
    const index_t D = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor<S> gap = reshape(mean(reshape(x, {D, H * W}), -1), {1, D});
    Tensor<S> s = sigmoid(ca2(relu(ca1(gap))));
    return mul(x, reshape(s, {1, D, 1, 1}));
  }

  Tensor<S> operator()(const Tensor<S>& x, int win) const {
    const index_t D = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor<S> normed = from_tokens(layer_norm(to_tokens(x)), D, H, W);
    Tensor<S> y = add(add(x, window_msa(normed, win)), channel_attention(normed));
    Tensor<S> z = add(y, from_tokens(mlp(layer_norm(to_tokens(y))), D, H, W));
    return z;
  }

  void collect(ParamMap<S>& pm, const std::string& prefix) {
    wq.collect(pm, prefix + ".wq");
    wk.collect(pm, prefix + ".wk");
    wv.collect(pm, prefix + ".wv");
    wo.collect(pm, prefix + ".wo");
    ca1.collect(pm, prefix + ".ca1");
    ca2.collect(pm, prefix + ".ca2");
    mlp.collect(pm, prefix + ".mlp");
  }
};

// Local reconstruction transformer: projects the fused features to width D,
// runs the CA-ViT blocks, upsamples back to input resolution and emits
// sigmoid-bounded radiance.
template <typename S>
struct Lrt {
  Conv2dLayer<S> in_proj;
  std::vector<CaVitBlock<S>> blocks;
  Conv2dLayer<S> out_proj;
  int window = 8;

  Lrt() = default;
  Lrt(index_t in_ch, index_t D, int depth, int heads, int window_, Rng& rng)
      : in_proj(in_ch, D, 3, 1, 1, rng), out_proj(D, 3, 3, 1, 1, rng), window(window_) {
    for (int i = 0; i < depth; ++i) blocks.emplace_back(D, heads, rng);
  }

  Tensor<S> operator()(const Tensor<S>& fused) const {
    Tensor<S> x = in_proj(fused);
    require(x.dim(2) % window == 0 && x.dim(3) % window == 0,
            "lrt: feature size not divisible by window");
    for (const auto& b : blocks) x = b(x, window);
    return sigmoid(out_proj(upsample_nearest2x(x)));
  }

  void collect(ParamMap<S>& pm, const std::string& prefix) {
    in_proj.collect(pm, prefix + ".in_proj");
    for (std::size_t i = 0; i < blocks.size(); ++i)
      blocks[i].collect(pm, prefix + ".block" + std::to_string(i));
    out_proj.collect(pm, prefix + ".out_proj");
  }
};

}  // namespace ift
