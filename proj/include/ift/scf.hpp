#pragma once

#include <algorithm>
#include <array>
#include <numeric>
#include <string>
#include <vector>

#include "ift/nn.hpp"
#include "ift/ops.hpp"
#include "ift/scene.hpp"

namespace ift {

namespace detail {

// Identity permutation with the last two axes swapped.
inline std::vector<int> swap_last_two(int rank) {
  std::vector<int> p(static_cast<std::size_t>(rank));
  std::iota(p.begin(), p.end(), 0);
  std::swap(p[static_cast<std::size_t>(rank - 2)], p[static_cast<std::size_t>(rank - 1)]);
  return p;
}

}  // namespace detail

// Softmax attention over the trailing two dims; leading dims are batch.
template <typename S>
Tensor<S> attention_quadratic(const Tensor<S>& q, const Tensor<S>& k, const Tensor<S>& v) {
  require(q.rank() >= 2 && q.rank() == k.rank() && k.rank() == v.rank(),
          "attention_quadratic: rank mismatch");
  const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(q.dim(-1))));
  Tensor<S> logits = mul(matmul(q, permute(k, detail::swap_last_two(k.rank()))), scale);
  return matmul(softmax(logits, -1), v);
}

// Kernelized linear attention, eps(x) = elu(x)+1, evaluated right-to-left:
// eps(Q) (eps(K)^T V). Never materializes an n x m matrix. With normalize,
// each output row is divided by eps(Q_i) . sum_j eps(K_j).
template <typename S>
Tensor<S> attention_linear(const Tensor<S>& q, const Tensor<S>& k, const Tensor<S>& v,
                           bool normalize = true) {
  require(q.rank() >= 2 && q.rank() == k.rank() && k.rank() == v.rank(),
          "attention_linear: rank mismatch");
  const auto tr = detail::swap_last_two(q.rank());
  Tensor<S> eq = add(elu(q), S(1));
  Tensor<S> ek = add(elu(k), S(1));
  Tensor<S> kv = matmul(permute(ek, tr), v);  // [..., d, dv]
  Tensor<S> num = matmul(eq, kv);             // [..., n, dv]
  if (!normalize) return num;
  Tensor<S> ks = sum(ek, -2, true);                     // [..., 1, d]
  Tensor<S> denom = matmul(eq, permute(ks, tr));        // [..., n, 1]
  return div(num, add(denom, static_cast<S>(1e-12)));
}

// Stream identities for the five SCF inputs; ablations use subsets.
enum StreamId : int { kF1 = 0, kF1w = 1, kF2 = 2, kF3 = 3, kF3w = 4 };

// Self-cross fusion: per-frame shallow convs and the single SAAT block whose
// queries always come from the reference stream.
template <typename S>
struct Scf {
  Conv2dLayer<S> conv1, conv2, conv3;  // [I_i, I_i^gamma] 6ch -> C, stride 2
  Linear<S> theta0;                    // queries (reference tokens)
  std::array<Linear<S>, 5> theta;      // keys, one per stream
  std::array<Linear<S>, 5> vartheta;   // values, one per stream
  std::array<Mlp<S>, 5> mlp;           // per-stream feed-forward
  int C = 20, d = 20, heads = 4, patch = 2;
  bool normalize = true;

  Scf() = default;
  Scf(int C_, int d_, int heads_, int patch_, bool normalize_, Rng& rng)
      : conv1(6, C_, 3, 2, 1, rng),
        conv2(6, C_, 3, 2, 1, rng),
        conv3(6, C_, 3, 2, 1, rng),
        C(C_),
        d(d_),
        heads(heads_),
        patch(patch_),
        normalize(normalize_) {
    const index_t tok = static_cast<index_t>(C_) * patch_ * patch_;
    require(d_ % heads_ == 0, "scf: key dim not divisible by heads");
    require(tok % heads_ == 0, "scf: value dim not divisible by heads");
    theta0 = Linear<S>(tok, d_, rng);
    for (auto& l : theta) l = Linear<S>(tok, d_, rng);
    for (auto& l : vartheta) l = Linear<S>(tok, tok, rng);
    for (auto& m : mlp) m = Mlp<S>(tok, 2 * tok, rng);
    // Residual branches start at zero (value and feed-forward output
    // projections), so fusion begins as the identity over each stream and the
    // attention mixing grows only as gradients ask for it.
    for (auto& l : vartheta) {
      std::fill(l.w.data(), l.w.data() + l.w.numel(), S(0));
      std::fill(l.b.data(), l.b.data() + l.b.numel(), S(0));
    }
    for (auto& m : mlp) {
      std::fill(m.fc2.w.data(), m.fc2.w.data() + m.fc2.w.numel(), S(0));
      std::fill(m.fc2.b.data(), m.fc2.b.data() + m.fc2.b.numel(), S(0));
    }
  }

  // [1,3,H,W] frames -> three [1,C,H/2,W/2] feature maps (distinct weights)
  std::array<Tensor<S>, 3> shallow_features(const LdrStack<S>& stack) const {
    const index_t H = stack.height(), W = stack.width();
    auto six = [&](const Tensor<S>& i, const Tensor<S>& g) {
      return concat<S>({reshape(i, {1, 3, H, W}), reshape(g, {1, 3, H, W})}, 1);
    };
    return {conv1(six(stack.I1, stack.G1)), conv2(six(stack.I2, stack.G2)),
            conv3(six(stack.I3, stack.G3))};
  }

  // tokens [n, dim] -> [heads, n, dim/heads]
  Tensor<S> split_heads(const Tensor<S>& t) const {
    const index_t n = t.dim(0), dim = t.dim(1), dh = dim / heads;
    return permute(reshape(t, {n, heads, dh}), {1, 0, 2});
  }

  Tensor<S> merge_heads(const Tensor<S>& t) const {
    const index_t n = t.dim(1), dh = t.dim(2);
    return reshape(permute(t, {1, 0, 2}), {n, heads * dh});
  }

  // Fuses same-shape streams with linear self/cross attention. ids names the
  // projection set each stream uses; exactly one stream must be kF2 — it
  // provides the queries. Returns the fused streams in input order.
  std::vector<Tensor<S>> saat(const std::vector<Tensor<S>>& streams,
                              const std::vector<int>& ids) const {
    require(streams.size() == ids.size() && !streams.empty(), "saat: stream/id count mismatch");
    int ref = -1;
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (ids[i] == kF2) {
        require(ref < 0, "saat: multiple reference streams");
        ref = static_cast<int>(i);
      }
    require(ref >= 0, "saat: no reference stream");
    const index_t H = streams[0].dim(2), W = streams[0].dim(3);
    for (const auto& s : streams)
      require(s.shape() == streams[0].shape(), "saat: stream shape mismatch");

    std::vector<Tensor<S>> tokens, normed;
    for (const auto& s : streams) {
      tokens.push_back(patchify(s, patch));
      normed.push_back(layer_norm(tokens.back()));
    }
    Tensor<S> qh = split_heads(theta0(normed[static_cast<std::size_t>(ref)]));

    std::vector<Tensor<S>> out;
    for (std::size_t i = 0; i < streams.size(); ++i) {
      const int id = ids[i];
      Tensor<S> kh = split_heads(theta[static_cast<std::size_t>(id)](normed[i]));
      Tensor<S> vh = split_heads(vartheta[static_cast<std::size_t>(id)](normed[i]));
      Tensor<S> att = merge_heads(attention_linear(qh, kh, vh, normalize));
      Tensor<S> z = add(tokens[i], att);
      Tensor<S> y = add(z, mlp[static_cast<std::size_t>(id)](layer_norm(z)));
      out.push_back(unpatchify(y, C, H, W, patch));
    }
    return out;
  }

  void collect(ParamMap<S>& pm, const std::string& prefix, const std::vector<int>& active_ids,
               bool attention) {
    conv1.collect(pm, prefix + ".conv1");
    conv2.collect(pm, prefix + ".conv2");
    conv3.collect(pm, prefix + ".conv3");
    if (!attention) return;
    theta0.collect(pm, prefix + ".theta0");
    static const char* names[5] = {"f1", "f1w", "f2", "f3", "f3w"};
    for (int id : active_ids) {
      const std::string s = std::string(names[id]);
      theta[static_cast<std::size_t>(id)].collect(pm, prefix + ".theta." + s);
      vartheta[static_cast<std::size_t>(id)].collect(pm, prefix + ".vartheta." + s);
      mlp[static_cast<std::size_t>(id)].collect(pm, prefix + ".mlp." + s);
    }
  }
};

}  // namespace ift
