#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "ift/ops.hpp"
#include "ift/rng.hpp"
#include "ift/tensor.hpp"

namespace ift {

// Ordered, named registry of trainable tensors. Order is construction order,
// which fixes checkpoint layout and optimizer state indexing.
template <typename S>
class ParamMap {
 public:
  void add(const std::string& name, Tensor<S> t) {
    for (const auto& [n, _] : items_)
      require(n != name, "duplicate parameter name: " + name);
    items_.emplace_back(name, std::move(t));
  }

  Tensor<S>* find(const std::string& name) {
    for (auto& [n, t] : items_)
      if (n == name) return &t;
    return nullptr;
  }

  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }
  std::size_t size() const { return items_.size(); }

  index_t scalar_count() const {
    index_t n = 0;
    for (const auto& [_, t] : items_) n += t.numel();
    return n;
  }

  void set_requires_grad(bool b) {
    for (auto& [_, t] : items_) t.set_requires_grad(b);
  }

  void zero_grad() {
    for (auto& [_, t] : items_) t.zero_grad();
  }

 private:
  std::vector<std::pair<std::string, Tensor<S>>> items_;
};

template <typename S>
Tensor<S> glorot_uniform(Shape shape, index_t fan_in, index_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return Tensor<S>::rand_uniform(std::move(shape), rng, static_cast<S>(-limit),
                                 static_cast<S>(limit));
}

// y = x W + b over the trailing dimension; x is [..., in].
template <typename S>
struct Linear {
  Tensor<S> w;  // [in, out]
  Tensor<S> b;  // [out], undefined when bias-free

  Linear() = default;
  Linear(index_t in, index_t out, Rng& rng, bool bias = true)
      : w(glorot_uniform<S>({in, out}, in, out, rng)) {
    if (bias) b = Tensor<S>::zeros({out});
  }

  Tensor<S> operator()(const Tensor<S>& x) const {
    Tensor<S> y = matmul(x, w);
    return b.defined() ? add(y, b) : y;
  }

  void collect(ParamMap<S>& pm, const std::string& prefix) {
    pm.add(prefix + ".w", w);
    if (b.defined()) pm.add(prefix + ".b", b);
  }
};

template <typename S>
struct Conv2dLayer {
  Tensor<S> w;  // [out, in, k, k]
  Tensor<S> b;  // [out]
  int stride = 1, pad = 0;

  Conv2dLayer() = default;
  Conv2dLayer(index_t in, index_t out, int k, int stride_, int pad_, Rng& rng)
      : w(glorot_uniform<S>({out, in, k, k}, in * k * k, out * k * k, rng)),
        b(Tensor<S>::zeros({out})),
        stride(stride_),
        pad(pad_) {}

  Tensor<S> operator()(const Tensor<S>& x) const { return conv2d(x, w, b, stride, pad); }

  void collect(ParamMap<S>& pm, const std::string& prefix) {
    pm.add(prefix + ".w", w);
    pm.add(prefix + ".b", b);
  }
};

// Per-token normalization over the trailing dimension; no affine parameters.
template <typename S>
Tensor<S> layer_norm(const Tensor<S>& x, S eps = static_cast<S>(1e-5)) {
  Tensor<S> mu = mean(x, -1, true);
  Tensor<S> centered = sub(x, mu);
  Tensor<S> var = mean(mul(centered, centered), -1, true);
  return mul(centered, pow(add(var, eps), static_cast<S>(-0.5)));
}

// Two-layer feed-forward with ReLU.
template <typename S>
struct Mlp {
  Linear<S> fc1, fc2;

  Mlp() = default;
  Mlp(index_t dim, index_t hidden, Rng& rng) : fc1(dim, hidden, rng), fc2(hidden, dim, rng) {}

  Tensor<S> operator()(const Tensor<S>& x) const { return fc2(relu(fc1(x))); }

  void collect(ParamMap<S>& pm, const std::string& prefix) {
    fc1.collect(pm, prefix + ".fc1");
    fc2.collect(pm, prefix + ".fc2");
  }
};

// [1,C,H,W] -> [n, C*p*p] tokens of non-overlapping p x p patches (row-major
// patch grid), and back. Channel-major within a token matches gather_patches'
// patch indexing.
template <typename S>
Tensor<S> patchify(const Tensor<S>& x, int p) {
  require(x.rank() == 4 && x.dim(0) == 1, "patchify: input must be [1,C,H,W]");
  const index_t C = x.dim(1), H = x.dim(2), W = x.dim(3);
  require(H % p == 0 && W % p == 0, "patchify: dims not divisible by patch");
  const index_t gh = H / p, gw = W / p;
  Tensor<S> r = reshape(x, {C, gh, p, gw, p});
  Tensor<S> t = permute(r, {1, 3, 0, 2, 4});  // [gh, gw, C, p, p]
  return reshape(t, {gh * gw, C * p * p});
}

template <typename S>
Tensor<S> unpatchify(const Tensor<S>& tokens, index_t C, index_t H, index_t W, int p) {
  const index_t gh = H / p, gw = W / p;
  require(tokens.rank() == 2 && tokens.dim(0) == gh * gw && tokens.dim(1) == C * p * p,
          "unpatchify: token shape mismatch");
  Tensor<S> r = reshape(tokens, {gh, gw, C, p, p});
  Tensor<S> t = permute(r, {2, 0, 3, 1, 4});  // [C, gh, p, gw, p]
  return reshape(t, {1, C, H, W});
}

}  // namespace ift
