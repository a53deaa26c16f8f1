#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ift/graph.hpp"
#include "ift/parallel.hpp"
#include "ift/tensor.hpp"

namespace ift {

template <typename S>
using MatMap = Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename S>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// Forward ops must never emit NaN/Inf on finite inputs; abort loudly if one does.
template <typename S>
void check_finite(const Tensor<S>& t, const char* op) {
  const S* p = t.data();
  const index_t n = t.numel();
  for (index_t i = 0; i < n; ++i) {
    if (!std::isfinite(p[i]))
      throw Error(std::string("non-finite value produced by op '") + op + "'");
  }
}

namespace detail {

template <typename S>
void record(const char* op, std::vector<Tensor<S>> inputs, Tensor<S>& out,
            std::function<void()> fn) {
  out.set_requires_grad(true);
  Graph<S>::active()->record(op, std::move(inputs), out, std::move(fn));
}

// ---- broadcasting (trailing-dimension alignment) ----

inline Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  const int ra = static_cast<int>(a.size()), rb = static_cast<int>(b.size());
  const int r = std::max(ra, rb);
  Shape out(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) {
    const index_t da = i < r - ra ? 1 : a[static_cast<std::size_t>(i - (r - ra))];
    const index_t db = i < r - rb ? 1 : b[static_cast<std::size_t>(i - (r - rb))];
    if (da != db && da != 1 && db != 1)
      throw Error(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                  " are not broadcast-compatible");
    out[static_cast<std::size_t>(i)] = std::max(da, db);
  }
  return out;
}

// Strides of `shape` viewed through `out` (zero on broadcast dims), padded to out rank.
inline Shape broadcast_strides(const Shape& shape, const Shape& out) {
  const int r = static_cast<int>(out.size()), rs = static_cast<int>(shape.size());
  Shape st(static_cast<std::size_t>(r), 0);
  Shape own = strides_of(shape);
  for (int i = 0; i < rs; ++i) {
    const std::size_t oi = static_cast<std::size_t>(r - rs + i);
    st[oi] = shape[static_cast<std::size_t>(i)] == 1 ? 0 : own[static_cast<std::size_t>(i)];
  }
  return st;
}

// Apply f(a_off, b_off, out_index) over every element of `out`.
template <typename F>
void bcast_iter(const Shape& out, const Shape& sa, const Shape& sb, F&& f) {
  const int r = static_cast<int>(out.size());
  const index_t n = numel(out);
  if (n == 0) return;
  std::vector<index_t> idx(static_cast<std::size_t>(r), 0);
  index_t oa = 0, ob = 0;
  for (index_t i = 0; i < n; ++i) {
    f(oa, ob, i);
    for (int d = r - 1; d >= 0; --d) {
      const std::size_t ud = static_cast<std::size_t>(d);
      if (++idx[ud] < out[ud]) {
        oa += sa[ud];
        ob += sb[ud];
        break;
      }
      idx[ud] = 0;
      oa -= sa[ud] * (out[ud] - 1);
      ob -= sb[ud] * (out[ud] - 1);
    }
  }
}

template <typename S, typename FwdF, typename DaF, typename DbF>
Tensor<S> binary_op(const char* name, const Tensor<S>& a, const Tensor<S>& b, FwdF f, DaF da,
                    DbF db) {
  const Shape os = broadcast_shape(a.shape(), b.shape(), name);
  Tensor<S> out(os);
  const bool same = a.shape() == b.shape();
  if (same) {
    const S* pa = a.data();
    const S* pb = b.data();
    S* po = out.data();
    const index_t n = out.numel();
    for (index_t i = 0; i < n; ++i) po[i] = f(pa[i], pb[i]);
  } else {
    const Shape sa = broadcast_strides(a.shape(), os);
    const Shape sb = broadcast_strides(b.shape(), os);
    const S* pa = a.data();
    const S* pb = b.data();
    S* po = out.data();
    bcast_iter(os, sa, sb,
               [&](index_t oa, index_t ob, index_t i) { po[i] = f(pa[oa], pb[ob]); });
  }
  check_finite(out, name);
  if (tracking<S>(a, b)) {
    Tensor<S> ac = a, bc = b, oc = out;
    record<S>(name, {a, b}, out, [ac, bc, oc, da, db, same]() mutable {
      const S* g = oc.grad();
      if (same) {
        const index_t n = oc.numel();
        if (ac.requires_grad()) {
          S* ga = ac.grad();
          const S *pa = ac.data(), *pb = bc.data();
          for (index_t i = 0; i < n; ++i) ga[i] += da(g[i], pa[i], pb[i]);
        }
        if (bc.requires_grad()) {
          S* gb = bc.grad();
          const S *pa = ac.data(), *pb = bc.data();
          for (index_t i = 0; i < n; ++i) gb[i] += db(g[i], pa[i], pb[i]);
        }
        return;
      }
      const Shape& os2 = oc.shape();
      const Shape sa2 = broadcast_strides(ac.shape(), os2);
      const Shape sb2 = broadcast_strides(bc.shape(), os2);
      S* ga = ac.requires_grad() ? ac.grad() : nullptr;
      S* gb = bc.requires_grad() ? bc.grad() : nullptr;
      const S *pa = ac.data(), *pb = bc.data();
      bcast_iter(os2, sa2, sb2, [&](index_t oa, index_t ob, index_t i) {
        if (ga) ga[oa] += da(g[i], pa[oa], pb[ob]);
        if (gb) gb[ob] += db(g[i], pa[oa], pb[ob]);
      });
    });
  }
  return out;
}

template <typename S, typename FwdF, typename DF>
Tensor<S> unary_op(const char* name, const Tensor<S>& x, FwdF f, DF dfdx) {
  Tensor<S> out(x.shape());
  const S* px = x.data();
  S* po = out.data();
  const index_t n = x.numel();
  for (index_t i = 0; i < n; ++i) po[i] = f(px[i]);
  check_finite(out, name);
  if (tracking<S>(x)) {
    Tensor<S> xc = x, oc = out;
    record<S>(name, {x}, out, [xc, oc, dfdx]() mutable {
      const S* g = oc.grad();
      const S* px2 = xc.data();
      const S* py = oc.data();
      S* gx = xc.grad();
      const index_t m = xc.numel();
      for (index_t i = 0; i < m; ++i) gx[i] += g[i] * dfdx(px2[i], py[i]);
    });
  }
  return out;
}

}  // namespace detail

// ---- elementwise ----

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  return detail::binary_op<S>(
      "add", a, b, [](S x, S y) { return x + y; }, [](S g, S, S) { return g; },
      [](S g, S, S) { return g; });
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  return detail::binary_op<S>(
      "sub", a, b, [](S x, S y) { return x - y; }, [](S g, S, S) { return g; },
      [](S g, S, S) { return -g; });
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  return detail::binary_op<S>(
      "mul", a, b, [](S x, S y) { return x * y; }, [](S g, S, S y) { return g * y; },
      [](S g, S x, S) { return g * x; });
}

template <typename S>
Tensor<S> div(const Tensor<S>& a, const Tensor<S>& b) {
  for (index_t i = 0; i < b.numel(); ++i)
    if (b[i] == S(0)) throw Error("div: division by zero");
  return detail::binary_op<S>(
      "div", a, b, [](S x, S y) { return x / y; }, [](S g, S, S y) { return g / y; },
      [](S g, S x, S y) { return -g * x / (y * y); });
}

template <typename S>
Tensor<S> add(const Tensor<S>& a, S c) {
  return detail::unary_op<S>(
      "add_scalar", a, [c](S x) { return x + c; }, [](S, S) { return S(1); });
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, S c) {
  return detail::unary_op<S>(
      "mul_scalar", a, [c](S x) { return x * c; }, [c](S, S) { return c; });
}

template <typename S>
Tensor<S> neg(const Tensor<S>& a) {
  return mul(a, S(-1));
}

template <typename S>
Tensor<S> exp(const Tensor<S>& x) {
  return detail::unary_op<S>(
      "exp", x, [](S v) { return std::exp(v); }, [](S, S y) { return y; });
}

template <typename S>
Tensor<S> log(const Tensor<S>& x) {
  for (index_t i = 0; i < x.numel(); ++i)
    if (x[i] <= S(0)) throw Error("log: non-positive input");
  return detail::unary_op<S>(
      "log", x, [](S v) { return std::log(v); }, [](S v, S) { return S(1) / v; });
}

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
  return detail::unary_op<S>(
      "relu", x, [](S v) { return v > S(0) ? v : S(0); },
      [](S v, S) { return v > S(0) ? S(1) : S(0); });
}

// elu(x) = x for x > 0, e^x - 1 otherwise.
template <typename S>
Tensor<S> elu(const Tensor<S>& x) {
  return detail::unary_op<S>(
      "elu", x, [](S v) { return v > S(0) ? v : std::expm1(v); },
      [](S v, S y) { return v > S(0) ? S(1) : y + S(1); });
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& x) {
  return detail::unary_op<S>(
      "sigmoid", x,
      [](S v) {
        if (v >= S(0)) return S(1) / (S(1) + std::exp(-v));
        const S e = std::exp(v);
        return e / (S(1) + e);
      },
      [](S, S y) { return y * (S(1) - y); });
}

template <typename S>
Tensor<S> abs(const Tensor<S>& x) {
  return detail::unary_op<S>(
      "abs", x, [](S v) { return std::abs(v); },
      [](S v, S) { return v > S(0) ? S(1) : (v < S(0) ? S(-1) : S(0)); });
}

template <typename S>
Tensor<S> pow(const Tensor<S>& x, S e) {
  return detail::unary_op<S>(
      "pow", x, [e](S v) { return std::pow(v, e); },
      [e](S v, S) { return e * std::pow(v, e - S(1)); });
}

template <typename S>
Tensor<S> operator+(const Tensor<S>& a, const Tensor<S>& b) {
  return add(a, b);
}
template <typename S>
Tensor<S> operator-(const Tensor<S>& a, const Tensor<S>& b) {
  return sub(a, b);
}
template <typename S>
Tensor<S> operator*(const Tensor<S>& a, const Tensor<S>& b) {
  return mul(a, b);
}
template <typename S>
Tensor<S> operator/(const Tensor<S>& a, const Tensor<S>& b) {
  return div(a, b);
}
template <typename S>
Tensor<S> operator+(const Tensor<S>& a, S c) {
  return add(a, c);
}
template <typename S>
Tensor<S> operator*(const Tensor<S>& a, S c) {
  return mul(a, c);
}
template <typename S>
Tensor<S> operator-(const Tensor<S>& a, S c) {
  return add(a, -c);
}
template <typename S>
Tensor<S> operator-(const Tensor<S>& a) {
  return neg(a);
}

// ---- structural ----

template <typename S>
Tensor<S> reshape(const Tensor<S>& x, Shape shape) {
  require(numel(shape) == x.numel(),
          "reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape) + " changes element count");
  Tensor<S> out = Tensor<S>::from(std::move(shape), x.vec());
  if (tracking<S>(x)) {
    Tensor<S> xc = x, oc = out;
    detail::record<S>("reshape", {x}, out, [xc, oc]() mutable {
      const S* g = oc.grad();
      S* gx = xc.grad();
      const index_t n = xc.numel();
      for (index_t i = 0; i < n; ++i) gx[i] += g[i];
    });
  }
  return out;
}

template <typename S>
Tensor<S> permute(const Tensor<S>& x, const std::vector<int>& perm) {
  const int r = x.rank();
  require(static_cast<int>(perm.size()) == r, "permute: perm rank mismatch");
  std::vector<bool> seen(static_cast<std::size_t>(r), false);
  Shape os(static_cast<std::size_t>(r));
  for (int d = 0; d < r; ++d) {
    const int p = perm[static_cast<std::size_t>(d)];
    require(p >= 0 && p < r && !seen[static_cast<std::size_t>(p)], "permute: invalid permutation");
    seen[static_cast<std::size_t>(p)] = true;
    os[static_cast<std::size_t>(d)] = x.shape()[static_cast<std::size_t>(p)];
  }
  const Shape sx = strides_of(x.shape());
  Shape src_stride(static_cast<std::size_t>(r));
  for (int d = 0; d < r; ++d)
    src_stride[static_cast<std::size_t>(d)] = sx[static_cast<std::size_t>(perm[static_cast<std::size_t>(d)])];

  Tensor<S> out(os);
  const S* px = x.data();
  S* po = out.data();
  const Shape zero(static_cast<std::size_t>(r), 0);
  detail::bcast_iter(os, src_stride, zero,
                     [&](index_t oa, index_t, index_t i) { po[i] = px[oa]; });
  if (tracking<S>(x)) {
    Tensor<S> xc = x, oc = out;
    detail::record<S>("permute", {x}, out, [xc, oc, os, src_stride, zero]() mutable {
      const S* g = oc.grad();
      S* gx = xc.grad();
      detail::bcast_iter(os, src_stride, zero,
                         [&](index_t oa, index_t, index_t i) { gx[oa] += g[i]; });
    });
  }
  return out;
}

template <typename S>
Tensor<S> concat(const std::vector<Tensor<S>>& parts, int axis) {
  require(!parts.empty(), "concat: no inputs");
  const int r = parts[0].rank();
  const int ax = normalize_axis(axis, r);
  Shape os = parts[0].shape();
  index_t total = 0;
  for (const auto& p : parts) {
    require(p.rank() == r, "concat: rank mismatch");
    for (int d = 0; d < r; ++d)
      require(d == ax || p.shape()[static_cast<std::size_t>(d)] == os[static_cast<std::size_t>(d)],
              "concat: shape mismatch off the concat axis");
    total += p.dim(ax);
  }
  os[static_cast<std::size_t>(ax)] = total;
  Tensor<S> out(os);

  index_t outer = 1, inner = 1;
  for (int d = 0; d < ax; ++d) outer *= os[static_cast<std::size_t>(d)];
  for (int d = ax + 1; d < r; ++d) inner *= os[static_cast<std::size_t>(d)];

  S* po = out.data();
  index_t offset = 0;
  for (const auto& p : parts) {
    const index_t seg = p.dim(ax) * inner;
    const S* pp = p.data();
    for (index_t o = 0; o < outer; ++o)
      std::memcpy(po + o * total * inner + offset, pp + o * seg, sizeof(S) * static_cast<std::size_t>(seg));
    offset += seg;
  }

  bool track = Graph<S>::active() != nullptr &&
               std::any_of(parts.begin(), parts.end(), [](const Tensor<S>& t) { return t.requires_grad(); });
  if (track) {
    std::vector<Tensor<S>> pc = parts;
    Tensor<S> oc = out;
    detail::record<S>("concat", parts, out, [pc, oc, outer, inner, total]() mutable {
      const S* g = oc.grad();
      index_t off = 0;
      for (auto& p : pc) {
        const index_t seg = p.numel() / std::max<index_t>(outer, 1);
        if (p.requires_grad()) {
          S* gp = p.grad();
          for (index_t o = 0; o < outer; ++o) {
            const S* gseg = g + o * total * inner + off;
            S* dst = gp + o * seg;
            for (index_t i = 0; i < seg; ++i) dst[i] += gseg[i];
          }
        }
        off += seg;
      }
    });
  }
  return out;
}

// ---- matmul (batched, broadcast over leading dims) ----

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  require(a.rank() >= 2 && b.rank() >= 2, "matmul: inputs must have rank >= 2");
  const index_t m = a.dim(-2), k = a.dim(-1);
  const index_t kb = b.dim(-2), n = b.dim(-1);
  require(k == kb, "matmul: inner dimensions " + shape_str(a.shape()) + " x " +
                       shape_str(b.shape()) + " do not match");
  Shape ba(a.shape().begin(), a.shape().end() - 2);
  Shape bb(b.shape().begin(), b.shape().end() - 2);
  const Shape bs = detail::broadcast_shape(ba, bb, "matmul");
  Shape os = bs;
  os.push_back(m);
  os.push_back(n);
  Tensor<S> out(os);

  Shape sa = detail::broadcast_strides(ba, bs);
  Shape sb = detail::broadcast_strides(bb, bs);
  for (auto& v : sa) v *= m * k;
  for (auto& v : sb) v *= k * n;
  const index_t nb = numel(bs);
  const Shape zero(bs.size(), 0);

  std::vector<index_t> offa(static_cast<std::size_t>(nb)), offb(static_cast<std::size_t>(nb));
  {
    index_t bi = 0;
    detail::bcast_iter(bs, sa, sb, [&](index_t oa, index_t ob, index_t) {
      offa[static_cast<std::size_t>(bi)] = oa;
      offb[static_cast<std::size_t>(bi)] = ob;
      ++bi;
    });
  }
  const index_t batches = static_cast<index_t>(offa.size());

  for (index_t i = 0; i < batches; ++i) {
    ConstMatMap<S> A(a.data() + offa[static_cast<std::size_t>(i)], m, k);
    ConstMatMap<S> B(b.data() + offb[static_cast<std::size_t>(i)], k, n);
    MatMap<S> C(out.data() + i * m * n, m, n);
    C.noalias() = A * B;
  }
  check_finite(out, "matmul");

  if (tracking<S>(a, b)) {
    Tensor<S> ac = a, bc = b, oc = out;
    detail::record<S>("matmul", {a, b}, out, [ac, bc, oc, offa, offb, m, k, n]() mutable {
      const index_t batches2 = static_cast<index_t>(offa.size());
      const bool ga = ac.requires_grad(), gb = bc.requires_grad();
      S* pga = ga ? ac.grad() : nullptr;
      S* pgb = gb ? bc.grad() : nullptr;
      for (index_t i = 0; i < batches2; ++i) {
        ConstMatMap<S> G(oc.grad() + i * m * n, m, n);
        if (ga) {
          ConstMatMap<S> B(bc.data() + offb[static_cast<std::size_t>(i)], k, n);
          MatMap<S> dA(pga + offa[static_cast<std::size_t>(i)], m, k);
          dA.noalias() += G * B.transpose();
        }
        if (gb) {
          ConstMatMap<S> A(ac.data() + offa[static_cast<std::size_t>(i)], m, k);
          MatMap<S> dB(pgb + offb[static_cast<std::size_t>(i)], k, n);
          dB.noalias() += A.transpose() * G;
        }
      }
    });
  }
  return out;
}

// ---- conv2d (cross-correlation, zero padding, im2col + GEMM) ----

namespace detail {

template <typename S>
void im2col(const S* img, index_t C, index_t H, index_t W, index_t kh, index_t kw, index_t stride,
            index_t pad, index_t Ho, index_t Wo, S* cols) {
  // cols: [C*kh*kw, Ho*Wo]
  for (index_t c = 0; c < C; ++c) {
    for (index_t ki = 0; ki < kh; ++ki) {
      for (index_t kj = 0; kj < kw; ++kj) {
        S* row = cols + ((c * kh + ki) * kw + kj) * Ho * Wo;
        for (index_t oy = 0; oy < Ho; ++oy) {
          const index_t iy = oy * stride + ki - pad;
          S* dst = row + oy * Wo;
          if (iy < 0 || iy >= H) {
            std::fill(dst, dst + Wo, S(0));
            continue;
          }
          const S* src = img + (c * H + iy) * W;
          for (index_t ox = 0; ox < Wo; ++ox) {
            const index_t ix = ox * stride + kj - pad;
            dst[ox] = (ix >= 0 && ix < W) ? src[ix] : S(0);
          }
        }
      }
    }
  }
}

template <typename S>
void col2im_add(const S* cols, index_t C, index_t H, index_t W, index_t kh, index_t kw,
                index_t stride, index_t pad, index_t Ho, index_t Wo, S* img) {
  for (index_t c = 0; c < C; ++c) {
    for (index_t ki = 0; ki < kh; ++ki) {
      for (index_t kj = 0; kj < kw; ++kj) {
        const S* row = cols + ((c * kh + ki) * kw + kj) * Ho * Wo;
        for (index_t oy = 0; oy < Ho; ++oy) {
          const index_t iy = oy * stride + ki - pad;
          if (iy < 0 || iy >= H) continue;
          S* dst = img + (c * H + iy) * W;
          const S* src = row + oy * Wo;
          for (index_t ox = 0; ox < Wo; ++ox) {
            const index_t ix = ox * stride + kj - pad;
            if (ix >= 0 && ix < W) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& bias, int stride,
                 int pad) {
  require(x.rank() == 4, "conv2d: input must be [B,C,H,W]");
  require(w.rank() == 4, "conv2d: weight must be [Cout,Cin,kh,kw]");
  require(stride >= 1, "conv2d: stride must be positive");
  require(pad >= 0, "conv2d: padding must be non-negative");
  const index_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const index_t Cout = w.dim(0), Cin = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  require(C == Cin, "conv2d: input channels " + std::to_string(C) + " != weight channels " +
                        std::to_string(Cin));
  require(kh <= H + 2 * pad && kw <= W + 2 * pad, "conv2d: kernel larger than padded input");
  if (bias.defined())
    require(bias.rank() == 1 && bias.dim(0) == Cout, "conv2d: bias must be [Cout]");
  const index_t Ho = (H + 2 * pad - kh) / stride + 1;
  const index_t Wo = (W + 2 * pad - kw) / stride + 1;
  const index_t K = C * kh * kw;

  Tensor<S> out({B, Cout, Ho, Wo});
  auto cols = std::make_shared<std::vector<S>>(static_cast<std::size_t>(B * K * Ho * Wo));
  for (index_t b = 0; b < B; ++b) {
    S* cb = cols->data() + b * K * Ho * Wo;
    detail::im2col(x.data() + b * C * H * W, C, H, W, kh, kw, stride, pad, Ho, Wo, cb);
    ConstMatMap<S> Wm(w.data(), Cout, K);
    ConstMatMap<S> Cm(cb, K, Ho * Wo);
    MatMap<S> Om(out.data() + b * Cout * Ho * Wo, Cout, Ho * Wo);
    Om.noalias() = Wm * Cm;
    if (bias.defined()) {
      for (index_t c = 0; c < Cout; ++c) Om.row(c).array() += bias[c];
    }
  }
  check_finite(out, "conv2d");

  const bool track = bias.defined() ? tracking<S>(x, w, bias) : tracking<S>(x, w);
  if (track) {
    Tensor<S> xc = x, wc = w, bc = bias, oc = out;
    std::vector<Tensor<S>> ins = {x, w};
    if (bias.defined()) ins.push_back(bias);
    detail::record<S>("conv2d", std::move(ins), out,
                      [xc, wc, bc, oc, cols, B, C, H, W, Cout, kh, kw, stride, pad, Ho, Wo,
                       K]() mutable {
                        for (index_t b = 0; b < B; ++b) {
                          ConstMatMap<S> G(oc.grad() + b * Cout * Ho * Wo, Cout, Ho * Wo);
                          const S* cb = cols->data() + b * K * Ho * Wo;
                          if (wc.requires_grad()) {
                            ConstMatMap<S> Cm(cb, K, Ho * Wo);
                            MatMap<S> dW(wc.grad(), Cout, K);
                            dW.noalias() += G * Cm.transpose();
                          }
                          if (bc.defined() && bc.requires_grad()) {
                            S* db = bc.grad();
                            for (index_t c = 0; c < Cout; ++c) db[c] += G.row(c).sum();
                          }
                          if (xc.requires_grad()) {
                            ConstMatMap<S> Wm(wc.data(), Cout, K);
                            std::vector<S> dcols(static_cast<std::size_t>(K * Ho * Wo));
                            MatMap<S> Dm(dcols.data(), K, Ho * Wo);
                            Dm.noalias() = Wm.transpose() * G;
                            detail::col2im_add(dcols.data(), C, H, W, kh, kw, stride, pad, Ho, Wo,
                                               xc.grad() + b * C * H * W);
                          }
                        }
                      });
  }
  return out;
}

template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, int stride, int pad) {
  return conv2d(x, w, Tensor<S>{}, stride, pad);
}

// ---- softmax ----

template <typename S>
Tensor<S> softmax(const Tensor<S>& x, int axis) {
  const int ax = normalize_axis(axis, x.rank());
  const index_t n = x.shape()[static_cast<std::size_t>(ax)];
  index_t outer = 1, inner = 1;
  for (int d = 0; d < ax; ++d) outer *= x.shape()[static_cast<std::size_t>(d)];
  for (int d = ax + 1; d < x.rank(); ++d) inner *= x.shape()[static_cast<std::size_t>(d)];

  Tensor<S> out(x.shape());
  const S* px = x.data();
  S* po = out.data();
  for (index_t o = 0; o < outer; ++o) {
    for (index_t in = 0; in < inner; ++in) {
      const index_t base = o * n * inner + in;
      S mx = px[base];
      for (index_t j = 1; j < n; ++j) mx = std::max(mx, px[base + j * inner]);
      S sum = S(0);
      for (index_t j = 0; j < n; ++j) {
        const S e = std::exp(px[base + j * inner] - mx);
        po[base + j * inner] = e;
        sum += e;
      }
      for (index_t j = 0; j < n; ++j) po[base + j * inner] /= sum;
    }
  }
  check_finite(out, "softmax");

  if (tracking<S>(x)) {
    Tensor<S> xc = x, oc = out;
    detail::record<S>("softmax", {x}, out, [xc, oc, outer, inner, n]() mutable {
      const S* g = oc.grad();
      const S* y = oc.data();
      S* gx = xc.grad();
      for (index_t o = 0; o < outer; ++o) {
        for (index_t in = 0; in < inner; ++in) {
          const index_t base = o * n * inner + in;
          S dot = S(0);
          for (index_t j = 0; j < n; ++j) dot += g[base + j * inner] * y[base + j * inner];
          for (index_t j = 0; j < n; ++j) {
            const index_t k = base + j * inner;
            gx[k] += y[k] * (g[k] - dot);
          }
        }
      }
    });
  }
  return out;
}

// ---- reductions ----

namespace detail {

template <typename S>
void axis_extents(const Tensor<S>& x, int ax, index_t& outer, index_t& n, index_t& inner) {
  outer = 1;
  inner = 1;
  n = x.shape()[static_cast<std::size_t>(ax)];
  for (int d = 0; d < ax; ++d) outer *= x.shape()[static_cast<std::size_t>(d)];
  for (int d = ax + 1; d < x.rank(); ++d) inner *= x.shape()[static_cast<std::size_t>(d)];
}

inline Shape reduced_shape(const Shape& s, int ax, bool keepdim) {
  Shape os;
  for (int d = 0; d < static_cast<int>(s.size()); ++d) {
    if (d == ax) {
      if (keepdim) os.push_back(1);
    } else {
      os.push_back(s[static_cast<std::size_t>(d)]);
    }
  }
  if (os.empty()) os.push_back(1);
  return os;
}

}  // namespace detail

template <typename S>
Tensor<S> sum(const Tensor<S>& x, int axis, bool keepdim = false) {
  const int ax = normalize_axis(axis, x.rank());
  index_t outer, n, inner;
  detail::axis_extents(x, ax, outer, n, inner);
  require(n > 0, "sum: empty axis");
  Tensor<S> out(detail::reduced_shape(x.shape(), ax, keepdim));
  const S* px = x.data();
  S* po = out.data();
  for (index_t o = 0; o < outer; ++o)
    for (index_t in = 0; in < inner; ++in) {
      S acc = S(0);
      for (index_t j = 0; j < n; ++j) acc += px[o * n * inner + j * inner + in];
      po[o * inner + in] = acc;
    }
  check_finite(out, "sum");
  if (tracking<S>(x)) {
    Tensor<S> xc = x, oc = out;
    detail::record<S>("sum", {x}, out, [xc, oc, outer, n, inner]() mutable {
      const S* g = oc.grad();
      S* gx = xc.grad();
      for (index_t o = 0; o < outer; ++o)
        for (index_t in = 0; in < inner; ++in) {
          const S gv = g[o * inner + in];
          for (index_t j = 0; j < n; ++j) gx[o * n * inner + j * inner + in] += gv;
        }
    });
  }
  return out;
}

template <typename S>
Tensor<S> mean(const Tensor<S>& x, int axis, bool keepdim = false) {
  const index_t n = x.shape()[static_cast<std::size_t>(normalize_axis(axis, x.rank()))];
  return mul(sum(x, axis, keepdim), S(1) / static_cast<S>(n));
}

template <typename S>
Tensor<S> max_reduce(const Tensor<S>& x, int axis, bool keepdim = false) {
  const int ax = normalize_axis(axis, x.rank());
  index_t outer, n, inner;
  detail::axis_extents(x, ax, outer, n, inner);
  require(n > 0, "max: empty axis");
  Tensor<S> out(detail::reduced_shape(x.shape(), ax, keepdim));
  auto arg = std::make_shared<std::vector<index_t>>(static_cast<std::size_t>(outer * inner));
  const S* px = x.data();
  S* po = out.data();
  for (index_t o = 0; o < outer; ++o)
    for (index_t in = 0; in < inner; ++in) {
      index_t best = 0;
      S bv = px[o * n * inner + in];
      for (index_t j = 1; j < n; ++j) {
        const S v = px[o * n * inner + j * inner + in];
        if (v > bv) {
          bv = v;
          best = j;
        }
      }
      po[o * inner + in] = bv;
      (*arg)[static_cast<std::size_t>(o * inner + in)] = best;
    }
  check_finite(out, "max");
  if (tracking<S>(x)) {
    Tensor<S> xc = x, oc = out;
    detail::record<S>("max", {x}, out, [xc, oc, arg, outer, n, inner]() mutable {
      const S* g = oc.grad();
      S* gx = xc.grad();
      for (index_t o = 0; o < outer; ++o)
        for (index_t in = 0; in < inner; ++in) {
          const index_t j = (*arg)[static_cast<std::size_t>(o * inner + in)];
          gx[o * n * inner + j * inner + in] += g[o * inner + in];
        }
    });
  }
  return out;
}

// Lowest index wins ties. Not differentiable; see ste_gather for the
// straight-through route.
template <typename S>
Tensor<S> argmax(const Tensor<S>& x, int axis, bool keepdim = false) {
  const int ax = normalize_axis(axis, x.rank());
  index_t outer, n, inner;
  detail::axis_extents(x, ax, outer, n, inner);
  require(n > 0, "argmax: empty axis");
  Tensor<S> out(detail::reduced_shape(x.shape(), ax, keepdim));
  const S* px = x.data();
  S* po = out.data();
  for (index_t o = 0; o < outer; ++o)
    for (index_t in = 0; in < inner; ++in) {
      index_t best = 0;
      S bv = px[o * n * inner + in];
      for (index_t j = 1; j < n; ++j) {
        const S v = px[o * n * inner + j * inner + in];
        if (v > bv) {
          bv = v;
          best = j;
        }
      }
      po[o * inner + in] = static_cast<S>(best);
    }
  return out;
}

template <typename S>
Tensor<S> sum(const Tensor<S>& x) {
  Tensor<S> flat = reshape(x, {x.numel()});
  return sum(flat, 0);
}

template <typename S>
Tensor<S> mean(const Tensor<S>& x) {
  return mul(sum(x), S(1) / static_cast<S>(x.numel()));
}

// ---- patch gather / scatter ----

// Rearranges non-overlapping patch×patch blocks: output patch i = input patch
// idx[i]. Gradient scatters additively back to the source patches.
template <typename S>
Tensor<S> gather_patches(const Tensor<S>& x, const std::vector<index_t>& idx, int patch) {
  require(x.rank() == 4, "gather_patches: input must be [B,C,H,W]");
  require(patch >= 1, "gather_patches: patch must be positive");
  const index_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  require(H % patch == 0 && W % patch == 0,
          "gather_patches: H and W must be divisible by patch size");
  const index_t gh = H / patch, gw = W / patch, np = gh * gw;
  require(static_cast<index_t>(idx.size()) == np, "gather_patches: index map has wrong length");
  for (index_t v : idx)
    require(v >= 0 && v < np, "gather_patches: index " + std::to_string(v) + " out of range");

  Tensor<S> out(x.shape());
  const S* px = x.data();
  S* po = out.data();
  const index_t P = patch;
  for (index_t b = 0; b < B; ++b)
    for (index_t c = 0; c < C; ++c) {
      const S* xc = px + (b * C + c) * H * W;
      S* oc = po + (b * C + c) * H * W;
      for (index_t t = 0; t < np; ++t) {
        const index_t sy = (idx[static_cast<std::size_t>(t)] / gw) * P;
        const index_t sx = (idx[static_cast<std::size_t>(t)] % gw) * P;
        const index_t dy = (t / gw) * P, dx = (t % gw) * P;
        for (index_t r = 0; r < P; ++r)
          std::memcpy(oc + (dy + r) * W + dx, xc + (sy + r) * W + sx,
                      sizeof(S) * static_cast<std::size_t>(P));
      }
    }

  if (tracking<S>(x)) {
    Tensor<S> xc2 = x, oc2 = out;
    std::vector<index_t> id = idx;
    detail::record<S>("gather_patches", {x}, out, [xc2, oc2, id, B, C, H, W, P, gh, gw]() mutable {
      const S* g = oc2.grad();
      S* gx = xc2.grad();
      const index_t np2 = gh * gw;
      for (index_t b = 0; b < B; ++b)
        for (index_t c = 0; c < C; ++c) {
          const S* go = g + (b * C + c) * H * W;
          S* gi = gx + (b * C + c) * H * W;
          for (index_t t = 0; t < np2; ++t) {
            const index_t sy = (id[static_cast<std::size_t>(t)] / gw) * P;
            const index_t sx = (id[static_cast<std::size_t>(t)] % gw) * P;
            const index_t dy = (t / gw) * P, dx = (t % gw) * P;
            for (index_t r = 0; r < P; ++r)
              for (index_t q = 0; q < P; ++q) gi[(sy + r) * W + sx + q] += go[(dy + r) * W + dx + q];
          }
        }
    });
  }
  return out;
}

// ---- straight-through gather ----

// Forward: hard row gather, out[i] = f[argmax_j M[i,j]] (lowest index on
// ties). Backward: gradients of the softmax surrogate softmax(M/tau)·f, so
// both f and M receive a training signal despite the argmax.
template <typename S>
Tensor<S> ste_gather(const Tensor<S>& f, const Tensor<S>& m, S tau) {
  require(tau > S(0), "ste_gather: temperature must be positive");
  require(f.rank() == 2 && m.rank() == 2, "ste_gather: f and M must be rank 2");
  const index_t nq = m.dim(0), ns = m.dim(1), dv = f.dim(1);
  require(f.dim(0) == ns, "ste_gather: f rows must match M columns");

  Tensor<S> out({nq, dv});
  const S* pm = m.data();
  const S* pf = f.data();
  S* po = out.data();
  for (index_t i = 0; i < nq; ++i) {
    index_t best = 0;
    S bv = pm[i * ns];
    for (index_t j = 1; j < ns; ++j)
      if (pm[i * ns + j] > bv) {
        bv = pm[i * ns + j];
        best = j;
      }
    std::memcpy(po + i * dv, pf + best * dv, sizeof(S) * static_cast<std::size_t>(dv));
  }

  if (tracking<S>(f, m)) {
    Tensor<S> fc = f, mc = m, oc = out;
    detail::record<S>("ste_gather", {f, m}, out, [fc, mc, oc, tau, nq, ns, dv]() mutable {
      using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
      ConstMatMap<S> M(mc.data(), nq, ns);
      ConstMatMap<S> F(fc.data(), ns, dv);
      ConstMatMap<S> G(oc.grad(), nq, dv);
      Mat Sm = M / tau;  // becomes the rowwise softmax below
      for (index_t i = 0; i < nq; ++i) {
        const S mx = Sm.row(i).maxCoeff();
        Sm.row(i) = (Sm.row(i).array() - mx).exp().matrix();
        Sm.row(i) /= Sm.row(i).sum();
      }
      if (fc.requires_grad()) {
        MatMap<S> dF(fc.grad(), ns, dv);
        dF.noalias() += Sm.transpose() * G;
      }
      if (mc.requires_grad()) {
        Mat R = G * F.transpose();   // [nq, ns]
        Mat T = Sm.cwiseProduct(R);  // S ⊙ R
        Eigen::Matrix<S, Eigen::Dynamic, 1> rs = T.rowwise().sum();
        MatMap<S> dM(mc.grad(), nq, ns);
        dM += ((T.array() - Sm.array().colwise() * rs.array()) / tau).matrix();
      }
    });
  }
  return out;
}

// Soft counterpart of ste_gather: forward IS the surrogate softmax(M/tau)·f.
// Used to make the whole model smooth for finite-difference checks.
template <typename S>
Tensor<S> soft_gather(const Tensor<S>& f, const Tensor<S>& m, S tau) {
  require(tau > S(0), "soft_gather: temperature must be positive");
  Tensor<S> w = softmax(mul(m, S(1) / tau), -1);
  return matmul(w, f);
}

// ---- pooling / upsampling ----

// Area-average downsample by an integer factor.
template <typename S>
Tensor<S> avg_pool2d(const Tensor<S>& x, int k) {
  require(x.rank() == 4, "avg_pool2d: input must be [B,C,H,W]");
  require(k >= 1, "avg_pool2d: factor must be positive");
  const index_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  require(H % k == 0 && W % k == 0, "avg_pool2d: dims must be divisible by the factor");
  const index_t Ho = H / k, Wo = W / k;
  Tensor<S> out({B, C, Ho, Wo});
  const S inv = S(1) / static_cast<S>(k * k);
  const S* px = x.data();
  S* po = out.data();
  for (index_t bc = 0; bc < B * C; ++bc) {
    const S* xp = px + bc * H * W;
    S* op = po + bc * Ho * Wo;
    for (index_t oy = 0; oy < Ho; ++oy)
      for (index_t ox = 0; ox < Wo; ++ox) {
        S acc = S(0);
        for (index_t r = 0; r < k; ++r)
          for (index_t q = 0; q < k; ++q) acc += xp[(oy * k + r) * W + ox * k + q];
        op[oy * Wo + ox] = acc * inv;
      }
  }
  check_finite(out, "avg_pool2d");
  if (tracking<S>(x)) {
    Tensor<S> xc = x, oc = out;
    detail::record<S>("avg_pool2d", {x}, out, [xc, oc, B, C, H, W, Ho, Wo, k, inv]() mutable {
      const S* g = oc.grad();
      S* gx = xc.grad();
      for (index_t bc = 0; bc < B * C; ++bc) {
        const S* gp = g + bc * Ho * Wo;
        S* xp = gx + bc * H * W;
        for (index_t oy = 0; oy < Ho; ++oy)
          for (index_t ox = 0; ox < Wo; ++ox) {
            const S gv = gp[oy * Wo + ox] * inv;
            for (index_t r = 0; r < k; ++r)
              for (index_t q = 0; q < k; ++q) xp[(oy * k + r) * W + ox * k + q] += gv;
          }
      }
    });
  }
  return out;
}

template <typename S>
Tensor<S> upsample_nearest2x(const Tensor<S>& x) {
  require(x.rank() == 4, "upsample_nearest2x: input must be [B,C,H,W]");
  const index_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  Tensor<S> out({B, C, 2 * H, 2 * W});
  const S* px = x.data();
  S* po = out.data();
  for (index_t bc = 0; bc < B * C; ++bc) {
    const S* xp = px + bc * H * W;
    S* op = po + bc * 4 * H * W;
    for (index_t y = 0; y < H; ++y)
      for (index_t xcol = 0; xcol < W; ++xcol) {
        const S v = xp[y * W + xcol];
        op[(2 * y) * 2 * W + 2 * xcol] = v;
        op[(2 * y) * 2 * W + 2 * xcol + 1] = v;
        op[(2 * y + 1) * 2 * W + 2 * xcol] = v;
        op[(2 * y + 1) * 2 * W + 2 * xcol + 1] = v;
      }
  }
  if (tracking<S>(x)) {
    Tensor<S> xc = x, oc = out;
    detail::record<S>("upsample_nearest2x", {x}, out, [xc, oc, B, C, H, W]() mutable {
      const S* g = oc.grad();
      S* gx = xc.grad();
      for (index_t bc = 0; bc < B * C; ++bc) {
        const S* gp = g + bc * 4 * H * W;
        S* xp = gx + bc * H * W;
        for (index_t y = 0; y < H; ++y)
          for (index_t xcol = 0; xcol < W; ++xcol)
            xp[y * W + xcol] += gp[(2 * y) * 2 * W + 2 * xcol] +
                                gp[(2 * y) * 2 * W + 2 * xcol + 1] +
                                gp[(2 * y + 1) * 2 * W + 2 * xcol] +
                                gp[(2 * y + 1) * 2 * W + 2 * xcol + 1];
      }
    });
  }
  return out;
}

}  // namespace ift
