#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "ift/graph.hpp"
#include "ift/ops.hpp"
#include "ift/rng.hpp"
#include "ift/tensor.hpp"
#include "testing_util.hpp"

using namespace ift;
using ift::testing::grad_check;
using ift::testing::max_abs_diff;

namespace {

// Reference convolution: direct 7-deep loop, no im2col.
Tensor<double> conv2d_oracle(const Tensor<double>& x, const Tensor<double>& w,
                             const Tensor<double>& b, int stride, int pad) {
  const index_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const index_t Co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const index_t Ho = (H + 2 * pad - kh) / stride + 1;
  const index_t Wo = (W + 2 * pad - kw) / stride + 1;
  Tensor<double> out({B, Co, Ho, Wo});
  for (index_t bi = 0; bi < B; ++bi)
    for (index_t co = 0; co < Co; ++co)
      for (index_t oy = 0; oy < Ho; ++oy)
        for (index_t ox = 0; ox < Wo; ++ox) {
          double acc = b.defined() ? b[co] : 0.0;
          for (index_t c = 0; c < C; ++c)
            for (index_t ki = 0; ki < kh; ++ki)
              for (index_t kj = 0; kj < kw; ++kj) {
                const index_t iy = oy * stride + ki - pad;
                const index_t ix = ox * stride + kj - pad;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                acc += x[((bi * C + c) * H + iy) * W + ix] *
                       w[((co * C + c) * kh + ki) * kw + kj];
              }
          out[((bi * Co + co) * Ho + oy) * Wo + ox] = acc;
        }
  return out;
}

}  // namespace

TEST_CASE("broadcast add/mul match explicit loops and reject bad shapes") {
  Rng rng(1);
  Tensor<double> a = Tensor<double>::rand_normal({2, 3, 4}, rng);
  Tensor<double> b = Tensor<double>::rand_normal({3, 1}, rng);
  Tensor<double> c = add(a, b);
  CHECK(c.shape() == Shape{2, 3, 4});
  for (index_t i = 0; i < 2; ++i)
    for (index_t j = 0; j < 3; ++j)
      for (index_t k = 0; k < 4; ++k)
        CHECK(c[(i * 3 + j) * 4 + k] == doctest::Approx(a[(i * 3 + j) * 4 + k] + b[j]));

  Tensor<double> s = Tensor<double>::scalar(2.0);
  Tensor<double> d = mul(a, s);
  for (index_t i = 0; i < a.numel(); ++i) CHECK(d[i] == doctest::Approx(2.0 * a[i]));

  CHECK_THROWS_AS(add(Tensor<double>::zeros({2, 3}), Tensor<double>::zeros({2, 4})), Error);
}

TEST_CASE("division guards against zero denominators") {
  Tensor<double> a = Tensor<double>::ones({2});
  Tensor<double> b = Tensor<double>::from({2}, {1.0, 0.0});
  CHECK_THROWS_WITH_AS(div(a, b), "div: division by zero", Error);
}

TEST_CASE("log rejects non-positive input by name") {
  Tensor<double> x = Tensor<double>::from({2}, {0.5, -1.0});
  CHECK_THROWS_WITH_AS(log(x), "log: non-positive input", Error);
}

TEST_CASE("non-finite forward results abort with the op name") {
  Tensor<double> big = Tensor<double>::full({2}, 1e308);
  CHECK_THROWS_WITH_AS(mul(big, big), "non-finite value produced by op 'mul'", Error);
  Tensor<double> huge = Tensor<double>::full({2}, 1000.0);
  CHECK_THROWS_AS(exp(huge), Error);
}

TEST_CASE("elementwise gradients match finite differences") {
  Rng rng(2);
  Tensor<double> a = Tensor<double>::rand_uniform({3, 4}, rng, 0.2, 2.0);
  Tensor<double> b = Tensor<double>::rand_uniform({3, 4}, rng, 0.3, 1.5);
  Tensor<double> r = Tensor<double>::rand_normal({3, 4}, rng);  // random weights
  auto weighted = [&](Tensor<double> t) { return sum(mul(t, r)); };

  CHECK(grad_check({a, b}, [&] { return weighted(add(a, b)); }, rng) < 1e-6);
  CHECK(grad_check({a, b}, [&] { return weighted(sub(a, b)); }, rng) < 1e-6);
  CHECK(grad_check({a, b}, [&] { return weighted(mul(a, b)); }, rng) < 1e-6);
  CHECK(grad_check({a, b}, [&] { return weighted(div(a, b)); }, rng) < 1e-6);
  CHECK(grad_check({a}, [&] { return weighted(exp(a)); }, rng) < 1e-6);
  CHECK(grad_check({a}, [&] { return weighted(log(a)); }, rng) < 1e-6);
  CHECK(grad_check({a}, [&] { return weighted(sigmoid(a)); }, rng) < 1e-6);
  CHECK(grad_check({a}, [&] { return weighted(pow(a, 1.7)); }, rng) < 1e-6);

  // kink-free points for the piecewise ops
  Tensor<double> pm = Tensor<double>::rand_normal({3, 4}, rng);
  for (index_t i = 0; i < pm.numel(); ++i)
    if (std::abs(pm[i]) < 0.05) pm[i] = 0.1;
  CHECK(grad_check({pm}, [&] { return weighted(relu(pm)); }, rng) < 1e-6);
  CHECK(grad_check({pm}, [&] { return weighted(elu(pm)); }, rng) < 1e-6);
  CHECK(grad_check({pm}, [&] { return weighted(abs(pm)); }, rng) < 1e-6);
}

TEST_CASE("broadcast gradients reduce over the broadcast dims") {
  Rng rng(3);
  Tensor<double> a = Tensor<double>::rand_normal({2, 3, 4}, rng);
  Tensor<double> b = Tensor<double>::rand_normal({4}, rng);
  Tensor<double> w = Tensor<double>::rand_normal({2, 3, 4}, rng);
  CHECK(grad_check({a, b}, [&] { return sum(mul(mul(a, b), w)); }, rng, 24) < 1e-6);
  Tensor<double> col = Tensor<double>::rand_uniform({3, 1}, rng, 0.5, 1.5);
  CHECK(grad_check({a, col}, [&] { return sum(mul(div(a, col), w)); }, rng, 24) < 1e-6);
}

TEST_CASE("elu matches its definition") {
  Tensor<double> x = Tensor<double>::from({4}, {-2.0, -0.5, 0.0, 1.5});
  Tensor<double> y = elu(x);
  CHECK(y[0] == doctest::Approx(std::exp(-2.0) - 1.0));
  CHECK(y[1] == doctest::Approx(std::exp(-0.5) - 1.0));
  CHECK(y[2] == doctest::Approx(0.0));
  CHECK(y[3] == doctest::Approx(1.5));
}

TEST_CASE("matmul matches a brute-force triple loop") {
  Rng rng(4);
  Tensor<double> a = Tensor<double>::rand_normal({3, 5}, rng);
  Tensor<double> b = Tensor<double>::rand_normal({5, 4}, rng);
  Tensor<double> c = matmul(a, b);
  for (index_t i = 0; i < 3; ++i)
    for (index_t j = 0; j < 4; ++j) {
      double acc = 0;
      for (index_t k = 0; k < 5; ++k) acc += a[i * 5 + k] * b[k * 4 + j];
      CHECK(c[i * 4 + j] == doctest::Approx(acc));
    }
  CHECK_THROWS_AS(matmul(a, Tensor<double>::zeros({4, 2})), Error);
}

TEST_CASE("batched matmul broadcasts leading dims") {
  Rng rng(5);
  Tensor<double> a = Tensor<double>::rand_normal({2, 3, 4}, rng);  // batch 2
  Tensor<double> b = Tensor<double>::rand_normal({4, 5}, rng);     // shared
  Tensor<double> c = matmul(a, b);
  CHECK(c.shape() == Shape{2, 3, 5});
  for (index_t bi = 0; bi < 2; ++bi)
    for (index_t i = 0; i < 3; ++i)
      for (index_t j = 0; j < 5; ++j) {
        double acc = 0;
        for (index_t k = 0; k < 4; ++k) acc += a[(bi * 3 + i) * 4 + k] * b[k * 5 + j];
        CHECK(c[(bi * 3 + i) * 5 + j] == doctest::Approx(acc));
      }
}

TEST_CASE("matmul gradients match finite differences") {
  Rng rng(6);
  Tensor<double> a = Tensor<double>::rand_normal({2, 3, 4}, rng);
  Tensor<double> b = Tensor<double>::rand_normal({4, 5}, rng);
  Tensor<double> w = Tensor<double>::rand_normal({2, 3, 5}, rng);
  CHECK(grad_check({a, b}, [&] { return sum(mul(matmul(a, b), w)); }, rng, 16) < 1e-6);
}

TEST_CASE("conv2d matches the direct-loop oracle across strides and pads") {
  Rng rng(7);
  for (int stride : {1, 2}) {
    for (int pad : {0, 1}) {
      Tensor<double> x = Tensor<double>::rand_normal({2, 3, 7, 6}, rng);
      Tensor<double> w = Tensor<double>::rand_normal({4, 3, 3, 3}, rng);
      Tensor<double> b = Tensor<double>::rand_normal({4}, rng);
      Tensor<double> got = conv2d(x, w, b, stride, pad);
      Tensor<double> want = conv2d_oracle(x, w, b, stride, pad);
      CHECK(got.shape() == want.shape());
      CHECK(max_abs_diff(got, want) < 1e-12);
    }
  }
}

TEST_CASE("conv2d validates its inputs") {
  Tensor<double> x = Tensor<double>::zeros({1, 3, 8, 8});
  Tensor<double> w = Tensor<double>::zeros({4, 3, 3, 3});
  CHECK_THROWS_WITH_AS(conv2d(x, w, 0, 1), "conv2d: stride must be positive", Error);
  CHECK_THROWS_AS(conv2d(x, Tensor<double>::zeros({4, 2, 3, 3}), 1, 1), Error);
  CHECK_THROWS_AS(conv2d(x, Tensor<double>::zeros({4, 3, 11, 3}), 1, 1), Error);
  CHECK_THROWS_AS(conv2d(x, w, Tensor<double>::zeros({5}), 1, 1), Error);
}

TEST_CASE("conv2d gradients match finite differences") {
  Rng rng(8);
  Tensor<double> x = Tensor<double>::rand_normal({1, 2, 6, 6}, rng);
  Tensor<double> w = Tensor<double>::rand_normal({3, 2, 3, 3}, rng);
  Tensor<double> b = Tensor<double>::rand_normal({3}, rng);
  Tensor<double> r = Tensor<double>::rand_normal({1, 3, 3, 3}, rng);
  CHECK(grad_check({x, w, b}, [&] { return sum(mul(conv2d(x, w, b, 2, 1), r)); }, rng, 16) <
        1e-6);
}

TEST_CASE("softmax rows are normalized and match the shifted-exp oracle") {
  Rng rng(9);
  Tensor<double> x = Tensor<double>::rand_normal({3, 5}, rng, 0.0, 3.0);
  Tensor<double> y = softmax(x, -1);
  for (index_t i = 0; i < 3; ++i) {
    double mx = x[i * 5];
    for (index_t j = 1; j < 5; ++j) mx = std::max(mx, x[i * 5 + j]);
    double z = 0;
    for (index_t j = 0; j < 5; ++j) z += std::exp(x[i * 5 + j] - mx);
    double row = 0;
    for (index_t j = 0; j < 5; ++j) {
      CHECK(y[i * 5 + j] == doctest::Approx(std::exp(x[i * 5 + j] - mx) / z));
      row += y[i * 5 + j];
    }
    CHECK(row == doctest::Approx(1.0));
  }
  // interior axis
  Tensor<double> x3 = Tensor<double>::rand_normal({2, 4, 3}, rng);
  Tensor<double> y3 = softmax(x3, 1);
  for (index_t b = 0; b < 2; ++b)
    for (index_t k = 0; k < 3; ++k) {
      double s = 0;
      for (index_t j = 0; j < 4; ++j) s += y3[(b * 4 + j) * 3 + k];
      CHECK(s == doctest::Approx(1.0));
    }
  // extreme logits stay finite
  Tensor<double> ext = Tensor<double>::from({1, 3}, {1000.0, -1000.0, 999.0});
  Tensor<double> ye = softmax(ext, -1);
  CHECK(ye[0] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));
}

TEST_CASE("softmax gradients match finite differences") {
  Rng rng(10);
  Tensor<double> x = Tensor<double>::rand_normal({4, 6}, rng);
  Tensor<double> w = Tensor<double>::rand_normal({4, 6}, rng);
  CHECK(grad_check({x}, [&] { return sum(mul(softmax(x, -1), w)); }, rng, 20) < 1e-6);
}

TEST_CASE("reductions match loops; argmax breaks ties low") {
  Rng rng(11);
  Tensor<double> x = Tensor<double>::rand_normal({3, 4, 5}, rng);
  Tensor<double> s1 = sum(x, 1);
  CHECK(s1.shape() == Shape{3, 5});
  for (index_t i = 0; i < 3; ++i)
    for (index_t k = 0; k < 5; ++k) {
      double acc = 0;
      for (index_t j = 0; j < 4; ++j) acc += x[(i * 4 + j) * 5 + k];
      CHECK(s1[i * 5 + k] == doctest::Approx(acc));
    }
  Tensor<double> m1 = mean(x, 1, true);
  CHECK(m1.shape() == Shape{3, 1, 5});
  CHECK(m1[0] == doctest::Approx(s1[0] / 4.0));

  Tensor<double> mx = max_reduce(x, -1);
  for (index_t i = 0; i < 12; ++i) {
    double best = x[i * 5];
    for (index_t j = 1; j < 5; ++j) best = std::max(best, x[i * 5 + j]);
    CHECK(mx[i] == doctest::Approx(best));
  }

  Tensor<double> t = Tensor<double>::from({2, 4}, {1, 7, 7, 0, 3, 3, 3, 3});
  Tensor<double> am = argmax(t, -1);
  CHECK(am[0] == 1.0);  // first of the tied 7s
  CHECK(am[1] == 0.0);  // all tied: lowest index

  CHECK(sum(x).numel() == 1);
  double tot = 0;
  for (index_t i = 0; i < x.numel(); ++i) tot += x[i];
  CHECK(sum(x).item() == doctest::Approx(tot));
  CHECK(mean(x).item() == doctest::Approx(tot / x.numel()));
}

TEST_CASE("reduction gradients match finite differences") {
  Rng rng(12);
  Tensor<double> x = Tensor<double>::rand_normal({3, 4}, rng);
  Tensor<double> w = Tensor<double>::rand_normal({3}, rng);
  CHECK(grad_check({x}, [&] { return sum(mul(sum(x, 1), w)); }, rng) < 1e-6);
  CHECK(grad_check({x}, [&] { return sum(mul(mean(x, 1), w)); }, rng) < 1e-6);
  // max: perturbations are far smaller than the argmax margin
  CHECK(grad_check({x}, [&] { return sum(mul(max_reduce(x, 1), w)); }, rng) < 1e-6);
}

TEST_CASE("reshape, permute and concat round values correctly") {
  Rng rng(13);
  Tensor<double> x = Tensor<double>::rand_normal({2, 3, 4}, rng);
  Tensor<double> r = reshape(x, {6, 4});
  CHECK(r[5 * 4 + 2] == x[5 * 4 + 2]);
  CHECK_THROWS_AS(reshape(x, {7, 4}), Error);

  Tensor<double> p = permute(x, {2, 0, 1});
  CHECK(p.shape() == Shape{4, 2, 3});
  for (index_t i = 0; i < 2; ++i)
    for (index_t j = 0; j < 3; ++j)
      for (index_t k = 0; k < 4; ++k)
        CHECK(p[(k * 2 + i) * 3 + j] == x[(i * 3 + j) * 4 + k]);
  CHECK_THROWS_AS(permute(x, {0, 0, 1}), Error);

  Tensor<double> a = Tensor<double>::rand_normal({2, 2, 3}, rng);
  Tensor<double> b = Tensor<double>::rand_normal({2, 1, 3}, rng);
  Tensor<double> c = concat<double>({a, b}, 1);
  CHECK(c.shape() == Shape{2, 3, 3});
  for (index_t i = 0; i < 2; ++i) {
    for (index_t j = 0; j < 2; ++j)
      for (index_t k = 0; k < 3; ++k) CHECK(c[(i * 3 + j) * 3 + k] == a[(i * 2 + j) * 3 + k]);
    for (index_t k = 0; k < 3; ++k) CHECK(c[(i * 3 + 2) * 3 + k] == b[i * 3 + k]);
  }
  CHECK_THROWS_AS(concat<double>({a, Tensor<double>::zeros({2, 1, 4})}, 1), Error);
}

TEST_CASE("structural op gradients match finite differences") {
  Rng rng(14);
  Tensor<double> x = Tensor<double>::rand_normal({2, 3, 4}, rng);
  Tensor<double> y = Tensor<double>::rand_normal({2, 2, 4}, rng);
  Tensor<double> w24 = Tensor<double>::rand_normal({6, 4}, rng);
  Tensor<double> wp = Tensor<double>::rand_normal({4, 2, 3}, rng);
  Tensor<double> wc = Tensor<double>::rand_normal({2, 5, 4}, rng);
  CHECK(grad_check({x}, [&] { return sum(mul(reshape(x, {6, 4}), w24)); }, rng) < 1e-6);
  CHECK(grad_check({x}, [&] { return sum(mul(permute(x, {2, 0, 1}), wp)); }, rng) < 1e-6);
  CHECK(grad_check({x, y}, [&] { return sum(mul(concat<double>({x, y}, 1), wc)); }, rng, 16) <
        1e-6);
}

TEST_CASE("gather_patches moves blocks and validates the map") {
  Rng rng(15);
  Tensor<double> x = Tensor<double>::rand_normal({1, 2, 4, 4}, rng);
  // 2x2 grid of 2x2 patches; reverse the order
  std::vector<index_t> idx = {3, 2, 1, 0};
  Tensor<double> y = gather_patches(x, idx, 2);
  // output patch 0 (top-left) should be input patch 3 (bottom-right)
  for (index_t c = 0; c < 2; ++c)
    for (index_t r = 0; r < 2; ++r)
      for (index_t q = 0; q < 2; ++q)
        CHECK(y[(c * 4 + r) * 4 + q] == x[(c * 4 + 2 + r) * 4 + 2 + q]);

  std::vector<index_t> ident = {0, 1, 2, 3};
  CHECK(same_data(gather_patches(x, ident, 2), x));

  CHECK_THROWS_AS(gather_patches(x, {0, 1, 2}, 2), Error);
  CHECK_THROWS_AS(gather_patches(x, {0, 1, 2, 4}, 2), Error);
  CHECK_THROWS_AS(gather_patches(x, {0, 1, 2, 3}, 3), Error);
}

TEST_CASE("gather_patches gradients scatter-add (duplicated sources)") {
  Rng rng(16);
  Tensor<double> x = Tensor<double>::rand_normal({1, 2, 4, 4}, rng);
  Tensor<double> w = Tensor<double>::rand_normal({1, 2, 4, 4}, rng);
  std::vector<index_t> idx = {3, 3, 0, 1};  // patch 3 used twice, patch 2 dropped
  CHECK(grad_check({x}, [&] { return sum(mul(gather_patches(x, idx, 2), w)); }, rng, 32) < 1e-6);
}

TEST_CASE("ste_gather forward is a hard row gather with low tie-break") {
  Tensor<double> f = Tensor<double>::from({3, 2}, {10, 11, 20, 21, 30, 31});
  Tensor<double> m = Tensor<double>::from({2, 3}, {0.1, 0.9, 0.9, 0.5, 0.2, 0.5});
  Tensor<double> out = ste_gather(f, m, 0.5);
  CHECK(out.shape() == Shape{2, 2});
  CHECK(out[0] == 20.0);  // row 0: tie at cols 1,2 -> col 1
  CHECK(out[1] == 21.0);
  CHECK(out[2] == 10.0);  // row 1: tie at cols 0,2 -> col 0
  CHECK(out[3] == 11.0);
  CHECK_THROWS_AS(ste_gather(f, m, 0.0), Error);
  CHECK_THROWS_AS(ste_gather(Tensor<double>::zeros({4, 2}), m, 0.5), Error);
}

TEST_CASE("ste_gather backward equals the soft surrogate gradient") {
  Rng rng(17);
  const double tau = 0.3;
  Tensor<double> f = Tensor<double>::rand_normal({5, 3}, rng);
  Tensor<double> m = Tensor<double>::rand_normal({4, 5}, rng);
  Tensor<double> w = Tensor<double>::rand_normal({4, 3}, rng);
  f.set_requires_grad(true);
  m.set_requires_grad(true);

  auto run = [&](bool hard) {
    f.zero_grad();
    m.zero_grad();
    Graph<double> g;
    auto act = g.activate();
    Tensor<double> out = hard ? ste_gather(f, m, tau) : soft_gather(f, m, tau);
    g.backward(sum(mul(out, w)));
    return std::make_pair(std::vector<double>(f.grad(), f.grad() + f.numel()),
                          std::vector<double>(m.grad(), m.grad() + m.numel()));
  };
  auto [fg_hard, mg_hard] = run(true);
  auto [fg_soft, mg_soft] = run(false);
  for (std::size_t i = 0; i < fg_hard.size(); ++i)
    CHECK(fg_hard[i] == doctest::Approx(fg_soft[i]).epsilon(1e-9));
  for (std::size_t i = 0; i < mg_hard.size(); ++i)
    CHECK(mg_hard[i] == doctest::Approx(mg_soft[i]).epsilon(1e-9));

  // and the surrogate itself is FD-correct, so the STE backward is too
  // (saturated softmax rows leave some near-zero gradients; 1e-4 bar)
  CHECK(grad_check({f, m}, [&] { return sum(mul(soft_gather(f, m, tau), w)); }, rng, 20) < 1e-4);
}

TEST_CASE("ste_gather forward matches soft_gather as tau -> 0") {
  Rng rng(18);
  Tensor<double> f = Tensor<double>::rand_normal({6, 4}, rng);
  Tensor<double> m = Tensor<double>::rand_normal({3, 6}, rng);
  Tensor<double> hard = ste_gather(f, m, 1.0);
  Tensor<double> soft = soft_gather(f, m, 1e-3);
  CHECK(max_abs_diff(hard, soft) < 1e-9);
}

TEST_CASE("avg_pool2d and upsample_nearest2x match loops and finite differences") {
  Rng rng(19);
  Tensor<double> x = Tensor<double>::rand_normal({1, 2, 4, 6}, rng);
  Tensor<double> y = avg_pool2d(x, 2);
  CHECK(y.shape() == Shape{1, 2, 2, 3});
  for (index_t c = 0; c < 2; ++c)
    for (index_t oy = 0; oy < 2; ++oy)
      for (index_t ox = 0; ox < 3; ++ox) {
        double acc = 0;
        for (index_t r = 0; r < 2; ++r)
          for (index_t q = 0; q < 2; ++q) acc += x[(c * 4 + oy * 2 + r) * 6 + ox * 2 + q];
        CHECK(y[(c * 2 + oy) * 3 + ox] == doctest::Approx(acc / 4.0));
      }
  CHECK_THROWS_AS(avg_pool2d(x, 5), Error);

  Tensor<double> u = upsample_nearest2x(y);
  CHECK(u.shape() == Shape{1, 2, 4, 6});
  CHECK(u[0] == y[0]);
  CHECK(u[1] == y[0]);
  CHECK(u[6] == y[0]);

  Tensor<double> w1 = Tensor<double>::rand_normal({1, 2, 2, 3}, rng);
  Tensor<double> w2 = Tensor<double>::rand_normal({1, 2, 4, 6}, rng);
  CHECK(grad_check({x}, [&] { return sum(mul(avg_pool2d(x, 2), w1)); }, rng, 16) < 1e-6);
  Tensor<double> z = Tensor<double>::rand_normal({1, 2, 2, 3}, rng);
  CHECK(grad_check({z}, [&] { return sum(mul(upsample_nearest2x(z), w2)); }, rng, 12) < 1e-6);
}

TEST_CASE("gradients accumulate across multiple uses of a tensor") {
  Tensor<double> x = Tensor<double>::from({1}, {3.0});
  x.set_requires_grad(true);
  Graph<double> g;
  auto act = g.activate();
  Tensor<double> y = add(mul(x, x), mul(x,
                                        5.0));  // x^2 + 5x -> dy/dx = 2x + 5 = 11
  g.backward(sum(y));
  CHECK(x.grad()[0] == doctest::Approx(11.0));
}
