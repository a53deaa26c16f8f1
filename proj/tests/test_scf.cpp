#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "ift/scf.hpp"
#include "testing_util.hpp"

using namespace ift;
using ift::testing::grad_check;
using ift::testing::max_abs_diff;

namespace {

// Scalar-loop softmax attention, rank 2 only.
Tensor<double> quadratic_oracle(const Tensor<double>& q, const Tensor<double>& k,
                                const Tensor<double>& v) {
  const index_t n = q.dim(0), m = k.dim(0), d = q.dim(1), dv = v.dim(1);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  Tensor<double> out({n, dv});
  for (index_t i = 0; i < n; ++i) {
    std::vector<double> w(static_cast<std::size_t>(m));
    double mx = -1e300;
    for (index_t j = 0; j < m; ++j) {
      double dot = 0;
      for (index_t e = 0; e < d; ++e) dot += q[i * d + e] * k[j * d + e];
      w[static_cast<std::size_t>(j)] = dot * scale;
      mx = std::max(mx, w[static_cast<std::size_t>(j)]);
    }
    double z = 0;
    for (auto& x : w) z += (x = std::exp(x - mx));
    for (index_t c = 0; c < dv; ++c) {
      double acc = 0;
      for (index_t j = 0; j < m; ++j) acc += w[static_cast<std::size_t>(j)] * v[j * dv + c];
      out[i * dv + c] = acc / z;
    }
  }
  return out;
}

// Left-to-right epsilon-kernel attention: materialize the n x m weights.
Tensor<double> linear_oracle(const Tensor<double>& q, const Tensor<double>& k,
                             const Tensor<double>& v, bool normalize) {
  const index_t n = q.dim(0), m = k.dim(0), d = q.dim(1), dv = v.dim(1);
  auto eps = [](double x) { return (x > 0 ? x : std::exp(x) - 1.0) + 1.0; };
  Tensor<double> out({n, dv});
  for (index_t i = 0; i < n; ++i) {
    std::vector<double> w(static_cast<std::size_t>(m));
    double denom = 0;
    for (index_t j = 0; j < m; ++j) {
      double dot = 0;
      for (index_t e = 0; e < d; ++e) dot += eps(q[i * d + e]) * eps(k[j * d + e]);
      w[static_cast<std::size_t>(j)] = dot;
      denom += dot;
    }
    for (index_t c = 0; c < dv; ++c) {
      double acc = 0;
      for (index_t j = 0; j < m; ++j) acc += w[static_cast<std::size_t>(j)] * v[j * dv + c];
      out[i * dv + c] = normalize ? acc / (denom + 1e-12) : acc;
    }
  }
  return out;
}

Scf<double> small_scf(std::uint64_t seed) {
  Rng rng(seed);
  return Scf<double>(8, 8, 2, 2, true, rng);
}

}  // namespace

TEST_CASE("quadratic attention matches the scalar softmax oracle") {
  Rng rng(1);
  Tensor<double> q = Tensor<double>::rand_normal({5, 4}, rng);
  Tensor<double> k = Tensor<double>::rand_normal({7, 4}, rng);
  Tensor<double> v = Tensor<double>::rand_normal({7, 3}, rng);
  CHECK(max_abs_diff(attention_quadratic(q, k, v), quadratic_oracle(q, k, v)) < 1e-12);
  CHECK_THROWS_AS(attention_quadratic(q, Tensor<double>::zeros({7, 4, 1}), v), Error);
}

TEST_CASE("quadratic attention batches over leading dims") {
  Rng rng(2);
  Tensor<double> q = Tensor<double>::rand_normal({2, 5, 4}, rng);
  Tensor<double> k = Tensor<double>::rand_normal({2, 6, 4}, rng);
  Tensor<double> v = Tensor<double>::rand_normal({2, 6, 3}, rng);
  Tensor<double> out = attention_quadratic(q, k, v);
  CHECK(out.shape() == Shape{2, 5, 3});
  for (index_t b = 0; b < 2; ++b) {
    auto slice = [&](const Tensor<double>& t, index_t rows, index_t cols) {
      Tensor<double> s({rows, cols});
      for (index_t i = 0; i < rows * cols; ++i) s[i] = t[b * rows * cols + i];
      return s;
    };
    Tensor<double> want = quadratic_oracle(slice(q, 5, 4), slice(k, 6, 4), slice(v, 6, 3));
    for (index_t i = 0; i < 15; ++i)
      CHECK(out[b * 15 + i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("linear attention right-to-left equals the left-to-right oracle") {
  Rng rng(3);
  Tensor<double> q = Tensor<double>::rand_normal({9, 5}, rng);
  Tensor<double> k = Tensor<double>::rand_normal({11, 5}, rng);
  Tensor<double> v = Tensor<double>::rand_normal({11, 4}, rng);
  CHECK(max_abs_diff(attention_linear(q, k, v, true), linear_oracle(q, k, v, true)) < 1e-10);
  CHECK(max_abs_diff(attention_linear(q, k, v, false), linear_oracle(q, k, v, false)) < 1e-10);
}

TEST_CASE("normalized linear attention with one key returns that value row") {
  Rng rng(4);
  Tensor<double> q = Tensor<double>::rand_normal({6, 5}, rng);
  Tensor<double> k = Tensor<double>::rand_normal({1, 5}, rng);
  Tensor<double> v = Tensor<double>::rand_normal({1, 3}, rng);
  Tensor<double> out = attention_linear(q, k, v, true);
  for (index_t i = 0; i < 6; ++i)
    for (index_t c = 0; c < 3; ++c)
      CHECK(out[i * 3 + c] == doctest::Approx(v[c]).epsilon(1e-9));
}

TEST_CASE("linear attention gradients match finite differences") {
  Rng rng(5);
  Tensor<double> q = Tensor<double>::rand_normal({4, 3}, rng);
  Tensor<double> k = Tensor<double>::rand_normal({5, 3}, rng);
  Tensor<double> v = Tensor<double>::rand_normal({5, 3}, rng);
  Tensor<double> w = Tensor<double>::rand_normal({4, 3}, rng);
  CHECK(grad_check({q, k, v}, [&] { return sum(mul(attention_linear(q, k, v), w)); }, rng, 16) <
        1e-6);
  CHECK(grad_check({q, k, v}, [&] { return sum(mul(attention_quadratic(q, k, v), w)); }, rng,
                   16) < 1e-6);
}

TEST_CASE("shallow features halve the resolution with per-frame weights") {
  Rng rng(6);
  Scf<float> scf(8, 8, 2, 2, true, rng);
  LdrStack<float> stack;
  stack.evs = {ExposureValue{-2.0}, ExposureValue{0.0}, ExposureValue{2.0}};
  stack.I1 = Tensor<float>::rand_uniform({3, 16, 16}, rng);
  stack.I2 = Tensor<float>::rand_uniform({3, 16, 16}, rng);
  stack.I3 = Tensor<float>::rand_uniform({3, 16, 16}, rng);
  stack.G1 = stack.I1.clone();
  stack.G2 = stack.I2.clone();
  stack.G3 = stack.I3.clone();
  auto f = scf.shallow_features(stack);
  for (const auto& t : f) CHECK(t.shape() == Shape{1, 8, 8, 8});
  CHECK_FALSE(same_data(scf.conv1.w, scf.conv2.w));
}

TEST_CASE("fresh fusion is the identity: residual branches start at zero") {
  Scf<double> scf = small_scf(7);
  Rng rng(8);
  std::vector<Tensor<double>> streams = {Tensor<double>::rand_normal({1, 8, 8, 8}, rng),
                                         Tensor<double>::rand_normal({1, 8, 8, 8}, rng),
                                         Tensor<double>::rand_normal({1, 8, 8, 8}, rng)};
  auto out = scf.saat(streams, {kF1, kF2, kF3});
  REQUIRE(out.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(same_data(out[i], streams[i]));
}

TEST_CASE("saat validates its reference stream") {
  Scf<double> scf = small_scf(9);
  Rng rng(10);
  Tensor<double> s = Tensor<double>::rand_normal({1, 8, 8, 8}, rng);
  CHECK_THROWS_WITH_AS(scf.saat({s, s}, {kF1, kF3}), "saat: no reference stream", Error);
  CHECK_THROWS_WITH_AS(scf.saat({s, s}, {kF2, kF2}), "saat: multiple reference streams", Error);
  CHECK_THROWS_AS(scf.saat({s, Tensor<double>::zeros({1, 8, 8, 10})}, {kF2, kF1}), Error);
  CHECK_THROWS_AS(scf.saat({}, {}), Error);
}

TEST_CASE("trained-looking fusion actually mixes streams") {
  Scf<double> scf = small_scf(11);
  Rng rng(12);
  // give the value projections mass so attention contributes
  for (auto& l : scf.vartheta)
    l.w = Tensor<double>::rand_normal(l.w.shape(), rng, 0.0, 0.1);
  std::vector<Tensor<double>> streams = {Tensor<double>::rand_normal({1, 8, 8, 8}, rng),
                                         Tensor<double>::rand_normal({1, 8, 8, 8}, rng),
                                         Tensor<double>::rand_normal({1, 8, 8, 8}, rng)};
  auto out = scf.saat(streams, {kF1, kF2, kF3});
  for (std::size_t i = 0; i < 3; ++i) CHECK_FALSE(same_data(out[i], streams[i]));
  // outputs keep the stream shape
  for (const auto& t : out) CHECK(t.shape() == streams[0].shape());
}

TEST_CASE("saat parameter collection follows the active streams") {
  Scf<double> scf = small_scf(13);
  ParamMap<double> all;
  scf.collect(all, "scf", {kF1, kF1w, kF2, kF3, kF3w}, true);
  ParamMap<double> three;
  scf.collect(three, "scf", {kF1, kF2, kF3}, true);
  ParamMap<double> convs;
  scf.collect(convs, "scf", {kF1, kF2, kF3}, false);
  CHECK(all.size() > three.size());
  CHECK(convs.size() == 6);  // three convs, w+b each
  CHECK(three.find("scf.theta0.w") != nullptr);
  CHECK(three.find("scf.vartheta.f1w.w") == nullptr);
  CHECK(all.find("scf.vartheta.f1w.w") != nullptr);
  CHECK(convs.find("scf.theta0.w") == nullptr);
}
