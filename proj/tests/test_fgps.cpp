#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "ift/fgps.hpp"
#include "ift/rng.hpp"
#include "ift/scene.hpp"
#include "testing_util.hpp"

using namespace ift;
using ift::testing::max_abs_diff;

TEST_CASE("similarity matches a scalar cosine loop") {
  Rng rng(1);
  Tensor<double> q = Tensor<double>::rand_normal({5, 7}, rng);
  Tensor<double> k = Tensor<double>::rand_normal({6, 7}, rng);
  Tensor<double> m = similarity(q, k);
  CHECK(m.shape() == Shape{5, 6});
  for (index_t i = 0; i < 5; ++i)
    for (index_t j = 0; j < 6; ++j) {
      double dot = 0, nq = 0, nk = 0;
      for (index_t d = 0; d < 7; ++d) {
        dot += q[i * 7 + d] * k[j * 7 + d];
        nq += q[i * 7 + d] * q[i * 7 + d];
        nk += k[j * 7 + d] * k[j * 7 + d];
      }
      CHECK(m[i * 6 + j] == doctest::Approx(dot / std::sqrt(nq * nk)).epsilon(1e-10));
    }
  CHECK_THROWS_AS(similarity(q, Tensor<double>::zeros({6, 8})), Error);
}

TEST_CASE("similarity is invariant to token scaling") {
  Rng rng(2);
  Tensor<double> q = Tensor<double>::rand_normal({4, 6}, rng);
  Tensor<double> k = Tensor<double>::rand_normal({4, 6}, rng);
  Tensor<double> q2 = mul(q, 7.5);
  CHECK(max_abs_diff(similarity(q, k), similarity(q2, k)) < 1e-9);
}

TEST_CASE("position map takes the row argmax, lowest index on ties") {
  Tensor<double> m = Tensor<double>::from({3, 4}, {0.1, 0.9, 0.9, 0.2,  //
                                                   0.5, 0.5, 0.5, 0.5,  //
                                                   0.0, -1.0, 2.0, 1.0});
  const auto p = position_map(m);
  CHECK(p == std::vector<index_t>{1, 0, 2});
  CHECK_THROWS_AS(position_map(Tensor<double>::zeros({2, 2, 2})), Error);
}

TEST_CASE("position maps rescale to the fine grid as rigid blocks") {
  // coarse 2x2 map swapping the top cells, identity below
  std::vector<index_t> p = {1, 0, 2, 3};
  const auto f = rescale_position_map(p, 2, 2, 4, 4);
  CHECK(f.size() == 16);
  // fine cell (0,0) must point at coarse cell 1's top-left fine cell: (0,2)
  CHECK(f[0] == 2);
  CHECK(f[1] == 3);
  CHECK(f[4] == 6);
  // identity region maps to itself
  CHECK(f[10] == 10);
  CHECK(f[15] == 15);
  CHECK_THROWS_AS(rescale_position_map(p, 2, 2, 5, 4), Error);
  CHECK_THROWS_AS(rescale_position_map({0, 1}, 2, 2, 4, 4), Error);
}

TEST_CASE("search factor keeps the grid within 256 and demands divisibility") {
  CHECK(search_factor(64, 64) == 1);
  CHECK(search_factor(256, 256) == 1);
  CHECK(search_factor(512, 384) == 2);
  CHECK_THROWS_AS(search_factor(257, 256), Error);
}

TEST_CASE("feature extractor downsamples by its total stride") {
  Rng rng(3);
  Fgps<float> f(2, 16, rng);
  Tensor<float> x = Tensor<float>::rand_uniform({1, 3, 32, 24}, rng);
  Tensor<float> y = f.features(x);
  CHECK(y.shape() == Shape{1, 64, 4, 3});
  CHECK_THROWS_AS(f.features(Tensor<float>::zeros({1, 3, 20, 24})), Error);
}

TEST_CASE("the three projections start from one shared draw") {
  Rng rng(4);
  Fgps<float> f(2, 16, rng);
  CHECK(same_data(f.phi.w, f.varphi.w));
  CHECK(same_data(f.phi.w, f.zeta.w));
  // distinct storage: training one must not move the others
  f.varphi.w[0] += 1.0f;
  CHECK_FALSE(same_data(f.phi.w, f.varphi.w));
  ParamMap<float> pm;
  f.collect(pm, "fgps");
  CHECK(pm.size() == 9);  // 3 convs (w+b) + 3 projection weights
}

TEST_CASE("identical frames produce identity position maps untrained") {
  Rng rng(5);
  Tensor<float> img = Tensor<float>::rand_uniform({3, 32, 32}, rng, 0.05f, 1.0f);
  LdrStack<float> stack;
  stack.evs = {ExposureValue{0.0}, ExposureValue{0.0}, ExposureValue{0.0}};
  stack.I1 = img.clone();
  stack.I2 = img.clone();
  stack.I3 = img.clone();
  stack.G1 = gamma_correct(img, stack.evs[0]);
  stack.G2 = stack.G1.clone();
  stack.G3 = stack.G1.clone();

  Fgps<float> f(2, 32, rng);
  FgpsResult<float> r = run_fgps(stack, f);
  CHECK(r.grid_h == 2);
  CHECK(r.grid_w == 2);
  std::vector<index_t> ident(4);
  std::iota(ident.begin(), ident.end(), index_t{0});
  CHECK(r.p_low == ident);
  CHECK(r.p_high == ident);
  // matched tokens are bitwise equal, so the diagonal cosines sit at 1 up to
  // normalization rounding
  for (index_t i = 0; i < 4; ++i) CHECK(r.m_low[i * 4 + i] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("an untrained search recovers exact cell permutations") {
  Rng rng(6);
  std::vector<index_t> e1, e3;
  // margin 7 covers the extractor's receptive-field halo, making matching
  // token footprints identical
  SceneSample<float> s = make_permutation_sample<float>(64, 64, 16, rng, e1, e3, 7);
  Fgps<float> f(2, 32, rng);
  FgpsResult<float> r = run_fgps(s.stack, f);
  CHECK(r.grid_h == 4);
  CHECK(r.p_low == e1);
  CHECK(r.p_high == e3);
}

TEST_CASE("warp by similarity equals the hard warp of its argmax map") {
  Rng rng(7);
  Tensor<float> f = Tensor<float>::rand_normal({1, 3, 8, 8}, rng);
  Tensor<float> m = Tensor<float>::rand_normal({16, 16}, rng);
  Tensor<float> a = warp_by_similarity(f, m, 4, 4, 1.0f);
  Tensor<float> b = warp(f, position_map(m), 2);
  CHECK(same_data(a, b));
  CHECK_THROWS_AS(warp_by_similarity(f, m, 2, 4, 1.0f), Error);
  CHECK_THROWS_AS(warp_by_similarity(f, Tensor<float>::zeros({8, 16}), 4, 4, 1.0f), Error);
}

TEST_CASE("reduced-resolution search still yields full-size maps") {
  // 320 wide -> search factor 2; the searched grid is half the feature grid
  SceneSpec spec;
  spec.height = 320;
  spec.width = 320;
  spec.n_objects = 1;
  spec.motion_px = 0;
  spec.seed = 9;
  SceneSample<float> s = generate<float>(spec);
  Rng rng(8);
  Fgps<float> f(2, 16, rng);
  FgpsResult<float> r = run_fgps(s.stack, f);
  CHECK(r.grid_h == 10);  // 320/2/8/2
  CHECK(r.p_low.size() == 100);
  // static scene: identity map even through the downsample
  for (index_t i = 0; i < 100; ++i) CHECK(r.p_low[static_cast<std::size_t>(i)] == i);
}
