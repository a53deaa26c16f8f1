#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "ift/model.hpp"
#include "ift/scene.hpp"
#include "testing_util.hpp"

using namespace ift;

namespace {

ModelConfig tiny_config(Mode mode) {
  ModelConfig c;
  c.mode = mode;
  c.scf_channels = 8;
  c.scf_dim = 8;
  c.scf_heads = 2;
  c.scf_patch = 2;
  c.fgps_patch = 2;
  c.fgps_dim = 16;
  c.lrt_dim = 8;
  c.lrt_depth = 1;
  c.lrt_heads = 2;
  c.window = 4;
  return c;
}

SceneSample<float> tiny_sample(std::uint64_t seed) {
  SceneSpec spec;
  spec.height = 32;
  spec.width = 32;
  spec.n_objects = 2;
  spec.motion_px = 4;
  spec.seed = seed;
  return generate<float>(spec);
}

}  // namespace

TEST_CASE("mode helpers agree on which paths run") {
  CHECK(uses_fgps(Mode::full));
  CHECK(uses_fgps(Mode::no_scf));
  CHECK_FALSE(uses_fgps(Mode::no_fgps));
  CHECK_FALSE(uses_fgps(Mode::baseline));
  CHECK(uses_saat(Mode::full));
  CHECK(uses_saat(Mode::no_fgps));
  CHECK_FALSE(uses_saat(Mode::no_scf));
  CHECK(stream_count(Mode::full) == 5);
  CHECK(stream_count(Mode::no_fgps) == 3);
  for (const char* n : {"full", "baseline", "no_fgps", "no_scf"})
    CHECK(mode_name(mode_from_string(n)) == n);
  CHECK_THROWS_AS(mode_from_string("hybrid"), Error);
}

TEST_CASE("every mode produces a full-resolution radiance image") {
  SceneSample<float> s = tiny_sample(3);
  for (Mode m : {Mode::full, Mode::baseline, Mode::no_fgps, Mode::no_scf}) {
    Rng rng(7);
    Model<float> model(tiny_config(m), rng);
    Tensor<float> out = model.forward(s.stack);
    CHECK(out.shape() == Shape{3, 32, 32});
    for (index_t i = 0; i < out.numel(); i += 37) {
      CHECK(out[i] > 0.0f);
      CHECK(out[i] < 1.0f);
    }
  }
}

TEST_CASE("parameter sets follow the mode") {
  Rng r1(7), r2(7), r3(7), r4(7);
  Model<float> full(tiny_config(Mode::full), r1);
  Model<float> base(tiny_config(Mode::baseline), r2);
  Model<float> nofg(tiny_config(Mode::no_fgps), r3);
  Model<float> noscf(tiny_config(Mode::no_scf), r4);
  ParamMap<float> pf = full.params(), pb = base.params(), pn = nofg.params(),
                  ps = noscf.params();

  CHECK(pf.find("fgps.phi.w") != nullptr);
  CHECK(pb.find("fgps.phi.w") == nullptr);
  CHECK(pn.find("fgps.phi.w") == nullptr);
  CHECK(ps.find("fgps.phi.w") != nullptr);

  CHECK(pf.find("scf.theta0.w") != nullptr);
  CHECK(pn.find("scf.theta0.w") != nullptr);
  CHECK(pb.find("scf.theta0.w") == nullptr);
  CHECK(ps.find("scf.theta0.w") == nullptr);

  CHECK(pf.find("scf.vartheta.f1w.w") != nullptr);
  CHECK(pn.find("scf.vartheta.f1w.w") == nullptr);

  CHECK(pf.scalar_count() > pn.scalar_count());
  CHECK(pn.scalar_count() > pb.scalar_count());

  // shared modules draw from the same forked streams in every mode
  CHECK(same_data(full.scf.conv1.w, base.scf.conv1.w));
  CHECK(same_data(full.fgps.fe1.w, noscf.fgps.fe1.w));
}

TEST_CASE("the search result surfaces through the forward pass") {
  SceneSample<float> s = tiny_sample(5);
  Rng rng(9);
  Model<float> model(tiny_config(Mode::full), rng);
  FgpsResult<float> fr;
  model.forward(s.stack, false, &fr);
  CHECK(fr.grid_h == 2);
  CHECK(fr.grid_w == 2);
  CHECK(fr.p_low.size() == 4);
  CHECK(fr.m_low.shape() == Shape{4, 4});
}

TEST_CASE("checkpoints restore the model bit for bit") {
  const std::string dir = "/tmp/ift_test_ckpt";
  std::filesystem::remove_all(dir);
  SceneSample<float> s = tiny_sample(11);
  Rng rng(13);
  Model<float> model(tiny_config(Mode::full), rng);
  // perturb away from init so the copy is doing real work
  ParamMap<float> pm = model.params();
  Rng noise(17);
  for (auto& [name, t] : pm)
    for (index_t i = 0; i < t.numel(); ++i) t[i] += 0.01f * static_cast<float>(noise.normal());

  Tensor<float> before = model.forward(s.stack);
  save_checkpoint(dir, model, 42, {1.0, 0.5});

  index_t step = 0;
  Model<float> loaded = load_checkpoint<float>(dir, &step);
  CHECK(step == 42);
  CHECK(loaded.cfg.mode == Mode::full);
  ParamMap<float> lm = loaded.params();
  CHECK(lm.size() == pm.size());
  for (auto& [name, t] : lm) CHECK(same_data(t, *pm.find(name)));
  CHECK(same_data(loaded.forward(s.stack), before));
  std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoint loading rejects foreign manifests") {
  const std::string dir = "/tmp/ift_test_ckpt_bad";
  std::filesystem::create_directories(dir);
  std::ofstream(dir + "/manifest.json") << "{\"format\": \"other-v9\"}\n";
  CHECK_THROWS_AS(load_checkpoint<float>(dir), Error);
  CHECK_THROWS_AS(load_checkpoint<float>("/tmp/ift_test_ckpt_absent"), Error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("model config serializes through json") {
  ModelConfig c = tiny_config(Mode::no_scf);
  c.tau = 0.25;
  nlohmann::json j = c;
  ModelConfig r = j.get<ModelConfig>();
  CHECK(r.mode == Mode::no_scf);
  CHECK(r.tau == 0.25);
  CHECK(r.scf_channels == c.scf_channels);
  CHECK(r.window == c.window);
}
