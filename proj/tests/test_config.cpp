#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "ift/config.hpp"
#include "ift/dataset.hpp"
#include "ift/image_io.hpp"
#include "ift/tensor_io.hpp"
#include "testing_util.hpp"

using namespace ift;

TEST_CASE("defaults validate and partial overlays keep the rest") {
  RunConfig rc;
  rc.validate();

  nlohmann::json j = nlohmann::json::parse(
      R"({"scene": {"height": 128, "object_texture": 0.4}, "train": {"steps": 50}})");
  apply_config_json(j, rc);
  CHECK(rc.scene.height == 128);
  CHECK(rc.scene.width == 64);  // untouched default
  CHECK(rc.scene.object_texture == 0.4);
  CHECK(rc.train.steps == 50);
  CHECK(rc.train.crop == 64);
  rc.validate();
}

TEST_CASE("unknown keys are rejected instead of silently ignored") {
  RunConfig rc;
  auto reject = [&](const char* text) {
    CHECK_THROWS_AS(apply_config_json(nlohmann::json::parse(text), rc), Error);
  };
  reject(R"({"scnee": {}})");
  reject(R"({"scene": {"hieght": 64}})");
  reject(R"({"model": {"tua": 1.0}})");
  reject(R"({"train": {"lr": 1e-4}})");
  reject(R"({"scene": {"evs": [0.0, 2.0]}})");
}

TEST_CASE("validation rejects inconsistent setups") {
  auto broken = [](auto&& mutate) {
    RunConfig rc;
    mutate(rc);
    return rc;
  };
  CHECK_THROWS_AS(broken([](RunConfig& rc) { rc.scene.height = 60; }).validate(), Error);
  CHECK_THROWS_AS(broken([](RunConfig& rc) { rc.train.crop = 128; }).validate(), Error);
  CHECK_THROWS_AS(broken([](RunConfig& rc) { rc.scene.bits = 12; }).validate(), Error);
  CHECK_THROWS_AS(broken([](RunConfig& rc) { rc.scene.dynamic_range = 0.5; }).validate(), Error);
  CHECK_THROWS_AS(broken([](RunConfig& rc) { rc.scene.object_texture = -0.1; }).validate(),
                  Error);
  CHECK_THROWS_AS(broken([](RunConfig& rc) { rc.model.tau = 0.0; }).validate(), Error);
  CHECK_THROWS_AS(broken([](RunConfig& rc) { rc.model.lrt_dim = 30; }).validate(), Error);
  CHECK_THROWS_AS(broken([](RunConfig& rc) { rc.model.scf_dim = 7; }).validate(), Error);
  CHECK_THROWS_AS(broken([](RunConfig& rc) { rc.train.lr_end = 1.0; }).validate(), Error);
  CHECK_THROWS_AS(broken([](RunConfig& rc) { rc.train.beta1 = 1.0; }).validate(), Error);
  CHECK_THROWS_AS(broken([](RunConfig& rc) { rc.n_train = 0; }).validate(), Error);
}

TEST_CASE("run config round trips through json") {
  RunConfig rc;
  rc.scene.height = 128;
  rc.scene.width = 128;
  rc.scene.object_texture = 0.6;
  rc.scene.evs = {ExposureValue{-3.0}, ExposureValue{0.0}, ExposureValue{3.0}};
  rc.model.mode = Mode::no_fgps;
  rc.model.tau = 0.05;
  rc.train.steps = 123;
  rc.train.lr0 = 4e-4;

  nlohmann::json j = rc;
  RunConfig back;
  apply_config_json(j, back);
  CHECK(back.scene.height == 128);
  CHECK(back.scene.object_texture == 0.6);
  CHECK(back.scene.evs[2].ev == 3.0);
  CHECK(back.model.mode == Mode::no_fgps);
  CHECK(back.model.tau == 0.05);
  CHECK(back.train.steps == 123);
  CHECK(back.train.lr0 == 4e-4);
}

TEST_CASE("config files load from disk and reject garbage") {
  const std::string path = "/tmp/ift_test_config.json";
  std::ofstream(path) << R"({"train": {"steps": 7}})";
  RunConfig rc = load_run_config(path);
  CHECK(rc.train.steps == 7);
  CHECK_THROWS_AS(load_run_config("/tmp/ift_absent_config.json"), Error);
  std::ofstream(path) << "{not json";
  CHECK_THROWS_AS(load_run_config(path), nlohmann::json::parse_error);
  std::filesystem::remove(path);
}

TEST_CASE("datasets rebuild byte-identically and split seeds differ") {
  const std::string root = "/tmp/ift_test_dataset";
  std::filesystem::remove_all(root);
  DatasetSpec ds;
  ds.scene.height = 32;
  ds.scene.width = 32;
  ds.scene.seed = 4;
  ds.n_train = 2;
  ds.n_val = 1;
  make_dataset<float>(root, ds);

  auto tr = load_split<float>(root, "train");
  auto va = load_split<float>(root, "val");
  CHECK(tr.size() == 2);
  CHECK(va.size() == 1);
  CHECK_FALSE(same_data(tr[0].gt, tr[1].gt));
  CHECK_FALSE(same_data(tr[0].gt, va[0].gt));  // train/val streams diverge

  Tensor<float> before = load_tensor<float>(root + "/train/sample_000/I1.ten");
  make_dataset<float>(root, ds);
  Tensor<float> after = load_tensor<float>(root + "/train/sample_000/I1.ten");
  CHECK(same_data(before, after));

  CHECK_THROWS_AS(load_split<float>(root, "test"), Error);
  CHECK_THROWS_AS(load_split<float>("/tmp/ift_absent_dataset", "train"), Error);
  std::filesystem::remove_all(root);
}

TEST_CASE("tensor files round trip both precisions and reject bad magic") {
  const std::string path = "/tmp/ift_test_tensor.ten";
  Rng rng(1);
  Tensor<float> f = Tensor<float>::rand_normal({2, 3, 4}, rng);
  save_tensor(path, f);
  CHECK(same_data(load_tensor<float>(path), f));

  Tensor<double> d = Tensor<double>::rand_normal({5}, rng);
  save_tensor(path, d);
  CHECK(same_data(load_tensor<double>(path), d));
  // cross-precision load widens losslessly from f32
  save_tensor(path, f);
  Tensor<double> wide = load_tensor<double>(path);
  for (index_t i = 0; i < f.numel(); ++i) CHECK(wide[i] == static_cast<double>(f[i]));

  std::ofstream(path, std::ios::binary) << "NOPE";
  CHECK_THROWS_AS(load_tensor<float>(path), Error);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_tensor<float>(path), Error);
}

TEST_CASE("pfm and ppm files round trip images") {
  Rng rng(2);
  Tensor<float> img = Tensor<float>::rand_uniform({3, 6, 5}, rng);
  const std::string pfm = "/tmp/ift_test_img.pfm";
  save_pfm(pfm, img);
  CHECK(same_data(load_pfm(pfm), img));
  std::filesystem::remove(pfm);

  const std::string ppm = "/tmp/ift_test_img.ppm";
  save_ppm(ppm, img);
  Tensor<float> q = load_ppm(ppm);
  CHECK(q.shape() == img.shape());
  for (index_t i = 0; i < q.numel(); ++i) CHECK(std::abs(q[i] - img[i]) <= 0.5f / 255.0f + 1e-6f);
  std::filesystem::remove(ppm);

  CHECK_THROWS_AS(load_pfm("/tmp/ift_absent.pfm"), Error);
  CHECK_THROWS_AS(save_ppm(ppm, Tensor<float>::zeros({1, 4, 4})), Error);
}
