#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ift/scene.hpp"

namespace ift {

inline void to_json(nlohmann::json& j, const SceneSpec& s) {
  j = nlohmann::json{{"height", s.height},
                     {"width", s.width},
                     {"n_objects", s.n_objects},
                     {"motion_px", s.motion_px},
                     {"motion_snap", s.motion_snap},
                     {"dynamic_range", s.dynamic_range},
                     {"seed", s.seed},
                     {"evs", {s.evs[0].ev, s.evs[1].ev, s.evs[2].ev}},
                     {"gamma", s.gamma},
                     {"bits", s.bits},
                     {"object_texture", s.object_texture}};
}

inline void from_json(const nlohmann::json& j, SceneSpec& s) {
  j.at("height").get_to(s.height);
  j.at("width").get_to(s.width);
  j.at("n_objects").get_to(s.n_objects);
  j.at("motion_px").get_to(s.motion_px);
  j.at("dynamic_range").get_to(s.dynamic_range);
  j.at("seed").get_to(s.seed);
  for (int i = 0; i < 3; ++i) s.evs[static_cast<std::size_t>(i)].ev = j.at("evs").at(i).get<double>();
  j.at("gamma").get_to(s.gamma);
  j.at("bits").get_to(s.bits);
  s.object_texture = j.value("object_texture", 0.0);
  s.motion_snap = j.value("motion_snap", 1);
}

struct DatasetSpec {
  SceneSpec scene;
  int n_train = 16;
  int n_val = 8;
};

inline std::string sample_dir_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "sample_%03d", i);
  return buf;
}

// Per-sample scene seed, stable across runs for a fixed base seed.
inline std::uint64_t sample_seed(std::uint64_t base, bool val, int index) {
  std::uint64_t s = base ^ (val ? 0x9e3779b97f4a7c15ull : 0x2545f4914f6cdd1dull);
  s += 0x100000001b3ull * static_cast<std::uint64_t>(index + 1);
  return s;
}

// Writes <root>/{train,val}/sample_xxx/ plus a dataset manifest. Deterministic
// for a fixed spec; rerunning overwrites with identical bytes.
template <typename S>
void make_dataset(const std::string& root, const DatasetSpec& ds) {
  namespace fs = std::filesystem;
  require(ds.n_train > 0 && ds.n_val >= 0, "make_dataset: bad split sizes");
  fs::create_directories(root);
  auto emit = [&](const std::string& split, int n, bool val) {
    for (int i = 0; i < n; ++i) {
      SceneSpec spec = ds.scene;
      spec.seed = sample_seed(ds.scene.seed, val, i);
      SceneSample<S> sample = generate<S>(spec);
      save_sample((fs::path(root) / split / sample_dir_name(i)).string(), sample);
    }
  };
  emit("train", ds.n_train, false);
  emit("val", ds.n_val, true);

  nlohmann::json j;
  j["format"] = "ift-dataset-v1";
  j["n_train"] = ds.n_train;
  j["n_val"] = ds.n_val;
  j["scene"] = ds.scene;
  std::ofstream out(fs::path(root) / "dataset.json");
  require(static_cast<bool>(out), "make_dataset: cannot write manifest in " + root);
  out << j.dump(2) << "\n";
}

template <typename S>
std::vector<SceneSample<S>> load_split(const std::string& root, const std::string& split) {
  namespace fs = std::filesystem;
  std::ifstream in(fs::path(root) / "dataset.json");
  require(static_cast<bool>(in), "load_split: no dataset manifest in " + root);
  nlohmann::json j = nlohmann::json::parse(in);
  require(j.value("format", "") == "ift-dataset-v1", "load_split: unrecognized dataset format");
  require(split == "train" || split == "val", "load_split: split must be train or val");
  const int n = j.at(split == "train" ? "n_train" : "n_val").get<int>();
  std::vector<SceneSample<S>> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    out.push_back(load_sample<S>((fs::path(root) / split / sample_dir_name(i)).string()));
  return out;
}

}  // namespace ift
