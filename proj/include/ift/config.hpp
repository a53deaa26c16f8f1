#pragma once

#include <algorithm>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ift/dataset.hpp"
#include "ift/model.hpp"
#include "ift/training.hpp"

namespace ift {

// A size the model can consume: checked for every scene dimension, the train
// crop, and any image handed to fusion.
inline void validate_image_dim(const ModelConfig& m, index_t size, const std::string& what) {
  require(size > 0, what + " must be positive");
  const index_t stride = 8;  // feature extractor downsample
  require(size % (stride * m.fgps_patch) == 0,
          what + " must be divisible by the search stride " +
              std::to_string(stride * m.fgps_patch));
  require((size / 2) % m.window == 0,
          what + "/2 must be divisible by the attention window " + std::to_string(m.window));
  require((size / 2) % m.scf_patch == 0, what + "/2 must be divisible by the fusion token patch");
}

// Everything a run needs: scene recipe, split sizes, model shape, training
// schedule. Config files overlay these defaults; CLI flags overlay both.
struct RunConfig {
  SceneSpec scene;
  int n_train = 16;
  int n_val = 8;
  ModelConfig model;
  TrainConfig train;

  // Every range and divisibility constraint, checked before any side effect.
  void validate() const {
    validate_image_dim(model, scene.height, "scene height");
    validate_image_dim(model, scene.width, "scene width");
    validate_image_dim(model, train.crop, "train crop");
    require(train.crop <= scene.height && train.crop <= scene.width,
            "train crop exceeds the scene size");

    require(scene.bits == 8 || scene.bits == 16, "scene bits must be 8 or 16");
    require(scene.dynamic_range > 1.0, "scene dynamic range must exceed 1");
    require(scene.n_objects >= 0, "scene object count must be non-negative");
    require(scene.motion_px >= 0, "scene motion must be non-negative");
    require(scene.motion_snap >= 1, "scene motion snap must be positive");
    require(scene.gamma > 0, "scene gamma must be positive");
    require(scene.object_texture >= 0, "scene object texture must be non-negative");
    require(n_train > 0 && n_val >= 0, "dataset split sizes invalid");

    require(model.scf_channels > 0 && model.scf_dim > 0 && model.scf_heads > 0 &&
                model.scf_patch > 0,
            "fusion dims must be positive");
    require(model.scf_dim % model.scf_heads == 0, "scf key dim not divisible by heads");
    require((model.scf_channels * model.scf_patch * model.scf_patch) % model.scf_heads == 0,
            "scf token dim not divisible by heads");
    require(model.fgps_patch > 0 && model.fgps_dim > 0, "search dims must be positive");
    require(model.tau > 0, "tau must be positive");
    require(model.lrt_dim > 0 && model.lrt_depth > 0 && model.lrt_heads > 0 && model.window > 0,
            "reconstruction dims must be positive");
    require(model.lrt_dim % model.lrt_heads == 0, "lrt dim not divisible by heads");
    require(model.lrt_dim % 4 == 0, "lrt dim must be divisible by 4 (channel squeeze)");

    require(train.lr0 > train.lr_end && train.lr_end > 0, "need lr0 > lr_end > 0");
    require(train.decay_power > 0, "decay power must be positive");
    require(train.steps > 0, "steps must be positive");
    require(train.eval_every > 0, "eval_every must be positive");
    require(train.lambda_p >= 0, "lambda_p must be non-negative");
    require(train.mu > 0, "mu must be positive");
    require(train.beta1 > 0 && train.beta1 < 1 && train.beta2 > 0 && train.beta2 < 1,
            "adam betas must lie in (0,1)");
    require(train.eps > 0, "adam eps must be positive");
  }
};

namespace detail {

template <typename T>
void maybe_get(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

inline void check_keys(const nlohmann::json& j, const std::vector<std::string>& known,
                       const std::string& section) {
  for (const auto& [key, _] : j.items())
    require(std::find(known.begin(), known.end(), key) != known.end(),
            "config: unknown key '" + key + "' in section '" + section + "'");
}

}  // namespace detail

// Partial overlay: only keys present in the JSON replace defaults. Unknown
// keys are rejected so typos cannot silently revert to defaults.
inline void apply_config_json(const nlohmann::json& j, RunConfig& rc) {
  detail::check_keys(j, {"scene", "dataset", "model", "train"}, "top level");
  if (j.contains("scene")) {
    const auto& s = j.at("scene");
    detail::check_keys(s, {"height", "width", "n_objects", "motion_px", "motion_snap",
                           "dynamic_range", "seed", "evs", "gamma", "bits", "object_texture"},
                       "scene");
    detail::maybe_get(s, "height", rc.scene.height);
    detail::maybe_get(s, "width", rc.scene.width);
    detail::maybe_get(s, "n_objects", rc.scene.n_objects);
    detail::maybe_get(s, "motion_px", rc.scene.motion_px);
    detail::maybe_get(s, "dynamic_range", rc.scene.dynamic_range);
    detail::maybe_get(s, "seed", rc.scene.seed);
    detail::maybe_get(s, "gamma", rc.scene.gamma);
    detail::maybe_get(s, "bits", rc.scene.bits);
    detail::maybe_get(s, "object_texture", rc.scene.object_texture);
    detail::maybe_get(s, "motion_snap", rc.scene.motion_snap);
    if (s.contains("evs")) {
      require(s.at("evs").size() == 3, "config: evs must have 3 entries");
      for (int i = 0; i < 3; ++i)
        rc.scene.evs[static_cast<std::size_t>(i)].ev = s.at("evs").at(i).get<double>();
    }
  }
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    detail::check_keys(d, {"n_train", "n_val"}, "dataset");
    detail::maybe_get(d, "n_train", rc.n_train);
    detail::maybe_get(d, "n_val", rc.n_val);
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    detail::check_keys(m, {"mode", "scf_channels", "scf_dim", "scf_heads", "scf_patch",
                           "normalize", "fgps_patch", "fgps_dim", "tau", "lrt_dim", "lrt_depth",
                           "lrt_heads", "window"},
                       "model");
    if (m.contains("mode")) rc.model.mode = mode_from_string(m.at("mode").get<std::string>());
    detail::maybe_get(m, "scf_channels", rc.model.scf_channels);
    detail::maybe_get(m, "scf_dim", rc.model.scf_dim);
    detail::maybe_get(m, "scf_heads", rc.model.scf_heads);
    detail::maybe_get(m, "scf_patch", rc.model.scf_patch);
    detail::maybe_get(m, "normalize", rc.model.normalize);
    detail::maybe_get(m, "fgps_patch", rc.model.fgps_patch);
    detail::maybe_get(m, "fgps_dim", rc.model.fgps_dim);
    detail::maybe_get(m, "tau", rc.model.tau);
    detail::maybe_get(m, "lrt_dim", rc.model.lrt_dim);
    detail::maybe_get(m, "lrt_depth", rc.model.lrt_depth);
    detail::maybe_get(m, "lrt_heads", rc.model.lrt_heads);
    detail::maybe_get(m, "window", rc.model.window);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    detail::check_keys(t, {"lr0", "lr_end", "decay_power", "beta1", "beta2", "eps", "lambda_p",
                           "steps", "crop", "seed", "eval_every", "mu"},
                       "train");
    detail::maybe_get(t, "lr0", rc.train.lr0);
    detail::maybe_get(t, "lr_end", rc.train.lr_end);
    detail::maybe_get(t, "decay_power", rc.train.decay_power);
    detail::maybe_get(t, "beta1", rc.train.beta1);
    detail::maybe_get(t, "beta2", rc.train.beta2);
    detail::maybe_get(t, "eps", rc.train.eps);
    detail::maybe_get(t, "lambda_p", rc.train.lambda_p);
    detail::maybe_get(t, "steps", rc.train.steps);
    detail::maybe_get(t, "crop", rc.train.crop);
    detail::maybe_get(t, "seed", rc.train.seed);
    detail::maybe_get(t, "eval_every", rc.train.eval_every);
    detail::maybe_get(t, "mu", rc.train.mu);
  }
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "cannot open config file " + path);
  nlohmann::json j = nlohmann::json::parse(in);
  RunConfig rc;
  apply_config_json(j, rc);
  return rc;
}

inline void to_json(nlohmann::json& j, const TrainConfig& t) {
  j = nlohmann::json{{"lr0", t.lr0},
                     {"lr_end", t.lr_end},
                     {"decay_power", t.decay_power},
                     {"beta1", t.beta1},
                     {"beta2", t.beta2},
                     {"eps", t.eps},
                     {"lambda_p", t.lambda_p},
                     {"steps", t.steps},
                     {"crop", t.crop},
                     {"seed", t.seed},
                     {"eval_every", t.eval_every},
                     {"mu", t.mu}};
}

inline void to_json(nlohmann::json& j, const RunConfig& rc) {
  j = nlohmann::json{{"scene", rc.scene},
                     {"dataset", {{"n_train", rc.n_train}, {"n_val", rc.n_val}}},
                     {"model", rc.model},
                     {"train", rc.train}};
}

}  // namespace ift
