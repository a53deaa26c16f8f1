#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ift/fgps.hpp"
#include "ift/lrt.hpp"
#include "ift/scf.hpp"
#include "ift/tensor_io.hpp"

namespace ift {

// Ablation modes: `baseline` drops both mechanisms, the `no_*` modes drop one.
enum class Mode { full, baseline, no_fgps, no_scf };

inline std::string mode_name(Mode m) {
  switch (m) {
    case Mode::full: return "full";
    case Mode::baseline: return "baseline";
    case Mode::no_fgps: return "no_fgps";
    case Mode::no_scf: return "no_scf";
  }
  throw Error("mode_name: bad mode");
}

inline Mode mode_from_string(const std::string& s) {
  if (s == "full") return Mode::full;
  if (s == "baseline") return Mode::baseline;
  if (s == "no_fgps") return Mode::no_fgps;
  if (s == "no_scf") return Mode::no_scf;
  throw Error("unknown mode '" + s + "' (expected full|baseline|no_fgps|no_scf)");
}

inline bool uses_fgps(Mode m) { return m == Mode::full || m == Mode::no_scf; }
inline bool uses_saat(Mode m) { return m == Mode::full || m == Mode::no_fgps; }
inline int stream_count(Mode m) { return uses_fgps(m) ? 5 : 3; }

struct ModelConfig {
  Mode mode = Mode::full;
  int scf_channels = 20;
  int scf_dim = 20;
  int scf_heads = 4;
  int scf_patch = 2;
  bool normalize = true;
  int fgps_patch = 2;
  int fgps_dim = 32;
  double tau = 1.0;
  int lrt_dim = 32;
  int lrt_depth = 3;
  int lrt_heads = 4;
  int window = 8;
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"mode", mode_name(c.mode)},
                     {"scf_channels", c.scf_channels},
                     {"scf_dim", c.scf_dim},
                     {"scf_heads", c.scf_heads},
                     {"scf_patch", c.scf_patch},
                     {"normalize", c.normalize},
                     {"fgps_patch", c.fgps_patch},
                     {"fgps_dim", c.fgps_dim},
                     {"tau", c.tau},
                     {"lrt_dim", c.lrt_dim},
                     {"lrt_heads", c.lrt_heads},
                     {"lrt_depth", c.lrt_depth},
                     {"window", c.window}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.mode = mode_from_string(j.at("mode").get<std::string>());
  j.at("scf_channels").get_to(c.scf_channels);
  j.at("scf_dim").get_to(c.scf_dim);
  j.at("scf_heads").get_to(c.scf_heads);
  j.at("scf_patch").get_to(c.scf_patch);
  j.at("normalize").get_to(c.normalize);
  j.at("fgps_patch").get_to(c.fgps_patch);
  j.at("fgps_dim").get_to(c.fgps_dim);
  j.at("tau").get_to(c.tau);
  j.at("lrt_dim").get_to(c.lrt_dim);
  j.at("lrt_heads").get_to(c.lrt_heads);
  j.at("lrt_depth").get_to(c.lrt_depth);
  j.at("window").get_to(c.window);
}

// The fusion transformer. All submodules are constructed from independent
// forks of the seed RNG, so shared modules initialize identically across
// modes; the active mode decides which parameters train and which paths run.
template <typename S>
struct Model {
  ModelConfig cfg;
  Fgps<S> fgps;
  Scf<S> scf;
  Lrt<S> lrt;

  Model() = default;
  Model(const ModelConfig& c, Rng& rng) : cfg(c) {
    Rng r_fgps = rng.fork(101), r_scf = rng.fork(102), r_lrt = rng.fork(103);
    fgps = Fgps<S>(c.fgps_patch, c.fgps_dim, r_fgps);
    scf = Scf<S>(c.scf_channels, c.scf_dim, c.scf_heads, c.scf_patch, c.normalize, r_scf);
    lrt = Lrt<S>(static_cast<index_t>(stream_count(c.mode)) * c.scf_channels, c.lrt_dim,
                 c.lrt_depth, c.lrt_heads, c.window, r_lrt);
  }

  std::vector<int> active_ids() const {
    if (cfg.mode == Mode::full) return {kF1, kF1w, kF2, kF3, kF3w};
    return {kF1, kF2, kF3};
  }

  // Only the parameters the current mode trains.
  ParamMap<S> params() {
    ParamMap<S> pm;
    if (uses_fgps(cfg.mode)) fgps.collect(pm, "fgps");
    scf.collect(pm, "scf", active_ids(), uses_saat(cfg.mode));
    lrt.collect(pm, "lrt");
    return pm;
  }

  // [3,H,W] fused radiance. `soft_warp` swaps the hard patch gather for its
  // softmax surrogate so the whole forward is smooth (finite differences).
  Tensor<S> forward(const LdrStack<S>& stack, bool soft_warp = false,
                    FgpsResult<S>* fr_out = nullptr) const {
    auto sf = scf.shallow_features(stack);
    Tensor<S> f1 = sf[0], f2 = sf[1], f3 = sf[2];

    std::vector<Tensor<S>> streams;
    std::vector<int> ids;
    if (uses_fgps(cfg.mode)) {
      FgpsResult<S> fr = run_fgps(stack, fgps);
      const index_t GH = stack.height() / Fgps<S>::total_stride / cfg.fgps_patch;
      const index_t GW = stack.width() / Fgps<S>::total_stride / cfg.fgps_patch;
      Tensor<S> f1w, f3w;
      if (fr.grid_h == GH && fr.grid_w == GW) {
        f1w = warp_by_similarity(f1, fr.m_low, GH, GW, static_cast<S>(cfg.tau), soft_warp);
        f3w = warp_by_similarity(f3, fr.m_high, GH, GW, static_cast<S>(cfg.tau), soft_warp);
      } else {
        // Search ran at reduced resolution: expand the hard maps instead.
        const int p = static_cast<int>(f1.dim(2) / GH);
        f1w = warp(f1, rescale_position_map(fr.p_low, fr.grid_h, fr.grid_w, GH, GW), p);
        f3w = warp(f3, rescale_position_map(fr.p_high, fr.grid_h, fr.grid_w, GH, GW), p);
      }
      if (fr_out) *fr_out = std::move(fr);
      streams = {f1, f1w, f2, f3, f3w};
      ids = {kF1, kF1w, kF2, kF3, kF3w};
    } else {
      streams = {f1, f2, f3};
      ids = {kF1, kF2, kF3};
    }

    if (uses_saat(cfg.mode)) streams = scf.saat(streams, ids);
    Tensor<S> fused = concat<S>(streams, 1);
    Tensor<S> out = lrt(fused);
    return reshape(out, {out.dim(1), out.dim(2), out.dim(3)});
  }
};

// Checkpoints are directories: one .ten per parameter plus manifest.json.
template <typename S>
void save_checkpoint(const std::string& dir, Model<S>& model, index_t step,
                     const std::vector<double>& loss_history = {}) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  ParamMap<S> pm = model.params();
  nlohmann::json j;
  j["format"] = "ift-checkpoint-v1";
  j["config"] = model.cfg;
  j["step"] = step;
  j["loss_history"] = loss_history;
  std::vector<std::string> names;
  for (auto& [name, t] : pm) {
    save_tensor((fs::path(dir) / (name + ".ten")).string(), t);
    names.push_back(name);
  }
  j["params"] = names;
  std::ofstream out(fs::path(dir) / "manifest.json");
  require(static_cast<bool>(out), "cannot write checkpoint manifest in " + dir);
  out << j.dump(2) << "\n";
}

template <typename S>
Model<S> load_checkpoint(const std::string& dir, index_t* step = nullptr) {
  namespace fs = std::filesystem;
  std::ifstream in(fs::path(dir) / "manifest.json");
  require(static_cast<bool>(in), "cannot open checkpoint manifest in " + dir);
  nlohmann::json j = nlohmann::json::parse(in);
  require(j.value("format", "") == "ift-checkpoint-v1", "unrecognized checkpoint format");

  ModelConfig cfg = j.at("config").get<ModelConfig>();
  Rng rng(0);  // placeholder init, overwritten below
  Model<S> model(cfg, rng);
  if (step) *step = j.at("step").get<index_t>();

  ParamMap<S> pm = model.params();
  const auto names = j.at("params").get<std::vector<std::string>>();
  require(names.size() == pm.size(), "checkpoint parameter list mismatch");
  for (auto& [name, t] : pm) {
    Tensor<S> loaded = load_tensor<S>((fs::path(dir) / (name + ".ten")).string());
    require(loaded.shape() == t.shape(), "checkpoint shape mismatch for " + name);
    std::copy(loaded.data(), loaded.data() + loaded.numel(), t.data());
  }
  return model;
}

}  // namespace ift
