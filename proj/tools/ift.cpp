// Command-line front end: dataset generation, training, fusion, evaluation,
// and the self-check suites.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ift/checks.hpp"
#include "ift/config.hpp"
#include "ift/image_io.hpp"
#include "ift/metrics.hpp"

namespace {

using namespace ift;

// CLI flags override config-file values, which override built-in defaults.
template <typename T, typename U>
void overlay(const CLI::Option* opt, T& dst, const U& src) {
  if (opt->count()) dst = static_cast<T>(src);
}

RunConfig base_config(const std::string& config_path) {
  return config_path.empty() ? RunConfig{} : load_run_config(config_path);
}

Tensor<float> load_ldr(const std::string& path) {
  namespace fs = std::filesystem;
  const std::string ext = fs::path(path).extension().string();
  Tensor<float> img;
  if (ext == ".ppm")
    img = load_ppm(path);
  else if (ext == ".pfm")
    img = load_pfm(path);
  else if (ext == ".ten")
    img = load_tensor<float>(path);
  else
    throw Error("unsupported image format '" + ext + "' for " + path +
                " (expected .ppm, .pfm or .ten)");
  require(img.rank() == 3 && img.dim(0) == 3, "image " + path + " must be [3,H,W]");
  for (index_t i = 0; i < img.numel(); ++i)
    require(img[i] >= 0.0f && img[i] <= 1.0f, "image " + path + " has values outside [0,1]");
  return img;
}

// Position map rendered as a color field: matched source row -> red, source
// column -> green. Constant map = constant image; identity = smooth ramps.
void save_posmap_ppm(const std::string& path, const std::vector<index_t>& pos, index_t gh,
                     index_t gw) {
  Tensor<float> img = Tensor<float>::zeros({3, gh, gw});
  for (index_t i = 0; i < gh * gw; ++i) {
    const index_t src = pos[static_cast<std::size_t>(i)];
    img.data()[0 * gh * gw + i] =
        gh > 1 ? static_cast<float>(src / gw) / static_cast<float>(gh - 1) : 0.0f;
    img.data()[1 * gh * gw + i] =
        gw > 1 ? static_cast<float>(src % gw) / static_cast<float>(gw - 1) : 0.0f;
    img.data()[2 * gh * gw + i] = 0.25f;
  }
  save_ppm(path, img);
}

int cmd_gen(const RunConfig& rc, const std::string& out_dir) {
  rc.validate();
  DatasetSpec ds{rc.scene, rc.n_train, rc.n_val};
  make_dataset<float>(out_dir, ds);
  std::cout << "wrote " << rc.n_train << " train + " << rc.n_val << " val samples ("
            << rc.scene.height << "x" << rc.scene.width << ") to " << out_dir << "\n";
  return 0;
}

int cmd_train(const RunConfig& rc, const std::string& data_dir, const std::string& out_dir) {
  namespace fs = std::filesystem;
  rc.validate();
  auto train_set = load_split<float>(data_dir, "train");
  auto val_set = load_split<float>(data_dir, "val");
  for (const auto& s : train_set)
    require(s.stack.height() >= rc.train.crop && s.stack.width() >= rc.train.crop,
            "training sample smaller than the crop");

  Rng rng(rc.train.seed);
  Model<float> model(rc.model, rng);
  std::cout << "training mode=" << mode_name(rc.model.mode) << " steps=" << rc.train.steps
            << " params=" << model.params().scalar_count() << "\n";
  TrainResult result = train(model, train_set, val_set, rc.train, &std::cout);

  fs::create_directories(out_dir);
  save_checkpoint((fs::path(out_dir) / "checkpoint").string(), model,
                  static_cast<index_t>(rc.train.steps), result.loss_history);
  {
    std::ofstream csv(fs::path(out_dir) / "train_log.csv");
    require(static_cast<bool>(csv), "cannot write training log in " + out_dir);
    write_csv(csv, result.rows);
  }
  {
    std::ofstream echo(fs::path(out_dir) / "run_config.json");
    require(static_cast<bool>(echo), "cannot write config echo in " + out_dir);
    echo << nlohmann::json(rc).dump(2) << "\n";
  }
  std::cout << "final loss " << result.loss_history.back() << ", final val psnr-mu "
            << result.final_val_psnr_mu << "\nwrote " << out_dir << "/checkpoint\n";
  return 0;
}

int cmd_fuse(const std::string& checkpoint, const std::vector<std::string>& ldr_paths,
             const std::vector<double>& evs, const std::string& out_prefix, bool dump_posmaps) {
  Model<float> model = load_checkpoint<float>(checkpoint);

  LdrStack<float> stack;
  stack.I1 = load_ldr(ldr_paths[0]);
  stack.I2 = load_ldr(ldr_paths[1]);
  stack.I3 = load_ldr(ldr_paths[2]);
  require(stack.I1.shape() == stack.I2.shape() && stack.I2.shape() == stack.I3.shape(),
          "input LDR frames differ in size");
  validate_image_dim(model.cfg, stack.height(), "input height");
  validate_image_dim(model.cfg, stack.width(), "input width");
  for (int i = 0; i < 3; ++i) stack.evs[static_cast<std::size_t>(i)].ev = evs[static_cast<std::size_t>(i)];
  stack.G1 = gamma_correct(stack.I1, stack.evs[0]);
  stack.G2 = gamma_correct(stack.I2, stack.evs[1]);
  stack.G3 = gamma_correct(stack.I3, stack.evs[2]);

  FgpsResult<float> fr;
  Tensor<float> fused;
  {
    Graph<float>::Pause pause;
    fused = model.forward(stack, false, &fr);
  }

  save_pfm(out_prefix + ".pfm", fused);
  save_ppm(out_prefix + "_mu.ppm", mu_law(fused, 5000.0f, true));
  std::cout << "wrote " << out_prefix << ".pfm and " << out_prefix << "_mu.ppm\n";
  if (dump_posmaps) {
    if (uses_fgps(model.cfg.mode)) {
      save_posmap_ppm(out_prefix + "_pos_low.ppm", fr.p_low, fr.grid_h, fr.grid_w);
      save_posmap_ppm(out_prefix + "_pos_high.ppm", fr.p_high, fr.grid_h, fr.grid_w);
      std::cout << "wrote position maps (" << fr.grid_h << "x" << fr.grid_w << ")\n";
    } else {
      std::cout << "mode " << mode_name(model.cfg.mode) << " runs no patch search; "
                << "no position maps to dump\n";
    }
  }
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data_dir, const std::string& split,
             const std::string& out_csv) {
  Model<float> model = load_checkpoint<float>(checkpoint);
  auto samples = load_split<float>(data_dir, split);
  require(!samples.empty(), "eval: empty split '" + split + "'");

  EvalReport report;
  Graph<float>::Pause pause;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    Tensor<float> fused = model.forward(s.stack);
    Tensor<float> naive = naive_merge(s.stack);
    EvalRow row;
    row.name = sample_dir_name(static_cast<int>(i));
    row.psnr_mu = psnr_mu(fused, s.gt);
    row.psnr_l = psnr_l(fused, s.gt);
    row.ssim_mu = ssim_mu(fused, s.gt);
    row.naive_psnr_mu = psnr_mu(naive, s.gt);
    report.rows.push_back(row);
  }

  if (out_csv.empty()) {
    report.write_csv(std::cout);
  } else {
    std::ofstream os(out_csv);
    require(static_cast<bool>(os), "cannot write report to " + out_csv);
    report.write_csv(os);
    const EvalRow m = report.means();
    std::printf("mean over %zu samples: psnr_mu %.3f  psnr_l %.3f  ssim_mu %.5f  naive %.3f\n",
                report.rows.size(), m.psnr_mu, m.psnr_l, m.ssim_mu, m.naive_psnr_mu);
    std::cout << "wrote " << out_csv << "\n";
  }
  return 0;
}

int cmd_check(const std::string& suite) {
  const auto results = checks::run_suite(suite);
  const int failed = checks::print_report(std::cout, results);
  std::cout << (failed == 0 ? "all checks passed" : "checks FAILED") << " ("
            << results.size() - static_cast<std::size_t>(failed) << "/" << results.size()
            << ")\n";
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "ift — trainable multi-exposure HDR fusion.\n"
      "IFT_THREADS caps worker threads (default 1 for bitwise determinism)."};
  app.require_subcommand(1);

  // ---- gen ----
  auto* gen = app.add_subcommand("gen", "generate a synthetic bracketed dataset");
  std::string g_config, g_out;
  index_t g_size = 0, g_height = 0, g_width = 0;
  int g_train = 0, g_val = 0, g_objects = 0, g_motion = 0, g_snap = 0, g_bits = 0;
  double g_dr = 0, g_gamma = 0, g_obj_tex = 0;
  std::uint64_t g_seed = 0;
  std::vector<double> g_evs;
  gen->add_option("--config", g_config, "JSON config file");
  gen->add_option("--out", g_out, "output dataset directory")->required();
  auto* og_size = gen->add_option("--size", g_size, "square scene size (sets height and width)");
  auto* og_h = gen->add_option("--height", g_height, "scene height");
  auto* og_w = gen->add_option("--width", g_width, "scene width");
  auto* og_train = gen->add_option("--n-train", g_train, "training samples (default 16)");
  auto* og_val = gen->add_option("--n-val", g_val, "validation samples (default 8)");
  auto* og_obj = gen->add_option("--objects", g_objects, "moving objects per scene");
  auto* og_mot = gen->add_option("--motion", g_motion, "max per-frame motion in pixels");
  auto* og_snap = gen->add_option("--motion-snap", g_snap, "snap offsets to multiples of this");
  auto* og_dr = gen->add_option("--dynamic-range", g_dr, "radiance dynamic range");
  auto* og_seed = gen->add_option("--seed", g_seed, "base scene seed");
  auto* og_evs = gen->add_option("--evs", g_evs, "three exposure values")->expected(3);
  auto* og_gamma = gen->add_option("--gamma", g_gamma, "encoding gamma");
  auto* og_bits = gen->add_option("--bits", g_bits, "LDR quantization bits (8 or 16)");
  auto* og_tex = gen->add_option("--object-texture", g_obj_tex, "log-radiance grain on shapes (0 = flat)");

  // ---- train ----
  auto* tr = app.add_subcommand("train", "train a fusion model on a generated dataset");
  std::string t_config, t_data, t_out, t_mode;
  int t_steps = 0, t_crop = 0, t_eval_every = 0;
  double t_lr0 = 0, t_lr_end = 0, t_lambda = 0, t_tau = 0;
  std::uint64_t t_seed = 0;
  bool t_baseline = false, t_no_fgps = false, t_no_scf = false;
  tr->add_option("--config", t_config, "JSON config file");
  tr->add_option("--data", t_data, "dataset directory from `ift gen`")->required();
  tr->add_option("--out", t_out, "output directory (checkpoint + logs)")->required();
  auto* ot_steps = tr->add_option("--steps", t_steps, "training steps (default 2000)");
  auto* ot_crop = tr->add_option("--crop", t_crop, "augmentation crop (default 64)");
  auto* ot_seed = tr->add_option("--seed", t_seed, "training seed");
  auto* ot_lr0 = tr->add_option("--lr0", t_lr0, "initial learning rate");
  auto* ot_lrend = tr->add_option("--lr-end", t_lr_end, "final learning rate");
  auto* ot_lambda = tr->add_option("--lambda-p", t_lambda, "perceptual loss weight");
  auto* ot_tau = tr->add_option("--tau", t_tau, "straight-through softmax temperature");
  auto* ot_every = tr->add_option("--eval-every", t_eval_every, "validation cadence in steps");
  auto* ot_mode = tr->add_option("--mode", t_mode, "full|baseline|no_fgps|no_scf");
  auto* ot_bl = tr->add_flag("--baseline", t_baseline, "ablation: conv features only");
  auto* ot_nf = tr->add_flag("--no-fgps", t_no_fgps, "ablation: drop the patch search");
  auto* ot_ns = tr->add_flag("--no-scf", t_no_scf, "ablation: drop the fusion attention");
  ot_mode->excludes(ot_bl)->excludes(ot_nf)->excludes(ot_ns);
  ot_bl->excludes(ot_nf)->excludes(ot_ns);
  ot_nf->excludes(ot_ns);

  // ---- fuse ----
  auto* fu = app.add_subcommand("fuse", "fuse three LDR frames with a trained model");
  std::string f_checkpoint, f_out;
  std::vector<std::string> f_ldr;
  std::vector<double> f_evs = {-2.0, 0.0, 2.0};
  bool f_dump = false;
  fu->add_option("--checkpoint", f_checkpoint, "checkpoint directory")->required();
  fu->add_option("--ldr", f_ldr, "short, reference, long frame (.ppm/.pfm/.ten)")
      ->expected(3)
      ->required();
  fu->add_option("--evs", f_evs, "three exposure values (default -2 0 2)")->expected(3);
  fu->add_option("--out", f_out, "output prefix (<out>.pfm, <out>_mu.ppm)")->required();
  fu->add_flag("--dump-posmaps", f_dump, "also write position-map heatmaps");

  // ---- eval ----
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
  std::string e_checkpoint, e_data, e_split = "val", e_out;
  ev->add_option("--checkpoint", e_checkpoint, "checkpoint directory")->required();
  ev->add_option("--data", e_data, "dataset directory")->required();
  ev->add_option("--split", e_split, "train or val (default val)");
  ev->add_option("--out", e_out, "report CSV path (default: stdout)");

  // ---- check ----
  auto* ck = app.add_subcommand("check", "run the verification suites");
  std::string c_suite = "all";
  ck->add_option("suite", c_suite, "grad|oracle|attn|all (default all)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      RunConfig rc = base_config(g_config);
      overlay(og_size, rc.scene.height, g_size);
      overlay(og_size, rc.scene.width, g_size);
      overlay(og_h, rc.scene.height, g_height);
      overlay(og_w, rc.scene.width, g_width);
      overlay(og_train, rc.n_train, g_train);
      overlay(og_val, rc.n_val, g_val);
      overlay(og_obj, rc.scene.n_objects, g_objects);
      overlay(og_mot, rc.scene.motion_px, g_motion);
      overlay(og_snap, rc.scene.motion_snap, g_snap);
      overlay(og_dr, rc.scene.dynamic_range, g_dr);
      overlay(og_seed, rc.scene.seed, g_seed);
      overlay(og_gamma, rc.scene.gamma, g_gamma);
      overlay(og_bits, rc.scene.bits, g_bits);
      overlay(og_tex, rc.scene.object_texture, g_obj_tex);
      if (og_evs->count())
        for (int i = 0; i < 3; ++i)
          rc.scene.evs[static_cast<std::size_t>(i)].ev = g_evs[static_cast<std::size_t>(i)];
      return cmd_gen(rc, g_out);
    }
    if (*tr) {
      RunConfig rc = base_config(t_config);
      overlay(ot_steps, rc.train.steps, t_steps);
      overlay(ot_crop, rc.train.crop, t_crop);
      overlay(ot_seed, rc.train.seed, t_seed);
      overlay(ot_lr0, rc.train.lr0, t_lr0);
      overlay(ot_lrend, rc.train.lr_end, t_lr_end);
      overlay(ot_lambda, rc.train.lambda_p, t_lambda);
      overlay(ot_tau, rc.model.tau, t_tau);
      overlay(ot_every, rc.train.eval_every, t_eval_every);
      if (ot_mode->count()) rc.model.mode = mode_from_string(t_mode);
      if (t_baseline) rc.model.mode = Mode::baseline;
      if (t_no_fgps) rc.model.mode = Mode::no_fgps;
      if (t_no_scf) rc.model.mode = Mode::no_scf;
      return cmd_train(rc, t_data, t_out);
    }
    if (*fu) return cmd_fuse(f_checkpoint, f_ldr, f_evs, f_out, f_dump);
    if (*ev) return cmd_eval(e_checkpoint, e_data, e_split, e_out);
    if (*ck) return cmd_check(c_suite);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
