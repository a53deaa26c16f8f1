#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "ift/metrics.hpp"
#include "ift/model.hpp"
#include "ift/radiometry.hpp"
#include "ift/scene.hpp"

namespace ift {

struct TrainConfig {
  double lr0 = 2e-4;
  double lr_end = 1e-6;
  double decay_power = 0.3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double lambda_p = 0.01;
  int steps = 2000;
  int crop = 64;
  std::uint64_t seed = 1;
  int eval_every = 250;
  double mu = 5000.0;

  // Divisibility of crop against model dims is checked by RunConfig.
  void validate() const {
    require(lr0 > lr_end && lr_end > 0, "train config: need lr0 > lr_end > 0");
    require(steps > 0, "train config: steps must be positive");
    require(crop > 0, "train config: crop must be positive");
    require(eval_every > 0, "train config: eval_every must be positive");
  }
};

// Frozen random conv stack standing in for a pretrained backbone; all three
// layer outputs feed the perceptual distance. Weights never train.
template <typename S>
struct PerceptualExtractor {
  Conv2dLayer<S> c1, c2, c3;

  explicit PerceptualExtractor(std::uint64_t seed = 7777) {
    Rng rng(seed);
    c1 = Conv2dLayer<S>(3, 8, 3, 2, 1, rng);
    c2 = Conv2dLayer<S>(8, 16, 3, 2, 1, rng);
    c3 = Conv2dLayer<S>(16, 16, 3, 2, 1, rng);
  }

  std::vector<Tensor<S>> features(const Tensor<S>& x) const {  // x: [1,3,H,W]
    std::vector<Tensor<S>> out;
    out.push_back(elu(c1(x)));
    out.push_back(elu(c2(out[0])));
    out.push_back(elu(c3(out[1])));
    return out;
  }
};

// Mean absolute difference of the tonemapped images.
template <typename S>
Tensor<S> loss_l1_mu(const Tensor<S>& o, const Tensor<S>& gt, S mu = static_cast<S>(5000)) {
  return mean(abs(sub(mu_law(o, mu), mu_law(gt, mu))));
}

// Sum over layers of mean-abs feature differences, computed on the
// tonemapped images.
template <typename S>
Tensor<S> loss_perceptual(const Tensor<S>& o, const Tensor<S>& gt,
                          const PerceptualExtractor<S>& ext, S mu = static_cast<S>(5000)) {
  require(o.rank() == 3 && o.shape() == gt.shape(), "loss_perceptual: need matching [3,H,W]");
  auto img = [&](const Tensor<S>& t) {
    return reshape(mu_law(t, mu), {1, t.dim(0), t.dim(1), t.dim(2)});
  };
  auto fo = ext.features(img(o));
  auto fg = ext.features(img(gt));
  Tensor<S> total = mean(abs(sub(fo[0], fg[0])));
  for (std::size_t j = 1; j < fo.size(); ++j)
    total = add(total, mean(abs(sub(fo[j], fg[j]))));
  return total;
}

template <typename S>
Tensor<S> loss_total(const Tensor<S>& o, const Tensor<S>& gt, const TrainConfig& cfg,
                     const PerceptualExtractor<S>& ext) {
  Tensor<S> l1 = loss_l1_mu(o, gt, static_cast<S>(cfg.mu));
  if (cfg.lambda_p == 0.0) return l1;
  return add(l1, mul(loss_perceptual(o, gt, ext, static_cast<S>(cfg.mu)),
                     static_cast<S>(cfg.lambda_p)));
}

template <typename S>
struct AdamState {
  std::vector<Tensor<S>> m, v;
  index_t t = 0;

  AdamState() = default;
  explicit AdamState(ParamMap<S>& params) {
    for (auto& [name, p] : params) {
      (void)name;
      m.push_back(Tensor<S>::zeros(p.shape()));
      v.push_back(Tensor<S>::zeros(p.shape()));
    }
  }
};

// Standard bias-corrected Adam, applied in place.
template <typename S>
void adam_step(ParamMap<S>& params, AdamState<S>& st, double lr, const TrainConfig& cfg) {
  require(st.m.size() == params.size(), "adam: state/parameter count mismatch");
  ++st.t;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
  std::size_t i = 0;
  for (auto& [name, p] : params) {
    require(p.has_grad(), "adam: missing gradient for " + name);
    S* w = p.data();
    const S* g = p.grad();
    S* m = st.m[i].data();
    S* v = st.v[i].data();
    for (index_t k = 0; k < p.numel(); ++k) {
      const double gk = static_cast<double>(g[k]);
      const double mk = cfg.beta1 * static_cast<double>(m[k]) + (1.0 - cfg.beta1) * gk;
      const double vk = cfg.beta2 * static_cast<double>(v[k]) + (1.0 - cfg.beta2) * gk * gk;
      m[k] = static_cast<S>(mk);
      v[k] = static_cast<S>(vk);
      const double step = lr * (mk / bc1) / (std::sqrt(vk / bc2) + cfg.eps);
      w[k] = static_cast<S>(static_cast<double>(w[k]) - step);
    }
    ++i;
  }
}

// lr(t) = lr0 * (lr_end/lr0)^{(t/T)^power}; endpoints are exact.
inline double lr_schedule(index_t t, index_t T, const TrainConfig& cfg) {
  require(T > 0, "lr_schedule: T must be positive");
  require(t >= 0 && t <= T, "lr_schedule: t out of range");
  const double frac = static_cast<double>(t) / static_cast<double>(T);
  return cfg.lr0 * std::pow(cfg.lr_end / cfg.lr0, std::pow(frac, cfg.decay_power));
}

namespace detail {

// Applies one [3,H,W] -> [3,h,w] image transform to every frame, companion,
// and the ground truth of a sample.
template <typename S, typename Fn>
SceneSample<S> map_sample(const SceneSample<S>& s, Fn&& fn) {
  SceneSample<S> out;
  out.stack.evs = s.stack.evs;
  out.stack.I1 = fn(s.stack.I1);
  out.stack.I2 = fn(s.stack.I2);
  out.stack.I3 = fn(s.stack.I3);
  out.stack.G1 = fn(s.stack.G1);
  out.stack.G2 = fn(s.stack.G2);
  out.stack.G3 = fn(s.stack.G3);
  out.gt = fn(s.gt);
  return out;
}

}  // namespace detail

template <typename S>
SceneSample<S> crop_sample(const SceneSample<S>& s, index_t y0, index_t x0, index_t size) {
  const index_t H = s.stack.height(), W = s.stack.width();
  require(size > 0 && y0 >= 0 && x0 >= 0 && y0 + size <= H && x0 + size <= W,
          "crop_sample: window exceeds image");
  return detail::map_sample(s, [&](const Tensor<S>& img) {
    Tensor<S> out = Tensor<S>::zeros({3, size, size});
    for (index_t c = 0; c < 3; ++c)
      for (index_t y = 0; y < size; ++y)
        for (index_t x = 0; x < size; ++x)
          out[(c * size + y) * size + x] = img[(c * H + y0 + y) * W + x0 + x];
    return out;
  });
}

template <typename S>
SceneSample<S> flip_sample(const SceneSample<S>& s) {
  return detail::map_sample(s, [&](const Tensor<S>& img) {
    const index_t H = img.dim(1), W = img.dim(2);
    Tensor<S> out = Tensor<S>::zeros(img.shape());
    for (index_t c = 0; c < 3; ++c)
      for (index_t y = 0; y < H; ++y)
        for (index_t x = 0; x < W; ++x)
          out[(c * H + y) * W + x] = img[(c * H + y) * W + (W - 1 - x)];
    return out;
  });
}

// k quarter-turns counter-clockwise; square images only.
template <typename S>
SceneSample<S> rot90_sample(const SceneSample<S>& s, int k) {
  k = ((k % 4) + 4) % 4;
  if (k == 0) return detail::map_sample(s, [](const Tensor<S>& img) { return img.clone(); });
  require(s.stack.height() == s.stack.width(), "rot90_sample: image must be square");
  SceneSample<S> cur = s;
  for (int i = 0; i < k; ++i) {
    cur = detail::map_sample(cur, [&](const Tensor<S>& img) {
      const index_t n = img.dim(1);
      Tensor<S> out = Tensor<S>::zeros(img.shape());
      for (index_t c = 0; c < 3; ++c)
        for (index_t y = 0; y < n; ++y)
          for (index_t x = 0; x < n; ++x)
            out[(c * n + y) * n + x] = img[(c * n + x) * n + (n - 1 - y)];
      return out;
    });
  }
  return cur;
}

// Joint random crop / horizontal flip / quarter-turn applied to the whole
// sample so alignment between frames and ground truth is preserved.
template <typename S>
SceneSample<S> augment(const SceneSample<S>& s, index_t crop, Rng& rng) {
  const index_t H = s.stack.height(), W = s.stack.width();
  require(crop <= H && crop <= W, "augment: crop larger than image");
  const index_t y0 = rng.uniform_int(H - crop + 1);
  const index_t x0 = rng.uniform_int(W - crop + 1);
  SceneSample<S> out = crop_sample(s, y0, x0, crop);
  if (rng.coin()) out = flip_sample(out);
  return rot90_sample(out, static_cast<int>(rng.uniform_int(4)));
}

// Mean PSNR-mu of the model over a sample set (no recording).
template <typename S>
double eval_psnr_mu(const Model<S>& model, const std::vector<SceneSample<S>>& samples,
                    double mu = 5000.0) {
  require(!samples.empty(), "eval_psnr_mu: empty sample set");
  typename Graph<S>::Pause pause;
  double total = 0.0;
  for (const auto& s : samples) total += psnr_mu(model.forward(s.stack), s.gt, mu);
  return total / static_cast<double>(samples.size());
}

struct TrainRow {
  index_t step = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_psnr_mu = 0.0;
  bool has_val = false;
};

struct TrainResult {
  std::vector<double> loss_history;  // one entry per step
  std::vector<TrainRow> rows;
  double final_val_psnr_mu = 0.0;
};

inline void write_csv(std::ostream& os, const std::vector<TrainRow>& rows) {
  os << "step,lr,train_loss,val_psnr_mu\n";
  char buf[160];
  for (const auto& r : rows) {
    if (r.has_val)
      std::snprintf(buf, sizeof(buf), "%lld,%.8e,%.8e,%.6f\n", static_cast<long long>(r.step),
                    r.lr, r.train_loss, r.val_psnr_mu);
    else
      std::snprintf(buf, sizeof(buf), "%lld,%.8e,%.8e,\n", static_cast<long long>(r.step), r.lr,
                    r.train_loss);
    os << buf;
  }
}

// Single-sample steps drawn uniformly from the training set. Deterministic
// given cfg.seed. Aborts on a non-finite loss with the step in the message.
template <typename S>
TrainResult train(Model<S>& model, const std::vector<SceneSample<S>>& train_set,
                  const std::vector<SceneSample<S>>& val_set, const TrainConfig& cfg,
                  std::ostream* log = nullptr) {
  cfg.validate();
  require(!train_set.empty(), "train: empty training set");

  ParamMap<S> params = model.params();
  params.set_requires_grad(true);
  AdamState<S> st(params);
  PerceptualExtractor<S> ext;
  Rng rng(cfg.seed);
  TrainResult result;

  for (index_t step = 1; step <= cfg.steps; ++step) {
    const auto& pick = train_set[static_cast<std::size_t>(
        rng.uniform_int(static_cast<index_t>(train_set.size())))];
    SceneSample<S> sample = augment(pick, cfg.crop, rng);
    const double lr = cfg.steps == 1 ? cfg.lr0 : lr_schedule(step - 1, cfg.steps - 1, cfg);

    double loss_value = 0.0;
    {
      Graph<S> graph;
      typename Graph<S>::Activation act(&graph);
      params.zero_grad();
      Tensor<S> out;
      Tensor<S> loss;
      try {
        out = model.forward(sample.stack);
        loss = loss_total(out, sample.gt, cfg, ext);
      } catch (const Error& e) {
        throw Error("train: step " + std::to_string(step) + ": " + e.what());
      }
      loss_value = static_cast<double>(loss.item());
      require(std::isfinite(loss_value),
              "train: non-finite loss at step " + std::to_string(step));
      graph.backward(loss);
    }
    adam_step(params, st, lr, cfg);
    result.loss_history.push_back(loss_value);

    TrainRow row{step, lr, loss_value, 0.0, false};
    if (!val_set.empty() && (step % cfg.eval_every == 0 || step == cfg.steps)) {
      row.val_psnr_mu = eval_psnr_mu(model, val_set, cfg.mu);
      row.has_val = true;
      result.final_val_psnr_mu = row.val_psnr_mu;
      if (log)
        *log << "step " << step << "  lr " << lr << "  loss " << loss_value << "  val psnr-mu "
             << row.val_psnr_mu << "\n";
    }
    result.rows.push_back(row);
  }
  return result;
}

}  // namespace ift
