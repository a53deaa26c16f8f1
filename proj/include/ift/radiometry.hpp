#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "ift/ops.hpp"
#include "ift/tensor.hpp"

namespace ift {

// Exposure relative to the reference frame, in stops.
struct ExposureValue {
  double ev = 0.0;
  double t() const { return std::exp2(ev); }
};

// LDR frame -> shared linear radiance domain: clip(ldr)^gamma / 2^ev,
// clipped to [0,1]. Input preparation; not recorded on any graph.
template <typename S>
Tensor<S> gamma_correct(const Tensor<S>& ldr, ExposureValue ev, double gamma = 2.2) {
  require(gamma > 0, "gamma_correct: gamma must be positive");
  Tensor<S> out(ldr.shape());
  const S* p = ldr.data();
  S* o = out.data();
  const double inv_t = 1.0 / ev.t();
  for (index_t i = 0; i < ldr.numel(); ++i) {
    const double v = std::clamp(static_cast<double>(p[i]), 0.0, 1.0);
    o[i] = static_cast<S>(std::clamp(std::pow(v, gamma) * inv_t, 0.0, 1.0));
  }
  return out;
}

// mu-law tonemap T(x) = log(1 + mu x)/log(1 + mu). Differentiable (runs
// through the op tape); strictly increasing, T(0)=0, T(1)=1.
template <typename S>
Tensor<S> mu_law(const Tensor<S>& x, double mu = 5000.0, bool clip = false) {
  require(mu > 0, "mu_law: mu must be positive");
  Tensor<S> in = x;
  if (clip) {
    in = x.detach();
    S* p = in.data();
    index_t clipped = 0;
    for (index_t i = 0; i < in.numel(); ++i) {
      const S c = std::clamp(p[i], S(0), S(1));
      clipped += c != p[i];
      p[i] = c;
    }
    if (clipped > 0)
      std::fprintf(stderr, "mu_law: clipped %lld out-of-range values\n",
                   static_cast<long long>(clipped));
  } else {
    for (index_t i = 0; i < x.numel(); ++i)
      require(x[i] >= S(0) && x[i] <= S(1), "mu_law: input outside [0,1]");
  }
  const S scale = static_cast<S>(1.0 / std::log1p(mu));
  return mul(log(add(mul(in, static_cast<S>(mu)), S(1))), scale);
}

// Camera simulation: exposes linear radiance at 2^ev, applies the inverse
// gamma curve and quantizes to the sensor bit depth.
template <typename S>
Tensor<S> render_exposure(const Tensor<S>& hdr, ExposureValue ev, double gamma = 2.2,
                          int bits = 16) {
  require(gamma > 0, "render_exposure: gamma must be positive");
  require(bits == 8 || bits == 16, "render_exposure: bit depth must be 8 or 16");
  const double levels = static_cast<double>((1 << bits) - 1);
  Tensor<S> out(hdr.shape());
  const S* p = hdr.data();
  S* o = out.data();
  const double t = ev.t();
  for (index_t i = 0; i < hdr.numel(); ++i) {
    const double exposed = std::clamp(static_cast<double>(p[i]) * t, 0.0, 1.0);
    const double curved = std::pow(exposed, 1.0 / gamma);
    o[i] = static_cast<S>(std::round(curved * levels) / levels);
  }
  return out;
}

}  // namespace ift
