#pragma once

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "ift/radiometry.hpp"
#include "ift/tensor.hpp"

namespace ift {

inline constexpr double kPsnrCap = 100.0;  // dB reported for (near-)zero MSE

template <typename S>
double psnr(const Tensor<S>& a, const Tensor<S>& b, double peak = 1.0) {
  require(a.shape() == b.shape(), "psnr: shape mismatch " + shape_str(a.shape()) + " vs " +
                                      shape_str(b.shape()));
  require(peak > 0, "psnr: peak must be positive");
  double mse = 0.0;
  for (index_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    mse += d * d;
  }
  mse /= static_cast<double>(a.numel());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

// PSNR between mu-law tonemapped radiance images.
template <typename S>
double psnr_mu(const Tensor<S>& o, const Tensor<S>& gt, double mu = 5000.0) {
  typename Graph<S>::Pause pause;  // plain eval, never recorded
  return psnr(mu_law(o, mu, true), mu_law(gt, mu, true), 1.0);
}

template <typename S>
double psnr_l(const Tensor<S>& o, const Tensor<S>& gt) {
  return psnr(o, gt, 1.0);
}

namespace detail {

inline std::vector<double> gaussian_kernel(int size, double sigma) {
  std::vector<double> k(static_cast<std::size_t>(size));
  const int c = size / 2;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    const double d = i - c;
    k[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += k[static_cast<std::size_t>(i)];
  }
  for (auto& v : k) v /= sum;
  return k;
}

// Separable Gaussian blur, valid region only: [H,W] -> [H-size+1, W-size+1].
inline void blur_valid(const std::vector<double>& img, index_t H, index_t W,
                       const std::vector<double>& k, std::vector<double>& out) {
  const index_t size = static_cast<index_t>(k.size());
  const index_t Wv = W - size + 1, Hv = H - size + 1;
  std::vector<double> tmp(static_cast<std::size_t>(H * Wv));
  for (index_t y = 0; y < H; ++y)
    for (index_t x = 0; x < Wv; ++x) {
      double acc = 0.0;
      for (index_t i = 0; i < size; ++i)
        acc += k[static_cast<std::size_t>(i)] * img[static_cast<std::size_t>(y * W + x + i)];
      tmp[static_cast<std::size_t>(y * Wv + x)] = acc;
    }
  out.assign(static_cast<std::size_t>(Hv * Wv), 0.0);
  for (index_t y = 0; y < Hv; ++y)
    for (index_t x = 0; x < Wv; ++x) {
      double acc = 0.0;
      for (index_t i = 0; i < size; ++i)
        acc += k[static_cast<std::size_t>(i)] * tmp[static_cast<std::size_t>((y + i) * Wv + x)];
      out[static_cast<std::size_t>(y * Wv + x)] = acc;
    }
}

}  // namespace detail

// Mean local SSIM, 11x11 Gaussian window sigma 1.5, valid region, dynamic
// range 1; channels averaged for [C,H,W] inputs.
template <typename S>
double ssim(const Tensor<S>& a, const Tensor<S>& b) {
  require(a.shape() == b.shape(), "ssim: shape mismatch");
  require(a.rank() == 2 || a.rank() == 3, "ssim: image must be [H,W] or [C,H,W]");
  const index_t C = a.rank() == 3 ? a.dim(0) : 1;
  const index_t H = a.dim(-2), W = a.dim(-1);
  const int size = 11;
  const double sigma = 1.5, K1 = 0.01, K2 = 0.03, L = 1.0;
  require(H >= size && W >= size, "ssim: image smaller than the 11x11 window");
  const double C1 = (K1 * L) * (K1 * L), C2 = (K2 * L) * (K2 * L);
  const auto kern = detail::gaussian_kernel(size, sigma);

  double total = 0.0;
  std::vector<double> xa(static_cast<std::size_t>(H * W)), xb(xa), aa(xa), bb(xa), ab(xa);
  std::vector<double> mu_a, mu_b, m_aa, m_bb, m_ab;
  for (index_t c = 0; c < C; ++c) {
    const S* pa = a.data() + c * H * W;
    const S* pb = b.data() + c * H * W;
    for (index_t i = 0; i < H * W; ++i) {
      const double va = static_cast<double>(pa[i]), vb = static_cast<double>(pb[i]);
      xa[static_cast<std::size_t>(i)] = va;
      xb[static_cast<std::size_t>(i)] = vb;
      aa[static_cast<std::size_t>(i)] = va * va;
      bb[static_cast<std::size_t>(i)] = vb * vb;
      ab[static_cast<std::size_t>(i)] = va * vb;
    }
    detail::blur_valid(xa, H, W, kern, mu_a);
    detail::blur_valid(xb, H, W, kern, mu_b);
    detail::blur_valid(aa, H, W, kern, m_aa);
    detail::blur_valid(bb, H, W, kern, m_bb);
    detail::blur_valid(ab, H, W, kern, m_ab);
    double acc = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
      const double ma = mu_a[i], mb = mu_b[i];
      const double va = m_aa[i] - ma * ma;
      const double vb = m_bb[i] - mb * mb;
      const double cov = m_ab[i] - ma * mb;
      acc += ((2 * ma * mb + C1) * (2 * cov + C2)) /
             ((ma * ma + mb * mb + C1) * (va + vb + C2));
    }
    total += acc / static_cast<double>(mu_a.size());
  }
  return total / static_cast<double>(C);
}

// SSIM of mu-law tonemapped radiance images.
template <typename S>
double ssim_mu(const Tensor<S>& o, const Tensor<S>& gt, double mu = 5000.0) {
  typename Graph<S>::Pause pause;
  return ssim(mu_law(o, mu, true), mu_law(gt, mu, true));
}

struct EvalRow {
  std::string name;
  double psnr_mu = 0.0;
  double psnr_l = 0.0;
  double ssim_mu = 0.0;
  double naive_psnr_mu = 0.0;  // triangle-merge baseline on the same sample
};

// Per-sample quality table plus arithmetic means.
struct EvalReport {
  std::vector<EvalRow> rows;

  EvalRow means() const {
    require(!rows.empty(), "eval report: no rows");
    EvalRow m;
    m.name = "mean";
    for (const auto& r : rows) {
      m.psnr_mu += r.psnr_mu;
      m.psnr_l += r.psnr_l;
      m.ssim_mu += r.ssim_mu;
      m.naive_psnr_mu += r.naive_psnr_mu;
    }
    const double n = static_cast<double>(rows.size());
    m.psnr_mu /= n;
    m.psnr_l /= n;
    m.ssim_mu /= n;
    m.naive_psnr_mu /= n;
    return m;
  }

  void write_csv(std::ostream& os) const {
    os << "sample,psnr_mu,psnr_l,ssim_mu,naive_psnr_mu\n";
    char buf[192];
    auto line = [&](const EvalRow& r) {
      std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.8f,%.6f\n", r.name.c_str(), r.psnr_mu,
                    r.psnr_l, r.ssim_mu, r.naive_psnr_mu);
      os << buf;
    };
    for (const auto& r : rows) line(r);
    line(means());
  }
};

}  // namespace ift
