#pragma once

#include "ncam/io/image.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

namespace ncam {

/// ln(1 + mu x) / ln(1 + mu) after clamping x to [0, 1].
inline double mu_law(double x, double mu = 5000.0) {
  const double c = std::clamp(x, 0.0, 1.0);
  return std::log1p(mu * c) / std::log1p(mu);
}

/// Optional per-pixel inclusion mask (width * height entries).
using PixelMask = std::vector<bool>;

namespace metrics_detail {

inline void require_same(const ImageF& a, const ImageF& b, const char* what) {
  if (!a.same_shape(b)) throw std::invalid_argument(std::string(what) + ": image dimensions differ");
  if (a.data.empty()) throw std::invalid_argument(std::string(what) + ": empty image");
}

inline void require_mask(const ImageF& a, const PixelMask* mask) {
  if (mask && mask->size() != a.pixels()) throw std::invalid_argument("mask size does not match image");
}

}  // namespace metrics_detail

inline double mse(const ImageF& a, const ImageF& b, const PixelMask* mask = nullptr) {
  metrics_detail::require_same(a, b, "mse");
  metrics_detail::require_mask(a, mask);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t p = 0; p < a.pixels(); ++p) {
    if (mask && !(*mask)[p]) continue;
    for (int c = 0; c < a.channels; ++c) {
      const double d = static_cast<double>(a.data[p * a.channels + c]) - b.data[p * a.channels + c];
      sum += d * d;
      ++n;
    }
  }
  if (n == 0) throw std::invalid_argument("mse: mask selects no pixels");
  return sum / static_cast<double>(n);
}

/// 10 log10(peak^2 / MSE); identical inputs give +infinity.
inline double psnr_from_mse(double mse_value, double peak = 1.0) {
  if (mse_value == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse_value);
}

inline double psnr(const ImageF& a, const ImageF& b, double peak = 1.0, const PixelMask* mask = nullptr) {
  return psnr_from_mse(mse(a, b, mask), peak);
}

inline std::vector<double> luma(const ImageF& img) {
  std::vector<double> out(img.pixels());
  for (std::size_t p = 0; p < img.pixels(); ++p) {
    if (img.channels == 1) {
      out[p] = img.data[p];
    } else {
      const float* px = &img.data[p * img.channels];
      out[p] = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
    }
  }
  return out;
}

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

/// Single-scale SSIM on luma with a Gaussian window, averaged over every
/// window that lies fully inside the image.
inline double ssim(const ImageF& a, const ImageF& b, const SsimOptions& opt = {}) {
  metrics_detail::require_same(a, b, "ssim");
  const int w = opt.window;
  if (a.width < w || a.height < w) throw std::invalid_argument("ssim: image smaller than the window");

  std::vector<double> g(w);
  double gsum = 0.0;
  for (int k = 0; k < w; ++k) {
    const double d = k - (w - 1) / 2.0;
    g[k] = std::exp(-d * d / (2.0 * opt.sigma * opt.sigma));
    gsum += g[k];
  }
  for (double& v : g) v /= gsum;

  const std::vector<double> x = luma(a);
  const std::vector<double> y = luma(b);
  const int W = a.width;
  const int H = a.height;
  const int ow = W - w + 1;
  const int oh = H - w + 1;

  // Separable valid-mode filtering of x, y, xx, yy, xy.
  auto filter = [&](auto&& value) {
    std::vector<double> rows(static_cast<std::size_t>(H) * ow);
    for (int r = 0; r < H; ++r) {
      for (int c = 0; c < ow; ++c) {
        double s = 0.0;
        for (int k = 0; k < w; ++k) s += g[k] * value(static_cast<std::size_t>(r) * W + c + k);
        rows[static_cast<std::size_t>(r) * ow + c] = s;
      }
    }
    std::vector<double> out(static_cast<std::size_t>(oh) * ow);
    for (int r = 0; r < oh; ++r) {
      for (int c = 0; c < ow; ++c) {
        double s = 0.0;
        for (int k = 0; k < w; ++k) s += g[k] * rows[static_cast<std::size_t>(r + k) * ow + c];
        out[static_cast<std::size_t>(r) * ow + c] = s;
      }
    }
    return out;
  };
  const auto mx = filter([&](std::size_t i) { return x[i]; });
  const auto my = filter([&](std::size_t i) { return y[i]; });
  const auto sxx = filter([&](std::size_t i) { return x[i] * x[i]; });
  const auto syy = filter([&](std::size_t i) { return y[i] * y[i]; });
  const auto sxy = filter([&](std::size_t i) { return x[i] * y[i]; });

  const double c1 = (opt.k1 * opt.dynamic_range) * (opt.k1 * opt.dynamic_range);
  const double c2 = (opt.k2 * opt.dynamic_range) * (opt.k2 * opt.dynamic_range);
  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i];
    const double vy = syy[i] - my[i] * my[i];
    const double cov = sxy[i] - mx[i] * my[i];
    total += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) / ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mx.size());
}

/// Per-channel least-squares scale: argmin_s sum (s pred - gt)^2 over the mask.
inline std::array<double, 3> channel_scales(const ImageF& pred, const ImageF& gt, const PixelMask* mask = nullptr) {
  metrics_detail::require_same(pred, gt, "channel_scales");
  metrics_detail::require_mask(pred, mask);
  if (pred.channels != 3) throw std::invalid_argument("channel_scales: RGB images required");
  std::array<double, 3> num{}, den{};
  for (std::size_t p = 0; p < pred.pixels(); ++p) {
    if (mask && !(*mask)[p]) continue;
    for (int c = 0; c < 3; ++c) {
      const double pv = pred.data[p * 3 + c];
      num[c] += pv * gt.data[p * 3 + c];
      den[c] += pv * pv;
    }
  }
  std::array<double, 3> s{};
  for (int c = 0; c < 3; ++c) s[c] = den[c] > 0.0 ? num[c] / den[c] : 1.0;
  return s;
}

/// HDR comparison in the mu-law domain: per-channel least-squares alignment
/// of pred to gt, both divided by the gt maximum and clamped to [0, 1],
/// mu-law mapped, then PSNR with peak 1.
inline double psnr_mu(const ImageF& pred, const ImageF& gt, const PixelMask* mask = nullptr, double mu = 5000.0) {
  metrics_detail::require_same(pred, gt, "psnr_mu");
  metrics_detail::require_mask(pred, mask);
  for (float v : gt.data) {
    if (!(v > 0.0f)) throw std::invalid_argument("psnr_mu: ground truth must be positive");
  }
  for (float v : pred.data) {
    if (!(v > 0.0f)) throw std::invalid_argument("psnr_mu: prediction must be positive");
  }
  const auto s = channel_scales(pred, gt, mask);
  double peak = 0.0;
  for (std::size_t p = 0; p < gt.pixels(); ++p) {
    if (mask && !(*mask)[p]) continue;
    for (int c = 0; c < 3; ++c) peak = std::max(peak, static_cast<double>(gt.data[p * 3 + c]));
  }
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t p = 0; p < gt.pixels(); ++p) {
    if (mask && !(*mask)[p]) continue;
    for (int c = 0; c < 3; ++c) {
      const double a = mu_law(s[c] * pred.data[p * 3 + c] / peak, mu);
      const double b = mu_law(gt.data[p * 3 + c] / peak, mu);
      sum += (a - b) * (a - b);
      ++n;
    }
  }
  if (n == 0) throw std::invalid_argument("psnr_mu: mask selects no pixels");
  return psnr_from_mse(sum / static_cast<double>(n));
}

}  // namespace ncam
