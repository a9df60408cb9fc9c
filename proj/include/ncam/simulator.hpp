#pragma once

// Synthetic forward imaging: ground-truth irradiance scenes rendered into
// multi-focus / multi-exposure LDR stacks with known PSF, CRF and exposure.

#include "ncam/io/formats.hpp"
#include "ncam/io/image.hpp"
#include "ncam/io/manifest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace ncam::sim {

enum class Pattern { checkerboard, radial, value_noise };
enum class Psf { none, disk, gaussian };
enum class Crf { gamma, linear_clip };

struct RegionMask {
  enum class Kind { all, rect, circle, halfplane } kind = Kind::all;
  // rect: [x0, x1) x [y0, y1); circle: center (x0, y0), radius r;
  // halfplane: x >= x0. Pixel units.
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0, r = 0;

  bool contains(int x, int y) const {
    switch (kind) {
      case Kind::all: return true;
      case Kind::rect: return x >= x0 && x < x1 && y >= y0 && y < y1;
      case Kind::circle: return (x - x0) * (x - x0) + (y - y0) * (y - y0) <= r * r;
      case Kind::halfplane: return x >= x0;
    }
    return false;
  }
};

struct DepthPlane {
  RegionMask mask;
  double depth = 1.0;
};

struct SceneSpec {
  int width = 128;
  int height = 128;
  Pattern pattern = Pattern::value_noise;
  double span_ev = 8.0;    // log2(max / min) irradiance
  double log2_max = 0.0;   // brightest irradiance is 2^log2_max
  double cell = 16.0;      // checker cell / coarsest noise cell, pixels
  int octaves = 3;
  bool colored = true;     // independent per-channel variation (noise only)
  std::vector<DepthPlane> planes{DepthPlane{}};  // later planes override earlier ones

  void validate(double k_log = 8.0) const {
    if (width < 1 || height < 1) throw std::invalid_argument("SceneSpec: dims must be >= 1");
    if (!(span_ev >= 0.0) || span_ev > 2.0 * k_log) throw std::invalid_argument("SceneSpec: span must lie in [0, 2 k_log]");
    if (!(cell > 0.0) || octaves < 1) throw std::invalid_argument("SceneSpec: cell must be > 0 and octaves >= 1");
    if (planes.empty()) throw std::invalid_argument("SceneSpec: need at least one depth plane");
    for (const auto& p : planes) {
      if (!(p.depth > 0.0)) throw std::invalid_argument("SceneSpec: depths must be positive");
    }
  }
};

struct CaptureSpec {
  double ev = 0.0;
  double focus_distance = 1.0;
  Psf psf = Psf::none;
  double blur_gain = 0.0;   // radius (or sigma) = gain * |1/d - 1/d_focus| pixels
  double shift_x = 0.0;     // misalignment, pixels
  double shift_y = 0.0;
  int bits = 8;
  Crf crf = Crf::gamma;
  double gamma = 2.2;
  std::string focus_tag;

  void validate() const {
    if (!std::isfinite(ev)) throw std::invalid_argument("CaptureSpec: ev must be finite");
    if (!(focus_distance > 0.0)) throw std::invalid_argument("CaptureSpec: focus distance must be positive");
    if (!(blur_gain >= 0.0)) throw std::invalid_argument("CaptureSpec: blur gain must be >= 0");
    if (bits != 8) throw std::invalid_argument("CaptureSpec: only 8-bit quantization is supported");
    if (!(gamma > 0.0)) throw std::invalid_argument("CaptureSpec: gamma must be positive");
  }
};

struct GroundTruth {
  ImageF irradiance;
  std::vector<float> depth;      // per pixel
  std::vector<int> plane;        // per pixel plane index
};

// --- scene ------------------------------------------------------------------

namespace detail {

/// Smooth lattice noise in [0, 1].
class ValueNoise {
 public:
  ValueNoise(int width, int height, double cell, std::mt19937_64& rng)
      : cell_(cell), nx_(static_cast<int>(std::ceil(width / cell)) + 2), ny_(static_cast<int>(std::ceil(height / cell)) + 2) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    lattice_.resize(static_cast<std::size_t>(nx_) * ny_);
    for (double& v : lattice_) v = u(rng);
  }

  double operator()(double x, double y) const {
    const double fx = x / cell_;
    const double fy = y / cell_;
    const int ix = static_cast<int>(std::floor(fx));
    const int iy = static_cast<int>(std::floor(fy));
    const double tx = smooth(fx - ix);
    const double ty = smooth(fy - iy);
    const double a = at(ix, iy), b = at(ix + 1, iy), c = at(ix, iy + 1), d = at(ix + 1, iy + 1);
    return (a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty;
  }

 private:
  static double smooth(double t) { return t * t * (3.0 - 2.0 * t); }
  double at(int x, int y) const {
    x = std::clamp(x, 0, nx_ - 1);
    y = std::clamp(y, 0, ny_ - 1);
    return lattice_[static_cast<std::size_t>(y) * nx_ + x];
  }

  double cell_;
  int nx_, ny_;
  std::vector<double> lattice_;
};

inline std::vector<double> fractal_noise(int w, int h, double cell, int octaves, std::mt19937_64& rng) {
  std::vector<double> out(static_cast<std::size_t>(w) * h, 0.0);
  double amp = 1.0;
  double c = cell;
  for (int o = 0; o < octaves; ++o) {
    const ValueNoise n(w, h, c, rng);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) out[static_cast<std::size_t>(y) * w + x] += amp * n(x + 0.5, y + 0.5);
    }
    amp *= 0.5;
    c = std::max(1.0, c * 0.5);
  }
  return out;
}

inline void normalize01(std::vector<double>& v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double a = *lo, b = *hi;
  for (double& x : v) x = b > a ? (x - a) / (b - a) : 1.0;
}

}  // namespace detail

inline GroundTruth make_scene(const SceneSpec& spec, std::uint64_t seed) {
  spec.validate();
  const int W = spec.width, H = spec.height;
  std::mt19937_64 rng(seed);
  // Per-pixel level in [0, 1] per channel; irradiance = 2^(log2_max - span (1 - level)).
  std::array<std::vector<double>, 3> level;
  switch (spec.pattern) {
    case Pattern::checkerboard: {
      std::vector<double> v(static_cast<std::size_t>(W) * H);
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
          const int cx = static_cast<int>(std::floor(x / spec.cell));
          const int cy = static_cast<int>(std::floor(y / spec.cell));
          v[static_cast<std::size_t>(y) * W + x] = ((cx + cy) % 2 == 0) ? 1.0 : 0.0;
        }
      }
      level = {v, v, v};
      break;
    }
    case Pattern::radial: {
      std::vector<double> v(static_cast<std::size_t>(W) * H);
      const double cx = (W - 1) / 2.0, cy = (H - 1) / 2.0;
      const double rmax = std::max(1e-9, std::hypot(cx, cy));
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) v[static_cast<std::size_t>(y) * W + x] = 1.0 - std::hypot(x - cx, y - cy) / rmax;
      }
      level = {v, v, v};
      break;
    }
    case Pattern::value_noise: {
      std::vector<double> base = detail::fractal_noise(W, H, spec.cell, spec.octaves, rng);
      for (int c = 0; c < 3; ++c) {
        std::vector<double> v = base;
        if (spec.colored) {
          const std::vector<double> tint = detail::fractal_noise(W, H, spec.cell, spec.octaves, rng);
          for (std::size_t k = 0; k < v.size(); ++k) v[k] = 0.75 * v[k] + 0.25 * tint[k];
        }
        detail::normalize01(v);
        level[c] = std::move(v);
      }
      break;
    }
  }

  GroundTruth gt;
  gt.irradiance = ImageF(W, H, 3);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * W + x;
      for (int c = 0; c < 3; ++c) {
        gt.irradiance.at(x, y, c) = static_cast<float>(std::exp2(spec.log2_max - spec.span_ev * (1.0 - level[c][p])));
      }
    }
  }
  gt.depth.assign(static_cast<std::size_t>(W) * H, 0.f);
  gt.plane.assign(static_cast<std::size_t>(W) * H, -1);
  for (std::size_t k = 0; k < spec.planes.size(); ++k) {
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        if (spec.planes[k].mask.contains(x, y)) {
          gt.depth[static_cast<std::size_t>(y) * W + x] = static_cast<float>(spec.planes[k].depth);
          gt.plane[static_cast<std::size_t>(y) * W + x] = static_cast<int>(k);
        }
      }
    }
  }
  for (float d : gt.depth) {
    if (!(d > 0.f)) throw std::invalid_argument("make_scene: depth planes do not cover every pixel");
  }
  return gt;
}

// --- defocus ----------------------------------------------------------------

/// Blur radius (or sigma) in pixels for an object at `depth` with the lens
/// focused at `focus`, rounded to a quarter pixel.
inline double blur_radius(double gain, double depth, double focus) {
  const double r = gain * std::abs(1.0 / depth - 1.0 / focus);
  return std::round(r * 4.0) / 4.0;
}

/// Normalized kernel of side 2 * half + 1, row-major.
struct Kernel {
  int half = 0;
  std::vector<double> w;
};

/// Area-weighted disk: each tap is the fraction of a 16 x 16 subsample grid
/// over that pixel lying within `radius` of the center.
inline Kernel disk_kernel(double radius) {
  Kernel k;
  if (radius <= 0.0) {
    k.w = {1.0};
    return k;
  }
  k.half = static_cast<int>(std::ceil(radius + 0.5));
  const int side = 2 * k.half + 1;
  k.w.assign(static_cast<std::size_t>(side) * side, 0.0);
  constexpr int kSub = 16;
  double total = 0.0;
  for (int j = -k.half; j <= k.half; ++j) {
    for (int i = -k.half; i <= k.half; ++i) {
      int inside = 0;
      for (int sy = 0; sy < kSub; ++sy) {
        for (int sx = 0; sx < kSub; ++sx) {
          const double x = i - 0.5 + (sx + 0.5) / kSub;
          const double y = j - 0.5 + (sy + 0.5) / kSub;
          if (x * x + y * y <= radius * radius) ++inside;
        }
      }
      const double v = static_cast<double>(inside) / (kSub * kSub);
      k.w[static_cast<std::size_t>(j + k.half) * side + (i + k.half)] = v;
      total += v;
    }
  }
  for (double& v : k.w) v /= total;
  return k;
}

inline Kernel gaussian_kernel(double sigma) {
  Kernel k;
  if (sigma <= 0.0) {
    k.w = {1.0};
    return k;
  }
  k.half = static_cast<int>(std::ceil(3.0 * sigma));
  const int side = 2 * k.half + 1;
  k.w.resize(static_cast<std::size_t>(side) * side);
  double total = 0.0;
  for (int j = -k.half; j <= k.half; ++j) {
    for (int i = -k.half; i <= k.half; ++i) {
      const double v = std::exp(-(i * i + j * j) / (2.0 * sigma * sigma));
      k.w[static_cast<std::size_t>(j + k.half) * side + (i + k.half)] = v;
      total += v;
    }
  }
  for (double& v : k.w) v /= total;
  return k;
}

/// 2D convolution with edge replication.
inline ImageF convolve(const ImageF& img, const Kernel& k) {
  if (k.half == 0) return img;
  ImageF out(img.width, img.height, img.channels);
  const int side = 2 * k.half + 1;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        double s = 0.0;
        for (int j = -k.half; j <= k.half; ++j) {
          const int yy = std::clamp(y + j, 0, img.height - 1);
          for (int i = -k.half; i <= k.half; ++i) {
            const int xx = std::clamp(x + i, 0, img.width - 1);
            s += k.w[static_cast<std::size_t>(j + k.half) * side + (i + k.half)] * img.at(xx, yy, c);
          }
        }
        out.at(x, y, c) = static_cast<float>(s);
      }
    }
  }
  return out;
}

/// Blurs each depth plane with its own kernel in the linear domain and
/// composites by the (hard) plane masks.
inline ImageF apply_defocus(const ImageF& irradiance, const std::vector<float>& depth, double focus_distance,
                            double gain, Psf psf = Psf::disk) {
  if (depth.size() != irradiance.pixels()) throw std::invalid_argument("apply_defocus: depth map size mismatch");
  if (!(focus_distance > 0.0)) throw std::invalid_argument("apply_defocus: focus distance must be positive");
  if (psf == Psf::none || gain == 0.0) return irradiance;
  std::vector<float> levels(depth.begin(), depth.end());
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  ImageF out = irradiance;
  for (float d : levels) {
    if (!(d > 0.f)) throw std::invalid_argument("apply_defocus: depths must be positive");
    const double r = blur_radius(gain, d, focus_distance);
    if (r == 0.0) continue;
    const ImageF blurred = convolve(irradiance, psf == Psf::disk ? disk_kernel(r) : gaussian_kernel(r));
    for (std::size_t p = 0; p < depth.size(); ++p) {
      if (depth[p] != d) continue;
      for (int c = 0; c < irradiance.channels; ++c) out.data[p * irradiance.channels + c] = blurred.data[p * irradiance.channels + c];
    }
  }
  return out;
}

/// I'(x) = I(x - shift), bilinear with edge clamping.
inline ImageF translate(const ImageF& img, double sx, double sy) {
  if (sx == 0.0 && sy == 0.0) return img;
  ImageF out(img.width, img.height, img.channels);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const double fx = std::clamp(x - sx, 0.0, img.width - 1.0);
      const double fy = std::clamp(y - sy, 0.0, img.height - 1.0);
      const int x0 = static_cast<int>(std::floor(fx)), y0 = static_cast<int>(std::floor(fy));
      const int x1 = std::min(x0 + 1, img.width - 1), y1 = std::min(y0 + 1, img.height - 1);
      const double tx = fx - x0, ty = fy - y0;
      for (int c = 0; c < img.channels; ++c) {
        const double v = (img.at(x0, y0, c) * (1 - tx) + img.at(x1, y0, c) * tx) * (1 - ty) +
                         (img.at(x0, y1, c) * (1 - tx) + img.at(x1, y1, c) * tx) * ty;
        out.at(x, y, c) = static_cast<float>(v);
      }
    }
  }
  return out;
}

template <class V>
std::vector<V> translate_map(const std::vector<V>& map, int w, int h, double sx, double sy) {
  if (sx == 0.0 && sy == 0.0) return map;
  std::vector<V> out(map.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int xx = std::clamp(static_cast<int>(std::lround(x - sx)), 0, w - 1);
      const int yy = std::clamp(static_cast<int>(std::lround(y - sy)), 0, h - 1);
      out[static_cast<std::size_t>(y) * w + x] = map[static_cast<std::size_t>(yy) * w + xx];
    }
  }
  return out;
}

// --- response -----------------------------------------------------------------

inline double apply_crf(double r, double ev, Crf crf = Crf::gamma, double gamma = 2.2) {
  if (!(r > 0.0)) throw std::invalid_argument("apply_crf: irradiance must be positive");
  const double x = r * std::exp2(ev);
  const double v = crf == Crf::gamma ? std::pow(x, 1.0 / gamma) : x;
  return std::clamp(v, 0.0, 1.0);
}

inline ImageF apply_crf(const ImageF& irradiance, double ev, Crf crf = Crf::gamma, double gamma = 2.2) {
  ImageF out(irradiance.width, irradiance.height, irradiance.channels);
  for (std::size_t k = 0; k < irradiance.data.size(); ++k) {
    out.data[k] = static_cast<float>(apply_crf(irradiance.data[k], ev, crf, gamma));
  }
  return out;
}

// --- dataset ------------------------------------------------------------------

struct Capture {
  ImageF sharp;     // translated, unblurred irradiance (ground truth for this frame)
  ImageF blurred;   // after defocus and translation
  Image8 ldr;
};

struct Dataset {
  GroundTruth scene;
  std::vector<Capture> captures;
  std::vector<FlowField> flows;  // flows[k]: frame k -> k + 1
  SceneManifest manifest;
};

/// make_scene -> apply_defocus -> translate -> apply_crf -> quantize per
/// capture. Translations become constant flow fields between neighbours.
inline Dataset simulate(const SceneSpec& scene, const std::vector<CaptureSpec>& captures, std::uint64_t seed) {
  if (captures.empty()) throw std::invalid_argument("simulate: need at least one capture");
  for (const auto& c : captures) c.validate();
  Dataset ds;
  ds.scene = make_scene(scene, seed);
  ds.manifest.width = scene.width;
  ds.manifest.height = scene.height;
  for (std::size_t k = 0; k < captures.size(); ++k) {
    const CaptureSpec& c = captures[k];
    Capture cap;
    const ImageF blurred = apply_defocus(ds.scene.irradiance, ds.scene.depth, c.focus_distance, c.blur_gain, c.psf);
    cap.blurred = translate(blurred, c.shift_x, c.shift_y);
    cap.sharp = translate(ds.scene.irradiance, c.shift_x, c.shift_y);
    cap.ldr = quantize(apply_crf(cap.blurred, c.ev, c.crf, c.gamma));
    ds.captures.push_back(std::move(cap));

    char name[64];
    ManifestEntry e;
    std::snprintf(name, sizeof(name), "ldr_%03zu.ppm", k);
    e.path = name;
    e.ev = c.ev;
    e.focus = c.focus_tag;
    std::snprintf(name, sizeof(name), "gt_hdr_%03zu.pfm", k);
    e.gt_hdr = name;
    if (k + 1 < captures.size()) {
      std::snprintf(name, sizeof(name), "flow_%03zu.flo", k);
      e.flow_to_next = name;
      ds.flows.emplace_back(scene.width, scene.height, static_cast<float>(captures[k + 1].shift_x - c.shift_x),
                            static_cast<float>(captures[k + 1].shift_y - c.shift_y));
    }
    ds.manifest.images.push_back(std::move(e));
  }
  return ds;
}

/// Writes the simulated stack, per-frame ground truth, flows and manifest.
inline Dataset gen_dataset(const SceneSpec& scene, const std::vector<CaptureSpec>& captures,
                           const std::filesystem::path& out_dir, std::uint64_t seed) {
  Dataset ds = simulate(scene, captures, seed);
  std::filesystem::create_directories(out_dir);
  ds.manifest.base_dir = out_dir;
  for (std::size_t k = 0; k < ds.captures.size(); ++k) {
    const ManifestEntry& e = ds.manifest.images[k];
    write_ldr(out_dir / e.path, ds.captures[k].ldr);
    write_pfm(out_dir / *e.gt_hdr, ds.captures[k].sharp);
    if (e.flow_to_next) write_flo(out_dir / *e.flow_to_next, ds.flows[k]);
  }
  write_manifest(out_dir / "manifest.json", ds.manifest);
  return ds;
}

}  // namespace ncam::sim
