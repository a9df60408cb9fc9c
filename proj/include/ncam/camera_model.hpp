#pragma once

// Implicit camera: blur generator (offset network, weight network, patch
// blending in linear irradiance) and the per-channel tone mapper.
//
// Patch slots are numbered row-major: slot k = (dy + h) * n + (dx + h) with
// h = n / 2, dx, dy in [-h, h] pixels. The offset network emits 2 n^2 rows,
// (dx_k, dy_k) at rows (2k, 2k + 1), in pixel units. Batched patch samples are
// laid out sample-major: column b * n^2 + k.

#include "ncam/core/ops.hpp"
#include "ncam/model.hpp"
#include "ncam/scene_model.hpp"

#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace ncam {

struct ExposureMeta {
  int image = 0;
  ExposureMode mode = ExposureMode::known;
  double log2_dt = 0.0;
};

/// Everything that goes into one blurred pixel, for inspection and tests.
struct PatchBundle {
  int n = 3;
  PixelPosition center;
  std::vector<PixelPosition> base;                 // raw grid, may leave [-1, 1] at borders
  std::vector<std::array<double, 2>> offsets;      // pixels, norm <= s
  std::vector<PixelPosition> final;                // clamp(base + offsets) in normalized units
  std::vector<double> weights;                     // simplex
  std::vector<std::array<double, 3>> irradiance;   // linear, at final positions
};

// --- recorded ops ----------------------------------------------------------

namespace ad {

/// Treats rows (2k, 2k+1) as 2-vectors and projects each onto the disk of
/// the given radius.
template <class T>
Var project_disk(Tape<T>& tape, Var x, T radius) {
  const auto& X = tape.value(x);
  if (X.rows() % 2 != 0) throw std::invalid_argument("project_disk: row count must be even");
  Matrix<T> out = X;
  for (Eigen::Index c = 0; c < X.cols(); ++c) {
    for (Eigen::Index r = 0; r < X.rows(); r += 2) {
      const T norm = std::hypot(X(r, c), X(r + 1, c));
      if (norm > radius) {
        out(r, c) = X(r, c) * (radius / norm);
        out(r + 1, c) = X(r + 1, c) * (radius / norm);
      }
    }
  }
  return tape.record(std::move(out), {x}, [x, radius](Tape<T>& t, const Matrix<T>& g, const Matrix<T>&) {
    const auto& X = t.value(x);
    Matrix<T> dx = g;
    for (Eigen::Index c = 0; c < X.cols(); ++c) {
      for (Eigen::Index r = 0; r < X.rows(); r += 2) {
        const T a = X(r, c);
        const T b = X(r + 1, c);
        const T norm = std::hypot(a, b);
        if (norm > radius) {
          // y = R u / |u|,  J = R / |u| (I - u u^T / |u|^2)
          const T k = radius / norm;
          const T ua = a / norm;
          const T ub = b / norm;
          const T ga = g(r, c);
          const T gb = g(r + 1, c);
          const T proj = ga * ua + gb * ub;
          dx(r, c) = k * (ga - proj * ua);
          dx(r + 1, c) = k * (gb - proj * ub);
        }
      }
    }
    t.accumulate(x, dx);
  });
}

/// Base grid around each center plus pixel offsets, in normalized units.
/// centers: 3 x B constant, offsets: 2 n^2 x B. Returns 3 x (n^2 B), unclamped.
template <class T>
Var patch_positions(Tape<T>& tape, const Matrix<T>& centers, Var offsets, int n, T pitch_x, T pitch_y) {
  const auto& off = tape.value(offsets);
  const Eigen::Index area = static_cast<Eigen::Index>(n) * n;
  const Eigen::Index batch = centers.cols();
  if (off.rows() != 2 * area || off.cols() != batch || centers.rows() != 3) {
    throw std::invalid_argument("patch_positions: shape mismatch");
  }
  const int h = n / 2;
  Matrix<T> out(3, area * batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (Eigen::Index k = 0; k < area; ++k) {
      const T dx = static_cast<T>(k % n - h);
      const T dy = static_cast<T>(k / n - h);
      const Eigen::Index col = b * area + k;
      out(0, col) = centers(0, b) + (dx + off(2 * k, b)) * pitch_x;
      out(1, col) = centers(1, b) + (dy + off(2 * k + 1, b)) * pitch_y;
      out(2, col) = centers(2, b);
    }
  }
  return tape.record(std::move(out), {offsets},
                     [offsets, area, batch, pitch_x, pitch_y](Tape<T>& t, const Matrix<T>& g, const Matrix<T>&) {
                       Matrix<T> d(2 * area, batch);
                       for (Eigen::Index b = 0; b < batch; ++b) {
                         for (Eigen::Index k = 0; k < area; ++k) {
                           d(2 * k, b) = g(0, b * area + k) * pitch_x;
                           d(2 * k + 1, b) = g(1, b * area + k) * pitch_y;
                         }
                       }
                       t.accumulate(offsets, d);
                     });
}

/// r': 3 x B with r'(:, b) = sum_k w(k, b) r(:, b n^2 + k).
template <class T>
Var blend_patches(Tape<T>& tape, Var irradiance, Var weights) {
  const auto& R = tape.value(irradiance);
  const auto& W = tape.value(weights);
  const Eigen::Index area = W.rows();
  const Eigen::Index batch = W.cols();
  if (R.cols() != area * batch) throw std::invalid_argument("blend_patches: shape mismatch");
  Matrix<T> out(R.rows(), batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    out.col(b) = R.middleCols(b * area, area) * W.col(b);
  }
  return tape.record(std::move(out), {irradiance, weights},
                     [irradiance, weights, area, batch](Tape<T>& t, const Matrix<T>& g, const Matrix<T>&) {
                       if (t.requires_grad(irradiance)) {
                         const auto& Wv = t.value(weights);
                         Matrix<T> dr(g.rows(), area * batch);
                         for (Eigen::Index b = 0; b < batch; ++b) {
                           dr.middleCols(b * area, area) = g.col(b) * Wv.col(b).transpose();
                         }
                         t.accumulate(irradiance, dr);
                       }
                       if (t.requires_grad(weights)) {
                         const auto& Rv = t.value(irradiance);
                         Matrix<T> dw(area, batch);
                         for (Eigen::Index b = 0; b < batch; ++b) {
                           dw.col(b) = Rv.middleCols(b * area, area).transpose() * g.col(b);
                         }
                         t.accumulate(weights, dw);
                       }
                     });
}

}  // namespace ad

// --- blur generator ----------------------------------------------------------

/// Offsets in pixel units, 2 n^2 x B: tanh head scaled by s, then projected
/// onto the radius-s disk per slot.
template <class T>
ad::Var predict_offsets(ad::Tape<T>& tape, const ModelConfig& cfg, const ModelVars& vars, ad::Var centers) {
  const ad::Var head = forward(tape, cfg.offset_spec(), vars.offset, centers);
  const T s = static_cast<T>(cfg.max_offset);
  return ad::project_disk(tape, ad::scale(tape, head, s), s);
}

/// PSF weights, n^2 x B, each column a simplex.
template <class T>
ad::Var psf_weights(ad::Tape<T>& tape, const ModelConfig& cfg, const ModelVars& vars, ad::Var centers) {
  return forward(tape, cfg.weight_spec(), vars.weight, centers);
}

// --- tone mapper -------------------------------------------------------------

/// One channel of the tone mapper on a 1 x K row of log exposures.
template <class T>
ad::Var tone_channel(ad::Tape<T>& tape, const ModelConfig& cfg, const ModelVars& vars, int channel, ad::Var z) {
  const ad::Var head = forward(tape, cfg.tone_spec(), vars.tone[channel], z);
  return ad::scale_shift(tape, head, T(0.5), T(0.5));
}

/// z: 3 x B log exposure (log2 r' + log2 dt). Returns colors in [0, 1].
template <class T>
ad::Var tone_map(ad::Tape<T>& tape, const ModelConfig& cfg, const ModelVars& vars, ad::Var z) {
  std::vector<ad::Var> channels;
  for (int c = 0; c < 3; ++c) channels.push_back(tone_channel(tape, cfg, vars, c, ad::rows(tape, z, c, 1)));
  return ad::vstack(tape, channels);
}

// --- full pixel pipeline ------------------------------------------------------

/// Per-sample log2 exposure row (1 x B): learned latents are gathered by image
/// id, known exposures come from the configuration.
template <class T>
ad::Var exposure_row(ad::Tape<T>& tape, const ModelConfig& cfg, const ModelVars& vars, const std::vector<int>& images) {
  if (cfg.exposure_mode == ExposureMode::learned) {
    if (!vars.exposure.valid()) throw std::logic_error("exposure_row: learned mode without exposure latents");
    return ad::gather(tape, vars.exposure, images);
  }
  ad::Matrix<T> row(1, static_cast<Eigen::Index>(images.size()));
  for (std::size_t k = 0; k < images.size(); ++k) {
    if (images[k] < 0 || images[k] >= cfg.images) throw std::out_of_range("exposure_row: image id out of range");
    row(0, static_cast<Eigen::Index>(k)) = static_cast<T>(cfg.log2_dt[images[k]]);
  }
  return tape.constant(std::move(row));
}

struct PixelForward {
  ad::Var color;          // 3 x B predicted LDR color
  ad::Var blurred_log;    // 3 x B log2 r'
  ad::Var exposure;       // 1 x B log2 dt
  ad::Var tone_input;     // 3 x B log2 r' + log2 dt
  ad::Var offsets;        // 2 n^2 x B (invalid without blur)
  ad::Var weights;        // n^2 x B (invalid without blur)
  ad::Var positions;      // 3 x (n^2 B) clamped sample positions
  ad::Var irradiance;     // 3 x (n^2 B) linear irradiance at the samples
};

/// Records the complete prediction for a batch of pixel centers (3 x B).
/// `blur_centers` (default: the centers themselves) is what the offset and
/// weight networks see; the scene model always sees `centers`.
template <class T>
PixelForward forward_pixels(ad::Tape<T>& tape, const ModelConfig& cfg, const ModelVars& vars,
                            const ad::Matrix<T>& centers, ad::Var exposure,
                            const ad::Matrix<T>* blur_centers = nullptr) {
  if (centers.rows() != 3) throw std::invalid_argument("forward_pixels: centers must be 3 x B");
  PixelForward f;
  f.exposure = exposure;
  if (cfg.blur) {
    const ad::Var blur_in = tape.constant(blur_centers ? *blur_centers : centers);
    f.offsets = predict_offsets(tape, cfg, vars, blur_in);
    f.weights = psf_weights(tape, cfg, vars, blur_in);
    const ad::Var raw = ad::patch_positions(tape, centers, f.offsets, cfg.patch, static_cast<T>(pixel_pitch(cfg.width)),
                                            static_cast<T>(pixel_pitch(cfg.height)));
    f.positions = ad::clamp(tape, raw, T(-1), T(1));
    f.irradiance = ad::exp2(tape, scene_log_irradiance(tape, cfg, vars, f.positions));
    f.blurred_log = ad::log2(tape, ad::blend_patches(tape, f.irradiance, f.weights));
  } else {
    f.positions = tape.constant(centers);
    f.irradiance = ad::exp2(tape, scene_log_irradiance(tape, cfg, vars, f.positions));
    f.blurred_log = ad::log2(tape, f.irradiance);
  }
  f.tone_input = ad::add_row(tape, f.blurred_log, exposure);
  f.color = tone_map(tape, cfg, vars, f.tone_input);
  return f;
}

// --- single-sample convenience --------------------------------------------

/// n x n grid centered at `center` with one-pixel pitch, row-major slots.
inline std::vector<PixelPosition> base_patch(const PixelPosition& center, int n, const ModelConfig& cfg) {
  if (n < 1 || n % 2 == 0) throw std::invalid_argument("base_patch: n must be odd and >= 1");
  const int h = n / 2;
  const double px = pixel_pitch(cfg.width);
  const double py = pixel_pitch(cfg.height);
  std::vector<PixelPosition> out;
  out.reserve(static_cast<std::size_t>(n) * n);
  for (int dy = -h; dy <= h; ++dy) {
    for (int dx = -h; dx <= h; ++dx) out.push_back({center.x + dx * px, center.y + dy * py, center.i});
  }
  return out;
}

template <class T>
ad::Matrix<T> column(const PixelPosition& p) {
  ad::Matrix<T> x(3, 1);
  x << static_cast<T>(p.x), static_cast<T>(p.y), static_cast<T>(p.i);
  return x;
}

template <class T>
std::vector<std::array<double, 2>> predict_offsets(const ModelParams<T>& params, const ModelConfig& cfg,
                                                   const PixelPosition& center) {
  center.validate();
  ad::Tape<T> tape;
  const ModelVars vars = bind(tape, params, false);
  const auto& o = tape.value(predict_offsets(tape, cfg, vars, tape.constant(column<T>(center))));
  std::vector<std::array<double, 2>> out;
  for (Eigen::Index k = 0; k < o.rows(); k += 2) {
    out.push_back({static_cast<double>(o(k, 0)), static_cast<double>(o(k + 1, 0))});
  }
  return out;
}

template <class T>
std::vector<double> psf_weights(const ModelParams<T>& params, const ModelConfig& cfg, const PixelPosition& center) {
  center.validate();
  ad::Tape<T> tape;
  const ModelVars vars = bind(tape, params, false);
  const auto& w = tape.value(psf_weights(tape, cfg, vars, tape.constant(column<T>(center))));
  std::vector<double> out;
  for (Eigen::Index k = 0; k < w.rows(); ++k) out.push_back(static_cast<double>(w(k, 0)));
  return out;
}

inline void check_simplex(const std::vector<double>& weights, double tolerance = 1e-6) {
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw std::invalid_argument("PSF weights must be non-negative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > tolerance) throw std::invalid_argument("PSF weights must sum to 1");
}

/// r' = sum_x r(x) w(x) per channel.
inline std::array<double, 3> blur_irradiance(const std::vector<std::array<double, 3>>& irradiance,
                                             const std::vector<double>& weights) {
  if (irradiance.size() != weights.size()) throw std::invalid_argument("blur_irradiance: size mismatch");
  check_simplex(weights);
  std::array<double, 3> out{0.0, 0.0, 0.0};
  for (std::size_t k = 0; k < weights.size(); ++k) {
    for (int c = 0; c < 3; ++c) out[c] += irradiance[k][c] * weights[k];
  }
  return out;
}

/// Colors for per-channel log irradiance `blurred_log` under exposure log2_dt.
template <class T>
std::array<double, 3> tone_map(const ModelParams<T>& params, const ModelConfig& cfg,
                               const std::array<double, 3>& blurred_log, double log2_dt) {
  ad::Tape<T> tape;
  const ModelVars vars = bind(tape, params, false);
  ad::Matrix<T> z(3, 1);
  for (int c = 0; c < 3; ++c) {
    if (!std::isfinite(blurred_log[c]) || !std::isfinite(log2_dt)) throw std::domain_error("tone_map: non-finite input");
    z(c, 0) = static_cast<T>(blurred_log[c]) + static_cast<T>(log2_dt);
  }
  const auto& col = tape.value(tone_map(tape, cfg, vars, tape.constant(z)));
  return {static_cast<double>(col(0, 0)), static_cast<double>(col(1, 0)), static_cast<double>(col(2, 0))};
}

template <class T>
ExposureMeta exposure_meta(const ModelParams<T>& params, const ModelConfig& cfg, int image) {
  if (image < 0 || image >= cfg.images) throw std::out_of_range("exposure_meta: image out of range");
  if (cfg.exposure_mode == ExposureMode::learned) {
    return {image, ExposureMode::learned, static_cast<double>(params.exposure(image, 0))};
  }
  return {image, ExposureMode::known, cfg.log2_dt[image]};
}

/// The training prediction for one pixel center.
template <class T>
std::array<double, 3> forward_pixel(const ModelParams<T>& params, const ModelConfig& cfg, const PixelPosition& center,
                                    const ExposureMeta& meta) {
  center.validate();
  ad::Tape<T> tape;
  const ModelVars vars = bind(tape, params, false);
  ad::Matrix<T> dt(1, 1);
  dt(0, 0) = static_cast<T>(meta.log2_dt);
  const PixelForward f = forward_pixels(tape, cfg, vars, column<T>(center), tape.constant(dt));
  const auto& c = tape.value(f.color);
  return {static_cast<double>(c(0, 0)), static_cast<double>(c(1, 0)), static_cast<double>(c(2, 0))};
}

template <class T>
PatchBundle patch_bundle(const ModelParams<T>& params, const ModelConfig& cfg, const PixelPosition& center) {
  center.validate();
  ModelConfig blur_cfg = cfg;
  blur_cfg.blur = true;
  ad::Tape<T> tape;
  const ModelVars vars = bind(tape, params, false);
  ad::Matrix<T> dt = ad::Matrix<T>::Zero(1, 1);
  const PixelForward f = forward_pixels(tape, blur_cfg, vars, column<T>(center), tape.constant(dt));

  PatchBundle pb;
  pb.n = cfg.patch;
  pb.center = center;
  pb.base = base_patch(center, cfg.patch, cfg);
  const auto& o = tape.value(f.offsets);
  const auto& w = tape.value(f.weights);
  const auto& pos = tape.value(f.positions);
  const auto& r = tape.value(f.irradiance);
  for (int k = 0; k < cfg.patch_area(); ++k) {
    pb.offsets.push_back({static_cast<double>(o(2 * k, 0)), static_cast<double>(o(2 * k + 1, 0))});
    pb.weights.push_back(static_cast<double>(w(k, 0)));
    pb.final.push_back({static_cast<double>(pos(0, k)), static_cast<double>(pos(1, k)), static_cast<double>(pos(2, k))});
    pb.irradiance.push_back({static_cast<double>(r(0, k)), static_cast<double>(r(1, k)), static_cast<double>(r(2, k))});
  }
  return pb;
}

/// Tone-mapper input domain [-k_log - E, k_log + E], E = max |log2 dt|.
template <class T>
std::pair<double, double> tone_domain(const ModelParams<T>& params, const ModelConfig& cfg) {
  double e = 0.0;
  for (int i = 0; i < cfg.images; ++i) e = std::max(e, std::abs(exposure_meta(params, cfg, i).log2_dt));
  return {-cfg.k_log - e, cfg.k_log + e};
}

struct CrfSample {
  double input;
  double value;
};

/// The learned response of one channel on m uniform samples of the tone domain.
template <class T>
std::vector<CrfSample> crf_export(const ModelParams<T>& params, const ModelConfig& cfg, int channel, int m) {
  if (m < 2) throw std::invalid_argument("crf_export: need at least 2 samples");
  if (channel < 0 || channel > 2) throw std::out_of_range("crf_export: channel must be 0, 1 or 2");
  const auto [lo, hi] = tone_domain(params, cfg);
  ad::Matrix<T> z(1, m);
  for (int k = 0; k < m; ++k) z(0, k) = static_cast<T>(lo + (hi - lo) * k / (m - 1));
  ad::Tape<T> tape;
  const ModelVars vars = bind(tape, params, false);
  const auto& c = tape.value(tone_channel(tape, cfg, vars, channel, tape.constant(z)));
  std::vector<CrfSample> out;
  for (int k = 0; k < m; ++k) out.push_back({static_cast<double>(z(0, k)), static_cast<double>(c(0, k))});
  return out;
}

}  // namespace ncam
