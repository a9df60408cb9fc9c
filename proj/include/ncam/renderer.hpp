#pragma once

// Inference: sharp HDR (blur generator and tone mapper removed), LDR
// re-rendering at arbitrary focus index and exposure, atlas visualization.

#include "ncam/camera_model.hpp"
#include "ncam/io/image.hpp"
#include "ncam/metrics.hpp"
#include "ncam/model.hpp"
#include "ncam/scene_model.hpp"

#include <algorithm>
#include <functional>
#include <optional>
#include <stdexcept>

namespace ncam {

namespace render_detail {

inline constexpr Eigen::Index kChunk = 4096;

/// Evaluates `fn` (3 x M positions -> 3 x M values) over every pixel of a
/// width x height grid in chunks; positions use frame coordinate `frame`.
template <class T, class Fn>
ImageF over_grid(int width, int height, double frame, Fn&& fn) {
  ImageF img(width, height, 3);
  const Eigen::Index total = static_cast<Eigen::Index>(width) * height;
  for (Eigen::Index start = 0; start < total; start += kChunk) {
    const Eigen::Index m = std::min(kChunk, total - start);
    ad::Matrix<T> pos(3, m);
    for (Eigen::Index k = 0; k < m; ++k) {
      const Eigen::Index p = start + k;
      pos(0, k) = static_cast<T>(normalize_index(static_cast<double>(p % width), width));
      pos(1, k) = static_cast<T>(normalize_index(static_cast<double>(p / width), height));
      pos(2, k) = static_cast<T>(frame);
    }
    const ad::Matrix<T> v = fn(pos);
    for (Eigen::Index k = 0; k < m; ++k) {
      for (int c = 0; c < 3; ++c) img.data[static_cast<std::size_t>((start + k) * 3 + c)] = static_cast<float>(v(c, k));
    }
  }
  return img;
}

}  // namespace render_detail

/// Linear irradiance 2^l of every pixel of frame `image` (fractional allowed).
template <class T>
ImageF render_sharp_hdr(const ModelParams<T>& params, const ModelConfig& cfg, double image, int width, int height) {
  if (width < 1 || height < 1) throw std::invalid_argument("render_sharp_hdr: dims must be >= 1");
  const double frame = normalize_index(image, cfg.images);
  ModelConfig grid = cfg;
  grid.width = width;
  grid.height = height;
  return render_detail::over_grid<T>(width, height, frame,
                                     [&](const ad::Matrix<T>& pos) { return scene_irradiance(params, grid, pos); });
}

/// Full camera model: the scene model sees frame `image`, the blur generator
/// sees `focus_index` (fractional values interpolate), the tone mapper gets
/// log2 r' + log2_dt.
template <class T>
ImageF render_ldr(const ModelParams<T>& params, const ModelConfig& cfg, double image, double focus_index,
                  double log2_dt) {
  const double frame = normalize_index(image, cfg.images);
  const double focus = normalize_index(focus_index, cfg.images);
  return render_detail::over_grid<T>(cfg.width, cfg.height, frame, [&](const ad::Matrix<T>& pos) {
    ad::Tape<T> tape;
    const ModelVars vars = bind(tape, params, false);
    ad::Matrix<T> blur_pos = pos;
    blur_pos.row(2).setConstant(static_cast<T>(focus));
    const ad::Var dt = tape.constant(ad::Matrix<T>::Constant(1, pos.cols(), static_cast<T>(log2_dt)));
    return ad::Matrix<T>(tape.value(forward_pixels(tape, cfg, vars, pos, dt, &blur_pos).color));
  });
}

/// Tone mapper applied to the sharp irradiance (identity PSF).
template <class T>
ImageF render_sharp_ldr(const ModelParams<T>& params, const ModelConfig& cfg, double image, double log2_dt) {
  ModelConfig sharp = cfg;
  sharp.blur = false;
  return render_ldr(params, sharp, image, image, log2_dt);
}

/// mu_law(2^A(q)) on the centers of a resolution x resolution grid over the
/// atlas square; odd resolutions put a pixel exactly at q = (0, 0).
template <class T>
ImageF render_atlas(const ModelParams<T>& params, const ModelConfig& cfg, int resolution, double mu = 5000.0) {
  if (resolution < 1) throw std::invalid_argument("render_atlas: resolution must be >= 1");
  ImageF img(resolution, resolution, 3);
  const Eigen::Index total = static_cast<Eigen::Index>(resolution) * resolution;
  for (Eigen::Index start = 0; start < total; start += render_detail::kChunk) {
    const Eigen::Index m = std::min(render_detail::kChunk, total - start);
    ad::Matrix<T> q(2, m);
    for (Eigen::Index k = 0; k < m; ++k) {
      const Eigen::Index p = start + k;
      q(0, k) = static_cast<T>((2.0 * static_cast<double>(p % resolution) + 1.0) / resolution - 1.0);
      q(1, k) = static_cast<T>((2.0 * static_cast<double>(p / resolution) + 1.0) / resolution - 1.0);
    }
    ad::Tape<T> tape;
    const ModelVars vars = bind(tape, params, false);
    const ad::Matrix<T>& l = tape.value(atlas_log_irradiance(tape, cfg, vars, tape.constant(q)));
    for (Eigen::Index k = 0; k < m; ++k) {
      for (int c = 0; c < 3; ++c) {
        img.data[static_cast<std::size_t>((start + k) * 3 + c)] =
            static_cast<float>(mu_law(std::exp2(static_cast<double>(l(c, k))), mu));
      }
    }
  }
  return img;
}

/// Display mapping for HDR images: divide by `scale` (default: image max),
/// clamp, mu-law.
inline ImageF display_hdr(const ImageF& hdr, std::optional<double> scale = {}, double mu = 5000.0) {
  double s = scale.value_or(0.0);
  if (!scale) {
    for (float v : hdr.data) s = std::max(s, static_cast<double>(v));
  }
  if (!(s > 0.0)) throw std::invalid_argument("display_hdr: normalization scale must be positive");
  ImageF out(hdr.width, hdr.height, hdr.channels);
  for (std::size_t k = 0; k < hdr.data.size(); ++k) out.data[k] = static_cast<float>(mu_law(hdr.data[k] / s, mu));
  return out;
}

}  // namespace ncam
