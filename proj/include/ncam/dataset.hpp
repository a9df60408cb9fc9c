#pragma once

// In-memory training set: LDR colors, per-image exposure and optional flow to
// the next frame, plus uniform batch sampling over every pixel of every image.

#include "ncam/core/tape.hpp"
#include "ncam/io/formats.hpp"
#include "ncam/io/manifest.hpp"
#include "ncam/model.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

namespace ncam {

struct SceneDataset {
  int width = 0;
  int height = 0;
  std::vector<ImageF> colors;                  // LDR values in [0, 1]
  std::vector<double> log2_dt;                 // per image
  std::vector<std::optional<FlowField>> flows; // flows[k]: frame k -> k + 1
  ExposureMode exposure_mode = ExposureMode::known;

  int images() const { return static_cast<int>(colors.size()); }

  void validate() const {
    if (colors.empty()) throw std::invalid_argument("SceneDataset: no images");
    if (log2_dt.size() != colors.size() || flows.size() != colors.size()) {
      throw std::invalid_argument("SceneDataset: per-image arrays disagree in length");
    }
    for (const auto& c : colors) {
      if (c.width != width || c.height != height || c.channels != 3) {
        throw std::invalid_argument("SceneDataset: every image must be RGB " + std::to_string(width) + "x" +
                                    std::to_string(height));
      }
    }
    for (const auto& f : flows) {
      if (f && (f->width != width || f->height != height)) throw std::invalid_argument("SceneDataset: flow dims mismatch");
    }
  }

  static SceneDataset from_manifest(const SceneManifest& m) {
    SceneDataset ds;
    ds.width = m.width;
    ds.height = m.height;
    ds.exposure_mode = exposure_mode_from_string(m.exposure_mode);
    for (std::size_t k = 0; k < m.images.size(); ++k) {
      const auto& e = m.images[k];
      ds.colors.push_back(to_real(read_ldr(m.resolve(e.path))));
      ds.log2_dt.push_back(e.log2_dt());
      if (e.flow_to_next && k + 1 < m.images.size()) {
        ds.flows.emplace_back(read_flo(m.resolve(*e.flow_to_next)));
      } else {
        ds.flows.emplace_back(std::nullopt);
      }
    }
    ds.validate();
    return ds;
  }

  /// Model geometry and exposures implied by this dataset.
  ModelConfig model_config(ModelConfig base) const {
    base.width = width;
    base.height = height;
    base.images = images();
    base.exposure_mode = exposure_mode;
    base.log2_dt = log2_dt;
    return base;
  }
};

template <class T>
struct Batch {
  ad::Matrix<T> centers;    // 3 x B normalized (x, y, i)
  ad::Matrix<T> colors;     // 3 x B targets
  std::vector<int> images;  // B image ids
  ad::Matrix<T> flow_from;  // 3 x P
  ad::Matrix<T> flow_to;    // 3 x P
  std::int64_t skipped_flow = 0;

  int size() const { return static_cast<int>(centers.cols()); }
  int flow_pairs() const { return static_cast<int>(flow_from.cols()); }
};

/// Uniform draws with replacement over all (pixel, image) combinations. Each
/// drawn pixel with a flow field to the next frame also yields a flow pair
/// unless its displaced target falls outside the image.
template <class T>
Batch<T> sample_batch(const SceneDataset& ds, int batch_size, std::mt19937_64& rng, bool with_flow = true) {
  if (ds.colors.empty()) throw std::invalid_argument("sample_batch: empty dataset");
  if (batch_size < 1) throw std::invalid_argument("sample_batch: batch size must be >= 1");
  const int W = ds.width, H = ds.height, N = ds.images();
  const std::uint64_t per_image = static_cast<std::uint64_t>(W) * H;
  std::uniform_int_distribution<std::uint64_t> pick(0, per_image * N - 1);

  Batch<T> b;
  b.centers.resize(3, batch_size);
  b.colors.resize(3, batch_size);
  b.images.resize(batch_size);
  std::vector<std::array<T, 6>> pairs;
  for (int k = 0; k < batch_size; ++k) {
    const std::uint64_t draw = pick(rng);
    const int img = static_cast<int>(draw / per_image);
    const int pix = static_cast<int>(draw % per_image);
    const int x = pix % W, y = pix / W;
    b.images[k] = img;
    b.centers(0, k) = static_cast<T>(normalize_index(x, W));
    b.centers(1, k) = static_cast<T>(normalize_index(y, H));
    b.centers(2, k) = static_cast<T>(normalize_index(img, N));
    for (int c = 0; c < 3; ++c) b.colors(c, k) = static_cast<T>(ds.colors[img].at(x, y, c));
    if (!with_flow || !ds.flows[img]) continue;
    const FlowField& f = *ds.flows[img];
    const double tx = x + f.u(x, y), ty = y + f.v(x, y);
    if (!(tx >= 0.0 && tx <= W - 1.0 && ty >= 0.0 && ty <= H - 1.0)) {
      ++b.skipped_flow;
      continue;
    }
    pairs.push_back({b.centers(0, k), b.centers(1, k), b.centers(2, k), static_cast<T>(normalize_index(tx, W)),
                     static_cast<T>(normalize_index(ty, H)), static_cast<T>(normalize_index(img + 1, N))});
  }
  const auto P = static_cast<Eigen::Index>(pairs.size());
  b.flow_from.resize(3, P);
  b.flow_to.resize(3, P);
  for (Eigen::Index k = 0; k < P; ++k) {
    for (int r = 0; r < 3; ++r) {
      b.flow_from(r, k) = pairs[k][r];
      b.flow_to(r, k) = pairs[k][r + 3];
    }
  }
  return b;
}

}  // namespace ncam
