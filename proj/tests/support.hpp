#pragma once

// Shared fixtures and evaluation protocols for the unit and acceptance tests.

#include "ncam/config.hpp"
#include "ncam/dataset.hpp"
#include "ncam/io/formats.hpp"
#include "ncam/io/manifest.hpp"
#include "ncam/metrics.hpp"
#include "ncam/renderer.hpp"
#include "ncam/simulator.hpp"
#include "ncam/trainer.hpp"

#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#ifndef NCAM_CONFIG_DIR
#error "NCAM_CONFIG_DIR must point at the configs/ directory"
#endif

namespace ncam::test {

namespace fs = std::filesystem;

inline fs::path config_path(const std::string& name) { return fs::path(NCAM_CONFIG_DIR) / name; }

/// Fresh, empty scratch directory under the system temp dir.
/// Per-process directory, removed at exit; ctest may run criteria in parallel.
inline fs::path scratch_dir(const std::string& name) {
  static const fs::path root = [] {
    const fs::path r = fs::temp_directory_path() / ("ncam_test_" + std::to_string(::getpid()));
    std::atexit([] {
      std::error_code ec;
      fs::remove_all(fs::temp_directory_path() / ("ncam_test_" + std::to_string(::getpid())), ec);
    });
    return r;
  }();
  const fs::path dir = root / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

struct Fixture {
  GenerateSpec spec;
  SceneDataset data;
  std::vector<ImageF> gt_hdr;  // per capture
  std::vector<ImageF> ldr;     // per capture, in [0, 1]
};

/// Generates the dataset described by configs/<name>.json on disk and loads
/// it back through the manifest, exactly as the CLI would.
inline Fixture load_fixture(const std::string& name) {
  Fixture f;
  f.spec = generate_spec_from_json(read_json_file(config_path(name + ".json")));
  const fs::path dir = scratch_dir(name);
  sim::gen_dataset(f.spec.scene, f.spec.captures, dir, f.spec.seed);
  const SceneManifest m = read_manifest(dir / "manifest.json");
  f.data = SceneDataset::from_manifest(m);
  for (const auto& e : m.images) {
    f.gt_hdr.push_back(read_pfm(m.resolve(*e.gt_hdr)));
    f.ldr.push_back(to_real(read_ldr(m.resolve(e.path))));
  }
  return f;
}

inline TrainConfig load_train_config(const std::string& name) {
  return parse_train_config(read_json_file(config_path(name + ".json")));
}

/// RMSE between the learned response T_c(z) and the ground-truth gamma curve
/// anchored so that f(x0) = 0.5, over z where the ground truth lies in
/// [0.05, 0.95]; 512 samples of the tone domain per channel, all channels.
template <class T>
double crf_rmse(const ModelParams<T>& params, const ModelConfig& cfg, double gamma = 2.2) {
  const double x0 = std::pow(0.5, gamma);
  double se = 0.0;
  std::size_t n = 0;
  for (int c = 0; c < 3; ++c) {
    for (const CrfSample& s : crf_export(params, cfg, c, 512)) {
      const double g = sim::apply_crf(x0, s.input, sim::Crf::gamma, gamma);
      if (g < 0.05 || g > 0.95) continue;
      se += (s.value - g) * (s.value - g);
      ++n;
    }
  }
  return std::sqrt(se / static_cast<double>(n));
}

/// Pixels not saturated (any channel at 1.0) in every input.
inline PixelMask unsaturated_somewhere(const std::vector<ImageF>& ldr) {
  PixelMask mask(ldr.front().pixels(), false);
  for (const ImageF& img : ldr) {
    for (std::size_t p = 0; p < img.pixels(); ++p) {
      bool sat = false;
      for (int c = 0; c < 3; ++c) sat = sat || img.data[p * 3 + c] >= 1.0f;
      if (!sat) mask[p] = true;
    }
  }
  return mask;
}

/// Excludes a band of `band` pixels on each side of a vertical plane
/// boundary between columns x_edge - 1 and x_edge.
inline PixelMask outside_vertical_band(int width, int height, int x_edge, int band) {
  PixelMask mask(static_cast<std::size_t>(width) * height, true);
  for (int y = 0; y < height; ++y) {
    for (int x = x_edge - band; x < x_edge + band; ++x) {
      if (x >= 0 && x < width) mask[static_cast<std::size_t>(y) * width + x] = false;
    }
  }
  return mask;
}

}  // namespace ncam::test
