#include "ncam/gradcheck_suite.hpp"
#include "ncam/renderer.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace ncam;

namespace {

ModelConfig config() {
  ModelConfig cfg = gradcheck_detail::small_model();
  cfg.width = 7;
  cfg.height = 5;
  return cfg;
}

}  // namespace

TEST(SharpHdr, ZeroModelIsUnitIrradiance) {
  const ModelConfig cfg = config();
  const auto p = ModelParams<double>::zeros(cfg);
  const ImageF img = render_sharp_hdr(p, cfg, 0, 6, 4);
  EXPECT_EQ(img.width, 6);
  EXPECT_EQ(img.height, 4);
  for (float v : img.data) EXPECT_EQ(v, 1.0f);
}

TEST(SharpHdr, MatchesPerPixelSceneIrradiance) {
  const ModelConfig cfg = config();
  std::mt19937_64 rng(1);
  const auto p = gradcheck_detail::random_params(cfg, rng);
  const ImageF img = render_sharp_hdr(p, cfg, 1, cfg.width, cfg.height);
  for (int y = 0; y < cfg.height; ++y) {
    for (int x = 0; x < cfg.width; ++x) {
      const auto r = scene_irradiance(p, cfg, pixel_position(x, y, 1, cfg));
      for (int c = 0; c < 3; ++c) EXPECT_NEAR(img.at(x, y, c), r[c], 1e-6 * r[c]);
    }
  }
  EXPECT_THROW(render_sharp_hdr(p, cfg, 0, 0, 4), std::invalid_argument);
}

TEST(Ldr, TrainingFrameReproducesForwardPixel) {
  const ModelConfig cfg = config();
  std::mt19937_64 rng(2);
  const auto p = gradcheck_detail::random_params(cfg, rng);
  for (int k = 0; k < cfg.images; ++k) {
    const ImageF img = render_ldr(p, cfg, k, k, cfg.log2_dt[static_cast<std::size_t>(k)]);
    for (int y = 0; y < cfg.height; ++y) {
      for (int x = 0; x < cfg.width; ++x) {
        const auto v = forward_pixel(p, cfg, pixel_position(x, y, k, cfg), exposure_meta(p, cfg, k));
        for (int c = 0; c < 3; ++c) EXPECT_NEAR(img.at(x, y, c), v[c], 1e-6);
      }
    }
  }
}

TEST(Ldr, SharpRenderIsToneOfSceneAtRequestedExposure) {
  const ModelConfig cfg = config();
  std::mt19937_64 rng(3);
  const auto p = gradcheck_detail::random_params(cfg, rng);
  for (double ev : {-1.0, 0.0, 1.0, 2.5}) {
    const ImageF img = render_sharp_ldr(p, cfg, 0, ev);
    for (int y = 0; y < cfg.height; y += 2) {
      for (int x = 0; x < cfg.width; x += 3) {
        const auto r = scene_irradiance(p, cfg, pixel_position(x, y, 0, cfg));
        const auto v = tone_map(p, cfg, {std::log2(r[0]), std::log2(r[1]), std::log2(r[2])}, ev);
        for (int c = 0; c < 3; ++c) EXPECT_NEAR(img.at(x, y, c), v[c], 1e-6);
      }
    }
  }
}

TEST(Ldr, OutputsStayInUnitRange) {
  const ModelConfig cfg = config();
  std::mt19937_64 rng(4);
  auto p = gradcheck_detail::random_params(cfg, rng);
  for (auto& m : p.tone) m.weights.back() *= 30.0;
  for (double ev : {-8.0, 0.0, 8.0}) {
    for (float v : render_ldr(p, cfg, 0.5, 1.5, ev).data) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
  }
}

TEST(Atlas, OddResolutionCentersOnOrigin) {
  const ModelConfig cfg = config();
  std::mt19937_64 rng(5);
  const auto p = gradcheck_detail::random_params(cfg, rng);
  const ImageF img = render_atlas(p, cfg, 5);
  const LogIrradiance l = atlas_log_irradiance(p, cfg, {0.0, 0.0});
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(img.at(2, 2, c), mu_law(std::exp2(l.l[c])), 1e-6);
  EXPECT_THROW(render_atlas(p, cfg, 0), std::invalid_argument);
}

TEST(Atlas, ZeroModelIsMuLawOfOne) {
  const ModelConfig cfg = config();
  const auto p = ModelParams<double>::zeros(cfg);
  for (float v : render_atlas(p, cfg, 4).data) EXPECT_FLOAT_EQ(v, 1.0f);
}

TEST(DisplayHdr, NormalizesByMaxAndRejectsBadScale) {
  ImageF hdr(2, 1, 3);
  hdr.data = {0.5f, 1.0f, 2.0f, 4.0f, 0.0f, 1.0f};
  const ImageF d = display_hdr(hdr);
  EXPECT_FLOAT_EQ(d.data[3], 1.0f);
  EXPECT_FLOAT_EQ(d.data[4], 0.0f);
  EXPECT_NEAR(d.data[0], std::log1p(5000.0 * 0.125) / std::log1p(5000.0), 1e-6);
  EXPECT_THROW(display_hdr(hdr, 0.0), std::invalid_argument);
  EXPECT_THROW(display_hdr(hdr, -1.0), std::invalid_argument);
  ImageF dark(1, 1, 3);
  EXPECT_THROW(display_hdr(dark), std::invalid_argument);
}
