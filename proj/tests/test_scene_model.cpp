#include "ncam/gradcheck_suite.hpp"
#include "ncam/scene_model.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace ncam;

namespace {

ModelConfig config() {
  ModelConfig cfg = gradcheck_detail::small_model();
  cfg.width = 32;
  cfg.height = 16;
  return cfg;
}

}  // namespace

TEST(Deform, ZeroNetworkMapsToOrigin) {
  const ModelConfig cfg = config();
  const auto p = ModelParams<double>::zeros(cfg);
  const AtlasCoord q = deform(p, cfg, {0.3, -0.7, 1.0});
  EXPECT_EQ(q.u, 0.0);
  EXPECT_EQ(q.v, 0.0);
}

TEST(Deform, OutputStaysInsideOpenSquare) {
  const ModelConfig cfg = config();
  std::mt19937_64 rng(1);
  auto p = gradcheck_detail::random_params(cfg, rng);
  p.deform.weights.back() *= 10.0;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k = 0; k < 500; ++k) {
    const AtlasCoord q = deform(p, cfg, {u(rng), u(rng), u(rng)});
    EXPECT_LT(std::abs(q.u), 1.0);
    EXPECT_LT(std::abs(q.v), 1.0);
  }
}

TEST(Deform, RejectsPositionsOutsideRange) {
  const ModelConfig cfg = config();
  const auto p = ModelParams<double>::zeros(cfg);
  EXPECT_THROW(deform(p, cfg, {1.5, 0.0, 0.0}), std::out_of_range);
  EXPECT_THROW(deform(p, cfg, {0.0, std::nan(""), 0.0}), std::out_of_range);
}

TEST(Atlas, ZeroNetworkIsUnitIrradiance) {
  const ModelConfig cfg = config();
  const auto p = ModelParams<double>::zeros(cfg);
  const LogIrradiance l = atlas_log_irradiance(p, cfg, {0.25, -0.5});
  for (double v : l.l) EXPECT_EQ(v, 0.0);
  for (double v : to_linear(l)) EXPECT_EQ(v, 1.0);
}

TEST(Atlas, BoundedByKLogAndDeterministic) {
  const ModelConfig cfg = config();
  std::mt19937_64 rng(2);
  auto p = gradcheck_detail::random_params(cfg, rng);
  p.atlas.weights.back() *= 20.0;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k = 0; k < 300; ++k) {
    const AtlasCoord q{u(rng), u(rng)};
    const LogIrradiance a = atlas_log_irradiance(p, cfg, q);
    const LogIrradiance b = atlas_log_irradiance(p, cfg, q);
    for (int c = 0; c < 3; ++c) {
      EXPECT_LT(std::abs(a.l[c]), cfg.k_log);
      EXPECT_EQ(a.l[c], b.l[c]);
    }
  }
  EXPECT_THROW(atlas_log_irradiance(p, cfg, {1.01, 0.0}), std::out_of_range);
}

TEST(SceneIrradiance, ExponentialOfLog) {
  const auto r = to_linear({{1.0, 2.0, 3.0}});
  EXPECT_EQ(r[0], 2.0);
  EXPECT_EQ(r[1], 4.0);
  EXPECT_EQ(r[2], 8.0);
}

TEST(SceneIrradiance, PositiveAndComposedOfDeformAndAtlas) {
  const ModelConfig cfg = config();
  std::mt19937_64 rng(3);
  const auto p = gradcheck_detail::random_params(cfg, rng);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k = 0; k < 100; ++k) {
    const PixelPosition pos{u(rng), u(rng), u(rng)};
    const auto r = scene_irradiance(p, cfg, pos);
    const auto viaq = to_linear(atlas_log_irradiance(p, cfg, deform(p, cfg, pos)));
    for (int c = 0; c < 3; ++c) {
      EXPECT_GT(r[c], 0.0);
      EXPECT_NEAR(r[c], viaq[c], 1e-12 * viaq[c]);
    }
  }
}

TEST(SceneIrradiance, BatchMatchesSingleSamples) {
  const ModelConfig cfg = config();
  std::mt19937_64 rng(4);
  const auto p = gradcheck_detail::random_params(cfg, rng);
  const ad::Matrix<double> pos = gradcheck_detail::uniform(3, 17, -1.0, 1.0, rng);
  const ad::Matrix<double> batch = scene_irradiance(p, cfg, pos);
  for (Eigen::Index k = 0; k < pos.cols(); ++k) {
    const auto one = scene_irradiance(p, cfg, PixelPosition{pos(0, k), pos(1, k), pos(2, k)});
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(batch(c, k), one[c], 1e-12 * one[c]);
  }
}

TEST(Coordinates, NormalizationEndpoints) {
  EXPECT_EQ(normalize_index(0, 128), -1.0);
  EXPECT_EQ(normalize_index(127, 128), 1.0);
  EXPECT_EQ(normalize_index(0, 1), 0.0);
  EXPECT_EQ(pixel_pitch(3), 1.0);
  const ModelConfig cfg = config();
  const PixelPosition p = pixel_position(31, 0, 0, cfg);
  EXPECT_EQ(p.x, 1.0);
  EXPECT_EQ(p.y, -1.0);
}

TEST(ModelParams, InitZeroesBlurHeadsOnly) {
  ModelConfig cfg = config();
  const auto p = ModelParams<float>::init(cfg, 9);
  EXPECT_TRUE(p.offset.weights.back().isZero(0.0f));
  EXPECT_TRUE(p.weight.weights.back().isZero(0.0f));
  EXPECT_FALSE(p.atlas.weights.back().isZero(0.0f));
  EXPECT_FALSE(p.deform.weights.back().isZero(0.0f));
  const auto q = ModelParams<float>::init(cfg, 9);
  EXPECT_EQ(p.atlas.weights[1], q.atlas.weights[1]);
}
