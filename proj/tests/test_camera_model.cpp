#include "ncam/camera_model.hpp"
#include "ncam/gradcheck_suite.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace ncam;

namespace {

ModelConfig config() {
  ModelConfig cfg = gradcheck_detail::small_model();
  cfg.width = 9;
  cfg.height = 9;
  return cfg;
}

}  // namespace

TEST(BasePatch, SingleSampleIsCenter) {
  const ModelConfig cfg = config();
  const PixelPosition c{0.25, -0.5, 0.0};
  const auto b = base_patch(c, 1, cfg);
  ASSERT_EQ(b.size(), 1u);
  EXPECT_EQ(b[0].x, c.x);
  EXPECT_EQ(b[0].y, c.y);
}

TEST(BasePatch, ThreeByThreeUnitPixelGrid) {
  const ModelConfig cfg = config();
  const PixelPosition c = pixel_position(4, 4, 0, cfg);
  const auto b = base_patch(c, 3, cfg);
  ASSERT_EQ(b.size(), 9u);
  const double pitch = pixel_pitch(cfg.width);
  for (int k = 0; k < 9; ++k) {
    EXPECT_NEAR((b[k].x - c.x) / pitch, k % 3 - 1, 1e-12);
    EXPECT_NEAR((b[k].y - c.y) / pitch, k / 3 - 1, 1e-12);
  }
  EXPECT_THROW(base_patch(c, 2, cfg), std::invalid_argument);
}

TEST(BasePatch, CornerExtendsPastImageAndFinalPositionsAreClamped) {
  const ModelConfig cfg = config();
  const auto p = ModelParams<double>::init(cfg, 1);
  const PixelPosition corner = pixel_position(0, 0, 0, cfg);
  const auto b = base_patch(corner, 3, cfg);
  EXPECT_LT(b[0].x, -1.0);
  EXPECT_LT(b[0].y, -1.0);
  const PatchBundle pb = patch_bundle(p, cfg, corner);
  for (const auto& f : pb.final) {
    EXPECT_GE(f.x, -1.0);
    EXPECT_GE(f.y, -1.0);
  }
  EXPECT_EQ(pb.final[0].x, -1.0);
}

TEST(Offsets, ZeroHeadGivesZeroOffsets) {
  const ModelConfig cfg = config();
  const auto p = ModelParams<double>::init(cfg, 2);
  for (const auto& o : predict_offsets(p, cfg, {0.1, 0.2, 0.3})) {
    EXPECT_EQ(o[0], 0.0);
    EXPECT_EQ(o[1], 0.0);
  }
}

TEST(Offsets, NormBoundedBySAndProjectionIsActive) {
  const ModelConfig cfg = config();
  std::mt19937_64 rng(3);
  auto p = gradcheck_detail::random_params(cfg, rng);
  p.offset.weights.back() *= 50.0;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double largest = 0.0;
  for (int k = 0; k < 200; ++k) {
    for (const auto& o : predict_offsets(p, cfg, {u(rng), u(rng), u(rng)})) {
      const double n = std::hypot(o[0], o[1]);
      EXPECT_LE(n, cfg.max_offset * (1 + 1e-12));
      largest = std::max(largest, n);
    }
  }
  EXPECT_GT(largest, 0.99 * cfg.max_offset);  // saturated heads reach the rim
}

TEST(Offsets, ZeroRadiusKeepsBasePositions) {
  ModelConfig cfg = config();
  cfg.max_offset = 0.0;
  std::mt19937_64 rng(4);
  const auto p = gradcheck_detail::random_params(cfg, rng);
  const PixelPosition c = pixel_position(4, 3, 1, cfg);
  const PatchBundle pb = patch_bundle(p, cfg, c);
  for (std::size_t k = 0; k < pb.final.size(); ++k) {
    EXPECT_NEAR(pb.final[k].x, pb.base[k].x, 1e-15);
    EXPECT_NEAR(pb.final[k].y, pb.base[k].y, 1e-15);
  }
}

TEST(Weights, EqualLogitsAreUniform) {
  const ModelConfig cfg = config();
  const auto p = ModelParams<double>::init(cfg, 5);
  for (double w : psf_weights(p, cfg, {0.0, 0.5, -1.0})) EXPECT_NEAR(w, 1.0 / 9.0, 1e-15);
}

TEST(Weights, AnyLogitsFormASimplex) {
  const ModelConfig cfg = config();
  std::mt19937_64 rng(6);
  auto p = gradcheck_detail::random_params(cfg, rng);
  p.weight.weights.back() *= 100.0;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k = 0; k < 200; ++k) EXPECT_NO_THROW(check_simplex(psf_weights(p, cfg, {u(rng), u(rng), u(rng)})));
  EXPECT_THROW(check_simplex({0.5, 0.6}), std::invalid_argument);
  EXPECT_THROW(check_simplex({1.5, -0.5}), std::invalid_argument);
}

TEST(Blur, OneHotCenterIsIdentity) {
  std::vector<std::array<double, 3>> r(9);
  for (int k = 0; k < 9; ++k) r[k] = {0.1 * (k + 1), 2.0 * k, 3.0};
  std::vector<double> w(9, 0.0);
  w[4] = 1.0;
  const auto out = blur_irradiance(r, w);
  for (int c = 0; c < 3; ++c) EXPECT_EQ(out[c], r[4][c]);
}

TEST(Blur, UniformWeightsAverage) {
  std::vector<std::array<double, 3>> r(9);
  for (int k = 0; k < 9; ++k) r[k] = {0.1 * (k + 1), 1.0, 1.0};
  const auto out = blur_irradiance(r, std::vector<double>(9, 1.0 / 9.0));
  EXPECT_NEAR(out[0], 0.5, 1e-15);
}

TEST(ToneMap, ZeroParametersGiveHalf) {
  const ModelConfig cfg = config();
  const auto p = ModelParams<double>::zeros(cfg);
  for (double v : tone_map(p, cfg, {3.0, -2.0, 0.5}, 1.25)) EXPECT_EQ(v, 0.5);
}

TEST(ToneMap, DependsOnlyOnTheSum) {
  const ModelConfig cfg = config();
  std::mt19937_64 rng(7);
  const auto p = gradcheck_detail::random_params(cfg, rng);
  for (double delta : {-3.0, -0.5, 0.25, 2.0}) {
    const auto a = tone_map(p, cfg, {1.0, -1.5, 0.75}, 0.5);
    const auto b = tone_map(p, cfg, {1.0 + delta, -1.5 + delta, 0.75 + delta}, 0.5 - delta);
    EXPECT_EQ(a, b);
  }
}

TEST(Forward, IdentityPsfZeroToneIsHalfEverywhere) {
  ModelConfig cfg = config();
  cfg.blur = false;
  std::mt19937_64 rng(8);
  auto p = gradcheck_detail::random_params(cfg, rng);
  const auto zero = ModelParams<double>::zeros(cfg);
  p.tone = zero.tone;
  for (double v : forward_pixel(p, cfg, {0.3, 0.1, -1.0}, exposure_meta(p, cfg, 0))) EXPECT_EQ(v, 0.5);
}

TEST(Forward, SingleSamplePatchReducesToToneOfScene) {
  ModelConfig cfg = config();
  cfg.patch = 1;
  std::mt19937_64 rng(9);
  auto p = gradcheck_detail::random_params(cfg, rng);
  p.offset = ModelParams<double>::zeros(cfg).offset;  // offsets at their initial zero
  const PixelPosition c = pixel_position(2, 6, 2, cfg);
  const auto r = scene_irradiance(p, cfg, c);
  const auto expect = tone_map(p, cfg, {std::log2(r[0]), std::log2(r[1]), std::log2(r[2])}, cfg.log2_dt[2]);
  const auto got = forward_pixel(p, cfg, c, exposure_meta(p, cfg, 2));
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(got[k], expect[k], 1e-12);
}

TEST(Forward, PatchBundleReconstructsThePixel) {
  const ModelConfig cfg = config();
  std::mt19937_64 rng(10);
  const auto p = gradcheck_detail::random_params(cfg, rng);
  const PixelPosition c = pixel_position(5, 5, 1, cfg);
  const PatchBundle pb = patch_bundle(p, cfg, c);
  const auto blurred = blur_irradiance(pb.irradiance, pb.weights);
  const auto expect = tone_map(p, cfg, {std::log2(blurred[0]), std::log2(blurred[1]), std::log2(blurred[2])}, 0.0);
  ExposureMeta zero_dt;
  const auto got = forward_pixel(p, cfg, c, zero_dt);
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(got[k], expect[k], 1e-12);
}

TEST(Exposure, KnownAndLearnedModes) {
  ModelConfig cfg = config();
  const auto p = ModelParams<double>::zeros(cfg);
  EXPECT_EQ(exposure_meta(p, cfg, 2).log2_dt, 1.0);
  EXPECT_THROW(exposure_meta(p, cfg, 3), std::out_of_range);

  cfg.exposure_mode = ExposureMode::learned;
  auto q = ModelParams<double>::zeros(cfg);
  q.exposure(1, 0) = -0.75;
  const ExposureMeta m = exposure_meta(q, cfg, 1);
  EXPECT_EQ(m.mode, ExposureMode::learned);
  EXPECT_EQ(m.log2_dt, -0.75);
  ad::Tape<double> t;
  const ModelVars vars = bind(t, q, true);
  const ad::Var row = exposure_row(t, cfg, vars, {1, 1, 0});
  EXPECT_EQ(t.value(row)(0, 1), -0.75);
  t.backward(row, ad::Matrix<double>::Ones(1, 3));
  EXPECT_EQ(t.gradient(vars.exposure)(1, 0), 2.0);
}

TEST(CrfExport, ZeroToneIsConstantHalfTable) {
  const ModelConfig cfg = config();
  const auto p = ModelParams<double>::zeros(cfg);
  const auto table = crf_export(p, cfg, 1, 33);
  ASSERT_EQ(table.size(), 33u);
  for (const auto& s : table) EXPECT_EQ(s.value, 0.5);
  const auto [lo, hi] = tone_domain(p, cfg);
  EXPECT_EQ(table.front().input, lo);
  EXPECT_EQ(table.back().input, hi);
  EXPECT_EQ(hi, cfg.k_log + 1.0);
  EXPECT_THROW(crf_export(p, cfg, 3, 10), std::out_of_range);
  EXPECT_THROW(crf_export(p, cfg, 0, 1), std::invalid_argument);
}
