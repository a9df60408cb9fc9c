#include "ncam/metrics.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace ncam;

namespace {

ImageF constant(int w, int h, float v) { return ImageF(w, h, 3, v); }

ImageF random_image(int w, int h, std::uint64_t seed, float lo = 0.f, float hi = 1.f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(lo, hi);
  ImageF img(w, h);
  for (float& v : img.data) v = u(rng);
  return img;
}

}  // namespace

TEST(MuLaw, EndpointsAndKnownValue) {
  EXPECT_EQ(mu_law(0.0), 0.0);
  EXPECT_DOUBLE_EQ(mu_law(1.0), 1.0);
  EXPECT_NEAR(mu_law(0.01), 0.461623, 1e-6);
  EXPECT_EQ(mu_law(-3.0), 0.0);
  EXPECT_DOUBLE_EQ(mu_law(7.0), 1.0);
}

TEST(Psnr, KnownValuesAndIdentity) {
  EXPECT_DOUBLE_EQ(psnr_from_mse(0.01), 20.0);
  EXPECT_DOUBLE_EQ(psnr_from_mse(0.0001), 40.0);
  EXPECT_TRUE(std::isinf(psnr_from_mse(0.0)));
  const ImageF a = random_image(5, 4, 1);
  EXPECT_TRUE(std::isinf(psnr(a, a)));
  EXPECT_NEAR(psnr(constant(5, 4, 0.5f), constant(5, 4, 0.6f)), 20.0, 1e-5);
}

TEST(Psnr, MaskRestrictsPixels) {
  ImageF a = constant(2, 1, 0.5f), b = constant(2, 1, 0.5f);
  b.at(1, 0, 0) = 0.0f;
  const PixelMask left{true, false};
  EXPECT_TRUE(std::isinf(psnr(a, b, 1.0, &left)));
  EXPECT_THROW(psnr(a, b, 1.0, &(const PixelMask&)PixelMask{false, false}), std::invalid_argument);
  EXPECT_THROW(psnr(a, constant(3, 1, 0.f)), std::invalid_argument);
}

TEST(Ssim, IdenticalIsOne) {
  const ImageF a = random_image(20, 16, 2);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
}

TEST(Ssim, ConstantImagesClosedForm) {
  const double u = 0.3, v = 0.7, c1 = 0.01 * 0.01;
  const double expect = (2 * u * v + c1) / (u * u + v * v + c1);
  EXPECT_NEAR(ssim(constant(16, 13, 0.3f), constant(16, 13, 0.7f)), expect, 1e-6);
  EXPECT_THROW(ssim(constant(8, 8, 0.f), constant(8, 8, 0.f)), std::invalid_argument);
}

TEST(Ssim, SymmetricAndDropsWithNoise) {
  const ImageF a = random_image(24, 24, 3);
  ImageF b = a;
  std::mt19937_64 rng(4);
  std::normal_distribution<float> n(0.f, 0.1f);
  for (float& v : b.data) v += n(rng);
  EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-12);
  EXPECT_LT(ssim(a, b), 0.95);
}

TEST(PsnrMu, MatchesIndependentComputation) {
  const ImageF gt = random_image(9, 7, 5, 0.01f, 4.f);
  const ImageF pred = random_image(9, 7, 6, 0.01f, 4.f);
  // Oracle: closed-form per-channel scale, normalize by gt max, mu-law, PSNR.
  double peak = 0;
  for (float v : gt.data) peak = std::max(peak, static_cast<double>(v));
  double se = 0;
  for (int c = 0; c < 3; ++c) {
    double num = 0, den = 0;
    for (std::size_t p = 0; p < gt.pixels(); ++p) {
      num += static_cast<double>(pred.data[p * 3 + c]) * gt.data[p * 3 + c];
      den += static_cast<double>(pred.data[p * 3 + c]) * pred.data[p * 3 + c];
    }
    const double s = num / den;
    for (std::size_t p = 0; p < gt.pixels(); ++p) {
      const double a = std::log1p(5000 * std::min(1.0, s * pred.data[p * 3 + c] / peak)) / std::log1p(5000.0);
      const double b = std::log1p(5000 * gt.data[p * 3 + c] / peak) / std::log1p(5000.0);
      se += (a - b) * (a - b);
    }
  }
  const double expect = -10 * std::log10(se / static_cast<double>(gt.data.size()));
  EXPECT_NEAR(psnr_mu(pred, gt), expect, 1e-7);
}

TEST(PsnrMu, InvariantToPerChannelScale) {
  const ImageF gt = random_image(8, 8, 7, 0.05f, 2.f);
  ImageF pred = gt;
  for (std::size_t p = 0; p < pred.pixels(); ++p) {
    pred.data[p * 3] *= 4.0f;
    pred.data[p * 3 + 1] *= 0.5f;
    pred.data[p * 3 + 2] *= 0.125f;
  }
  EXPECT_TRUE(std::isinf(psnr_mu(pred, gt)));
  pred.data[0] = 0.f;
  EXPECT_THROW(psnr_mu(pred, gt), std::invalid_argument);
}
