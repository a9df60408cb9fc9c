#include "ncam/gradcheck_suite.hpp"
#include "ncam/losses.hpp"

#include <gtest/gtest.h>

using namespace ncam;
using Md = ad::Matrix<double>;

namespace {

double value(ad::Tape<double>& t, ad::Var v) { return t.value(v)(0, 0); }

Md col3(double a, double b, double c) {
  Md m(3, 1);
  m << a, b, c;
  return m;
}

}  // namespace

TEST(ColorLoss, Identities) {
  ad::Tape<double> t;
  const Md c = col3(0.1, 0.5, 0.9);
  EXPECT_EQ(value(t, color_loss(t, t.constant(c), t.constant(c))), 0.0);
  EXPECT_NEAR(value(t, color_loss(t, t.constant(col3(0.6, 0.5, 0.5)), t.constant(col3(0.5, 0.5, 0.5)))), 0.01 / 3,
              1e-15);
}

TEST(ColorLoss, BatchIsMeanOfPixels) {
  ad::Tape<double> t;
  const Md pred = Md::Random(3, 2), gt = Md::Random(3, 2);
  const double a = value(t, color_loss(t, t.constant(Md(pred.col(0))), t.constant(Md(gt.col(0)))));
  const double b = value(t, color_loss(t, t.constant(Md(pred.col(1))), t.constant(Md(gt.col(1)))));
  EXPECT_NEAR(value(t, color_loss(t, t.constant(pred), t.constant(gt))), (a + b) / 2, 1e-15);
}

TEST(ColorLoss, ShardsWithFullDenominatorSumToFullMean) {
  ad::Tape<double> t;
  const Md pred = Md::Random(3, 10), gt = Md::Random(3, 10);
  const double full = value(t, color_loss(t, t.constant(pred), t.constant(gt)));
  double parts = 0.0;
  for (Eigen::Index s : {0, 4}) {
    const Eigen::Index n = s == 0 ? 4 : 6;
    parts += value(t, color_loss(t, t.constant(Md(pred.middleCols(s, n))), t.constant(Md(gt.middleCols(s, n))), std::optional<double>(30.0)));
  }
  EXPECT_NEAR(parts, full, 1e-15);
}

TEST(FlowLoss, Identities) {
  ad::Tape<double> t;
  Md q(2, 1), r(2, 1);
  q << 0.25, -0.5;
  r << 0.35, -0.5;
  EXPECT_EQ(value(t, flow_loss(t, t.constant(q), t.constant(q))), 0.0);
  EXPECT_NEAR(value(t, flow_loss(t, t.constant(q), t.constant(r))), 0.01, 1e-15);
  const Md a = Md::Random(2, 5), b = Md::Random(2, 5);
  EXPECT_EQ(value(t, flow_loss(t, t.constant(a), t.constant(b))), value(t, flow_loss(t, t.constant(b), t.constant(a))));
}

TEST(WhiteBalance, ZeroToneIsBalanced) {
  const ModelConfig cfg = gradcheck_detail::small_model();
  const auto p = ModelParams<double>::zeros(cfg);
  ad::Tape<double> t;
  EXPECT_EQ(value(t, white_balance_loss(t, cfg, bind(t, p, false), 0.5)), 0.0);
}

TEST(WhiteBalance, OffsetRedChannel) {
  const ModelConfig cfg = gradcheck_detail::small_model();
  auto p = ModelParams<double>::zeros(cfg);
  p.tone[0].biases.back()(0, 0) = std::atanh(0.2);  // T_r(0) = 0.6
  ad::Tape<double> t;
  EXPECT_NEAR(value(t, white_balance_loss(t, cfg, bind(t, p, false), 0.5)), 0.01 / 3, 1e-15);
}

TEST(GradientPenalty, MeanOfNegativePart) {
  ad::Tape<double> t;
  EXPECT_NEAR(value(t, gradient_penalty(t, t.constant(col3(0.3, -0.2, 0.0)))), 0.2 / 3, 1e-16);
  EXPECT_EQ(value(t, gradient_penalty(t, t.constant(col3(0.3, 0.2, 0.0)))), 0.0);
}

TEST(GradientLoss, ConstantAndIncreasingToneMappers) {
  const ModelConfig cfg = gradcheck_detail::small_model();
  std::mt19937_64 rng(1);
  const Md probes = gradcheck_detail::uniform(3, 64, -9, 9, rng);
  auto p = ModelParams<double>::zeros(cfg);
  {
    ad::Tape<double> t;
    EXPECT_EQ(value(t, gradient_loss(t, cfg, bind(t, p, false), probes, 1e-2)), 0.0);
  }
  for (auto& m : p.tone) {
    m.weights[0].setConstant(0.1);
    m.biases[0].setConstant(50.0);
    m.weights[1].setConstant(0.02);
    m.biases[1].setConstant(-0.02 * 50.0 * static_cast<double>(m.weights[0].rows()));
  }
  ad::Tape<double> t;
  const ModelVars v = bind(t, p, false);
  EXPECT_TRUE((t.value(tone_slopes(t, cfg, v, probes, 1e-2)).array() > 0).all());
  EXPECT_EQ(value(t, gradient_loss(t, cfg, v, probes, 1e-2)), 0.0);
}

TEST(GradientLoss, DecreasingToneMapperIsPenalized) {
  const ModelConfig cfg = gradcheck_detail::small_model();
  auto p = ModelParams<double>::zeros(cfg);
  for (auto& m : p.tone) {
    m.weights[0].setConstant(-0.1);
    m.biases[0].setConstant(50.0);
    m.weights[1].setConstant(0.02);
    m.biases[1].setConstant(-0.02 * 50.0 * static_cast<double>(m.weights[0].rows()));
  }
  Md probes = Md::Zero(3, 4);
  ad::Tape<double> t;
  EXPECT_GT(value(t, gradient_loss(t, cfg, bind(t, p, false), probes, 1e-2)), 0.0);
  EXPECT_THROW(gradient_loss(t, cfg, bind(t, p, false), probes, 0.0), std::invalid_argument);
  EXPECT_THROW(gradient_loss(t, cfg, bind(t, p, false), Md(Md::Zero(2, 4)), 1e-2), std::invalid_argument);
}

TEST(FlowSchedule, LinearDecay) {
  LossWeights w;
  w.flow_decay = 400;
  EXPECT_EQ(flow_weight_schedule(0, 1000, w), 100.0);
  EXPECT_EQ(flow_weight_schedule(200, 1000, w), 50.0);
  EXPECT_EQ(flow_weight_schedule(400, 1000, w), 0.0);
  EXPECT_EQ(flow_weight_schedule(900, 1000, w), 0.0);
  LossWeights d;
  EXPECT_EQ(flow_weight_schedule(250, 1000, d), 50.0);
  EXPECT_EQ(flow_weight_schedule(500, 1000, d), 0.0);
  EXPECT_THROW(flow_weight_schedule(-1, 1000, d), std::invalid_argument);
}

TEST(TotalLoss, WeightedSum) {
  LossWeights w;
  EXPECT_EQ(total_loss({}, 100.0, w), 0.0);
  const LossTerms t{0.5, 7.0, 0.25, 0.125};
  EXPECT_EQ(total_loss(t, 0.0, w), 0.5 + 0.25 + 12.5);
  EXPECT_EQ(total_loss(t, 2.0, w), 0.5 + 14.0 + 0.25 + 12.5);
}

TEST(TotalLoss, RecordedMatchesScalar) {
  LossWeights w;
  ad::Tape<double> t;
  auto s = [&](double v) { return t.constant(Md::Constant(1, 1, v)); };
  const ad::Var tot = weighted_total(t, s(0.5), s(7.0), s(0.25), s(0.125), 3.0, w);
  EXPECT_EQ(value(t, tot), total_loss({0.5, 7.0, 0.25, 0.125}, 3.0, w));
  EXPECT_EQ(value(t, weighted_total(t, ad::Var{}, ad::Var{}, ad::Var{}, ad::Var{}, 3.0, w)), 0.0);
}

TEST(LossWeights, RejectsNegative) {
  LossWeights w;
  w.gradient = -1;
  EXPECT_THROW(check_non_negative(w), std::invalid_argument);
}
