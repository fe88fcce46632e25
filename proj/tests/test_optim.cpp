#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace decur;

namespace {

Parameter weight(std::vector<double> v) { return {"w", Tensor::row(std::move(v)), false, true}; }
Parameter bias(std::vector<double> v) { return {"b", Tensor::row(std::move(v)), true, true}; }

OptimConfig config(OptimKind k, double mu, double wd) {
  OptimConfig c;
  c.kind = k;
  c.momentum = mu;
  c.weight_decay = wd;
  return c;
}

void step(Parameter &p, const Tensor &g, OptimState &s, const OptimConfig &c, double lr) {
  std::vector<Parameter *> ps{&p};
  optimizer_step(ps, {{p.name, g}}, s, c, {lr, lr});
}

} // namespace

TEST(Cosine, Endpoints) {
  EXPECT_DOUBLE_EQ(cosine_lr(0.2, 0, 100), 0.2);
  EXPECT_NEAR(cosine_lr(0.2, 100, 100), 0.0, 1e-17);
  EXPECT_NEAR(cosine_lr(0.2, 50, 100), 0.1, 1e-15);
  EXPECT_THROW(cosine_lr(0.2, 101, 100), std::out_of_range);
}

TEST(Cosine, MonotoneNonIncreasing) {
  double prev = cosine_lr(1.0, 0, 997);
  for (std::size_t s = 1; s <= 997; ++s) {
    const double v = cosine_lr(1.0, s, 997);
    ASSERT_LE(v, prev);
    prev = v;
  }
}

TEST(Sgd, VanillaDescent) {
  auto p = weight({1.0, -2.0});
  OptimState s;
  step(p, Tensor::row({0.5, 0.25}), s, config(OptimKind::sgd, 0.0, 0.0), 0.1);
  EXPECT_DOUBLE_EQ(p.value.data[0], 1.0 - 0.05);
  EXPECT_DOUBLE_EQ(p.value.data[1], -2.0 - 0.025);
  EXPECT_EQ(s.step, 1u);
}

TEST(Sgd, MomentumTwoStepRecurrence) {
  auto p = weight({0.0});
  OptimState s;
  const auto c = config(OptimKind::sgd, 0.9, 0.0);
  step(p, Tensor::row({1.0}), s, c, 0.1);
  const double after1 = p.value.data[0];
  step(p, Tensor::row({1.0}), s, c, 0.1);
  EXPECT_NEAR(p.value.data[0] - after1, -0.1 * 1.9 * 1.0, 1e-15);
}

TEST(Sgd, ExcludedBiasIgnoresWeightDecay) {
  auto a = bias({1.0, 2.0}), b = bias({1.0, 2.0});
  OptimState sa, sb;
  for (int i = 0; i < 3; ++i) {
    step(a, Tensor::row({0.3, -0.1}), sa, config(OptimKind::sgd, 0.9, 0.01), 0.1);
    step(b, Tensor::row({0.3, -0.1}), sb, config(OptimKind::sgd, 0.9, 0.0), 0.1);
  }
  EXPECT_EQ(a.value, b.value);
}

TEST(Sgd, WeightDecayEntersTheMomentum) {
  auto p = weight({2.0});
  OptimState s;
  step(p, Tensor::row({0.0}), s, config(OptimKind::sgd, 0.0, 0.5), 0.1);
  EXPECT_DOUBLE_EQ(p.value.data[0], 2.0 - 0.1 * 0.5 * 2.0);
}

TEST(Lars, UnitTrustRatioMatchesSgd) {
  auto a = weight({3.0, 4.0}), b = weight({3.0, 4.0});
  OptimState sa, sb;
  auto lars = config(OptimKind::lars, 0.0, 0.0);
  lars.lars_eta = 1.0;
  step(a, Tensor::row({4.0, 3.0}), sa, lars, 0.1); // |w| == |g| == 5
  step(b, Tensor::row({4.0, 3.0}), sb, config(OptimKind::sgd, 0.0, 0.0), 0.1);
  EXPECT_NEAR(a.value.data[0], b.value.data[0], 1e-9);
  EXPECT_NEAR(a.value.data[1], b.value.data[1], 1e-9);
}

TEST(Lars, TrustRatioFormula) {
  auto p = weight({3.0, 4.0});
  OptimState s;
  auto c = config(OptimKind::lars, 0.0, 0.1);
  c.lars_eta = 0.01;
  step(p, Tensor::row({1.0, 0.0}), s, c, 1.0);
  const double trust = 0.01 * 5.0 / (1.0 + 0.1 * 5.0 + 1e-9);
  EXPECT_NEAR(p.value.data[0], 3.0 - trust * (1.0 + 0.1 * 3.0), 1e-14);
  EXPECT_NEAR(p.value.data[1], 4.0 - trust * (0.0 + 0.1 * 4.0), 1e-14);
}

TEST(Lars, GradientScaleInvariance) {
  auto a = weight({0.5, -1.0, 2.0}), b = a;
  b.name = "w";
  OptimState sa, sb;
  const auto c = config(OptimKind::lars, 0.9, 0.0);
  step(a, Tensor::row({0.1, 0.2, -0.3}), sa, c, 0.2);
  step(b, Tensor::row({1.0, 2.0, -3.0}), sb, c, 0.2);
  for (std::size_t i = 0; i < 3; ++i)
    EXPECT_NEAR(a.value.data[i], b.value.data[i], 1e-9);
}

TEST(Lars, ZeroWeightFallsBackToUnitTrust) {
  auto p = weight({0.0, 0.0});
  OptimState s;
  step(p, Tensor::row({1.0, -1.0}), s, config(OptimKind::lars, 0.0, 0.0), 0.1);
  EXPECT_DOUBLE_EQ(p.value.data[0], -0.1);
  EXPECT_DOUBLE_EQ(p.value.data[1], 0.1);
}

TEST(Lars, ExcludedParametersUseBiasRateWithoutTrust) {
  auto p = bias({1.0});
  OptimState s;
  std::vector<Parameter *> ps{&p};
  optimizer_step(ps, {{"b", Tensor::row({1.0})}}, s, config(OptimKind::lars, 0.0, 0.5), {0.2, 0.01});
  EXPECT_DOUBLE_EQ(p.value.data[0], 1.0 - 0.01);
}

TEST(Lars, ExclusionExactAcrossWeightDecay) {
  auto a = bias({1.0, -1.0}), b = bias({1.0, -1.0});
  OptimState sa, sb;
  for (int i = 0; i < 5; ++i) {
    step(a, Tensor::row({0.2, 0.1}), sa, config(OptimKind::lars, 0.9, 0.0), 0.1);
    step(b, Tensor::row({0.2, 0.1}), sb, config(OptimKind::lars, 0.9, 1e-6), 0.1);
  }
  EXPECT_EQ(a.value, b.value);
}

TEST(Optim, NonFiniteGradientAbortsBeforeAnyUpdate) {
  auto a = weight({1.0});
  Parameter b{"v", Tensor::row({2.0}), false, true};
  OptimState s;
  std::vector<Parameter *> ps{&a, &b};
  try {
    optimizer_step(ps, {{"w", Tensor::row({1.0})}, {"v", Tensor::row({std::nan("")})}}, s,
                   config(OptimKind::sgd, 0.0, 0.0), {0.1, 0.1});
    FAIL() << "expected NumericFailure";
  } catch (const NumericFailure &e) {
    EXPECT_NE(std::string(e.what()).find("v"), std::string::npos);
  }
  EXPECT_EQ(a.value.data[0], 1.0);
  EXPECT_EQ(s.step, 0u);
}

TEST(Optim, ShapeMismatchRejected) {
  auto a = weight({1.0, 2.0});
  OptimState s;
  std::vector<Parameter *> ps{&a};
  EXPECT_THROW(optimizer_step(ps, {{"w", Tensor::row({1.0})}}, s, config(OptimKind::sgd, 0.0, 0.0), {0.1, 0.1}),
               ShapeError);
}

TEST(Optim, ConfigValidation) {
  OptimConfig c;
  c.momentum = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.lars_eta = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(parse_optim("adam"), ConfigError);
}
