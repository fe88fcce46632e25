#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace decur;
using testutil::random_matrix;

TEST(Linear, GlorotBoundAndDeterminism) {
  LinearLayer a("a", 100, 100), b("b", 100, 100);
  Rng r1 = make_rng(0), r2 = make_rng(0);
  a.init(r1);
  b.init(r2);
  EXPECT_EQ(a.weight.value, b.weight.value);
  const double bound = std::sqrt(6.0 / 200.0);
  for (double w : a.weight.value.data)
    EXPECT_LE(std::abs(w), bound);
  for (double v : a.bias.value.data)
    EXPECT_EQ(v, 0.0);
}

TEST(Linear, GlorotMeanWithinThreeSigma) {
  // 10k draws of U(-a, a): sd of the mean is a / sqrt(3 * 10000).
  LinearLayer l("l", 100, 100);
  Rng rng = make_rng(5);
  l.init(rng);
  double m = 0.0;
  for (double w : l.weight.value.data)
    m += w;
  m /= 10000.0;
  const double a = std::sqrt(6.0 / 200.0);
  EXPECT_LT(std::abs(m), 3.0 * a / std::sqrt(3.0 * 10000.0));
}

TEST(Linear, IdentityOverrideReproducesInput) {
  LinearLayer l("id", 3, 3);
  for (std::size_t i = 0; i < 3; ++i)
    l.weight.value(i, i) = 1.0;
  Graph g;
  Binding bind(g, false);
  const auto x = random_matrix(4, 3, 1);
  EXPECT_EQ(l.forward(bind, g.constant(x)).value(), x);
}

TEST(Linear, RejectsBadWidths) {
  EXPECT_THROW(LinearLayer("z", 0, 3), ConfigError);
  EXPECT_THROW(EncoderModel("e", 4, {8, 0}), ConfigError);
  EXPECT_THROW(EncoderModel("e", 4, {}), ConfigError);
}

TEST(BatchNorm, TrainModeOutputHasZeroMean) {
  EncoderModel enc("e", 6, {16, 8});
  Rng rng = make_rng(1);
  enc.init(rng);
  Graph g;
  Binding bind(g, true);
  // Post-BN, pre-ReLU activations of the first block.
  const auto x = random_matrix(32, 6, 2, 3.0);
  auto &b0 = enc.blocks()[0];
  Var h = b0.bn->forward_train(bind, b0.linear.forward(bind, g.constant(x)));
  for (std::size_t j = 0; j < 16; ++j) {
    double m = 0.0;
    for (std::size_t i = 0; i < 32; ++i)
      m += h.value()(i, j);
    EXPECT_LT(std::abs(m / 32.0), 1e-8);
  }
}

TEST(BatchNorm, TrainModeNeedsTwoSamples) {
  EncoderModel enc("e", 3, {4});
  Rng rng = make_rng(1);
  enc.init(rng);
  Graph g;
  Binding bind(g, true);
  EXPECT_THROW(enc.forward(bind, g.constant(random_matrix(1, 3, 1)), Mode::train), BatchTooSmallError);
}

TEST(BatchNorm, RunningStatsFollowMomentum) {
  BatchNormLayer bn("bn", 1, 0.1, 1e-5);
  bn.init();
  Graph g;
  Binding bind(g, true);
  bn.forward_train(bind, g.constant(Tensor::matrix({{1.0}, {3.0}})));
  // mean 2, unbiased var 2.
  EXPECT_DOUBLE_EQ(bn.running_mean.value.data[0], 0.2);
  EXPECT_DOUBLE_EQ(bn.running_var.value.data[0], 0.9 * 1.0 + 0.1 * 2.0);
}

TEST(ModalityNet, EvalIsBatchIndependent) {
  ModelConfig mc;
  mc.encoder_widths = {16, 8};
  ModalityNet net("m", 5, 6, mc);
  Rng rng = make_rng(3);
  net.init(rng);
  // Give BN non-trivial running stats.
  Graph g;
  Binding bind(g, true);
  net.embed(bind, g.constant(random_matrix(16, 5, 4)), Mode::train);
  const auto both = random_matrix(2, 5, 9);
  const auto z2 = embed_eval(net, both);
  const auto z1 = embed_eval(net, take_rows(both, {1}));
  // Equal up to rounding: Eigen picks different product kernels for 1 and 2 rows.
  for (std::size_t j = 0; j < 6; ++j)
    EXPECT_NEAR(z1(0, j), z2(1, j), 1e-12);
}

TEST(ModalityNet, ShapeChainForSeveralK) {
  for (std::size_t K : {64u, 128u, 512u}) {
    ModelConfig mc;
    mc.encoder_widths = {32, 16};
    ModalityNet net("m", 7, K, mc);
    Rng rng = make_rng(K);
    net.init(rng);
    const auto x = random_matrix(4, 7, 1);
    EXPECT_EQ(encode_eval(net, x).shape, (Shape{4, 16}));
    EXPECT_EQ(embed_eval(net, x).shape, (Shape{4, K}));
    EXPECT_EQ(net.embed_dim(), K);
  }
}

TEST(ModalityNet, ZeroInputGivesFiniteOutput) {
  ModelConfig mc;
  mc.encoder_widths = {8};
  ModalityNet net("m", 3, 4, mc);
  Rng rng = make_rng(2);
  net.init(rng);
  Graph g;
  Binding bind(g, true);
  const auto z = net.embed(bind, g.constant(Tensor({4, 3})), Mode::train).value();
  EXPECT_TRUE(all_finite(z));
}

TEST(ModalityNet, ProjectorGradientPassesGradCheck) {
  ModelConfig mc;
  mc.encoder_widths = {6};
  ModalityNet net("m", 3, 4, mc);
  Rng rng = make_rng(8);
  net.init(rng);
  const auto x = random_matrix(6, 3, 2);
  auto &proj = *net.projector;
  std::vector<Tensor> leaves;
  for (auto *p : proj.parameters())
    if (p->trainable)
      leaves.push_back(p->value);
  const auto rep = grad_check(
      [&](Graph &g, std::span<const Var> v) {
        Binding bind(g, false);
        Var f = net.encoder.forward(bind, g.constant(x), Mode::train);
        Var h = f;
        std::size_t k = 0;
        for (const auto &b : proj.blocks()) {
          h = add_row(matmul(h, transpose(v[k])), v[k + 1]);
          k += 2;
          if (b.bn) {
            h = add_row(mul_row(batch_standardize(h, b.bn->eps), v[k]), v[k + 1]);
            k += 2;
          }
          if (b.relu)
            h = relu(h);
        }
        return mean_axis(mean_axis(h, 0), 1);
      },
      leaves, 1e-5, 1e-4);
  EXPECT_TRUE(rep.passed) << rep.message;
}

TEST(ModalityNet, NoProjectorNeedsMatchingWidth) {
  ModelConfig mc;
  mc.encoder_widths = {16, 8};
  mc.use_projector = false;
  EXPECT_THROW(ModalityNet("m", 4, 6, mc), ConfigError);
  ModalityNet ok("m", 4, 8, mc);
  EXPECT_EQ(ok.embed_dim(), 8u);
}

TEST(Binding, SameParameterBindsOnce) {
  LinearLayer l("l", 2, 2);
  Graph g;
  Binding bind(g, true);
  EXPECT_EQ(bind(l.weight).id, bind(l.weight).id);
}
