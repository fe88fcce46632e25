#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace decur;
using testutil::random_matrix;

TEST(Split, FixedAndAboutOneFifth) {
  const auto a = holdout_split(10000), b = holdout_split(10000);
  EXPECT_EQ(a.test, b.test);
  EXPECT_NEAR(static_cast<double>(a.test.size()) / 10000.0, 0.2, 0.02);
  EXPECT_EQ(a.train.size() + a.test.size(), 10000u);
}

TEST(Ridge, MatchesNormalEquationsOracle) {
  // Closed form solved independently with a dense inverse of the augmented
  // system, intercept handled by explicit centring.
  const auto X = random_matrix(40, 5, 1), Y = random_matrix(40, 2, 2);
  const double lambda = 0.3;
  const auto fit = ridge_fit(to_eigen(X), to_eigen(Y), lambda);
  Eigen::MatrixXd Xc = to_eigen(X), Yc = to_eigen(Y);
  for (Eigen::Index j = 0; j < Xc.cols(); ++j)
    Xc.col(j).array() -= Xc.col(j).mean();
  for (Eigen::Index j = 0; j < Yc.cols(); ++j)
    Yc.col(j).array() -= Yc.col(j).mean();
  const Eigen::MatrixXd W =
      (Xc.transpose() * Xc + lambda * Eigen::MatrixXd::Identity(5, 5)).inverse() * Xc.transpose() * Yc;
  EXPECT_LT((fit.weights - W).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Ridge, PerfectLinearTargetGivesUnitR2) {
  const auto X = random_matrix(200, 4, 3);
  Tensor Y({200, 1});
  for (std::size_t i = 0; i < 200; ++i)
    Y(i, 0) = 2.0 * X(i, 0) - X(i, 3) + 0.5;
  EXPECT_NEAR(ridge_r2(X, Y, holdout_split(200), 1e-6), 1.0, 1e-6);
}

TEST(Ridge, RankDeficientDesignStillSolves) {
  auto X = random_matrix(50, 3, 4);
  for (std::size_t i = 0; i < 50; ++i)
    X(i, 2) = X(i, 0);
  EXPECT_TRUE(std::isfinite(ridge_r2(X, random_matrix(50, 1, 5), holdout_split(50), 1e-3)));
}

TEST(Recovery, LatentsAsEmbeddingsRecoverTheirOwnGroup) {
  const auto ds = generate(SyntheticSpec{}, 2048);
  // Embedding = [z_s, u_m]: common block is z_s, unique block is u_m.
  const auto z1 = hconcat(ds.truth.z_s, ds.truth.u1), z2 = hconcat(ds.truth.z_s, ds.truth.u2);
  const auto rep = latent_recovery(z1, z2, ds.truth, DimSplit(12, 8));
  EXPECT_GT(rep.at(EmbeddingBlock::m1_common, LatentGroup::shared), 0.999);
  EXPECT_GT(rep.at(EmbeddingBlock::m1_unique, LatentGroup::u1), 0.999);
  EXPECT_GT(rep.at(EmbeddingBlock::m2_unique, LatentGroup::u2), 0.999);
  EXPECT_LT(rep.at(EmbeddingBlock::m1_unique, LatentGroup::shared), 0.02);
  EXPECT_LT(rep.at(EmbeddingBlock::m1_common, LatentGroup::u1), 0.02);
  EXPECT_LT(rep.at(EmbeddingBlock::m1_common, LatentGroup::u2), 0.02);
}

TEST(Recovery, RejectsMismatchedSplit) {
  const auto ds = generate(SyntheticSpec{}, 64);
  EXPECT_THROW(latent_recovery(ds.truth.z_s, ds.truth.z_s, ds.truth, DimSplit(12, 8)), ShapeError);
}

TEST(Probe, SeparableFeaturesAreLearned) {
  const auto ds = generate(SyntheticSpec{}, 2048);
  // Labels are sign patterns of z_s: separable, but with no margin.
  const auto r = train_linear_probe(ds.truth.z_s, ds.truth.labels, 8, ProbeConfig{});
  EXPECT_GT(r.accuracy, 0.93);
  EXPECT_EQ(r.per_class_accuracy.size(), 8u);
  EXPECT_EQ(r.n_train + r.n_test, 2048u);
}

TEST(Probe, UninformativeFeaturesStayNearChance) {
  const auto ds = generate(SyntheticSpec{}, 2048);
  const auto r = train_linear_probe(ds.truth.u1, ds.truth.labels, 8, ProbeConfig{});
  EXPECT_LT(r.accuracy, 0.2);
}

TEST(Probe, SingleClassSplitIsAnError) {
  std::vector<std::int32_t> labels(100, 3);
  EXPECT_THROW(train_linear_probe(random_matrix(100, 2, 1), labels, 8, ProbeConfig{}), std::invalid_argument);
}

TEST(Probe, EncoderParametersUntouchedAndModesDiffer) {
  SyntheticSpec s;
  s.d_x1 = 16;
  s.d_x2 = 16;
  const auto ds = generate(s, 512);
  TrainConfig c;
  c.embed_dim = 16;
  c.epochs = 1;
  c.batch_size = 64;
  c.model.encoder_widths = {32, 16};
  const auto model = model_from_checkpoint(train(c, ds.observed).checkpoint);
  const auto before = encode_checkpoint(train(c, ds.observed).checkpoint);
  EXPECT_EQ(probe_features(model, ds.observed, ProbeMode::multimodal).cols(), 32u);
  EXPECT_EQ(probe_features(model, ds.observed, ProbeMode::m1_only).cols(), 16u);
  ProbeConfig pc;
  pc.epochs = 5;
  const auto a = linear_probe(model, ds, ProbeMode::m1_only, pc);
  const auto b = linear_probe(model, ds, ProbeMode::m1_only, pc);
  EXPECT_EQ(a.accuracy, b.accuracy);
  // The model is only read: its parameters still equal the trained ones.
  auto snapshot = train(c, ds.observed).checkpoint;
  snapshot.params.clear();
  for (const auto *p : model.parameters())
    snapshot.params.emplace_back(p->name, p->value);
  EXPECT_EQ(encode_checkpoint(snapshot), before);
}
