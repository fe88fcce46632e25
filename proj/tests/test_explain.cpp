#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace decur;
using testutil::random_matrix;

namespace {

// F(x) = w . x for each row.
RowScalarFn linear_fn(const Tensor &w) {
  return [w](Graph &g, Var x) { return matmul(x, g.constant(w)); };
}

// Smooth, ReLU-free nonlinearity: F(x) = sum_j sin(x_j) * x_j^2 + (w . x)^2.
RowScalarFn smooth_fn(const Tensor &w) {
  return [w](Graph &g, Var x) {
    Var lin = matmul(x, g.constant(w));
    Var q = mul(x, x);
    return add(matmul(mul(q, q), g.constant(Tensor(Shape{x.cols(), 1}, 0.1))), mul(lin, lin));
  };
}

DecurModel small_model(const SyntheticSpec &s, std::size_t K) {
  TrainConfig c;
  c.embed_dim = K;
  c.model.encoder_widths = {32, 16};
  return DecurModel::create(c, s.d_x1, s.d_x2);
}

} // namespace

TEST(AlignmentHistogram, SelfAlignmentIsADeltaAtZero) {
  const auto z = random_matrix(64, 10, 1);
  const auto h = alignment_histogram(z, z, 10);
  EXPECT_EQ(h.counts[0], 10u);
  for (double l : h.losses)
    EXPECT_LT(l, 1e-8);
  std::size_t total = 0;
  for (auto c : h.counts)
    total += c;
  EXPECT_EQ(total, 10u);
}

TEST(AlignmentHistogram, IndependentEmbeddingsSitNearOne) {
  // Monte-Carlo envelope: C_ii ~ N(0, 1/N), so E[(1 - C_ii)^2] = 1 + 1/N.
  const auto h = alignment_histogram(random_matrix(256, 64, 2), random_matrix(256, 64, 3));
  EXPECT_GE(h.mean_loss(0, 64), 0.9);
  EXPECT_LE(h.mean_loss(0, 64), 1.1);
}

TEST(AlignmentHistogram, MatchesBruteForceLosses) {
  const auto a = random_matrix(30, 5, 4), b = random_matrix(30, 5, 5);
  const auto C = testutil::pearson_matrix(a, b);
  const auto h = alignment_histogram(a, b, 4);
  for (std::size_t i = 0; i < 5; ++i)
    EXPECT_NEAR(h.losses[i], (1 - C[i][i]) * (1 - C[i][i]), 1e-12);
  EXPECT_EQ(h.edges.size(), 5u);
  EXPECT_THROW(alignment_histogram(random_matrix(1, 3, 1), random_matrix(1, 3, 1)), BatchTooSmallError);
}

TEST(IntegratedGradients, LinearModelIsExact) {
  const auto w = random_matrix(6, 1, 1);
  const auto X = random_matrix(3, 6, 2);
  const auto base = random_matrix(1, 6, 3);
  for (std::size_t m : {8u, 13u, 64u}) {
    const auto att = integrated_gradients(linear_fn(w), X, m, base);
    for (std::size_t r = 0; r < 3; ++r) {
      for (std::size_t j = 0; j < 6; ++j)
        EXPECT_NEAR(att[r].values[j], (X(r, j) - base.data[j]) * w.data[j], 1e-12);
      EXPECT_LT(att[r].residual, 1e-12);
    }
  }
}

TEST(IntegratedGradients, InputAtBaselineGivesZero) {
  const auto X = random_matrix(1, 4, 4);
  const auto att = integrated_gradients(smooth_fn(random_matrix(4, 1, 5)), X, 16, X);
  for (double v : att[0].values)
    EXPECT_EQ(v, 0.0);
}

TEST(IntegratedGradients, ResidualShrinksMonotonicallyOnSmoothModel) {
  const auto f = smooth_fn(random_matrix(5, 1, 6));
  const auto X = random_matrix(4, 5, 7);
  std::vector<double> prev(4, std::numeric_limits<double>::infinity());
  for (std::size_t m : {8u, 16u, 32u, 64u, 128u, 256u}) {
    const auto att = integrated_gradients(f, X, m);
    for (std::size_t r = 0; r < 4; ++r) {
      EXPECT_LT(att[r].residual, prev[r]) << "m=" << m;
      prev[r] = att[r].residual;
    }
  }
}

TEST(IntegratedGradients, RightRiemannRuleByHand) {
  // F(x) = x^2 in 1-D from 0 to 1 with m steps: (1/m) sum 2k/m = (m+1)/m.
  const RowScalarFn sq = [](Graph &, Var x) { return mul(x, x); };
  const auto att = integrated_gradients(sq, Tensor::matrix({{1.0}}), 8);
  EXPECT_NEAR(att[0].values[0], 9.0 / 8.0, 1e-14);
  EXPECT_NEAR(att[0].residual, 1.0 / 8.0, 1e-14);
}

TEST(IntegratedGradients, Errors) {
  const auto w = random_matrix(3, 1, 1);
  EXPECT_THROW(integrated_gradients(linear_fn(w), random_matrix(1, 3, 1), 7), ConfigError);
  EXPECT_THROW(integrated_gradients(linear_fn(w), random_matrix(1, 3, 1), 8, random_matrix(1, 2, 1)), ShapeError);
  // Overflows to inf in both value and gradient along the path.
  const RowScalarFn overflow = [](Graph &g, Var x) {
    Var big = scalar_mul(x, 1e200);
    return matmul(square(big), g.constant(Tensor(Shape{x.cols(), 1}, 1.0)));
  };
  EXPECT_THROW(integrated_gradients(overflow, random_matrix(1, 3, 3), 8), NumericFailure);
}

TEST(IntegratedGradients, ModelTargetsOnUntrainedNet) {
  SyntheticSpec s;
  s.d_x1 = 16;
  s.d_x2 = 12;
  const auto ds = generate(s, 64);
  const auto model = small_model(s, 8);
  const DimSplit split(8, 6);
  const auto X = take_rows(ds.observed.x1, {0, 1, 2});
  for (auto role : {DimRole::common, DimRole::unique}) {
    const auto att = integrated_gradients(embedding_target(model.m1, role, split), X, 256, {}, role);
    for (const auto &a : att) {
      EXPECT_EQ(a.values.size(), 16u);
      EXPECT_EQ(a.target, role);
      EXPECT_LT(a.residual, 0.05 * std::abs(a.delta()) + 1e-9);
    }
  }
  EXPECT_THROW(embedding_target(model.m1, DimRole::unique, DimSplit(8, 8)), ConfigError);
  EXPECT_THROW(embedding_target(model.m1, DimRole::common, DimSplit(10, 6)), ShapeError);
}

TEST(SpectralSaliency, IsASimplexVector) {
  const auto f = smooth_fn(random_matrix(7, 1, 8));
  const auto imp = spectral_saliency(f, random_matrix(20, 7, 9), 16, 6);
  double s = 0.0;
  for (double v : imp) {
    EXPECT_GE(v, 0.0);
    s += v;
  }
  EXPECT_NEAR(s, 1.0, 1e-9);
  EXPECT_EQ(imp.size(), 7u);
}

TEST(SpectralSaliency, ChunkingDoesNotChangeTheResult) {
  const auto f = smooth_fn(random_matrix(4, 1, 10));
  const auto X = random_matrix(9, 4, 11);
  const auto a = spectral_saliency(f, X, 16, 1), b = spectral_saliency(f, X, 16, 9);
  for (std::size_t j = 0; j < 4; ++j)
    EXPECT_NEAR(a[j], b[j], 1e-12);
}

TEST(SpectralSaliency, LinearModelWeightsShowUp) {
  // Only coordinates 0 and 1 matter: all importance lands there.
  Tensor w({5, 1});
  w.data[0] = 2.0;
  w.data[1] = -1.0;
  const auto imp = spectral_saliency(linear_fn(w), random_matrix(50, 5, 12), 8);
  EXPECT_NEAR(imp[0] + imp[1], 1.0, 1e-12);
  EXPECT_GT(imp[0], imp[1]);
}

TEST(Overlap, IdenticalMapsMaximiseRawScore) {
  const std::vector<double> a{0.1, 0.9, 0.4, 0.0, 0.7};
  const double self = overlap_raw(a, a);
  std::mt19937_64 rng(1);
  for (int k = 0; k < 20; ++k) {
    auto b = a;
    std::shuffle(b.begin(), b.end(), rng);
    EXPECT_LE(overlap_raw(a, b), self + 1e-15);
  }
}

TEST(Overlap, DisjointSupportsScoreZero) {
  const std::vector<double> a{1, 1, 0, 0}, b{0, 0, 1, 1};
  EXPECT_EQ(overlap_raw(a, b), 0.0);
  AttributionMap ma, mb, mc;
  ma.values = a;
  mb.values = b;
  mc.values = a;
  // Sample 0 disjoint, sample 1 identical: after log + dataset min-max the
  // disjoint sample sits at 0 and the identical one at 1.
  const auto st = saliency_overlap({ma, ma}, {mb, mc}, {ma, ma}, {mb, mb});
  EXPECT_EQ(st.common_score[0], 0.0);
  EXPECT_EQ(st.common_score[1], 1.0);
  EXPECT_EQ(st.unique_score[1], 0.0); // one scale for both lists
  const auto ps = saliency_overlap({ma, ma}, {mb, mc}, {ma, ma}, {mb, mb}, OverlapNormalization::per_sample);
  EXPECT_EQ(ps.common_score[0], 0.0);
  EXPECT_NEAR(ps.common_score[1], 0.5, 1e-15);
  EXPECT_THROW(saliency_overlap({}, {}, {}, {}), std::invalid_argument);
}

TEST(Overlap, ResamplingToShorterLength) {
  const std::vector<double> v{0.0, 1.0, 2.0, 3.0, 4.0};
  EXPECT_EQ(resample_linear(v, 3), (std::vector<double>{0.0, 2.0, 4.0}));
  const auto r = resample_linear(v, 4);
  EXPECT_NEAR(r[1], 4.0 / 3.0, 1e-15);
  const std::vector<double> longer(10, 1.0), shorter{1.0, 0.0, 1.0};
  EXPECT_NO_THROW(overlap_raw(longer, shorter));
}

TEST(ExportEmbeddings, RowsRolesAndParseBack) {
  const auto z1 = random_matrix(7, 6, 1), z2 = random_matrix(7, 6, 2);
  const DimSplit split(6, 4);
  const auto dir = testutil::temp_dir("export");
  write_text_file(dir / "e.csv", embeddings_csv(z1, z2, split));
  std::istringstream is(read_text_file(dir / "e.csv"));
  std::string line;
  std::getline(is, line);
  std::size_t rows = 0, common[3] = {0, 0, 0};
  while (std::getline(is, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string c;
    while (std::getline(ls, c, ','))
      cells.push_back(c);
    ASSERT_EQ(cells.size(), 3u + 7u);
    const int m = std::stoi(cells[0]);
    const auto k = std::stoul(cells[1]);
    if (cells[2] == "common")
      ++common[m];
    const auto &z = m == 1 ? z1 : z2;
    for (std::size_t i = 0; i < 7; ++i)
      EXPECT_EQ(std::stof(cells[3 + i]), static_cast<float>(z(i, k)));
    ++rows;
  }
  EXPECT_EQ(rows, 12u);
  EXPECT_EQ(common[1], 4u);
  EXPECT_EQ(common[2], 4u);
}

TEST(Explain, RepeatedCallsAreIdentical) {
  SyntheticSpec s;
  s.d_x1 = 16;
  s.d_x2 = 12;
  const auto ds = generate(s, 40);
  const auto model = small_model(s, 8);
  const DimSplit split(8, 6);
  const auto f = embedding_target(model.m1, DimRole::unique, split);
  EXPECT_EQ(spectral_saliency(f, ds.observed.x1, 16), spectral_saliency(f, ds.observed.x1, 16));
  const auto z1 = embed_eval(model.m1, ds.observed.x1), z2 = embed_eval(model.m2, ds.observed.x2);
  EXPECT_EQ(alignment_histogram(z1, z2).losses, alignment_histogram(z1, z2).losses);
}
