#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace decur;
using testutil::random_matrix;

namespace {

GradCheckReport check(const ExprBuilder &f, std::vector<Tensor> leaves) { return grad_check(f, leaves, 1e-5, 1e-6); }

} // namespace

TEST(Autodiff, MatmulGradientIsOuterProductForm) {
  // d sum(A B) / dA = 1 B^T, computed by hand.
  const auto A = Tensor::matrix({{1, 2}, {3, 4}});
  const auto B = Tensor::matrix({{5, 6, 7}, {8, 9, 10}});
  Graph g;
  Var a = g.leaf(A, true), b = g.leaf(B, true);
  g.backward(sum(matmul(a, b)));
  EXPECT_EQ(g.grad(a), Tensor::matrix({{18, 27}, {18, 27}}));
  EXPECT_EQ(g.grad(b), Tensor::matrix({{4, 4, 4}, {6, 6, 6}}));
}

TEST(Autodiff, ReusedNodeAccumulates) {
  Graph g;
  Var x = g.leaf(Tensor::matrix({{3.0}}), true);
  g.backward(sum(x * x));
  EXPECT_DOUBLE_EQ(g.grad(x).item(), 6.0);
}

TEST(Autodiff, ReluGradientAtZeroIsZero) {
  Graph g;
  Var x = g.leaf(Tensor::matrix({{-1.0, 0.0, 2.0}}), true);
  g.backward(sum(relu(x)));
  EXPECT_EQ(g.grad(x), Tensor::matrix({{0.0, 0.0, 1.0}}));
}

TEST(Autodiff, ElementwiseOpsMatchFiniteDifferences) {
  const auto a = random_matrix(3, 4, 1), b = random_matrix(3, 4, 2);
  Tensor pos = random_matrix(3, 4, 3);
  for (auto &v : pos.data)
    v = 0.5 + std::abs(v);
  const std::vector<std::pair<const char *, ExprBuilder>> cases = {
      {"add", [](Graph &, std::span<const Var> v) { return sum(square(v[0] + v[1])); }},
      {"sub", [](Graph &, std::span<const Var> v) { return sum(square(v[0] - v[1])); }},
      {"mul", [](Graph &, std::span<const Var> v) { return sum(v[0] * v[1] * v[0]); }},
      {"scalar", [](Graph &, std::span<const Var> v) { return sum(square(add_scalar(2.5 * v[0], -1.0)) * v[1]); }},
      {"div", [](Graph &, std::span<const Var> v) { return sum(div(v[0], v[2])); }},
      {"sqrt", [](Graph &, std::span<const Var> v) { return sum(sqrt(v[2]) * v[1]); }},
      {"mean0", [](Graph &, std::span<const Var> v) { return sum(square(mean_axis(v[0] * v[1], 0))); }},
      {"mean1", [](Graph &, std::span<const Var> v) { return sum(square(mean_axis(v[0] * v[1], 1))); }},
      {"transpose", [](Graph &, std::span<const Var> v) { return sum(square(matmul(transpose(v[0]), v[1]))); }},
      {"slice", [](Graph &, std::span<const Var> v) { return sum(square(slice(v[0] * v[1], 1, 3, 1, 4))); }},
  };
  for (const auto &[name, f] : cases) {
    const auto r = check(f, {a, b, pos});
    EXPECT_TRUE(r.passed) << name << ": " << r.message;
  }
}

TEST(Autodiff, RowOpsAndDiagMatchFiniteDifferences) {
  const auto x = random_matrix(5, 3, 4), r = random_matrix(1, 3, 5), sq = random_matrix(3, 3, 6);
  const auto rep = check(
      [](Graph &, std::span<const Var> v) {
        return sum(square(add_row(mul_row(v[0], v[1]), v[1]))) + sum(square(diag(v[2])));
      },
      {x, r, sq});
  EXPECT_TRUE(rep.passed) << rep.message;
}

TEST(Autodiff, BatchStandardizeMatchesFiniteDifferences) {
  const auto x = random_matrix(6, 4, 7, 2.0), w = random_matrix(6, 4, 8);
  const auto rep = check([](Graph &, std::span<const Var> v) { return sum(batch_standardize(v[0]) * v[1]); }, {x, w});
  EXPECT_TRUE(rep.passed) << rep.message;
}

TEST(Autodiff, BatchStandardizeOutputIsZeroMeanUnitVariance) {
  const auto x = random_matrix(50, 3, 9, 3.0);
  Graph g;
  const auto y = batch_standardize(g.constant(x), 0.0).value();
  for (std::size_t j = 0; j < 3; ++j) {
    double m = 0, v = 0;
    for (std::size_t i = 0; i < 50; ++i)
      m += y(i, j);
    m /= 50;
    for (std::size_t i = 0; i < 50; ++i)
      v += (y(i, j) - m) * (y(i, j) - m);
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v / 50, 1.0, 1e-12);
  }
}

TEST(Autodiff, ReluNetworkGradientSkipsKinks) {
  const auto x = random_matrix(4, 3, 10), w = random_matrix(3, 5, 11);
  const auto rep = check([](Graph &, std::span<const Var> v) { return sum(square(relu(matmul(v[0], v[1])))); }, {x, w});
  EXPECT_TRUE(rep.passed) << rep.message;
  EXPECT_GT(rep.leaves[0].checked, 0u);
}

TEST(Autodiff, DomainErrors) {
  Graph g;
  EXPECT_THROW(sqrt(g.constant(Tensor::matrix({{-1.0}}))), NumericDomainError);
  EXPECT_THROW(div(g.constant(Tensor::matrix({{1.0}})), g.constant(Tensor::matrix({{0.0}}))), NumericDomainError);
  EXPECT_NO_THROW(div(g.constant(Tensor::matrix({{1.0}})), g.constant(Tensor::matrix({{0.0}})), 1e-3));
  EXPECT_THROW(batch_standardize(g.constant(Tensor::matrix({{1.0}, {1.0}})), 0.0), NumericDomainError);
}

TEST(Autodiff, ShapeErrors) {
  Graph g;
  Var a = g.constant(Tensor({2, 3})), b = g.constant(Tensor({2, 3}));
  EXPECT_THROW(matmul(a, b), ShapeError);
  EXPECT_THROW(add(a, g.constant(Tensor({3, 2}))), ShapeError);
  EXPECT_THROW(slice(a, 0, 3, 0, 1), ShapeError);
  EXPECT_THROW(add_row(a, g.constant(Tensor({1, 2}))), ShapeError);
  EXPECT_THROW(diag(a), ShapeError);
  EXPECT_THROW(mean_axis(a, 2), ShapeError);
}

TEST(Autodiff, BackwardRequiresScalarSinkFromSameGraph) {
  Graph g, other;
  Var a = g.leaf(Tensor({2, 2}, 1.0), true);
  EXPECT_THROW(g.backward(a), ShapeError);
  Var s = other.leaf(Tensor::scalar(1.0), true);
  EXPECT_THROW(g.backward(s), std::invalid_argument);
}

TEST(Autodiff, UntouchedLeafHasZeroGradient) {
  Graph g;
  Var a = g.leaf(Tensor({1, 2}, 1.0), true);
  Var b = g.leaf(Tensor({1, 2}, 1.0), true);
  g.backward(sum(a));
  EXPECT_EQ(g.grad(b), Tensor({1, 2}));
}

TEST(GradCheck, DetectsWrongGradient) {
  // A deliberately wrong backward: report must fail.
  const ExprBuilder bad = [](Graph &g, std::span<const Var> v) {
    Tensor out = v[0].value();
    for (auto &x : out.data)
      x = x * x;
    Var sq = g.record(OpKind::square, {v[0].id}, std::move(out), [id = v[0].id](Graph &gr, std::size_t self) {
      const auto &G = gr.node(self).grad;
      auto &ga = gr.grad_buffer(id);
      for (std::size_t i = 0; i < G.data.size(); ++i)
        ga.data[i] += G.data[i]; // should be 2x
    });
    return sum(sq);
  };
  const auto rep = grad_check(bad, {random_matrix(2, 2, 12)});
  EXPECT_FALSE(rep.passed);
}
