#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace decur;

TEST(Tensor, ZeroExtentRejected) {
  EXPECT_THROW(Tensor({0, 3}), ShapeError);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
}

TEST(Tensor, MatrixLiteralAndIndexing) {
  const auto t = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_EQ(t(1, 2), 6.0);
  EXPECT_THROW(Tensor::matrix({{1, 2}, {3}}), ShapeError);
  EXPECT_THROW((void)t.item(), ShapeError);
  EXPECT_EQ(Tensor::scalar(2.5).item(), 2.5);
}

TEST(Tensor, RowHelpers) {
  const auto t = Tensor::matrix({{1, 2, 3}, {4, 5, 6}, {7, 8, 9}});
  EXPECT_EQ(take_rows(t, {2, 0}), Tensor::matrix({{7, 8, 9}, {1, 2, 3}}));
  EXPECT_EQ(column_block(t, 1, 3), Tensor::matrix({{2, 3}, {5, 6}, {8, 9}}));
  EXPECT_THROW(column_block(t, 2, 2), ShapeError);
  EXPECT_EQ(hconcat(column_block(t, 0, 1), column_block(t, 1, 3)), t);
  EXPECT_THROW(hconcat(t, Tensor({2, 1})), ShapeError);
}

TEST(Tensor, Finiteness) {
  Tensor t({2, 2});
  EXPECT_TRUE(all_finite(t));
  t(1, 1) = std::nan("");
  EXPECT_FALSE(all_finite(t));
}

TEST(Random, DerivedStreamsAreStableAndDistinct) {
  auto a = make_rng(7, {1, 2});
  auto b = make_rng(7, {1, 2});
  auto c = make_rng(7, {2, 1});
  const auto va = a(), vb = b(), vc = c();
  EXPECT_EQ(va, vb);
  EXPECT_NE(va, vc);
  EXPECT_NE(derive_seed(0, {}), derive_seed(1, {}));
}
