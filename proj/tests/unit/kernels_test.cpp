#include <gtest/gtest.h>

#include "deepstreet/error.hpp"
#include "deepstreet/kernels.hpp"
#include "oracles.hpp"

namespace deepstreet {
namespace {

using testing::max_abs_diff;
using testing::naive_conv2d;
using testing::naive_conv2d_transpose;
using testing::random_tensor;

struct ConvParams {
  int stride, dilation, padding, kernel, size;
};

class ConvOracle : public ::testing::TestWithParam<ConvParams> {};

TEST_P(ConvOracle, ForwardMatchesNaiveLoops) {
  const auto p = GetParam();
  std::mt19937_64 rng(p.stride * 100 + p.dilation * 10 + p.kernel);
  const Tensor x = random_tensor({2, 3, p.size, p.size}, rng);
  const Tensor k = random_tensor({4, 3, p.kernel, p.kernel}, rng);
  const Tensor b = random_tensor({4}, rng);
  int oh = 0, ow = 0;
  const auto want = naive_conv2d(x, k, &b, p.stride, p.dilation, p.padding, oh, ow);
  const Tensor got = kernels::conv2d(x, k, &b, {p.stride, p.dilation, p.padding});
  ASSERT_EQ(got.shape(), (Shape{2, 4, oh, ow}));
  EXPECT_LT(max_abs_diff(got, want), 1e-5);
}

TEST_P(ConvOracle, TransposeMatchesScatterLoops) {
  const auto p = GetParam();
  std::mt19937_64 rng(7 + p.stride * 100 + p.dilation * 10 + p.kernel);
  const Tensor x = random_tensor({2, 4, p.size, p.size}, rng);
  const Tensor k = random_tensor({4, 3, p.kernel, p.kernel}, rng);
  const Tensor b = random_tensor({3}, rng);
  int oh = 0, ow = 0;
  const auto want = naive_conv2d_transpose(x, k, &b, p.stride, p.dilation, p.padding, oh, ow);
  if (oh <= 0 || ow <= 0) GTEST_SKIP() << "geometry has no transpose output";
  const Tensor got = kernels::conv2d_transpose(x, k, &b, {p.stride, p.dilation, p.padding});
  ASSERT_EQ(got.shape(), (Shape{2, 3, oh, ow}));
  EXPECT_LT(max_abs_diff(got, want), 1e-5);
}

// <conv(x), y> == <x, conv_transpose(y)>: the transpose is the adjoint.
TEST_P(ConvOracle, TransposeIsAdjoint) {
  const auto p = GetParam();
  std::mt19937_64 rng(99 + p.size);
  Tensor x = random_tensor({1, 3, p.size, p.size}, rng);
  const Tensor k = random_tensor({4, 3, p.kernel, p.kernel}, rng);
  const kernels::ConvGeometry g{p.stride, p.dilation, p.padding};
  const Tensor y = random_tensor(kernels::conv2d(x, k, nullptr, g).shape(), rng);
  const Tensor ct = kernels::conv2d_transpose(y, k, nullptr, g);
  // Without output padding the transpose can stop short of the input when the
  // stride leaves a remainder. The identity holds for inputs that are zero
  // outside the transpose's extent.
  const int th = ct.shape()[2], tw = ct.shape()[3];
  ASSERT_EQ(ct.shape()[1], 3);
  ASSERT_LE(th, p.size);
  ASSERT_LE(tw, p.size);
  for (int c = 0; c < 3; ++c) {
    for (int r = 0; r < p.size; ++r) {
      for (int col = 0; col < p.size; ++col) {
        if (r >= th || col >= tw) x[(static_cast<std::size_t>(c) * p.size + r) * p.size + col] = 0.0f;
      }
    }
  }
  const Tensor cx = kernels::conv2d(x, k, nullptr, g);
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) lhs += static_cast<double>(cx[i]) * y[i];
  for (int c = 0; c < 3; ++c) {
    for (int r = 0; r < th; ++r) {
      for (int col = 0; col < tw; ++col) {
        rhs += static_cast<double>(x[(static_cast<std::size_t>(c) * p.size + r) * p.size + col]) *
               ct[(static_cast<std::size_t>(c) * th + r) * tw + col];
      }
    }
  }
  EXPECT_NEAR(lhs, rhs, 1e-4 * std::max(1.0, std::abs(lhs)));
}

INSTANTIATE_TEST_SUITE_P(Geometries, ConvOracle,
                         ::testing::Values(ConvParams{1, 1, 1, 3, 8}, ConvParams{2, 1, 1, 3, 8},
                                           ConvParams{1, 2, 2, 3, 8}, ConvParams{1, 4, 4, 3, 8},
                                           ConvParams{2, 1, 2, 5, 9}, ConvParams{2, 1, 1, 4, 6},
                                           ConvParams{1, 1, 0, 1, 5}, ConvParams{3, 2, 1, 3, 11}),
                         [](const ::testing::TestParamInfo<ConvParams>& info) {
                           const ConvParams& p = info.param;
                           return "s" + std::to_string(p.stride) + "d" + std::to_string(p.dilation) + "p" +
                                  std::to_string(p.padding) + "k" + std::to_string(p.kernel) + "n" +
                                  std::to_string(p.size);
                         });

TEST(Conv, HandComputedCases) {
  const Tensor x({1, 1, 3, 3}, std::vector<float>{1, 2, 3, 4, 5, 6, 7, 8, 9});
  EXPECT_EQ(kernels::conv2d(x, Tensor({1, 1, 1, 1}, 1.0f), nullptr, {1, 1, 0}), x);
  const Tensor sums = kernels::conv2d(Tensor({1, 1, 4, 4}, 1.0f), Tensor({1, 1, 3, 3}, 1.0f), nullptr, {1, 1, 0});
  EXPECT_EQ(sums, Tensor({1, 1, 2, 2}, 9.0f));
}

TEST(ConvExtent, FloorFormula) {
  EXPECT_EQ(kernels::conv_output_extent(256, 3, {2, 1, 1}), 128);
  EXPECT_EQ(kernels::conv_output_extent(64, 3, {1, 16, 16}), 64);
  EXPECT_EQ(kernels::conv_output_extent(256, 5, {2, 1, 2}), 128);
  EXPECT_EQ(kernels::conv_output_extent(7, 3, {2, 1, 0}), 3);
  EXPECT_THROW(kernels::conv_output_extent(4, 3, {1, 4, 0}), DimensionError);
}

TEST(ConvExtent, TransposeFormula) {
  EXPECT_EQ(kernels::conv_transpose_output_extent(64, 4, {2, 1, 1}), 128);
  EXPECT_EQ(kernels::conv_transpose_output_extent(8, 3, {1, 1, 1}), 8);
  EXPECT_THROW(kernels::conv_transpose_output_extent(1, 1, {1, 1, 1}), DimensionError);
}

TEST(Conv, RejectsChannelMismatch) {
  const Tensor x({1, 2, 5, 5});
  const Tensor k({3, 4, 3, 3});
  EXPECT_THROW(kernels::conv2d(x, k, nullptr, {}), DimensionError);
}

TEST(Conv, BackwardAccumulates) {
  std::mt19937_64 rng(5);
  const Tensor x = random_tensor({1, 2, 5, 5}, rng);
  const Tensor k = random_tensor({2, 2, 3, 3}, rng);
  const Tensor gy = random_tensor({1, 2, 5, 5}, rng);
  Tensor gx1(x.shape()), gk1(k.shape()), gb1({2});
  kernels::conv2d_backward(x, k, gy, {1, 1, 1}, &gx1, &gk1, &gb1);
  Tensor gx2 = gx1, gk2 = gk1, gb2 = gb1;
  kernels::conv2d_backward(x, k, gy, {1, 1, 1}, &gx2, &gk2, &gb2);
  for (std::size_t i = 0; i < gx1.size(); ++i) EXPECT_FLOAT_EQ(gx2[i], 2.0f * gx1[i]);
  for (std::size_t i = 0; i < gk1.size(); ++i) EXPECT_FLOAT_EQ(gk2[i], 2.0f * gk1[i]);
  for (std::size_t i = 0; i < gb1.size(); ++i) EXPECT_FLOAT_EQ(gb2[i], 2.0f * gb1[i]);
}

TEST(FullyConnected, MatchesNaive) {
  std::mt19937_64 rng(8);
  const Tensor x = random_tensor({3, 7}, rng);
  const Tensor w = random_tensor({7, 5}, rng);
  const Tensor b = random_tensor({5}, rng);
  EXPECT_LT(max_abs_diff(kernels::fully_connected(x, w, &b), testing::naive_fully_connected(x, w, &b)), 1e-5);
  EXPECT_THROW(kernels::fully_connected(x, Tensor({6, 5}), nullptr), DimensionError);
}

}  // namespace
}  // namespace deepstreet
