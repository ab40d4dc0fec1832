#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "cpe/tensor.hpp"

namespace tc = cpe::tc;

TEST(Matmul, HandExample) {
  const tc::Tensor a = tc::Tensor::matrix({{1, 2}, {3, 4}});
  const tc::Tensor b = tc::Tensor::matrix({{1}, {1}});
  const tc::Tensor c = tc::matmul(a, b);
  ASSERT_EQ(c.shape(), (tc::Shape{2, 1}));
  EXPECT_EQ(c.at(0, 0), 3);
  EXPECT_EQ(c.at(1, 0), 7);
}

TEST(Matmul, IdentityLeavesInputUnchanged) {
  const tc::Tensor a = tc::Tensor::matrix({{1.5, -2}, {0.25, 4}});
  const tc::Tensor eye = tc::Tensor::matrix({{1, 0}, {0, 1}});
  const tc::Tensor c = tc::matmul(eye, a);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(c[i], a[i]);
}

TEST(Matmul, RejectsMismatchedShapes) {
  EXPECT_THROW(tc::matmul(tc::Tensor::zeros({2, 3}), tc::Tensor::zeros({2, 3})),
               tc::ShapeError);
}

TEST(Matmul, GradientIsColumnSumsOfB) {
  tc::Tensor a = tc::Tensor::matrix({{1, 2, 3}, {4, 5, 6}}, true);
  const tc::Tensor b = tc::Tensor::matrix({{1, -1}, {2, 0.5}, {-3, 4}});
  {
    tc::Tape tape;
    tape.backward(tc::sum(tc::matmul(a, b)));
  }
  const std::vector<double> g = a.grad();
  const double rows[3] = {0, 2.5, 1};
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t k = 0; k < 3; ++k) EXPECT_DOUBLE_EQ(g[i * 3 + k], rows[k]);
  }
}

TEST(Softmax, UniformRow) {
  const tc::Tensor s = tc::softmax_rows(tc::Tensor::zeros({1, 4}));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(s[i], 0.25);
}

TEST(Softmax, HandExample) {
  const tc::Tensor s = tc::softmax_rows(tc::Tensor::matrix({{0, std::log(3.0)}}));
  EXPECT_NEAR(s[0], 0.25, 1e-15);
  EXPECT_NEAR(s[1], 0.75, 1e-15);
}

TEST(Softmax, ShiftInvariantAndStableForLargeLogits) {
  const tc::Tensor a = tc::softmax_rows(tc::Tensor::matrix({{1, 2, 3}}));
  const tc::Tensor b = tc::softmax_rows(tc::Tensor::matrix({{1001, 1002, 1003}}));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(a[i], b[i], 1e-15);
}

TEST(Softmax, ColumnsSumToOne) {
  const tc::Tensor s = tc::softmax_cols(tc::Tensor::matrix({{1, -4}, {0.5, 2}, {3, 0}}));
  for (std::size_t c = 0; c < 2; ++c) {
    EXPECT_NEAR(s.at(0, c) + s.at(1, c) + s.at(2, c), 1.0, 1e-15);
  }
}

TEST(Softmax, RejectsNaN) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(tc::softmax_rows(tc::Tensor::matrix({{0, nan}})), std::domain_error);
}

TEST(Elementwise, Examples) {
  EXPECT_DOUBLE_EQ(tc::sigmoid(tc::Tensor::scalar(0)).item(), 0.5);
  EXPECT_DOUBLE_EQ(tc::tanh(tc::Tensor::scalar(0)).item(), 0.0);
  EXPECT_DOUBLE_EQ(tc::abs(tc::Tensor::scalar(-2)).item(), 2.0);
  EXPECT_DOUBLE_EQ(tc::mean(tc::Tensor::vector({1, 2, 6})).item(), 3.0);
}

TEST(Elementwise, SigmoidSlopeAtZero) {
  tc::Tensor x = tc::Tensor::vector({0.0}, true);
  {
    tc::Tape tape;
    tape.backward(tc::sum(tc::sigmoid(x)));
  }
  EXPECT_DOUBLE_EQ(x.grad()[0], 0.25);
}

TEST(Structural, ConcatAndSliceInvert) {
  const tc::Tensor a = tc::Tensor::matrix({{1, 2}, {3, 4}});
  const tc::Tensor b = tc::Tensor::matrix({{5}, {6}});
  const tc::Tensor c = tc::concat({a, b}, 1);
  ASSERT_EQ(c.shape(), (tc::Shape{2, 3}));
  EXPECT_EQ(c.at(1, 2), 6);
  const tc::Tensor back = tc::slice(c, 1, 0, 2);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(back[i], a[i]);
}

TEST(GradCheck, SumOfSquares) {
  tc::Tensor x = tc::Tensor::vector({1, 2}, true);
  {
    tc::Tape tape;
    tape.backward(tc::sum(tc::mul(x, x)));
  }
  EXPECT_NEAR(x.grad()[0], 2.0, 1e-12);
  EXPECT_NEAR(x.grad()[1], 4.0, 1e-12);
  x.zero_grad();
  EXPECT_LT(tc::grad_check([&] { return tc::sum(tc::mul(x, x)); }, {x}), 1e-8);
}

TEST(GradCheck, ConstantFunctionHasZeroGradient) {
  tc::Tensor x = tc::Tensor::vector({1, 2}, true);
  const tc::Tensor k = tc::Tensor::vector({3, 4});
  {
    tc::Tape tape;
    tape.backward(tc::sum(k));
  }
  for (double g : x.grad()) EXPECT_EQ(g, 0.0);
}

TEST(GradCheck, SigmoidOfWeightedInput) {
  tc::Tensor w = tc::Tensor::vector({0.7}, true);
  const tc::Tensor x = tc::Tensor::vector({1.5});
  {
    tc::Tape tape;
    tape.backward(tc::sum(tc::sigmoid(tc::mul(w, x))));
  }
  const double s = 1.0 / (1.0 + std::exp(-1.05));
  EXPECT_NEAR(w.grad()[0], s * (1 - s) * 1.5, 1e-15);
}

TEST(Tape, GradientsAccumulateAcrossBackwardCalls) {
  tc::Tensor x = tc::Tensor::vector({3}, true);
  for (int i = 0; i < 2; ++i) {
    tc::Tape tape;
    tape.backward(tc::sum(tc::scale(x, 2)));
  }
  EXPECT_DOUBLE_EQ(x.grad()[0], 4.0);
}

TEST(Tape, NoGradGuardSuspendsRecording) {
  tc::Tape tape;
  {
    tc::NoGradGuard guard;
    tc::Tensor x = tc::Tensor::vector({1}, true);
    (void)tc::sigmoid(x);
  }
  EXPECT_EQ(tape.size(), 0u);
}
