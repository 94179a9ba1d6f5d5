// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DARTer Authors.

#include "darter/autodiff.hpp"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "darter/errors.hpp"
#include "grad_check.hpp"

namespace darter {
namespace {

using ad::Matrix;
using ad::Tape;
using ad::Var;
using testing::CheckInputGradients;
using testing::RandomMatrix;

constexpr double kTol = 1e-6;

class OpGradients : public ::testing::Test {
 protected:
  std::mt19937_64 gen{1234};
  Matrix R(int r, int c, double lo = -1.0, double hi = 1.0) {
    return RandomMatrix(gen, r, c, lo, hi);
  }
};

TEST_F(OpGradients, Arithmetic) {
  auto a = R(3, 4), b = R(4, 2), c = R(3, 4), row = R(1, 4), s = R(1, 1);
  EXPECT_LT(CheckInputGradients([](Tape&, auto& v) { return ad::MatMul(v[0], v[1]); }, {a, b}), kTol);
  EXPECT_LT(CheckInputGradients([](Tape&, auto& v) { return ad::Add(v[0], v[1]); }, {a, c}), kTol);
  EXPECT_LT(CheckInputGradients([](Tape&, auto& v) { return ad::Sub(v[0], v[1]); }, {a, c}), kTol);
  EXPECT_LT(CheckInputGradients([](Tape&, auto& v) { return ad::Mul(v[0], v[1]); }, {a, c}), kTol);
  EXPECT_LT(CheckInputGradients([](Tape&, auto& v) { return ad::Scale(v[0], -2.5); }, {a}), kTol);
  EXPECT_LT(CheckInputGradients([](Tape&, auto& v) { return ad::AddScalar(v[0], 0.7); }, {a}), kTol);
  EXPECT_LT(CheckInputGradients([](Tape&, auto& v) { return ad::AddRow(v[0], v[1]); }, {a, row}), kTol);
  EXPECT_LT(CheckInputGradients([](Tape&, auto& v) { return ad::ScaleBy(v[0], v[1]); }, {s, a}), kTol);
}

TEST_F(OpGradients, Elementwise) {
  // Keep Relu inputs away from its kink.
  Matrix x = R(4, 5);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (std::abs(x.data()[i]) < 0.05) x.data()[i] = 0.3;
  }
  EXPECT_LT(CheckInputGradients([](Tape&, auto& v) { return ad::Relu(v[0]); }, {x}), kTol);
  EXPECT_LT(CheckInputGradients([](Tape&, auto& v) { return ad::Gelu(v[0]); }, {x}), kTol);
  EXPECT_LT(CheckInputGradients([](Tape&, auto& v) { return ad::Sigmoid(v[0]); }, {x}), kTol);
  EXPECT_LT(CheckInputGradients([](Tape&, auto& v) { return ad::HalfTanh(v[0]); }, {x}), kTol);
  EXPECT_LT(CheckInputGradients([](Tape&, auto& v) { return ad::Log(v[0]); }, {R(3, 3, 0.5, 2.0)}), kTol);
}

TEST_F(OpGradients, Reductions) {
  auto a = R(3, 4);
  EXPECT_LT(CheckInputGradients([](Tape&, auto& v) { return ad::Sum(v[0]); }, {a}), kTol);
  EXPECT_LT(CheckInputGradients([](Tape&, auto& v) { return ad::Mean(v[0]); }, {a}), kTol);
  EXPECT_LT(CheckInputGradients([](Tape&, auto& v) { return ad::Element(v[0], 2, 1); }, {a}), kTol);
}

TEST_F(OpGradients, Slicing) {
  auto a = R(5, 4), b = R(2, 4);
  EXPECT_LT(CheckInputGradients([](Tape&, auto& v) { return ad::SliceRows(v[0], 1, 3); }, {a}), kTol);
  EXPECT_LT(CheckInputGradients([](Tape&, auto& v) { return ad::SliceCols(v[0], 1, 2); }, {a}), kTol);
  EXPECT_LT(CheckInputGradients(
                [](Tape&, auto& v) {
                  std::vector<Var> parts = {v[0], v[1], v[0]};
                  return ad::ConcatRows(parts);
                },
                {a, b}),
            kTol);
}

TEST_F(OpGradients, Normalization) {
  auto x = R(6, 5), g = R(1, 5, 0.5, 1.5), b = R(1, 5);
  EXPECT_LT(CheckInputGradients([](Tape&, auto& v) { return ad::LayerNorm(v[0], v[1], v[2]); },
                                {x, g, b}),
            1e-5);
  ad::BatchNormState state{Matrix::Zero(1, 5), Matrix::Ones(1, 5)};
  EXPECT_LT(CheckInputGradients(
                [&state](Tape&, auto& v) {
                  return ad::BatchNorm(v[0], v[1], v[2], state, true, false);
                },
                {x, g, b}),
            1e-5);
}

TEST_F(OpGradients, AttentionAndSoftmax) {
  auto q = R(4, 6), k = R(5, 6), v = R(5, 6);
  EXPECT_LT(CheckInputGradients(
                [](Tape&, auto& x) { return ad::MultiHeadAttention(x[0], x[1], x[2], 2); },
                {q, k, v}),
            1e-5);
  EXPECT_LT(CheckInputGradients([](Tape&, auto& x) { return ad::SoftmaxBlocks(x[0], 4); },
                                {R(12, 1, -2, 2)}),
            kTol);
}

TEST_F(OpGradients, Convolutions) {
  EXPECT_LT(CheckInputGradients([](Tape&, auto& x) { return ad::Im2Col3x3(x[0], 2, 3, 4); },
                                {R(24, 3)}),
            kTol);
  EXPECT_LT(CheckInputGradients([](Tape&, auto& x) { return ad::Conv1dSame3(x[0], x[1]); },
                                {R(1, 7), R(1, 3)}),
            kTol);
}

TEST_F(OpGradients, BoxOps) {
  Matrix off = R(6, 2, 0.1, 0.9), size = R(6, 2, 0.1, 0.5);
  EXPECT_LT(CheckInputGradients(
                [](Tape&, auto& x) { return ad::DecodeCellBox(x[0], x[1], 4, 1, 1, 3, 64.0); },
                {off, size}),
            kTol);
  Matrix box(1, 4);
  box << 3.0, 4.0, 12.0, 9.0;
  EXPECT_LT(CheckInputGradients(
                [](Tape&, auto& x) { return ad::SiouLossOp(x[0], BBox{5.5, 2.5, 10.0, 11.0}); },
                {box}),
            1e-5);
}

// Straight-loop attention used as the oracle below.
Matrix NaiveAttention(const Matrix& q, const Matrix& k, const Matrix& v, int heads) {
  const int d = static_cast<int>(q.cols()), dh = d / heads;
  Matrix out = Matrix::Zero(q.rows(), d);
  for (int h = 0; h < heads; ++h) {
    for (int i = 0; i < q.rows(); ++i) {
      std::vector<double> logits(k.rows());
      double mx = -1e300;
      for (int j = 0; j < k.rows(); ++j) {
        double dot = 0.0;
        for (int c = 0; c < dh; ++c) dot += q(i, h * dh + c) * k(j, h * dh + c);
        logits[j] = dot / std::sqrt(static_cast<double>(dh));
        mx = std::max(mx, logits[j]);
      }
      double z = 0.0;
      for (double& l : logits) z += (l = std::exp(l - mx));
      for (int j = 0; j < k.rows(); ++j) {
        for (int c = 0; c < dh; ++c) out(i, h * dh + c) += logits[j] / z * v(j, h * dh + c);
      }
    }
  }
  return out;
}

TEST(AttentionTest, MatchesNaiveLoops) {
  std::mt19937_64 gen(8);
  for (int heads : {1, 2, 4}) {
    const Matrix q = RandomMatrix(gen, 7, 8, -2, 2), k = RandomMatrix(gen, 9, 8, -2, 2),
                 v = RandomMatrix(gen, 9, 8);
    Tape tape(false);
    const Matrix got = ad::MultiHeadAttention(tape.Constant(q), tape.Constant(k),
                                              tape.Constant(v), heads)
                           .value();
    EXPECT_LT((got - NaiveAttention(q, k, v, heads)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(SoftmaxBlocksTest, EachBlockSumsToOne) {
  std::mt19937_64 gen(2);
  Tape tape(false);
  const Matrix p = ad::SoftmaxBlocks(tape.Constant(RandomMatrix(gen, 12, 1, -30, 30)), 4).value();
  for (int b = 0; b < 3; ++b) EXPECT_NEAR(p.middleRows(b * 4, 4).sum(), 1.0, 1e-12);
}

TEST(Conv1dTest, ZeroPaddedCrossCorrelation) {
  Tape tape(false);
  Matrix x(1, 4), k(1, 3);
  x << 1, 2, 3, 4;
  k << 1, 10, 100;
  const Matrix y = ad::Conv1dSame3(tape.Constant(x), tape.Constant(k)).value();
  // y_i = x_{i-1} + 10 x_i + 100 x_{i+1}.
  EXPECT_DOUBLE_EQ(y(0, 0), 0 + 10 + 200);
  EXPECT_DOUBLE_EQ(y(0, 1), 1 + 20 + 300);
  EXPECT_DOUBLE_EQ(y(0, 3), 3 + 40 + 0);
}

TEST(Im2ColTest, CenterTapIsIdentity) {
  std::mt19937_64 gen(4);
  const Matrix x = RandomMatrix(gen, 12, 2);
  Tape tape(false);
  const Matrix cols = ad::Im2Col3x3(tape.Constant(x), 1, 3, 4).value();
  // Tap (1, 1) is the pixel itself; tap (0, 0) of the first pixel is padding.
  EXPECT_EQ(cols.middleCols(4 * 2, 2), x);
  EXPECT_EQ(cols(0, 0), 0.0);
  // Tap (1, 2) of pixel (0, 0) is pixel (0, 1).
  EXPECT_EQ(cols(0, 5 * 2), x(1, 0));
}

TEST(BatchNormTest, RunningStatistics) {
  Matrix x(4, 1);
  x << 1, 2, 3, 6;
  ad::BatchNormState state{Matrix::Zero(1, 1), Matrix::Ones(1, 1)};
  Tape tape(false);
  Var g = tape.Constant(Matrix::Ones(1, 1)), b = tape.Constant(Matrix::Zero(1, 1));
  const Matrix y = ad::BatchNorm(tape.Constant(x), g, b, state, true, true).value();
  EXPECT_NEAR(y.mean(), 0.0, 1e-12);
  // mean 3, biased var 3.5, unbiased 14/3.
  EXPECT_NEAR(state.running_mean(0, 0), 0.3, 1e-12);
  EXPECT_NEAR(state.running_var(0, 0), 0.9 + 0.1 * 14.0 / 3.0, 1e-12);
  const Matrix z = ad::BatchNorm(tape.Constant(x), g, b, state, false, false).value();
  EXPECT_NEAR(z(0, 0), (1 - 0.3) / std::sqrt(state.running_var(0, 0) + 1e-5), 1e-12);
}

TEST(TapeTest, ParameterGradientsAccumulate) {
  ad::Parameter p("p", Matrix::Constant(1, 2, 3.0));
  p.ZeroGrad();
  for (int i = 0; i < 2; ++i) {
    Tape tape;
    tape.Backward(ad::Sum(ad::Scale(tape.Param(p), 2.0)));
  }
  EXPECT_EQ(p.grad, Matrix::Constant(1, 2, 4.0));
}

TEST(TapeTest, Errors) {
  Tape off(false);
  EXPECT_THROW(off.Backward(off.Constant(Matrix::Ones(1, 1))), Error);
  Tape tape;
  EXPECT_THROW(tape.Backward(tape.Input(Matrix::Ones(2, 1))), Error);
  Tape other;
  EXPECT_THROW(ad::Add(tape.Input(Matrix::Ones(1, 1)), other.Input(Matrix::Ones(1, 1))), Error);
  EXPECT_THROW(ad::MatMul(tape.Input(Matrix::Ones(2, 3)), tape.Input(Matrix::Ones(2, 3))), Error);
}

}  // namespace
}  // namespace darter
