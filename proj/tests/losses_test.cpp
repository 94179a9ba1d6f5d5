// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DARTer Authors.

#include "darter/losses.hpp"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "darter/errors.hpp"
#include "grad_check.hpp"

namespace darter {
namespace {

using ad::Matrix;

HeadOutput RandomHead(std::mt19937_64& gen, int g) {
  HeadOutput out;
  out.grid = g;
  out.score = testing::RandomMatrix(gen, g, g, 0.1, 1.0);
  out.score /= out.score.sum();
  out.offset = testing::RandomMatrix(gen, g * g, 2, 0.05, 0.95);
  out.size = testing::RandomMatrix(gen, g * g, 2, 0.05, 0.5);
  return out;
}

TEST(CeLossTest, UniformMap) {
  EXPECT_NEAR(CeLoss(Matrix::Constant(8, 8, 1.0 / 64), {3, 4}), std::log(64.0), 1e-12);
}

TEST(CeLossTest, CertainCellIsZero) {
  Matrix m = Matrix::Zero(8, 8);
  m(2, 5) = 1.0;
  EXPECT_EQ(CeLoss(m, {2, 5}), 0.0);
}

TEST(CeLossTest, MatchesScalarLoop) {
  std::mt19937_64 gen(1);
  for (int trial = 0; trial < 50; ++trial) {
    const HeadOutput h = RandomHead(gen, 6);
    const int r = trial % 6, c = (trial / 6) % 6;
    double expect = 0.0;
    for (int i = 0; i < 6; ++i) {
      for (int j = 0; j < 6; ++j) {
        if (i == r && j == c) expect -= std::log(h.score(i, j));
      }
    }
    EXPECT_EQ(CeLoss(h.score, {r, c}), expect);
  }
}

TEST(CeLossTest, OutOfRangeCellIsAnIndexError) {
  const Matrix m = Matrix::Constant(4, 4, 1.0 / 16);
  for (Cell c : {Cell{4, 0}, Cell{0, 4}, Cell{-1, 0}}) {
    try {
      CeLoss(m, c);
      FAIL() << "expected an index error";
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::kIndex);
    }
  }
}

TEST(CenterCellTest, BinsCentersAndRejectsOutside) {
  const Cell c = CenterCell(BBox{20, 30, 10, 4}, 8, 64.0);  // center (25, 32)
  EXPECT_EQ(c.row, 4);
  EXPECT_EQ(c.col, 3);
  try {
    CenterCell(BBox{60, 10, 10, 10}, 8, 64.0);
    FAIL() << "expected a rejected sample";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kSampleRejected);
  }
}

TEST(TotalLossTest, PerfectPredictionIsZero) {
  const int g = 8;
  const double side = 64.0;
  HeadOutput out;
  out.grid = g;
  out.score = Matrix::Zero(g, g);
  out.offset = Matrix::Constant(g * g, 2, 0.5);
  out.size = Matrix::Constant(g * g, 2, 0.25);
  const BBox gt = BBox::FromCenter(3.5 * side / g, 5.5 * side / g, 16.0, 16.0);
  out.score(5, 3) = 1.0;
  const TotalLossResult r = TotalLoss(out, gt, side, {});
  EXPECT_EQ(r.value.ce, 0.0);
  EXPECT_NEAR(r.value.siou, 0.0, 1e-12);
  EXPECT_NEAR(r.value.total, 0.0, 1e-12);
}

TEST(TotalLossTest, ComposesComponentOracles) {
  std::mt19937_64 gen(2);
  const HeadOutput out = RandomHead(gen, 8);
  const BBox gt{18.5, 27.25, 12.0, 9.5};
  const Cell cell = CenterCell(gt, 8, 64.0);
  const int idx = cell.row * 8 + cell.col;
  const BBox pred = BBox::FromCenter((cell.col + out.offset(idx, 0)) / 8 * 64.0,
                                     (cell.row + out.offset(idx, 1)) / 8 * 64.0,
                                     out.size(idx, 0) * 64.0, out.size(idx, 1) * 64.0);
  const double a = CeLoss(out.score, cell);
  const double b = SiouLoss(pred, gt);
  const TotalLossResult r = TotalLoss(out, gt, 64.0, {});
  EXPECT_NEAR(r.value.ce, a, 1e-12);
  EXPECT_NEAR(r.value.siou, b, 1e-12);
  EXPECT_NEAR(r.value.total, 2 * a + 2 * b, 1e-12);
  EXPECT_GT(r.value.total, 0.0);

  const TotalLossResult zero = TotalLoss(out, gt, 64.0, {0.0, 0.0});
  EXPECT_EQ(zero.value.total, 0.0);
  const TotalLossResult mix = TotalLoss(out, gt, 64.0, {0.7, 1.9});
  EXPECT_NEAR(mix.value.total, 0.7 * a + 1.9 * b, 1e-12);
}

TEST(TotalLossTest, GradientsMatchFiniteDifferences) {
  std::mt19937_64 gen(3);
  for (int trial = 0; trial < 10; ++trial) {
    const HeadOutput out = RandomHead(gen, 8);
    std::uniform_real_distribution<double> u(4.0, 56.0);
    const BBox gt = BBox::FromCenter(u(gen), u(gen), 6.0 + trial, 20.0 - trial);
    const TotalLossResult r = TotalLoss(out, gt, 64.0, {});
    auto value = [&](const HeadOutput& h) { return TotalLoss(h, gt, 64.0, {}).value.total; };
    const double step = 1e-6;
    auto numeric = [&](Matrix HeadOutput::*field) {
      HeadOutput h = out;
      Matrix grad((out.*field).rows(), (out.*field).cols());
      for (Eigen::Index i = 0; i < grad.size(); ++i) {
        const double orig = (h.*field).data()[i];
        (h.*field).data()[i] = orig + step;
        const double up = value(h);
        (h.*field).data()[i] = orig - step;
        const double down = value(h);
        (h.*field).data()[i] = orig;
        grad.data()[i] = (up - down) / (2 * step);
      }
      return grad;
    };
    EXPECT_LT(testing::RelativeError(r.grad_score, numeric(&HeadOutput::score)), 1e-4);
    EXPECT_LT(testing::RelativeError(r.grad_offset, numeric(&HeadOutput::offset)), 1e-4);
    EXPECT_LT(testing::RelativeError(r.grad_size, numeric(&HeadOutput::size)), 1e-4);
  }
}

TEST(TotalLossTest, GroundTruthOutsideRegionIsRejected) {
  std::mt19937_64 gen(4);
  const HeadOutput out = RandomHead(gen, 8);
  try {
    TotalLoss(out, BBox{-30, 10, 20, 20}, 64.0, {});
    FAIL() << "expected a rejected sample";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kSampleRejected);
  }
}

}  // namespace
}  // namespace darter
