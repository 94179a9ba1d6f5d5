// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DARTer Authors.

#include "darter/dfa.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "darter/errors.hpp"
#include "grad_check.hpp"

namespace darter {
namespace {

using ad::Matrix;

double GateP(const Matrix& tokens, const Matrix& v, Gate& gate) {
  ad::Tape tape(false);
  return GateProbability(tape, tape.Constant(tokens), v, gate).value()(0, 0);
}

TEST(GateTest, ZeroInitGivesHalf) {
  Gate gate("g", 6);
  std::mt19937_64 gen(1);
  EXPECT_EQ(GateP(testing::RandomMatrix(gen, 9, 6, -5, 5), testing::RandomMatrix(gen, 1, 9), gate),
            0.5);
}

TEST(GateTest, GoldenFixture) {
  // Frozen from a scalar evaluation of the gate formula.
  Matrix v(1, 5);
  v << 0.5, -1.2, 0.3, 2.0, -0.7;
  Matrix tokens(5, 4);
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 4; ++j) tokens(i, j) = 0.1 * (i + 1) - 0.05 * j * j + 0.02 * i * j;
  }
  Gate gate("g", 4);
  gate.linear_weight.value << 0.3, -0.2, 0.5, 0.1;
  gate.linear_bias.value << 0.05;
  gate.conv_kernel.value << 0.2, -0.4, 0.6;
  gate.conv_bias.value << -0.1;
  EXPECT_NEAR(GateP(tokens, v, gate), 0.5896938704325821, 1e-12);
}

TEST(GateTest, SaturatesInsideOpenInterval) {
  Gate gate("g", 2);
  gate.linear_bias.value << 15.0;
  const Matrix tokens = Matrix::Ones(3, 2), v = Matrix::Ones(1, 3);
  double p = GateP(tokens, v, gate);
  EXPECT_GT(p, 0.999);
  EXPECT_LE(p, 1.0);
  gate.linear_bias.value << -15.0;
  p = GateP(tokens, v, gate);
  EXPECT_LT(p, 0.001);
  EXPECT_GT(p, 0.0);
  // Far past the point where tanh rounds to +-1.
  for (double b : {-1000.0, -40.0, 40.0, 1000.0}) {
    gate.linear_bias.value << b;
    p = GateP(tokens, v, gate);
    EXPECT_GT(p, 0.0) << b;
    EXPECT_LT(p, 1.0) << b;
    EXPECT_EQ(Decide(p, 0.0), GateDecision::kExecute) << b;
  }
}

TEST(GateTest, TokenCountMismatch) {
  Gate gate("g", 4);
  ad::Tape tape(false);
  try {
    GateProbability(tape, tape.Constant(Matrix::Zero(6, 4)), Matrix::Ones(1, 5), gate);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kShape);
  }
}

TEST(GateTest, GradientsMatchFiniteDifferences) {
  std::mt19937_64 gen(4);
  Gate gate("g", 6);
  gate.linear_weight.value = testing::RandomMatrix(gen, 6, 1, -0.3, 0.3);
  gate.conv_kernel.value = testing::RandomMatrix(gen, 1, 3, -0.3, 0.3);
  const Matrix v = testing::RandomMatrix(gen, 1, 7), tokens = testing::RandomMatrix(gen, 7, 6);
  std::vector<ad::Parameter*> ps;
  gate.Visit([&](ad::Parameter& p) { ps.push_back(&p); });
  EXPECT_LT(testing::CheckParamGradients(
                [&](ad::Tape& t) { return GateProbability(t, t.Constant(tokens), v, gate); }, ps),
            1e-6);
  EXPECT_LT(testing::CheckInputGradients(
                [&](ad::Tape& t, const std::vector<ad::Var>& x) {
                  return GateProbability(t, x[0], v, gate);
                },
                {tokens}),
            1e-6);
}

TEST(GateParamsTest, FrozenVectorIsSeeded) {
  const GateParams a(20, 8, 4, 99), b(20, 8, 4, 99), c(20, 8, 4, 100);
  EXPECT_EQ(a.v, b.v);
  EXPECT_NE(a.v, c.v);
  EXPECT_EQ(a.gates.size(), 3u);
  EXPECT_EQ(a.beta, 0.3);
  // v is not a trainable parameter.
  GateParams d(20, 8, 4, 99);
  int count = 0;
  d.Visit([&](ad::Parameter&) { ++count; });
  EXPECT_EQ(count, 3 * 4);
}

TEST(DecideTest, StrictThreshold) {
  EXPECT_EQ(Decide(0.5, 0.3), GateDecision::kExecute);
  EXPECT_EQ(Decide(0.5, 0.5), GateDecision::kSkip);
  EXPECT_EQ(Decide(1e-12, 0.0), GateDecision::kExecute);
  EXPECT_EQ(Decide(1.0 - 1e-12, 1.0), GateDecision::kSkip);
}

TEST(DecideTest, MonotoneInBeta) {
  for (double p = 0.01; p < 1.0; p += 0.07) {
    bool skipped = false;
    for (double beta = 0.0; beta <= 1.0; beta += 0.05) {
      const bool skip = Decide(p, beta) == GateDecision::kSkip;
      if (skipped) EXPECT_TRUE(skip) << p << " " << beta;
      skipped |= skip;
    }
  }
}

TEST(TraceTest, RoundTrip) {
  ActivationTrace t1;
  t1.layers = {{1, std::nullopt, true}, {2, 0.1234567890123, false}, {3, 0.75, true}};
  ActivationTrace t2;
  t2.layers = {{1, std::nullopt, true}, {2, 1.0 / 3.0, true}};
  std::stringstream ss;
  WriteTraceLines(ss, 2, t1);
  WriteTraceLines(ss, 3, t2);
  EXPECT_EQ(ss.str().substr(0, 17), "2,1,always-on,1\n2");
  const auto frames = ReadTraceLines(ss);
  ASSERT_EQ(frames.size(), 2u);
  EXPECT_EQ(frames[0].frame_index, 2);
  EXPECT_EQ(frames[0].trace, t1);
  EXPECT_EQ(frames[1].trace, t2);
  EXPECT_EQ(t1.executed_count(), 2);
  std::stringstream again;
  WriteTraceLines(again, 2, frames[0].trace);
  WriteTraceLines(again, 3, frames[1].trace);
  std::stringstream first;
  WriteTraceLines(first, 2, t1);
  WriteTraceLines(first, 3, t2);
  EXPECT_EQ(again.str(), first.str());
}

TEST(TraceTest, MalformedLinesAreParseErrors) {
  for (const char* bad : {"1,1,0.5\n", "x,1,always-on,1\n", "2,2,abc,1\n", "2,2,0.5,2\n"}) {
    std::stringstream ss(bad);
    try {
      ReadTraceLines(ss);
      ADD_FAILURE() << bad;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::kParse) << bad;
    }
  }
}

}  // namespace
}  // namespace darter
