// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DARTer Authors.

#include "darter/nn.hpp"

#include <algorithm>

namespace darter::nn {

Matrix NormalMatrix(Rng& rng, Eigen::Index rows, Eigen::Index cols,
                    double stddev) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    // Truncated at two standard deviations.
    m.data()[i] = std::clamp(rng.Normal(), -2.0, 2.0) * stddev;
  }
  return m;
}

Linear::Linear(const std::string& name, int in, int out, Rng& rng,
               double stddev)
    : weight(name + ".weight", NormalMatrix(rng, in, out, stddev)),
      bias(name + ".bias", Matrix::Zero(1, out)) {}

Var Linear::operator()(Tape& tape, Var x) {
  return ad::AddRow(ad::MatMul(x, tape.Param(weight)), tape.Param(bias));
}

LayerNormParams::LayerNormParams(const std::string& name, int width)
    : gamma(name + ".gamma", Matrix::Ones(1, width)),
      beta(name + ".beta", Matrix::Zero(1, width)) {}

Var LayerNormParams::operator()(Tape& tape, Var x) {
  return ad::LayerNorm(x, tape.Param(gamma), tape.Param(beta));
}

}  // namespace darter::nn
