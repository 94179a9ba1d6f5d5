// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DARTer Authors.

#pragma once

#include <functional>
#include <string>

#include "darter/autodiff.hpp"
#include "darter/rng.hpp"

namespace darter::nn {

using ad::Matrix;
using ad::Parameter;
using ad::Tape;
using ad::Var;

using ParameterVisitor = std::function<void(Parameter&)>;

Matrix NormalMatrix(Rng& rng, Eigen::Index rows, Eigen::Index cols,
                    double stddev);

// y = x W + b with W stored in x out.
struct Linear {
  Parameter weight;
  Parameter bias;

  Linear() = default;
  Linear(const std::string& name, int in, int out, Rng& rng,
         double stddev = 0.02);

  Var operator()(Tape& tape, Var x);
  void Visit(const ParameterVisitor& fn) {
    fn(weight);
    fn(bias);
  }
};

struct LayerNormParams {
  Parameter gamma;
  Parameter beta;

  LayerNormParams() = default;
  LayerNormParams(const std::string& name, int width);

  Var operator()(Tape& tape, Var x);
  void Visit(const ParameterVisitor& fn) {
    fn(gamma);
    fn(beta);
  }
};

}  // namespace darter::nn
