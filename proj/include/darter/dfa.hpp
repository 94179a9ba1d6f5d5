// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DARTer Authors.

#pragma once

// Dynamic Feature Activator: per-layer activation probability
//   p = 0.5 * (tanh(L(r) + Conv(r)) + 1),   r = v^T tokens,
// where v is a frozen N(0, 1) token-weighting vector shared by all gates.

#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "darter/autodiff.hpp"
#include "darter/nn.hpp"

namespace darter {

inline constexpr double kDefaultBeta = 0.3;

// Independent linear and convolution parameters of one layer's gate. Zero
// initialization yields p = 0.5.
struct Gate {
  ad::Parameter linear_weight;  // d x 1
  ad::Parameter linear_bias;    // 1 x 1
  ad::Parameter conv_kernel;    // 1 x 3
  ad::Parameter conv_bias;      // 1 x 1

  Gate() = default;
  Gate(const std::string& name, int width);
  void Visit(const nn::ParameterVisitor& fn);
};

struct GateParams {
  ad::Matrix v;  // 1 x k, frozen after construction
  std::vector<Gate> gates;  // one per layer 2..L
  double beta = kDefaultBeta;

  GateParams() = default;
  // Samples v from N(0, 1) with a dedicated seed.
  GateParams(int num_tokens, int width, int depth, uint64_t seed,
             double beta = kDefaultBeta);

  int num_tokens() const { return static_cast<int>(v.cols()); }
  void Visit(const nn::ParameterVisitor& fn);
};

// 1 x 1 activation probability in (0, 1) computed from the previous layer's
// k x d output tokens.
ad::Var GateProbability(ad::Tape& tape, ad::Var prev_tokens,
                        const ad::Matrix& v, Gate& gate);

enum class GateDecision { kExecute, kSkip };

// Execute iff p > beta.
GateDecision Decide(double p, double beta);

struct LayerRecord {
  int layer = 0;               // 1-based
  std::optional<double> prob;  // empty for the always-on first layer
  bool executed = false;

  friend bool operator==(const LayerRecord&, const LayerRecord&) = default;
};

struct ActivationTrace {
  std::vector<LayerRecord> layers;

  int executed_count() const;
  friend bool operator==(const ActivationTrace&,
                         const ActivationTrace&) = default;
};

// Text record: one "frame_idx,layer_idx,p,executed" line per layer, with p
// written as "always-on" for the first layer and with round-trip precision
// otherwise.
void WriteTraceLines(std::ostream& out, int frame_index,
                     const ActivationTrace& trace);
struct FrameTrace {
  int frame_index = 0;
  ActivationTrace trace;
};
std::vector<FrameTrace> ReadTraceLines(std::istream& in);

}  // namespace darter
