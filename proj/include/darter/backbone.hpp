// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DARTer Authors.

#pragma once

#include <string>
#include <vector>

#include "darter/autodiff.hpp"
#include "darter/dfa.hpp"
#include "darter/geometry.hpp"
#include "darter/nn.hpp"

namespace darter {

struct EncoderConfig {
  int depth = 4;
  int width = 32;
  int heads = 2;
  int mlp_ratio = 4;
  double beta = kDefaultBeta;
  bool ablate_dfa = false;
  bool ablate_dfb = false;

  void Validate() const;
  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

// Pre-norm transformer block: x + Attn(LN(x)), then + MLP(LN(.)) with GELU.
struct EncoderBlock {
  nn::LayerNormParams norm1;
  nn::Linear qkv;
  nn::Linear proj;
  nn::LayerNormParams norm2;
  nn::Linear fc1;
  nn::Linear fc2;
  int heads = 1;

  EncoderBlock() = default;
  EncoderBlock(const std::string& name, int width, int heads, int mlp_ratio,
               Rng& rng);

  ad::Var operator()(ad::Tape& tape, ad::Var x);
  void Visit(const nn::ParameterVisitor& fn);
};

enum class GateMode {
  // Every layer runs; no gate is evaluated.
  kOff,
  // Layer i >= 2 contributes x + p_i * (block(x) - x).
  kSoft,
  // Layer i >= 2 runs iff p_i > beta, otherwise it is the identity.
  kHard,
};

struct EncodeResult {
  ad::Var tokens;
  ActivationTrace trace;
};

// Layer 1 always runs. Gates (one per layer 2..L) see the previous layer's
// output tokens.
EncodeResult Encode(ad::Tape& tape, ad::Var tokens,
                    std::vector<EncoderBlock>& blocks, GateParams& gates,
                    GateMode mode, double beta);

// Center-head outputs over a G x G grid; cells are indexed row-major.
struct HeadOutput {
  int grid = 0;
  ad::Matrix score;   // G x G, sums to 1
  ad::Matrix offset;  // G^2 x 2 (x, y) in (0, 1)
  ad::Matrix size;    // G^2 x 2 (w, h) in (0, 1)
};

struct HeadVars {
  int grid = 0;
  ad::Var score;   // B*G^2 x 1, softmax within each sample's block
  ad::Var offset;  // B*G^2 x 2
  ad::Var size;    // B*G^2 x 2
};

struct ConvBnReluStage {
  ad::Parameter weight;  // 9*c_in x c_out
  ad::Parameter gamma;
  ad::Parameter beta;
  ad::BatchNormState bn;
};

// Four Conv3x3-BN-ReLU stages over the search feature map followed by 1x1
// score, offset and size projections.
struct BoxHead {
  std::vector<ConvBnReluStage> tower;
  nn::Linear score;
  nn::Linear offset;
  nn::Linear size;

  BoxHead() = default;
  BoxHead(int width, Rng& rng);

  // search_tokens: batch * G^2 rows of width d.
  HeadVars operator()(ad::Tape& tape, ad::Var search_tokens, int batch,
                      int grid, bool training, bool update_running);
  void Visit(const nn::ParameterVisitor& fn);
};

// Inference-mode head on G^2 x d search tokens (running BN statistics).
HeadOutput Predict(BoxHead& head, const ad::Matrix& search_tokens, int grid);

// Extracts sample `index` of a batched head evaluation.
HeadOutput ToHeadOutput(const HeadVars& vars, int index = 0);

struct DecodedBox {
  BBox box;  // search-region pixels
  double confidence = 0.0;
  int row = 0;
  int col = 0;
};

// Box at the highest-scoring cell; ties go to the lowest row-major index.
DecodedBox DecodeBox(const HeadOutput& out, double search_size);

}  // namespace darter
