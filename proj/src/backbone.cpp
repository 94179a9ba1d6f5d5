// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DARTer Authors.

#include "darter/backbone.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "darter/errors.hpp"

namespace darter {

void EncoderConfig::Validate() const {
  if (depth < 1) throw Error(ErrorKind::kConfig, "encoder depth must be >= 1");
  if (width < 2 || heads < 1 || width % heads != 0) {
    throw Error(ErrorKind::kConfig, "encoder width must be divisible by heads");
  }
  if (mlp_ratio < 1) throw Error(ErrorKind::kConfig, "mlp_ratio must be >= 1");
  if (!(beta >= 0.0 && beta <= 1.0)) {
    throw Error(ErrorKind::kConfig, "beta must lie in [0, 1]");
  }
}

EncoderBlock::EncoderBlock(const std::string& name, int width, int heads_,
                           int mlp_ratio, Rng& rng)
    : norm1(name + ".norm1", width),
      qkv(name + ".qkv", width, 3 * width, rng),
      proj(name + ".proj", width, width, rng),
      norm2(name + ".norm2", width),
      fc1(name + ".fc1", width, mlp_ratio * width, rng),
      fc2(name + ".fc2", mlp_ratio * width, width, rng),
      heads(heads_) {}

ad::Var EncoderBlock::operator()(ad::Tape& tape, ad::Var x) {
  const Eigen::Index d = x.cols();
  ad::Var qkv_out = qkv(tape, norm1(tape, x));
  ad::Var attn = ad::MultiHeadAttention(ad::SliceCols(qkv_out, 0, d),
                                        ad::SliceCols(qkv_out, d, d),
                                        ad::SliceCols(qkv_out, 2 * d, d), heads);
  ad::Var h = ad::Add(x, proj(tape, attn));
  ad::Var mlp = fc2(tape, ad::Gelu(fc1(tape, norm2(tape, h))));
  return ad::Add(h, mlp);
}

void EncoderBlock::Visit(const nn::ParameterVisitor& fn) {
  norm1.Visit(fn);
  qkv.Visit(fn);
  proj.Visit(fn);
  norm2.Visit(fn);
  fc1.Visit(fn);
  fc2.Visit(fn);
}

EncodeResult Encode(ad::Tape& tape, ad::Var tokens,
                    std::vector<EncoderBlock>& blocks, GateParams& gates,
                    GateMode mode, double beta) {
  if (blocks.empty()) throw Error(ErrorKind::kShape, "encoder has no blocks");
  if (gates.gates.size() + 1 != blocks.size()) {
    throw Error(ErrorKind::kShape, "need exactly one gate per layer after the first");
  }
  if (mode != GateMode::kOff && tokens.rows() != gates.num_tokens()) {
    throw Error(ErrorKind::kShape,
                "token count " + std::to_string(tokens.rows()) +
                    " does not match layout of " +
                    std::to_string(gates.num_tokens()));
  }
  EncodeResult result;
  ad::Var x = blocks[0](tape, tokens);
  result.trace.layers.push_back({1, std::nullopt, true});
  for (size_t i = 1; i < blocks.size(); ++i) {
    const int layer = static_cast<int>(i) + 1;
    if (mode == GateMode::kOff) {
      x = blocks[i](tape, x);
      result.trace.layers.push_back({layer, std::nullopt, true});
      continue;
    }
    ad::Var p = GateProbability(tape, x, gates.v, gates.gates[i - 1]);
    const double prob = p.value()(0, 0);
    if (mode == GateMode::kSoft) {
      ad::Var delta = ad::Sub(blocks[i](tape, x), x);
      x = ad::Add(x, ad::ScaleBy(p, delta));
      result.trace.layers.push_back({layer, prob, true});
    } else if (Decide(prob, beta) == GateDecision::kExecute) {
      x = blocks[i](tape, x);
      result.trace.layers.push_back({layer, prob, true});
    } else {
      result.trace.layers.push_back({layer, prob, false});
    }
  }
  result.tokens = x;
  return result;
}

BoxHead::BoxHead(int width, Rng& rng) {
  const int half = std::max(width / 2, 1);
  const std::array<int, 5> channels = {width, width, width, half, half};
  for (int s = 0; s < 4; ++s) {
    const int cin = channels[s], cout = channels[s + 1];
    const std::string name = "head.tower" + std::to_string(s);
    ConvBnReluStage stage;
    stage.weight = ad::Parameter(
        name + ".conv.weight",
        nn::NormalMatrix(rng, 9 * cin, cout, std::sqrt(2.0 / (9.0 * cin))));
    stage.gamma = ad::Parameter(name + ".bn.gamma", ad::Matrix::Ones(1, cout));
    stage.beta = ad::Parameter(name + ".bn.beta", ad::Matrix::Zero(1, cout));
    stage.bn.running_mean = ad::Matrix::Zero(1, cout);
    stage.bn.running_var = ad::Matrix::Ones(1, cout);
    tower.push_back(std::move(stage));
  }
  // 1x1 projections use the fan-in scale of conv layers rather than the
  // transformer default.
  const double proj_std = 1.0 / std::sqrt(static_cast<double>(half));
  score = nn::Linear("head.score", half, 1, rng, proj_std);
  offset = nn::Linear("head.offset", half, 2, rng, proj_std);
  size = nn::Linear("head.size", half, 2, rng, proj_std);
  // Start sizes near a quarter of the search region.
  size.bias.value.setConstant(std::log(0.25 / 0.75));
}

HeadVars BoxHead::operator()(ad::Tape& tape, ad::Var search_tokens, int batch,
                             int grid, bool training, bool update_running) {
  const Eigen::Index cells = static_cast<Eigen::Index>(grid) * grid;
  if (search_tokens.rows() != batch * cells) {
    throw Error(ErrorKind::kShape,
                "head expects " + std::to_string(batch * cells) +
                    " search tokens, got " +
                    std::to_string(search_tokens.rows()));
  }
  if (search_tokens.cols() != tower[0].weight.value.rows() / 9) {
    throw Error(ErrorKind::kShape, "head input width mismatch");
  }
  ad::Var x = search_tokens;
  for (ConvBnReluStage& stage : tower) {
    ad::Var conv =
        ad::MatMul(ad::Im2Col3x3(x, batch, grid, grid), tape.Param(stage.weight));
    x = ad::Relu(ad::BatchNorm(conv, tape.Param(stage.gamma),
                               tape.Param(stage.beta), stage.bn, training,
                               update_running));
  }
  HeadVars out;
  out.grid = grid;
  out.score = ad::SoftmaxBlocks(score(tape, x), cells);
  out.offset = ad::Sigmoid(offset(tape, x));
  out.size = ad::Sigmoid(size(tape, x));
  return out;
}

void BoxHead::Visit(const nn::ParameterVisitor& fn) {
  for (ConvBnReluStage& stage : tower) {
    fn(stage.weight);
    fn(stage.gamma);
    fn(stage.beta);
  }
  score.Visit(fn);
  offset.Visit(fn);
  size.Visit(fn);
}

HeadOutput Predict(BoxHead& head, const ad::Matrix& search_tokens, int grid) {
  ad::Tape tape(false);
  HeadVars vars = head(tape, tape.Constant(search_tokens), 1, grid,
                       /*training=*/false, /*update_running=*/false);
  return ToHeadOutput(vars, 0);
}

HeadOutput ToHeadOutput(const HeadVars& vars, int index) {
  const int cells = vars.grid * vars.grid;
  HeadOutput out;
  out.grid = vars.grid;
  out.score.resize(vars.grid, vars.grid);
  const auto score = vars.score.value().middleRows(index * cells, cells);
  for (int c = 0; c < cells; ++c) {
    out.score(c / vars.grid, c % vars.grid) = score(c, 0);
  }
  out.offset = vars.offset.value().middleRows(index * cells, cells);
  out.size = vars.size.value().middleRows(index * cells, cells);
  return out;
}

DecodedBox DecodeBox(const HeadOutput& out, double search_size) {
  const int g = out.grid;
  int best = 0;
  double best_score = out.score(0, 0);
  for (int c = 1; c < g * g; ++c) {
    const double s = out.score(c / g, c % g);
    if (s > best_score) {
      best_score = s;
      best = c;
    }
  }
  DecodedBox d;
  d.row = best / g;
  d.col = best % g;
  d.confidence = best_score;
  const double cx = (d.col + out.offset(best, 0)) / g * search_size;
  const double cy = (d.row + out.offset(best, 1)) / g * search_size;
  const double w = out.size(best, 0) * search_size;
  const double h = out.size(best, 1) * search_size;
  d.box = BBox::FromCenter(cx, cy, w, h);
  return d;
}

}  // namespace darter
