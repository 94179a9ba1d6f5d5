// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DARTer Authors.

#include "darter/dfb.hpp"

#include <array>

#include "darter/errors.hpp"

namespace darter {

CrossAttentionParams::CrossAttentionParams(const std::string& name, int width,
                                           int heads_, Rng& rng)
    : norm_query(name + ".norm_query", width),
      norm_kv(name + ".norm_kv", width),
      query(name + ".query", width, width, rng),
      key(name + ".key", width, width, rng),
      value(name + ".value", width, width, rng),
      output(name + ".output", width, width, rng),
      heads(heads_) {
  if (heads <= 0 || width % heads != 0) {
    throw Error(ErrorKind::kShape, "width must be divisible by heads");
  }
}

void CrossAttentionParams::Visit(const nn::ParameterVisitor& fn) {
  norm_query.Visit(fn);
  norm_kv.Visit(fn);
  query.Visit(fn);
  key.Visit(fn);
  value.Visit(fn);
  output.Visit(fn);
}

ad::Var CrossAttend(ad::Tape& tape, ad::Var query_tokens, ad::Var kv_tokens,
                    CrossAttentionParams& params) {
  if (query_tokens.cols() != params.width() ||
      kv_tokens.cols() != params.width()) {
    throw Error(ErrorKind::kShape, "cross-attention token width mismatch");
  }
  ad::Var q_in = params.norm_query(tape, query_tokens);
  ad::Var kv_in = params.norm_kv(tape, kv_tokens);
  ad::Var attended = ad::MultiHeadAttention(params.query(tape, q_in),
                                            params.key(tape, kv_in),
                                            params.value(tape, kv_in),
                                            params.heads);
  return ad::Add(query_tokens, params.output(tape, attended));
}

ad::Var Blend(ad::Tape& tape, ad::Var static_tokens, ad::Var dynamic_tokens,
              CrossAttentionParams& params) {
  if (static_tokens.rows() != dynamic_tokens.rows()) {
    throw Error(ErrorKind::kShape, "static and dynamic token counts differ");
  }
  const std::array<ad::Var, 2> parts = {
      CrossAttend(tape, static_tokens, dynamic_tokens, params),
      CrossAttend(tape, dynamic_tokens, static_tokens, params)};
  return ad::ConcatRows(parts);
}

}  // namespace darter
