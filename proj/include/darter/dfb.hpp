// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DARTer Authors.

#pragma once

// Dark Feature Blender: bidirectional cross-attention between the static
// and dynamic template tokens.

#include <string>

#include "darter/autodiff.hpp"
#include "darter/nn.hpp"

namespace darter {

// One parameter set serves both fusion directions.
struct CrossAttentionParams {
  nn::LayerNormParams norm_query;
  nn::LayerNormParams norm_kv;
  nn::Linear query;
  nn::Linear key;
  nn::Linear value;
  nn::Linear output;
  int heads = 1;

  CrossAttentionParams() = default;
  CrossAttentionParams(const std::string& name, int width, int heads, Rng& rng);

  int width() const { return static_cast<int>(query.weight.value.rows()); }
  void Visit(const nn::ParameterVisitor& fn);
};

// query + W_O * MHA(LN_q(query) W_Q, LN_kv(kv) W_K, LN_kv(kv) W_V).
// Queries come from the first argument, keys and values from the second.
ad::Var CrossAttend(ad::Tape& tape, ad::Var query_tokens, ad::Var kv_tokens,
                    CrossAttentionParams& params);

// [CrossAttend(static, dynamic); CrossAttend(dynamic, static)].
ad::Var Blend(ad::Tape& tape, ad::Var static_tokens, ad::Var dynamic_tokens,
              CrossAttentionParams& params);

}  // namespace darter
