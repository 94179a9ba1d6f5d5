// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DARTer Authors.

#pragma once

// The assembled tracker network: patch embedding, template blending, the
// gated encoder and the box head.

#include <cstdint>
#include <string>
#include <vector>

#include "darter/autodiff.hpp"
#include "darter/backbone.hpp"
#include "darter/dfa.hpp"
#include "darter/dfb.hpp"
#include "darter/image.hpp"
#include "darter/patching.hpp"

namespace darter {

struct ModelConfig {
  int search_size = 64;
  int template_size = 32;
  int patch_size = 8;
  EncoderConfig encoder;
  Normalization normalization;
  uint64_t seed = 1;

  // 256 / 128 / 16 crops with a ViT-Base sized encoder.
  static ModelConfig FullScale();
  void Validate() const;
};

bool SameArchitecture(const ModelConfig& a, const ModelConfig& b);

// Fused template tokens (2n x d each); reused across frames until the
// dynamic template changes.
struct TemplateTokens {
  ad::Matrix initial;
  ad::Matrix overlapped;
};

struct TemplateVars {
  ad::Var initial;
  ad::Var overlapped;
};

struct ForwardVars {
  ad::Var tokens;         // all k encoder output tokens
  ad::Var search_tokens;  // first G^2 rows
  ActivationTrace trace;
};

struct Inference {
  HeadOutput head;
  ActivationTrace trace;
};

class Model {
 public:
  explicit Model(const ModelConfig& config);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  const ModelConfig& config() const { return config_; }
  const PatchGrid& search_grid() const { return search_grid_; }
  const PatchGrid& template_grid() const { return template_grid_; }
  const TokenLayout& layout() const { return layout_; }

  // Inference-time switches; they do not change the parameter set.
  void set_beta(double beta) { config_.encoder.beta = beta; }
  void set_ablate_dfa(bool on) { config_.encoder.ablate_dfa = on; }
  void set_ablate_dfb(bool on) { config_.encoder.ablate_dfb = on; }

  void VisitParameters(const nn::ParameterVisitor& fn);
  std::vector<ad::Parameter*> Parameters();
  size_t ParameterCount();

  // Image matrices are normalized H x (W * 3) maps (see ImageToMatrix).
  TemplateVars FuseTemplates(ad::Tape& tape, ad::Var static_image,
                             ad::Var dynamic_image);
  ForwardVars Forward(ad::Tape& tape, ad::Var search_image,
                      const TemplateVars& templates, GateMode mode);

  // Normalizes raw [0, 1] crops into image matrices.
  ad::Matrix PrepareImage(const Image& crop) const;

  TemplateTokens ComputeTemplateTokens(const Image& static_crop,
                                       const Image& dynamic_crop);
  Inference Infer(const Image& search_crop, const TemplateTokens& templates);

  // kOff when the activator is ablated, kHard otherwise.
  GateMode InferenceGateMode() const;

  PatchEmbedding embedding;
  CrossAttentionParams dfb_initial;
  CrossAttentionParams dfb_overlapped;
  std::vector<EncoderBlock> blocks;
  GateParams gates;
  BoxHead head;

 private:
  ModelConfig config_;
  PatchGrid search_grid_;
  PatchGrid template_grid_;
  TokenLayout layout_;
};

// Binary checkpoint; see README for the layout.
void SaveCheckpoint(const std::string& path, Model& model);
Model LoadCheckpoint(const std::string& path);

}  // namespace darter
