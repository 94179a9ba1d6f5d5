// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DARTer Authors.

#pragma once

// JSON forms of every configuration record. Parsing is strict: unknown keys
// and wrongly typed values raise Error(kConfig). Missing keys keep their
// defaults, so a file only needs to list what it changes.

#include <cstdint>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "darter/backbone.hpp"
#include "darter/data.hpp"
#include "darter/losses.hpp"
#include "darter/model.hpp"
#include "darter/patching.hpp"
#include "darter/tracker.hpp"
#include "darter/training.hpp"

namespace darter {

using Json = nlohmann::ordered_json;

Json ToJson(const EncoderConfig& c);
Json ToJson(const Normalization& c);
Json ToJson(const ModelConfig& c);
Json ToJson(const SynthConfig& c);
Json ToJson(const LossWeights& c);
Json ToJson(const TrainConfig& c);
Json ToJson(const TrackerConfig& c);

// Each overlays the keys present in j onto base.
EncoderConfig EncoderConfigFromJson(const nlohmann::json& j, EncoderConfig base = {});
Normalization NormalizationFromJson(const nlohmann::json& j, Normalization base = {});
ModelConfig ModelConfigFromJson(const nlohmann::json& j, ModelConfig base = {});
SynthConfig SynthConfigFromJson(const nlohmann::json& j, SynthConfig base = {});
LossWeights LossWeightsFromJson(const nlohmann::json& j, LossWeights base = {});
TrainConfig TrainConfigFromJson(const nlohmann::json& j, TrainConfig base = {});
TrackerConfig TrackerConfigFromJson(const nlohmann::json& j, TrackerConfig base = {});

// Sub-seed for a named component, derived from the single top-level seed.
uint64_t DeriveSeed(uint64_t root, const std::string& component);

// Merged view used by the command-line tool. Precedence: explicit flags,
// then the config file, then defaults. When a top-level seed is given it
// replaces the model, synth and train seeds with derived values.
struct CliConfig {
  std::optional<uint64_t> seed;
  ModelConfig model;
  SynthConfig synth;
  TrainConfig train;
  TrackerConfig tracker;

  void ApplySeed(uint64_t root);
};

// Reads {"seed", "model", "synth", "train", "tracker"}; every key optional.
CliConfig CliConfigFromJson(const nlohmann::json& j);
CliConfig LoadCliConfig(const std::string& path);
Json ToJson(const CliConfig& c);

nlohmann::json ReadJsonFile(const std::string& path);

}  // namespace darter
