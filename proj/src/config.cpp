// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DARTer Authors.

#include "darter/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include "darter/errors.hpp"
#include "darter/rng.hpp"

namespace darter {
namespace {

// Walks the keys of one object, rejecting anything not consumed.
class Reader {
 public:
  Reader(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) Fail("expected an object");
  }

  ~Reader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) {
        throw Error(ErrorKind::kConfig, "unknown key '" + where_ + "." + item.key() + "'");
      }
    }
  }

  const nlohmann::json* Find(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void Read(const std::string& key, int& out) {
    if (auto* v = Find(key)) {
      if (!v->is_number_integer()) Fail(key, "expected an integer");
      out = v->get<int>();
    }
  }
  void Read(const std::string& key, uint64_t& out) {
    if (auto* v = Find(key)) {
      if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<int64_t>() >= 0)) {
        Fail(key, "expected a non-negative integer");
      }
      out = v->get<uint64_t>();
    }
  }
  void Read(const std::string& key, double& out) {
    if (auto* v = Find(key)) {
      if (!v->is_number()) Fail(key, "expected a number");
      out = v->get<double>();
    }
  }
  void Read(const std::string& key, bool& out) {
    if (auto* v = Find(key)) {
      if (!v->is_boolean()) Fail(key, "expected a boolean");
      out = v->get<bool>();
    }
  }
  void Read(const std::string& key, std::array<double, 3>& out) {
    if (auto* v = Find(key)) {
      if (!v->is_array() || v->size() != 3) Fail(key, "expected 3 numbers");
      for (int i = 0; i < 3; ++i) {
        if (!(*v)[i].is_number()) Fail(key, "expected 3 numbers");
        out[i] = (*v)[i].get<double>();
      }
    }
  }

  std::string Path(const std::string& key) const { return where_ + "." + key; }

  [[noreturn]] void Fail(const std::string& key, const std::string& what) const {
    throw Error(ErrorKind::kConfig, "'" + Path(key) + "': " + what);
  }
  [[noreturn]] void Fail(const std::string& what) const {
    throw Error(ErrorKind::kConfig, "'" + where_ + "': " + what);
  }

 private:
  const nlohmann::json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace

Json ToJson(const EncoderConfig& c) {
  Json j;
  j["depth"] = c.depth;
  j["width"] = c.width;
  j["heads"] = c.heads;
  j["mlp_ratio"] = c.mlp_ratio;
  j["beta"] = c.beta;
  j["ablate_dfa"] = c.ablate_dfa;
  j["ablate_dfb"] = c.ablate_dfb;
  return j;
}

Json ToJson(const Normalization& c) {
  Json j;
  j["mean"] = c.mean;
  j["stddev"] = c.stddev;
  return j;
}

Json ToJson(const ModelConfig& c) {
  Json j;
  j["search_size"] = c.search_size;
  j["template_size"] = c.template_size;
  j["patch_size"] = c.patch_size;
  j["encoder"] = ToJson(c.encoder);
  j["normalization"] = ToJson(c.normalization);
  j["seed"] = c.seed;
  return j;
}

Json ToJson(const SynthConfig& c) {
  Json j;
  j["seed"] = c.seed;
  j["num_sequences"] = c.num_sequences;
  j["frames_per_sequence"] = c.frames_per_sequence;
  j["frame_size"] = c.frame_size;
  j["background_mean"] = c.background_mean;
  j["noise_stddev"] = c.noise_stddev;
  j["object_size_range"] = {c.object_size_min, c.object_size_max};
  j["motion_step"] = c.motion_step;
  j["illumination_flicker"] = c.illumination_flicker;
  j["num_distractors"] = c.num_distractors;
  return j;
}

Json ToJson(const LossWeights& c) {
  Json j;
  j["lambda_ce"] = c.lambda_ce;
  j["lambda_siou"] = c.lambda_siou;
  return j;
}

Json ToJson(const TrainConfig& c) {
  Json j;
  j["epochs"] = c.epochs;
  j["pairs_per_epoch"] = c.pairs_per_epoch;
  j["batch_size"] = c.batch_size;
  j["lr"] = c.lr;
  j["lr_decay_epoch"] = c.lr_decay_epoch;
  j["lr_decay_factor"] = c.lr_decay_factor;
  j["weight_decay"] = c.weight_decay;
  j["seed"] = c.seed;
  j["loss"] = ToJson(c.loss);
  j["max_frame_gap"] = c.max_frame_gap;
  j["template_factor"] = c.template_factor;
  j["search_factor"] = c.search_factor;
  j["center_jitter"] = c.center_jitter;
  j["scale_jitter"] = c.scale_jitter;
  j["brightness_jitter"] = c.brightness_jitter;
  j["flip_probability"] = c.flip_probability;
  j["eval_pairs"] = c.eval_pairs;
  return j;
}

Json ToJson(const TrackerConfig& c) {
  Json j;
  j["update_interval"] = c.update_interval;
  j["template_factor"] = c.template_factor;
  j["search_factor"] = c.search_factor;
  j["min_box_side"] = c.min_box_side;
  j["confidence_guard"] = c.confidence_guard ? Json(*c.confidence_guard) : Json(nullptr);
  return j;
}

EncoderConfig EncoderConfigFromJson(const nlohmann::json& j, EncoderConfig c) {
  Reader r(j, "encoder");
  r.Read("depth", c.depth);
  r.Read("width", c.width);
  r.Read("heads", c.heads);
  r.Read("mlp_ratio", c.mlp_ratio);
  r.Read("beta", c.beta);
  r.Read("ablate_dfa", c.ablate_dfa);
  r.Read("ablate_dfb", c.ablate_dfb);
  return c;
}

Normalization NormalizationFromJson(const nlohmann::json& j, Normalization c) {
  Reader r(j, "normalization");
  r.Read("mean", c.mean);
  r.Read("stddev", c.stddev);
  return c;
}

ModelConfig ModelConfigFromJson(const nlohmann::json& j, ModelConfig c) {
  Reader r(j, "model");
  r.Read("search_size", c.search_size);
  r.Read("template_size", c.template_size);
  r.Read("patch_size", c.patch_size);
  if (auto* v = r.Find("encoder")) c.encoder = EncoderConfigFromJson(*v, c.encoder);
  if (auto* v = r.Find("normalization")) {
    c.normalization = NormalizationFromJson(*v, c.normalization);
  }
  r.Read("seed", c.seed);
  return c;
}

SynthConfig SynthConfigFromJson(const nlohmann::json& j, SynthConfig c) {
  Reader r(j, "synth");
  r.Read("seed", c.seed);
  r.Read("num_sequences", c.num_sequences);
  r.Read("frames_per_sequence", c.frames_per_sequence);
  r.Read("frame_size", c.frame_size);
  r.Read("background_mean", c.background_mean);
  r.Read("noise_stddev", c.noise_stddev);
  if (auto* v = r.Find("object_size_range")) {
    if (!v->is_array() || v->size() != 2 || !(*v)[0].is_number_integer() ||
        !(*v)[1].is_number_integer()) {
      r.Fail("object_size_range", "expected [min, max] integers");
    }
    c.object_size_min = (*v)[0].get<int>();
    c.object_size_max = (*v)[1].get<int>();
  }
  r.Read("motion_step", c.motion_step);
  r.Read("illumination_flicker", c.illumination_flicker);
  r.Read("num_distractors", c.num_distractors);
  return c;
}

LossWeights LossWeightsFromJson(const nlohmann::json& j, LossWeights c) {
  Reader r(j, "train.loss");
  r.Read("lambda_ce", c.lambda_ce);
  r.Read("lambda_siou", c.lambda_siou);
  return c;
}

TrainConfig TrainConfigFromJson(const nlohmann::json& j, TrainConfig c) {
  Reader r(j, "train");
  r.Read("epochs", c.epochs);
  r.Read("pairs_per_epoch", c.pairs_per_epoch);
  r.Read("batch_size", c.batch_size);
  r.Read("lr", c.lr);
  r.Read("lr_decay_epoch", c.lr_decay_epoch);
  r.Read("lr_decay_factor", c.lr_decay_factor);
  r.Read("weight_decay", c.weight_decay);
  r.Read("seed", c.seed);
  if (auto* v = r.Find("loss")) c.loss = LossWeightsFromJson(*v, c.loss);
  r.Read("max_frame_gap", c.max_frame_gap);
  r.Read("template_factor", c.template_factor);
  r.Read("search_factor", c.search_factor);
  r.Read("center_jitter", c.center_jitter);
  r.Read("scale_jitter", c.scale_jitter);
  r.Read("brightness_jitter", c.brightness_jitter);
  r.Read("flip_probability", c.flip_probability);
  r.Read("eval_pairs", c.eval_pairs);
  return c;
}

TrackerConfig TrackerConfigFromJson(const nlohmann::json& j, TrackerConfig c) {
  Reader r(j, "tracker");
  r.Read("update_interval", c.update_interval);
  r.Read("template_factor", c.template_factor);
  r.Read("search_factor", c.search_factor);
  r.Read("min_box_side", c.min_box_side);
  if (auto* v = r.Find("confidence_guard")) {
    if (v->is_null()) {
      c.confidence_guard.reset();
    } else if (v->is_number()) {
      c.confidence_guard = v->get<double>();
    } else {
      r.Fail("confidence_guard", "expected a number or null");
    }
  }
  return c;
}

uint64_t DeriveSeed(uint64_t root, const std::string& component) {
  // FNV-1a of the component name, mixed with the root through SplitMix64.
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : component) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return SplitMix64(root ^ SplitMix64(h));
}

void CliConfig::ApplySeed(uint64_t root) {
  seed = root;
  model.seed = DeriveSeed(root, "model");
  synth.seed = DeriveSeed(root, "synth");
  train.seed = DeriveSeed(root, "train");
}

CliConfig CliConfigFromJson(const nlohmann::json& j) {
  CliConfig c;
  Reader r(j, "config");
  if (auto* v = r.Find("model")) c.model = ModelConfigFromJson(*v, c.model);
  if (auto* v = r.Find("synth")) c.synth = SynthConfigFromJson(*v, c.synth);
  if (auto* v = r.Find("train")) c.train = TrainConfigFromJson(*v, c.train);
  if (auto* v = r.Find("tracker")) c.tracker = TrackerConfigFromJson(*v, c.tracker);
  uint64_t seed = 0;
  // An echoed config writes "seed": null when no root seed was given.
  if (auto* v = r.Find("seed"); v && !v->is_null()) {
    r.Read("seed", seed);
    c.ApplySeed(seed);
  }
  return c;
}

nlohmann::json ReadJsonFile(const std::string& path) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorKind::kIo, "no such file '" + path + "'");
  }
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot read '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kConfig, "'" + path + "' is not valid JSON: " + e.what());
  }
}

CliConfig LoadCliConfig(const std::string& path) {
  return CliConfigFromJson(ReadJsonFile(path));
}

Json ToJson(const CliConfig& c) {
  Json j;
  j["seed"] = c.seed ? Json(*c.seed) : Json(nullptr);
  j["model"] = ToJson(c.model);
  j["synth"] = ToJson(c.synth);
  j["train"] = ToJson(c.train);
  j["tracker"] = ToJson(c.tracker);
  return j;
}

}  // namespace darter
