// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DARTer Authors.

#include "darter/tracker.hpp"

#include <chrono>

#include "darter/errors.hpp"

namespace darter {

void TrackerConfig::Validate() const {
  if (update_interval < 1) {
    throw Error(ErrorKind::kConfig, "update_interval must be >= 1");
  }
  if (!(template_factor > 0.0) || !(search_factor > 0.0) ||
      !(min_box_side > 0.0)) {
    throw Error(ErrorKind::kConfig, "tracker factors must be positive");
  }
}

Tracker::Tracker(Model& model, TrackerConfig config)
    : model_(&model), config_(std::move(config)) {
  config_.Validate();
}

void Tracker::Init(const Image& frame, const BBox& box) {
  ValidateBox(box);
  if (box.right() <= 0.0 || box.bottom() <= 0.0 || box.x >= frame.width() ||
      box.y >= frame.height()) {
    throw Error(ErrorKind::kInvalidBox, "initial box lies outside the frame");
  }
  const int tsize = model_->config().template_size;
  templates_.static_crop = ExtractCrop(
      frame, MakeCrop(frame.width(), frame.height(), box,
                      config_.template_factor, tsize));
  templates_.dynamic_crop = templates_.static_crop;
  templates_.dynamic_age = 0;
  templates_.update_interval = config_.update_interval;
  template_tokens_ = model_->ComputeTemplateTokens(templates_.static_crop,
                                                   templates_.dynamic_crop);
  last_box_ = box;
  initialized_ = true;
  frame_count_ = 1;
}

TrackResult Tracker::Step(const Image& frame) {
  if (!initialized_) {
    throw Error(ErrorKind::kState, "tracker used before Init()");
  }
  const int ssize = model_->config().search_size;
  const CropSpec crop = MakeCrop(frame.width(), frame.height(), last_box_,
                                 config_.search_factor, ssize);
  const Inference inf = model_->Infer(ExtractCrop(frame, crop), template_tokens_);
  const DecodedBox decoded = DecodeBox(inf.head, ssize);

  TrackResult result;
  result.box = ClampBox(CropToFrameCoords(decoded.box, crop), frame.width(),
                        frame.height(), config_.min_box_side);
  result.confidence = decoded.confidence;
  result.trace = inf.trace;
  last_box_ = result.box;
  ++frame_count_;

  ++templates_.dynamic_age;
  if (templates_.dynamic_age >= config_.update_interval) {
    templates_.dynamic_age = 0;
    const bool guarded = config_.confidence_guard.has_value() &&
                         result.confidence < *config_.confidence_guard;
    if (!guarded) {
      templates_.dynamic_crop = ExtractCrop(
          frame, MakeCrop(frame.width(), frame.height(), result.box,
                          config_.template_factor,
                          model_->config().template_size));
      template_tokens_ = model_->ComputeTemplateTokens(
          templates_.static_crop, templates_.dynamic_crop);
    }
  }
  return result;
}

SequenceRun RunSequence(Model& model, const TrackerConfig& config,
                        const std::vector<Image>& frames, const BBox& init_box) {
  if (frames.empty()) throw Error(ErrorKind::kInput, "sequence has no frames");
  Tracker tracker(model, config);
  tracker.Init(frames[0], init_box);
  SequenceRun run;
  run.boxes.push_back(init_box);
  double seconds = 0.0;
  for (size_t i = 1; i < frames.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    TrackResult r = tracker.Step(frames[i]);
    seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                             start)
                   .count();
    run.boxes.push_back(r.box);
    run.confidences.push_back(r.confidence);
    run.traces.push_back(std::move(r.trace));
  }
  run.step_seconds = seconds;
  return run;
}

}  // namespace darter
