// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DARTer Authors.

#pragma once

#include <optional>
#include <vector>

#include "darter/dfa.hpp"
#include "darter/geometry.hpp"
#include "darter/image.hpp"
#include "darter/model.hpp"

namespace darter {

struct TrackerConfig {
  int update_interval = 25;
  double template_factor = 2.0;
  double search_factor = 4.0;
  double min_box_side = 2.0;
  // Skip a scheduled dynamic-template refresh when the confidence is below
  // this value. Disabled when unset.
  std::optional<double> confidence_guard;

  void Validate() const;
};

struct TemplateState {
  Image static_crop;
  Image dynamic_crop;
  int dynamic_age = 0;
  int update_interval = 25;
};

struct TrackResult {
  BBox box;  // frame coordinates
  double confidence = 0.0;
  ActivationTrace trace;
};

// One-pass tracker over a single sequence. Not thread-safe; use one
// instance per sequence.
class Tracker {
 public:
  Tracker(Model& model, TrackerConfig config);

  // Throws Error(kInvalidBox) for boxes with non-positive size or outside
  // the frame.
  void Init(const Image& frame, const BBox& box);
  // Throws Error(kState) before Init().
  TrackResult Step(const Image& frame);

  bool initialized() const { return initialized_; }
  const TemplateState& templates() const { return templates_; }
  const BBox& last_box() const { return last_box_; }
  // Frames processed including the initial one.
  int frame_count() const { return frame_count_; }

 private:
  Model* model_;
  TrackerConfig config_;
  TemplateState templates_;
  TemplateTokens template_tokens_;
  BBox last_box_;
  bool initialized_ = false;
  int frame_count_ = 0;
};

struct SequenceRun {
  std::vector<BBox> boxes;                // one per frame, frame 1 = init box
  std::vector<ActivationTrace> traces;    // one per frame after the first
  std::vector<double> confidences;        // one per frame after the first
  double step_seconds = 0.0;              // wall-clock time spent in Step()
};

SequenceRun RunSequence(Model& model, const TrackerConfig& config,
                        const std::vector<Image>& frames, const BBox& init_box);

}  // namespace darter
