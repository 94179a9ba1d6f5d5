// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DARTer Authors.

#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "darter/data.hpp"
#include "darter/losses.hpp"
#include "darter/model.hpp"
#include "darter/rng.hpp"

namespace darter {

struct TrainConfig {
  int epochs = 20;
  int pairs_per_epoch = 512;
  int batch_size = 8;
  double lr = 1e-3;
  int lr_decay_epoch = 16;
  double lr_decay_factor = 0.1;
  double weight_decay = 1e-4;
  uint64_t seed = 1;
  LossWeights loss;

  // Pair sampling and augmentation.
  int max_frame_gap = 50;
  double template_factor = 2.0;
  double search_factor = 4.0;
  double center_jitter = 0.25;
  double scale_jitter = 0.15;
  double brightness_jitter = 0.3;
  double flip_probability = 0.5;
  // Held-out pairs scored after every epoch to pick the best checkpoint.
  int eval_pairs = 32;

  // 150 epochs x 60000 pairs, batch 32, lr 1e-4 decayed at epoch 120.
  static TrainConfig FullScale();
  void Validate() const;
};

// lr * factor once epoch >= decay_epoch (epochs count from 0).
double LearningRate(const TrainConfig& config, int epoch);

struct TrainingPair {
  Image static_crop;
  Image dynamic_crop;
  Image search_crop;
  BBox gt_in_search;
  int sequence = 0;
  std::array<int, 3> frames{};  // static, dynamic, search (0-based)
};

// Static template, dynamic template and search frames in increasing order,
// spanning at most max_frame_gap frames. Throws Error(kSampleRejected) for
// sequences shorter than three frames.
std::array<int, 3> SampleFrames(int num_frames, int max_gap, Rng& rng);

TrainingPair MakePair(const Sequence& seq, int sequence_index,
                      const std::array<int, 3>& frames, const ModelConfig& model,
                      const TrainConfig& config, Rng& rng, bool augment);

// Draws a sequence uniformly among those long enough, then its frames.
TrainingPair SamplePair(const std::vector<Sequence>& data,
                        const ModelConfig& model, const TrainConfig& config,
                        Rng& rng, bool augment = true);

class AdamW {
 public:
  AdamW(double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
        double eps = 1e-8)
      : weight_decay_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // Decoupled decay followed by the bias-corrected Adam update; gradients
  // are read from p.grad and left untouched.
  void Step(const std::vector<ad::Parameter*>& params, double lr);
  int steps() const { return steps_; }

 private:
  struct Moments {
    ad::Matrix m;
    ad::Matrix v;
  };
  double weight_decay_, beta1_, beta2_, eps_;
  int steps_ = 0;
  std::unordered_map<const ad::Parameter*, Moments> moments_;
};

// Mean loss over a batch of pairs (training-mode forward with soft gates).
struct BatchLoss {
  ad::Var total;
  LossValue mean;
};
BatchLoss ComputeBatchLoss(ad::Tape& tape, Model& model,
                           const std::vector<TrainingPair>& batch,
                           const LossWeights& weights, bool update_running);

struct LossRecord {
  int step = 0;
  LossValue loss;
  double lr = 0.0;
};

struct TrainOutputs {
  // Final checkpoint; "<path>.best" receives the best held-out epoch.
  std::string checkpoint_path;
  // CSV "step,loss_total,loss_ce,loss_siou,lr".
  std::string loss_curve_path;
  // Where a non-finite batch is described before aborting.
  std::string diagnostic_path = "nonfinite_batch.json";
  std::function<void(const LossRecord&)> on_step;
};

struct TrainResult {
  std::vector<LossRecord> curve;
  std::vector<double> epoch_eval_iou;
  double best_eval_iou = 0.0;
};

TrainResult Train(Model& model, const std::vector<Sequence>& data,
                  const TrainConfig& config, const TrainOutputs& outputs = {});

// Inference-mode IoU between the decoded box and the ground truth, averaged.
double MeanIou(Model& model, const std::vector<TrainingPair>& pairs);

}  // namespace darter
