// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DARTer Authors.

#include "darter/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "darter/config.hpp"
#include "darter/errors.hpp"

namespace darter {

TrainConfig TrainConfig::FullScale() {
  TrainConfig c;
  c.epochs = 150;
  c.pairs_per_epoch = 60000;
  c.batch_size = 32;
  c.lr = 1e-4;
  c.lr_decay_epoch = 120;
  c.lr_decay_factor = 0.1;
  return c;
}

void TrainConfig::Validate() const {
  if (epochs < 1 || pairs_per_epoch < 1 || batch_size < 1) {
    throw Error(ErrorKind::kConfig, "epochs, pairs_per_epoch and batch_size must be >= 1");
  }
  if (pairs_per_epoch < batch_size) {
    throw Error(ErrorKind::kConfig, "pairs_per_epoch must be >= batch_size");
  }
  if (!(lr > 0.0) || !(lr_decay_factor > 0.0) || !(weight_decay >= 0.0)) {
    throw Error(ErrorKind::kConfig, "learning-rate settings out of range");
  }
  if (max_frame_gap < 2) throw Error(ErrorKind::kConfig, "max_frame_gap must be >= 2");
  if (!(template_factor > 0.0) || !(search_factor > 0.0)) {
    throw Error(ErrorKind::kConfig, "crop factors must be positive");
  }
  if (!(center_jitter >= 0.0 && center_jitter < 0.5)) {
    throw Error(ErrorKind::kConfig, "center_jitter must lie in [0, 0.5)");
  }
  if (!(scale_jitter >= 0.0) || !(brightness_jitter >= 0.0 && brightness_jitter < 1.0) ||
      !(flip_probability >= 0.0 && flip_probability <= 1.0)) {
    throw Error(ErrorKind::kConfig, "augmentation settings out of range");
  }
  if (eval_pairs < 0) throw Error(ErrorKind::kConfig, "eval_pairs must be >= 0");
}

double LearningRate(const TrainConfig& config, int epoch) {
  return epoch >= config.lr_decay_epoch ? config.lr * config.lr_decay_factor
                                        : config.lr;
}

std::array<int, 3> SampleFrames(int num_frames, int max_gap, Rng& rng) {
  if (num_frames < 3) {
    throw Error(ErrorKind::kSampleRejected,
                "sequence needs at least 3 annotated frames");
  }
  const int first = static_cast<int>(rng.UniformInt(num_frames - 2));
  const int last_max = std::min(num_frames - 1, first + max_gap);
  const int last =
      first + 2 + static_cast<int>(rng.UniformInt(last_max - first - 1));
  const int middle =
      first + 1 + static_cast<int>(rng.UniformInt(last - first - 1));
  return {first, middle, last};
}

namespace {

void ScaleBrightness(Image& image, double factor) {
  for (float& v : image.data()) {
    v = std::clamp(static_cast<float>(v * factor), 0.0f, 1.0f);
  }
}

}  // namespace

TrainingPair MakePair(const Sequence& seq, int sequence_index,
                      const std::array<int, 3>& frames,
                      const ModelConfig& model, const TrainConfig& config,
                      Rng& rng, bool augment) {
  TrainingPair pair;
  pair.sequence = sequence_index;
  pair.frames = frames;
  const Image& f0 = seq.frames.at(frames[0]);
  const Image& f1 = seq.frames.at(frames[1]);
  const Image& f2 = seq.frames.at(frames[2]);
  pair.static_crop = ExtractCrop(
      f0, MakeCrop(f0.width(), f0.height(), seq.groundtruth.at(frames[0]),
                   config.template_factor, model.template_size));
  pair.dynamic_crop = ExtractCrop(
      f1, MakeCrop(f1.width(), f1.height(), seq.groundtruth.at(frames[1]),
                   config.template_factor, model.template_size));

  const BBox& target = seq.groundtruth.at(frames[2]);
  CropSpec search = MakeCrop(f2.width(), f2.height(), target,
                             config.search_factor, model.search_size);
  search.side *= std::exp(rng.Uniform(-config.scale_jitter, config.scale_jitter));
  search.center_x += rng.Uniform(-1.0, 1.0) * config.center_jitter * search.side;
  search.center_y += rng.Uniform(-1.0, 1.0) * config.center_jitter * search.side;
  pair.search_crop = ExtractCrop(f2, search);
  pair.gt_in_search = BoxToCropCoords(target, search);

  if (augment) {
    const double gain =
        rng.Uniform(1.0 - config.brightness_jitter, 1.0 + config.brightness_jitter);
    ScaleBrightness(pair.static_crop, gain);
    ScaleBrightness(pair.dynamic_crop, gain);
    ScaleBrightness(pair.search_crop, gain);
    if (rng.Bernoulli(config.flip_probability)) {
      pair.static_crop = FlipHorizontal(pair.static_crop);
      pair.dynamic_crop = FlipHorizontal(pair.dynamic_crop);
      pair.search_crop = FlipHorizontal(pair.search_crop);
      BBox& g = pair.gt_in_search;
      g.x = model.search_size - g.x - g.w;
    }
  }
  return pair;
}

TrainingPair SamplePair(const std::vector<Sequence>& data,
                        const ModelConfig& model, const TrainConfig& config,
                        Rng& rng, bool augment) {
  std::vector<int> usable;
  for (size_t i = 0; i < data.size(); ++i) {
    if (data[i].frames.size() >= 3) usable.push_back(static_cast<int>(i));
  }
  if (usable.empty()) {
    throw Error(ErrorKind::kSampleRejected,
                "no sequence with at least 3 annotated frames");
  }
  const int s = usable[rng.UniformInt(usable.size())];
  const auto frames = SampleFrames(static_cast<int>(data[s].frames.size()),
                                   config.max_frame_gap, rng);
  return MakePair(data[s], s, frames, model, config, rng, augment);
}

void AdamW::Step(const std::vector<ad::Parameter*>& params, double lr) {
  ++steps_;
  const double bc1 = 1.0 - std::pow(beta1_, steps_);
  const double bc2 = 1.0 - std::pow(beta2_, steps_);
  for (ad::Parameter* p : params) {
    Moments& mo = moments_[p];
    if (mo.m.size() == 0) {
      mo.m = ad::Matrix::Zero(p->value.rows(), p->value.cols());
      mo.v = ad::Matrix::Zero(p->value.rows(), p->value.cols());
    }
    ad::Matrix g = p->grad.size() == 0
                       ? ad::Matrix::Zero(p->value.rows(), p->value.cols())
                       : p->grad;
    p->value *= 1.0 - lr * weight_decay_;
    mo.m = beta1_ * mo.m + (1.0 - beta1_) * g;
    mo.v = beta2_ * mo.v + (1.0 - beta2_) * g.cwiseProduct(g);
    p->value.array() -= lr * (mo.m.array() / bc1) /
                        ((mo.v.array() / bc2).sqrt() + eps_);
  }
}

BatchLoss ComputeBatchLoss(ad::Tape& tape, Model& model,
                           const std::vector<TrainingPair>& batch,
                           const LossWeights& weights, bool update_running) {
  const GateMode mode =
      model.config().encoder.ablate_dfa ? GateMode::kOff : GateMode::kSoft;
  std::vector<ad::Var> search_tokens;
  for (const TrainingPair& pair : batch) {
    TemplateVars templates =
        model.FuseTemplates(tape, tape.Constant(model.PrepareImage(pair.static_crop)),
                            tape.Constant(model.PrepareImage(pair.dynamic_crop)));
    ForwardVars fwd = model.Forward(
        tape, tape.Constant(model.PrepareImage(pair.search_crop)), templates, mode);
    search_tokens.push_back(fwd.search_tokens);
  }
  const int grid = model.search_grid().initial_grid();
  HeadVars head = model.head(tape, ad::ConcatRows(search_tokens),
                             static_cast<int>(batch.size()), grid,
                             /*training=*/true, update_running);
  std::vector<ad::Var> totals;
  BatchLoss out;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (size_t i = 0; i < batch.size(); ++i) {
    LossVars l = TotalLossVars(head, static_cast<int>(i), batch[i].gt_in_search,
                               model.config().search_size, weights);
    totals.push_back(l.total);
    out.mean.total += l.total.value()(0, 0) * inv_b;
    out.mean.ce += l.ce.value()(0, 0) * inv_b;
    out.mean.siou += l.siou.value()(0, 0) * inv_b;
  }
  out.total = ad::Scale(ad::Sum(ad::ConcatRows(totals)), inv_b);
  return out;
}

double MeanIou(Model& model, const std::vector<TrainingPair>& pairs) {
  if (pairs.empty()) return 0.0;
  double sum = 0.0;
  for (const TrainingPair& pair : pairs) {
    const TemplateTokens templates =
        model.ComputeTemplateTokens(pair.static_crop, pair.dynamic_crop);
    const Inference inf = model.Infer(pair.search_crop, templates);
    const DecodedBox d = DecodeBox(inf.head, model.config().search_size);
    sum += Iou(d.box, pair.gt_in_search);
  }
  return sum / static_cast<double>(pairs.size());
}

namespace {

void DumpBatch(const std::string& path, const std::vector<TrainingPair>& batch,
               int step, const LossValue& loss) {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["loss_total"] = std::isfinite(loss.total) ? nlohmann::json(loss.total)
                                              : nlohmann::json(std::to_string(loss.total));
  j["loss_ce"] = std::to_string(loss.ce);
  j["loss_siou"] = std::to_string(loss.siou);
  j["pairs"] = nlohmann::json::array();
  for (const TrainingPair& p : batch) {
    j["pairs"].push_back({{"sequence", p.sequence},
                          {"frames", p.frames},
                          {"gt_in_search", FormatBox(p.gt_in_search)}});
  }
  std::ofstream out(path);
  out << j.dump(2) << '\n';
}

}  // namespace

TrainResult Train(Model& model, const std::vector<Sequence>& data,
                  const TrainConfig& config, const TrainOutputs& outputs) {
  config.Validate();
  Rng root(config.seed);
  Rng sample_rng = root.Fork(1);
  Rng eval_rng = root.Fork(2);

  std::vector<TrainingPair> held_out;
  for (int i = 0; i < config.eval_pairs; ++i) {
    held_out.push_back(SamplePair(data, model.config(), config, eval_rng, false));
  }

  std::ofstream curve;
  if (!outputs.loss_curve_path.empty()) {
    curve.open(outputs.loss_curve_path);
    if (!curve) {
      throw Error(ErrorKind::kIo, "cannot write '" + outputs.loss_curve_path + "'");
    }
    curve << "step,loss_total,loss_ce,loss_siou,lr\n";
  }

  const std::vector<ad::Parameter*> params = model.Parameters();
  AdamW optimizer(config.weight_decay);
  TrainResult result;
  result.best_eval_iou = -1.0;
  const int steps_per_epoch = config.pairs_per_epoch / config.batch_size;
  int step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = LearningRate(config, epoch);
    for (int s = 0; s < steps_per_epoch; ++s) {
      std::vector<TrainingPair> batch;
      for (int b = 0; b < config.batch_size; ++b) {
        batch.push_back(SamplePair(data, model.config(), config, sample_rng));
      }
      for (ad::Parameter* p : params) p->ZeroGrad();
      ad::Tape tape;
      BatchLoss loss = ComputeBatchLoss(tape, model, batch, config.loss, true);
      ++step;
      if (!std::isfinite(loss.mean.total)) {
        DumpBatch(outputs.diagnostic_path, batch, step, loss.mean);
        throw Error(ErrorKind::kNonFiniteLoss,
                    "non-finite loss at step " + std::to_string(step) +
                        "; batch written to " + outputs.diagnostic_path);
      }
      tape.Backward(loss.total);
      optimizer.Step(params, lr);

      const LossRecord record{step, loss.mean, lr};
      result.curve.push_back(record);
      if (curve.is_open()) {
        char line[160];
        std::snprintf(line, sizeof(line), "%d,%.9g,%.9g,%.9g,%.9g\n", step,
                      loss.mean.total, loss.mean.ce, loss.mean.siou, lr);
        curve << line;
      }
      if (outputs.on_step) outputs.on_step(record);
    }
    if (!held_out.empty()) {
      const double iou = MeanIou(model, held_out);
      result.epoch_eval_iou.push_back(iou);
      if (iou > result.best_eval_iou) {
        result.best_eval_iou = iou;
        if (!outputs.checkpoint_path.empty()) {
          SaveCheckpoint(outputs.checkpoint_path + ".best", model);
        }
      }
    }
  }
  if (!outputs.checkpoint_path.empty()) {
    SaveCheckpoint(outputs.checkpoint_path, model);
  }
  return result;
}

}  // namespace darter
