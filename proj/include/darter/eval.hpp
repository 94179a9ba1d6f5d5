// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DARTer Authors.

#pragma once

// One-pass evaluation metrics:
//   P       share of frames with center error <= 20 px
//   P_norm  share of frames with size-normalized center error <= 0.2
//   AUC     mean over thresholds 0, 0.05, ..., 1 of the share of frames with
//           IoU strictly above the threshold
// All three are reported in percent.

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "darter/data.hpp"
#include "darter/geometry.hpp"
#include "darter/model.hpp"
#include "darter/tracker.hpp"

namespace darter {

inline constexpr double kPrecisionThreshold = 20.0;
inline constexpr double kNormPrecisionThreshold = 0.2;
inline constexpr int kSuccessThresholds = 21;

double Precision(const std::vector<BBox>& results, const std::vector<BBox>& gt,
                 double threshold = kPrecisionThreshold);
double NormPrecision(const std::vector<BBox>& results,
                     const std::vector<BBox>& gt,
                     double threshold = kNormPrecisionThreshold);
double SuccessAuc(const std::vector<BBox>& results, const std::vector<BBox>& gt);

// Success rate (percent) at threshold i / 20 for i = 0..20.
std::vector<double> SuccessCurve(const std::vector<BBox>& results,
                                 const std::vector<BBox>& gt);
// Normalized precision (percent) at 0, 0.01, ..., 0.5.
std::vector<double> NormPrecisionCurve(const std::vector<BBox>& results,
                                       const std::vector<BBox>& gt);
// Precision (percent) at 0, 1, ..., 50 px.
std::vector<double> PrecisionCurve(const std::vector<BBox>& results,
                                   const std::vector<BBox>& gt);

struct TrackedSequence {
  std::string name;
  std::vector<BBox> results;
  std::vector<BBox> groundtruth;
  std::vector<ActivationTrace> traces;  // empty when not tracked in-process
  double step_seconds = 0.0;
};

struct SequenceMetrics {
  std::string name;
  int frames = 0;
  double precision = 0.0;
  double norm_precision = 0.0;
  double auc = 0.0;
  std::optional<double> mean_layers;
  std::optional<double> fps;
};

struct MetricsReport {
  nlohmann::ordered_json config;
  std::vector<SequenceMetrics> per_sequence;
  SequenceMetrics overall;  // frame-weighted over all sequences
};

MetricsReport Evaluate(const std::vector<TrackedSequence>& runs,
                       nlohmann::ordered_json config = nlohmann::ordered_json::object());

nlohmann::ordered_json ToJson(const MetricsReport& report);

struct BenchVariant {
  double beta = 0.3;
  bool ablate_dfb = false;
  bool ablate_dfa = false;
};

// Every beta value crossed with every requested ablation setting.
std::vector<BenchVariant> BenchVariants(const std::vector<double>& betas,
                                        bool sweep_dfb, bool sweep_dfa);

// "A:B:STEP" inclusive of B within half a step.
std::vector<double> ParseBetaSweep(const std::string& sweep);

// Runs the tracker over every sequence for each variant. Sequences run one
// after another on a single instance so fps stays comparable.
std::vector<MetricsReport> RunBenchmark(Model& model,
                                        const std::vector<Sequence>& data,
                                        const TrackerConfig& tracker,
                                        const std::vector<BenchVariant>& variants);

void WriteCurvesCsv(const std::string& path, const std::vector<TrackedSequence>& runs);

}  // namespace darter
