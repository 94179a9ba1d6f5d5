// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DARTer Authors.

#include "darter/eval.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "darter/config.hpp"
#include "darter/errors.hpp"

namespace darter {
namespace {

void CheckLengths(const std::vector<BBox>& results, const std::vector<BBox>& gt) {
  if (results.size() != gt.size()) {
    throw Error(ErrorKind::kInput,
                "result/groundtruth length mismatch: " +
                    std::to_string(results.size()) + " vs " +
                    std::to_string(gt.size()));
  }
  if (gt.empty()) throw Error(ErrorKind::kInput, "no frames to evaluate");
}

double CenterError(const BBox& a, const BBox& b) {
  return std::hypot(a.cx() - b.cx(), a.cy() - b.cy());
}

double NormCenterError(const BBox& r, const BBox& g) {
  return std::hypot((r.cx() - g.cx()) / g.w, (r.cy() - g.cy()) / g.h);
}

// Frame counts behind each metric; sums across sequences give the
// frame-weighted overall values.
struct Counts {
  long frames = 0;
  long precise = 0;
  long norm_precise = 0;
  long success_hits = 0;  // summed over the 21 thresholds

  void Add(const std::vector<BBox>& results, const std::vector<BBox>& gt) {
    CheckLengths(results, gt);
    for (size_t i = 0; i < gt.size(); ++i) {
      ++frames;
      if (CenterError(results[i], gt[i]) <= kPrecisionThreshold) ++precise;
      if (NormCenterError(results[i], gt[i]) <= kNormPrecisionThreshold) {
        ++norm_precise;
      }
      const double iou = Iou(results[i], gt[i]);
      for (int t = 0; t < kSuccessThresholds; ++t) {
        if (iou > t / 20.0) ++success_hits;
      }
    }
  }

  void Fill(SequenceMetrics& m) const {
    m.frames = static_cast<int>(frames);
    m.precision = 100.0 * precise / frames;
    m.norm_precision = 100.0 * norm_precise / frames;
    m.auc = 100.0 * success_hits / (static_cast<double>(frames) * kSuccessThresholds);
  }
};

}  // namespace

double Precision(const std::vector<BBox>& results, const std::vector<BBox>& gt,
                 double threshold) {
  CheckLengths(results, gt);
  long hits = 0;
  for (size_t i = 0; i < gt.size(); ++i) {
    if (CenterError(results[i], gt[i]) <= threshold) ++hits;
  }
  return 100.0 * hits / static_cast<double>(gt.size());
}

double NormPrecision(const std::vector<BBox>& results,
                     const std::vector<BBox>& gt, double threshold) {
  CheckLengths(results, gt);
  long hits = 0;
  for (size_t i = 0; i < gt.size(); ++i) {
    if (NormCenterError(results[i], gt[i]) <= threshold) ++hits;
  }
  return 100.0 * hits / static_cast<double>(gt.size());
}

std::vector<double> SuccessCurve(const std::vector<BBox>& results,
                                 const std::vector<BBox>& gt) {
  CheckLengths(results, gt);
  std::vector<double> ious;
  for (size_t i = 0; i < gt.size(); ++i) ious.push_back(Iou(results[i], gt[i]));
  std::vector<double> curve;
  for (int t = 0; t < kSuccessThresholds; ++t) {
    long hits = 0;
    for (double iou : ious) hits += iou > t / 20.0 ? 1 : 0;
    curve.push_back(100.0 * hits / static_cast<double>(gt.size()));
  }
  return curve;
}

double SuccessAuc(const std::vector<BBox>& results, const std::vector<BBox>& gt) {
  Counts c;
  c.Add(results, gt);
  SequenceMetrics m;
  c.Fill(m);
  return m.auc;
}

std::vector<double> PrecisionCurve(const std::vector<BBox>& results,
                                   const std::vector<BBox>& gt) {
  std::vector<double> curve;
  for (int t = 0; t <= 50; ++t) curve.push_back(Precision(results, gt, t));
  return curve;
}

std::vector<double> NormPrecisionCurve(const std::vector<BBox>& results,
                                       const std::vector<BBox>& gt) {
  std::vector<double> curve;
  for (int t = 0; t <= 50; ++t) curve.push_back(NormPrecision(results, gt, t / 100.0));
  return curve;
}

MetricsReport Evaluate(const std::vector<TrackedSequence>& runs,
                       nlohmann::ordered_json config) {
  if (runs.empty()) throw Error(ErrorKind::kInput, "no sequences to evaluate");
  MetricsReport report;
  report.config = std::move(config);
  Counts total;
  long layer_sum = 0, layer_frames = 0;
  double seconds = 0.0;
  bool timed = true;
  for (const TrackedSequence& run : runs) {
    Counts c;
    c.Add(run.results, run.groundtruth);
    total.Add(run.results, run.groundtruth);
    SequenceMetrics m;
    m.name = run.name;
    c.Fill(m);
    if (!run.traces.empty()) {
      long layers = 0;
      for (const ActivationTrace& t : run.traces) layers += t.executed_count();
      m.mean_layers = static_cast<double>(layers) / run.traces.size();
      layer_sum += layers;
      layer_frames += static_cast<long>(run.traces.size());
      if (run.step_seconds > 0.0) {
        m.fps = run.traces.size() / run.step_seconds;
        seconds += run.step_seconds;
      } else {
        timed = false;
      }
    } else {
      timed = false;
    }
    report.per_sequence.push_back(m);
  }
  report.overall.name = "overall";
  total.Fill(report.overall);
  if (layer_frames > 0) {
    report.overall.mean_layers = static_cast<double>(layer_sum) / layer_frames;
  }
  if (timed && seconds > 0.0) report.overall.fps = layer_frames / seconds;
  return report;
}

namespace {

nlohmann::ordered_json MetricsJson(const SequenceMetrics& m, bool with_name) {
  nlohmann::ordered_json j;
  if (with_name) j["name"] = m.name;
  j["frames"] = m.frames;
  j["P"] = m.precision;
  j["P_norm"] = m.norm_precision;
  j["AUC"] = m.auc;
  j["mean_layers"] = m.mean_layers ? nlohmann::ordered_json(*m.mean_layers)
                                   : nlohmann::ordered_json(nullptr);
  j["fps"] = m.fps ? nlohmann::ordered_json(*m.fps) : nlohmann::ordered_json(nullptr);
  return j;
}

}  // namespace

nlohmann::ordered_json ToJson(const MetricsReport& report) {
  nlohmann::ordered_json j;
  j["config"] = report.config;
  j["per_sequence"] = nlohmann::ordered_json::array();
  for (const SequenceMetrics& m : report.per_sequence) {
    j["per_sequence"].push_back(MetricsJson(m, true));
  }
  j["overall"] = MetricsJson(report.overall, false);
  return j;
}

std::vector<BenchVariant> BenchVariants(const std::vector<double>& betas,
                                        bool sweep_dfb, bool sweep_dfa) {
  std::vector<BenchVariant> variants;
  for (double beta : betas) {
    for (int dfb = 0; dfb <= (sweep_dfb ? 1 : 0); ++dfb) {
      for (int dfa = 0; dfa <= (sweep_dfa ? 1 : 0); ++dfa) {
        variants.push_back({beta, dfb == 1, dfa == 1});
      }
    }
  }
  return variants;
}

std::vector<double> ParseBetaSweep(const std::string& sweep) {
  std::vector<double> parts;
  std::stringstream ss(sweep);
  std::string field;
  while (std::getline(ss, field, ':')) {
    try {
      size_t pos = 0;
      parts.push_back(std::stod(field, &pos));
      if (pos != field.size()) throw std::invalid_argument(field);
    } catch (const std::exception&) {
      throw Error(ErrorKind::kConfig, "bad beta sweep '" + sweep + "'");
    }
  }
  if (parts.size() == 1) return parts;
  if (parts.size() != 3 || !(parts[2] > 0.0) || parts[1] < parts[0]) {
    throw Error(ErrorKind::kConfig, "beta sweep must be A:B:STEP with A <= B, STEP > 0");
  }
  std::vector<double> betas;
  const int n = static_cast<int>(std::floor((parts[1] - parts[0]) / parts[2] + 0.5));
  for (int i = 0; i <= n; ++i) {
    const double b = parts[0] + i * parts[2];
    if (b < 0.0 || b > 1.0 + 1e-12) {
      throw Error(ErrorKind::kConfig, "beta values must lie in [0, 1]");
    }
    betas.push_back(std::min(b, 1.0));
  }
  return betas;
}

std::vector<MetricsReport> RunBenchmark(Model& model,
                                        const std::vector<Sequence>& data,
                                        const TrackerConfig& tracker,
                                        const std::vector<BenchVariant>& variants) {
  const EncoderConfig saved = model.config().encoder;
  std::vector<MetricsReport> reports;
  for (const BenchVariant& v : variants) {
    model.set_beta(v.beta);
    model.set_ablate_dfb(v.ablate_dfb);
    model.set_ablate_dfa(v.ablate_dfa);
    std::vector<TrackedSequence> runs;
    for (const Sequence& seq : data) {
      SequenceRun run = RunSequence(model, tracker, seq.frames, seq.groundtruth.at(0));
      runs.push_back({seq.name, std::move(run.boxes), seq.groundtruth,
                      std::move(run.traces), run.step_seconds});
    }
    nlohmann::ordered_json config;
    config["beta"] = v.beta;
    config["ablate_dfb"] = v.ablate_dfb;
    config["ablate_dfa"] = v.ablate_dfa;
    config["model"] = ToJson(model.config());
    config["tracker"] = ToJson(tracker);
    reports.push_back(Evaluate(runs, std::move(config)));
  }
  model.set_beta(saved.beta);
  model.set_ablate_dfb(saved.ablate_dfb);
  model.set_ablate_dfa(saved.ablate_dfa);
  return reports;
}

void WriteCurvesCsv(const std::string& path, const std::vector<TrackedSequence>& runs) {
  std::vector<BBox> all_results, all_gt;
  for (const TrackedSequence& r : runs) {
    all_results.insert(all_results.end(), r.results.begin(), r.results.end());
    all_gt.insert(all_gt.end(), r.groundtruth.begin(), r.groundtruth.end());
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write '" + path + "'");
  out << "kind,threshold,value\n";
  const auto success = SuccessCurve(all_results, all_gt);
  for (int t = 0; t < kSuccessThresholds; ++t) {
    out << "success," << t / 20.0 << ',' << success[t] << '\n';
  }
  const auto precision = PrecisionCurve(all_results, all_gt);
  for (int t = 0; t <= 50; ++t) out << "precision," << t << ',' << precision[t] << '\n';
  const auto norm = NormPrecisionCurve(all_results, all_gt);
  for (int t = 0; t <= 50; ++t) {
    out << "norm_precision," << t / 100.0 << ',' << norm[t] << '\n';
  }
}

}  // namespace darter
