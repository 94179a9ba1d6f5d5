// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DARTer Authors.

// darter: dataset generation, training, tracking, evaluation and benchmarks.
//
// Exit codes: 0 success, 2 usage, 3 unexpected failure, and 10 + the error
// kind for library errors (see ExitCodeFor). Failures print one stderr line:
//   error: class=<kind> code=<n> message=<text>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "darter/config.hpp"
#include "darter/data.hpp"
#include "darter/errors.hpp"
#include "darter/eval.hpp"
#include "darter/image.hpp"
#include "darter/model.hpp"
#include "darter/tracker.hpp"
#include "darter/training.hpp"

namespace fs = std::filesystem;
using namespace darter;

namespace {

enum class LogLevel { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

LogLevel g_log_level = LogLevel::kInfo;

void InitLogLevel() {
  const char* env = std::getenv("DARTER_LOG");
  if (env == nullptr) return;
  const std::string v = env;
  if (v == "error") g_log_level = LogLevel::kError;
  else if (v == "warn") g_log_level = LogLevel::kWarn;
  else if (v == "info") g_log_level = LogLevel::kInfo;
  else if (v == "debug") g_log_level = LogLevel::kDebug;
  else throw Error(ErrorKind::kConfig, "DARTER_LOG must be error, warn, info or debug");
}

void Log(LogLevel level, const std::string& msg) {
  if (level > g_log_level) return;
  static const char* kNames[] = {"error", "warn", "info", "debug"};
  std::fprintf(stderr, "[%s] %s\n", kNames[static_cast<int>(level)], msg.c_str());
}

int ExitCodeFor(ErrorKind kind) { return 10 + static_cast<int>(kind); }

std::string OneLine(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

void RequireExists(const std::string& path) {
  if (!fs::exists(path)) throw Error(ErrorKind::kIo, "no such file or directory '" + path + "'");
}

void WriteJson(const std::string& path, const Json& j) {
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

// Text outputs carry their effective config in "<path>.config.json".
void WriteSidecar(const std::string& path, const Json& config) {
  WriteJson(path + ".config.json", config);
}

CliConfig LoadConfigOrDefaults(const std::string& path) {
  if (path.empty()) return CliConfig{};
  return LoadCliConfig(path);
}

// ---- gen-data -------------------------------------------------------------

struct GenArgs {
  std::string out;
  std::string config;
  std::optional<uint64_t> seed;
  std::optional<int> num_sequences;
  std::optional<int> frames;
};

void RunGenData(const GenArgs& a) {
  CliConfig cfg = LoadConfigOrDefaults(a.config);
  if (a.seed) cfg.ApplySeed(*a.seed);
  if (a.num_sequences) cfg.synth.num_sequences = *a.num_sequences;
  if (a.frames) cfg.synth.frames_per_sequence = *a.frames;
  cfg.synth.Validate();
  Log(LogLevel::kInfo, "generating " + std::to_string(cfg.synth.num_sequences) +
                           " sequences into " + a.out);
  const std::vector<Sequence> seqs = Generate(cfg.synth);
  WriteDataset(a.out, seqs, cfg.synth);
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out;
  std::optional<uint64_t> seed;
  std::optional<int> epochs;
  std::optional<int> pairs_per_epoch;
  std::optional<int> batch_size;
  std::optional<double> lr;
};

void RunTrain(const TrainArgs& a) {
  RequireExists(a.data);
  CliConfig cfg = LoadConfigOrDefaults(a.config);
  if (a.seed) cfg.ApplySeed(*a.seed);
  if (a.epochs) cfg.train.epochs = *a.epochs;
  if (a.pairs_per_epoch) cfg.train.pairs_per_epoch = *a.pairs_per_epoch;
  if (a.batch_size) cfg.train.batch_size = *a.batch_size;
  if (a.lr) cfg.train.lr = *a.lr;
  cfg.model.Validate();
  cfg.train.Validate();

  const std::vector<Sequence> data = LoadDataset(a.data);
  Model model(cfg.model);
  Log(LogLevel::kInfo, "training " + std::to_string(model.ParameterCount()) +
                           " parameters on " + std::to_string(data.size()) + " sequences");
  TrainOutputs outputs;
  outputs.checkpoint_path = a.out;
  outputs.loss_curve_path = a.out + ".loss.csv";
  outputs.diagnostic_path = a.out + ".nonfinite.json";
  outputs.on_step = [](const LossRecord& r) {
    if (g_log_level < LogLevel::kDebug && r.step % 50 != 0) return;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "step %d loss %.5f ce %.5f siou %.5f lr %.3g",
                  r.step, r.loss.total, r.loss.ce, r.loss.siou, r.lr);
    Log(LogLevel::kInfo, buf);
  };
  if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
  const TrainResult result = Train(model, data, cfg.train, outputs);
  Json echo = ToJson(cfg);
  echo["data"] = a.data;
  WriteSidecar(a.out, echo);
  WriteSidecar(outputs.loss_curve_path, echo);
  char buf[96];
  std::snprintf(buf, sizeof(buf), "best held-out IoU %.4f", result.best_eval_iou);
  Log(LogLevel::kInfo, buf);
}

// ---- track ----------------------------------------------------------------

struct TrackArgs {
  std::string ckpt;
  std::string seq;
  std::string out;
  std::string trace;
  std::string overlay;
  std::string config;
  std::optional<double> beta;
  std::optional<int> update_interval;
};

void RunTrack(const TrackArgs& a) {
  RequireExists(a.ckpt);
  RequireExists(a.seq);
  TrackerConfig tracker;
  if (!a.config.empty()) {
    const nlohmann::json j = ReadJsonFile(a.config);
    CliConfig cfg = CliConfigFromJson(j);
    tracker = cfg.tracker;
    if (j.contains("model")) {
      // A model section must describe the checkpoint's architecture.
      Model probe = LoadCheckpoint(a.ckpt);
      if (!SameArchitecture(probe.config(), cfg.model)) {
        throw Error(ErrorKind::kCheckpoint, "checkpoint does not match the configured model");
      }
    }
  }
  if (a.update_interval) tracker.update_interval = *a.update_interval;
  tracker.Validate();

  Model model = LoadCheckpoint(a.ckpt);
  if (a.beta) model.set_beta(*a.beta);
  const Sequence seq = LoadSequence(a.seq);
  if (seq.frames.empty() || seq.groundtruth.empty()) {
    throw Error(ErrorKind::kInput, "sequence '" + a.seq + "' has no frames");
  }
  const SequenceRun run = RunSequence(model, tracker, seq.frames, seq.groundtruth[0]);
  if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
  WriteBoxes(a.out, run.boxes);

  Json echo;
  echo["checkpoint"] = a.ckpt;
  echo["sequence"] = a.seq;
  echo["model"] = ToJson(model.config());
  echo["tracker"] = ToJson(tracker);
  WriteSidecar(a.out, echo);

  if (!a.trace.empty()) {
    std::ofstream t(a.trace);
    if (!t) throw Error(ErrorKind::kIo, "cannot write '" + a.trace + "'");
    for (size_t i = 0; i < run.traces.size(); ++i) {
      WriteTraceLines(t, static_cast<int>(i) + 2, run.traces[i]);
    }
    WriteSidecar(a.trace, echo);
  }
  if (!a.overlay.empty()) {
    fs::create_directories(a.overlay);
    for (size_t i = 0; i < seq.frames.size(); ++i) {
      Image frame = seq.frames[i];
      DrawBox(frame, seq.groundtruth[i], {0.0f, 1.0f, 0.0f});
      DrawBox(frame, run.boxes[i], {1.0f, 0.2f, 0.2f});
      char name[32];
      std::snprintf(name, sizeof(name), "%08zu.png", i + 1);
      WritePng((fs::path(a.overlay) / name).string(), frame);
    }
  }
  char buf[96];
  std::snprintf(buf, sizeof(buf), "tracked %zu frames at %.1f fps", seq.frames.size(),
                run.step_seconds > 0 ? run.traces.size() / run.step_seconds : 0.0);
  Log(LogLevel::kInfo, buf);
}

// ---- eval -----------------------------------------------------------------

struct EvalArgs {
  std::string results;
  std::string data;
  std::string report;
  std::string curves;
};

void RunEval(const EvalArgs& a) {
  RequireExists(a.results);
  RequireExists(a.data);
  std::vector<TrackedSequence> runs;
  for (const std::string& name : ListSequences(a.data)) {
    const fs::path result = fs::path(a.results) / (name + ".txt");
    if (!fs::exists(result)) {
      throw Error(ErrorKind::kInput, "missing result file '" + result.string() + "'");
    }
    TrackedSequence run;
    run.name = name;
    run.results = ReadBoxes(result.string());
    run.groundtruth = ReadBoxes((fs::path(a.data) / name / "groundtruth.txt").string());
    const fs::path trace = fs::path(a.results) / (name + ".trace.csv");
    if (fs::exists(trace)) {
      std::ifstream in(trace);
      for (FrameTrace& ft : ReadTraceLines(in)) run.traces.push_back(std::move(ft.trace));
    }
    runs.push_back(std::move(run));
  }
  Json config;
  config["results"] = a.results;
  config["data"] = a.data;
  const MetricsReport report = Evaluate(runs, config);
  WriteJson(a.report, ToJson(report));
  if (!a.curves.empty()) {
    WriteCurvesCsv(a.curves, runs);
    WriteSidecar(a.curves, config);
  }
  char buf[128];
  std::snprintf(buf, sizeof(buf), "P %.2f  P_norm %.2f  AUC %.2f", report.overall.precision,
                report.overall.norm_precision, report.overall.auc);
  Log(LogLevel::kInfo, buf);
}

// ---- bench ----------------------------------------------------------------

struct BenchArgs {
  std::string ckpt;
  std::string data;
  std::string report;
  std::string beta_sweep;
  std::string ablations = "none";
  std::string config;
};

void RunBench(const BenchArgs& a) {
  RequireExists(a.ckpt);
  RequireExists(a.data);
  TrackerConfig tracker;
  if (!a.config.empty()) tracker = LoadCliConfig(a.config).tracker;
  tracker.Validate();
  Model model = LoadCheckpoint(a.ckpt);
  std::vector<double> betas = a.beta_sweep.empty()
                                  ? std::vector<double>{model.config().encoder.beta}
                                  : ParseBetaSweep(a.beta_sweep);
  bool dfb = false, dfa = false;
  std::stringstream ss(a.ablations);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "dfb") dfb = true;
    else if (item == "dfa") dfa = true;
    else if (item != "none" && !item.empty()) {
      throw Error(ErrorKind::kConfig, "unknown ablation '" + item + "' (use dfb, dfa or none)");
    }
  }
  const std::vector<Sequence> data = LoadDataset(a.data);
  const auto reports = RunBenchmark(model, data, tracker, BenchVariants(betas, dfb, dfa));
  Json out = Json::array();
  for (const MetricsReport& r : reports) {
    Json j = ToJson(r);
    j["config"]["checkpoint"] = a.ckpt;
    j["config"]["data"] = a.data;
    out.push_back(std::move(j));
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "beta %.3f dfb_off %d dfa_off %d: AUC %.2f layers %.3f fps %.1f",
                  r.config["beta"].get<double>(), r.config["ablate_dfb"].get<bool>(),
                  r.config["ablate_dfa"].get<bool>(), r.overall.auc,
                  r.overall.mean_layers.value_or(0.0), r.overall.fps.value_or(0.0));
    Log(LogLevel::kInfo, buf);
  }
  WriteJson(a.report, out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"darter: nighttime tracking toolkit"};
  app.require_subcommand(1);
  app.allow_extras(false);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic low-light dataset");
  gen_cmd->add_option("--out", gen.out, "Output dataset directory")->required();
  gen_cmd->add_option("--config", gen.config, "JSON config file (synth section used)");
  gen_cmd->add_option("--seed", gen.seed, "Root seed; overrides the config file");
  gen_cmd->add_option("--num-sequences", gen.num_sequences, "Number of sequences");
  gen_cmd->add_option("--frames", gen.frames, "Frames per sequence");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train a model on a dataset");
  train_cmd->add_option("--config", train.config, "JSON config file (model and train sections)");
  train_cmd->add_option("--data", train.data, "Dataset directory")->required();
  train_cmd->add_option("--out", train.out, "Checkpoint path")->required();
  train_cmd->add_option("--seed", train.seed, "Root seed; overrides the config file");
  train_cmd->add_option("--epochs", train.epochs, "Training epochs");
  train_cmd->add_option("--pairs-per-epoch", train.pairs_per_epoch, "Pairs per epoch");
  train_cmd->add_option("--batch-size", train.batch_size, "Batch size");
  train_cmd->add_option("--lr", train.lr, "Base learning rate");

  TrackArgs track;
  auto* track_cmd = app.add_subcommand("track", "Track one sequence");
  track_cmd->add_option("--ckpt", track.ckpt, "Checkpoint path")->required();
  track_cmd->add_option("--seq", track.seq, "Sequence directory")->required();
  track_cmd->add_option("--out", track.out, "Result file, one x,y,w,h per frame")->required();
  track_cmd->add_option("--trace", track.trace, "Layer activation trace file");
  track_cmd->add_option("--overlay", track.overlay, "Directory for annotated frames");
  track_cmd->add_option("--config", track.config, "JSON config file (tracker section used)");
  track_cmd->add_option("--beta", track.beta, "Activation threshold override");
  track_cmd->add_option("--update-interval", track.update_interval,
                        "Frames between dynamic template updates");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Score result files against ground truth");
  eval_cmd->add_option("--results", eval.results, "Directory of <seq>.txt result files")
      ->required();
  eval_cmd->add_option("--data", eval.data, "Dataset directory")->required();
  eval_cmd->add_option("--report", eval.report, "Report JSON path")->required();
  eval_cmd->add_option("--curves", eval.curves, "Optional success/precision curve CSV");

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "Track and score every sequence per variant");
  bench_cmd->add_option("--ckpt", bench.ckpt, "Checkpoint path")->required();
  bench_cmd->add_option("--data", bench.data, "Dataset directory")->required();
  bench_cmd->add_option("--report", bench.report, "Report JSON path")->required();
  bench_cmd->add_option("--beta-sweep", bench.beta_sweep, "A:B:STEP, or a single value");
  bench_cmd->add_option("--ablations", bench.ablations,
                        "Comma list of modules to also run disabled: dfb, dfa, none");
  bench_cmd->add_option("--config", bench.config, "JSON config file (tracker section used)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::fprintf(stderr, "error: class=usage code=2 message=%s\n", OneLine(e.what()).c_str());
    return 2;
  }

  try {
    InitLogLevel();
    if (*gen_cmd) RunGenData(gen);
    if (*train_cmd) RunTrain(train);
    if (*track_cmd) RunTrack(track);
    if (*eval_cmd) RunEval(eval);
    if (*bench_cmd) RunBench(bench);
  } catch (const Error& e) {
    const int code = ExitCodeFor(e.kind());
    std::fprintf(stderr, "error: class=%s code=%d message=%s\n",
                 std::string(ErrorKindName(e.kind())).c_str(), code, OneLine(e.what()).c_str());
    return code;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: class=internal code=3 message=%s\n", OneLine(e.what()).c_str());
    return 3;
  }
  return 0;
}
