// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DARTer Authors.

#include "darter/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <numbers>
#include <sstream>
#include <thread>

#include "darter/config.hpp"
#include "darter/errors.hpp"
#include "darter/rng.hpp"

namespace fs = std::filesystem;

namespace darter {

void SynthConfig::Validate() const {
  if (num_sequences < 1) throw Error(ErrorKind::kConfig, "num_sequences must be >= 1");
  if (frames_per_sequence < 1) {
    throw Error(ErrorKind::kConfig, "frames_per_sequence must be >= 1");
  }
  if (object_size_min < 4 || object_size_max < object_size_min) {
    throw Error(ErrorKind::kConfig, "object size range must satisfy 4 <= min <= max");
  }
  if (frame_size < 3 * object_size_max) {
    throw Error(ErrorKind::kConfig, "frame_size must be at least 3x object_size_max");
  }
  if (!(background_mean >= 0.0 && background_mean < 1.0) ||
      !(noise_stddev >= 0.0) || !(motion_step >= 0.0) ||
      !(illumination_flicker >= 0.0 && illumination_flicker < 1.0) ||
      num_distractors < 0) {
    throw Error(ErrorKind::kConfig, "synthetic config value out of range");
  }
}

uint64_t ConfigHash(const SynthConfig& config) {
  const std::string text = ToJson(config).dump();
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

struct Appearance {
  std::array<double, 3> bright;
  std::array<double, 3> dark;
  int cells;
};

Appearance RandomAppearance(Rng& rng) {
  Appearance a;
  for (int c = 0; c < 3; ++c) {
    a.bright[c] = rng.Uniform(0.45, 0.75);
    a.dark[c] = a.bright[c] * rng.Uniform(0.35, 0.6);
  }
  a.cells = 2 + static_cast<int>(rng.UniformInt(3));
  return a;
}

// Bounded random walk of a box center with a smooth periodic scale change.
struct Mover {
  double cx, cy, vx = 0.0, vy = 0.0;
  double base_w, base_h;
  double scale_period, scale_phase, scale_amp;

  BBox BoxAt(int t) const {
    const double s = std::exp(
        scale_amp * std::sin(2.0 * std::numbers::pi * t / scale_period +
                             scale_phase));
    return BBox::FromCenter(cx, cy, base_w * s, base_h * s);
  }

  void Step(Rng& rng, double max_step, int frame_size, double half_extent) {
    vx = std::clamp(vx + rng.Normal() * 0.35 * max_step, -max_step, max_step);
    vy = std::clamp(vy + rng.Normal() * 0.35 * max_step, -max_step, max_step);
    cx += vx;
    cy += vy;
    const double lo = half_extent + 1.0;
    const double hi = frame_size - half_extent - 1.0;
    if (cx < lo) { cx = 2 * lo - cx; vx = std::abs(vx); }
    if (cx > hi) { cx = 2 * hi - cx; vx = -std::abs(vx); }
    if (cy < lo) { cy = 2 * lo - cy; vy = std::abs(vy); }
    if (cy > hi) { cy = 2 * hi - cy; vy = -std::abs(vy); }
    cx = std::clamp(cx, lo, hi);
    cy = std::clamp(cy, lo, hi);
  }
};

Mover RandomMover(Rng& rng, const SynthConfig& config, double size_scale) {
  Mover m;
  m.base_w = rng.Uniform(config.object_size_min, config.object_size_max) *
             size_scale;
  m.base_h = rng.Uniform(config.object_size_min, config.object_size_max) *
             size_scale;
  m.scale_period = rng.Uniform(60.0, 120.0);
  m.scale_phase = rng.Uniform(0.0, 2.0 * std::numbers::pi);
  m.scale_amp = 0.15;
  const double half = 0.5 * std::max(m.base_w, m.base_h) * std::exp(m.scale_amp);
  m.cx = rng.Uniform(half + 1.0, config.frame_size - half - 1.0);
  m.cy = rng.Uniform(half + 1.0, config.frame_size - half - 1.0);
  return m;
}

double MaxHalfExtent(const Mover& m) {
  return 0.5 * std::max(m.base_w, m.base_h) * std::exp(m.scale_amp);
}

void Paint(Image& frame, const BBox& box, const Appearance& look) {
  const int x0 = std::max(0, static_cast<int>(std::floor(box.x)));
  const int y0 = std::max(0, static_cast<int>(std::floor(box.y)));
  const int x1 = std::min(frame.width(), static_cast<int>(std::ceil(box.right())));
  const int y1 = std::min(frame.height(), static_cast<int>(std::ceil(box.bottom())));
  for (int y = y0; y < y1; ++y) {
    const double py = y + 0.5;
    if (py < box.y || py >= box.bottom()) continue;
    const double v = (py - box.y) / box.h;
    for (int x = x0; x < x1; ++x) {
      const double px = x + 0.5;
      if (px < box.x || px >= box.right()) continue;
      const double u = (px - box.x) / box.w;
      const int cell = static_cast<int>(u * look.cells) +
                       static_cast<int>(v * look.cells);
      const auto& color = cell % 2 == 0 ? look.bright : look.dark;
      for (int c = 0; c < 3; ++c) frame.at(x, y, c) = static_cast<float>(color[c]);
    }
  }
}

}  // namespace

Sequence GenerateSequence(const SynthConfig& config, int index) {
  config.Validate();
  Rng rng = Rng(config.seed).Fork(static_cast<uint64_t>(index));
  Sequence seq;
  char name[32];
  std::snprintf(name, sizeof(name), "seq%03d", index + 1);
  seq.name = name;
  seq.seed = rng.seed();

  const int size = config.frame_size;
  // Static low-frequency background texture with mean background_mean.
  const double fx = rng.Uniform(0.05, 0.2), fy = rng.Uniform(0.05, 0.2);
  const double phx = rng.Uniform(0.0, 6.3), phy = rng.Uniform(0.0, 6.3);
  std::vector<float> background(static_cast<size_t>(size) * size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      background[static_cast<size_t>(y) * size + x] = static_cast<float>(
          config.background_mean *
          (1.0 + 0.3 * std::sin(fx * x + phx) * std::sin(fy * y + phy)));
    }
  }
  const Appearance target_look = RandomAppearance(rng);
  Mover target = RandomMover(rng, config, 1.0);
  std::vector<Appearance> distractor_looks;
  std::vector<Mover> distractors;
  for (int i = 0; i < config.num_distractors; ++i) {
    Appearance look = target_look;
    const double dim = rng.Uniform(0.75, 0.95);
    for (int c = 0; c < 3; ++c) {
      look.bright[c] *= dim;
      look.dark[c] *= dim;
    }
    distractor_looks.push_back(look);
    distractors.push_back(RandomMover(rng, config, 0.8));
  }
  const double flicker_period = rng.Uniform(20.0, 50.0);
  const double flicker_phase = rng.Uniform(0.0, 2.0 * std::numbers::pi);

  for (int t = 0; t < config.frames_per_sequence; ++t) {
    if (t > 0) {
      target.Step(rng, config.motion_step, size, MaxHalfExtent(target));
      for (Mover& d : distractors) {
        d.Step(rng, config.motion_step, size, MaxHalfExtent(d));
      }
    }
    Image frame(size, size);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        for (int c = 0; c < 3; ++c) {
          frame.at(x, y, c) = background[static_cast<size_t>(y) * size + x];
        }
      }
    }
    for (size_t i = 0; i < distractors.size(); ++i) {
      Paint(frame, distractors[i].BoxAt(t), distractor_looks[i]);
    }
    // Two-decimal boxes survive the groundtruth.txt round trip unchanged.
    BBox box = ClampBox(target.BoxAt(t), size, size);
    box = {std::round(box.x * 100.0) / 100.0, std::round(box.y * 100.0) / 100.0,
           std::round(box.w * 100.0) / 100.0, std::round(box.h * 100.0) / 100.0};
    Paint(frame, box, target_look);

    const double gain =
        1.0 + config.illumination_flicker *
                  std::sin(2.0 * std::numbers::pi * t / flicker_period +
                           flicker_phase);
    for (float& v : frame.data()) {
      v = static_cast<float>(v * gain + rng.Normal() * config.noise_stddev);
    }
    QuantizeTo8Bit(frame);
    seq.frames.push_back(std::move(frame));
    seq.groundtruth.push_back(box);
  }
  return seq;
}

std::vector<Sequence> Generate(const SynthConfig& config) {
  config.Validate();
  const int n = config.num_sequences;
  const int workers = std::max(1u, std::thread::hardware_concurrency());
  std::vector<Sequence> out(n);
  for (int start = 0; start < n; start += workers) {
    std::vector<std::future<Sequence>> jobs;
    for (int i = start; i < std::min(n, start + workers); ++i) {
      jobs.push_back(std::async(std::launch::async, GenerateSequence,
                                std::cref(config), i));
    }
    for (int i = start; i < std::min(n, start + workers); ++i) {
      out[i] = jobs[i - start].get();
    }
  }
  return out;
}

void WriteBoxes(const std::string& path, const std::vector<BBox>& boxes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write '" + path + "'");
  for (const BBox& b : boxes) out << FormatBox(b) << '\n';
  if (!out) throw Error(ErrorKind::kIo, "failed writing '" + path + "'");
}

std::vector<BBox> ReadBoxes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open '" + path + "'");
  std::vector<BBox> boxes;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    try {
      boxes.push_back(ParseBox(line));
    } catch (const Error& e) {
      throw Error(ErrorKind::kParse,
                  path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return boxes;
}

void WriteSequence(const std::string& dir, const Sequence& seq,
                   const SynthConfig& config) {
  const fs::path root(dir);
  fs::create_directories(root / "img");
  for (size_t i = 0; i < seq.frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "%08zu.png", i + 1);
    WritePng((root / "img" / name).string(), seq.frames[i]);
  }
  WriteBoxes((root / "groundtruth.txt").string(), seq.groundtruth);
  nlohmann::ordered_json meta;
  meta["name"] = seq.name;
  meta["seed"] = seq.seed;
  meta["config_hash"] = ConfigHash(config);
  std::ofstream out(root / "meta.json");
  out << meta.dump(2) << '\n';
}

void WriteDataset(const std::string& root, const std::vector<Sequence>& seqs,
                  const SynthConfig& config) {
  fs::create_directories(root);
  nlohmann::ordered_json manifest;
  manifest["config"] = ToJson(config);
  manifest["sequences"] = nlohmann::json::array();
  for (const Sequence& s : seqs) {
    WriteSequence((fs::path(root) / s.name).string(), s, config);
    manifest["sequences"].push_back(s.name);
  }
  std::ofstream out(fs::path(root) / "manifest.json");
  if (!out) throw Error(ErrorKind::kIo, "cannot write manifest in '" + root + "'");
  out << manifest.dump(2) << '\n';
}

Sequence LoadSequence(const std::string& dir) {
  const fs::path root(dir);
  const fs::path gt_path = root / "groundtruth.txt";
  if (!fs::exists(gt_path)) {
    throw Error(ErrorKind::kIo, "missing '" + gt_path.string() + "'");
  }
  Sequence seq;
  seq.name = root.filename().string();
  if (seq.name.empty()) seq.name = root.parent_path().filename().string();
  seq.groundtruth = ReadBoxes(gt_path.string());
  std::vector<fs::path> images;
  const fs::path img_dir = root / "img";
  if (fs::is_directory(img_dir)) {
    for (const auto& entry : fs::directory_iterator(img_dir)) {
      if (entry.path().extension() == ".png") images.push_back(entry.path());
    }
  }
  std::sort(images.begin(), images.end());
  if (images.size() != seq.groundtruth.size()) {
    throw Error(ErrorKind::kInput,
                "sequence '" + dir + "' has " + std::to_string(images.size()) +
                    " frames but " + std::to_string(seq.groundtruth.size()) +
                    " groundtruth lines");
  }
  for (const fs::path& p : images) seq.frames.push_back(ReadPng(p.string()));
  const fs::path meta_path = root / "meta.json";
  if (fs::exists(meta_path)) {
    std::ifstream in(meta_path);
    try {
      const auto meta = nlohmann::json::parse(in);
      seq.seed = meta.value("seed", uint64_t{0});
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::kParse, meta_path.string() + ": " + e.what());
    }
  }
  return seq;
}

std::vector<std::string> ListSequences(const std::string& root) {
  const fs::path manifest = fs::path(root) / "manifest.json";
  std::vector<std::string> names;
  if (fs::exists(manifest)) {
    std::ifstream in(manifest);
    try {
      const auto j = nlohmann::json::parse(in);
      for (const auto& n : j.at("sequences")) names.push_back(n.get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::kParse, manifest.string() + ": " + e.what());
    }
    return names;
  }
  if (!fs::is_directory(root)) {
    throw Error(ErrorKind::kIo, "dataset directory '" + root + "' not found");
  }
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / "groundtruth.txt")) {
      names.push_back(entry.path().filename().string());
    }
  }
  std::sort(names.begin(), names.end());
  return names;
}

std::vector<Sequence> LoadDataset(const std::string& root) {
  std::vector<Sequence> seqs;
  for (const std::string& name : ListSequences(root)) {
    seqs.push_back(LoadSequence((fs::path(root) / name).string()));
  }
  return seqs;
}

}  // namespace darter
