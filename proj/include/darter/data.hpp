// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DARTer Authors.

#pragma once

// Deterministic synthetic low-light sequences and the on-disk dataset
// layout:
//
//   <root>/manifest.json              {"config": {...}, "sequences": [...]}
//   <root>/<name>/img/00000001.png    one PNG per frame
//   <root>/<name>/groundtruth.txt     one "x,y,w,h" line per frame
//   <root>/<name>/meta.json           {"seed": ..., "config_hash": ...}

#include <cstdint>
#include <string>
#include <vector>

#include "darter/geometry.hpp"
#include "darter/image.hpp"

namespace darter {

struct SynthConfig {
  uint64_t seed = 7;
  int num_sequences = 10;
  int frames_per_sequence = 100;
  int frame_size = 128;
  double background_mean = 20.0 / 255.0;
  double noise_stddev = 4.0 / 255.0;
  int object_size_min = 14;
  int object_size_max = 22;
  double motion_step = 1.5;
  double illumination_flicker = 0.15;
  int num_distractors = 1;

  void Validate() const;
};

struct Sequence {
  std::string name;
  std::vector<Image> frames;
  std::vector<BBox> groundtruth;
  uint64_t seed = 0;
};

// FNV-1a over the canonical JSON form of the config.
uint64_t ConfigHash(const SynthConfig& config);

// Sequences are generated concurrently from independent per-sequence
// streams; the output does not depend on scheduling.
std::vector<Sequence> Generate(const SynthConfig& config);
Sequence GenerateSequence(const SynthConfig& config, int index);

void WriteDataset(const std::string& root, const std::vector<Sequence>& seqs,
                  const SynthConfig& config);
void WriteSequence(const std::string& dir, const Sequence& seq,
                   const SynthConfig& config);

Sequence LoadSequence(const std::string& dir);
// Names listed in <root>/manifest.json, or every subdirectory holding a
// groundtruth.txt when there is no manifest.
std::vector<std::string> ListSequences(const std::string& root);
std::vector<Sequence> LoadDataset(const std::string& root);

void WriteBoxes(const std::string& path, const std::vector<BBox>& boxes);
std::vector<BBox> ReadBoxes(const std::string& path);

}  // namespace darter
