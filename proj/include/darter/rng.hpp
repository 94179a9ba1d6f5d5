// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DARTer Authors.

#pragma once

#include <cstdint>
#include <random>

namespace darter {

// SplitMix64 finalizer; used to derive independent sub-seeds.
uint64_t SplitMix64(uint64_t x);

// Deterministic random stream: std::mt19937_64 bits with distribution
// transforms written out here, so sequences do not depend on the standard
// library's distribution implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), engine_(SplitMix64(seed)) {}

  // Independent child stream; same (seed, stream) always yields the same
  // child regardless of how much the parent has been consumed.
  Rng Fork(uint64_t stream) const {
    return Rng(SplitMix64(seed_ ^ SplitMix64(stream + 0x632be59bd9b4e019ULL)));
  }

  uint64_t NextU64() { return engine_(); }
  // Uniform in [0, 1) with 53 bits.
  double Uniform();
  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }
  // Uniform integer in [0, n).
  uint64_t UniformInt(uint64_t n);
  // Standard normal via Box-Muller.
  double Normal();
  bool Bernoulli(double p) { return Uniform() < p; }

  uint64_t seed() const { return seed_; }

 private:
  uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace darter
