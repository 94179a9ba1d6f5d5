// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DARTer Authors.

#pragma once

#include <array>
#include <string>
#include <string_view>

#include "darter/autodiff.hpp"
#include "darter/image.hpp"
#include "darter/nn.hpp"

namespace darter {

// Square image cut into a G x G grid of initial patches plus a (G-1) x (G-1)
// grid of overlapped patches of the same side, offset by half a patch.
struct PatchGrid {
  int image_side = 0;
  int patch_side = 0;

  // Throws Error(kShape) unless patch_side is even and divides image_side
  // into at least two patches per row.
  static PatchGrid Make(int image_side, int patch_side);

  int initial_grid() const { return image_side / patch_side; }
  int o_grid() const { return initial_grid() - 1; }
  int o_offset() const { return patch_side / 2; }
  int patch_dim() const {
    return patch_side * patch_side * Image::kChannels;
  }
};

enum class PatchKind { kInitial, kOverlapped };

// Rows are flattened patches in (y, x, channel) order; patches are listed
// row-major over the grid.
ad::Matrix SlicePatches(const Image& image, const PatchGrid& grid,
                        PatchKind kind);

// Per-channel constants used to standardize pixel intensities.
struct Normalization {
  std::array<double, 3> mean{0.1, 0.1, 0.1};
  std::array<double, 3> stddev{0.12, 0.12, 0.12};
};

Image Normalize(const Image& image, const Normalization& norm);

// Token streams that carry their own positional table.
enum class Stream {
  kSearchInitial = 0,
  kSearchOverlapped,
  kStaticInitial,
  kDynamicInitial,
  kStaticOverlapped,
  kDynamicOverlapped,
};
inline constexpr int kNumStreams = 6;
std::string_view StreamName(Stream stream);

// Segments of the joint token sequence, in their fixed order.
enum class Segment {
  kSearchInitial = 0,
  kSearchOverlapped,
  kTemplateFused,
  kTemplateOverlappedFused,
};
std::string_view SegmentName(Segment segment);

struct SegmentSpan {
  Segment segment;
  int offset;
  int length;
};

struct TokenLayout {
  std::array<SegmentSpan, 4> spans{};

  static TokenLayout Make(const PatchGrid& search, const PatchGrid& templ);
  int total() const { return spans[3].offset + spans[3].length; }
  const SegmentSpan& span(Segment s) const {
    return spans[static_cast<int>(s)];
  }
  friend bool operator==(const TokenLayout& a, const TokenLayout& b) {
    for (int i = 0; i < 4; ++i) {
      if (a.spans[i].segment != b.spans[i].segment ||
          a.spans[i].offset != b.spans[i].offset ||
          a.spans[i].length != b.spans[i].length) {
        return false;
      }
    }
    return true;
  }
};

// Tokens (k x d) with their segment layout.
struct TokenSet {
  ad::Matrix tokens;
  TokenLayout layout;

  int width() const { return static_cast<int>(tokens.cols()); }
  ad::Matrix SegmentTokens(Segment s) const {
    const SegmentSpan& sp = layout.span(s);
    return tokens.middleRows(sp.offset, sp.length);
  }
};

// Shared linear patch projection plus one learned positional table per
// stream.
struct PatchEmbedding {
  nn::Linear projection;
  std::array<ad::Parameter, kNumStreams> positional;

  PatchEmbedding() = default;
  PatchEmbedding(const PatchGrid& search, const PatchGrid& templ, int width,
                 Rng& rng);

  void Visit(const nn::ParameterVisitor& fn);
};

// patches (n x patch_dim) -> tokens (n x d) with the stream's positional
// embedding added.
ad::Var Embed(ad::Tape& tape, ad::Var patches, PatchEmbedding& embedding,
              Stream stream);

}  // namespace darter

namespace darter {

// Image as an H x (W * 3) matrix, row y holding (x, channel) pairs.
ad::Matrix ImageToMatrix(const Image& image);

// Tape op equivalent of SlicePatches on an image matrix; gradients scatter
// back to the pixels.
ad::Var GatherPatches(ad::Var image, const PatchGrid& grid, PatchKind kind);

}  // namespace darter
