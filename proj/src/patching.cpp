// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DARTer Authors.

#include "darter/patching.hpp"

#include <string>

#include "darter/errors.hpp"

namespace darter {

PatchGrid PatchGrid::Make(int image_side, int patch_side) {
  if (patch_side <= 0 || patch_side % 2 != 0) {
    throw Error(ErrorKind::kShape, "patch side must be positive and even");
  }
  if (image_side % patch_side != 0 || image_side / patch_side < 2) {
    throw Error(ErrorKind::kShape,
                "image side " + std::to_string(image_side) +
                    " is not a multiple (>= 2x) of patch side " +
                    std::to_string(patch_side));
  }
  return PatchGrid{image_side, patch_side};
}

ad::Matrix SlicePatches(const Image& image, const PatchGrid& grid,
                        PatchKind kind) {
  if (image.width() != grid.image_side || image.height() != grid.image_side) {
    throw Error(ErrorKind::kShape,
                "image is " + std::to_string(image.width()) + "x" +
                    std::to_string(image.height()) + ", grid expects " +
                    std::to_string(grid.image_side));
  }
  const int p = grid.patch_side;
  const int g = kind == PatchKind::kInitial ? grid.initial_grid()
                                            : grid.o_grid();
  const int offset = kind == PatchKind::kInitial ? 0 : grid.o_offset();
  ad::Matrix patches(g * g, grid.patch_dim());
  for (int gy = 0; gy < g; ++gy) {
    for (int gx = 0; gx < g; ++gx) {
      const int row = gy * g + gx;
      int col = 0;
      for (int y = 0; y < p; ++y) {
        for (int x = 0; x < p; ++x) {
          for (int c = 0; c < Image::kChannels; ++c) {
            patches(row, col++) =
                image.at(offset + gx * p + x, offset + gy * p + y, c);
          }
        }
      }
    }
  }
  return patches;
}

Image Normalize(const Image& image, const Normalization& norm) {
  Image out = image;
  auto& data = out.data();
  for (size_t i = 0; i < data.size(); ++i) {
    const size_t c = i % Image::kChannels;
    data[i] = static_cast<float>((data[i] - norm.mean[c]) / norm.stddev[c]);
  }
  return out;
}

std::string_view StreamName(Stream stream) {
  switch (stream) {
    case Stream::kSearchInitial:
      return "search_initial";
    case Stream::kSearchOverlapped:
      return "search_o";
    case Stream::kStaticInitial:
      return "static_initial";
    case Stream::kDynamicInitial:
      return "dynamic_initial";
    case Stream::kStaticOverlapped:
      return "static_o";
    case Stream::kDynamicOverlapped:
      return "dynamic_o";
  }
  return "unknown";
}

std::string_view SegmentName(Segment segment) {
  switch (segment) {
    case Segment::kSearchInitial:
      return "search_initial";
    case Segment::kSearchOverlapped:
      return "search_o";
    case Segment::kTemplateFused:
      return "template_fused";
    case Segment::kTemplateOverlappedFused:
      return "template_o_fused";
  }
  return "unknown";
}

TokenLayout TokenLayout::Make(const PatchGrid& search, const PatchGrid& templ) {
  const int xs = search.initial_grid() * search.initial_grid();
  const int xo = search.o_grid() * search.o_grid();
  const int zs = 2 * templ.initial_grid() * templ.initial_grid();
  const int zo = 2 * templ.o_grid() * templ.o_grid();
  TokenLayout layout;
  layout.spans[0] = {Segment::kSearchInitial, 0, xs};
  layout.spans[1] = {Segment::kSearchOverlapped, xs, xo};
  layout.spans[2] = {Segment::kTemplateFused, xs + xo, zs};
  layout.spans[3] = {Segment::kTemplateOverlappedFused, xs + xo + zs, zo};
  return layout;
}

PatchEmbedding::PatchEmbedding(const PatchGrid& search, const PatchGrid& templ,
                               int width, Rng& rng)
    : projection("embed.projection", search.patch_dim(), width, rng) {
  if (search.patch_side != templ.patch_side) {
    throw Error(ErrorKind::kShape,
                "search and template must share the patch side");
  }
  const int counts[kNumStreams] = {
      search.initial_grid() * search.initial_grid(),
      search.o_grid() * search.o_grid(),
      templ.initial_grid() * templ.initial_grid(),
      templ.initial_grid() * templ.initial_grid(),
      templ.o_grid() * templ.o_grid(),
      templ.o_grid() * templ.o_grid(),
  };
  for (int s = 0; s < kNumStreams; ++s) {
    positional[s] = ad::Parameter(
        "embed.pos." + std::string(StreamName(static_cast<Stream>(s))),
        nn::NormalMatrix(rng, counts[s], width, 0.02));
  }
}

void PatchEmbedding::Visit(const nn::ParameterVisitor& fn) {
  projection.Visit(fn);
  for (auto& p : positional) fn(p);
}

ad::Var Embed(ad::Tape& tape, ad::Var patches, PatchEmbedding& embedding,
              Stream stream) {
  ad::Parameter& pos = embedding.positional[static_cast<int>(stream)];
  if (patches.cols() != embedding.projection.weight.value.rows()) {
    throw Error(ErrorKind::kShape, "patch width does not match projection");
  }
  if (patches.rows() != pos.value.rows()) {
    throw Error(ErrorKind::kShape,
                "patch count " + std::to_string(patches.rows()) +
                    " does not match positional table of " +
                    std::string(StreamName(stream)));
  }
  return ad::Add(embedding.projection(tape, patches), tape.Param(pos));
}

}  // namespace darter

namespace darter {

ad::Matrix ImageToMatrix(const Image& image) {
  ad::Matrix m(image.height(), image.width() * Image::kChannels);
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      for (int c = 0; c < Image::kChannels; ++c) {
        m(y, x * Image::kChannels + c) = image.at(x, y, c);
      }
    }
  }
  return m;
}

ad::Var GatherPatches(ad::Var image, const PatchGrid& grid, PatchKind kind) {
  constexpr int kC = Image::kChannels;
  if (image.rows() != grid.image_side ||
      image.cols() != grid.image_side * kC) {
    throw Error(ErrorKind::kShape, "image matrix does not match patch grid");
  }
  const int p = grid.patch_side;
  const int g = kind == PatchKind::kInitial ? grid.initial_grid()
                                            : grid.o_grid();
  const int offset = kind == PatchKind::kInitial ? 0 : grid.o_offset();
  const int row_len = p * kC;
  const ad::Matrix& img = image.value();
  ad::Matrix patches(g * g, grid.patch_dim());
  for (int gy = 0; gy < g; ++gy) {
    for (int gx = 0; gx < g; ++gx) {
      for (int y = 0; y < p; ++y) {
        patches.block(gy * g + gx, y * row_len, 1, row_len) =
            img.block(offset + gy * p + y, (offset + gx * p) * kC, 1, row_len);
      }
    }
  }
  return image.tape()->Record(
      std::move(patches), {image},
      [image, g, p, offset, row_len](ad::Tape& t, const ad::Matrix& grad) {
        ad::Matrix dimg =
            ad::Matrix::Zero(t.Value(image).rows(), t.Value(image).cols());
        for (int gy = 0; gy < g; ++gy) {
          for (int gx = 0; gx < g; ++gx) {
            for (int y = 0; y < p; ++y) {
              dimg.block(offset + gy * p + y, (offset + gx * p) * kC, 1,
                         row_len) +=
                  grad.block(gy * g + gx, y * row_len, 1, row_len);
            }
          }
        }
        t.Accumulate(image, dimg);
      });
}

}  // namespace darter
