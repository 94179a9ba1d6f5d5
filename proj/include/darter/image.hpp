// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DARTer Authors.

#pragma once

#include <array>
#include <string>
#include <vector>

#include "darter/geometry.hpp"

namespace darter {

// Interleaved RGB image (row-major, HxWx3) with intensities in [0, 1].
class Image {
 public:
  static constexpr int kChannels = 3;

  Image() = default;
  Image(int width, int height, float fill = 0.0f)
      : width_(width),
        height_(height),
        data_(static_cast<size_t>(width) * height * kChannels, fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return data_.empty(); }

  float& at(int x, int y, int c) {
    return data_[(static_cast<size_t>(y) * width_ + x) * kChannels + c];
  }
  float at(int x, int y, int c) const {
    return data_[(static_cast<size_t>(y) * width_ + x) * kChannels + c];
  }

  const std::vector<float>& data() const { return data_; }
  std::vector<float>& data() { return data_; }

  std::array<double, kChannels> ChannelMean() const;

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<float> data_;
};

// Bilinear resampling of the crop window; samples falling outside the frame
// take the frame's per-channel mean intensity.
Image ExtractCrop(const Image& frame, const CropSpec& crop);

Image FlipHorizontal(const Image& image);

// Rounds every value to the nearest multiple of 1/255.
void QuantizeTo8Bit(Image& image);

// 8-bit RGB PNG. Reading a grayscale or RGBA file converts it to RGB.
Image ReadPng(const std::string& path);
void WritePng(const std::string& path, const Image& image);

// One-pixel rectangle outline, clipped to the image.
void DrawBox(Image& image, const BBox& box, std::array<float, 3> color);

}  // namespace darter
