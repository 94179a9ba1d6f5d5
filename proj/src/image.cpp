// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DARTer Authors.

#include "darter/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>

#include "darter/errors.hpp"

namespace darter {

std::array<double, Image::kChannels> Image::ChannelMean() const {
  std::array<double, kChannels> sum{};
  if (data_.empty()) return sum;
  for (size_t i = 0; i < data_.size(); ++i) sum[i % kChannels] += data_[i];
  const double n = static_cast<double>(width_) * height_;
  for (double& s : sum) s /= n;
  return sum;
}

Image ExtractCrop(const Image& frame, const CropSpec& crop) {
  if (frame.empty()) throw Error(ErrorKind::kShape, "empty frame");
  const auto mean = frame.ChannelMean();
  const int out = crop.out_size;
  Image result(out, out);
  const double inv_scale = crop.side / out;
  const double left = crop.left();
  const double top = crop.top();

  auto sample = [&](int x, int y, int c) -> double {
    if (x < 0 || y < 0 || x >= frame.width() || y >= frame.height()) {
      return mean[c];
    }
    return frame.at(x, y, c);
  };

  for (int v = 0; v < out; ++v) {
    // Pixel centers: crop pixel v covers [v, v + 1).
    const double fy = (v + 0.5) * inv_scale + top - 0.5;
    const int y0 = static_cast<int>(std::floor(fy));
    const double ty = fy - y0;
    for (int u = 0; u < out; ++u) {
      const double fx = (u + 0.5) * inv_scale + left - 0.5;
      const int x0 = static_cast<int>(std::floor(fx));
      const double tx = fx - x0;
      for (int c = 0; c < Image::kChannels; ++c) {
        double value = (1 - tx) * (1 - ty) * sample(x0, y0, c);
        if (tx > 0) value += tx * (1 - ty) * sample(x0 + 1, y0, c);
        if (ty > 0) value += (1 - tx) * ty * sample(x0, y0 + 1, c);
        if (tx > 0 && ty > 0) value += tx * ty * sample(x0 + 1, y0 + 1, c);
        result.at(u, v, c) = static_cast<float>(value);
      }
    }
  }
  return result;
}

Image FlipHorizontal(const Image& image) {
  Image flipped(image.width(), image.height());
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      for (int c = 0; c < Image::kChannels; ++c) {
        flipped.at(image.width() - 1 - x, y, c) = image.at(x, y, c);
      }
    }
  }
  return flipped;
}

void QuantizeTo8Bit(Image& image) {
  for (float& v : image.data()) {
    const float clamped = std::clamp(v, 0.0f, 1.0f);
    v = static_cast<float>(std::lround(clamped * 255.0f)) / 255.0f;
  }
}

Image ReadPng(const std::string& path) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    throw Error(ErrorKind::kIo, "cannot read PNG '" + path + "': " +
                                    std::string(png.message));
  }
  png.format = PNG_FORMAT_RGB;
  std::vector<uint8_t> buffer(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr)) {
    const std::string message = png.message;
    png_image_free(&png);
    throw Error(ErrorKind::kIo, "cannot decode PNG '" + path + "': " + message);
  }
  Image image(static_cast<int>(png.width), static_cast<int>(png.height));
  for (size_t i = 0; i < buffer.size(); ++i) {
    image.data()[i] = buffer[i] / 255.0f;
  }
  return image;
}

void WritePng(const std::string& path, const Image& image) {
  std::vector<uint8_t> buffer(image.data().size());
  for (size_t i = 0; i < buffer.size(); ++i) {
    const float v = std::clamp(image.data()[i], 0.0f, 1.0f);
    buffer[i] = static_cast<uint8_t>(std::lround(v * 255.0f));
  }
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width());
  png.height = static_cast<png_uint_32>(image.height());
  png.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.c_str(), 0, buffer.data(), 0,
                               nullptr)) {
    throw Error(ErrorKind::kIo, "cannot write PNG '" + path + "': " +
                                    std::string(png.message));
  }
}

void DrawBox(Image& image, const BBox& box, std::array<float, 3> color) {
  const int x1 = static_cast<int>(std::lround(box.x));
  const int y1 = static_cast<int>(std::lround(box.y));
  const int x2 = static_cast<int>(std::lround(box.right())) - 1;
  const int y2 = static_cast<int>(std::lround(box.bottom())) - 1;
  auto put = [&](int x, int y) {
    if (x < 0 || y < 0 || x >= image.width() || y >= image.height()) return;
    for (int c = 0; c < Image::kChannels; ++c) image.at(x, y, c) = color[c];
  };
  for (int x = x1; x <= x2; ++x) {
    put(x, y1);
    put(x, y2);
  }
  for (int y = y1; y <= y2; ++y) {
    put(x1, y);
    put(x2, y);
  }
}

}  // namespace darter
