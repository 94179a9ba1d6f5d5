// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DARTer Authors.

#pragma once

#include <array>
#include <string>
#include <string_view>
#include <utility>

namespace darter {

// Axis-aligned box in continuous pixel coordinates: (x, y) is the top-left
// corner. Boxes handed to the geometry operations must have w > 0 and h > 0.
struct BBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double cx() const { return x + w / 2.0; }
  double cy() const { return y + h / 2.0; }
  double area() const { return w * h; }
  double right() const { return x + w; }
  double bottom() const { return y + h; }

  static BBox FromCenter(double cx, double cy, double w, double h) {
    return {cx - w / 2.0, cy - h / 2.0, w, h};
  }

  friend bool operator==(const BBox&, const BBox&) = default;
};

// Throws Error(kInvalidBox) unless w and h are finite and strictly positive.
void ValidateBox(const BBox& box);

// Intersection over union. Boxes that only touch along an edge do not
// overlap.
double Iou(const BBox& a, const BBox& b);

// SIoU regression loss: 1 - IoU + (distance_cost + shape_cost) / 2, with the
// angle cost modulating the distance cost and shape exponent `theta`.
double SiouLoss(const BBox& pred, const BBox& gt, double theta = 4.0);

struct SiouResult {
  double loss = 0.0;
  // d loss / d (x, y, w, h) of `pred`.
  std::array<double, 4> grad{};
};

SiouResult SiouLossWithGrad(const BBox& pred, const BBox& gt,
                            double theta = 4.0);

// Square crop window centered on a box, resampled to out_size x out_size.
struct CropSpec {
  double center_x = 0.0;
  double center_y = 0.0;
  double side = 0.0;
  int out_size = 0;

  double scale() const { return out_size / side; }
  double left() const { return center_x - side / 2.0; }
  double top() const { return center_y - side / 2.0; }
};

// side = area_factor * sqrt(w * h), centered on the box center. The window
// may extend past the frame; those pixels are filled at extraction time.
CropSpec MakeCrop(int frame_width, int frame_height, const BBox& box,
                  double area_factor, int out_size);

std::pair<double, double> FrameToCrop(double x, double y, const CropSpec& crop);
std::pair<double, double> CropToFrame(double u, double v, const CropSpec& crop);
BBox BoxToCropCoords(const BBox& box, const CropSpec& crop);
BBox CropToFrameCoords(const BBox& box, const CropSpec& crop);

// Clamps into [0, width] x [0, height] keeping each side >= min_side.
BBox ClampBox(const BBox& box, int width, int height, double min_side = 2.0);

// "x,y,w,h" with two decimals, no spaces.
std::string FormatBox(const BBox& box);
// Accepts any decimal formatting; rejects NaN, non-positive sizes and
// malformed fields with a parse error.
BBox ParseBox(std::string_view line);

}  // namespace darter
