// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DARTer Authors.

#include "darter/geometry.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "darter/errors.hpp"

namespace darter {

void ValidateBox(const BBox& box) {
  if (!std::isfinite(box.x) || !std::isfinite(box.y) ||
      !std::isfinite(box.w) || !std::isfinite(box.h)) {
    throw Error(ErrorKind::kInvalidBox, "box has non-finite coordinates");
  }
  if (!(box.w > 0.0) || !(box.h > 0.0)) {
    throw Error(ErrorKind::kInvalidBox,
                "box must have w > 0 and h > 0, got " + FormatBox(box));
  }
}

double Iou(const BBox& a, const BBox& b) {
  ValidateBox(a);
  ValidateBox(b);
  const double iw = std::min(a.right(), b.right()) - std::max(a.x, b.x);
  const double ih = std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

double SiouLoss(const BBox& pred, const BBox& gt, double theta) {
  return SiouLossWithGrad(pred, gt, theta).loss;
}

SiouResult SiouLossWithGrad(const BBox& pred, const BBox& gt, double theta) {
  ValidateBox(pred);
  ValidateBox(gt);

  const double px1 = pred.x, px2 = pred.right();
  const double py1 = pred.y, py2 = pred.bottom();
  const double gx1 = gt.x, gx2 = gt.right();
  const double gy1 = gt.y, gy2 = gt.bottom();

  // Partials w.r.t. the pred edges, centers and sizes; folded into
  // (x, y, w, h) at the end.
  double g_px1 = 0, g_px2 = 0, g_py1 = 0, g_py2 = 0;
  double g_cx = 0, g_cy = 0, g_w = 0, g_h = 0;

  // IoU term.
  const double iw_raw = std::min(px2, gx2) - std::max(px1, gx1);
  const double ih_raw = std::min(py2, gy2) - std::max(py1, gy1);
  const double iw = std::max(0.0, iw_raw);
  const double ih = std::max(0.0, ih_raw);
  const double inter = iw * ih;
  const double uni = pred.area() + gt.area() - inter;
  const double iou = inter / uni;
  {
    const double dl_dinter = -(uni + inter) / (uni * uni);
    const double dl_darea = inter / (uni * uni);
    if (iw_raw > 0.0 && ih_raw > 0.0) {
      if (px1 > gx1) g_px1 += dl_dinter * ih * -1.0;
      if (px2 < gx2) g_px2 += dl_dinter * ih;
      if (py1 > gy1) g_py1 += dl_dinter * iw * -1.0;
      if (py2 < gy2) g_py2 += dl_dinter * iw;
    }
    g_w += dl_darea * pred.h;
    g_h += dl_darea * pred.w;
  }

  // Enclosing box.
  const double enc_w = std::max(px2, gx2) - std::min(px1, gx1);
  const double enc_h = std::max(py2, gy2) - std::min(py1, gy1);

  // Angle and distance costs.
  const double dx = gt.cx() - pred.cx();
  const double dy = gt.cy() - pred.cy();
  const double sigma_sq = dx * dx + dy * dy;
  double angle = 0.0, dangle_ddx = 0.0, dangle_ddy = 0.0;
  if (sigma_sq > 0.0) {
    // sin(2 * alpha) with sin(alpha) = |dy| / sigma; symmetric in the
    // horizontal/vertical choice of alpha.
    const double a = std::abs(dx), b = std::abs(dy);
    angle = 2.0 * a * b / sigma_sq;
    const double s4 = sigma_sq * sigma_sq;
    const double sx = dx > 0 ? 1.0 : (dx < 0 ? -1.0 : 0.0);
    const double sy = dy > 0 ? 1.0 : (dy < 0 ? -1.0 : 0.0);
    dangle_ddx = sx * 2.0 * b * (b * b - a * a) / s4;
    dangle_ddy = sy * 2.0 * a * (a * a - b * b) / s4;
  }
  const double gamma = 2.0 - angle;
  const double rho_x = (dx / enc_w) * (dx / enc_w);
  const double rho_y = (dy / enc_h) * (dy / enc_h);
  const double ex = std::exp(-gamma * rho_x);
  const double ey = std::exp(-gamma * rho_y);
  const double distance = (1.0 - ex) + (1.0 - ey);
  {
    const double dd_drx = gamma * ex;
    const double dd_dry = gamma * ey;
    const double dd_dgamma = rho_x * ex + rho_y * ey;
    const double dd_ddx =
        dd_drx * 2.0 * dx / (enc_w * enc_w) - dd_dgamma * dangle_ddx;
    const double dd_ddy =
        dd_dry * 2.0 * dy / (enc_h * enc_h) - dd_dgamma * dangle_ddy;
    // d(dx)/d(cx) = -1.
    g_cx += 0.5 * -dd_ddx;
    g_cy += 0.5 * -dd_ddy;
    const double dd_dencw = dd_drx * -2.0 * dx * dx / (enc_w * enc_w * enc_w);
    const double dd_dench = dd_dry * -2.0 * dy * dy / (enc_h * enc_h * enc_h);
    if (px1 < gx1) g_px1 += 0.5 * dd_dencw * -1.0;
    if (px2 > gx2) g_px2 += 0.5 * dd_dencw;
    if (py1 < gy1) g_py1 += 0.5 * dd_dench * -1.0;
    if (py2 > gy2) g_py2 += 0.5 * dd_dench;
  }

  // Shape cost.
  auto shape_term = [theta](double p, double g, double* dterm_dp) {
    const double omega = std::abs(p - g) / std::max(p, g);
    const double e = std::exp(-omega);
    const double base = 1.0 - e;
    double domega_dp = 0.0;
    if (p > g) {
      domega_dp = g / (p * p);
    } else if (p < g) {
      domega_dp = -1.0 / g;
    }
    *dterm_dp = theta * std::pow(base, theta - 1.0) * e * domega_dp;
    return std::pow(base, theta);
  };
  double dshape_dw = 0.0, dshape_dh = 0.0;
  const double shape = shape_term(pred.w, gt.w, &dshape_dw) +
                       shape_term(pred.h, gt.h, &dshape_dh);
  g_w += 0.5 * dshape_dw;
  g_h += 0.5 * dshape_dh;

  SiouResult result;
  result.loss = 1.0 - iou + (distance + shape) / 2.0;
  // px1 = x, px2 = x + w, cx = x + w / 2.
  result.grad[0] = g_px1 + g_px2 + g_cx;
  result.grad[1] = g_py1 + g_py2 + g_cy;
  result.grad[2] = g_px2 + 0.5 * g_cx + g_w;
  result.grad[3] = g_py2 + 0.5 * g_cy + g_h;
  return result;
}

CropSpec MakeCrop(int frame_width, int frame_height, const BBox& box,
                  double area_factor, int out_size) {
  ValidateBox(box);
  if (!(area_factor > 0.0)) {
    throw Error(ErrorKind::kConfig, "crop area factor must be positive");
  }
  if (out_size <= 0 || frame_width <= 0 || frame_height <= 0) {
    throw Error(ErrorKind::kShape, "crop and frame sizes must be positive");
  }
  CropSpec crop;
  crop.center_x = box.cx();
  crop.center_y = box.cy();
  crop.side = area_factor * std::sqrt(box.w * box.h);
  crop.out_size = out_size;
  return crop;
}

std::pair<double, double> FrameToCrop(double x, double y,
                                      const CropSpec& crop) {
  const double s = crop.scale();
  return {(x - crop.left()) * s, (y - crop.top()) * s};
}

std::pair<double, double> CropToFrame(double u, double v,
                                      const CropSpec& crop) {
  const double s = crop.scale();
  return {u / s + crop.left(), v / s + crop.top()};
}

BBox BoxToCropCoords(const BBox& box, const CropSpec& crop) {
  const auto [u, v] = FrameToCrop(box.x, box.y, crop);
  return {u, v, box.w * crop.scale(), box.h * crop.scale()};
}

BBox CropToFrameCoords(const BBox& box, const CropSpec& crop) {
  const auto [x, y] = CropToFrame(box.x, box.y, crop);
  return {x, y, box.w / crop.scale(), box.h / crop.scale()};
}

BBox ClampBox(const BBox& box, int width, int height, double min_side) {
  const double x1 = std::clamp(box.x, 0.0, width - min_side);
  const double y1 = std::clamp(box.y, 0.0, height - min_side);
  const double x2 = std::clamp(box.right(), x1 + min_side,
                               static_cast<double>(width));
  const double y2 = std::clamp(box.bottom(), y1 + min_side,
                               static_cast<double>(height));
  return {x1, y1, x2 - x1, y2 - y1};
}

namespace {

std::string FormatFixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  std::string s(buf);
  if (s == "-0.00") s = "0.00";
  return s;
}

}  // namespace

std::string FormatBox(const BBox& box) {
  return FormatFixed2(box.x) + "," + FormatFixed2(box.y) + "," +
         FormatFixed2(box.w) + "," + FormatFixed2(box.h);
}

BBox ParseBox(std::string_view line) {
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n' ||
                           line.back() == ' ' || line.back() == '\t')) {
    line.remove_suffix(1);
  }
  std::vector<double> fields;
  size_t start = 0;
  while (true) {
    const size_t comma = line.find(',', start);
    const std::string_view field =
        line.substr(start, comma == std::string_view::npos ? line.npos
                                                           : comma - start);
    double value = 0.0;
    const char* first = field.data();
    const char* last = field.data() + field.size();
    if (!field.empty() && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (field.empty() || ec != std::errc() || ptr != last) {
      throw Error(ErrorKind::kParse,
                  "malformed box field '" + std::string(field) + "'");
    }
    if (!std::isfinite(value)) {
      throw Error(ErrorKind::kParse, "box field is not finite");
    }
    fields.push_back(value);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (fields.size() != 4) {
    throw Error(ErrorKind::kParse, "expected 4 comma-separated fields, got " +
                                       std::to_string(fields.size()));
  }
  if (fields[2] <= 0.0 || fields[3] <= 0.0) {
    throw Error(ErrorKind::kParse, "box width and height must be positive");
  }
  return {fields[0], fields[1], fields[2], fields[3]};
}

}  // namespace darter
