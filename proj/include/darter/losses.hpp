// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DARTer Authors.

#pragma once

#include "darter/autodiff.hpp"
#include "darter/backbone.hpp"
#include "darter/geometry.hpp"

namespace darter {

struct LossWeights {
  double lambda_ce = 2.0;
  double lambda_siou = 2.0;
};

struct Cell {
  int row = 0;
  int col = 0;
};

// Grid cell holding the box center. Throws Error(kSampleRejected) when the
// center lies outside [0, search_size)^2.
Cell CenterCell(const BBox& gt_in_search, int grid, double search_size);

// -log p(cell) for a normalized G x G score map.
double CeLoss(const ad::Matrix& score_map, Cell cell);

struct LossValue {
  double total = 0.0;
  double ce = 0.0;
  double siou = 0.0;
};

struct LossVars {
  ad::Var total;
  ad::Var ce;
  ad::Var siou;
};

// Loss of sample `index` in a batched head evaluation: one-hot CE at the
// ground-truth center cell plus SIoU between the ground truth and the box
// decoded at that same cell.
LossVars TotalLossVars(const HeadVars& head, int index,
                       const BBox& gt_in_search, double search_size,
                       const LossWeights& weights);

struct TotalLossResult {
  LossValue value;
  // Gradients w.r.t. the head outputs.
  ad::Matrix grad_score;   // G x G
  ad::Matrix grad_offset;  // G^2 x 2
  ad::Matrix grad_size;    // G^2 x 2
};

TotalLossResult TotalLoss(const HeadOutput& out, const BBox& gt_in_search,
                          double search_size, const LossWeights& weights);

}  // namespace darter
