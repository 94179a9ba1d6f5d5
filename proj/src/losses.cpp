// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DARTer Authors.

#include "darter/losses.hpp"

#include <cmath>
#include <string>

#include "darter/errors.hpp"

namespace darter {

Cell CenterCell(const BBox& gt_in_search, int grid, double search_size) {
  const double cx = gt_in_search.cx(), cy = gt_in_search.cy();
  if (!(cx >= 0.0 && cy >= 0.0 && cx < search_size && cy < search_size)) {
    throw Error(ErrorKind::kSampleRejected,
                "ground-truth center outside the search region");
  }
  const double cell = search_size / grid;
  return {std::min(grid - 1, static_cast<int>(std::floor(cy / cell))),
          std::min(grid - 1, static_cast<int>(std::floor(cx / cell)))};
}

double CeLoss(const ad::Matrix& score_map, Cell cell) {
  if (cell.row < 0 || cell.col < 0 || cell.row >= score_map.rows() ||
      cell.col >= score_map.cols()) {
    throw Error(ErrorKind::kIndex, "cell (" + std::to_string(cell.row) + "," +
                                       std::to_string(cell.col) +
                                       ") outside the score map");
  }
  return -std::log(score_map(cell.row, cell.col));
}

LossVars TotalLossVars(const HeadVars& head, int index,
                       const BBox& gt_in_search, double search_size,
                       const LossWeights& weights) {
  const int g = head.grid;
  const Cell cell = CenterCell(gt_in_search, g, search_size);
  const Eigen::Index row =
      static_cast<Eigen::Index>(index) * g * g + cell.row * g + cell.col;
  LossVars out;
  out.ce = ad::Scale(ad::Log(ad::Element(head.score, row, 0)), -1.0);
  out.siou = ad::SiouLossOp(ad::DecodeCellBox(head.offset, head.size, row,
                                              cell.row, cell.col, g,
                                              search_size),
                            gt_in_search);
  out.total = ad::Add(ad::Scale(out.ce, weights.lambda_ce),
                      ad::Scale(out.siou, weights.lambda_siou));
  return out;
}

TotalLossResult TotalLoss(const HeadOutput& out, const BBox& gt_in_search,
                          double search_size, const LossWeights& weights) {
  const int g = out.grid;
  ad::Matrix score_col(g * g, 1);
  for (int c = 0; c < g * g; ++c) score_col(c, 0) = out.score(c / g, c % g);

  ad::Tape tape;
  HeadVars vars;
  vars.grid = g;
  vars.score = tape.Input(score_col);
  vars.offset = tape.Input(out.offset);
  vars.size = tape.Input(out.size);
  LossVars loss = TotalLossVars(vars, 0, gt_in_search, search_size,
                                weights);
  tape.Backward(loss.total);

  TotalLossResult result;
  result.value = {loss.total.value()(0, 0), loss.ce.value()(0, 0),
                  loss.siou.value()(0, 0)};
  const ad::Matrix gs = tape.Grad(vars.score);
  result.grad_score.resize(g, g);
  for (int c = 0; c < g * g; ++c) result.grad_score(c / g, c % g) = gs(c, 0);
  result.grad_offset = tape.Grad(vars.offset);
  result.grad_size = tape.Grad(vars.size);
  return result;
}

}  // namespace darter
