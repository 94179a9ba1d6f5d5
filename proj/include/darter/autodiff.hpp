// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DARTer Authors.

#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major double
// matrices. A Tape records every op evaluated through it; Backward() walks
// the record in reverse. Tapes are single-use and single-threaded.

#include <Eigen/Dense>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "darter/geometry.hpp"

namespace darter::ad {

using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// A named trainable array. `grad` accumulates across Backward() calls until
// cleared by the optimizer.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)) {}
  void ZeroGrad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Matrix& out_grad)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var Constant(Matrix value);
  // Leaf whose gradient is retrievable through Grad() after Backward().
  Var Input(Matrix value);
  // Leaf bound to a parameter; Backward() adds its gradient to p.grad.
  Var Param(Parameter& p);

  // Seeds d(out)/d(out) = 1 for a 1x1 output and propagates.
  void Backward(Var out);

  const Matrix& Value(Var v) const { return nodes_[v.id_].value; }
  // Zero matrix of the right shape if no gradient reached `v`.
  Matrix Grad(Var v) const;

  bool RequiresGrad(Var v) const { return nodes_[v.id_].requires_grad; }

  // Used by op implementations.
  Var Record(Matrix value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var Record(Matrix value, std::span<const Var> inputs, BackwardFn fn);
  template <typename Derived>
  void Accumulate(Var v, const Eigen::MatrixBase<Derived>& g) {
    Node& node = nodes_[v.id_];
    if (!node.requires_grad) return;
    if (node.grad.size() == 0) {
      node.grad = g;
    } else {
      node.grad += g;
    }
  }

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    BackwardFn backward;
    Parameter* param = nullptr;
  };

  bool grad_enabled_;
  std::deque<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape_->Value(*this); }

// ---- Ops. All operands must live on the same tape. ----

Var MatMul(Var a, Var b);
Var Add(Var a, Var b);
Var Sub(Var a, Var b);
Var Mul(Var a, Var b);  // elementwise
Var Scale(Var a, double s);
Var AddScalar(Var a, double s);
// a (n x c) + row (1 x c) broadcast over rows.
Var AddRow(Var a, Var row);
// s (1 x 1) * a.
Var ScaleBy(Var s, Var a);

Var Relu(Var a);
Var Gelu(Var a);  // exact erf form
Var Sigmoid(Var a);
// 0.5 * (tanh(a) + 1).
Var HalfTanh(Var a);
Var Log(Var a);

Var Sum(Var a);   // 1 x 1
Var Mean(Var a);  // 1 x 1

Var ConcatRows(std::span<const Var> parts);
Var SliceRows(Var a, Eigen::Index start, Eigen::Index count);
Var SliceCols(Var a, Eigen::Index start, Eigen::Index count);
Var Element(Var a, Eigen::Index row, Eigen::Index col);  // 1 x 1

// Row-wise layer normalization with per-column gain and bias (1 x c).
Var LayerNorm(Var x, Var gamma, Var beta, double eps = 1e-5);

// Multi-head scaled dot-product attention. q: n x d, k and v: m x d;
// heads split the d columns into contiguous groups.
Var MultiHeadAttention(Var q, Var k, Var v, int heads);

// Softmax over each consecutive block of `block` rows of a column vector.
Var SoftmaxBlocks(Var logits, Eigen::Index block);

// 3x3 zero-padded neighbourhood gather. x holds `batch` maps of height x
// width rows (row-major spatial order) with c columns; the result has the
// same rows and 9c columns ordered (ky, kx, channel).
Var Im2Col3x3(Var x, int batch, int height, int width);

// Cross-correlation of a row vector with a 1 x 3 kernel, zero padded to keep
// the length.
Var Conv1dSame3(Var row, Var kernel);

struct BatchNormState {
  Matrix running_mean;  // 1 x c
  Matrix running_var;   // 1 x c
  double momentum = 0.1;
  double eps = 1e-5;
};

// Training mode normalizes with batch statistics over rows and, when
// `update_running` is set, folds them into `state`. Inference mode uses the
// running statistics.
Var BatchNorm(Var x, Var gamma, Var beta, BatchNormState& state, bool training,
              bool update_running);

// Box (1 x 4: x, y, w, h) decoded from a center-head cell:
// center = ((col + o_x) / grid, (row + o_y) / grid) * extent,
// size = s * extent, using row `index` of offsets and sizes (N x 2).
Var DecodeCellBox(Var offsets, Var sizes, Eigen::Index index, int row, int col,
                  int grid, double extent);

// SIoU loss of a 1 x 4 predicted box against a fixed ground truth.
Var SiouLossOp(Var box, const BBox& gt);

}  // namespace darter::ad
