// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DARTer Authors.

#include "darter/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "darter/errors.hpp"

namespace darter::ad {
namespace {

void CheckSameTape(Var a, Var b) {
  if (a.tape() != b.tape() || a.tape() == nullptr) {
    throw Error(ErrorKind::kState, "operands live on different tapes");
  }
}

void CheckSameShape(Var a, Var b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorKind::kShape,
                std::string(op) + ": shape mismatch " +
                    std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                    " vs " + std::to_string(b.rows()) + "x" +
                    std::to_string(b.cols()));
  }
}

Matrix Ones11() { return Matrix::Constant(1, 1, 1.0); }

}  // namespace

Var Tape::Constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, false, nullptr, nullptr});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::Input(Matrix value) {
  nodes_.push_back(
      Node{std::move(value), {}, grad_enabled_, nullptr, nullptr});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::Param(Parameter& p) {
  nodes_.push_back(Node{p.value, {}, grad_enabled_, nullptr, &p});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::Record(Matrix value, std::initializer_list<Var> inputs,
                 BackwardFn fn) {
  return Record(std::move(value), std::span<const Var>(inputs.begin(),
                                                       inputs.size()),
                std::move(fn));
}

Var Tape::Record(Matrix value, std::span<const Var> inputs, BackwardFn fn) {
  bool needs_grad = false;
  if (grad_enabled_) {
    for (const Var& in : inputs) {
      if (in.tape() != this) {
        throw Error(ErrorKind::kState, "operand belongs to another tape");
      }
      needs_grad = needs_grad || nodes_[in.id()].requires_grad;
    }
  }
  nodes_.push_back(Node{std::move(value), {}, needs_grad,
                        needs_grad ? std::move(fn) : nullptr, nullptr});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::Backward(Var out) {
  if (!grad_enabled_) {
    throw Error(ErrorKind::kState, "Backward() on a tape without gradients");
  }
  if (out.rows() != 1 || out.cols() != 1) {
    throw Error(ErrorKind::kShape, "Backward() needs a 1x1 output");
  }
  Accumulate(out, Ones11());
  for (int id = out.id(); id >= 0; --id) {
    Node& node = nodes_[id];
    if (node.grad.size() == 0) continue;
    if (node.backward) node.backward(*this, node.grad);
    if (node.param != nullptr) {
      Parameter& p = *node.param;
      if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) {
        p.grad.setZero(p.value.rows(), p.value.cols());
      }
      p.grad += node.grad;
    }
  }
}

Matrix Tape::Grad(Var v) const {
  const Node& node = nodes_[v.id()];
  if (node.grad.size() == 0) {
    return Matrix::Zero(node.value.rows(), node.value.cols());
  }
  return node.grad;
}

Var MatMul(Var a, Var b) {
  CheckSameTape(a, b);
  if (a.cols() != b.rows()) {
    throw Error(ErrorKind::kShape, "MatMul: inner dimensions differ (" +
                                       std::to_string(a.cols()) + " vs " +
                                       std::to_string(b.rows()) + ")");
  }
  Matrix out = a.value() * b.value();
  return a.tape()->Record(std::move(out), {a, b},
                          [a, b](Tape& t, const Matrix& g) {
                            if (t.RequiresGrad(a)) {
                              t.Accumulate(a, g * t.Value(b).transpose());
                            }
                            if (t.RequiresGrad(b)) {
                              t.Accumulate(b, t.Value(a).transpose() * g);
                            }
                          });
}

Var Add(Var a, Var b) {
  CheckSameTape(a, b);
  CheckSameShape(a, b, "Add");
  return a.tape()->Record(a.value() + b.value(), {a, b},
                          [a, b](Tape& t, const Matrix& g) {
                            t.Accumulate(a, g);
                            t.Accumulate(b, g);
                          });
}

Var Sub(Var a, Var b) {
  CheckSameTape(a, b);
  CheckSameShape(a, b, "Sub");
  return a.tape()->Record(a.value() - b.value(), {a, b},
                          [a, b](Tape& t, const Matrix& g) {
                            t.Accumulate(a, g);
                            t.Accumulate(b, -g);
                          });
}

Var Mul(Var a, Var b) {
  CheckSameTape(a, b);
  CheckSameShape(a, b, "Mul");
  Matrix out = a.value().cwiseProduct(b.value());
  return a.tape()->Record(std::move(out), {a, b},
                          [a, b](Tape& t, const Matrix& g) {
                            t.Accumulate(a, g.cwiseProduct(t.Value(b)));
                            t.Accumulate(b, g.cwiseProduct(t.Value(a)));
                          });
}

Var Scale(Var a, double s) {
  return a.tape()->Record(a.value() * s, {a},
                          [a, s](Tape& t, const Matrix& g) {
                            t.Accumulate(a, g * s);
                          });
}

Var AddScalar(Var a, double s) {
  Matrix out = a.value().array() + s;
  return a.tape()->Record(std::move(out), {a},
                          [a](Tape& t, const Matrix& g) { t.Accumulate(a, g); });
}

Var AddRow(Var a, Var row) {
  CheckSameTape(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw Error(ErrorKind::kShape, "AddRow: bias must be 1 x cols");
  }
  Matrix out = a.value().rowwise() + row.value().row(0);
  return a.tape()->Record(std::move(out), {a, row},
                          [a, row](Tape& t, const Matrix& g) {
                            t.Accumulate(a, g);
                            t.Accumulate(row, g.colwise().sum());
                          });
}

Var ScaleBy(Var s, Var a) {
  CheckSameTape(s, a);
  if (s.rows() != 1 || s.cols() != 1) {
    throw Error(ErrorKind::kShape, "ScaleBy: scale must be 1x1");
  }
  const double sv = s.value()(0, 0);
  return a.tape()->Record(a.value() * sv, {s, a},
                          [s, a](Tape& t, const Matrix& g) {
                            const double scale = t.Value(s)(0, 0);
                            if (t.RequiresGrad(s)) {
                              Matrix gs(1, 1);
                              gs(0, 0) = g.cwiseProduct(t.Value(a)).sum();
                              t.Accumulate(s, gs);
                            }
                            t.Accumulate(a, g * scale);
                          });
}

Var Relu(Var a) {
  Matrix out = a.value().cwiseMax(0.0);
  return a.tape()->Record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    Matrix mask = (t.Value(a).array() > 0.0).cast<double>();
    t.Accumulate(a, g.cwiseProduct(mask));
  });
}

Var Gelu(Var a) {
  const Matrix& x = a.value();
  Matrix out = x.unaryExpr([](double v) {
    return 0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2));
  });
  return a.tape()->Record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    Matrix d = t.Value(a).unaryExpr([](double v) {
      const double cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
      const double pdf =
          std::exp(-0.5 * v * v) / std::sqrt(2.0 * std::numbers::pi);
      return cdf + v * pdf;
    });
    t.Accumulate(a, g.cwiseProduct(d));
  });
}

Var Sigmoid(Var a) {
  Matrix out =
      a.value().unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  Matrix y = out;
  return a.tape()->Record(std::move(out), {a},
                          [a, y](Tape& t, const Matrix& g) {
                            Matrix d = y.array() * (1.0 - y.array());
                            t.Accumulate(a, g.cwiseProduct(d));
                          });
}

Var HalfTanh(Var a) {
  // Evaluated as the logistic of 2a, which equals (tanh(a) + 1) / 2 but does
  // not round small probabilities to 0. The result stays inside (0, 1).
  constexpr double kLo = std::numeric_limits<double>::min();
  const double hi = std::nextafter(1.0, 0.0);
  Matrix out = a.value().unaryExpr([&](double v) {
    const double s = v >= 0.0 ? 1.0 / (1.0 + std::exp(-2.0 * v))
                              : std::exp(2.0 * v) / (1.0 + std::exp(2.0 * v));
    return std::clamp(s, kLo, hi);
  });
  Matrix d = 2.0 * out.array() * (1.0 - out.array());
  return a.tape()->Record(std::move(out), {a},
                          [a, d](Tape& t, const Matrix& g) {
                            t.Accumulate(a, g.cwiseProduct(d));
                          });
}

Var Log(Var a) {
  Matrix out = a.value().array().log();
  return a.tape()->Record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    t.Accumulate(a, g.cwiseQuotient(t.Value(a)));
  });
}

Var Sum(Var a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape()->Record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    t.Accumulate(a, Matrix::Constant(t.Value(a).rows(), t.Value(a).cols(),
                                     g(0, 0)));
  });
}

Var Mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  return Scale(Sum(a), 1.0 / n);
}

Var ConcatRows(std::span<const Var> parts) {
  if (parts.empty()) throw Error(ErrorKind::kShape, "ConcatRows: no parts");
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    CheckSameTape(parts[0], p);
    if (p.cols() != cols) {
      throw Error(ErrorKind::kShape, "ConcatRows: column count mismatch");
    }
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].tape()->Record(
      std::move(out), parts, [inputs](Tape& t, const Matrix& g) {
        Eigen::Index offset = 0;
        for (const Var& p : inputs) {
          const Eigen::Index n = t.Value(p).rows();
          if (t.RequiresGrad(p)) t.Accumulate(p, g.middleRows(offset, n));
          offset += n;
        }
      });
}

Var SliceRows(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw Error(ErrorKind::kShape, "SliceRows: range out of bounds");
  }
  Matrix out = a.value().middleRows(start, count);
  return a.tape()->Record(std::move(out), {a},
                          [a, start, count](Tape& t, const Matrix& g) {
                            Matrix full = Matrix::Zero(t.Value(a).rows(),
                                                       t.Value(a).cols());
                            full.middleRows(start, count) = g;
                            t.Accumulate(a, full);
                          });
}

Var SliceCols(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw Error(ErrorKind::kShape, "SliceCols: range out of bounds");
  }
  Matrix out = a.value().middleCols(start, count);
  return a.tape()->Record(std::move(out), {a},
                          [a, start, count](Tape& t, const Matrix& g) {
                            Matrix full = Matrix::Zero(t.Value(a).rows(),
                                                       t.Value(a).cols());
                            full.middleCols(start, count) = g;
                            t.Accumulate(a, full);
                          });
}

Var Element(Var a, Eigen::Index row, Eigen::Index col) {
  if (row < 0 || col < 0 || row >= a.rows() || col >= a.cols()) {
    throw Error(ErrorKind::kIndex, "Element: index out of range");
  }
  Matrix out(1, 1);
  out(0, 0) = a.value()(row, col);
  return a.tape()->Record(std::move(out), {a},
                          [a, row, col](Tape& t, const Matrix& g) {
                            Matrix full = Matrix::Zero(t.Value(a).rows(),
                                                       t.Value(a).cols());
                            full(row, col) = g(0, 0);
                            t.Accumulate(a, full);
                          });
}

Var LayerNorm(Var x, Var gamma, Var beta, double eps) {
  CheckSameTape(x, gamma);
  CheckSameTape(x, beta);
  const Eigen::Index n = x.rows(), c = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != c || beta.rows() != 1 ||
      beta.cols() != c) {
    throw Error(ErrorKind::kShape, "LayerNorm: gain/bias must be 1 x cols");
  }
  const Matrix& xv = x.value();
  Matrix xhat(n, c);
  Eigen::VectorXd inv_std(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = xv.row(i).mean();
    const double var = (xv.row(i).array() - mu).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (xv.row(i).array() - mu) * inv_std(i);
  }
  Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array())
                   .rowwise() +
               beta.value().row(0).array();
  return x.tape()->Record(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat, inv_std](Tape& t, const Matrix& g) {
        if (t.RequiresGrad(gamma)) {
          t.Accumulate(gamma, g.cwiseProduct(xhat).colwise().sum());
        }
        if (t.RequiresGrad(beta)) t.Accumulate(beta, g.colwise().sum());
        if (t.RequiresGrad(x)) {
          Matrix dxhat = g.array().rowwise() * t.Value(gamma).row(0).array();
          Matrix dx(dxhat.rows(), dxhat.cols());
          for (Eigen::Index i = 0; i < dxhat.rows(); ++i) {
            const double m1 = dxhat.row(i).mean();
            const double m2 = dxhat.row(i).cwiseProduct(xhat.row(i)).mean();
            dx.row(i) = inv_std(i) * (dxhat.row(i).array() - m1 -
                                      xhat.row(i).array() * m2);
          }
          t.Accumulate(x, dx);
        }
      });
}

Var MultiHeadAttention(Var q, Var k, Var v, int heads) {
  CheckSameTape(q, k);
  CheckSameTape(q, v);
  const Eigen::Index d = q.cols();
  if (k.cols() != d || v.cols() != d || k.rows() != v.rows()) {
    throw Error(ErrorKind::kShape, "MultiHeadAttention: operand shapes differ");
  }
  if (heads <= 0 || d % heads != 0) {
    throw Error(ErrorKind::kShape, "MultiHeadAttention: width " +
                                       std::to_string(d) +
                                       " not divisible by heads");
  }
  const Eigen::Index hd = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  const Matrix& qv = q.value();
  const Matrix& kv = k.value();
  const Matrix& vv = v.value();
  Matrix out(qv.rows(), d);
  std::vector<Matrix> probs(heads);
  for (int h = 0; h < heads; ++h) {
    Matrix s = (qv.middleCols(h * hd, hd) * kv.middleCols(h * hd, hd)
                                               .transpose()) *
               scale;
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
      const double mx = s.row(i).maxCoeff();
      s.row(i) = (s.row(i).array() - mx).exp();
      s.row(i) /= s.row(i).sum();
    }
    out.middleCols(h * hd, hd) = s * vv.middleCols(h * hd, hd);
    probs[h] = std::move(s);
  }
  return q.tape()->Record(
      std::move(out), {q, k, v},
      [q, k, v, heads, hd, scale, probs](Tape& t, const Matrix& g) {
        const Matrix& qv = t.Value(q);
        const Matrix& kv = t.Value(k);
        const Matrix& vv = t.Value(v);
        Matrix dq = Matrix::Zero(qv.rows(), qv.cols());
        Matrix dk = Matrix::Zero(kv.rows(), kv.cols());
        Matrix dv = Matrix::Zero(vv.rows(), vv.cols());
        for (int h = 0; h < heads; ++h) {
          const Matrix& p = probs[h];
          const auto go = g.middleCols(h * hd, hd);
          dv.middleCols(h * hd, hd) = p.transpose() * go;
          Matrix dp = go * vv.middleCols(h * hd, hd).transpose();
          Eigen::VectorXd row_dot = dp.cwiseProduct(p).rowwise().sum();
          Matrix ds = p.cwiseProduct(dp.colwise() - row_dot) * scale;
          dq.middleCols(h * hd, hd) = ds * kv.middleCols(h * hd, hd);
          dk.middleCols(h * hd, hd) = ds.transpose() * qv.middleCols(h * hd, hd);
        }
        t.Accumulate(q, dq);
        t.Accumulate(k, dk);
        t.Accumulate(v, dv);
      });
}

Var SoftmaxBlocks(Var logits, Eigen::Index block) {
  if (logits.cols() != 1 || block <= 0 || logits.rows() % block != 0) {
    throw Error(ErrorKind::kShape, "SoftmaxBlocks: bad block layout");
  }
  const Matrix& z = logits.value();
  Matrix out(z.rows(), 1);
  for (Eigen::Index b = 0; b < z.rows(); b += block) {
    const double mx = z.middleRows(b, block).maxCoeff();
    out.middleRows(b, block) = (z.middleRows(b, block).array() - mx).exp();
    out.middleRows(b, block) /= out.middleRows(b, block).sum();
  }
  Matrix y = out;
  return logits.tape()->Record(
      std::move(out), {logits}, [logits, y, block](Tape& t, const Matrix& g) {
        Matrix dz(y.rows(), 1);
        for (Eigen::Index b = 0; b < y.rows(); b += block) {
          const double dot =
              g.middleRows(b, block).cwiseProduct(y.middleRows(b, block)).sum();
          dz.middleRows(b, block) =
              y.middleRows(b, block).array() *
              (g.middleRows(b, block).array() - dot);
        }
        t.Accumulate(logits, dz);
      });
}

Var Im2Col3x3(Var x, int batch, int height, int width) {
  const Eigen::Index c = x.cols();
  const Eigen::Index plane = static_cast<Eigen::Index>(height) * width;
  if (x.rows() != batch * plane) {
    throw Error(ErrorKind::kShape, "Im2Col3x3: row count does not match maps");
  }
  const Matrix& xv = x.value();
  Matrix out = Matrix::Zero(x.rows(), 9 * c);
  for (int b = 0; b < batch; ++b) {
    for (int y = 0; y < height; ++y) {
      for (int xx = 0; xx < width; ++xx) {
        const Eigen::Index row = b * plane + y * width + xx;
        for (int ky = 0; ky < 3; ++ky) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= height) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int sx = xx + kx - 1;
            if (sx < 0 || sx >= width) continue;
            out.block(row, (ky * 3 + kx) * c, 1, c) =
                xv.row(b * plane + sy * width + sx);
          }
        }
      }
    }
  }
  return x.tape()->Record(
      std::move(out), {x},
      [x, batch, height, width, c, plane](Tape& t, const Matrix& g) {
        Matrix dx = Matrix::Zero(t.Value(x).rows(), c);
        for (int b = 0; b < batch; ++b) {
          for (int y = 0; y < height; ++y) {
            for (int xx = 0; xx < width; ++xx) {
              const Eigen::Index row = b * plane + y * width + xx;
              for (int ky = 0; ky < 3; ++ky) {
                const int sy = y + ky - 1;
                if (sy < 0 || sy >= height) continue;
                for (int kx = 0; kx < 3; ++kx) {
                  const int sx = xx + kx - 1;
                  if (sx < 0 || sx >= width) continue;
                  dx.row(b * plane + sy * width + sx) +=
                      g.block(row, (ky * 3 + kx) * c, 1, c);
                }
              }
            }
          }
        }
        t.Accumulate(x, dx);
      });
}

Var Conv1dSame3(Var row, Var kernel) {
  CheckSameTape(row, kernel);
  if (row.rows() != 1 || kernel.rows() != 1 || kernel.cols() != 3) {
    throw Error(ErrorKind::kShape, "Conv1dSame3: expects 1 x d and 1 x 3");
  }
  const Eigen::Index d = row.cols();
  const Matrix& r = row.value();
  const Matrix& w = kernel.value();
  Matrix out = Matrix::Zero(1, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    for (int t = 0; t < 3; ++t) {
      const Eigen::Index src = j + t - 1;
      if (src < 0 || src >= d) continue;
      out(0, j) += w(0, t) * r(0, src);
    }
  }
  return row.tape()->Record(
      std::move(out), {row, kernel}, [row, kernel, d](Tape& tp, const Matrix& g) {
        const Matrix& r = tp.Value(row);
        const Matrix& w = tp.Value(kernel);
        Matrix dr = Matrix::Zero(1, d);
        Matrix dw = Matrix::Zero(1, 3);
        for (Eigen::Index j = 0; j < d; ++j) {
          for (int t = 0; t < 3; ++t) {
            const Eigen::Index src = j + t - 1;
            if (src < 0 || src >= d) continue;
            dr(0, src) += w(0, t) * g(0, j);
            dw(0, t) += r(0, src) * g(0, j);
          }
        }
        tp.Accumulate(row, dr);
        tp.Accumulate(kernel, dw);
      });
}

Var BatchNorm(Var x, Var gamma, Var beta, BatchNormState& state, bool training,
              bool update_running) {
  CheckSameTape(x, gamma);
  CheckSameTape(x, beta);
  const Eigen::Index n = x.rows(), c = x.cols();
  if (gamma.cols() != c || beta.cols() != c) {
    throw Error(ErrorKind::kShape, "BatchNorm: gain/bias width mismatch");
  }
  const Matrix& xv = x.value();
  if (!training) {
    Matrix inv_std = (state.running_var.array() + state.eps).rsqrt();
    Matrix mult = inv_std.cwiseProduct(gamma.value());
    Matrix shift = beta.value() - state.running_mean.cwiseProduct(mult);
    Matrix out = (xv.array().rowwise() * mult.row(0).array()).rowwise() +
                 shift.row(0).array();
    return x.tape()->Record(
        std::move(out), {x, gamma, beta},
        [x, gamma, beta, inv_std, mean = state.running_mean](Tape& t,
                                                             const Matrix& g) {
          const Matrix& xv = t.Value(x);
          Matrix xhat = (xv.rowwise() - mean.row(0)).array().rowwise() *
                        inv_std.row(0).array();
          if (t.RequiresGrad(gamma)) {
            t.Accumulate(gamma, g.cwiseProduct(xhat).colwise().sum());
          }
          if (t.RequiresGrad(beta)) t.Accumulate(beta, g.colwise().sum());
          if (t.RequiresGrad(x)) {
            Matrix dx = g.array().rowwise() *
                        (inv_std.cwiseProduct(t.Value(gamma))).row(0).array();
            t.Accumulate(x, dx);
          }
        });
  }
  if (n < 2) throw Error(ErrorKind::kShape, "BatchNorm: need >= 2 rows");
  Matrix mean = xv.colwise().mean();
  Matrix centered = xv.rowwise() - mean.row(0);
  Matrix var = centered.array().square().colwise().mean();
  Matrix inv_std = (var.array() + state.eps).rsqrt();
  Matrix xhat = centered.array().rowwise() * inv_std.row(0).array();
  Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array())
                   .rowwise() +
               beta.value().row(0).array();
  if (update_running) {
    const double unbias = static_cast<double>(n) / (n - 1);
    state.running_mean =
        (1 - state.momentum) * state.running_mean + state.momentum * mean;
    state.running_var = (1 - state.momentum) * state.running_var +
                        state.momentum * unbias * var;
  }
  return x.tape()->Record(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat, inv_std](Tape& t, const Matrix& g) {
        if (t.RequiresGrad(gamma)) {
          t.Accumulate(gamma, g.cwiseProduct(xhat).colwise().sum());
        }
        if (t.RequiresGrad(beta)) t.Accumulate(beta, g.colwise().sum());
        if (t.RequiresGrad(x)) {
          Matrix dxhat = g.array().rowwise() * t.Value(gamma).row(0).array();
          Matrix m1 = dxhat.colwise().mean();
          Matrix m2 = dxhat.cwiseProduct(xhat).colwise().mean();
          Matrix dx = ((dxhat.rowwise() - m1.row(0)).array() -
                       xhat.array().rowwise() * m2.row(0).array())
                          .rowwise() *
                      inv_std.row(0).array();
          t.Accumulate(x, dx);
        }
      });
}

Var DecodeCellBox(Var offsets, Var sizes, Eigen::Index index, int row, int col,
                  int grid, double extent) {
  CheckSameTape(offsets, sizes);
  if (offsets.cols() != 2 || sizes.cols() != 2 || index < 0 ||
      index >= offsets.rows() || index >= sizes.rows()) {
    throw Error(ErrorKind::kIndex, "DecodeCellBox: bad cell index");
  }
  const double ox = offsets.value()(index, 0), oy = offsets.value()(index, 1);
  const double sw = sizes.value()(index, 0), sh = sizes.value()(index, 1);
  const double k = extent / grid;
  Matrix out(1, 4);
  const double cx = (col + ox) * k, cy = (row + oy) * k;
  const double w = sw * extent, h = sh * extent;
  out << cx - w / 2.0, cy - h / 2.0, w, h;
  return offsets.tape()->Record(
      std::move(out), {offsets, sizes},
      [offsets, sizes, index, k, extent](Tape& t, const Matrix& g) {
        // x = cx - w/2, y = cy - h/2.
        Matrix doff = Matrix::Zero(t.Value(offsets).rows(), 2);
        doff(index, 0) = g(0, 0) * k;
        doff(index, 1) = g(0, 1) * k;
        Matrix dsize = Matrix::Zero(t.Value(sizes).rows(), 2);
        dsize(index, 0) = (g(0, 2) - 0.5 * g(0, 0)) * extent;
        dsize(index, 1) = (g(0, 3) - 0.5 * g(0, 1)) * extent;
        t.Accumulate(offsets, doff);
        t.Accumulate(sizes, dsize);
      });
}

Var SiouLossOp(Var box, const BBox& gt) {
  if (box.rows() != 1 || box.cols() != 4) {
    throw Error(ErrorKind::kShape, "SiouLossOp: box must be 1 x 4");
  }
  const Matrix& b = box.value();
  const SiouResult r = SiouLossWithGrad({b(0, 0), b(0, 1), b(0, 2), b(0, 3)}, gt);
  Matrix out(1, 1);
  out(0, 0) = r.loss;
  Matrix grad(1, 4);
  grad << r.grad[0], r.grad[1], r.grad[2], r.grad[3];
  return box.tape()->Record(std::move(out), {box},
                            [box, grad](Tape& t, const Matrix& g) {
                              t.Accumulate(box, grad * g(0, 0));
                            });
}

}  // namespace darter::ad
