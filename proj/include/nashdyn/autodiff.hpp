// Reverse-mode automatic differentiation over an explicit operation tape.
//
// Values are dense matrices (scalars are 1x1). The tape records every
// operation in execution order; backward() runs one reverse sweep and
// accumulates adjoints. Only first-order derivatives are supported --
// Jacobians of gradient fields are obtained by finite differences on top of
// this engine (see gradient_engine.hpp).
#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "nashdyn/common.hpp"

namespace nashdyn::ad {

using Mat = Eigen::MatrixXd;

class Tape;

struct Var {
  int idx = -1;
  Tape* tape = nullptr;
  bool valid() const { return idx >= 0 && tape != nullptr; }
};

// Differentiable black box with a hand-written vector-Jacobian product.
// Used for expectations over finite outcome spaces (normal-form payoffs,
// poker game trees) where an explicit per-outcome subgraph would be wasteful.
struct MultiFn {
  virtual ~MultiFn() = default;
  virtual Mat forward(const std::vector<const Mat*>& xs) const = 0;
  // Accumulate d(output)/d(xs[k]) contributions into grads[k] (pre-sized,
  // zero-initialized by the caller); g is the adjoint of the output.
  virtual void vjp(const std::vector<const Mat*>& xs, const Mat& val, const Mat& g,
                   std::vector<Mat*>& grads) const = 0;
};

enum class Op : std::uint8_t {
  kConst,
  kInput,
  kAdd,
  kSub,
  kNeg,
  kMul,
  kDiv,
  kScalarMul,
  kScalarAdd,
  kMatMul,
  kTanh,
  kExp,
  kLog,
  kSigmoid,
  kSoftplus,
  kSoftmaxCols,
  kSquare,
  kMinElem,
  kSum,
  kMean,
  kDot,
  kSquaredNorm,
  kEntry,
  kSegment,
  kReshape,
  kConcatRow,
  kAddRowVec,
  kRowSum,
  kCustom,
};

struct Node {
  Op op;
  int a = -1, b = -1;
  double c0 = 0.0;      // scalar operand (scalar mul/add, softmax clip)
  int i0 = 0, i1 = 0;   // index/shape operands
  std::vector<int> ins;  // inputs for concat / custom ops
  const MultiFn* fn = nullptr;
  Mat val;
  Mat adj;
  bool adj_live = false;
};

class Tape {
 public:
  Tape() { nodes_.reserve(64); }

  int size() const { return static_cast<int>(nodes_.size()); }

  const Mat& val(Var v) const {
    require(v.tape == this && v.idx >= 0 && v.idx < static_cast<int>(nodes_.size()),
            "tape: variable does not belong to this tape");
    return nodes_[v.idx].val;
  }
  double scalar(Var v) const {
    const Mat& m = nodes_[v.idx].val;
    require(m.size() == 1, "scalar(): value is not 1x1");
    return m(0, 0);
  }

  // Adjoint of a node after backward(); zero matrix if the node was not
  // reached by the sweep.
  Mat adjoint(Var v) const {
    const Node& n = nodes_[v.idx];
    if (n.adj_live) return n.adj;
    return Mat::Zero(n.val.rows(), n.val.cols());
  }

  Var constant(Mat m) { return push(Op::kConst, std::move(m)); }
  Var input(Mat m) { return push(Op::kInput, std::move(m)); }

  // Runs one reverse sweep from scalar output f, accumulating adjoints.
  // Clears any adjoints from a previous sweep first.
  void backward(Var f) {
    require(f.valid() && f.tape == this, "backward(): variable not on this tape");
    const Node& fn = nodes_[f.idx];
    require(fn.val.size() == 1, "backward(): output must be a scalar");
    for (Node& n : nodes_) n.adj_live = false;
    seed(f.idx, Mat::Constant(1, 1, 1.0));
    for (int i = f.idx; i >= 0; --i) {
      Node& n = nodes_[i];
      if (!n.adj_live) continue;
      pull(i, n);
    }
  }

  // ---- op builders ----------------------------------------------------

  Var add(Var a, Var b) { return binary(Op::kAdd, a, b, val(a) + val(b)); }
  Var sub(Var a, Var b) { return binary(Op::kSub, a, b, val(a) - val(b)); }
  Var neg(Var a) { return unary(Op::kNeg, a, -val(a)); }
  Var mul(Var a, Var b) {
    same_shape(a, b, "mul");
    return binary(Op::kMul, a, b, val(a).cwiseProduct(val(b)));
  }
  Var div(Var a, Var b) {
    same_shape(a, b, "div");
    return binary(Op::kDiv, a, b, val(a).cwiseQuotient(val(b)));
  }
  Var smul(Var a, double c) {
    Var v = unary(Op::kScalarMul, a, c * val(a));
    nodes_[v.idx].c0 = c;
    return v;
  }
  Var sadd(Var a, double c) {
    Var v = unary(Op::kScalarAdd, a, val(a).array() + c);
    nodes_[v.idx].c0 = c;
    return v;
  }
  Var matmul(Var a, Var b) {
    require(val(a).cols() == val(b).rows(), "matmul: inner dimensions differ");
    return binary(Op::kMatMul, a, b, val(a) * val(b));
  }
  Var vtanh(Var a) { return unary(Op::kTanh, a, val(a).array().tanh()); }
  Var vexp(Var a) { return unary(Op::kExp, a, val(a).array().exp()); }
  Var vlog(Var a) { return unary(Op::kLog, a, val(a).array().log()); }
  Var sigmoid(Var a) {
    Mat m = (1.0 / (1.0 + (-val(a)).array().exp())).matrix();
    return unary(Op::kSigmoid, a, std::move(m));
  }
  // log(1 + exp(x)), computed stably.
  Var softplus(Var a) {
    Mat m = val(a).unaryExpr([](double x) {
      return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    });
    return unary(Op::kSoftplus, a, std::move(m));
  }
  // Column-wise softmax of logits clamped to [-clip, clip].
  Var softmax_cols(Var a, double clip = 30.0) {
    const Mat& x = val(a);
    Mat y(x.rows(), x.cols());
    for (int j = 0; j < x.cols(); ++j) {
      Eigen::VectorXd c = x.col(j).cwiseMax(-clip).cwiseMin(clip);
      double m = c.maxCoeff();
      Eigen::VectorXd e = (c.array() - m).exp();
      y.col(j) = e / e.sum();
    }
    Var v = unary(Op::kSoftmaxCols, a, std::move(y));
    nodes_[v.idx].c0 = clip;
    return v;
  }
  Var square(Var a) { return unary(Op::kSquare, a, val(a).cwiseProduct(val(a))); }
  // Elementwise minimum; ties route the gradient to the first argument.
  Var min_elem(Var a, Var b) {
    same_shape(a, b, "min_elem");
    return binary(Op::kMinElem, a, b, val(a).cwiseMin(val(b)));
  }
  Var sum(Var a) { return unary(Op::kSum, a, Mat::Constant(1, 1, val(a).sum())); }
  Var mean(Var a) { return unary(Op::kMean, a, Mat::Constant(1, 1, val(a).mean())); }
  Var dot(Var a, Var b) {
    same_shape(a, b, "dot");
    return binary(Op::kDot, a, b, Mat::Constant(1, 1, val(a).cwiseProduct(val(b)).sum()));
  }
  Var squared_norm(Var a) {
    return unary(Op::kSquaredNorm, a, Mat::Constant(1, 1, val(a).squaredNorm()));
  }
  Var entry(Var a, int r, int c) {
    require(r >= 0 && r < val(a).rows() && c >= 0 && c < val(a).cols(),
            "entry: index out of range");
    Var v = unary(Op::kEntry, a, Mat::Constant(1, 1, val(a)(r, c)));
    nodes_[v.idx].i0 = r;
    nodes_[v.idx].i1 = c;
    return v;
  }
  // Contiguous slice of a row or column vector, preserving orientation.
  Var segment(Var a, int off, int len) {
    const Mat& x = val(a);
    require(x.rows() == 1 || x.cols() == 1, "segment: input must be a vector");
    bool row = x.rows() == 1;
    int n = static_cast<int>(x.size());
    require(off >= 0 && len > 0 && off + len <= n, "segment: slice out of range");
    Mat m = row ? Mat(x.block(0, off, 1, len)) : Mat(x.block(off, 0, len, 1));
    Var v = unary(Op::kSegment, a, std::move(m));
    nodes_[v.idx].i0 = off;
    nodes_[v.idx].i1 = len;
    return v;
  }
  // Column-major reshape.
  Var reshape(Var a, int rows, int cols) {
    const Mat& x = val(a);
    require(rows * cols == x.size(), "reshape: element count mismatch");
    Mat m = Eigen::Map<const Mat>(x.data(), rows, cols);
    Var v = unary(Op::kReshape, a, std::move(m));
    nodes_[v.idx].i0 = rows;
    nodes_[v.idx].i1 = cols;
    return v;
  }
  // Concatenates row vectors into one row vector.
  Var concat_row(const std::vector<Var>& parts) {
    require(!parts.empty(), "concat_row: no inputs");
    int total = 0;
    for (Var p : parts) {
      require(val(p).rows() == 1, "concat_row: inputs must be row vectors");
      total += static_cast<int>(val(p).cols());
    }
    Mat m(1, total);
    int off = 0;
    std::vector<int> ins;
    ins.reserve(parts.size());
    for (Var p : parts) {
      int len = static_cast<int>(val(p).cols());
      m.block(0, off, 1, len) = val(p);
      off += len;
      ins.push_back(p.idx);
    }
    Var v = push(Op::kConcatRow, std::move(m));
    nodes_[v.idx].ins = std::move(ins);
    return v;
  }
  // Adds a 1 x n row vector to every row of an m x n matrix.
  Var add_rowvec(Var a, Var b) {
    require(val(b).rows() == 1 && val(b).cols() == val(a).cols(),
            "add_rowvec: shape mismatch");
    Mat m = val(a).rowwise() + val(b).row(0);
    return binary(Op::kAddRowVec, a, b, std::move(m));
  }
  Var row_sum(Var a) {
    Mat m = val(a).rowwise().sum();
    return unary(Op::kRowSum, a, std::move(m));
  }
  // Applies a MultiFn; fn must outlive the tape.
  Var custom(const MultiFn* fn, const std::vector<Var>& inputs) {
    std::vector<const Mat*> xs;
    std::vector<int> ins;
    xs.reserve(inputs.size());
    for (Var p : inputs) {
      require(p.valid() && p.tape == this, "custom: input not on this tape");
      xs.push_back(&val(p));
      ins.push_back(p.idx);
    }
    Mat m = fn->forward(xs);
    Var v = push(Op::kCustom, std::move(m));
    nodes_[v.idx].ins = std::move(ins);
    nodes_[v.idx].fn = fn;
    return v;
  }

 private:
  std::vector<Node> nodes_;

  Var push(Op op, Mat m) {
    require_numeric(m.allFinite(), "tape: non-finite value produced");
    Node n;
    n.op = op;
    n.val = std::move(m);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1, this};
  }

  Var unary(Op op, Var a, Mat m) {
    require(a.valid() && a.tape == this, "op input not on this tape");
    Var v = push(op, std::move(m));
    nodes_[v.idx].a = a.idx;
    return v;
  }

  Var binary(Op op, Var a, Var b, Mat m) {
    require(a.valid() && b.valid() && a.tape == this && b.tape == this,
            "op inputs not on this tape");
    Var v = push(op, std::move(m));
    nodes_[v.idx].a = a.idx;
    nodes_[v.idx].b = b.idx;
    return v;
  }

  void same_shape(Var a, Var b, const char* what) {
    require(val(a).rows() == val(b).rows() && val(a).cols() == val(b).cols(),
            std::string(what) + ": shape mismatch");
  }

  void seed(int idx, Mat g) {
    Node& n = nodes_[idx];
    if (n.op == Op::kConst) return;  // constants never need adjoints
    if (!n.adj_live) {
      n.adj = std::move(g);
      n.adj_live = true;
    } else {
      n.adj += g;
    }
  }

  void acc(int idx, const Mat& g) {
    Node& n = nodes_[idx];
    if (n.op == Op::kConst) return;
    if (!n.adj_live) {
      n.adj = g;
      n.adj_live = true;
    } else {
      n.adj += g;
    }
  }

  void pull(int i, Node& n) {
    const Mat& g = n.adj;
    switch (n.op) {
      case Op::kConst:
      case Op::kInput:
        break;
      case Op::kAdd:
        acc(n.a, g);
        acc(n.b, g);
        break;
      case Op::kSub:
        acc(n.a, g);
        acc(n.b, -g);
        break;
      case Op::kNeg:
        acc(n.a, -g);
        break;
      case Op::kMul:
        acc(n.a, g.cwiseProduct(nodes_[n.b].val));
        acc(n.b, g.cwiseProduct(nodes_[n.a].val));
        break;
      case Op::kDiv:
        acc(n.a, g.cwiseQuotient(nodes_[n.b].val));
        acc(n.b, -g.cwiseProduct(n.val).cwiseQuotient(nodes_[n.b].val));
        break;
      case Op::kScalarMul:
        acc(n.a, n.c0 * g);
        break;
      case Op::kScalarAdd:
        acc(n.a, g);
        break;
      case Op::kMatMul:
        acc(n.a, g * nodes_[n.b].val.transpose());
        acc(n.b, nodes_[n.a].val.transpose() * g);
        break;
      case Op::kTanh:
        acc(n.a, g.cwiseProduct((1.0 - n.val.array().square()).matrix()));
        break;
      case Op::kExp:
        acc(n.a, g.cwiseProduct(n.val));
        break;
      case Op::kLog:
        acc(n.a, g.cwiseQuotient(nodes_[n.a].val));
        break;
      case Op::kSigmoid:
        acc(n.a, g.cwiseProduct(n.val.cwiseProduct((1.0 - n.val.array()).matrix())));
        break;
      case Op::kSoftplus: {
        Mat s = (1.0 / (1.0 + (-nodes_[n.a].val).array().exp())).matrix();
        acc(n.a, g.cwiseProduct(s));
        break;
      }
      case Op::kSoftmaxCols: {
        const Mat& x = nodes_[n.a].val;
        Mat d(x.rows(), x.cols());
        for (int j = 0; j < x.cols(); ++j) {
          double gy = g.col(j).dot(n.val.col(j));
          d.col(j) = n.val.col(j).cwiseProduct((g.col(j).array() - gy).matrix());
        }
        // Clamped logits contribute no gradient.
        d = (x.array().abs() <= n.c0).select(d, Mat::Zero(x.rows(), x.cols()));
        acc(n.a, d);
        break;
      }
      case Op::kSquare:
        acc(n.a, 2.0 * g.cwiseProduct(nodes_[n.a].val));
        break;
      case Op::kMinElem: {
        const Mat& a = nodes_[n.a].val;
        const Mat& b = nodes_[n.b].val;
        Mat z = Mat::Zero(g.rows(), g.cols());
        acc(n.a, (a.array() <= b.array()).select(g, z));
        acc(n.b, (a.array() > b.array()).select(g, z));
        break;
      }
      case Op::kSum:
        acc(n.a, Mat::Constant(nodes_[n.a].val.rows(), nodes_[n.a].val.cols(), g(0, 0)));
        break;
      case Op::kMean:
        acc(n.a, Mat::Constant(nodes_[n.a].val.rows(), nodes_[n.a].val.cols(),
                               g(0, 0) / static_cast<double>(nodes_[n.a].val.size())));
        break;
      case Op::kDot:
        acc(n.a, g(0, 0) * nodes_[n.b].val);
        acc(n.b, g(0, 0) * nodes_[n.a].val);
        break;
      case Op::kSquaredNorm:
        acc(n.a, 2.0 * g(0, 0) * nodes_[n.a].val);
        break;
      case Op::kEntry: {
        Mat d = Mat::Zero(nodes_[n.a].val.rows(), nodes_[n.a].val.cols());
        d(n.i0, n.i1) = g(0, 0);
        acc(n.a, d);
        break;
      }
      case Op::kSegment: {
        const Mat& x = nodes_[n.a].val;
        Mat d = Mat::Zero(x.rows(), x.cols());
        if (x.rows() == 1)
          d.block(0, n.i0, 1, n.i1) = g;
        else
          d.block(n.i0, 0, n.i1, 1) = g;
        acc(n.a, d);
        break;
      }
      case Op::kReshape: {
        const Mat& x = nodes_[n.a].val;
        acc(n.a, Eigen::Map<const Mat>(g.data(), x.rows(), x.cols()));
        break;
      }
      case Op::kConcatRow: {
        int off = 0;
        for (int in : n.ins) {
          int len = static_cast<int>(nodes_[in].val.cols());
          acc(in, g.block(0, off, 1, len));
          off += len;
        }
        break;
      }
      case Op::kAddRowVec:
        acc(n.a, g);
        acc(n.b, g.colwise().sum());
        break;
      case Op::kRowSum:
        acc(n.a, g.replicate(1, nodes_[n.a].val.cols()));
        break;
      case Op::kCustom: {
        std::vector<const Mat*> xs;
        std::vector<Mat> dxs;
        xs.reserve(n.ins.size());
        dxs.reserve(n.ins.size());
        for (int in : n.ins) {
          xs.push_back(&nodes_[in].val);
          dxs.emplace_back(Mat::Zero(nodes_[in].val.rows(), nodes_[in].val.cols()));
        }
        std::vector<Mat*> grads;
        grads.reserve(dxs.size());
        for (Mat& d : dxs) grads.push_back(&d);
        n.fn->vjp(xs, n.val, g, grads);
        for (std::size_t k = 0; k < n.ins.size(); ++k) acc(n.ins[k], dxs[k]);
        break;
      }
    }
    (void)i;
  }
};

// ---- operator sugar ----------------------------------------------------

inline Var operator+(Var a, Var b) { return a.tape->add(a, b); }
inline Var operator-(Var a, Var b) { return a.tape->sub(a, b); }
inline Var operator-(Var a) { return a.tape->neg(a); }
inline Var operator*(Var a, Var b) { return a.tape->mul(a, b); }
inline Var operator/(Var a, Var b) { return a.tape->div(a, b); }
inline Var operator*(double c, Var a) { return a.tape->smul(a, c); }
inline Var operator*(Var a, double c) { return a.tape->smul(a, c); }
inline Var operator+(Var a, double c) { return a.tape->sadd(a, c); }
inline Var operator+(double c, Var a) { return a.tape->sadd(a, c); }
inline Var operator-(Var a, double c) { return a.tape->sadd(a, -c); }
inline Var operator-(double c, Var a) { return a.tape->sadd(a.tape->neg(a), c); }

}  // namespace nashdyn::ad
