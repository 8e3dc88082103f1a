// Multilayer perceptrons over flat parameter vectors.
//
// Parameter layout per layer: weight matrix (fan_in x fan_out, column-major)
// followed by the bias row (1 x fan_out). Hidden activations are tanh; the
// output layer is linear (callers squash with sigmoid/softmax as needed).
#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "nashdyn/autodiff.hpp"
#include "nashdyn/common.hpp"
#include "nashdyn/rng.hpp"

namespace nashdyn {

struct Mlp {
  std::vector<int> sizes;  // e.g. {2, 32, 1}

  explicit Mlp(std::vector<int> layer_sizes) : sizes(std::move(layer_sizes)) {
    require(sizes.size() >= 2, "Mlp: need at least input and output sizes");
    for (int s : sizes) require(s > 0, "Mlp: layer sizes must be positive");
  }

  int layers() const { return static_cast<int>(sizes.size()) - 1; }

  int n_params() const {
    int n = 0;
    for (int l = 0; l < layers(); ++l) n += (sizes[l] + 1) * sizes[l + 1];
    return n;
  }

  // He initialization: weights ~ N(0, 2/fan_in), biases zero. Weight entries
  // are drawn in storage (column-major) order so results are reproducible.
  Eigen::VectorXd he_init(Rng& rng) const {
    Eigen::VectorXd w(n_params());
    int off = 0;
    for (int l = 0; l < layers(); ++l) {
      const int fi = sizes[l], fo = sizes[l + 1];
      const double sd = std::sqrt(2.0 / static_cast<double>(fi));
      for (int k = 0; k < fi * fo; ++k) w[off + k] = sd * rng.gaussian();
      off += fi * fo;
      w.segment(off, fo).setZero();
      off += fo;
    }
    return w;
  }

  // Forward pass on the tape. params: 1 x n_params row; x: batch x sizes[0].
  ad::Var forward(ad::Tape& t, ad::Var params, ad::Var x) const {
    require(t.val(params).rows() == 1 && t.val(params).cols() == n_params(),
            "Mlp::forward: parameter row size mismatch");
    require(t.val(x).cols() == sizes[0], "Mlp::forward: input width mismatch");
    ad::Var h = x;
    int off = 0;
    for (int l = 0; l < layers(); ++l) {
      const int fi = sizes[l], fo = sizes[l + 1];
      ad::Var w = t.reshape(t.segment(params, off, fi * fo), fi, fo);
      off += fi * fo;
      ad::Var b = t.segment(params, off, fo);
      off += fo;
      h = t.add_rowvec(t.matmul(h, w), b);
      if (l + 1 < layers()) h = t.vtanh(h);
    }
    return h;
  }

  // Numeric forward pass (no tape), for sampling outside method steps.
  Eigen::MatrixXd forward_value(const Eigen::VectorXd& params, const Eigen::MatrixXd& x) const {
    require(params.size() == n_params(), "Mlp::forward_value: parameter size mismatch");
    require(x.cols() == sizes[0], "Mlp::forward_value: input width mismatch");
    Eigen::MatrixXd h = x;
    int off = 0;
    for (int l = 0; l < layers(); ++l) {
      const int fi = sizes[l], fo = sizes[l + 1];
      Eigen::Map<const Eigen::MatrixXd> w(params.data() + off, fi, fo);
      off += fi * fo;
      Eigen::Map<const Eigen::RowVectorXd> b(params.data() + off, fo);
      off += fo;
      h = (h * w).rowwise() + b;
      if (l + 1 < layers()) h = h.array().tanh();
    }
    return h;
  }
};

inline Eigen::MatrixXd sigmoid_value(const Eigen::MatrixXd& x) {
  return (1.0 / (1.0 + (-x).array().exp())).matrix();
}

// Numeric softmax with the same +/-30 logit clamp used on the tape.
inline Eigen::VectorXd softmax_clip(const Eigen::VectorXd& logits, double clip = 30.0) {
  Eigen::VectorXd c = logits.cwiseMax(-clip).cwiseMin(clip);
  Eigen::VectorXd e = (c.array() - c.maxCoeff()).exp();
  return e / e.sum();
}

}  // namespace nashdyn
