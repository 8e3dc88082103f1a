// Gradient utilities on top of the tape: exact reverse-mode gradients,
// central finite differences, Gaussian-smoothing pseudogradients, and finite
// difference Jacobians of vector fields.
#pragma once

#include <cmath>
#include <functional>
#include <utility>

#include <Eigen/Dense>

#include "nashdyn/autodiff.hpp"
#include "nashdyn/common.hpp"
#include "nashdyn/game.hpp"
#include "nashdyn/rng.hpp"

namespace nashdyn {

// Scalar function built on a tape from a 1 x d row input.
using TapeFn = std::function<ad::Var(ad::Tape&, ad::Var)>;

inline double eval_fn(const TapeFn& f, const VectorXd& x) {
  ad::Tape t;
  ad::Var in = t.input(x.transpose());
  return t.scalar(f(t, in));
}

// Exact reverse-mode gradient.
inline VectorXd grad(const TapeFn& f, const VectorXd& x) {
  ad::Tape t;
  ad::Var in = t.input(x.transpose());
  ad::Var out = f(t, in);
  t.backward(out);
  VectorXd g = t.adjoint(in).transpose();
  require_numeric(g.allFinite(), "grad: non-finite gradient");
  return g;
}

// Central finite differences with per-coordinate step h*(1+|x_c|).
inline VectorXd fd_gradient(const TapeFn& f, const VectorXd& x, double h = 1e-5) {
  require(h > 0, "fd_gradient: step must be positive");
  VectorXd g(x.size());
  VectorXd xp = x;
  for (int c = 0; c < x.size(); ++c) {
    const double hc = h * (1.0 + std::abs(x[c]));
    xp[c] = x[c] + hc;
    double fp = eval_fn(f, xp);
    xp[c] = x[c] - hc;
    double fm = eval_fn(f, xp);
    xp[c] = x[c];
    g[c] = (fp - fm) / (2.0 * hc);
  }
  require_numeric(g.allFinite(), "fd_gradient: non-finite gradient");
  return g;
}

struct GradCheck {
  double max_abs_err = 0;  // max |autodiff - fd|
  double rel_err = 0;      // max_abs_err / (1 + ||autodiff||_inf)
  VectorXd autodiff, fd;
};

inline GradCheck check_gradient(const TapeFn& f, const VectorXd& x, double h = 1e-5) {
  GradCheck r;
  r.autodiff = grad(f, x);
  r.fd = fd_gradient(f, x, h);
  r.max_abs_err = (r.autodiff - r.fd).cwiseAbs().maxCoeff();
  r.rel_err = r.max_abs_err / (1.0 + r.autodiff.cwiseAbs().maxCoeff());
  return r;
}

// Monte-Carlo estimator of the gradient of f smoothed by an isotropic
// Gaussian of scale sigma: mean over samples of (f(x+se)-f(x-se))/(2s) * e.
// Unbiased for the smoothed gradient; exactly zero for constant f.
inline VectorXd pseudogradient(const TapeFn& f, const VectorXd& x, double sigma,
                               int samples, Rng& rng) {
  require(sigma > 0, "pseudogradient: sigma must be positive");
  require(samples > 0, "pseudogradient: need at least one sample");
  VectorXd g = VectorXd::Zero(x.size());
  int failures = 0;
  for (int s = 0; s < samples; ++s) {
    VectorXd eps = rng.gaussian_vector(static_cast<int>(x.size()));
    double fp = eval_fn(f, x + sigma * eps);
    double fm = eval_fn(f, x - sigma * eps);
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      if (++failures > 20)
        throw NumericError("pseudogradient: repeated non-finite evaluations");
      --s;
      continue;
    }
    g += ((fp - fm) / (2.0 * sigma)) * eps;
  }
  return g / static_cast<double>(samples);
}

enum class GradMode { kExact, kFiniteDifference, kPseudogradient };

struct GradientOracle {
  GradMode mode = GradMode::kExact;
  double fd_step = 1e-5;
  double sigma = 1e-2;
  int mc_samples = 100;

  void validate() const {
    require(fd_step > 0, "GradientOracle: fd_step must be positive");
    require(sigma > 0, "GradientOracle: sigma must be positive");
    require(mc_samples > 0, "GradientOracle: mc_samples must be positive");
  }

  VectorXd gradient(const TapeFn& f, const VectorXd& x, Rng rng = Rng(0)) const {
    validate();
    switch (mode) {
      case GradMode::kExact: return grad(f, x);
      case GradMode::kFiniteDifference: return fd_gradient(f, x, fd_step);
      case GradMode::kPseudogradient: return pseudogradient(f, x, sigma, mc_samples, rng);
    }
    throw ConfigError("GradientOracle: unknown mode");
  }
};

// ---- vector fields ---------------------------------------------------------

using FieldFn = std::function<VectorXd(const VectorXd&)>;

struct FieldJacobian {
  MatrixXd j;                // d x d, j(r,c) = d field_r / d x_c
  std::vector<int> offsets;  // player block offsets (size players+1)
};

// Central finite differences of a vector field, column by column, with step
// h*(1+|x_c|) per coordinate.
inline FieldJacobian field_jacobian(const FieldFn& field, const VectorXd& x,
                                    std::vector<int> offsets, double h = 1e-5) {
  require(h > 0, "field_jacobian: step must be positive");
  const int d = static_cast<int>(x.size());
  require(!offsets.empty() && offsets.front() == 0 && offsets.back() == d,
          "field_jacobian: offsets must tile the vector");
  FieldJacobian out;
  out.offsets = std::move(offsets);
  out.j.resize(d, d);
  VectorXd xp = x;
  for (int c = 0; c < d; ++c) {
    const double hc = h * (1.0 + std::abs(x[c]));
    xp[c] = x[c] + hc;
    VectorXd fp = field(xp);
    xp[c] = x[c] - hc;
    VectorXd fm = field(xp);
    xp[c] = x[c];
    require_numeric(fp.size() == d && fm.size() == d, "field_jacobian: field size mismatch");
    out.j.col(c) = (fp - fm) / (2.0 * hc);
  }
  require_numeric(out.j.allFinite(), "field_jacobian: non-finite Jacobian");
  return out;
}

// Antisymmetric part J_a = (J - J^T)/2 and off-diagonal part J_o (per-player
// diagonal blocks zeroed). The diagonal is interpreted blockwise.
inline std::pair<MatrixXd, MatrixXd> jacobian_parts(const FieldJacobian& fj) {
  MatrixXd ja = 0.5 * (fj.j - fj.j.transpose());
  MatrixXd jo = fj.j;
  const int players = static_cast<int>(fj.offsets.size()) - 1;
  for (int i = 0; i < players; ++i) {
    const int off = fj.offsets[i];
    const int len = fj.offsets[i + 1] - off;
    jo.block(off, off, len, len).setZero();
  }
  return {std::move(ja), std::move(jo)};
}

// ---- game-aware gradients ---------------------------------------------------

// Simultaneous gradient: v_i = grad of player i's utility in its own block.
inline VectorXd simultaneous_gradient(const Game& g, const ParamVector& x, Rng rng) {
  UtilityGrads ug = utility_gradients(g, x, rng);
  VectorXd v(g.total_dim());
  for (int i = 0; i < g.players; ++i)
    v.segment(x.offsets[i], x.dim(i)) =
        ug.grads.block(i, x.offsets[i], 1, x.dim(i)).transpose();
  return v;
}

// The simultaneous gradient as a FieldFn (shared noise across evaluations).
inline FieldFn sim_grad_field(const Game& g, Rng noise) {
  std::vector<int> dims = g.dims;
  return [&g, dims, noise](const VectorXd& x) {
    return simultaneous_gradient(g, ParamVector(x, dims), noise);
  };
}

}  // namespace nashdyn
