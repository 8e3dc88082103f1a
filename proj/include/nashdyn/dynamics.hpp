// The baseline update rules and their shared Euler discretization
// x' = x + eta * field(x).
//
// Every field is built from the simultaneous gradient v (each player's
// own-utility gradient), the finite-difference Jacobian J of v, or the
// Nikaido-Isoda function phi. Within one step all evaluations share one noise
// copy, so probes, Jacobian columns, and deviation utilities see the same
// random batch.
#pragma once

#include <algorithm>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nashdyn/approxed.hpp"
#include "nashdyn/games.hpp"
#include "nashdyn/gradient_engine.hpp"

namespace nashdyn {

struct MethodConfig {
  std::string method = "sg";
  double eta = 1e-3;
  double gamma = 1e-1;
  int ensemble_size = 10;
  int brf_hidden = 32;

  void validate() const {
    require(eta > 0, "MethodConfig: eta must be positive");
    require(gamma > 0, "MethodConfig: gamma must be positive");
    require(ensemble_size >= 1, "MethodConfig: ensemble_size must be >= 1");
    require(brf_hidden >= 1, "MethodConfig: brf_hidden must be >= 1");
  }
};

inline const std::vector<std::string>& method_ids() {
  static const std::vector<std::string> ids = {"sg",   "eg",   "op",  "co",  "sga",
                                               "sla",  "la",   "lola", "pcgd", "ed",
                                               "gni",  "eda",  "brf", "bre"};
  return ids;
}

// ---- simultaneous-gradient family -------------------------------------------

inline VectorXd field_sg(const Game& g, const ParamVector& x, Rng noise = Rng(0)) {
  return simultaneous_gradient(g, x, noise);
}

inline VectorXd field_eg(const Game& g, const ParamVector& x, double gamma,
                         Rng noise = Rng(0)) {
  VectorXd v = simultaneous_gradient(g, x, noise);
  return simultaneous_gradient(g, g.params(x.flat + gamma * v), noise);
}

namespace detail {

inline FieldJacobian sim_grad_jacobian(const Game& g, const ParamVector& x, Rng noise) {
  return field_jacobian(sim_grad_field(g, noise), x.flat, x.offsets);
}

}  // namespace detail

inline VectorXd field_co(const Game& g, const ParamVector& x, double gamma,
                         Rng noise = Rng(0)) {
  VectorXd v = simultaneous_gradient(g, x, noise);
  FieldJacobian fj = detail::sim_grad_jacobian(g, x, noise);
  return v - gamma * (fj.j.transpose() * v);
}

inline VectorXd field_sga(const Game& g, const ParamVector& x, double gamma,
                          Rng noise = Rng(0)) {
  VectorXd v = simultaneous_gradient(g, x, noise);
  auto [ja, jo] = jacobian_parts(detail::sim_grad_jacobian(g, x, noise));
  return v - gamma * (ja.transpose() * v);
}

inline VectorXd field_sla(const Game& g, const ParamVector& x, double gamma,
                          Rng noise = Rng(0)) {
  VectorXd v = simultaneous_gradient(g, x, noise);
  FieldJacobian fj = detail::sim_grad_jacobian(g, x, noise);
  return v + gamma * (fj.j * v);
}

inline VectorXd field_la(const Game& g, const ParamVector& x, double gamma,
                         Rng noise = Rng(0)) {
  VectorXd v = simultaneous_gradient(g, x, noise);
  auto [ja, jo] = jacobian_parts(detail::sim_grad_jacobian(g, x, noise));
  return v + gamma * (jo * v);
}

// Look-ahead against opponents who take one gradient step. Block i is
//   v_i + gamma (J_o v)_i + gamma sum_{j != i} (dv_j/dx_i)^T grad_{x_j} u_i,
// the first-order expansion of grad_{x_i} u_i(x_i, x_{-i} + gamma v_{-i}).
inline VectorXd field_lola(const Game& g, const ParamVector& x, double gamma,
                           Rng noise = Rng(0)) {
  UtilityGrads ug = utility_gradients(g, x, noise);
  VectorXd v(x.dim());
  for (int i = 0; i < g.players; ++i)
    v.segment(x.offsets[i], x.dim(i)) =
        ug.grads.row(i).segment(x.offsets[i], x.dim(i)).transpose();
  FieldJacobian fj = detail::sim_grad_jacobian(g, x, noise);
  auto [ja, jo] = jacobian_parts(fj);
  VectorXd out = v + gamma * (jo * v);
  for (int i = 0; i < g.players; ++i) {
    const int oi = x.offsets[i], di = x.dim(i);
    for (int j = 0; j < g.players; ++j) {
      if (j == i) continue;
      const int oj = x.offsets[j], dj = x.dim(j);
      // (dv_j/dx_i)^T = J(block j, block i)^T
      out.segment(oi, di) += gamma * fj.j.block(oj, oi, dj, di).transpose() *
                             ug.grads.row(i).segment(oj, dj).transpose();
    }
  }
  return out;
}

inline VectorXd field_pcgd(const Game& g, const ParamVector& x, double gamma,
                           Rng noise = Rng(0)) {
  require(x.dim() <= 2000, "pcgd: parameter space too large for a dense solve");
  VectorXd v = simultaneous_gradient(g, x, noise);
  auto [ja, jo] = jacobian_parts(detail::sim_grad_jacobian(g, x, noise));
  MatrixXd a = MatrixXd::Identity(x.dim(), x.dim()) - gamma * jo;
  Eigen::PartialPivLU<MatrixXd> lu(a);
  require_numeric(lu.rcond() > 1e-12, "pcgd: ill-conditioned preconditioner");
  return lu.solve(v);
}

// ---- Nikaido-Isoda family ----------------------------------------------------

namespace detail {

// Partial gradients of phi(x, y) in x and y, stacked per the profile layout.
inline std::pair<VectorXd, VectorXd> phi_partials(const Game& g, const ParamVector& x,
                                                  const ParamVector& y, Rng noise) {
  ad::Tape t;
  std::vector<ad::Var> xv = tape_inputs(t, g, x);
  std::vector<ad::Var> yv(g.players);
  for (int i = 0; i < g.players; ++i) yv[i] = t.input(y.block(i).transpose());
  ad::Var phi = phi_on_tape(t, g, xv, yv, noise);
  t.backward(phi);
  VectorXd gx(x.dim()), gy(x.dim());
  for (int i = 0; i < g.players; ++i) {
    gx.segment(x.offsets[i], x.dim(i)) = t.adjoint(xv[i]).transpose();
    gy.segment(x.offsets[i], x.dim(i)) = t.adjoint(yv[i]).transpose();
  }
  return {std::move(gx), std::move(gy)};
}

}  // namespace detail

// Exploitability descent with exact best responses, available on games with a
// payoff-tensor or Kuhn oracle. The field is -grad_x phi(x, y*) holding the
// best responses y* fixed (an envelope subgradient); a player whose regret is
// not positive keeps its current strategy as y*_i, so the field vanishes at an
// exact equilibrium.
inline VectorXd field_ed(const Game& g, const ParamVector& x) {
  if (g.nf) {
    std::vector<VectorXd> probs = nf_probs(g, x);
    std::vector<double> cur = g.nf->expected(probs);
    std::vector<VectorXd> cand(g.players);
    for (int i = 0; i < g.players; ++i) {
      VectorXd m = g.nf->marginal(i, probs);
      int best = 0;
      for (int a = 1; a < m.size(); ++a)
        if (m[a] > m[best]) best = a;
      if (m[best] - cur[i] <= 0) {
        cand[i] = probs[i];
      } else {
        cand[i] = VectorXd::Zero(m.size());
        cand[i][best] = 1.0;
      }
    }
    ad::Tape t;
    std::vector<ad::Var> xv = tape_inputs(t, g, x);
    std::vector<ad::Var> cols = detail::softmax_columns(t, xv, g.nf->shape);
    std::vector<ad::Var> base = g.nf->utilities_on_tape(t, cols);
    ad::Var phi{};
    for (int i = 0; i < g.players; ++i) {
      std::vector<ad::Var> mixed = cols;
      mixed[i] = t.constant(cand[i]);
      ad::Var gain = t.sub(g.nf->utilities_on_tape(t, mixed)[i], base[i]);
      phi = (i == 0) ? gain : t.add(phi, gain);
    }
    t.backward(phi);
    VectorXd field(x.dim());
    for (int i = 0; i < g.players; ++i)
      field.segment(x.offsets[i], x.dim(i)) = -t.adjoint(xv[i]).transpose();
    return field;
  }
  if (g.kuhn) {
    const KuhnSpec& spec = *g.kuhn;
    std::vector<MatrixXd> probs = kuhn_probs(spec, x);
    std::vector<double> cur = spec.expected(probs);
    std::vector<MatrixXd> cand(g.players);
    for (int i = 0; i < g.players; ++i) {
      auto [value, pure] = spec.best_response(i, probs);
      cand[i] = (value - cur[i] <= 0) ? probs[i] : pure;
    }
    ad::Tape t;
    std::vector<ad::Var> xv = tape_inputs(t, g, x);
    std::vector<ad::Var> mats(g.players);
    for (int i = 0; i < g.players; ++i)
      mats[i] = t.softmax_cols(t.reshape(xv[i], 2, spec.n_sets(i)));
    std::vector<ad::Var> base = spec.utilities_on_tape(t, mats);
    ad::Var phi{};
    for (int i = 0; i < g.players; ++i) {
      std::vector<ad::Var> mixed = mats;
      mixed[i] = t.constant(cand[i]);
      ad::Var gain = t.sub(spec.utilities_on_tape(t, mixed)[i], base[i]);
      phi = (i == 0) ? gain : t.add(phi, gain);
    }
    t.backward(phi);
    VectorXd field(x.dim());
    for (int i = 0; i < g.players; ++i)
      field.segment(x.offsets[i], x.dim(i)) = -t.adjoint(xv[i]).transpose();
    return field;
  }
  throw ConfigError("ed: game '" + g.id + "' has no exact best-response oracle");
}

// Exploitability descent against local best responses y = x + gamma v. The
// field is the full derivative of phi(x, x + gamma v(x)):
//   -[grad_x phi + (I + gamma J)^T grad_y phi].
inline VectorXd field_gni(const Game& g, const ParamVector& x, double gamma,
                          Rng noise = Rng(0)) {
  VectorXd v = simultaneous_gradient(g, x, noise);
  ParamVector y = g.params(x.flat + gamma * v);
  auto [gx, gy] = detail::phi_partials(g, x, y, noise);
  FieldJacobian fj = detail::sim_grad_jacobian(g, x, noise);
  return -(gx + gy + gamma * (fj.j.transpose() * gy));
}

// Extragradient on inf_x sup_y phi(x, y): probe both blocks with step gamma,
// then step from the original point using the midpoint gradients.
inline std::pair<ParamVector, ParamVector> step_eda(const Game& g, const ParamVector& x,
                                                    const ParamVector& y, double eta,
                                                    double gamma, Rng noise = Rng(0)) {
  require(eta >= 0 && gamma >= 0, "step_eda: negative step size");
  auto [gx, gy] = detail::phi_partials(g, x, y, noise);
  ParamVector xm = g.params(x.flat - gamma * gx);
  ParamVector ym = g.params(y.flat + gamma * gy);
  require_numeric(xm.all_finite() && ym.all_finite(), "eda: non-finite midpoint");
  auto [gx2, gy2] = detail::phi_partials(g, xm, ym, noise);
  return {g.params(x.flat - eta * gx2), g.params(y.flat + eta * gy2)};
}

// ---- uniform stepping --------------------------------------------------------

inline bool method_needs_oracle(const std::string& id) { return id == "ed"; }

inline bool method_supported(const Game& g, const std::string& id) {
  if (std::find(method_ids().begin(), method_ids().end(), id) == method_ids().end())
    return false;
  if (method_needs_oracle(id)) return g.nf != nullptr || g.kuhn != nullptr;
  return true;
}

// Owns whatever state a method carries across steps (previous gradient,
// deviation profile, hypernetwork, ensemble) and applies one discretized step.
struct Stepper {
  const Game* game = nullptr;
  MethodConfig cfg;
  std::optional<VectorXd> v_prev;    // op
  std::optional<ParamVector> eda_y;  // eda
  std::optional<Brf> brf;            // brf
  std::optional<BreEnsemble> bre;    // bre

  static Stepper make(const Game& g, const MethodConfig& cfg, Rng& init_rng) {
    cfg.validate();
    require(method_supported(g, cfg.method),
            "method '" + cfg.method + "' is not available on game '" + g.id + "'");
    Stepper s;
    s.game = &g;
    s.cfg = cfg;
    if (cfg.method == "brf") s.brf = Brf::make(g, cfg.brf_hidden, init_rng);
    if (cfg.method == "bre") s.bre = BreEnsemble::make(g, cfg.ensemble_size, init_rng);
    return s;
  }

  ParamVector step(const ParamVector& x, double eta, Rng noise) {
    const Game& g = *game;
    const std::string& m = cfg.method;
    if (m == "brf") {
      auto [x2, b2] = brf_step(g, x, *brf, eta, noise);
      brf = std::move(b2);
      return x2;
    }
    if (m == "bre") {
      auto [x2, e2] = bre_step(g, x, *bre, eta, noise);
      bre = std::move(e2);
      return x2;
    }
    if (m == "eda") {
      if (!eda_y) eda_y = x;  // deviation profile starts at the current profile
      auto [x2, y2] = step_eda(g, x, *eda_y, eta, cfg.gamma, noise);
      eda_y = std::move(y2);
      return x2;
    }
    if (m == "op") {
      VectorXd v = field_sg(g, x, noise);
      require_numeric(v.allFinite(), "op: non-finite field");
      if (!v_prev) v_prev = v;  // first step reduces to sg
      VectorXd x2 = x.flat + eta * v + cfg.gamma * (v - *v_prev);
      v_prev = std::move(v);
      return g.params(std::move(x2));
    }
    VectorXd f;
    if (m == "sg") f = field_sg(g, x, noise);
    else if (m == "eg") f = field_eg(g, x, cfg.gamma, noise);
    else if (m == "co") f = field_co(g, x, cfg.gamma, noise);
    else if (m == "sga") f = field_sga(g, x, cfg.gamma, noise);
    else if (m == "sla") f = field_sla(g, x, cfg.gamma, noise);
    else if (m == "la") f = field_la(g, x, cfg.gamma, noise);
    else if (m == "lola") f = field_lola(g, x, cfg.gamma, noise);
    else if (m == "pcgd") f = field_pcgd(g, x, cfg.gamma, noise);
    else if (m == "ed") f = field_ed(g, x);
    else if (m == "gni") f = field_gni(g, x, cfg.gamma, noise);
    else throw ConfigError("unknown method id: " + m);
    require_numeric(f.allFinite(), m + ": non-finite field");
    return g.params(x.flat + eta * f);
  }
};

}  // namespace nashdyn
