// Exploitability descent through learned best responses.
//
// Two trainable surrogates for the inner sup of the Nikaido-Isoda function:
// a hypernetwork that maps the current profile to a deviation profile (Brf),
// and per-player ensembles of candidate deviations whose ascent steps are
// weighted by ordinal rank (BreEnsemble). Both descend x along the gradient
// of the surrogate exploitability while the surrogate itself ascends.
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "nashdyn/game.hpp"
#include "nashdyn/nn.hpp"

namespace nashdyn {

// ---- Nikaido-Isoda ----------------------------------------------------------

struct NiEvaluation {
  double phi = 0;   // sum of the per-player gains
  VectorXd gains;   // gains[i] = u_i(y_i, x_{-i}) - u_i(x)
};

// out[i] = u_i(y_i, x_{-i}) as tape nodes. Every evaluation receives the same
// noise copy, so stochastic games are compared on common random numbers.
inline std::vector<ad::Var> deviation_utilities_on_tape(
    ad::Tape& t, const Game& g, const std::vector<ad::Var>& x_vars,
    const std::vector<ad::Var>& y_vars, Rng noise) {
  std::vector<ad::Var> out(g.players);
  for (int i = 0; i < g.players; ++i) {
    std::vector<ad::Var> mixed = x_vars;
    mixed[i] = y_vars[i];
    out[i] = g.utility(t, mixed, noise)[i];
  }
  return out;
}

// phi(x, y) = sum_i (u_i(y_i, x_{-i}) - u_i(x)), built on an existing tape so
// callers can differentiate it with respect to whatever x/y are functions of.
inline ad::Var phi_on_tape(ad::Tape& t, const Game& g,
                           const std::vector<ad::Var>& x_vars,
                           const std::vector<ad::Var>& y_vars, Rng noise) {
  std::vector<ad::Var> dev = deviation_utilities_on_tape(t, g, x_vars, y_vars, noise);
  std::vector<ad::Var> cur = g.utility(t, x_vars, noise);
  ad::Var acc = t.sub(dev[0], cur[0]);
  for (int i = 1; i < g.players; ++i) acc = t.add(acc, t.sub(dev[i], cur[i]));
  return acc;
}

inline NiEvaluation ni(const Game& g, const ParamVector& x, const ParamVector& y,
                       Rng noise = Rng(0)) {
  require(x.dims() == g.dims && y.dims() == g.dims,
          "ni: profiles do not match the game layout");
  ad::Tape t;
  std::vector<ad::Var> xv = tape_inputs(t, g, x);
  std::vector<ad::Var> yv(g.players);
  for (int i = 0; i < g.players; ++i) yv[i] = t.input(y.block(i).transpose());
  std::vector<ad::Var> dev = deviation_utilities_on_tape(t, g, xv, yv, noise);
  std::vector<ad::Var> cur = g.utility(t, xv, noise);
  NiEvaluation out;
  out.gains.resize(g.players);
  for (int i = 0; i < g.players; ++i)
    out.gains[i] = t.scalar(dev[i]) - t.scalar(cur[i]);
  out.phi = out.gains.sum();
  require_numeric(std::isfinite(out.phi), "ni: non-finite value");
  return out;
}

// ---- rank-based weighting ---------------------------------------------------

struct RankWeights {
  std::vector<int> ranks;  // permutation of 1..J; best value gets J
  VectorXd weights;        // ranks[j] / J
};

// Ordinal ranks: the best value receives rank J. On ties the lower index
// receives the higher rank. Invariant under strictly increasing transforms.
inline RankWeights rank_weights(const VectorXd& values) {
  const int j_count = static_cast<int>(values.size());
  require(j_count >= 1, "rank_weights: need at least one value");
  require_numeric(values.allFinite(), "rank_weights: non-finite value");
  std::vector<int> order(j_count);
  std::iota(order.begin(), order.end(), 0);
  // Ascending by value; equal values ordered by descending index, so that the
  // later positions (higher ranks) go to lower indices.
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (values[a] != values[b]) return values[a] < values[b];
    return a > b;
  });
  RankWeights rw;
  rw.ranks.resize(j_count);
  rw.weights.resize(j_count);
  for (int pos = 0; pos < j_count; ++pos) {
    rw.ranks[order[pos]] = pos + 1;
    rw.weights[order[pos]] = static_cast<double>(pos + 1) / j_count;
  }
  return rw;
}

// mix_j a_j = (1/J) sum_j r_j a_j. Not mean-preserving: all-equal values give
// c * (J+1)/2.
inline double mix(const VectorXd& values) {
  RankWeights rw = rank_weights(values);
  return rw.weights.dot(values);
}

// ---- best-response function (hypernetwork) -----------------------------------

struct Brf {
  Mlp net;      // flattened profile -> flattened deviation profile
  VectorXd w;   // hypernetwork weights

  static Brf make(const Game& g, int hidden, Rng& rng) {
    require(hidden >= 1, "Brf: hidden width must be positive");
    Brf b{Mlp({g.total_dim(), hidden, g.total_dim()}), {}};
    b.w = b.net.he_init(rng);
    return b;
  }

  // y = b(w, x), numerically. Outputs live in the game's own parameter space
  // (logits for mixed strategies, raw reals otherwise).
  ParamVector forward(const Game& g, const ParamVector& x) const {
    require(x.dim() == g.total_dim(), "Brf: profile size mismatch");
    Eigen::MatrixXd y = net.forward_value(w, x.flat.transpose());
    return g.params(y.transpose().col(0));
  }
};

// One Euler step of the coupled system: x descends phi(x, b(w,x)) with a total
// derivative through the hypernetwork, w ascends it. Both gradients are taken
// at the pre-step point.
inline std::pair<ParamVector, Brf> brf_step(const Game& g, const ParamVector& x,
                                            const Brf& brf, double eta, Rng noise) {
  require(eta >= 0, "brf_step: negative step size");
  ad::Tape t;
  std::vector<ad::Var> xv = tape_inputs(t, g, x);
  ad::Var wv = t.input(brf.w.transpose());
  ad::Var xcat = xv[0];
  if (g.players > 1) {
    std::vector<ad::Var> rows(xv.begin(), xv.end());
    xcat = t.concat_row(rows);
  }
  ad::Var yrow = brf.net.forward(t, wv, xcat);  // 1 x total_dim
  std::vector<ad::Var> yv(g.players);
  for (int i = 0; i < g.players; ++i)
    yv[i] = t.segment(yrow, x.offsets[i], x.dim(i));
  ad::Var phi = phi_on_tape(t, g, xv, yv, noise);
  t.backward(phi);
  ParamVector x2 = x;
  for (int i = 0; i < g.players; ++i)
    x2.block(i) -= eta * t.adjoint(xv[i]).transpose();
  Brf b2 = brf;
  b2.w += eta * t.adjoint(wv).transpose();
  require_numeric(x2.all_finite() && b2.w.allFinite(), "brf_step: non-finite gradient");
  return {std::move(x2), std::move(b2)};
}

// ---- best-response ensembles --------------------------------------------------

struct BreEnsemble {
  int size = 0;                           // J, candidates per player
  std::vector<std::vector<VectorXd>> y;   // y[i][j]: candidate deviation for player i

  static BreEnsemble make(const Game& g, int size, Rng& rng) {
    require(size >= 1, "BreEnsemble: need at least one candidate");
    BreEnsemble e;
    e.size = size;
    e.y.resize(g.players);
    for (int i = 0; i < g.players; ++i) {
      e.y[i].resize(size);
      for (int j = 0; j < size; ++j) e.y[i][j] = g.init_player(i, rng);
    }
    return e;
  }

  void check_shape(const Game& g) const {
    require(static_cast<int>(y.size()) == g.players && size >= 1,
            "BreEnsemble: wrong player count");
    for (int i = 0; i < g.players; ++i) {
      require(static_cast<int>(y[i].size()) == size, "BreEnsemble: ragged ensemble");
      for (const VectorXd& c : y[i])
        require(c.size() == g.dims[i], "BreEnsemble: candidate dimension mismatch");
    }
  }
};

struct BreSelection {
  std::vector<int> index;  // per-player argmax candidate, lowest index on ties
  VectorXd value;          // u_i(y_{i,index}, x_{-i})
};

// Candidate utilities u_i(y_{ij}, x_{-i}) for all (i, j), on one tape and one
// shared noise draw. vars receives the candidate input nodes when non-null.
inline MatrixXd bre_candidate_utilities(ad::Tape& t, const Game& g,
                                        const std::vector<ad::Var>& xv,
                                        const BreEnsemble& ens, Rng noise,
                                        std::vector<std::vector<ad::Var>>* vars = nullptr,
                                        std::vector<std::vector<ad::Var>>* nodes = nullptr) {
  MatrixXd values(g.players, ens.size);
  if (vars) vars->assign(g.players, std::vector<ad::Var>(ens.size));
  if (nodes) nodes->assign(g.players, std::vector<ad::Var>(ens.size));
  for (int i = 0; i < g.players; ++i) {
    for (int j = 0; j < ens.size; ++j) {
      ad::Var cv = t.input(ens.y[i][j].transpose());
      std::vector<ad::Var> mixed = xv;
      mixed[i] = cv;
      ad::Var uij = g.utility(t, mixed, noise)[i];
      values(i, j) = t.scalar(uij);
      if (vars) (*vars)[i][j] = cv;
      if (nodes) (*nodes)[i][j] = uij;
    }
  }
  return values;
}

// Per-player best candidate under a common noise batch; ties go to the lowest
// index (bit-equal comparison, deliberate for determinism).
inline BreSelection bre_select(const Game& g, const ParamVector& x,
                               const BreEnsemble& ens, Rng noise = Rng(0)) {
  ens.check_shape(g);
  ad::Tape t;
  std::vector<ad::Var> xv = tape_inputs(t, g, x);
  MatrixXd values = bre_candidate_utilities(t, g, xv, ens, noise);
  BreSelection sel;
  sel.index.resize(g.players);
  sel.value.resize(g.players);
  for (int i = 0; i < g.players; ++i) {
    int best = 0;
    for (int j = 1; j < ens.size; ++j)
      if (values(i, j) > values(i, best)) best = j;
    sel.index[i] = best;
    sel.value[i] = values(i, best);
  }
  return sel;
}

// One Euler step of the ensemble system:
//   x  <- x - eta * d/dx sum_i (u_i(y_i*, x_{-i}) - u_i(x))   (y_i* = argmax, held fixed)
//   y_{ij} <- y_{ij} + eta * (r_{ij}/J) * d/dy u_i(y_{ij}, x_{-i})
// Everything is evaluated at the pre-step point on one shared noise batch.
inline std::pair<ParamVector, BreEnsemble> bre_step(const Game& g, const ParamVector& x,
                                                    const BreEnsemble& ens, double eta,
                                                    Rng noise) {
  require(eta >= 0, "bre_step: negative step size");
  ens.check_shape(g);
  ad::Tape t;
  std::vector<ad::Var> xv = tape_inputs(t, g, x);
  std::vector<std::vector<ad::Var>> cand_vars, cand_nodes;
  MatrixXd values = bre_candidate_utilities(t, g, xv, ens, noise, &cand_vars, &cand_nodes);

  // Ascent objective: sum_ij (r_ij / J) u_ij. Each candidate owns one term, so
  // one sweep yields every weighted candidate gradient.
  ad::Var ascent{};
  std::vector<RankWeights> rw(g.players);
  for (int i = 0; i < g.players; ++i) {
    rw[i] = rank_weights(values.row(i).transpose());
    for (int j = 0; j < ens.size; ++j) {
      ad::Var term = t.smul(cand_nodes[i][j], rw[i].weights[j]);
      ascent = (i == 0 && j == 0) ? term : t.add(ascent, term);
    }
  }
  t.backward(ascent);
  BreEnsemble e2 = ens;
  for (int i = 0; i < g.players; ++i)
    for (int j = 0; j < ens.size; ++j) {
      e2.y[i][j] += eta * t.adjoint(cand_vars[i][j]).transpose();
      require_numeric(e2.y[i][j].allFinite(), "bre_step: non-finite candidate gradient");
    }

  // Descent objective: the selected candidates' gains. Candidates enter the
  // tape as separate inputs, so the x-adjoint automatically holds them fixed.
  std::vector<ad::Var> cur = g.utility(t, xv, noise);
  ad::Var descent{};
  for (int i = 0; i < g.players; ++i) {
    int best = 0;
    for (int j = 1; j < ens.size; ++j)
      if (values(i, j) > values(i, best)) best = j;
    ad::Var gain = t.sub(cand_nodes[i][best], cur[i]);
    descent = (i == 0) ? gain : t.add(descent, gain);
  }
  t.backward(descent);
  ParamVector x2 = x;
  for (int i = 0; i < g.players; ++i)
    x2.block(i) -= eta * t.adjoint(xv[i]).transpose();
  require_numeric(x2.all_finite(), "bre_step: non-finite profile gradient");
  return {std::move(x2), std::move(e2)};
}

// ---- reported approximate exploitability --------------------------------------

// Phi_tilde(x) = sum_i max(0, max_j u_i(y_ij, x_{-i}) - u_i(x)) over a provided
// response set. The clamp applies to reporting only; true regrets are
// nonnegative, so this never exceeds the exact exploitability.
inline double approx_exploitability_from_responses(
    const Game& g, const ParamVector& x,
    const std::vector<std::vector<VectorXd>>& responses, Rng noise = Rng(0)) {
  require(static_cast<int>(responses.size()) == g.players,
          "approx_exploitability_from_responses: wrong player count");
  ad::Tape t;
  std::vector<ad::Var> xv = tape_inputs(t, g, x);
  std::vector<ad::Var> cur = g.utility(t, xv, noise);
  double total = 0;
  for (int i = 0; i < g.players; ++i) {
    const double base = t.scalar(cur[i]);
    double best_gain = 0;
    for (const VectorXd& y : responses[i]) {
      require(y.size() == g.dims[i],
              "approx_exploitability_from_responses: response dimension mismatch");
      std::vector<ad::Var> mixed = xv;
      mixed[i] = t.input(y.transpose());
      best_gain = std::max(best_gain, t.scalar(g.utility(t, mixed, noise)[i]) - base);
    }
    total += best_gain;
  }
  return total;
}

}  // namespace nashdyn
