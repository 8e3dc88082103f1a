// Equilibrium quality measurement: exact exploitability where a best-response
// oracle exists, multi-restart lower bounds elsewhere, distances to known
// equilibria, optimal-assignment Wasserstein distance for generative players,
// and the convexity property check for constant-sum matrix games.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "nashdyn/games.hpp"

namespace nashdyn {

struct ExploitabilityReport {
  VectorXd regrets;   // per-player best-response gain, >= 0
  double phi = 0;     // sum of regrets
  bool exact = true;  // false: lower bound from a restricted response search
  std::string oracle;
};

// ---- exact oracles -----------------------------------------------------------

// Per-player regrets of a normal-form game directly from probability vectors.
// A best response is a pure action, so the regret is the best marginal payoff
// minus the mixed payoff (clamped at zero against rounding).
inline VectorXd nf_regrets(const NormalForm& nf, const std::vector<VectorXd>& probs) {
  const int n = nf.players();
  std::vector<double> cur = nf.expected(probs);
  VectorXd r(n);
  for (int i = 0; i < n; ++i) {
    VectorXd m = nf.marginal(i, probs);
    r[i] = std::max(0.0, m.maxCoeff() - cur[i]);
  }
  return r;
}

inline VectorXd kuhn_regrets(const KuhnSpec& spec, const std::vector<MatrixXd>& probs) {
  std::vector<double> cur = spec.expected(probs);
  VectorXd r(spec.players());
  for (int i = 0; i < spec.players(); ++i)
    r[i] = std::max(0.0, spec.best_response(i, probs).first - cur[i]);
  return r;
}

inline double exact_regret_normal_form(const Game& g, const ParamVector& x, int i) {
  require(g.nf != nullptr, "exact_regret_normal_form: not a normal-form game");
  require(i >= 0 && i < g.players, "exact_regret_normal_form: player index");
  return nf_regrets(*g.nf, nf_probs(g, x))[i];
}

inline double kuhn_best_response_value(const Game& g, const ParamVector& x, int i) {
  require(g.kuhn != nullptr, "kuhn_best_response_value: not a Kuhn game");
  require(i >= 0 && i < g.players, "kuhn_best_response_value: player index");
  return g.kuhn->best_response(i, kuhn_probs(*g.kuhn, x)).first;
}

inline ExploitabilityReport exact_exploitability(const Game& g, const ParamVector& x) {
  ExploitabilityReport rep;
  rep.exact = true;
  if (g.nf) {
    rep.regrets = nf_regrets(*g.nf, nf_probs(g, x));
    rep.oracle = "pure-action enumeration";
  } else if (g.kuhn) {
    rep.regrets = kuhn_regrets(*g.kuhn, kuhn_probs(*g.kuhn, x));
    rep.oracle = "per-infoset expectimax";
  } else {
    throw ConfigError("exact_exploitability: game '" + g.id +
                      "' has no best-response oracle; use approx_exploitability");
  }
  rep.phi = rep.regrets.sum();
  return rep;
}

// Brute-force cross-check: maximizes each player's payoff over a grid with
// `points` levels per simplex coordinate. Regrets are linear in own
// probabilities, so the grid (which contains the vertices) attains the truth.
inline double grid_exploitability(const NormalForm& nf, const std::vector<VectorXd>& probs,
                                  int points = 101) {
  require(points >= 2, "grid_exploitability: need at least two grid levels");
  std::vector<double> cur = nf.expected(probs);
  const int units = points - 1;
  double total = 0;
  for (int i = 0; i < nf.players(); ++i) {
    VectorXd m = nf.marginal(i, probs);
    const int d = static_cast<int>(m.size());
    double best = -std::numeric_limits<double>::infinity();
    // Enumerate compositions of `units` into d parts.
    std::vector<int> part(d, 0);
    part[0] = units;
    while (true) {
      double val = 0;
      for (int a = 0; a < d; ++a)
        val += (static_cast<double>(part[a]) / units) * m[a];
      best = std::max(best, val);
      // next composition in colex order
      int k = 0;
      while (k < d - 1 && part[k] == 0) ++k;
      if (k == d - 1) break;
      const int carry = part[k];
      part[k] = 0;
      part[k + 1] += 1;
      part[0] = carry - 1;
    }
    total += std::max(0.0, best - cur[i]);
  }
  return total;
}

// ---- approximate exploitability ------------------------------------------------

// Lower bound on exploitability: per-player gradient ascent on the deviation
// gain from `restarts` random starts plus the current strategy, reporting the
// best gain seen anywhere along the trajectories. All utility evaluations use
// one frozen noise draw so the inner objective is deterministic.
inline ExploitabilityReport approx_exploitability(const Game& g, const ParamVector& x,
                                                  int restarts = 8, int inner_steps = 200,
                                                  double inner_lr = 1e-2, Rng rng = Rng(0)) {
  require(restarts >= 1, "approx_exploitability: need at least one restart");
  require(inner_steps >= 0 && inner_lr > 0, "approx_exploitability: bad inner loop");
  Rng noise = rng.fork(0);
  Rng starts = rng.fork(1);
  ExploitabilityReport rep;
  rep.exact = false;
  rep.oracle = "multi-start gradient ascent";
  rep.regrets = VectorXd::Zero(g.players);
  for (int i = 0; i < g.players; ++i) {
    double base = utility_values(g, x, noise)[i];
    double best_gain = 0;  // the current strategy itself is a zero-gain start
    for (int r = 0; r <= restarts; ++r) {
      VectorXd y = (r == 0) ? VectorXd(x.block(i)) : g.init_player(i, starts);
      for (int s = 0; s <= inner_steps; ++s) {
        if (!y.allFinite()) break;
        ad::Tape t;
        std::vector<ad::Var> xv = tape_inputs(t, g, x);
        std::vector<ad::Var> mixed = xv;
        mixed[i] = t.input(y.transpose());
        ad::Var ui = g.utility(t, mixed, noise)[i];
        const double val = t.scalar(ui);
        if (!std::isfinite(val)) break;
        best_gain = std::max(best_gain, val - base);
        if (s == inner_steps) break;
        t.backward(ui);
        y += inner_lr * t.adjoint(mixed[i]).transpose();
      }
    }
    rep.regrets[i] = best_gain;
  }
  rep.phi = rep.regrets.sum();
  return rep;
}

// ---- distances -----------------------------------------------------------------

inline double distance_to_ne(const Game& g, const ParamVector& x) {
  require(g.ne.has_value(), "distance_to_ne: game has no known equilibrium");
  if (!g.ne->prob_space) return (x.flat - g.ne->target).norm();
  require(g.nf != nullptr, "distance_to_ne: probability-space target needs actions");
  VectorXd p(x.dim());
  for (int i = 0; i < g.players; ++i)
    p.segment(x.offsets[i], x.dim(i)) = softmax_clip(x.block(i));
  return (p - g.ne->target).norm();
}

// Equilibrium action distribution of the continuous game on [0,1].
inline double gg_cdf(double t) {
  return 4.0 / std::numbers::pi * std::atan(std::sqrt(t));
}

// Inverse transform for drawing reference samples: t = tan^2(pi u / 4).
inline double gg_inverse_cdf(double u) {
  const double s = std::tan(std::numbers::pi * u / 4.0);
  return s * s;
}

// Kolmogorov-Smirnov statistic between the empirical distribution of samples
// in [0,1] and the known equilibrium CDF.
inline double gg_cdf_distance(VectorXd samples) {
  const int n = static_cast<int>(samples.size());
  require(n > 0, "gg_cdf_distance: no samples");
  require(samples.minCoeff() >= 0.0 && samples.maxCoeff() <= 1.0,
          "gg_cdf_distance: samples outside [0,1]");
  std::sort(samples.data(), samples.data() + n);
  double d = 0;
  for (int i = 0; i < n; ++i) {
    const double f = gg_cdf(samples[i]);
    d = std::max(d, std::max(f - static_cast<double>(i) / n,
                             static_cast<double>(i + 1) / n - f));
  }
  return d;
}

// ---- optimal assignment ----------------------------------------------------------

struct AssignmentSolution {
  std::vector<int> perm;  // row i matched to column perm[i]
  double cost = 0;
};

// Exact minimum-cost perfect matching via shortest augmenting paths with
// potentials (O(n^3)).
inline AssignmentSolution assignment_solve(const MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  require(n > 0 && cost.cols() == n, "assignment_solve: matrix must be square");
  require_numeric(cost.allFinite(), "assignment_solve: non-finite cost");
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0), v(n + 1, 0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = -1;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  AssignmentSolution s;
  s.perm.assign(n, -1);
  for (int j = 1; j <= n; ++j) s.perm[p[j] - 1] = j - 1;
  for (int i = 0; i < n; ++i) s.cost += cost(i, s.perm[i]);
  return s;
}

// Factorial-enumeration oracle for small n, used to certify assignment_solve.
inline AssignmentSolution assignment_brute_force(const MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  require(n > 0 && n <= 9 && cost.cols() == n, "assignment_brute_force: n must be in 1..9");
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  AssignmentSolution best;
  best.cost = std::numeric_limits<double>::infinity();
  do {
    double c = 0;
    for (int i = 0; i < n; ++i) c += cost(i, perm[i]);
    if (c < best.cost) {
      best.cost = c;
      best.perm = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// Empirical Wasserstein distance: total transport cost of the optimal
// assignment on the pairwise Euclidean distance matrix.
inline double ewd(const MatrixXd& real_points, const MatrixXd& fake_points) {
  require(real_points.rows() == fake_points.rows(), "ewd: sample counts differ");
  require(real_points.cols() == fake_points.cols(), "ewd: point dimensions differ");
  const int n = static_cast<int>(real_points.rows());
  require(n > 0, "ewd: no points");
  MatrixXd cost(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      cost(i, j) = (real_points.row(i) - fake_points.row(j)).norm();
  return assignment_solve(cost).cost;
}

// ---- convexity property -----------------------------------------------------------

// A uniform draw from the probability simplex via normalized exponentials.
inline VectorXd random_simplex_point(int d, Rng& rng) {
  VectorXd p(d);
  for (int k = 0; k < d; ++k) p[k] = -std::log(rng.uniform01_open());
  return p / p.sum();
}

// Fraction of random probability-space pairs satisfying midpoint convexity of
// exact exploitability: Phi((p+q)/2) <= (Phi(p)+Phi(q))/2 + 1e-9. Constant-sum
// pairwise-decomposable games satisfy this identically; general-sum games may
// not, so only the fraction is reported.
inline double midpoint_convexity_check(const Game& g, int n_pairs, Rng rng) {
  require(g.nf != nullptr, "midpoint_convexity_check: needs a payoff-tensor game");
  require(n_pairs >= 1, "midpoint_convexity_check: need at least one pair");
  const int n = g.players;
  int ok = 0;
  std::vector<VectorXd> p(n), q(n), mid(n);
  for (int t = 0; t < n_pairs; ++t) {
    for (int i = 0; i < n; ++i) {
      p[i] = random_simplex_point(g.nf->shape[i], rng);
      q[i] = random_simplex_point(g.nf->shape[i], rng);
      mid[i] = 0.5 * (p[i] + q[i]);
    }
    const double lhs = nf_regrets(*g.nf, mid).sum();
    const double rhs = 0.5 * (nf_regrets(*g.nf, p).sum() + nf_regrets(*g.nf, q).sum());
    if (lhs <= rhs + 1e-9) ++ok;
  }
  return static_cast<double>(ok) / n_pairs;
}

}  // namespace nashdyn
