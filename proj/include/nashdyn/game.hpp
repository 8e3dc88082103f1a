// Game abstraction: differentiable utilities over flat parameter profiles,
// plus exact evaluators for finite games (normal form and Kuhn poker).
//
// Conventions:
//  - player parameter blocks enter the tape as 1 x d row vectors;
//  - probability distributions are column vectors / column-per-infoset
//    matrices produced by softmax_cols;
//  - utilities are per-player 1x1 scalars, one Var per player;
//  - stochastic games draw their noise from an Rng passed BY VALUE, so every
//    evaluation within one method step sees the same noise batch.
#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "nashdyn/autodiff.hpp"
#include "nashdyn/common.hpp"
#include "nashdyn/param_vector.hpp"
#include "nashdyn/rng.hpp"

namespace nashdyn {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// ---- normal-form games ---------------------------------------------------

// Payoff tensors stored flat in row-major joint-action order.
struct NormalForm : ad::MultiFn {
  std::vector<int> shape;          // actions per player
  std::vector<VectorXd> payoff;    // one tensor per player, size prod(shape)

  int players() const { return static_cast<int>(shape.size()); }

  int cells() const {
    int c = 1;
    for (int k : shape) c *= k;
    return c;
  }

  int stride(int i) const {
    int s = 1;
    for (int j = i + 1; j < players(); ++j) s *= shape[j];
    return s;
  }

  void validate() const {
    require(!shape.empty(), "NormalForm: no players");
    require(static_cast<int>(payoff.size()) == players(), "NormalForm: payoff count");
    for (const VectorXd& p : payoff)
      require(p.size() == cells(), "NormalForm: payoff tensor size");
  }

  // Expected utilities under mixed strategies (probability simplex vectors).
  std::vector<double> expected(const std::vector<VectorXd>& probs) const {
    const int n = players();
    std::vector<double> u(n, 0.0);
    std::vector<int> a(n, 0);
    const int total = cells();
    for (int idx = 0; idx < total; ++idx) {
      double prod = 1.0;
      for (int i = 0; i < n; ++i) prod *= probs[i][a[i]];
      if (prod != 0.0)
        for (int i = 0; i < n; ++i) u[i] += prod * payoff[i][idx];
      for (int i = n - 1; i >= 0; --i) {
        if (++a[i] < shape[i]) break;
        a[i] = 0;
      }
    }
    return u;
  }

  // E[payoff_i | a_i = k] for each own action k (opponents mixed).
  VectorXd marginal(int i, const std::vector<VectorXd>& probs) const {
    const int n = players();
    VectorXd m = VectorXd::Zero(shape[i]);
    std::vector<int> a(n, 0);
    const int total = cells();
    for (int idx = 0; idx < total; ++idx) {
      double prod = 1.0;
      for (int j = 0; j < n; ++j)
        if (j != i) prod *= probs[j][a[j]];
      m[a[i]] += prod * payoff[i][idx];
      for (int j = n - 1; j >= 0; --j) {
        if (++a[j] < shape[j]) break;
        a[j] = 0;
      }
    }
    return m;
  }

  // MultiFn: inputs are per-player probability columns, output is a 1 x n row
  // of expected utilities.
  ad::Mat forward(const std::vector<const ad::Mat*>& xs) const override {
    const int n = players();
    require(static_cast<int>(xs.size()) == n, "NormalForm: input count");
    std::vector<VectorXd> probs(n);
    for (int i = 0; i < n; ++i) {
      require(xs[i]->cols() == 1 && xs[i]->rows() == shape[i],
              "NormalForm: probability column shape");
      probs[i] = xs[i]->col(0);
    }
    std::vector<double> u = expected(probs);
    ad::Mat out(1, n);
    for (int i = 0; i < n; ++i) out(0, i) = u[i];
    return out;
  }

  void vjp(const std::vector<const ad::Mat*>& xs, const ad::Mat& /*val*/, const ad::Mat& g,
           std::vector<ad::Mat*>& grads) const override {
    const int n = players();
    std::vector<int> a(n, 0);
    const int total = cells();
    for (int idx = 0; idx < total; ++idx) {
      // weighted payoff at this cell, summed over output adjoints
      double w = 0.0;
      for (int i = 0; i < n; ++i) w += g(0, i) * payoff[i][idx];
      if (w != 0.0) {
        for (int i = 0; i < n; ++i) {
          double loo = 1.0;
          for (int j = 0; j < n; ++j)
            if (j != i) loo *= (*xs[j])(a[j], 0);
          (*grads[i])(a[i], 0) += w * loo;
        }
      }
      for (int i = n - 1; i >= 0; --i) {
        if (++a[i] < shape[i]) break;
        a[i] = 0;
      }
    }
  }

  std::vector<ad::Var> utilities_on_tape(ad::Tape& t, const std::vector<ad::Var>& prob_cols) const {
    ad::Var row = t.custom(this, prob_cols);
    std::vector<ad::Var> u(players());
    for (int i = 0; i < players(); ++i) u[i] = t.entry(row, 0, i);
    return u;
  }
};

// ---- Kuhn poker (one betting round, 2 or 3 players) -----------------------

// Behavioral strategies: per player a 2 x n_sets probability matrix, one
// column per information set; row 0 = passive action (check/fold), row 1 =
// aggressive action (bet/call). Information set index = hist_id * cards + card.
struct KuhnSpec : ad::MultiFn {
  int players_n = 2;
  int cards = 3;

  struct PathElem {
    int player, hist, action;
  };
  struct Terminal {
    std::vector<PathElem> path;
    std::vector<char> in;    // participates in showdown
    std::vector<int> contrib;
  };

  std::vector<std::vector<std::string>> hists;           // per player
  std::vector<std::map<std::string, int>> hist_ids;      // per player
  std::vector<Terminal> terminals;
  std::vector<std::vector<int>> deals;                   // ordered card tuples
  std::vector<std::vector<VectorXd>> payoffs;            // [deal][terminal] -> per player

  static KuhnSpec make(int n_players) {
    require(n_players == 2 || n_players == 3, "KuhnSpec: 2 or 3 players");
    KuhnSpec k;
    k.players_n = n_players;
    k.cards = n_players + 1;
    k.hists.resize(n_players);
    k.hist_ids.resize(n_players);
    k.build("");
    // all ordered deals of distinct cards
    std::vector<int> deck(k.cards);
    for (int i = 0; i < k.cards; ++i) deck[i] = i;
    std::vector<int> perm;
    k.enum_deals(deck, perm);
    k.payoffs.resize(k.deals.size());
    for (std::size_t d = 0; d < k.deals.size(); ++d) {
      k.payoffs[d].resize(k.terminals.size());
      for (std::size_t t = 0; t < k.terminals.size(); ++t)
        k.payoffs[d][t] = k.terminal_payoff(k.deals[d], k.terminals[t]);
    }
    return k;
  }

  int players() const { return players_n; }
  int n_hists(int i) const { return static_cast<int>(hists[i].size()); }
  int n_sets(int i) const { return cards * n_hists(i); }
  int param_dim(int i) const { return 2 * n_sets(i); }
  int set_index(int hist, int card) const { return hist * cards + card; }

  double deal_prob() const { return 1.0 / static_cast<double>(deals.size()); }

  // Expected utilities under behavioral strategies.
  std::vector<double> expected(const std::vector<MatrixXd>& probs) const {
    std::vector<double> u(players_n, 0.0);
    const double dp = deal_prob();
    for (std::size_t d = 0; d < deals.size(); ++d) {
      for (std::size_t t = 0; t < terminals.size(); ++t) {
        double reach = dp;
        for (const PathElem& e : terminals[t].path)
          reach *= probs[e.player](e.action, set_index(e.hist, deals[d][e.player]));
        if (reach == 0.0) continue;
        for (int i = 0; i < players_n; ++i) u[i] += reach * payoffs[d][t][i];
      }
    }
    return u;
  }

  ad::Mat forward(const std::vector<const ad::Mat*>& xs) const override {
    require(static_cast<int>(xs.size()) == players_n, "KuhnSpec: input count");
    std::vector<MatrixXd> probs(players_n);
    for (int i = 0; i < players_n; ++i) {
      require(xs[i]->rows() == 2 && xs[i]->cols() == n_sets(i),
              "KuhnSpec: behavioral matrix shape");
      probs[i] = *xs[i];
    }
    std::vector<double> u = expected(probs);
    ad::Mat out(1, players_n);
    for (int i = 0; i < players_n; ++i) out(0, i) = u[i];
    return out;
  }

  void vjp(const std::vector<const ad::Mat*>& xs, const ad::Mat& /*val*/, const ad::Mat& g,
           std::vector<ad::Mat*>& grads) const override {
    const double dp = deal_prob();
    std::vector<double> p(8);
    for (std::size_t d = 0; d < deals.size(); ++d) {
      for (std::size_t t = 0; t < terminals.size(); ++t) {
        const Terminal& tt = terminals[t];
        const std::size_t len = tt.path.size();
        double w = 0.0;
        for (int i = 0; i < players_n; ++i) w += g(0, i) * payoffs[d][t][i];
        if (w == 0.0) continue;
        w *= dp;
        for (std::size_t e = 0; e < len; ++e) {
          const PathElem& pe = tt.path[e];
          p[e] = (*xs[pe.player])(pe.action, set_index(pe.hist, deals[d][pe.player]));
        }
        for (std::size_t e = 0; e < len; ++e) {
          double loo = w;
          for (std::size_t o = 0; o < len; ++o)
            if (o != e) loo *= p[o];
          const PathElem& pe = tt.path[e];
          (*grads[pe.player])(pe.action, set_index(pe.hist, deals[d][pe.player])) += loo;
        }
      }
    }
  }

  std::vector<ad::Var> utilities_on_tape(ad::Tape& t, const std::vector<ad::Var>& prob_mats) const {
    ad::Var row = t.custom(this, prob_mats);
    std::vector<ad::Var> u(players_n);
    for (int i = 0; i < players_n; ++i) u[i] = t.entry(row, 0, i);
    return u;
  }

  // Exact best response of player i against the others' behavioral
  // strategies: per-infoset maximization processed deepest-first (valid under
  // perfect recall). Returns the best-response value and the pure behavioral
  // strategy achieving it.
  std::pair<double, MatrixXd> best_response(int i, const std::vector<MatrixXd>& probs) const {
    const int nh = n_hists(i);
    std::vector<int> order(nh);
    for (int h = 0; h < nh; ++h) order[h] = h;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return hists[i][a].size() > hists[i][b].size();
    });
    MatrixXd chosen = MatrixXd::Zero(2, n_sets(i));
    const double dp = deal_prob();
    for (int h : order) {
      for (int c = 0; c < cards; ++c) {
        double q[2] = {0.0, 0.0};
        for (std::size_t d = 0; d < deals.size(); ++d) {
          if (deals[d][i] != c) continue;
          for (std::size_t t = 0; t < terminals.size(); ++t) {
            const Terminal& tt = terminals[t];
            int act_here = -1;
            double reach = dp;
            bool feasible = true;
            for (const PathElem& e : tt.path) {
              if (e.player == i) {
                if (e.hist == h) {
                  act_here = e.action;
                } else if (hists[i][e.hist].size() > hists[i][h].size()) {
                  // deeper own decision: must match the already-chosen action
                  if (chosen(e.action, set_index(e.hist, c)) != 1.0) {
                    feasible = false;
                    break;
                  }
                }
                // shallower own decisions are pinned by the history prefix
              } else {
                reach *= probs[e.player](e.action, set_index(e.hist, deals[d][e.player]));
              }
            }
            if (!feasible || act_here < 0) continue;
            q[act_here] += reach * payoffs[d][t][i];
          }
        }
        int best = q[1] > q[0] ? 1 : 0;
        chosen(best, set_index(h, c)) = 1.0;
      }
    }
    std::vector<MatrixXd> mixed = probs;
    mixed[i] = chosen;
    double value = expected(mixed)[i];
    return {value, chosen};
  }

  // Brute-force oracle: enumerates all 2^{n_sets(i)} pure strategies.
  double best_response_enumerated(int i, const std::vector<MatrixXd>& probs) const {
    const int m = n_sets(i);
    require(m <= 20, "best_response_enumerated: too many information sets");
    double best = -1e300;
    std::vector<MatrixXd> mixed = probs;
    for (long mask = 0; mask < (1L << m); ++mask) {
      MatrixXd pure = MatrixXd::Zero(2, m);
      for (int s = 0; s < m; ++s) pure((mask >> s) & 1, s) = 1.0;
      mixed[i] = pure;
      best = std::max(best, expected(mixed)[i]);
    }
    return best;
  }

 private:
  void enum_deals(const std::vector<int>& deck, std::vector<int>& perm) {
    if (static_cast<int>(perm.size()) == players_n) {
      deals.push_back(perm);
      return;
    }
    for (int c : deck) {
      if (std::find(perm.begin(), perm.end(), c) != perm.end()) continue;
      perm.push_back(c);
      enum_deals(deck, perm);
      perm.pop_back();
    }
  }

  int hist_id_for(int player, const std::string& h) {
    auto it = hist_ids[player].find(h);
    if (it != hist_ids[player].end()) return it->second;
    int id = static_cast<int>(hists[player].size());
    hists[player].push_back(h);
    hist_ids[player].emplace(h, id);
    return id;
  }

  // Betting grammar: players check ('c') in seat order until someone bets
  // ('b'); after a bet the remaining players respond in order, fold 'f' or
  // call 'c'. Actions are public.
  void build(const std::string& h, std::vector<PathElem> path = {}) {
    const int n = players_n;
    std::size_t bet = h.find('b');
    if (bet == std::string::npos) {
      if (static_cast<int>(h.size()) == n) {
        add_terminal(h, path);
        return;
      }
      int player = static_cast<int>(h.size());
      int hid = hist_id_for(player, h);
      for (int a = 0; a < 2; ++a) {
        std::vector<PathElem> p2 = path;
        p2.push_back({player, hid, a});
        build(h + (a == 0 ? 'c' : 'b'), std::move(p2));
      }
    } else {
      int responded = static_cast<int>(h.size() - bet - 1);
      if (responded == n - 1) {
        add_terminal(h, path);
        return;
      }
      int player = (static_cast<int>(bet) + 1 + responded) % n;
      int hid = hist_id_for(player, h);
      for (int a = 0; a < 2; ++a) {
        std::vector<PathElem> p2 = path;
        p2.push_back({player, hid, a});
        build(h + (a == 0 ? 'f' : 'c'), std::move(p2));
      }
    }
  }

  void add_terminal(const std::string& h, std::vector<PathElem> path) {
    const int n = players_n;
    Terminal t;
    t.path = std::move(path);
    t.in.assign(n, 1);
    t.contrib.assign(n, 1);  // antes
    std::size_t bet = h.find('b');
    if (bet != std::string::npos) {
      int bettor = static_cast<int>(bet);
      t.contrib[bettor] += 1;
      for (std::size_t k = bet + 1; k < h.size(); ++k) {
        int responder = (bettor + 1 + static_cast<int>(k - bet - 1)) % n;
        if (h[k] == 'f')
          t.in[responder] = 0;
        else
          t.contrib[responder] += 1;
      }
    }
    terminals.push_back(std::move(t));
  }

  VectorXd terminal_payoff(const std::vector<int>& deal, const Terminal& t) const {
    int pot = 0;
    for (int c : t.contrib) pot += c;
    int winner = -1;
    for (int i = 0; i < players_n; ++i)
      if (t.in[i] && (winner < 0 || deal[i] > deal[winner])) winner = i;
    VectorXd u(players_n);
    for (int i = 0; i < players_n; ++i)
      u[i] = -t.contrib[i] + (i == winner ? pot : 0);
    return u;
  }
};

// ---- game ----------------------------------------------------------------

struct KnownNe {
  bool prob_space = false;  // compare softmaxed probabilities instead of raw params
  VectorXd target;
};

struct Game {
  std::string id;
  int players = 2;
  std::vector<int> dims;
  bool stochastic = false;

  enum class Init { kRaw, kLogits, kWeights };
  Init init = Init::kLogits;

  // Differentiable utilities: one scalar Var per player. The Rng is taken by
  // value so repeated evaluations share the same noise.
  std::function<std::vector<ad::Var>(ad::Tape&, const std::vector<ad::Var>&, Rng)> utility;

  // Per-player parameter initializer (raw: standard normal; logits:
  // 0.1 * standard normal; weights: He initialization).
  std::function<VectorXd(int, Rng&)> init_player;

  // Draws n action samples (rows) from player i's implicit strategy; set only
  // for games whose strategies are sampling networks.
  std::function<MatrixXd(int, const ParamVector&, int, Rng&)> sample_actions;

  // Draws n rows from the environment's data distribution (generative games).
  std::function<MatrixXd(int, Rng&)> sample_data;

  std::shared_ptr<const NormalForm> nf;
  std::shared_ptr<const KuhnSpec> kuhn;
  std::optional<KnownNe> ne;

  int total_dim() const {
    int t = 0;
    for (int d : dims) t += d;
    return t;
  }

  ParamVector zeros() const { return ParamVector::zeros(dims); }

  ParamVector params(VectorXd flat) const { return ParamVector(std::move(flat), dims); }
};

// Registers the player blocks of x as tape inputs (1 x d rows).
inline std::vector<ad::Var> tape_inputs(ad::Tape& t, const Game& g, const ParamVector& x) {
  require(x.players() == g.players && x.dim() == g.total_dim(),
          "tape_inputs: profile does not match game layout");
  std::vector<ad::Var> vars(g.players);
  for (int i = 0; i < g.players; ++i)
    vars[i] = t.input(x.block(i).transpose());
  return vars;
}

// Forward-only utility evaluation.
inline VectorXd utility_values(const Game& g, const ParamVector& x, Rng rng) {
  ad::Tape t;
  std::vector<ad::Var> in = tape_inputs(t, g, x);
  std::vector<ad::Var> u = g.utility(t, in, rng);
  require_numeric(static_cast<int>(u.size()) == g.players, "utility: wrong output count");
  VectorXd v(g.players);
  for (int i = 0; i < g.players; ++i) v[i] = t.scalar(u[i]);
  require_numeric(v.allFinite(), "utility: non-finite value");
  return v;
}

// Utilities plus the full gradient of every player's utility with respect to
// the whole profile (row i = grad of u_i over all blocks).
struct UtilityGrads {
  VectorXd values;
  MatrixXd grads;  // players x total_dim
};

inline UtilityGrads utility_gradients(const Game& g, const ParamVector& x, Rng rng) {
  ad::Tape t;
  std::vector<ad::Var> in = tape_inputs(t, g, x);
  std::vector<ad::Var> u = g.utility(t, in, rng);
  UtilityGrads out;
  out.values.resize(g.players);
  out.grads.resize(g.players, g.total_dim());
  for (int i = 0; i < g.players; ++i) {
    out.values[i] = t.scalar(u[i]);
    t.backward(u[i]);
    for (int j = 0; j < g.players; ++j) {
      ad::Mat a = t.adjoint(in[j]);
      out.grads.block(i, x.offsets[j], 1, x.dim(j)) = a;
    }
  }
  require_numeric(out.values.allFinite() && out.grads.allFinite(),
                  "utility_gradients: non-finite result");
  return out;
}

}  // namespace nashdyn
