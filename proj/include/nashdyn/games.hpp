// Benchmark game suite and synthetic GAN datasets.
#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "nashdyn/game.hpp"
#include "nashdyn/nn.hpp"

namespace nashdyn {

// ---- GAN datasets ----------------------------------------------------------

enum class Dataset { kRing, kGrid, kSpiral, kCube };

inline int dataset_dim(Dataset d) { return d == Dataset::kCube ? 3 : 2; }

inline MatrixXd sample_dataset(Dataset d, int n, Rng& rng) {
  require(n > 0, "sample_dataset: n must be positive");
  MatrixXd out(n, dataset_dim(d));
  switch (d) {
    case Dataset::kRing:
      // 8 Gaussians (sigma 0.1) equally spaced on the unit circle
      for (int i = 0; i < n; ++i) {
        double th = 2.0 * M_PI * rng.uniform_int(8) / 8.0;
        out(i, 0) = std::cos(th) + 0.1 * rng.gaussian();
        out(i, 1) = std::sin(th) + 0.1 * rng.gaussian();
      }
      break;
    case Dataset::kGrid:
      // 9 Gaussians (sigma 0.1) on the 3x3 grid spanning [-1,1]^2
      for (int i = 0; i < n; ++i) {
        int k = rng.uniform_int(9);
        out(i, 0) = (k % 3 - 1) + 0.1 * rng.gaussian();
        out(i, 1) = (k / 3 - 1) + 0.1 * rng.gaussian();
      }
      break;
    case Dataset::kSpiral:
      // noisy Archimedean spiral, 2 turns, noise sigma 0.05
      for (int i = 0; i < n; ++i) {
        double t = rng.uniform01();
        double r = std::sqrt(t);
        double th = 2.0 * M_PI * r * 2.0;
        out(i, 0) = r * std::cos(th) + 0.05 * rng.gaussian();
        out(i, 1) = r * std::sin(th) + 0.05 * rng.gaussian();
      }
      break;
    case Dataset::kCube:
      // uniform on the 12 edges of the cube [-1,1]^3, noise sigma 0.05
      for (int i = 0; i < n; ++i) {
        int e = rng.uniform_int(12);
        int axis = e / 4;
        double s0 = (e & 1) ? 1.0 : -1.0;
        double s1 = (e & 2) ? 1.0 : -1.0;
        double pos = -1.0 + 2.0 * rng.uniform01();
        double p[3];
        p[axis] = pos;
        p[(axis + 1) % 3] = s0;
        p[(axis + 2) % 3] = s1;
        for (int c = 0; c < 3; ++c) out(i, c) = p[c] + 0.05 * rng.gaussian();
      }
      break;
  }
  return out;
}

// ---- initializer helpers ---------------------------------------------------

namespace detail {

inline std::function<VectorXd(int, Rng&)> logit_init(std::vector<int> dims) {
  // explicit return type: the scaled expression must not outlive the temporary
  return [dims](int player, Rng& rng) -> VectorXd {
    return 0.1 * rng.gaussian_vector(dims[player]);
  };
}

inline std::function<VectorXd(int, Rng&)> raw_init(std::vector<int> dims) {
  return [dims](int player, Rng& rng) { return rng.gaussian_vector(dims[player]); };
}

inline VectorXd stacked_uniform(const std::vector<int>& actions) {
  int total = 0;
  for (int k : actions) total += k;
  VectorXd t(total);
  int off = 0;
  for (int k : actions) {
    t.segment(off, k).setConstant(1.0 / k);
    off += k;
  }
  return t;
}

// Softmaxed distribution columns from logit row inputs.
inline std::vector<ad::Var> softmax_columns(ad::Tape& t, const std::vector<ad::Var>& in,
                                            const std::vector<int>& actions) {
  std::vector<ad::Var> probs(in.size());
  for (std::size_t i = 0; i < in.size(); ++i)
    probs[i] = t.softmax_cols(t.reshape(in[i], actions[i], 1));
  return probs;
}

// Column block of a matrix Var via column-major flatten + segment.
inline ad::Var col_block(ad::Tape& t, ad::Var m, int rows, int col0, int ncols) {
  ad::Var flatv = t.reshape(m, static_cast<int>(t.val(m).size()), 1);
  return t.reshape(t.segment(flatv, col0 * rows, ncols * rows), rows, ncols);
}

}  // namespace detail

// ---- factories -------------------------------------------------------------

// Bilinear saddle: u1 = x*y, u2 = -x*y; unique equilibrium at the origin.
inline Game make_saddle() {
  Game g;
  g.id = "saddle";
  g.players = 2;
  g.dims = {1, 1};
  g.init = Game::Init::kRaw;
  g.init_player = detail::raw_init(g.dims);
  g.utility = [](ad::Tape& t, const std::vector<ad::Var>& in, Rng) {
    ad::Var u1 = t.mul(in[0], in[1]);
    return std::vector<ad::Var>{u1, t.neg(u1)};
  };
  KnownNe ne;
  ne.prob_space = false;
  ne.target = VectorXd::Zero(2);
  g.ne = ne;
  return g;
}

inline Game make_normal_form(std::string id, std::shared_ptr<const NormalForm> nf,
                             bool uniform_ne) {
  nf->validate();
  Game g;
  g.id = std::move(id);
  g.players = nf->players();
  g.dims = nf->shape;
  g.init = Game::Init::kLogits;
  g.init_player = detail::logit_init(g.dims);
  g.nf = nf;
  std::vector<int> actions = nf->shape;
  g.utility = [nf, actions](ad::Tape& t, const std::vector<ad::Var>& in, Rng) {
    return nf->utilities_on_tape(t, detail::softmax_columns(t, in, actions));
  };
  if (uniform_ne) {
    KnownNe ne;
    ne.prob_space = true;
    ne.target = detail::stacked_uniform(actions);
    g.ne = ne;
  }
  return g;
}

// n-player matching pennies: u_i = (2*[a_i = a_{i+1 mod n}] - 1) * (-1)^[i = n-1].
inline Game make_matching_pennies(int n) {
  require(n >= 2, "matching pennies: need at least 2 players");
  auto nf = std::make_shared<NormalForm>();
  nf->shape.assign(n, 2);
  int cells = 1 << n;
  for (int i = 0; i < n; ++i) nf->payoff.emplace_back(VectorXd::Zero(cells));
  for (int idx = 0; idx < cells; ++idx) {
    for (int i = 0; i < n; ++i) {
      int ai = (idx >> (n - 1 - i)) & 1;
      int aj = (idx >> (n - 1 - (i + 1) % n)) & 1;
      double u = (ai == aj ? 1.0 : -1.0) * (i == n - 1 ? -1.0 : 1.0);
      nf->payoff[i][idx] = u;
    }
  }
  return make_normal_form("mp" + std::to_string(n), nf, true);
}

// Generalized rock-paper-scissors on k actions: each action beats its cyclic
// predecessor (paper beats rock). k=3 is standard RPS; k=4 adds a fourth
// action to the cycle, which ties against the one two steps away.
inline Game make_rps(int k) {
  require(k >= 3, "rps: need at least 3 actions");
  auto nf = std::make_shared<NormalForm>();
  nf->shape = {k, k};
  nf->payoff.assign(2, VectorXd::Zero(k * k));
  for (int a1 = 0; a1 < k; ++a1)
    for (int a2 = 0; a2 < k; ++a2) {
      double u = 0.0;
      if ((a1 - a2 + k) % k == 1) u = 1.0;   // a1 beats a2
      if ((a2 - a1 + k) % k == 1) u = -1.0;  // a2 beats a1
      nf->payoff[0][a1 * k + a2] = u;
      nf->payoff[1][a1 * k + a2] = -u;
    }
  return make_normal_form("rps" + std::to_string(k), nf, true);
}

// Shapley's game: player 1 payoff identity, player 2 payoff shifted identity.
inline Game make_shapley() {
  auto nf = std::make_shared<NormalForm>();
  nf->shape = {3, 3};
  nf->payoff.assign(2, VectorXd::Zero(9));
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      nf->payoff[0][r * 3 + c] = (r == c) ? 1.0 : 0.0;
      nf->payoff[1][r * 3 + c] = (c == (r + 1) % 3) ? 1.0 : 0.0;
    }
  return make_normal_form("shapley", nf, true);
}

// Kuhn poker with 2 players / 3 cards or 3 players / 4 cards.
inline Game make_kuhn(int n_players) {
  auto spec = std::make_shared<KuhnSpec>(KuhnSpec::make(n_players));
  Game g;
  g.id = "kuhn" + std::to_string(n_players);
  g.players = n_players;
  g.dims.resize(n_players);
  for (int i = 0; i < n_players; ++i) g.dims[i] = spec->param_dim(i);
  g.init = Game::Init::kLogits;
  g.init_player = detail::logit_init(g.dims);
  g.kuhn = spec;
  g.utility = [spec](ad::Tape& t, const std::vector<ad::Var>& in, Rng) {
    std::vector<ad::Var> probs(in.size());
    for (int i = 0; i < spec->players(); ++i)
      probs[i] = t.softmax_cols(t.reshape(in[i], 2, spec->n_sets(i)));
    return spec->utilities_on_tape(t, probs);
  };
  return g;
}

// Glicksberg-Gross game on [0,1]^2: u1 = (1+x)(1+y)(1-xy)/(1+xy)^2.
// Strategies are implicit densities: a 1->32->1 tanh MLP maps standard normal
// noise through a sigmoid onto [0,1].
inline Game make_gg(int batch_size) {
  require(batch_size > 0, "gg: batch size must be positive");
  auto net = std::make_shared<Mlp>(std::vector<int>{1, 32, 1});
  Game g;
  g.id = "gg";
  g.players = 2;
  g.dims = {net->n_params(), net->n_params()};
  g.stochastic = true;
  g.init = Game::Init::kWeights;
  g.init_player = [net](int, Rng& rng) { return net->he_init(rng); };
  g.utility = [net, batch_size](ad::Tape& t, const std::vector<ad::Var>& in, Rng rng) {
    ad::Var z1 = t.constant(rng.gaussian_matrix(batch_size, 1));
    ad::Var z2 = t.constant(rng.gaussian_matrix(batch_size, 1));
    ad::Var x = t.sigmoid(net->forward(t, in[0], z1));
    ad::Var y = t.sigmoid(net->forward(t, in[1], z2));
    ad::Var xy = t.mul(x, y);
    ad::Var num = t.mul(t.mul(x + 1.0, y + 1.0), 1.0 - xy);
    ad::Var den = t.square(xy + 1.0);
    ad::Var u1 = t.mean(t.div(num, den));
    return std::vector<ad::Var>{u1, t.neg(u1)};
  };
  g.sample_actions = [net](int player, const ParamVector& x, int n, Rng& rng) {
    VectorXd w = x.block(player);
    return MatrixXd(sigmoid_value(net->forward_value(w, rng.gaussian_matrix(n, 1))));
  };
  return g;
}

// Security game on the unit square: the attacker places one point, the
// defender n_points points; with d the distance from the attacker's point to
// the nearest defended point, the defender receives exp(-d^2). Both sides
// play implicit densities (2->32->2k sigmoid-squashed MLPs).
inline Game make_security(int n_points, int batch_size) {
  require(n_points == 1 || n_points == 2, "security: 1 or 2 defender points");
  require(batch_size > 0, "security: batch size must be positive");
  auto attacker = std::make_shared<Mlp>(std::vector<int>{2, 32, 2});
  auto defender = std::make_shared<Mlp>(std::vector<int>{2, 32, 2 * n_points});
  Game g;
  g.id = "security" + std::to_string(n_points);
  g.players = 2;
  g.dims = {attacker->n_params(), defender->n_params()};
  g.stochastic = true;
  g.init = Game::Init::kWeights;
  g.init_player = [attacker, defender](int player, Rng& rng) {
    return player == 0 ? attacker->he_init(rng) : defender->he_init(rng);
  };
  g.utility = [attacker, defender, n_points, batch_size](ad::Tape& t,
                                                         const std::vector<ad::Var>& in,
                                                         Rng rng) {
    ad::Var za = t.constant(rng.gaussian_matrix(batch_size, 2));
    ad::Var zd = t.constant(rng.gaussian_matrix(batch_size, 2));
    ad::Var a = t.sigmoid(attacker->forward(t, in[0], za));
    ad::Var d = t.sigmoid(defender->forward(t, in[1], zd));
    ad::Var dmin;
    for (int j = 0; j < n_points; ++j) {
      ad::Var dj = detail::col_block(t, d, batch_size, 2 * j, 2);
      ad::Var d2 = t.row_sum(t.square(t.sub(a, dj)));
      dmin = (j == 0) ? d2 : t.min_elem(dmin, d2);
    }
    ad::Var u_def = t.mean(t.vexp(t.neg(dmin)));
    return std::vector<ad::Var>{t.neg(u_def), u_def};
  };
  return g;
}

// GAN as a zero-sum game: V(D,G) = E log D(x) + E log(1 - D(G(z))); the
// generator minimizes V (u_G = -V), the discriminator maximizes it.
inline Game make_gan(Dataset dataset, int batch_size) {
  require(batch_size > 0, "gan: batch size must be positive");
  const int dim = dataset_dim(dataset);
  auto gen = std::make_shared<Mlp>(std::vector<int>{dim, 32, dim});
  auto dis = std::make_shared<Mlp>(std::vector<int>{dim, 32, 1});
  Game g;
  switch (dataset) {
    case Dataset::kRing: g.id = "gan-ring"; break;
    case Dataset::kGrid: g.id = "gan-grid"; break;
    case Dataset::kSpiral: g.id = "gan-spiral"; break;
    case Dataset::kCube: g.id = "gan-cube"; break;
  }
  g.players = 2;
  g.dims = {gen->n_params(), dis->n_params()};
  g.stochastic = true;
  g.init = Game::Init::kWeights;
  g.init_player = [gen, dis](int player, Rng& rng) {
    return player == 0 ? gen->he_init(rng) : dis->he_init(rng);
  };
  g.utility = [gen, dis, dataset, batch_size, dim](ad::Tape& t,
                                                   const std::vector<ad::Var>& in, Rng rng) {
    ad::Var real = t.constant(sample_dataset(dataset, batch_size, rng));
    ad::Var z = t.constant(rng.gaussian_matrix(batch_size, dim));
    ad::Var fake = gen->forward(t, in[0], z);
    ad::Var s_real = dis->forward(t, in[1], real);
    ad::Var s_fake = dis->forward(t, in[1], fake);
    // E log D(real) + E log(1 - D(fake)), via log sigmoid = -softplus(-s)
    ad::Var v = t.add(t.mean(t.neg(t.softplus(t.neg(s_real)))),
                      t.mean(t.neg(t.softplus(s_fake))));
    return std::vector<ad::Var>{t.neg(v), v};
  };
  g.sample_actions = [gen, dim](int player, const ParamVector& x, int n, Rng& rng) {
    require(player == 0, "gan: only the generator has a sampled strategy");
    VectorXd w = x.block(0);
    return gen->forward_value(w, rng.gaussian_matrix(n, dim));
  };
  g.sample_data = [dataset](int n, Rng& rng) { return sample_dataset(dataset, n, rng); };
  return g;
}

// ---- registry ---------------------------------------------------------------

struct GameParams {
  int batch_size = 64;
};

inline const std::vector<std::string>& game_ids() {
  static const std::vector<std::string> ids = {
      "saddle",  "mp2",       "mp3",       "rps3",       "rps4",
      "shapley", "kuhn2",     "kuhn3",     "gg",         "security1",
      "security2", "gan-ring", "gan-grid", "gan-spiral", "gan-cube"};
  return ids;
}

inline Game make_game(const std::string& id, const GameParams& p = {}) {
  if (id == "saddle") return make_saddle();
  if (id == "mp2") return make_matching_pennies(2);
  if (id == "mp3") return make_matching_pennies(3);
  if (id == "rps3") return make_rps(3);
  if (id == "rps4") return make_rps(4);
  if (id == "shapley") return make_shapley();
  if (id == "kuhn2") return make_kuhn(2);
  if (id == "kuhn3") return make_kuhn(3);
  if (id == "gg") return make_gg(p.batch_size);
  if (id == "security1") return make_security(1, p.batch_size);
  if (id == "security2") return make_security(2, p.batch_size);
  if (id == "gan-ring") return make_gan(Dataset::kRing, p.batch_size);
  if (id == "gan-grid") return make_gan(Dataset::kGrid, p.batch_size);
  if (id == "gan-spiral") return make_gan(Dataset::kSpiral, p.batch_size);
  if (id == "gan-cube") return make_gan(Dataset::kCube, p.batch_size);
  throw ConfigError("unknown game id: " + id);
}

// ---- numeric strategy views -------------------------------------------------
// These mirror the tape-side softmax exactly (same +/-30 clip) so oracle code
// sees the same mixed strategies the differentiable route plays.

inline std::vector<VectorXd> nf_probs(const Game& g, const ParamVector& x) {
  require(g.nf != nullptr, "nf_probs: not a normal-form game");
  std::vector<VectorXd> probs(g.players);
  for (int i = 0; i < g.players; ++i) probs[i] = softmax_clip(x.block(i));
  return probs;
}

inline std::vector<MatrixXd> kuhn_probs(const KuhnSpec& spec, const ParamVector& x) {
  std::vector<MatrixXd> probs(spec.players());
  for (int i = 0; i < spec.players(); ++i) {
    const int m = spec.n_sets(i);
    require(x.dim(i) == 2 * m, "kuhn_probs: parameter block size mismatch");
    MatrixXd p(2, m);
    for (int k = 0; k < m; ++k)
      p.col(k) = softmax_clip(x.block(i).segment(2 * k, 2));
    probs[i] = p;
  }
  return probs;
}

}  // namespace nashdyn
