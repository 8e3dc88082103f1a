#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "nashdyn/eval.hpp"
#include "nashdyn/games.hpp"
#include "nashdyn/gradient_engine.hpp"

using namespace nashdyn;
using Catch::Approx;

namespace {

// Logits whose clipped softmax plays action 1 with probability p (saturated
// at +-18, far past double precision for the payoffs involved).
void set_logits(ParamVector& x, int player, int set, double p) {
  double l1;
  if (p <= 0.0)
    l1 = -18.0;
  else if (p >= 1.0)
    l1 = 18.0;
  else
    l1 = 0.5 * std::log(p / (1.0 - p));
  x.block(player)[2 * set] = -l1;
  x.block(player)[2 * set + 1] = l1;
}

// The one-parameter equilibrium family of two-player Kuhn poker, indexed by
// the first player's jack-bluff probability alpha in [0, 1/3]. Infoset
// columns are hist * 3 + card with cards (J, Q, K) = (0, 1, 2); histories are
// 0 = first decision, 1 = facing a bet. Row 1 is bet at the first decision
// and call when facing a bet.
ParamVector kuhn2_equilibrium(const Game& g, double alpha) {
  ParamVector x = g.zeros();
  // player 0 opening bets: J alpha, Q never, K 3*alpha
  set_logits(x, 0, 0, alpha);
  set_logits(x, 0, 1, 0.0);
  set_logits(x, 0, 2, 3.0 * alpha);
  // player 0 calls after check-bet: J never, Q alpha + 1/3, K always
  set_logits(x, 0, 3, 0.0);
  set_logits(x, 0, 4, alpha + 1.0 / 3.0);
  set_logits(x, 0, 5, 1.0);
  // player 1 bets after a check: J 1/3, Q never, K always
  set_logits(x, 1, 0, 1.0 / 3.0);
  set_logits(x, 1, 1, 0.0);
  set_logits(x, 1, 2, 1.0);
  // player 1 calls a bet: J never, Q 1/3, K always
  set_logits(x, 1, 3, 0.0);
  set_logits(x, 1, 4, 1.0 / 3.0);
  set_logits(x, 1, 5, 1.0);
  return x;
}

ParamVector random_profile(const Game& g, Rng& rng) {
  ParamVector x = g.zeros();
  for (int i = 0; i < g.players; ++i) x.block(i) = rng.gaussian_vector(x.dim(i));
  return x;
}

}  // namespace

TEST_CASE("kuhn structure") {
  Game g2 = make_game("kuhn2");
  REQUIRE(g2.kuhn != nullptr);
  const KuhnSpec& k2 = *g2.kuhn;
  CHECK(k2.players() == 2);
  CHECK(k2.n_sets(0) == 6);  // 2 histories x 3 cards
  CHECK(k2.n_sets(1) == 6);
  CHECK(k2.param_dim(0) == 12);
  CHECK(k2.deal_prob() == Approx(1.0 / 6.0));

  Game g3 = make_game("kuhn3");
  const KuhnSpec& k3 = *g3.kuhn;
  CHECK(k3.players() == 3);
  for (int i = 0; i < 3; ++i) CHECK(k3.n_sets(i) == 16);  // 4 histories x 4 cards
  CHECK(k3.deal_prob() == Approx(1.0 / 24.0));
  CHECK(g3.total_dim() == 3 * 32);
}

TEST_CASE("kuhn2: the classic equilibrium family has value -1/18 and zero regret") {
  Game g = make_game("kuhn2");
  for (double alpha : {0.0, 1.0 / 6.0, 1.0 / 3.0}) {
    ParamVector x = kuhn2_equilibrium(g, alpha);
    std::vector<MatrixXd> probs = kuhn_probs(*g.kuhn, x);

    std::vector<double> u = g.kuhn->expected(probs);
    INFO("alpha = " << alpha);
    CHECK(u[0] == Approx(-1.0 / 18.0).margin(1e-10));
    CHECK(u[1] == Approx(1.0 / 18.0).margin(1e-10));

    for (int i = 0; i < 2; ++i) {
      auto [br_value, br] = g.kuhn->best_response(i, probs);
      CHECK(br_value == Approx(u[i]).margin(1e-10));  // no profitable deviation
    }
    CHECK(exact_exploitability(g, x).phi == Approx(0.0).margin(1e-9));
  }
}

TEST_CASE("kuhn2: off-equilibrium profiles are exploitable") {
  Game g = make_game("kuhn2");
  // a player 0 who never bets and never calls loses the pot to any bet
  ParamVector x = g.zeros();
  for (int s = 0; s < 6; ++s) set_logits(x, 0, s, 0.0);
  for (int s = 0; s < 6; ++s) set_logits(x, 1, s, 0.5);
  std::vector<MatrixXd> probs = kuhn_probs(*g.kuhn, x);
  auto [br_value, br] = g.kuhn->best_response(1, probs);
  CHECK(br_value == Approx(1.0).margin(1e-9));  // bet every card, win every ante
  CHECK(exact_exploitability(g, x).phi > 0.5);
}

TEST_CASE("kuhn2: recursive best response matches full enumeration") {
  Game g = make_game("kuhn2");
  Rng rng(29);
  for (int trial = 0; trial < 10; ++trial) {
    ParamVector x = random_profile(g, rng);
    std::vector<MatrixXd> probs = kuhn_probs(*g.kuhn, x);
    for (int i = 0; i < 2; ++i) {
      auto [fast, br] = g.kuhn->best_response(i, probs);
      double brute = g.kuhn->best_response_enumerated(i, probs);
      CHECK(fast == Approx(brute).margin(1e-12));
      // the returned strategy is pure and realizes the value
      CHECK((br.colwise().sum().array() == 1.0).all());
      std::vector<MatrixXd> mixed = probs;
      mixed[i] = br;
      CHECK(g.kuhn->expected(mixed)[i] == Approx(fast).margin(1e-12));
    }
  }
}

TEST_CASE("kuhn3: best response dominates the current strategy and random deviations") {
  Game g = make_game("kuhn3");
  Rng rng(31);
  for (int trial = 0; trial < 3; ++trial) {
    ParamVector x = random_profile(g, rng);
    std::vector<MatrixXd> probs = kuhn_probs(*g.kuhn, x);
    std::vector<double> u = g.kuhn->expected(probs);
    double total = 0;
    for (int i = 0; i < 3; ++i) {
      auto [br_value, br] = g.kuhn->best_response(i, probs);
      CHECK(br_value >= u[i] - 1e-12);
      for (int dev = 0; dev < 20; ++dev) {
        MatrixXd pure = MatrixXd::Zero(2, g.kuhn->n_sets(i));
        for (int s = 0; s < g.kuhn->n_sets(i); ++s) pure(rng.uniform_int(2), s) = 1.0;
        std::vector<MatrixXd> mixed = probs;
        mixed[i] = pure;
        CHECK(br_value >= g.kuhn->expected(mixed)[i] - 1e-12);
      }
      total += u[i];
    }
    CHECK(total == Approx(0.0).margin(1e-10));
  }
}

TEST_CASE("kuhn utilities: hand-written adjoints match finite differences") {
  for (const std::string& id : {"kuhn2", "kuhn3"}) {
    Game g = make_game(id);
    std::vector<int> dims = g.dims;
    TapeFn f = [&g, dims](ad::Tape& t, ad::Var in) {
      std::vector<ad::Var> per(dims.size());
      int off = 0;
      for (std::size_t i = 0; i < dims.size(); ++i) {
        per[i] = t.segment(in, off, dims[i]);
        off += dims[i];
      }
      std::vector<ad::Var> u = g.utility(t, per, Rng(0));
      // weighted combination exercises every player's adjoint path
      ad::Var acc = u[0];
      for (std::size_t i = 1; i < u.size(); ++i)
        acc = t.add(acc, t.smul(u[i], 0.37 + 0.11 * static_cast<double>(i)));
      return acc;
    };
    Rng rng(37);
    for (int trial = 0; trial < 3; ++trial) {
      VectorXd x = 0.7 * rng.gaussian_vector(g.total_dim());
      GradCheck r = check_gradient(f, x);
      INFO(id);
      CHECK(r.rel_err < 1e-7);
    }
  }
}

TEST_CASE("kuhn2: betting changes the pot as the rules dictate") {
  Game g = make_game("kuhn2");
  // both players always bet/call: every showdown is for a pot of 4
  ParamVector x = g.zeros();
  for (int i = 0; i < 2; ++i)
    for (int s = 0; s < 6; ++s) set_logits(x, i, s, 1.0);
  std::vector<double> u = g.kuhn->expected(kuhn_probs(*g.kuhn, x));
  // player 0 bets, player 1 calls; higher card wins +2, loses -2, net 0 by symmetry
  CHECK(u[0] == Approx(0.0).margin(1e-9));
  CHECK(u[1] == Approx(0.0).margin(1e-9));

  // always-check showdowns are for the antes only: +-1
  ParamVector y = g.zeros();
  for (int i = 0; i < 2; ++i)
    for (int s = 0; s < 6; ++s) set_logits(y, i, s, 0.0);
  std::vector<double> v = g.kuhn->expected(kuhn_probs(*g.kuhn, y));
  CHECK(v[0] == Approx(0.0).margin(1e-9));
}
