#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "nashdyn/gradient_engine.hpp"
#include "nashdyn/nn.hpp"

using namespace nashdyn;
using Catch::Approx;

TEST_CASE("mlp: parameter counting") {
  CHECK(Mlp({3, 5, 2}).n_params() == (3 + 1) * 5 + (5 + 1) * 2);
  CHECK(Mlp({2, 1}).n_params() == 3);
  CHECK(Mlp({4, 32, 32, 1}).n_params() == 5 * 32 + 33 * 32 + 33 * 1);
  CHECK(Mlp({3, 5, 2}).layers() == 2);
  CHECK_THROWS_AS(Mlp({7}), ConfigError);
  CHECK_THROWS_AS(Mlp({3, 0, 2}), ConfigError);
}

TEST_CASE("mlp: single linear layer computes x W + b") {
  Mlp net({2, 3});
  // column-major weight storage followed by the bias row
  VectorXd params(9);
  params << 1, 2,   // W col 0
      3, 4,         // W col 1
      5, 6,         // W col 2
      0.5, -1, 2;   // b
  MatrixXd x(2, 2);
  x << 1, 0, 0, 1;
  MatrixXd y = net.forward_value(params, x);
  REQUIRE(y.rows() == 2);
  REQUIRE(y.cols() == 3);
  CHECK(y(0, 0) == Approx(1.5));   // W(0,0) + b0
  CHECK(y(1, 0) == Approx(2.5));   // W(1,0) + b0
  CHECK(y(0, 1) == Approx(2.0));   // W(0,1) + b1
  CHECK(y(0, 2) == Approx(7.0));   // W(0,2) + b2
}

TEST_CASE("mlp: tape forward equals numeric forward") {
  Rng rng(5);
  Mlp net({3, 8, 4, 2});
  VectorXd params = net.he_init(rng);
  // he_init leaves biases zero; perturb them so the test covers bias flow
  params += 0.01 * rng.gaussian_vector(net.n_params());
  MatrixXd x = rng.gaussian_matrix(6, 3);

  ad::Tape t;
  ad::Var pv = t.input(params.transpose());
  ad::Var xv = t.input(x);
  ad::Var y = net.forward(t, pv, xv);
  CHECK((t.val(y) - net.forward_value(params, x)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("mlp: parameter and input gradients match finite differences") {
  Mlp net({2, 5, 1});
  Rng rng(11);
  MatrixXd x = rng.gaussian_matrix(3, 2);

  TapeFn loss_wrt_params = [&](ad::Tape& t, ad::Var in) {
    ad::Var y = net.forward(t, in, t.constant(x));
    return t.mean(t.square(y));
  };
  for (int trial = 0; trial < 5; ++trial) {
    VectorXd params = net.he_init(rng);
    GradCheck r = check_gradient(loss_wrt_params, params);
    CHECK(r.rel_err < 1e-7);
  }

  VectorXd params = net.he_init(rng);
  TapeFn loss_wrt_input = [&](ad::Tape& t, ad::Var in) {
    ad::Var y = net.forward(t, t.constant(params.transpose()), t.reshape(in, 3, 2));
    return t.mean(t.square(y));
  };
  GradCheck r = check_gradient(loss_wrt_input, rng.gaussian_vector(6));
  CHECK(r.rel_err < 1e-7);
}

TEST_CASE("mlp: he initialization statistics") {
  Mlp net({64, 64});
  Rng rng(3);
  VectorXd w = net.he_init(rng);
  VectorXd weights = w.head(64 * 64);
  VectorXd biases = w.tail(64);
  CHECK(biases.cwiseAbs().maxCoeff() == 0.0);
  double mean = weights.mean();
  double var = (weights.array() - mean).square().sum() / (weights.size() - 1);
  CHECK(std::abs(mean) < 0.01);
  CHECK(var == Approx(2.0 / 64.0).epsilon(0.1));

  // fan-in scaling: first-layer variance of a {16,16,...} net is 2/16
  Mlp wide({16, 16, 4});
  VectorXd w2 = wide.he_init(rng);
  VectorXd first = w2.head(16 * 16);
  double v2 = (first.array() - first.mean()).square().sum() / (first.size() - 1);
  CHECK(v2 == Approx(2.0 / 16.0).epsilon(0.25));
}

TEST_CASE("mlp: deterministic given the generator state") {
  Mlp net({4, 7, 2});
  Rng a(123), b(123);
  CHECK(net.he_init(a) == net.he_init(b));
}

TEST_CASE("sigmoid and clipped softmax") {
  MatrixXd z(1, 3);
  z << 0.0, 100.0, -100.0;
  MatrixXd s = sigmoid_value(z);
  CHECK(s(0, 0) == Approx(0.5));
  CHECK(s(0, 1) == Approx(1.0).margin(1e-12));
  CHECK(s(0, 2) == Approx(0.0).margin(1e-12));

  VectorXd logits(3);
  logits << 0.0, 0.0, 0.0;
  VectorXd p = softmax_clip(logits);
  CHECK(p.sum() == Approx(1.0));
  CHECK(p[0] == Approx(1.0 / 3.0));

  // the clamp keeps huge logits finite and matches the tape-side behaviour
  VectorXd big(2);
  big << 1000.0, 0.0;
  VectorXd q = softmax_clip(big);
  CHECK(q.sum() == Approx(1.0));
  CHECK(q[0] == Approx(1.0 / (1.0 + std::exp(-30.0))));

  VectorXd shifted(2);
  shifted << 31.0, 1.0;  // both above the window after the shift? no: clip first
  VectorXd r = softmax_clip(shifted);
  CHECK(r[0] == Approx(1.0 / (1.0 + std::exp(1.0 - 30.0))));
}

TEST_CASE("mlp: shape errors") {
  Mlp net({2, 3});
  Rng rng(1);
  VectorXd params = net.he_init(rng);
  CHECK_THROWS_AS(net.forward_value(params.head(5), MatrixXd::Zero(1, 2)), ConfigError);
  CHECK_THROWS_AS(net.forward_value(params, MatrixXd::Zero(1, 3)), ConfigError);
  ad::Tape t;
  ad::Var pv = t.input(params.transpose());
  CHECK_THROWS_AS(net.forward(t, pv, t.input(ad::Mat::Zero(1, 5))), ConfigError);
}
