// Tape and gradient-engine tests. Reverse-mode gradients are checked against
// central finite differences (the independent oracle) on composites that
// exercise every operation.
#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "nashdyn/gradient_engine.hpp"

using namespace nashdyn;
using Catch::Approx;

TEST_CASE("grad: bilinear product") {
  // f(x) = x0 * x1 at (1, 0) -> (0, 1)
  TapeFn f = [](ad::Tape& t, ad::Var in) {
    return t.mul(t.entry(in, 0, 0), t.entry(in, 0, 1));
  };
  VectorXd x(2);
  x << 1.0, 0.0;
  VectorXd g = grad(f, x);
  CHECK(g[0] == Approx(0.0).margin(1e-15));
  CHECK(g[1] == Approx(1.0).margin(1e-15));
}

TEST_CASE("grad: constant function is zero") {
  TapeFn f = [](ad::Tape& t, ad::Var) { return t.constant(ad::Mat::Constant(1, 1, 3.5)); };
  VectorXd x = VectorXd::Random(5);
  CHECK(grad(f, x).norm() == 0.0);
}

namespace {

// Composite touching most elementwise/reduction ops.
ad::Var composite_a(ad::Tape& t, ad::Var in) {
  ad::Var a = t.segment(in, 0, 3);
  ad::Var b = t.segment(in, 3, 3);
  ad::Var s = t.sigmoid(a);
  ad::Var e = t.vexp(t.smul(b, 0.3));
  ad::Var m = t.mul(s, e);
  ad::Var d = t.div(m + 1.0, e + 2.0);
  ad::Var sp = t.softplus(t.sub(d, s));
  ad::Var mn = t.min_elem(sp, t.vtanh(b));
  ad::Var q = t.square(mn);
  return t.add(t.sum(q), t.add(t.dot(s, e), t.squared_norm(d)));
}

// Composite touching matmul / reshape / rowvec / softmax / log / row_sum.
ad::Var composite_b(ad::Tape& t, ad::Var in) {
  ad::Var w = t.reshape(t.segment(in, 0, 6), 2, 3);
  ad::Var b = t.segment(in, 6, 3);
  ad::Var x = t.reshape(t.segment(in, 9, 4), 2, 2);
  ad::Var h = t.add_rowvec(t.matmul(x, w), b);  // 2x3
  ad::Var sm = t.softmax_cols(t.reshape(t.segment(in, 9, 3), 3, 1));
  ad::Var lg = t.vlog(sm + 0.1);
  ad::Var rs = t.row_sum(t.vtanh(h));  // 2x1
  ad::Var cat = t.concat_row(std::vector<ad::Var>{t.reshape(rs, 1, 2), t.reshape(lg, 1, 3)});
  return t.mean(t.square(cat));
}

}  // namespace

TEST_CASE("check_gradient: composite functions match finite differences") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    VectorXd x = rng.gaussian_vector(6);
    GradCheck r = check_gradient(composite_a, x);
    CHECK(r.rel_err < 1e-7);
  }
  for (int trial = 0; trial < 20; ++trial) {
    VectorXd x = rng.gaussian_vector(13);
    GradCheck r = check_gradient(composite_b, x);
    CHECK(r.rel_err < 1e-7);
  }
}

TEST_CASE("softmax_cols: columns are distributions; clamped logits get no gradient") {
  ad::Tape t;
  ad::Mat logits(3, 2);
  logits << 1.0, 50.0, -2.0, 0.5, 0.3, -45.0;
  ad::Var in = t.input(logits);
  ad::Var sm = t.softmax_cols(in);
  for (int j = 0; j < 2; ++j) {
    CHECK(t.val(sm).col(j).sum() == Approx(1.0).epsilon(1e-12));
    CHECK(t.val(sm).col(j).minCoeff() >= 0.0);
  }
  t.backward(t.entry(sm, 0, 1));
  ad::Mat g = t.adjoint(in);
  CHECK(g(0, 1) == 0.0);  // logit 50 is clamped
  CHECK(g(2, 1) == 0.0);  // logit -45 is clamped
  CHECK(g(1, 1) != 0.0);
}

TEST_CASE("min_elem: ties send the gradient to the first argument") {
  ad::Tape t;
  ad::Var a = t.input(ad::Mat::Constant(1, 1, 2.0));
  ad::Var b = t.input(ad::Mat::Constant(1, 1, 2.0));
  t.backward(t.min_elem(a, b));
  CHECK(t.adjoint(a)(0, 0) == 1.0);
  CHECK(t.adjoint(b)(0, 0) == 0.0);
}

TEST_CASE("backward: repeated sweeps reset adjoints") {
  ad::Tape t;
  ad::Var in = t.input(ad::Mat::Constant(1, 2, 1.5));
  ad::Var u0 = t.entry(in, 0, 0);
  ad::Var u1 = t.square(t.entry(in, 0, 1));
  t.backward(u0);
  CHECK(t.adjoint(in)(0, 0) == 1.0);
  CHECK(t.adjoint(in)(0, 1) == 0.0);
  t.backward(u1);
  CHECK(t.adjoint(in)(0, 0) == 0.0);
  CHECK(t.adjoint(in)(0, 1) == Approx(3.0));
}

TEST_CASE("pseudogradient: linear function is estimated without bias") {
  VectorXd a(3);
  a << 0.7, -1.2, 0.4;
  TapeFn f = [&a](ad::Tape& t, ad::Var in) {
    return t.dot(in, t.constant(a.transpose()));
  };
  VectorXd x = VectorXd::Zero(3);
  Rng rng(11);
  // For linear f each sample equals (a.eps)eps; the mean converges to a.
  VectorXd est = pseudogradient(f, x, 0.1, 20000, rng);
  for (int i = 0; i < 3; ++i) CHECK(est[i] == Approx(a[i]).margin(0.05));
}

TEST_CASE("pseudogradient: constant function gives exactly zero") {
  TapeFn f = [](ad::Tape& t, ad::Var) { return t.constant(ad::Mat::Constant(1, 1, 4.2)); };
  Rng rng(3);
  VectorXd est = pseudogradient(f, VectorXd::Zero(4), 0.5, 50, rng);
  CHECK(est.norm() == 0.0);
}

TEST_CASE("GradientOracle: all modes agree on a smooth function") {
  TapeFn f = [](ad::Tape& t, ad::Var in) { return t.squared_norm(in); };
  VectorXd x(3);
  x << 0.3, -0.8, 1.1;
  GradientOracle exact;
  GradientOracle fd;
  fd.mode = GradMode::kFiniteDifference;
  GradientOracle ps;
  ps.mode = GradMode::kPseudogradient;
  ps.sigma = 1e-2;
  ps.mc_samples = 40000;
  VectorXd ge = exact.gradient(f, x);
  VectorXd gf = fd.gradient(f, x);
  VectorXd gp = ps.gradient(f, x, Rng(5));
  CHECK((ge - 2.0 * x).norm() == Approx(0.0).margin(1e-12));
  CHECK((gf - ge).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((gp - ge).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("GradientOracle: invalid settings are rejected") {
  GradientOracle o;
  o.fd_step = 0.0;
  TapeFn f = [](ad::Tape& t, ad::Var in) { return t.sum(in); };
  CHECK_THROWS_AS(o.gradient(f, VectorXd::Zero(2)), ConfigError);
}

TEST_CASE("field_jacobian: rotation field recovered exactly") {
  // v(x, y) = (y, -x): J = [[0, 1], [-1, 0]]
  FieldFn v = [](const VectorXd& x) {
    VectorXd out(2);
    out << x[1], -x[0];
    return out;
  };
  VectorXd x(2);
  x << 1.0, 0.0;
  FieldJacobian fj = field_jacobian(v, x, {0, 1, 2});
  CHECK(fj.j(0, 0) == Approx(0.0).margin(1e-9));
  CHECK(fj.j(0, 1) == Approx(1.0).epsilon(1e-9));
  CHECK(fj.j(1, 0) == Approx(-1.0).epsilon(1e-9));
  CHECK(fj.j(1, 1) == Approx(0.0).margin(1e-9));
}

TEST_CASE("jacobian_parts: antisymmetric and block-off-diagonal parts") {
  FieldJacobian fj;
  fj.j.resize(2, 2);
  fj.j << 2, 1, -1, 3;
  fj.offsets = {0, 1, 2};
  auto [ja, jo] = jacobian_parts(fj);
  MatrixXd expect_a(2, 2);
  expect_a << 0, 1, -1, 0;
  CHECK((ja - expect_a).norm() == 0.0);
  // J_a is exactly antisymmetric
  CHECK((ja + ja.transpose()).norm() == 0.0);
  MatrixXd expect_o(2, 2);
  expect_o << 0, 1, -1, 0;
  CHECK((jo - expect_o).norm() == 0.0);
}

TEST_CASE("jacobian_parts: multi-dimensional player blocks") {
  FieldJacobian fj;
  fj.j = MatrixXd::Constant(4, 4, 1.0);
  fj.offsets = {0, 2, 4};
  auto [ja, jo] = jacobian_parts(fj);
  CHECK(jo.block(0, 0, 2, 2).norm() == 0.0);
  CHECK(jo.block(2, 2, 2, 2).norm() == 0.0);
  CHECK(jo.block(0, 2, 2, 2).norm() != 0.0);
  CHECK(ja.norm() == 0.0);  // symmetric matrix has no antisymmetric part
}

TEST_CASE("tape: shape and domain errors are loud") {
  ad::Tape t;
  ad::Var a = t.input(ad::Mat::Zero(2, 2));
  ad::Var b = t.input(ad::Mat::Zero(3, 2));
  CHECK_THROWS_AS(t.mul(a, b), ConfigError);
  CHECK_THROWS_AS(t.entry(a, 5, 0), ConfigError);
  CHECK_THROWS_AS(t.backward(a), ConfigError);  // non-scalar output
  CHECK_THROWS_AS(t.vlog(t.constant(ad::Mat::Constant(1, 1, -1.0))), NumericError);
}
