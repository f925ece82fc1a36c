#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "gblab/adam.hpp"
#include "gblab/tape.hpp"

using namespace gblab;
using ad::Tape;
using ad::Var;

namespace {

// Random entries bounded away from zero so relu/sign kinks never sit inside a
// finite-difference stencil.
Mat random_safe(int rows, int cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> mag(0.2, 1.2);
  std::bernoulli_distribution flip(0.5);
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = (flip(rng) ? 1 : -1) * mag(rng);
  return m;
}

SpMat random_sparse(int rows, int cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0, 1);
  std::vector<Eigen::Triplet<double>> trips;
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      if (unit(rng) < 0.4) trips.emplace_back(i, j, unit(rng) - 0.5);
  SpMat s(rows, cols);
  s.setFromTriplets(trips.begin(), trips.end());
  return s;
}

}  // namespace

TEST_CASE("matmul forward and backward match the hand calculation") {
  Tape t;
  Mat av(2, 2), bv(2, 2);
  av << 1, 2, 3, 4;
  bv << 5, 6, 7, 8;
  Var a = t.param(av), b = t.param(bv);
  Var c = ad::matmul(a, b);

  Mat want(2, 2);
  want << 19, 22, 43, 50;
  CHECK(t.value(c) == want);

  t.backward(ad::sum_all(c));
  // d(sum)/dA = 1 * B^T: every row holds B's row sums [11, 15].
  Mat da(2, 2), db(2, 2);
  da << 11, 15, 11, 15;
  db << 4, 4, 6, 6;  // A^T * 1: A's column sums down each row
  CHECK(t.grad(a) == da);
  CHECK(t.grad(b) == db);
}

TEST_CASE("matmul_nt equals multiplying by the explicit transpose") {
  std::mt19937_64 rng(1);
  Mat av = random_safe(3, 4, rng), bv = random_safe(2, 4, rng);
  Tape t;
  Var c = ad::matmul_nt(t.param(av), t.param(bv));
  CHECK((t.value(c) - av * bv.transpose()).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("cross entropy matches closed forms to 1e-12") {
  Tape t;
  Mat z1(1, 2);
  z1 << 1, 2;
  double l1 = t.value(ad::cross_entropy(t.constant(z1), {1}))(0, 0);
  CHECK(l1 == doctest::Approx(std::log1p(std::exp(-1.0))).epsilon(1e-12));

  Mat z2(2, 2);
  z2 << 0, 0, 1, 3;
  double l2 = t.value(ad::cross_entropy(t.constant(z2), {0, 1}))(0, 0);
  double want = (std::log(2.0) + std::log1p(std::exp(-2.0))) / 2.0;
  CHECK(std::abs(l2 - want) < 1e-12);
}

TEST_CASE("cross entropy of uniform logits is ln C") {
  for (int c = 2; c <= 7; ++c) {
    Tape t;
    Mat z = Mat::Zero(5, c);
    std::vector<int> labels{0, c - 1, c / 2, 0, c - 1};
    double loss = t.value(ad::cross_entropy(t.constant(z), labels))(0, 0);
    CHECK(std::abs(loss - std::log(static_cast<double>(c))) < 1e-12);
  }
}

TEST_CASE("cross entropy gradient and clamping behave as documented") {
  Tape t;
  Mat z = Mat::Zero(1, 2);
  Var logits = t.param(z);
  t.backward(ad::cross_entropy(logits, {0}));
  Mat want(1, 2);
  want << -0.5, 0.5;  // softmax minus one-hot
  CHECK((t.grad(logits) - want).cwiseAbs().maxCoeff() < 1e-12);

  Mat extreme(1, 2);
  extreme << -1000, 1000;
  double clamped = t.value(ad::cross_entropy(t.constant(extreme), {0}))(0, 0);
  CHECK(clamped == doctest::Approx(-std::log(1e-12)).epsilon(1e-12));

  CHECK_THROWS_AS(ad::cross_entropy(t.constant(z), {0, 1}), std::runtime_error);
  CHECK_THROWS_AS(ad::cross_entropy(t.constant(z), {5}), std::runtime_error);
}

TEST_CASE("parameters off the loss path keep zero gradients") {
  Tape t;
  Var used = t.param(Mat::Ones(2, 2));
  Var unused = t.param(Mat::Ones(3, 3));
  t.backward(ad::sum_all(used));
  CHECK(t.grad(used) == Mat::Ones(2, 2));
  CHECK(t.grad(unused).isZero());
}

TEST_CASE("elementwise ops, affine and add_rowvec match direct arithmetic") {
  Mat av(2, 2), bv(2, 2), rv(1, 2);
  av << 1, -2, 3, 4;
  bv << 5, 6, -7, 8;
  rv << 10, 20;
  Tape t;
  Var a = t.param(av), b = t.param(bv), r = t.param(rv);
  CHECK(t.value(ad::add(a, b)) == Mat(av + bv));
  CHECK(t.value(ad::sub(a, b)) == Mat(av - bv));
  CHECK(t.value(ad::mul(a, b)) == Mat(av.cwiseProduct(bv)));
  CHECK(t.value(ad::affine(a, 2.0, 1.0)) == Mat((2.0 * av).array() + 1.0));
  CHECK(t.value(ad::add_rowvec(a, r)) == Mat(av.rowwise() + rv.row(0)));

  t.backward(ad::sum_all(ad::add_rowvec(a, r)));
  CHECK(t.grad(a) == Mat::Ones(2, 2));
  CHECK(t.grad(r) == Mat(Mat::Constant(1, 2, 2.0)));  // one per broadcast row
}

TEST_CASE("activations match their definitions") {
  Mat zv(1, 4);
  zv << -1.5, -0.25, 0.25, 2.0;
  Tape t;
  Var z = t.param(zv);
  Mat r = t.value(ad::relu(z));
  CHECK(r(0, 0) == 0.0);
  CHECK(r(0, 1) == 0.0);
  CHECK(r(0, 2) == 0.25);
  CHECK(r(0, 3) == 2.0);

  t.backward(ad::sum_all(ad::relu(z)));
  Mat want_grad(1, 4);
  want_grad << 0, 0, 1, 1;
  CHECK(t.grad(z) == want_grad);

  CHECK(t.value(ad::sigmoid(t.constant(Mat::Zero(1, 1))))(0, 0) == 0.5);
  Mat s = t.value(ad::sigmoid(t.constant(zv)));
  for (int j = 0; j < 4; ++j)
    CHECK(s(0, j) == doctest::Approx(1.0 / (1.0 + std::exp(-zv(0, j)))).epsilon(1e-14));

  Mat logits(2, 3);
  logits << 0, 0, 0, 1, 2, 3;
  Mat sm = t.value(ad::row_softmax(t.constant(logits)));
  CHECK(sm.row(0).sum() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(sm.row(1).sum() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(sm(0, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(sm(1, 2) > sm(1, 1));
}

TEST_CASE("gather accumulates into repeated source rows") {
  Mat av(3, 2);
  av << 1, 2, 3, 4, 5, 6;
  Tape t;
  Var a = t.param(av);
  Var g = ad::gather_rows(a, {2, 0, 2});
  Mat want(3, 2);
  want << 5, 6, 1, 2, 5, 6;
  CHECK(t.value(g) == want);

  t.backward(ad::sum_all(g));
  Mat want_grad(3, 2);
  want_grad << 1, 1, 0, 0, 2, 2;  // row 2 appears twice
  CHECK(t.grad(a) == want_grad);
}

TEST_CASE("concatenation and reductions match direct arithmetic") {
  Mat av(2, 2), bv(1, 2);
  av << 1, 2, 3, 4;
  bv << 5, 6;
  Tape t;
  Var a = t.param(av), b = t.param(bv);

  Mat stacked = t.value(ad::concat_rows({a, b}));
  CHECK(stacked.rows() == 3);
  CHECK(stacked.row(2) == bv.row(0));

  Mat wide = t.value(ad::concat_cols(a, ad::matmul_nt(a, a)));
  CHECK(wide.cols() == 4);
  CHECK(wide.block(0, 0, 2, 2) == av);

  CHECK(t.value(ad::sum_all(a))(0, 0) == 10.0);
  CHECK(t.value(ad::sum_rows(a)) == Mat(av.colwise().sum()));
  CHECK(t.value(ad::mean_rows(a)) == Mat(av.colwise().mean()));

  Mat cv(2, 2);
  cv << 10, 20, 30, 40;
  Var c = t.param(cv);
  Mat dots = t.value(ad::row_dot(a, c));
  CHECK(dots.rows() == 2);
  CHECK(dots.cols() == 1);
  CHECK(dots(0, 0) == 1 * 10 + 2 * 20);
  CHECK(dots(1, 0) == 3 * 30 + 4 * 40);
}

TEST_CASE("l2_normalize_rows yields unit rows and keeps zero rows zero") {
  Mat av(3, 3);
  av << 3, 4, 0, 0, 0, 0, 1, 1, 1;
  Tape t;
  Mat n = t.value(ad::l2_normalize_rows(t.param(av)));
  CHECK(n.row(0).norm() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(n(0, 0) == doctest::Approx(0.6).epsilon(1e-14));
  CHECK(n.row(1).isZero());
  CHECK(n.row(2).norm() == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("InfoNCE on orthonormal views matches the closed form") {
  // u = v = I: every anchor has positive similarity 1 and two zero-similarity
  // negatives, so the loss is log(1 + 2 exp(-1/tau)) for any tau.
  for (double tau : {0.25, 0.5, 1.0}) {
    Tape t;
    Var u = t.param(Mat::Identity(2, 2));
    Var v = t.param(Mat::Identity(2, 2));
    double loss = t.value(ad::info_nce_normalized(u, v, tau))(0, 0);
    CHECK(loss == doctest::Approx(std::log1p(2.0 * std::exp(-1.0 / tau))).epsilon(1e-12));
  }
  Tape t;
  CHECK_THROWS_AS(ad::info_nce_normalized(t.param(Mat::Identity(2, 2)),
                                          t.param(Mat::Identity(2, 2)), 0.0),
                  std::runtime_error);
}

TEST_CASE("backward rejects non-scalar losses and foreign tapes") {
  Tape t, other;
  Var a = t.param(Mat::Ones(2, 2));
  CHECK_THROWS_AS(t.backward(a), std::runtime_error);
  Var b = other.param(Mat::Ones(2, 2));
  CHECK_THROWS_AS(t.backward(ad::sum_all(b)), std::runtime_error);
}

TEST_CASE("gradient check passes for every differentiable primitive") {
  std::mt19937_64 rng(7);
  const double h = 1e-5, tol = 1e-4;
  auto run = [&](const char* name,
                 const std::function<Var(Tape&, const std::vector<Var>&)>& build,
                 std::vector<Mat> params) {
    double err = ad::grad_check(build, params, h);
    INFO("primitive: " << name);
    CHECK(err <= tol);
  };

  for (int trial = 0; trial < 5; ++trial) {
    Mat a = random_safe(3, 4, rng), b = random_safe(4, 2, rng);
    Mat same = random_safe(3, 4, rng), row = random_safe(1, 4, rng);
    SpMat sp = random_sparse(5, 3, rng);

    run("matmul", [](Tape&, const std::vector<Var>& p) {
      return ad::sum_all(ad::matmul(p[0], p[1]));
    }, {a, b});
    run("matmul_nt", [](Tape&, const std::vector<Var>& p) {
      return ad::sum_all(ad::matmul_nt(p[0], p[1]));
    }, {a, same});
    run("spmm", [sp](Tape&, const std::vector<Var>& p) {
      return ad::sum_all(ad::spmm(sp, p[0]));
    }, {a});
    run("add/sub/mul", [](Tape&, const std::vector<Var>& p) {
      return ad::sum_all(ad::mul(ad::add(p[0], p[1]), ad::sub(p[0], p[1])));
    }, {a, same});
    run("affine", [](Tape&, const std::vector<Var>& p) {
      return ad::sum_all(ad::affine(p[0], -1.7, 0.3));
    }, {a});
    run("add_rowvec", [](Tape&, const std::vector<Var>& p) {
      return ad::sum_all(ad::mul(ad::add_rowvec(p[0], p[1]), p[0]));
    }, {a, row});
    run("relu", [](Tape&, const std::vector<Var>& p) {
      return ad::sum_all(ad::mul(ad::relu(p[0]), p[0]));
    }, {a});
    run("sigmoid", [](Tape&, const std::vector<Var>& p) {
      return ad::sum_all(ad::sigmoid(p[0]));
    }, {a});
    run("row_softmax", [](Tape&, const std::vector<Var>& p) {
      return ad::sum_all(ad::mul(ad::row_softmax(p[0]), p[0]));
    }, {a});
    run("cross_entropy", [](Tape&, const std::vector<Var>& p) {
      return ad::cross_entropy(p[0], {1, 0, 1});
    }, {Mat(random_safe(3, 2, rng))});
    run("gather_rows", [](Tape&, const std::vector<Var>& p) {
      return ad::sum_all(ad::mul(ad::gather_rows(p[0], {2, 0, 2, 1}),
                                 ad::gather_rows(p[0], {0, 1, 1, 2})));
    }, {a});
    run("concat_rows", [](Tape&, const std::vector<Var>& p) {
      Var c = ad::concat_rows({p[0], p[1]});
      return ad::sum_all(ad::mul(c, c));
    }, {a, same});
    run("concat_cols", [](Tape&, const std::vector<Var>& p) {
      Var c = ad::concat_cols(p[0], p[1]);
      return ad::sum_all(ad::mul(c, c));
    }, {a, same});
    run("sum/mean_rows", [](Tape&, const std::vector<Var>& p) {
      return ad::sum_all(ad::mul(ad::sum_rows(p[0]), ad::mean_rows(p[1])));
    }, {a, same});
    run("row_dot", [](Tape&, const std::vector<Var>& p) {
      Var d = ad::row_dot(p[0], p[1]);
      return ad::sum_all(ad::mul(d, d));
    }, {a, same});
    run("l2_normalize_rows", [](Tape&, const std::vector<Var>& p) {
      return ad::sum_all(ad::mul(ad::l2_normalize_rows(p[0]), p[0]));
    }, {a});
    run("info_nce", [](Tape&, const std::vector<Var>& p) {
      return ad::info_nce_normalized(ad::l2_normalize_rows(p[0]),
                                     ad::l2_normalize_rows(p[1]), 0.5);
    }, {a, same});
  }
}

TEST_CASE("adam takes bias-corrected steps and is deterministic") {
  Mat p = Mat::Zero(1, 1);
  Mat g = Mat::Constant(1, 1, 3.0);
  AdamState opt({0.1, 0.9, 0.999, 1e-8});
  opt.step({&p}, {&g});
  // Bias correction makes the first step lr * g / (|g| + ~eps) = -lr.
  CHECK(p(0, 0) == doctest::Approx(-0.1).epsilon(1e-6));
  CHECK(opt.steps() == 1);

  // Same gradient stream, same trajectory.
  Mat p1 = Mat::Ones(2, 3), p2 = Mat::Ones(2, 3);
  AdamState o1, o2;
  std::mt19937_64 rng(5);
  for (int i = 0; i < 25; ++i) {
    Mat grad = random_safe(2, 3, rng);
    o1.step({&p1}, {&grad});
    o2.step({&p2}, {&grad});
  }
  CHECK(p1 == p2);
  CHECK((p1 - Mat::Ones(2, 3)).cwiseAbs().maxCoeff() > 0.01);  // actually moved
}
