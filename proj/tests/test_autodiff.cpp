#include "doctest.h"

#include "dada/autodiff.hpp"
#include "dada/gradcheck_suite.hpp"
#include "dada/random.hpp"

#include <cmath>

using namespace dada;

namespace {

Matrix m22(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

} // namespace

TEST_CASE("forward values of elementwise and structural ops") {
  Tape t;
  const Var a = t.constant(m22(1, -2, 3, -4));
  const Var b = t.constant(m22(0.5, 0.5, 1, 2));
  CHECK(relu(a).value() == m22(1, 0, 3, 0));
  CHECK(abs(a).value() == m22(1, 2, 3, 4));
  CHECK((a + b).value() == m22(1.5, -1.5, 4, -2));
  CHECK((a - b).value() == m22(0.5, -2.5, 2, -6));
  CHECK((2.0 * a).value() == m22(2, -4, 6, -8));
  CHECK(sum(a).scalar() == -2.0);
  CHECK(mean(a).scalar() == -0.5);
  CHECK(lerp(a, b, 0.25).value().isApprox(0.25 * a.value() + 0.75 * b.value()));
  CHECK(matmul(a, b).value().isApprox(a.value() * b.value()));
  CHECK(matmul_nt(a, b).value().isApprox(a.value() * b.value().transpose()));
  Matrix row(1, 2);
  row << 10, 20;
  CHECK(add_row(a, t.constant(row)).value() == m22(11, 18, 13, 16));
  const Var parts[] = {a, b};
  const Var cat = concat_rows(parts);
  CHECK(cat.rows() == 4);
  CHECK(slice_rows(cat, 2, 2).value() == b.value());
  const Index idx[] = {1, 1, 0};
  const Matrix g = gather_rows(a, idx).value();
  CHECK(g.row(0) == a.value().row(1));
  CHECK(g.row(2) == a.value().row(0));
}

TEST_CASE("l2_normalize_rows, softmax_rows and cosine similarity follow their definitions") {
  Rng rng(3);
  Tape t;
  const Matrix x = normal_matrix(5, 4, 0.0, 1.0, rng);
  const Matrix p = normal_matrix(3, 4, 0.0, 1.0, rng);
  const Matrix xn = l2_normalize_rows(t.constant(x)).value();
  for (Index i = 0; i < 5; ++i) CHECK(xn.row(i).norm() == doctest::Approx(1.0).epsilon(1e-14));
  const Matrix sm = softmax_rows(t.constant(x)).value();
  for (Index i = 0; i < 5; ++i) {
    const Eigen::RowVectorXd e = x.row(i).array().exp();
    CHECK((sm.row(i) - e / e.sum()).cwiseAbs().maxCoeff() < 1e-15);
  }
  const Matrix cs = cosine_similarity_matrix(t.constant(xn), l2_normalize_rows(t.constant(p))).value();
  for (Index i = 0; i < 5; ++i)
    for (Index j = 0; j < 3; ++j) CHECK(std::abs(cs(i, j) - x.row(i).dot(p.row(j)) / x.row(i).norm() / p.row(j).norm()) < 1e-14);
}

TEST_CASE("softmax cross-entropy of uniform logits over three classes is ln 3") {
  Tape t;
  const int labels[] = {0, 1, 2, 2};
  const double ce = softmax_cross_entropy(t.constant(Matrix::Constant(4, 3, 0.7)), labels).scalar();
  CHECK(std::abs(ce - std::log(3.0)) <= 1e-12);
}

TEST_CASE("softmax cross-entropy stays finite for large logits") {
  Tape t;
  Matrix logits(2, 2);
  logits << 1000, -1000, -1000, 1000;
  const int labels[] = {1, 0};
  CHECK(softmax_cross_entropy(t.constant(logits), labels).scalar() == doctest::Approx(2000.0));
}

TEST_CASE("invalid arguments are rejected") {
  Tape t;
  const int bad[] = {0, 3};
  CHECK_THROWS_AS(softmax_cross_entropy(t.constant(Matrix::Zero(2, 3)), bad), std::out_of_range);
  CHECK_THROWS_AS(cosine_similarity_matrix(t.constant(Matrix::Ones(2, 3)), t.constant(Matrix::Ones(2, 4))), DimensionError);
  CHECK_THROWS_AS(matmul(t.constant(Matrix::Ones(2, 3)), t.constant(Matrix::Ones(2, 3))), DimensionError);
  CHECK_THROWS_AS(batch_norm_train(t.constant(Matrix::Ones(1, 3)), t.constant(Matrix::Ones(1, 3)), t.constant(Matrix::Zero(1, 3)), 1e-5),
                  ContractError);
}

TEST_CASE("nuclear norm of a diagonal matrix is the sum of absolute diagonal entries") {
  Tape t;
  Matrix d = Matrix::Zero(4, 3);
  d.diagonal() << 3.0, -2.0, 0.5;
  CHECK(nuclear_norm(t.constant(d)).scalar() == doctest::Approx(5.5).epsilon(1e-14));
}

TEST_CASE("nuclear norm gradient at a rank-deficient point is finite") {
  Parameter p("a", Matrix::Zero(3, 2));
  p.value(0, 0) = 1.0;
  Tape t;
  t.backward(nuclear_norm(t.param(p)));
  CHECK(p.grad.allFinite());
  CHECK(p.grad(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("batch_norm_train normalizes every column") {
  Rng rng(5);
  Tape t;
  BatchStats stats;
  const Matrix x = normal_matrix(8, 3, 2.0, 3.0, rng);
  const Matrix y = batch_norm_train(t.constant(x), t.constant(Matrix::Ones(1, 3)), t.constant(Matrix::Zero(1, 3)), 0.0, &stats).value();
  for (Index j = 0; j < 3; ++j) {
    CHECK(std::abs(y.col(j).mean()) < 1e-14);
    CHECK(y.col(j).squaredNorm() / 8.0 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(stats.mean(j) == doctest::Approx(x.col(j).mean()));
  }
}

TEST_CASE("backward accumulates through shared subexpressions") {
  // f(a) = sum(a + a), so df/da = 2 everywhere.
  Parameter p("a", Matrix::Constant(2, 3, 0.3));
  Tape t;
  const Var a = t.param(p);
  t.backward(sum(a + a));
  CHECK(p.grad == Matrix::Constant(2, 3, 2.0));

  // Leaves accumulate across backward passes until zeroed.
  Tape t2;
  t2.backward(sum(t2.param(p)));
  CHECK(p.grad == Matrix::Constant(2, 3, 3.0));
  p.zero_grad();
  CHECK(p.grad.isZero(0.0));
}

TEST_CASE("constants receive no gradient and do not require grad") {
  Tape t;
  const Var c = t.constant(Matrix::Ones(2, 2));
  CHECK_FALSE(c.requires_grad());
  Parameter p("w", Matrix::Ones(2, 2));
  const Var w = t.param(p);
  CHECK(w.requires_grad());
  CHECK(matmul(c, w).requires_grad());
  CHECK_FALSE(relu(c).requires_grad());
}

TEST_CASE("backward needs a scalar output") {
  Tape t;
  Parameter p("w", Matrix::Ones(2, 2));
  CHECK_THROWS(t.backward(t.param(p)));
}

TEST_CASE("grad_check passes on a correct gradient and flags a wrong one") {
  Parameter p("x", Matrix::Constant(1, 3, 0.4));
  Parameter *params[] = {&p};
  const int label[] = {1};
  const auto ok = grad_check([&](Tape &t) { return softmax_cross_entropy(t.param(p), label); }, params);
  CHECK(ok.passed());

  // Deliberately wrong backward: claims d/dx of x is 2.
  const auto bad = grad_check(
      [&](Tape &t) {
        const Var x = t.param(p);
        const Var y = t.record(x.value(), {x}, [x](Tape &tape, const Matrix &g) { tape.accumulate(x, 2.0 * g); });
        return sum(y);
      },
      params);
  CHECK_FALSE(bad.passed());
  CHECK(bad.max_error() > 0.4);
}

TEST_CASE("every registered op and objective passes the finite-difference check") {
  const auto results = run_gradcheck_suite("all", 1e-5, 1e-4, 2);
  CHECK(results.size() == 2 * gradcheck_scopes().size());
  for (const auto &r : results) {
    INFO(r.scope << " seed " << r.seed << " error " << r.report.max_error());
    CHECK(r.report.passed());
  }
}

TEST_CASE("the suite fails at an unreachable tolerance and rejects unknown scopes") {
  const auto results = run_gradcheck_suite("proxy_anchor", 1e-5, 1e-15, 1);
  REQUIRE(results.size() == 1);
  CHECK_FALSE(results[0].report.passed());
  CHECK_THROWS_AS(run_gradcheck_suite("no_such_op"), ConfigError);
}
