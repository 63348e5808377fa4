#include "doctest.h"

#include "dada/optim.hpp"

#include <cmath>

using namespace dada;

TEST_CASE("first Adam step moves each entry by lr against the gradient sign") {
  Parameter p("w", Matrix::Zero(2, 3));
  p.grad << 0.5, -2.0, 1e-3, -1e-2, 4.0, -7.0;
  Parameter *params[] = {&p};
  AdamState state;
  const AdamConfig cfg{0.01, 0.5, 0.999, 1e-8, 0.0, false};
  adam_update(params, state, cfg, "g");
  for (Index i = 0; i < p.value.size(); ++i)
    CHECK(std::abs(p.value.data()[i] + 0.01 * (p.grad.data()[i] > 0 ? 1.0 : -1.0)) < 1e-6);
  CHECK(state.slots[0].step == 1);
}

TEST_CASE("zero gradient and zero decay leave parameters unchanged") {
  Parameter p("w", Matrix::Constant(2, 2, 0.7));
  Parameter *params[] = {&p};
  AdamState state;
  for (int i = 0; i < 5; ++i) adam_update(params, state, AdamConfig{0.1}, "g");
  CHECK(p.value == Matrix::Constant(2, 2, 0.7));
}

TEST_CASE("Adam on a quadratic bowl follows a scalar simulation and keeps decreasing") {
  // f(w) = 0.5 * a * w^2 per coordinate; the oracle is a plain scalar Adam loop.
  const double a = 3.0, w0 = 2.0, lr = 0.05, b1 = 0.5, b2 = 0.999, eps = 1e-8, wd = 1e-3;
  Parameter p("w", Matrix::Constant(1, 1, w0));
  Parameter *params[] = {&p};
  AdamState state;
  const AdamConfig cfg{lr, b1, b2, eps, wd, false};

  double w = w0, m = 0.0, v = 0.0;
  double prev_loss = 0.5 * a * w0 * w0;
  for (int t = 1; t <= 100; ++t) {
    p.grad(0, 0) = a * p.value(0, 0);
    adam_update(params, state, cfg, "bowl");

    const double g = a * w + wd * w;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    w -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);

    CHECK(std::abs(p.value(0, 0) - w) < 1e-12);
    const double loss = 0.5 * a * p.value(0, 0) * p.value(0, 0);
    if (t > 5 && t < 30) CHECK(loss < prev_loss);
    prev_loss = loss;
  }
  CHECK(std::abs(p.value(0, 0)) < 0.1);
}

TEST_CASE("decoupled decay shrinks parameters independently of the moments") {
  Parameter p("w", Matrix::Constant(1, 1, 1.0));
  Parameter *params[] = {&p};
  AdamState state;
  adam_update(params, state, AdamConfig{0.1, 0.5, 0.999, 1e-8, 0.5, true}, "g");
  CHECK(p.value(0, 0) == doctest::Approx(0.95));
}

TEST_CASE("only active slots move and advance their step counters") {
  Parameter a("a", Matrix::Zero(1, 1)), b("b", Matrix::Zero(1, 1));
  a.grad(0, 0) = 1.0;
  b.grad(0, 0) = 1.0;
  Parameter *params[] = {&a, &b};
  AdamState state;
  const size_t active[] = {1};
  adam_update(params, state, AdamConfig{0.1}, "g", active);
  CHECK(a.value(0, 0) == 0.0);
  CHECK(b.value(0, 0) != 0.0);
  CHECK(state.slots[0].step == 0);
  CHECK(state.slots[1].step == 1);
}

TEST_CASE("a non-finite gradient aborts with the group and parameter named") {
  Parameter p("layer.weight", Matrix::Zero(1, 2));
  p.grad(0, 1) = std::nan("");
  Parameter *params[] = {&p};
  AdamState state;
  try {
    adam_update(params, state, AdamConfig{}, "generator");
    FAIL("expected NumericError");
  } catch (const NumericError &e) {
    const std::string msg = e.what();
    CHECK(msg.find("generator") != std::string::npos);
    CHECK(msg.find("layer.weight") != std::string::npos);
  }
}
