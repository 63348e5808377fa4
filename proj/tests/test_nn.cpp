#include "doctest.h"

#include "dada/nn.hpp"

#include <cmath>

using namespace dada;

namespace {

ModelDims tiny_dims() {
  ModelDims d;
  d.input_dim = 6;
  d.generator_hidden = 10;
  d.embed_dim = 5;
  d.domain_hidden = 8;
  d.num_domains = 3;
  d.category_hidden1 = 7;
  d.category_hidden2 = 6;
  d.num_classes = 4;
  return d;
}

// Direct evaluation of an MLP without batch norm: relu between layers, none after the last.
Matrix mlp_oracle(const Mlp &mlp, const Matrix &x) {
  Matrix h = x;
  for (size_t l = 0; l < mlp.layers.size(); ++l) {
    h = (h * mlp.layers[l].weight.value).rowwise() + mlp.layers[l].bias.value.row(0);
    if (l + 1 < mlp.layers.size()) h = h.cwiseMax(0.0);
  }
  return h;
}

} // namespace

TEST_CASE("He initialization has variance 2 / fan_in and zero biases") {
  Rng rng(1);
  const Mlp mlp = init_params(MlpSpec{{400, 300, 10}, false}, rng, "m");
  const Matrix &w = mlp.layers[0].weight.value;
  CHECK(w.rows() == 400);
  CHECK(w.cols() == 300);
  const double var = w.array().square().mean() - w.mean() * w.mean();
  CHECK(var == doctest::Approx(2.0 / 400.0).epsilon(0.03));
  CHECK(mlp.layers[1].bias.value.isZero(0.0));
  CHECK(mlp.layers[0].weight.name == "m.0.weight");
  CHECK(mlp.layers[1].bias.name == "m.1.bias");
}

TEST_CASE("initialization is a pure function of the rng state") {
  Rng a(9), b(9);
  Models ma = build_models(tiny_dims(), a);
  Models mb = build_models(tiny_dims(), b);
  auto pa = ma.generator_parameters(), pb = mb.generator_parameters();
  auto da = ma.discriminator_parameters(), db = mb.discriminator_parameters();
  CHECK(hash_parameters(std::span<Parameter *const>(pa)) == hash_parameters(std::span<Parameter *const>(pb)));
  CHECK(hash_parameters(std::span<Parameter *const>(da)) == hash_parameters(std::span<Parameter *const>(db)));
}

TEST_CASE("MLP forward matches direct evaluation") {
  Rng rng(2);
  Mlp mlp = init_params(MlpSpec{{6, 9, 7, 3}, false}, rng, "m");
  for (auto &l : mlp.layers) l.bias.value = normal_matrix(1, l.bias.value.cols(), 0.0, 0.5, rng);
  const Matrix x = normal_matrix(5, 6, 0.0, 1.0, rng);
  Tape t;
  const Matrix y = mlp.forward(t, t.constant(x)).value();
  CHECK((y - mlp_oracle(mlp, x)).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("input width mismatch is a dimension error") {
  Rng rng(2);
  Mlp mlp = init_params(MlpSpec{{6, 4}, false}, rng, "m");
  Tape t;
  CHECK_THROWS_AS(mlp.forward(t, t.constant(Matrix::Zero(3, 5))), DimensionError);
}

TEST_CASE("generator outputs unit rows") {
  Rng rng(3);
  Models m = build_models(tiny_dims(), rng);
  Tape t;
  const Matrix e = m.generator.forward(t, t.constant(normal_matrix(7, 6, 0.0, 1.0, rng))).value();
  CHECK(e.cols() == 5);
  for (Index i = 0; i < e.rows(); ++i) CHECK(e.row(i).norm() == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("train-mode batch norm updates running statistics with momentum and unbiased variance") {
  Rng rng(4);
  Models m = build_models(tiny_dims(), rng);
  BatchNorm &bn = m.domain.mlp.norms[0];
  const Matrix x = normal_matrix(6, 5, 0.0, 1.0, rng);
  // Pre-normalization activations of the hidden layer.
  const Matrix pre = (x * m.domain.mlp.layers[0].weight.value).rowwise() + m.domain.mlp.layers[0].bias.value.row(0);
  const RowVector mu = pre.colwise().mean();
  const RowVector var_unbiased = (pre.rowwise() - mu).cwiseAbs2().colwise().sum() / 5.0;

  Tape t;
  m.domain.forward(t, t.constant(x), Mode::Train);
  CHECK((bn.running_mean - 0.1 * mu).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((bn.running_var - (0.9 * RowVector::Ones(8) + 0.1 * var_unbiased)).cwiseAbs().maxCoeff() < 1e-14);

  const RowVector mean_before = bn.running_mean;
  Tape t2;
  m.domain.forward(t2, t2.constant(x), Mode::Train, Binding::All, false);
  CHECK(bn.running_mean == mean_before);
}

TEST_CASE("eval-mode batch norm uses running statistics and needs no batch") {
  Rng rng(5);
  Models m = build_models(tiny_dims(), rng);
  BatchNorm &bn = m.domain.mlp.norms[0];
  bn.running_mean = normal_matrix(1, 8, 0.0, 1.0, rng);
  bn.running_var = RowVector::Constant(8, 2.0);
  const Matrix x = normal_matrix(1, 5, 0.0, 1.0, rng);
  Tape t;
  const Matrix y = m.domain.forward(t, t.constant(x), Mode::Eval).value();
  const Matrix pre = (x * m.domain.mlp.layers[0].weight.value).rowwise() + m.domain.mlp.layers[0].bias.value.row(0);
  const Matrix h = ((pre - bn.running_mean).array() / std::sqrt(2.0 + bn.eps)).cwiseMax(0.0).matrix();
  const Matrix oracle = (h * m.domain.mlp.layers[1].weight.value).rowwise() + m.domain.mlp.layers[1].bias.value.row(0);
  CHECK((y - oracle).cwiseAbs().maxCoeff() < 1e-13);
  Tape t2;
  CHECK_THROWS_AS(m.domain.forward(t2, t2.constant(x), Mode::Train), ContractError);
}

TEST_CASE("binding controls which parameters receive gradients") {
  Rng rng(6);
  Models m = build_models(tiny_dims(), rng);
  const Matrix x = normal_matrix(4, 6, 0.0, 1.0, rng);
  auto params = m.generator.mlp.parameters();
  auto run = [&](Binding b) {
    for (auto *p : params) p->zero_grad();
    Tape t;
    const Var e = m.generator.forward(t, t.constant(x), b);
    if (e.requires_grad()) t.backward(sum(matmul_nt(e, t.constant(Matrix::Ones(1, 5)))));
  };
  run(Binding::None);
  for (auto *p : params) CHECK(p->grad.isZero(0.0));
  run(Binding::HeadOnly);
  CHECK(params[0]->grad.isZero(0.0));
  CHECK(params[1]->grad.isZero(0.0));
  CHECK_FALSE(params[2]->grad.isZero(0.0));
  run(Binding::All);
  CHECK_FALSE(params[0]->grad.isZero(0.0));
}

TEST_CASE("parameter hash reacts to any single-bit change") {
  Rng rng(7);
  Models m = build_models(tiny_dims(), rng);
  auto params = m.discriminator_parameters();
  const auto h0 = hash_parameters(std::span<Parameter *const>(params));
  CHECK(h0 == hash_parameters(std::span<Parameter *const>(params)));
  params.back()->value(0, 0) = std::nextafter(params.back()->value(0, 0), 1.0);
  CHECK(h0 != hash_parameters(std::span<Parameter *const>(params)));
}

TEST_CASE("model dims round-trip through Models::dims") {
  Rng rng(8);
  const ModelDims d = tiny_dims();
  const Models m = build_models(d, rng);
  const ModelDims back = m.dims();
  CHECK(back.input_dim == d.input_dim);
  CHECK(back.generator_hidden == d.generator_hidden);
  CHECK(back.embed_dim == d.embed_dim);
  CHECK(back.domain_hidden == d.domain_hidden);
  CHECK(back.num_domains == d.num_domains);
  CHECK(back.category_hidden1 == d.category_hidden1);
  CHECK(back.category_hidden2 == d.category_hidden2);
  CHECK(back.num_classes == d.num_classes);
  CHECK(m.bank.proxies.value.rows() == 4);
  CHECK(m.bank.proxies.value.cols() == 5);
}
