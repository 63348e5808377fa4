#include "doctest.h"

#include "dada/trainer.hpp"

#include <set>

using namespace dada;

namespace {

FeatureDataset small_data(int classes = 6, int per_class = 12, Index dim = 5) {
  SynthSpec spec;
  spec.num_classes = classes;
  spec.samples_per_class = per_class;
  spec.dim = dim;
  return synth_generate(spec);
}

HyperParams small_hp() {
  HyperParams hp;
  hp.batch_size = 12;
  hp.samples_per_class = 3;
  hp.weights.eta = 0.01;
  return hp;
}

ModelDims small_dims() {
  ModelDims d;
  d.generator_hidden = 16;
  d.embed_dim = 8;
  d.domain_hidden = 12;
  d.category_hidden1 = 10;
  d.category_hidden2 = 8;
  return d;
}

std::uint64_t hash_of(std::vector<Parameter *> params) { return hash_parameters(std::span<Parameter *const>(params)); }

std::vector<Parameter *> generator_side(Models &m) {
  auto p = m.generator.mlp.parameters();
  p.push_back(&m.bank.proxies);
  return p;
}

std::vector<Parameter *> discriminator_side(Models &m) {
  auto p = m.domain.mlp.parameters();
  for (auto *q : m.category.mlp.parameters()) p.push_back(q);
  return p;
}

std::vector<Matrix> running_stats(Models &m) {
  std::vector<Matrix> out;
  for (auto &bn : m.domain.mlp.norms) {
    out.push_back(bn.running_mean);
    out.push_back(bn.running_var);
  }
  return out;
}

} // namespace

TEST_CASE("class-balanced batches hold distinct classes with distinct members") {
  const FeatureDataset data = small_data();
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const Batch b = class_balanced_batch(data, 12, 3, rng);
    REQUIRE(b.indices.size() == 12);
    std::set<Index> rows(b.indices.begin(), b.indices.end());
    CHECK(rows.size() == 12);
    std::set<int> classes(b.labels.begin(), b.labels.end());
    CHECK(classes.size() == 4);
    for (size_t i = 0; i < b.indices.size(); ++i) {
      CHECK(data.labels[static_cast<size_t>(b.indices[i])] == b.labels[i]);
      CHECK(b.raw.row(static_cast<Index>(i)) == data.features.row(b.indices[i]));
    }
  }
}

TEST_CASE("class-balanced sampling picks classes uniformly") {
  const FeatureDataset data = small_data(8, 4);
  Rng rng(2);
  std::vector<int> counts(8, 0);
  const int n = 8000;
  for (int t = 0; t < n; ++t)
    for (int y : distinct_in_order(class_balanced_batch(data, 4, 2, rng).labels)) ++counts[static_cast<size_t>(y)];
  // Each class appears in a batch with probability 2/8.
  const double expected = n * 0.25;
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  CHECK(chi2 < 24.32);  // p = 0.001 critical value, 7 degrees of freedom
}

TEST_CASE("an infeasible batch request names the deficient classes") {
  FeatureDataset data = small_data(3, 4);
  data.class_index[1].resize(1);
  Rng rng(3);
  try {
    class_balanced_batch(data, 9, 3, rng);
    FAIL("expected ConfigError");
  } catch (const ConfigError &e) {
    CHECK(std::string(e.what()).find("deficient classes: 1") != std::string::npos);
  }
  CHECK_THROWS_AS(class_balanced_batch(data, 2, 3, rng), ConfigError);
}

TEST_CASE("discriminator phase runs k updates and leaves the generator side untouched") {
  Trainer tr(small_hp(), small_dims(), small_data());
  const Batch batch = tr.sample_batch();
  const MixPlan plan = tr.sample_plan(batch);
  const auto gen_before = hash_of(generator_side(tr.models()));
  const auto disc_before = hash_of(discriminator_side(tr.models()));
  const StepLosses l = tr.discriminator_phase(tr.prepare_mix(batch, plan));
  CHECK(l.adv.has_value());
  CHECK(l.cls.has_value());
  CHECK(l.discrepancy.has_value());
  CHECK(hash_of(generator_side(tr.models())) == gen_before);
  CHECK(hash_of(discriminator_side(tr.models())) != disc_before);
  CHECK(tr.optimizer().domain.slots.at(0).step == 3);
  CHECK(tr.optimizer().category.slots.at(0).step == 3);
  CHECK(tr.optimizer().generator.slots.empty());
}

TEST_CASE("generator phase leaves discriminator parameters and running statistics untouched") {
  Trainer tr(small_hp(), small_dims(), small_data());
  const Batch batch = tr.sample_batch();
  const MixPlan plan = tr.sample_plan(batch);
  tr.discriminator_phase(tr.prepare_mix(batch, plan));
  const auto disc_before = hash_of(discriminator_side(tr.models()));
  const auto stats_before = running_stats(tr.models());
  const auto gen_before = hash_of(generator_side(tr.models()));
  tr.generator_phase(batch, plan, false);
  CHECK(hash_of(discriminator_side(tr.models())) == disc_before);
  CHECK(running_stats(tr.models()) == stats_before);
  CHECK(hash_of(generator_side(tr.models())) != gen_before);
}

TEST_CASE("warm-up moves only the last generator layer") {
  Trainer tr(small_hp(), small_dims(), small_data());
  auto params = tr.models().generator.mlp.parameters();
  std::vector<Matrix> before;
  for (auto *p : params) before.push_back(p->value);
  const Batch batch = tr.sample_batch();
  tr.generator_phase(batch, tr.sample_plan(batch), true);
  const size_t n = params.size();
  for (size_t i = 0; i + 2 < n; ++i) CHECK(params[i]->value == before[i]);
  CHECK(params[n - 2]->value != before[n - 2]);
  CHECK(params[n - 1]->value != before[n - 1]);
}

TEST_CASE("with DADA disabled the trainer matches a plain proxy-anchor loop") {
  HyperParams hp = small_hp();
  hp.dada_enabled = false;
  hp.warmup_epochs = 0;
  const FeatureDataset data = small_data();
  Trainer tr(hp, small_dims(), data);

  // Reference: same initialization stream, same batches, in-batch proxies, one Adam step per group.
  Rng rng(hp.seed);
  ModelDims dims = small_dims();
  dims.input_dim = data.dim();
  dims.num_classes = data.num_classes;
  dims.num_domains = 3;
  Models ref = build_models(dims, rng);
  AdamState gen_state, proxy_state;
  const AdamConfig gen_cfg{hp.lr_gen, hp.adam_beta1, hp.adam_beta2, hp.adam_eps, hp.weight_decay, false};
  const AdamConfig proxy_cfg{hp.lr_proxy, hp.adam_beta1, hp.adam_beta2, hp.adam_eps, 0.0, false};

  for (int it = 0; it < 4; ++it) {
    tr.iteration(false);

    const Batch b = class_balanced_batch(data, hp.batch_size, hp.samples_per_class, rng);
    const std::vector<int> classes = distinct_in_order(b.labels);
    Labels local;
    for (int y : b.labels) local.push_back(static_cast<int>(std::find(classes.begin(), classes.end(), y) - classes.begin()));
    auto gen_params = ref.generator.mlp.parameters();
    for (auto *p : gen_params) p->zero_grad();
    ref.bank.proxies.zero_grad();
    Tape t;
    const Var x = ref.generator.forward(t, t.constant(b.raw));
    const Var p = l2_normalize_rows(gather_rows(t.param(ref.bank.proxies), std::vector<Index>(classes.begin(), classes.end())));
    t.backward(proxy_anchor_loss(x, local, p, hp.weights.tau, hp.weights.delta));
    adam_update(gen_params, gen_state, gen_cfg, "g");
    Parameter *const bank[] = {&ref.bank.proxies};
    adam_update(bank, proxy_state, proxy_cfg, "p");
  }
  auto a = tr.models().generator.mlp.parameters();
  auto r = ref.generator.mlp.parameters();
  for (size_t i = 0; i < a.size(); ++i) CHECK((a[i]->value - r[i]->value).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((tr.models().bank.proxies.value - ref.bank.proxies.value).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(tr.optimizer().domain.slots.empty());
}

TEST_CASE("training is deterministic and moves the proxies") {
  RunConfig cfg = RunConfig::parse("");
  cfg.hp = small_hp();
  cfg.hp.epochs = 2;
  cfg.dims = small_dims();
  cfg.data.synth.num_classes = 8;
  cfg.data.synth.samples_per_class = 12;
  cfg.data.synth.dim = 5;
  const RunData data = load_run_data(cfg);

  auto run = [&] {
    Trainer tr(cfg.hp, resolve_dims(cfg, data.train), data.train);
    const Matrix proxies0 = tr.models().bank.proxies.value;
    const auto records = train(cfg, tr, data);
    CHECK(tr.models().bank.proxies.value != proxies0);
    std::string out;
    for (const auto &r : records) out += r.to_json().dump() + "\n";
    return std::pair{records.size(), out};
  };
  const auto [n1, text1] = run();
  const auto [n2, text2] = run();
  CHECK(n1 == 2);
  CHECK(text1 == text2);
  CHECK(text1.find("\"recall_at\":{\"1\":") != std::string::npos);
  CHECK(text1.find("\"wallclock_s\":null") != std::string::npos);
}
