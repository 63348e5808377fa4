#include "dada/gradcheck_suite.hpp"

#include "dada/augmentation.hpp"
#include "dada/losses.hpp"
#include "dada/nn.hpp"
#include "dada/random.hpp"

#include <functional>
#include <map>

namespace dada {

namespace {

using CheckFn = std::function<GradCheckReport(Rng &, double h, double tol)>;

Parameter random_param(const std::string &name, Index rows, Index cols, Rng &rng, double sigma = 1.0) {
  return Parameter(name, normal_matrix(rows, cols, 0.0, sigma, rng));
}

// Entries with magnitude in [0.1, 1] and random sign, so kinked ops stay on one side of 0.
Parameter away_from_zero(const std::string &name, Index rows, Index cols, Rng &rng) {
  Parameter p = random_param(name, rows, cols, rng);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) p.value(i, j) = (uniform01(rng) < 0.5 ? -1.0 : 1.0) * (0.1 + 0.9 * uniform01(rng));
  return p;
}

// Nonlinear scalar read-out of a matrix: cross-entropy with label i % cols on row i.
Var readout(const Var &y) {
  Labels labels(static_cast<size_t>(y.rows()));
  for (size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % static_cast<size_t>(y.cols()));
  return softmax_cross_entropy(y, labels);
}

GradCheckReport check(std::vector<Parameter> &params, const std::function<Var(Tape &, std::vector<Var> &)> &f, double h,
                      double tol) {
  std::vector<Parameter *> ptrs;
  for (Parameter &p : params) ptrs.push_back(&p);
  return grad_check(
      [&](Tape &tape) {
        std::vector<Var> vars;
        for (Parameter &p : params) vars.push_back(tape.param(p));
        return f(tape, vars);
      },
      ptrs, h, tol);
}

ModelDims small_dims() {
  ModelDims d;
  d.input_dim = 5;
  d.generator_hidden = 7;
  d.embed_dim = 4;
  d.domain_hidden = 6;
  d.num_domains = 3;
  d.category_hidden1 = 6;
  d.category_hidden2 = 5;
  d.num_classes = 3;
  return d;
}

const Labels kBatchLabels{0, 1, 2, 0, 1, 2};

// Weights large enough that every term of the phase objectives is visible in the check.
LossWeights check_weights() { return LossWeights{0.3, 0.5, 8.0, 0.1}; }

// Detached augmented domains for the discriminator-side checks.
struct DetachedMixValues {
  Matrix x_aug, m_aug, proxies;
  Labels labels_aug;
};

DetachedMixValues detached_mix(Models &m, const Matrix &raw, const MixPlan &plan) {
  Tape tape;
  const Var x = m.generator.forward(tape, tape.constant(raw), Binding::None);
  const MixBatch mix = apply_mix_plan(x, kBatchLabels, tape.constant(m.bank.proxies.value), plan);
  return {mix.x_aug.value(), mix.m_aug.value(), mix.proxies_batch.value(), mix.labels_aug};
}

GradCheckReport check_models(const std::function<Var(Tape &)> &f, std::vector<Parameter *> params, double h, double tol) {
  return grad_check(f, params, h, tol);
}

std::vector<std::pair<std::string, CheckFn>> registry() {
  std::vector<std::pair<std::string, CheckFn>> r;
  auto op = [&](const std::string &name, std::function<std::vector<Parameter>(Rng &)> make,
                std::function<Var(Tape &, std::vector<Var> &)> f) {
    r.emplace_back(name, [make, f](Rng &rng, double h, double tol) {
      auto params = make(rng);
      return check(params, f, h, tol);
    });
  };

  op("matmul", [](Rng &g) { return std::vector{random_param("a", 4, 3, g), random_param("b", 3, 5, g)}; },
     [](Tape &, std::vector<Var> &v) { return readout(matmul(v[0], v[1])); });
  op("matmul_nt", [](Rng &g) { return std::vector{random_param("a", 4, 3, g), random_param("b", 5, 3, g)}; },
     [](Tape &, std::vector<Var> &v) { return readout(matmul_nt(v[0], v[1])); });
  op("add_sub_scale", [](Rng &g) { return std::vector{random_param("a", 4, 3, g), random_param("b", 4, 3, g)}; },
     [](Tape &, std::vector<Var> &v) { return readout(v[0] + 1.7 * v[1] - scale(v[0], 0.4)); });
  op("add_row", [](Rng &g) { return std::vector{random_param("a", 4, 3, g), random_param("r", 1, 3, g)}; },
     [](Tape &, std::vector<Var> &v) { return readout(add_row(v[0], v[1])); });
  op("relu", [](Rng &g) { return std::vector{away_from_zero("a", 5, 3, g)}; },
     [](Tape &, std::vector<Var> &v) { return readout(relu(v[0])); });
  op("abs", [](Rng &g) { return std::vector{away_from_zero("a", 5, 3, g)}; },
     [](Tape &, std::vector<Var> &v) { return readout(abs(v[0])); });
  op("sum_mean", [](Rng &g) { return std::vector{random_param("a", 4, 3, g)}; },
     [](Tape &, std::vector<Var> &v) {
       const Var s = softmax_rows(v[0]);
       return sum(l2_normalize_rows(s)) + 2.0 * mean(softmax_rows(scale(v[0], 1.5)) - s);
     });
  op("lerp", [](Rng &g) { return std::vector{random_param("a", 4, 3, g), random_param("b", 4, 3, g)}; },
     [](Tape &, std::vector<Var> &v) { return readout(lerp(v[0], v[1], 0.3)); });
  op("concat_rows", [](Rng &g) { return std::vector{random_param("a", 2, 3, g), random_param("b", 3, 3, g)}; },
     [](Tape &, std::vector<Var> &v) {
       const Var parts[] = {v[0], v[1], v[0]};
       return readout(concat_rows(parts));
     });
  op("slice_rows", [](Rng &g) { return std::vector{random_param("a", 6, 3, g)}; },
     [](Tape &, std::vector<Var> &v) { return readout(slice_rows(v[0], 1, 3)); });
  op("gather_rows", [](Rng &g) { return std::vector{random_param("a", 4, 3, g)}; },
     [](Tape &, std::vector<Var> &v) {
       const Index rows[] = {2, 0, 2, 3, 1, 2};
       return readout(gather_rows(v[0], rows));
     });
  op("l2_normalize_rows", [](Rng &g) { return std::vector{random_param("a", 5, 4, g)}; },
     [](Tape &, std::vector<Var> &v) { return readout(scale(l2_normalize_rows(v[0]), 3.0)); });
  op("softmax_rows", [](Rng &g) { return std::vector{random_param("a", 5, 4, g)}; },
     [](Tape &, std::vector<Var> &v) { return readout(scale(softmax_rows(v[0]), 4.0)); });
  op("softmax_cross_entropy", [](Rng &g) { return std::vector{random_param("logits", 6, 4, g, 2.0)}; },
     [](Tape &, std::vector<Var> &v) {
       const int labels[] = {3, 0, 1, 1, 2, 0};
       return softmax_cross_entropy(v[0], labels);
     });
  op("cosine_similarity_matrix", [](Rng &g) { return std::vector{random_param("x", 5, 4, g), random_param("p", 3, 4, g)}; },
     [](Tape &, std::vector<Var> &v) { return readout(scale(cosine_similarity_matrix(v[0], v[1]), 3.0)); });
  op("nuclear_norm", [](Rng &g) { return std::vector{random_param("a", 7, 4, g)}; },
     [](Tape &, std::vector<Var> &v) { return nuclear_norm(v[0]) + nuclear_norm(softmax_rows(v[0])); });
  op("nuclear_norm_wide", [](Rng &g) { return std::vector{random_param("a", 3, 6, g)}; },
     [](Tape &, std::vector<Var> &v) { return nuclear_norm(v[0]); });
  op("row_norm_sum", [](Rng &g) { return std::vector{random_param("a", 5, 4, g)}; },
     [](Tape &, std::vector<Var> &v) { return row_norm_sum(v[0]); });
  op("batch_norm_train",
     [](Rng &g) { return std::vector{random_param("x", 6, 3, g), random_param("gamma", 1, 3, g), random_param("beta", 1, 3, g)}; },
     [](Tape &, std::vector<Var> &v) { return readout(batch_norm_train(v[0], v[1], v[2], 1e-5)); });
  op("batch_norm_eval",
     [](Rng &g) { return std::vector{random_param("x", 6, 3, g), random_param("gamma", 1, 3, g), random_param("beta", 1, 3, g)}; },
     [](Tape &, std::vector<Var> &v) {
       const RowVector mean = (RowVector(3) << 0.2, -0.1, 0.3).finished();
       const RowVector var = (RowVector(3) << 0.5, 1.5, 2.0).finished();
       return readout(batch_norm_eval(v[0], v[1], v[2], mean, var, 1e-5));
     });

  op("proxy_anchor", [](Rng &g) { return std::vector{random_param("emb", 6, 4, g), random_param("proxies", 3, 4, g)}; },
     [](Tape &, std::vector<Var> &v) {
       return proxy_anchor_loss(l2_normalize_rows(v[0]), kBatchLabels, l2_normalize_rows(v[1]), 8.0, 0.1);
     });
  op("proxy_anchor_absent_class",
     [](Rng &g) { return std::vector{random_param("emb", 4, 4, g), random_param("proxies", 3, 4, g)}; },
     [](Tape &, std::vector<Var> &v) {
       const int labels[] = {0, 2, 0, 2};
       return proxy_anchor_loss(l2_normalize_rows(v[0]), labels, l2_normalize_rows(v[1]), 8.0, 0.1);
     });
  op("proxy_nca", [](Rng &g) { return std::vector{random_param("emb", 6, 4, g), random_param("proxies", 3, 4, g)}; },
     [](Tape &, std::vector<Var> &v) {
       return proxy_nca_loss(l2_normalize_rows(v[0]), kBatchLabels, l2_normalize_rows(v[1]), 8.0, false) +
              proxy_nca_loss(l2_normalize_rows(v[0]), kBatchLabels, l2_normalize_rows(v[1]), 8.0, true);
     });

  // Model-level checks share one small model and batch per seed.
  auto model_check = [&](const std::string &name,
                         std::function<GradCheckReport(Models &, const Matrix &, const MixPlan &, double, double)> body) {
    r.emplace_back(name, [body](Rng &rng, double h, double tol) {
      Models m = build_models(small_dims(), rng);
      // Zero biases put rows whose previous layer is fully inactive exactly on a relu kink.
      for (auto *mlp : {&m.generator.mlp, &m.domain.mlp, &m.category.mlp})
        for (auto &layer : mlp->layers) layer.bias.value = away_from_zero(layer.bias.name, 1, layer.bias.value.cols(), rng).value;
      const Matrix raw = normal_matrix(static_cast<Index>(kBatchLabels.size()), m.generator.mlp.input_dim(), 0.0, 1.0, rng);
      const MixPlan plan = sample_mix_plan(kBatchLabels, BetaParams{}, rng);
      return body(m, raw, plan, h, tol);
    });
  };

  model_check("adv_loss", [](Models &m, const Matrix &raw, const MixPlan &plan, double h, double tol) {
    const DetachedMixValues d = detached_mix(m, raw, plan);
    std::vector<Parameter *> params = m.domain.mlp.parameters();
    Parameter x("x_aug", d.x_aug);
    params.push_back(&x);
    auto rep = check_models(
        [&](Tape &tape) {
          const Var xv = tape.param(x);
          Var total = adv_loss(m.domain, xv, tape.constant(d.m_aug), tape.constant(d.proxies),
                               AdvOptions{AdaptGroup::XMP, Mode::Train, Binding::All, false, false});
          total = total + adv_loss(m.domain, xv, tape.constant(d.m_aug), tape.constant(d.proxies),
                                   AdvOptions{AdaptGroup::XMP, Mode::Train, Binding::All, false, true});
          return total;
        },
        params, h, tol);
    return rep;
  });
  model_check("cls_loss", [](Models &m, const Matrix &raw, const MixPlan &plan, double h, double tol) {
    const DetachedMixValues d = detached_mix(m, raw, plan);
    return check_models([&](Tape &tape) { return cls_loss(m.category, tape.constant(d.x_aug), d.labels_aug); },
                        m.category.mlp.parameters(), h, tol);
  });
  model_check("nwd", [](Models &m, const Matrix &raw, const MixPlan &plan, double h, double tol) {
    const DetachedMixValues d = detached_mix(m, raw, plan);
    return check_models(
        [&](Tape &tape) {
          const Var x = tape.constant(d.x_aug), mm = tape.constant(d.m_aug);
          return nwd_discrepancy(m.category, x, mm) + nwd_discrepancy(m.category, x, mm, Binding::All, NwdForm::PerRow);
        },
        m.category.mlp.parameters(), h, tol);
  });
  model_check("l1", [](Models &m, const Matrix &raw, const MixPlan &plan, double h, double tol) {
    const DetachedMixValues d = detached_mix(m, raw, plan);
    return check_models([&](Tape &tape) { return l1_discrepancy(m.category, tape.constant(d.x_aug), tape.constant(d.m_aug)); },
                        m.category.mlp.parameters(), h, tol);
  });
  model_check("generator", [](Models &m, const Matrix &raw, const MixPlan &, double h, double tol) {
    return check_models([&](Tape &tape) { return readout(scale(m.generator.forward(tape, tape.constant(raw)), 3.0)); },
                        m.generator.mlp.parameters(), h, tol);
  });
  model_check("domain_disc", [](Models &m, const Matrix &raw, const MixPlan &, double h, double tol) {
    Tape t0;
    const Matrix x = m.generator.forward(t0, t0.constant(raw), Binding::None).value();
    return check_models(
        [&](Tape &tape) {
          return readout(m.domain.forward(tape, tape.constant(x), Mode::Train, Binding::All, false)) +
                 readout(m.domain.forward(tape, tape.constant(x), Mode::Eval, Binding::All));
        },
        m.domain.mlp.parameters(), h, tol);
  });
  model_check("category_disc", [](Models &m, const Matrix &raw, const MixPlan &, double h, double tol) {
    Tape t0;
    const Matrix x = m.generator.forward(t0, t0.constant(raw), Binding::None).value();
    return check_models([&](Tape &tape) { return readout(m.category.forward(tape, tape.constant(x))); },
                        m.category.mlp.parameters(), h, tol);
  });
  model_check("disc_objective", [](Models &m, const Matrix &raw, const MixPlan &plan, double h, double tol) {
    const DetachedMixValues d = detached_mix(m, raw, plan);
    return check_models(
        [&](Tape &tape) {
          const Var x = tape.constant(d.x_aug), mm = tape.constant(d.m_aug), p = tape.constant(d.proxies);
          LossParts parts;
          parts.adv = adv_loss(m.domain, x, mm, p, AdvOptions{AdaptGroup::XMP, Mode::Train, Binding::All, false, false});
          parts.cls = cls_loss(m.category, x, d.labels_aug);
          parts.discrepancy = nwd_discrepancy(m.category, x, mm);
          return *discriminator_objective(check_weights(), parts);
        },
        m.discriminator_parameters(), h, tol);
  });
  model_check("gen_objective", [](Models &m, const Matrix &raw, const MixPlan &plan, double h, double tol) {
    std::vector<Parameter *> params = m.generator.mlp.parameters();
    params.push_back(&m.bank.proxies);
    return check_models(
        [&](Tape &tape) {
          const Var x = m.generator.forward(tape, tape.constant(raw));
          const Var bank = tape.param(m.bank.proxies);
          const MixBatch mix = apply_mix_plan(x, kBatchLabels, bank, plan);
          LossParts parts;
          parts.adv = adv_loss(m.domain, mix.x_aug, mix.m_aug, mix.proxies_batch,
                               AdvOptions{AdaptGroup::XMP, Mode::Train, Binding::None, false, false});
          parts.cls = cls_loss(m.category, mix.x_aug, mix.labels_aug, Binding::None);
          parts.discrepancy = nwd_discrepancy(m.category, mix.x_aug, mix.m_aug, Binding::None);
          parts.proxy = proxy_anchor_loss(mix.x_aug, mix.labels_aug, l2_normalize_rows(bank), 8.0, 0.1);
          return *generator_objective(check_weights(), parts);
        },
        params, h, tol);
  });
  return r;
}

} // namespace

std::vector<std::string> gradcheck_scopes() {
  std::vector<std::string> names;
  for (const auto &[name, fn] : registry()) names.push_back(name);
  return names;
}

std::vector<GradCheckResult> run_gradcheck_suite(const std::string &scope, double h, double tol, int seeds) {
  const auto checks = registry();
  bool matched = scope == "all";
  std::vector<GradCheckResult> out;
  for (const auto &[name, fn] : checks) {
    if (scope != "all" && scope != name) continue;
    matched = true;
    for (int s = 0; s < seeds; ++s) {
      const std::uint64_t seed = 1000 + static_cast<std::uint64_t>(s);
      Rng rng(seed);
      out.push_back(GradCheckResult{name, seed, fn(rng, h, tol)});
    }
  }
  if (!matched) throw ConfigError("unknown gradcheck scope '" + scope + "'");
  return out;
}

} // namespace dada
