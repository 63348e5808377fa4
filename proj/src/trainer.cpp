#include "dada/trainer.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <numeric>

namespace dada {

Batch class_balanced_batch(const FeatureDataset &data, int batch_size, int samples_per_class, Rng &rng) {
  if (samples_per_class < 2) throw ConfigError("samples_per_class must be >= 2, got " + std::to_string(samples_per_class));
  const int n_classes = batch_size / samples_per_class;
  if (n_classes < 1) throw ConfigError("batch_size " + std::to_string(batch_size) + " holds no class at " +
                                       std::to_string(samples_per_class) + " samples per class");
  std::vector<int> eligible;
  std::string deficient;
  for (int c = 0; c < data.num_classes; ++c) {
    if (static_cast<int>(data.class_index[static_cast<size_t>(c)].size()) >= samples_per_class)
      eligible.push_back(c);
    else
      deficient += (deficient.empty() ? "" : ", ") + std::to_string(c);
  }
  if (static_cast<int>(eligible.size()) < n_classes)
    throw ConfigError("cannot draw " + std::to_string(n_classes) + " classes x " + std::to_string(samples_per_class) +
                      " samples: only " + std::to_string(eligible.size()) + " classes are large enough" +
                      (deficient.empty() ? std::string() : "; deficient classes: " + deficient));

  // Partial Fisher-Yates for the classes, then for each class's members.
  for (int i = 0; i < n_classes; ++i) {
    std::uniform_int_distribution<size_t> pick(static_cast<size_t>(i), eligible.size() - 1);
    std::swap(eligible[static_cast<size_t>(i)], eligible[pick(rng)]);
  }
  Batch batch;
  for (int i = 0; i < n_classes; ++i) {
    const int c = eligible[static_cast<size_t>(i)];
    std::vector<Index> members = data.class_index[static_cast<size_t>(c)];
    for (int s = 0; s < samples_per_class; ++s) {
      std::uniform_int_distribution<size_t> pick(static_cast<size_t>(s), members.size() - 1);
      std::swap(members[static_cast<size_t>(s)], members[pick(rng)]);
      batch.indices.push_back(members[static_cast<size_t>(s)]);
      batch.labels.push_back(c);
    }
  }
  batch.raw.resize(static_cast<Index>(batch.indices.size()), data.dim());
  for (size_t i = 0; i < batch.indices.size(); ++i) batch.raw.row(static_cast<Index>(i)) = data.features.row(batch.indices[i]);
  return batch;
}

namespace {

ModelDims with_data(ModelDims dims, const HyperParams &hp, const FeatureDataset &train) {
  dims.input_dim = train.dim();
  dims.num_classes = train.num_classes;
  dims.num_domains = domain_count(hp.adapt_group);
  return dims;
}

AdamConfig adam_config(const HyperParams &hp, double lr, bool decay) {
  return AdamConfig{lr, hp.adam_beta1, hp.adam_beta2, hp.adam_eps, decay ? hp.weight_decay : 0.0, hp.decoupled_weight_decay};
}

void zero_grads(std::span<Parameter *const> params) {
  for (Parameter *p : params) p->zero_grad();
}

double checked(const Var &v, const char *what) {
  const double x = v.scalar();
  if (!std::isfinite(x)) throw NumericError(std::string("non-finite ") + what + " loss");
  return x;
}

} // namespace

Trainer::Trainer(HyperParams hp, const ModelDims &dims, FeatureDataset train)
    : hp_(std::move(hp)), train_(std::move(train)), rng_(hp_.seed) {
  hp_.validate();
  models_ = build_models(with_data(dims, hp_, train_), rng_);
}

int Trainer::iterations_per_epoch() const { return std::max<int>(1, static_cast<int>(train_.size()) / hp_.batch_size); }

bool Trainer::discriminators_active() const {
  return hp_.dada_enabled && (hp_.use_adv || hp_.use_cls || hp_.discrepancy != Discrepancy::None);
}

Batch Trainer::sample_batch() { return class_balanced_batch(train_, hp_.batch_size, hp_.samples_per_class, rng_); }

MixPlan Trainer::sample_plan(const Batch &batch) {
  if (!hp_.dada_enabled || !hp_.use_aug) return identity_mix_plan(batch.labels);
  return sample_mix_plan(batch.labels, hp_.mix, rng_);
}

DetachedMix Trainer::prepare_mix(const Batch &batch, const MixPlan &plan) {
  Tape tape;
  const Var x = models_.generator.forward(tape, tape.constant(batch.raw), Binding::None);
  const MixBatch mix = apply_mix_plan(x, batch.labels, tape.constant(models_.bank.proxies.value), plan);
  return DetachedMix{mix.x_aug.value(), mix.m_aug.value(), mix.proxies_batch.value(), mix.labels_aug};
}

StepLosses Trainer::discriminator_phase(const DetachedMix &mix) {
  StepLosses last;
  if (!discriminators_active()) return last;
  auto domain_params = models_.domain.mlp.parameters();
  auto category_params = models_.category.mlp.parameters();
  const bool train_category = hp_.use_cls || hp_.discrepancy != Discrepancy::None;

  for (int step = 0; step < hp_.k_disc_steps; ++step) {
    Tape tape;
    const Var x_aug = tape.constant(mix.x_aug);
    const Var m_aug = tape.constant(mix.m_aug);
    const Var proxies = tape.constant(mix.proxies_batch);
    LossParts parts;
    if (hp_.use_adv) {
      AdvOptions opt{hp_.adapt_group, Mode::Train, Binding::All, true, hp_.adv_raw_sum};
      parts.adv = adv_loss(models_.domain, x_aug, m_aug, proxies, opt);
      last.adv = checked(*parts.adv, "adversarial");
    }
    if (hp_.use_cls) {
      parts.cls = cls_loss(models_.category, x_aug, mix.labels_aug);
      last.cls = checked(*parts.cls, "classification");
    }
    if (hp_.discrepancy == Discrepancy::Nwd)
      parts.discrepancy = nwd_discrepancy(models_.category, x_aug, m_aug, Binding::All, hp_.nwd_form);
    else if (hp_.discrepancy == Discrepancy::L1)
      parts.discrepancy = l1_discrepancy(models_.category, x_aug, m_aug);
    if (parts.discrepancy) last.discrepancy = checked(*parts.discrepancy, "discrepancy");

    const auto objective = discriminator_objective(hp_.weights, parts);
    if (!objective) return last;
    zero_grads(domain_params);
    zero_grads(category_params);
    tape.backward(*objective);
    if (hp_.use_adv) adam_update(domain_params, opt_.domain, adam_config(hp_, hp_.lr_disc, true), "domain_discriminator");
    if (train_category) adam_update(category_params, opt_.category, adam_config(hp_, hp_.lr_disc, true), "category_discriminator");
  }
  return last;
}

StepLosses Trainer::generator_phase(const Batch &batch, const MixPlan &plan, bool warmup) {
  StepLosses losses;
  Tape tape;
  const Var x = models_.generator.forward(tape, tape.constant(batch.raw), warmup ? Binding::HeadOnly : Binding::All);
  const Var bank = tape.param(models_.bank.proxies);

  // The proxy loss sees the batch's own classes; labels are re-indexed onto those proxy rows.
  const std::vector<int> classes = distinct_in_order(batch.labels);
  std::vector<int> slot(static_cast<size_t>(models_.bank.num_classes()), -1);
  for (size_t i = 0; i < classes.size(); ++i) slot[static_cast<size_t>(classes[i])] = static_cast<int>(i);
  auto remap = [&](std::span<const int> labels) {
    Labels out(labels.size());
    for (size_t i = 0; i < labels.size(); ++i) out[i] = slot[static_cast<size_t>(labels[i])];
    return out;
  };

  LossParts parts;
  Var proxy_input = x;
  Labels proxy_labels = remap(batch.labels);
  std::optional<Var> batch_proxies;
  if (hp_.dada_enabled) {
    const MixBatch mix = apply_mix_plan(x, batch.labels, bank, plan);
    proxy_input = mix.x_aug;
    proxy_labels = remap(mix.labels_aug);
    batch_proxies = mix.proxies_batch;
    if (hp_.use_adv) {
      // Batch statistics, but the discriminator's running statistics stay as they are.
      AdvOptions opt{hp_.adapt_group, Mode::Train, Binding::None, false, hp_.adv_raw_sum};
      parts.adv = adv_loss(models_.domain, mix.x_aug, mix.m_aug, mix.proxies_batch, opt);
      losses.adv = checked(*parts.adv, "adversarial");
    }
    if (hp_.use_cls) {
      parts.cls = cls_loss(models_.category, mix.x_aug, mix.labels_aug, Binding::None);
      losses.cls = checked(*parts.cls, "classification");
    }
    if (hp_.discrepancy == Discrepancy::Nwd)
      parts.discrepancy = nwd_discrepancy(models_.category, mix.x_aug, mix.m_aug, Binding::None, hp_.nwd_form);
    else if (hp_.discrepancy == Discrepancy::L1)
      parts.discrepancy = l1_discrepancy(models_.category, mix.x_aug, mix.m_aug, Binding::None);
    if (parts.discrepancy) losses.discrepancy = checked(*parts.discrepancy, "discrepancy");
  } else {
    std::vector<Index> rows(classes.begin(), classes.end());
    batch_proxies = l2_normalize_rows(gather_rows(bank, rows));
  }
  parts.proxy = hp_.loss == ProxyLossKind::Anchor
                    ? proxy_anchor_loss(proxy_input, proxy_labels, *batch_proxies, hp_.weights.tau, hp_.weights.delta)
                    : proxy_nca_loss(proxy_input, proxy_labels, *batch_proxies, hp_.weights.tau, hp_.nca_negatives_only);
  losses.proxy = checked(*parts.proxy, "proxy");

  // Without DADA the update is the plain proxy-loss step.
  const Var objective = hp_.dada_enabled ? *generator_objective(hp_.weights, parts) : *parts.proxy;
  auto gen_params = models_.generator.mlp.parameters();
  Parameter *const bank_param[] = {&models_.bank.proxies};
  zero_grads(gen_params);
  zero_grads(bank_param);
  tape.backward(objective);

  std::vector<size_t> active;
  if (warmup) {
    // Only the last linear layer (weight, bias) of the generator moves during warm-up.
    const size_t n = gen_params.size();
    active = {n - 2, n - 1};
  }
  adam_update(gen_params, opt_.generator, adam_config(hp_, hp_.lr_gen, true), "generator", active);
  adam_update(bank_param, opt_.proxies, adam_config(hp_, hp_.lr_proxy, false), "proxies");
  return losses;
}

StepLosses Trainer::iteration(bool warmup) {
  const Batch batch = sample_batch();
  const MixPlan plan = sample_plan(batch);
  if (discriminators_active()) discriminator_phase(prepare_mix(batch, plan));
  return generator_phase(batch, plan, warmup);
}

StepLosses Trainer::run_epoch(int epoch) {
  const bool warmup = epoch < hp_.warmup_epochs;
  const int iters = iterations_per_epoch();
  std::array<double, 4> sums{};
  std::array<bool, 4> seen{};
  for (int it = 0; it < iters; ++it) {
    StepLosses l;
    try {
      l = iteration(warmup);
    } catch (const NumericError &e) {
      throw NumericError("epoch " + std::to_string(epoch) + " iteration " + std::to_string(it) + ": " + e.what());
    }
    const std::optional<double> parts[] = {l.proxy, l.adv, l.cls, l.discrepancy};
    for (size_t k = 0; k < 4; ++k)
      if (parts[k]) {
        sums[k] += *parts[k];
        seen[k] = true;
      }
  }
  auto avg = [&](size_t k) { return seen[k] ? std::optional<double>(sums[k] / iters) : std::nullopt; };
  return StepLosses{avg(0), avg(1), avg(2), avg(3)};
}

Matrix embed(Generator &gen, const Matrix &raw) {
  Tape tape;
  return gen.forward(tape, tape.constant(raw), Binding::None).value();
}

EvalResult evaluate_models(Models &models, const FeatureDataset &test, const FeatureDataset &probe_data, std::span<const int> ks,
                           std::uint64_t probe_seed) {
  EvalResult out;
  RetrievalIndex index{embed(models.generator, test.features), test.labels};
  std::vector<int> usable;
  for (int k : ks)
    if (k < index.size()) usable.push_back(k);
  out.recall_at = recall_at_k(index, usable);
  out.map_at_r = map_at_r(index).value;

  Tape tape;
  const Matrix proxies = l2_normalize_rows(tape.constant(models.bank.proxies.value)).value();
  ProbeOptions probe;
  probe.seed = probe_seed;
  out.domain_probe_acc = domain_probe(embed(models.generator, probe_data.features), proxies, probe);
  return out;
}

nlohmann::ordered_json MetricsRecord::to_json() const {
  using json = nlohmann::ordered_json;
  auto opt = [](const std::optional<double> &v) { return v ? json(*v) : json(nullptr); };
  json j;
  j["epoch"] = epoch;
  j["loss_proxy"] = opt(losses.proxy);
  j["loss_adv"] = opt(losses.adv);
  j["loss_cls"] = opt(losses.cls);
  j["loss_discrepancy"] = opt(losses.discrepancy);
  json recall = json::object();
  if (eval)
    for (const auto &[k, v] : eval->recall_at) recall[std::to_string(k)] = v;
  j["recall_at"] = eval ? recall : json(nullptr);
  j["map_at_r"] = eval ? json(eval->map_at_r) : json(nullptr);
  j["domain_probe_acc"] = eval ? json(eval->domain_probe_acc) : json(nullptr);
  j["wallclock_s"] = opt(wallclock_s);
  return j;
}

RunData load_run_data(const RunConfig &cfg) {
  FeatureDataset all = cfg.data.source == "csv" ? load_csv(cfg.data.path) : synth_generate(cfg.data.synth);
  Split s = split(all, cfg.data.train_fraction, cfg.data.split_seed);
  return RunData{std::move(s.train), std::move(s.test)};
}

ModelDims resolve_dims(const RunConfig &cfg, const FeatureDataset &train) { return with_data(cfg.dims, cfg.hp, train); }

std::vector<MetricsRecord> train(const RunConfig &cfg, Trainer &trainer, const RunData &data, const TrainCallbacks &cb) {
  std::vector<MetricsRecord> records;
  const auto start = std::chrono::steady_clock::now();
  for (int epoch = 0; epoch < cfg.hp.epochs; ++epoch) {
    MetricsRecord rec;
    rec.epoch = epoch + 1;
    rec.losses = trainer.run_epoch(epoch);
    const bool last = epoch + 1 == cfg.hp.epochs;
    if ((epoch + 1) % cfg.eval_every == 0 || last)
      rec.eval = evaluate_models(trainer.models(), data.test, data.train, cfg.ks, cfg.probe_seed);
    if (cfg.record_wallclock)
      rec.wallclock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (cb.on_record) cb.on_record(rec);
    if (cb.on_epoch_end) cb.on_epoch_end(epoch + 1, trainer);
    records.push_back(std::move(rec));
  }
  return records;
}

} // namespace dada
