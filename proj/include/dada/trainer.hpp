#pragma once

#include "dada/augmentation.hpp"
#include "dada/config.hpp"
#include "dada/dataio.hpp"
#include "dada/evaluation.hpp"
#include "dada/losses.hpp"
#include "dada/nn.hpp"
#include "dada/optim.hpp"

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"

namespace dada {

struct Batch {
  std::vector<Index> indices;
  Labels labels;
  Matrix raw;
};

/// floor(batch_size / samples_per_class) distinct classes, samples_per_class rows each, all
/// drawn without replacement. Throws ConfigError naming the classes that are too small.
Batch class_balanced_batch(const FeatureDataset &data, int batch_size, int samples_per_class, Rng &rng);

/// Values of one iteration's augmented domains, cut from the generator graph.
struct DetachedMix {
  Matrix x_aug;
  Matrix m_aug;
  Matrix proxies_batch;
  Labels labels_aug;
};

struct StepLosses {
  std::optional<double> proxy;
  std::optional<double> adv;
  std::optional<double> cls;
  std::optional<double> discrepancy;
};

struct OptimizerState {
  AdamState generator;
  AdamState domain;
  AdamState category;
  AdamState proxies;
};

/// Alternating two-phase schedule: k discriminator updates on a detached batch, then one
/// generator/proxy update through a rebuilt graph with the same mixing plan.
class Trainer {
public:
  Trainer(HyperParams hp, const ModelDims &dims, FeatureDataset train);

  Batch sample_batch();
  MixPlan sample_plan(const Batch &batch);
  DetachedMix prepare_mix(const Batch &batch, const MixPlan &plan);

  /// k updates of f_D and f_C; the generator and proxy bank are untouched.
  StepLosses discriminator_phase(const DetachedMix &mix);
  /// One update of f_G and P; f_D and f_C (parameters and running statistics) are untouched.
  StepLosses generator_phase(const Batch &batch, const MixPlan &plan, bool warmup);

  StepLosses iteration(bool warmup);
  /// Mean generator-phase losses over the epoch's iterations.
  StepLosses run_epoch(int epoch);
  int iterations_per_epoch() const;

  Models &models() { return models_; }
  const Models &models() const { return models_; }
  const HyperParams &hp() const { return hp_; }
  Rng &rng() { return rng_; }
  const OptimizerState &optimizer() const { return opt_; }
  const FeatureDataset &train_data() const { return train_; }

  bool discriminators_active() const;

private:
  HyperParams hp_;
  FeatureDataset train_;
  Rng rng_;
  Models models_;
  OptimizerState opt_;
};

/// Unit-norm embeddings of `raw` through the generator, no graph retained.
Matrix embed(Generator &gen, const Matrix &raw);

struct EvalResult {
  std::map<int, double> recall_at;
  double map_at_r = 0.0;
  double domain_probe_acc = 0.0;
};

/// Retrieval metrics on `test`; probe between `probe_data` embeddings and the normalized proxies.
EvalResult evaluate_models(Models &models, const FeatureDataset &test, const FeatureDataset &probe_data, std::span<const int> ks,
                           std::uint64_t probe_seed);

struct MetricsRecord {
  int epoch = 0;
  StepLosses losses;
  std::optional<EvalResult> eval;
  std::optional<double> wallclock_s;

  nlohmann::ordered_json to_json() const;
};

struct RunData {
  FeatureDataset train;
  FeatureDataset test;
};

/// Generates or loads the configured dataset and applies the class-disjoint split.
RunData load_run_data(const RunConfig &cfg);

/// Model dims completed from the data and hyperparameters.
ModelDims resolve_dims(const RunConfig &cfg, const FeatureDataset &train);

struct TrainCallbacks {
  std::function<void(const MetricsRecord &)> on_record;
  std::function<void(int epoch, const Trainer &)> on_epoch_end;
};

/// Runs every epoch, evaluating every `eval_every` epochs and on the last one.
std::vector<MetricsRecord> train(const RunConfig &cfg, Trainer &trainer, const RunData &data, const TrainCallbacks &cb = {});

} // namespace dada
