#pragma once

#include "dada/autodiff.hpp"
#include "dada/random.hpp"

#include <span>
#include <vector>

namespace dada {

/// Per-iteration mixing coefficients and partner assignment. Sampled once and reused by
/// both training phases of the iteration.
struct MixPlan {
  double lambda = 1.0;
  double mu1 = 1.0;
  double mu2 = 1.0;
  std::vector<Index> pairing;  // same-class partner of each row, never itself
  bool augment = true;         // false: no within-class mixing and no sample/proxy interpolation
};

/// The three aligned domains of one iteration, all row-normalized.
struct MixBatch {
  Var x_aug;          // samples plus within-class mixes
  Var m_aug;          // sample/proxy interpolations plus their within-class mixes
  Var proxies_batch;  // one row per distinct class in the batch
  Labels labels_aug;
  std::vector<int> batch_classes;  // distinct classes in first-appearance order
  double lambda = 1.0, mu1 = 1.0, mu2 = 1.0;
};

/// lambda * x + (1 - lambda) * p, row by row.
Var mix_proxy_sample(const Var &x, const Var &p_rows, double lambda);

/// mu * row_i + (1 - mu) * row_pairing[i]. Every partner must share the row's label and differ from it.
Var mix_within_class(const Var &rows, std::span<const int> labels, double mu, std::span<const Index> pairing);

/// Uniform random same-class partner for each row. Throws ContractError on a singleton class.
std::vector<Index> sample_pairing(std::span<const int> labels, Rng &rng);

/// Draws lambda ~ Beta(alpha, beta), mu1, mu2 ~ Beta(1, 1), then the pairing, in that order.
MixPlan sample_mix_plan(std::span<const int> labels, const BetaParams &params, Rng &rng);

/// Plan used when augmentation is switched off: mixture rows are the samples' own proxies.
MixPlan identity_mix_plan(std::span<const int> labels);

/// Builds X~, M~ and the in-batch proxies in-graph, so gradients reach both the embeddings and the bank.
MixBatch apply_mix_plan(const Var &embeddings, std::span<const int> labels, const Var &bank, const MixPlan &plan);

MixBatch build_mix_batch(const Var &embeddings, std::span<const int> labels, const Var &bank, const BetaParams &params, Rng &rng);

std::vector<int> distinct_in_order(std::span<const int> labels);

} // namespace dada
