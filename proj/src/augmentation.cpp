#include "dada/augmentation.hpp"

#include <algorithm>
#include <map>

namespace dada {

Var mix_proxy_sample(const Var &x, const Var &p_rows, double lambda) {
  if (x.rows() != p_rows.rows())
    throw ContractError("mix_proxy_sample: " + std::to_string(x.rows()) + " samples but " + std::to_string(p_rows.rows()) +
                        " proxy rows");
  return lerp(x, p_rows, lambda);
}

Var mix_within_class(const Var &rows, std::span<const int> labels, double mu, std::span<const Index> pairing) {
  const Index n = rows.rows();
  if (static_cast<Index>(labels.size()) != n || static_cast<Index>(pairing.size()) != n)
    throw ContractError("mix_within_class: rows, labels and pairing must have equal length");
  for (Index i = 0; i < n; ++i) {
    const Index j = pairing[static_cast<size_t>(i)];
    if (j < 0 || j >= n || j == i)
      throw ContractError("mix_within_class: row " + std::to_string(i) + " has no valid partner");
    if (labels[static_cast<size_t>(j)] != labels[static_cast<size_t>(i)])
      throw ContractError("mix_within_class: row " + std::to_string(i) + " paired across classes");
  }
  return lerp(rows, gather_rows(rows, pairing), mu);
}

std::vector<Index> sample_pairing(std::span<const int> labels, Rng &rng) {
  std::map<int, std::vector<Index>> members;
  for (size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(static_cast<Index>(i));
  std::vector<Index> pairing(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) {
    const auto &same = members[labels[i]];
    if (same.size() < 2)
      throw ContractError("sample_pairing: class " + std::to_string(labels[i]) + " has a single sample in the batch");
    // Uniform over the other members: draw from size-1 slots and skip over self.
    const auto k = std::uniform_int_distribution<size_t>(0, same.size() - 2)(rng);
    const auto self = static_cast<size_t>(std::find(same.begin(), same.end(), static_cast<Index>(i)) - same.begin());
    pairing[i] = same[k < self ? k : k + 1];
  }
  return pairing;
}

MixPlan sample_mix_plan(std::span<const int> labels, const BetaParams &params, Rng &rng) {
  MixPlan plan;
  plan.lambda = sample_beta(params, rng);
  plan.mu1 = sample_beta(BetaParams{1.0, 1.0}, rng);
  plan.mu2 = sample_beta(BetaParams{1.0, 1.0}, rng);
  plan.pairing = sample_pairing(labels, rng);
  return plan;
}

MixPlan identity_mix_plan(std::span<const int> labels) {
  MixPlan plan;
  plan.lambda = 0.0;
  plan.augment = false;
  plan.pairing.resize(labels.size());
  return plan;
}

std::vector<int> distinct_in_order(std::span<const int> labels) {
  std::vector<int> out;
  for (int y : labels)
    if (std::find(out.begin(), out.end(), y) == out.end()) out.push_back(y);
  return out;
}

MixBatch apply_mix_plan(const Var &embeddings, std::span<const int> labels, const Var &bank, const MixPlan &plan) {
  const Index n = embeddings.rows();
  if (static_cast<Index>(labels.size()) != n)
    throw ContractError("apply_mix_plan: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) + " rows");
  if (n == 0) throw ContractError("apply_mix_plan: empty batch");
  if (bank.cols() != embeddings.cols())
    throw DimensionError("apply_mix_plan: proxy dim " + std::to_string(bank.cols()) + " vs embedding dim " +
                         std::to_string(embeddings.cols()));

  std::vector<Index> rows(labels.begin(), labels.end());
  for (Index r : rows)
    if (r < 0 || r >= bank.rows())
      throw ContractError("apply_mix_plan: label " + std::to_string(r) + " has no proxy row");
  MixBatch out;
  out.batch_classes = distinct_in_order(labels);
  std::vector<Index> class_rows(out.batch_classes.begin(), out.batch_classes.end());
  out.proxies_batch = l2_normalize_rows(gather_rows(bank, class_rows));
  out.lambda = plan.lambda;
  out.mu1 = plan.mu1;
  out.mu2 = plan.mu2;

  const Var p_rows = l2_normalize_rows(gather_rows(bank, rows));
  const Var d_hat = mix_proxy_sample(embeddings, p_rows, plan.lambda);

  if (plan.augment) {
    const Var x_parts[] = {embeddings, mix_within_class(embeddings, labels, plan.mu1, plan.pairing)};
    const Var m_parts[] = {d_hat, mix_within_class(d_hat, labels, plan.mu2, plan.pairing)};
    out.x_aug = l2_normalize_rows(concat_rows(x_parts));
    out.m_aug = l2_normalize_rows(concat_rows(m_parts));
    out.labels_aug.assign(labels.begin(), labels.end());
    out.labels_aug.insert(out.labels_aug.end(), labels.begin(), labels.end());
  } else {
    out.x_aug = l2_normalize_rows(embeddings);
    out.m_aug = l2_normalize_rows(d_hat);
    out.labels_aug.assign(labels.begin(), labels.end());
  }
  return out;
}

MixBatch build_mix_batch(const Var &embeddings, std::span<const int> labels, const Var &bank, const BetaParams &params, Rng &rng) {
  return apply_mix_plan(embeddings, labels, bank, sample_mix_plan(labels, params, rng));
}

} // namespace dada
