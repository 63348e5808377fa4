#include "dada/losses.hpp"

#include <cmath>
#include <vector>

namespace dada {

void LossWeights::validate() const {
  if (!(eta > 0.0 && eta < 1.0)) throw ConfigError("eta must lie in (0, 1), got " + std::to_string(eta));
  if (!(gamma > 0.0)) throw ConfigError("gamma must be positive, got " + std::to_string(gamma));
  if (!(tau > 0.0)) throw ConfigError("tau must be positive, got " + std::to_string(tau));
  if (!(delta >= 0.0)) throw ConfigError("delta must be non-negative, got " + std::to_string(delta));
}

Index domain_count(AdaptGroup group) { return group == AdaptGroup::XMP ? 3 : 2; }

AdaptGroup parse_adapt_group(const std::string &s) {
  if (s == "xp") return AdaptGroup::XP;
  if (s == "xm") return AdaptGroup::XM;
  if (s == "xmp") return AdaptGroup::XMP;
  throw ConfigError("adapt_group must be one of xp, xm, xmp; got '" + s + "'");
}

std::string to_string(AdaptGroup g) {
  switch (g) {
  case AdaptGroup::XP: return "xp";
  case AdaptGroup::XM: return "xm";
  case AdaptGroup::XMP: return "xmp";
  }
  return "?";
}

Discrepancy parse_discrepancy(const std::string &s) {
  if (s == "nwd") return Discrepancy::Nwd;
  if (s == "l1") return Discrepancy::L1;
  if (s == "none") return Discrepancy::None;
  throw ConfigError("discrepancy must be one of nwd, l1, none; got '" + s + "'");
}

std::string to_string(Discrepancy d) {
  switch (d) {
  case Discrepancy::Nwd: return "nwd";
  case Discrepancy::L1: return "l1";
  case Discrepancy::None: return "none";
  }
  return "?";
}

namespace {

Matrix scalar_matrix(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return m;
}

// log(1 + sum_i exp(z_i)) for the listed entries, plus the weights exp(z_i - result).
double log1p_sum_exp(const std::vector<double> &z, std::vector<double> &weights) {
  weights.assign(z.size(), 0.0);
  if (z.empty()) return 0.0;
  double m = 0.0;  // include the implicit exp(0) term in the shift
  for (double v : z) m = std::max(m, v);
  double s = std::exp(-m);
  for (double v : z) s += std::exp(v - m);
  const double total = m + std::log(s);
  for (size_t i = 0; i < z.size(); ++i) weights[i] = std::exp(z[i] - total);
  return total;
}

void check_labels(std::span<const int> labels, Index rows, Index classes, const char *op) {
  if (static_cast<Index>(labels.size()) != rows)
    throw ContractError(std::string(op) + ": " + std::to_string(labels.size()) + " labels for " + std::to_string(rows) + " rows");
  for (int y : labels)
    if (y < 0 || y >= classes)
      throw ContractError(std::string(op) + ": label " + std::to_string(y) + " has no proxy row (" + std::to_string(classes) +
                          " proxies)");
}

} // namespace

Var proxy_anchor_loss(const Var &emb, std::span<const int> labels, const Var &proxies_norm, double tau, double delta) {
  if (emb.rows() == 0) throw ContractError("proxy_anchor_loss: empty batch");
  const Var sim = cosine_similarity_matrix(emb, proxies_norm);
  const Index n = sim.rows(), c = sim.cols();
  check_labels(labels, n, c, "proxy_anchor_loss");
  const Matrix &s = sim.value();

  Matrix dsim = Matrix::Zero(n, c);  // gradient w.r.t. sim for unit upstream
  double pos_total = 0.0, neg_total = 0.0;
  Index with_pos = 0;
  std::vector<double> z, w;
  std::vector<Index> who;
  for (Index j = 0; j < c; ++j) {
    z.clear();
    who.clear();
    for (Index i = 0; i < n; ++i)
      if (labels[static_cast<size_t>(i)] == j) {
        z.push_back(-tau * s(i, j) + delta);
        who.push_back(i);
      }
    if (!z.empty()) {
      ++with_pos;
      pos_total += log1p_sum_exp(z, w);
      for (size_t k = 0; k < who.size(); ++k) dsim(who[k], j) += -tau * w[k];
    }
  }
  const double pos_scale = with_pos > 0 ? 1.0 / static_cast<double>(with_pos) : 0.0;
  dsim *= pos_scale;
  const double neg_scale = 1.0 / static_cast<double>(c);
  for (Index j = 0; j < c; ++j) {
    z.clear();
    who.clear();
    for (Index i = 0; i < n; ++i)
      if (labels[static_cast<size_t>(i)] != j) {
        z.push_back(tau * s(i, j) + delta);
        who.push_back(i);
      }
    neg_total += log1p_sum_exp(z, w);
    for (size_t k = 0; k < who.size(); ++k) dsim(who[k], j) += tau * w[k] * neg_scale;
  }
  const double loss = pos_scale * pos_total + neg_scale * neg_total;
  return sim.tape()->record(scalar_matrix(loss), {sim}, [sim, dsim](Tape &tape, const Matrix &g) {
    tape.accumulate(sim, g(0, 0) * dsim);
  });
}

Var proxy_nca_loss(const Var &emb, std::span<const int> labels, const Var &proxies_norm, double tau, bool negatives_only) {
  if (emb.rows() == 0) throw ContractError("proxy_nca_loss: empty batch");
  const Var sim = cosine_similarity_matrix(emb, proxies_norm);
  const Index n = sim.rows(), c = sim.cols();
  check_labels(labels, n, c, "proxy_nca_loss");
  if (negatives_only && c < 2) throw ContractError("proxy_nca_loss: negatives-only form needs at least two proxies");
  const Matrix &s = sim.value();
  Matrix dsim = Matrix::Zero(n, c);
  double loss = 0.0;
  for (Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<size_t>(i)];
    double m = -std::numeric_limits<double>::infinity();
    for (Index j = 0; j < c; ++j)
      if (!negatives_only || j != y) m = std::max(m, tau * s(i, j));
    double denom = 0.0;
    for (Index j = 0; j < c; ++j)
      if (!negatives_only || j != y) denom += std::exp(tau * s(i, j) - m);
    const double lse = m + std::log(denom);
    loss += lse - tau * s(i, y);
    for (Index j = 0; j < c; ++j)
      if (!negatives_only || j != y) dsim(i, j) += tau * std::exp(tau * s(i, j) - lse);
    dsim(i, y) -= tau;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  dsim *= inv_n;
  return sim.tape()->record(scalar_matrix(loss * inv_n), {sim}, [sim, dsim](Tape &tape, const Matrix &g) {
    tape.accumulate(sim, g(0, 0) * dsim);
  });
}

Var adv_loss(DomainDiscriminator &disc, const Var &x_aug, const Var &m_aug, const Var &proxies_norm, const AdvOptions &opt) {
  const Index k = domain_count(opt.group);
  if (disc.num_domains() != k)
    throw DimensionError("adv_loss: discriminator has " + std::to_string(disc.num_domains()) + " outputs, group " +
                         to_string(opt.group) + " needs " + std::to_string(k));
  std::vector<Var> sets;
  switch (opt.group) {
  case AdaptGroup::XP: sets = {x_aug, proxies_norm}; break;
  case AdaptGroup::XM: sets = {x_aug, m_aug}; break;
  case AdaptGroup::XMP: sets = {x_aug, m_aug, proxies_norm}; break;
  }
  for (const Var &s : sets)
    if (s.rows() == 0) throw ContractError("adv_loss: empty domain set");

  const Var logits = disc.forward(*x_aug.tape(), concat_rows(sets), opt.mode, opt.binding, opt.update_running_stats);
  Index offset = 0;
  std::optional<Var> total;
  for (size_t d = 0; d < sets.size(); ++d) {
    const Index rows = sets[d].rows();
    const std::vector<int> labels(static_cast<size_t>(rows), static_cast<int>(d));
    Var term = softmax_cross_entropy(slice_rows(logits, offset, rows), labels);
    if (opt.raw_sum) term = scale(term, static_cast<double>(rows));
    total = total ? add(*total, term) : term;
    offset += rows;
  }
  return *total;
}

Var cls_loss(CategoryDiscriminator &cat, const Var &x_aug, std::span<const int> labels_aug, Binding binding) {
  return softmax_cross_entropy(cat.forward(*x_aug.tape(), x_aug, binding), labels_aug);
}

Var nwd_discrepancy(CategoryDiscriminator &cat, const Var &x_aug, const Var &m_aug, Binding binding, NwdForm form) {
  if (x_aug.rows() != m_aug.rows())
    throw ContractError("nwd_discrepancy: set sizes differ, " + std::to_string(x_aug.rows()) + " vs " + std::to_string(m_aug.rows()));
  Tape &tape = *x_aug.tape();
  const Var px = softmax_rows(cat.forward(tape, x_aug, binding));
  const Var pm = softmax_rows(cat.forward(tape, m_aug, binding));
  const double inv_n = 1.0 / static_cast<double>(x_aug.rows());
  if (form == NwdForm::PerRow) return scale(sub(row_norm_sum(px), row_norm_sum(pm)), inv_n);
  return scale(sub(nuclear_norm(px), nuclear_norm(pm)), inv_n);
}

Var l1_discrepancy(CategoryDiscriminator &cat, const Var &x_aug, const Var &m_aug, Binding binding) {
  if (x_aug.rows() != m_aug.rows())
    throw ContractError("l1_discrepancy: set sizes differ, " + std::to_string(x_aug.rows()) + " vs " + std::to_string(m_aug.rows()));
  Tape &tape = *x_aug.tape();
  const Var px = softmax_rows(cat.forward(tape, x_aug, binding));
  const Var pm = softmax_rows(cat.forward(tape, m_aug, binding));
  return mean(abs(sub(px, pm)));
}

namespace {

void accumulate_term(std::optional<Var> &acc, const Var &term, double weight) {
  const Var weighted = scale(term, weight);
  acc = acc ? add(*acc, weighted) : weighted;
}

} // namespace

std::optional<Var> discriminator_objective(const LossWeights &w, const LossParts &parts) {
  std::optional<Var> obj;
  if (parts.cls) accumulate_term(obj, *parts.cls, w.eta);
  if (parts.discrepancy) accumulate_term(obj, *parts.discrepancy, -w.eta);
  if (parts.adv) accumulate_term(obj, *parts.adv, 1.0 - w.eta);
  return obj;
}

std::optional<Var> generator_objective(const LossWeights &w, const LossParts &parts) {
  std::optional<Var> obj;
  if (parts.cls) accumulate_term(obj, *parts.cls, w.eta);
  if (parts.discrepancy) accumulate_term(obj, *parts.discrepancy, w.eta);
  if (parts.adv) accumulate_term(obj, *parts.adv, -(1.0 - w.eta));
  if (parts.proxy) accumulate_term(obj, *parts.proxy, w.gamma);
  return obj;
}

PhaseObjectives phase_objectives(const LossWeights &w, const LossParts &parts) {
  return {discriminator_objective(w, parts), generator_objective(w, parts)};
}

} // namespace dada
