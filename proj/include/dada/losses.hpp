#pragma once

#include "dada/autodiff.hpp"
#include "dada/nn.hpp"

#include <optional>
#include <span>
#include <string>

namespace dada {

struct LossWeights {
  double eta = 0.01;     // domain-level vs category-level balance
  double gamma = 0.0075; // proxy loss weight in the generator phase
  double tau = 32.0;     // similarity scale
  double delta = 0.1;    // margin

  void validate() const;
};

/// Which populations the domain discriminator separates, and the label each gets.
enum class AdaptGroup { XP, XM, XMP };
enum class Discrepancy { Nwd, L1, None };
enum class NwdForm { BatchMatrix, PerRow };

Index domain_count(AdaptGroup group);
AdaptGroup parse_adapt_group(const std::string &s);
std::string to_string(AdaptGroup g);
Discrepancy parse_discrepancy(const std::string &s);
std::string to_string(Discrepancy d);

/// Proxy-Anchor over a similarity matrix: positive pull averaged over proxies with at least one
/// positive, negative push averaged over every proxy passed in. Labels index proxy rows.
Var proxy_anchor_loss(const Var &emb, std::span<const int> labels, const Var &proxies_norm, double tau, double delta);

/// Proxy-NCA: mean over samples of -log(exp(tau s+) / sum_p exp(tau s_p)). With
/// `negatives_only` the denominator drops the positive proxy.
Var proxy_nca_loss(const Var &emb, std::span<const int> labels, const Var &proxies_norm, double tau,
                   bool negatives_only = false);

struct AdvOptions {
  AdaptGroup group = AdaptGroup::XMP;
  Mode mode = Mode::Train;
  Binding binding = Binding::All;
  bool update_running_stats = true;
  bool raw_sum = false;  // sum instead of mean within each domain
};

/// Cross-entropy of the domain discriminator over the populations of `group`. All rows go through
/// the discriminator as one batch; each population's term is reduced separately and the terms summed.
Var adv_loss(DomainDiscriminator &disc, const Var &x_aug, const Var &m_aug, const Var &proxies_norm, const AdvOptions &opt = {});

Var cls_loss(CategoryDiscriminator &cat, const Var &x_aug, std::span<const int> labels_aug, Binding binding = Binding::All);

/// (|softmax f_C(X~)|_* - |softmax f_C(M~)|_*) / n. PerRow replaces the matrix norm by the sum of row norms.
Var nwd_discrepancy(CategoryDiscriminator &cat, const Var &x_aug, const Var &m_aug, Binding binding = Binding::All,
                    NwdForm form = NwdForm::BatchMatrix);

/// Mean elementwise |softmax f_C(X~) - softmax f_C(M~)|.
Var l1_discrepancy(CategoryDiscriminator &cat, const Var &x_aug, const Var &m_aug, Binding binding = Binding::All);

struct LossParts {
  std::optional<Var> proxy;
  std::optional<Var> adv;
  std::optional<Var> cls;
  std::optional<Var> discrepancy;
};

/// eta (L_cls - L_d) + (1 - eta) L_adv. Absent terms are dropped; nullopt if nothing remains.
std::optional<Var> discriminator_objective(const LossWeights &w, const LossParts &parts);
/// eta (L_cls + L_d) - (1 - eta) L_adv + gamma L_proxy.
std::optional<Var> generator_objective(const LossWeights &w, const LossParts &parts);

struct PhaseObjectives {
  std::optional<Var> disc;
  std::optional<Var> gen;
};
PhaseObjectives phase_objectives(const LossWeights &w, const LossParts &parts);

} // namespace dada
