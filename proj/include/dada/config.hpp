#pragma once

#include "dada/dataio.hpp"
#include "dada/losses.hpp"
#include "dada/nn.hpp"
#include "dada/random.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace dada {

enum class ProxyLossKind { Anchor, Nca };

ProxyLossKind parse_proxy_loss(const std::string &s);
std::string to_string(ProxyLossKind k);
NwdForm parse_nwd_form(const std::string &s);
std::string to_string(NwdForm f);

struct HyperParams {
  LossWeights weights{0.005, 0.0075, 32.0, 0.1};
  BetaParams mix{2.0, 1.0};
  ProxyLossKind loss = ProxyLossKind::Anchor;
  bool nca_negatives_only = false;
  NwdForm nwd_form = NwdForm::BatchMatrix;
  bool adv_raw_sum = false;

  double lr_gen = 1.2e-4;
  double lr_disc = 5e-4;
  double lr_proxy = 4e-2;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 1e-3;
  bool decoupled_weight_decay = false;

  int k_disc_steps = 3;
  int batch_size = 32;
  int samples_per_class = 2;
  int warmup_epochs = 1;
  int epochs = 50;
  std::uint64_t seed = 0;

  bool dada_enabled = true;
  AdaptGroup adapt_group = AdaptGroup::XMP;
  Discrepancy discrepancy = Discrepancy::Nwd;
  bool use_aug = true;
  bool use_adv = true;
  bool use_cls = true;

  void validate() const;
};

struct DataSource {
  std::string source = "synth";  // synth | csv
  std::string path;
  SynthSpec synth;
  double train_fraction = 0.5;
  std::uint64_t split_seed = 0;
};

struct RunConfig {
  HyperParams hp;
  ModelDims dims;  // input_dim, num_domains and num_classes are filled in from the data and hp
  DataSource data;
  int eval_every = 1;
  std::vector<int> ks{1, 2, 4, 8};
  std::uint64_t probe_seed = 1234;
  std::string output_dir = "runs/latest";
  int checkpoint_every = 0;
  bool record_wallclock = false;

  void validate() const;

  /// Parses INI text over the built-in defaults; `overrides` ("section.key", value) win over the file.
  /// Unknown sections or keys are rejected with ConfigError.
  static RunConfig parse(const std::string &ini_text, std::span<const std::pair<std::string, std::string>> overrides = {});
  static RunConfig load(const std::string &path, std::span<const std::pair<std::string, std::string>> overrides = {});

  /// Every key, resolved, in INI form; parse(to_ini()) reproduces the config exactly.
  std::string to_ini() const;
  static std::vector<std::string> known_keys();
};

} // namespace dada
