#pragma once

#include "dada/autodiff.hpp"
#include "dada/random.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dada {

struct MlpSpec {
  std::vector<Index> layer_dims;  // input, hidden..., output
  bool batchnorm_hidden = false;

  void validate() const;
};

struct Linear {
  Parameter weight;  // in x out
  Parameter bias;    // 1 x out
};

struct BatchNorm {
  Parameter gamma;
  Parameter beta;
  RowVector running_mean;
  RowVector running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};

enum class Mode { Train, Eval };

// Which parameters enter the graph as differentiable leaves; the rest become constants.
enum class Binding { All, None, HeadOnly };

struct ForwardOptions {
  Mode mode = Mode::Train;
  Binding binding = Binding::All;
  bool update_running_stats = true;  // only meaningful in Train mode
};

/// Linear layers with relu between them (none after the last), optional batch norm on hidden layers
/// placed before the relu.
struct Mlp {
  MlpSpec spec;
  std::vector<Linear> layers;
  std::vector<BatchNorm> norms;

  Var forward(Tape &tape, const Var &x, const ForwardOptions &opt = {});
  std::vector<Parameter *> parameters();
  std::vector<const Parameter *> parameters() const;
  Index input_dim() const { return spec.layer_dims.front(); }
  Index output_dim() const { return spec.layer_dims.back(); }
};

/// Weights ~ Normal(0, 2 / fan_in), zero biases, unit BN scale. Pure function of (spec, rng state).
Mlp init_params(const MlpSpec &spec, Rng &rng, const std::string &prefix);

/// Feature generator: MLP followed by row L2 normalization.
struct Generator {
  Mlp mlp;
  Var forward(Tape &tape, const Var &raw, Binding binding = Binding::All);
};

struct DomainDiscriminator {
  Mlp mlp;  // d -> hidden -> domains, batch norm on the hidden layer
  Var forward(Tape &tape, const Var &x, Mode mode, Binding binding = Binding::All, bool update_running_stats = true);
  Index num_domains() const { return mlp.output_dim(); }
};

struct CategoryDiscriminator {
  Mlp mlp;  // d -> h1 -> h2 -> C
  Var forward(Tape &tape, const Var &x, Binding binding = Binding::All);
  Index num_classes() const { return mlp.output_dim(); }
};

struct ProxyBank {
  Parameter proxies;  // C x d, unnormalized
  Index num_classes() const { return proxies.value.rows(); }
  Index dim() const { return proxies.value.cols(); }
};

/// Entries ~ Normal(0, 1).
ProxyBank init_proxies(Index num_classes, Index dim, Rng &rng);

struct ModelDims {
  Index input_dim = 32;
  Index generator_hidden = 256;
  Index embed_dim = 64;
  Index domain_hidden = 512;
  Index num_domains = 3;
  Index category_hidden1 = 128;
  Index category_hidden2 = 64;
  Index num_classes = 4;
};

struct Models {
  Generator generator;
  DomainDiscriminator domain;
  CategoryDiscriminator category;
  ProxyBank bank;

  std::vector<Parameter *> generator_parameters();
  std::vector<Parameter *> discriminator_parameters();  // f_D then f_C
  ModelDims dims() const;
};

Models build_models(const ModelDims &dims, Rng &rng);

/// FNV-1a over names, shapes and raw bytes of the given parameters.
std::uint64_t hash_parameters(std::span<const Parameter *const> params);
std::uint64_t hash_parameters(std::span<Parameter *const> params);

} // namespace dada
