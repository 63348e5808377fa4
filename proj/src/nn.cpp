#include "dada/nn.hpp"

#include <cmath>
#include <cstring>

namespace dada {

void MlpSpec::validate() const {
  if (layer_dims.size() < 2) throw ContractError("MlpSpec: need at least input and output dims");
  for (Index d : layer_dims)
    if (d < 1) throw ContractError("MlpSpec: layer dims must be >= 1");
}

Mlp init_params(const MlpSpec &spec, Rng &rng, const std::string &prefix) {
  spec.validate();
  Mlp mlp;
  mlp.spec = spec;
  const size_t n_layers = spec.layer_dims.size() - 1;
  for (size_t l = 0; l < n_layers; ++l) {
    const Index in = spec.layer_dims[l], out = spec.layer_dims[l + 1];
    const std::string base = prefix + "." + std::to_string(l);
    Linear layer{Parameter(base + ".weight", normal_matrix(in, out, 0.0, std::sqrt(2.0 / static_cast<double>(in)), rng)),
                 Parameter(base + ".bias", Matrix::Zero(1, out))};
    mlp.layers.push_back(std::move(layer));
    if (spec.batchnorm_hidden && l + 1 < n_layers) {
      BatchNorm bn{Parameter(base + ".bn.gamma", Matrix::Ones(1, out)), Parameter(base + ".bn.beta", Matrix::Zero(1, out)),
                   RowVector::Zero(out), RowVector::Ones(out)};
      mlp.norms.push_back(std::move(bn));
    }
  }
  return mlp;
}

Var Mlp::forward(Tape &tape, const Var &x, const ForwardOptions &opt) {
  if (x.cols() != input_dim())
    throw DimensionError("Mlp::forward: expected " + std::to_string(input_dim()) + " input features, got " +
                         std::to_string(x.cols()));
  const size_t n_layers = layers.size();
  auto bind = [&](Parameter &p, bool head) {
    const bool leaf = opt.binding == Binding::All || (opt.binding == Binding::HeadOnly && head);
    return leaf ? tape.param(p) : tape.constant(p.value);
  };
  Var h = x;
  for (size_t l = 0; l < n_layers; ++l) {
    const bool head = l + 1 == n_layers;
    h = add_row(matmul(h, bind(layers[l].weight, head)), bind(layers[l].bias, head));
    if (head) break;
    if (spec.batchnorm_hidden) {
      BatchNorm &bn = norms[l];
      if (opt.mode == Mode::Train) {
        BatchStats stats;
        h = batch_norm_train(h, bind(bn.gamma, false), bind(bn.beta, false), bn.eps, &stats);
        if (opt.update_running_stats) {
          const double n = static_cast<double>(h.rows());
          const RowVector unbiased = stats.variance * (n / (n - 1.0));
          bn.running_mean = (1.0 - bn.momentum) * bn.running_mean + bn.momentum * stats.mean;
          bn.running_var = (1.0 - bn.momentum) * bn.running_var + bn.momentum * unbiased;
        }
      } else {
        h = batch_norm_eval(h, bind(bn.gamma, false), bind(bn.beta, false), bn.running_mean, bn.running_var, bn.eps);
      }
    }
    h = relu(h);
  }
  return h;
}

std::vector<Parameter *> Mlp::parameters() {
  std::vector<Parameter *> out;
  for (size_t l = 0; l < layers.size(); ++l) {
    out.push_back(&layers[l].weight);
    out.push_back(&layers[l].bias);
    if (l < norms.size()) {
      out.push_back(&norms[l].gamma);
      out.push_back(&norms[l].beta);
    }
  }
  return out;
}

std::vector<const Parameter *> Mlp::parameters() const {
  auto ps = const_cast<Mlp *>(this)->parameters();
  return {ps.begin(), ps.end()};
}

Var Generator::forward(Tape &tape, const Var &raw, Binding binding) {
  ForwardOptions opt;
  opt.binding = binding;
  return l2_normalize_rows(mlp.forward(tape, raw, opt));
}

Var DomainDiscriminator::forward(Tape &tape, const Var &x, Mode mode, Binding binding, bool update_running_stats) {
  if (mode == Mode::Train && x.rows() < 2)
    throw ContractError("DomainDiscriminator: train-mode batch norm needs at least 2 rows, got " + std::to_string(x.rows()));
  return mlp.forward(tape, x, ForwardOptions{mode, binding, update_running_stats});
}

Var CategoryDiscriminator::forward(Tape &tape, const Var &x, Binding binding) {
  ForwardOptions opt;
  opt.binding = binding;
  return mlp.forward(tape, x, opt);
}

ProxyBank init_proxies(Index num_classes, Index dim, Rng &rng) {
  if (num_classes < 1 || dim < 1) throw ContractError("init_proxies: sizes must be >= 1");
  return ProxyBank{Parameter("proxies", normal_matrix(num_classes, dim, 0.0, 1.0, rng))};
}

std::vector<Parameter *> Models::generator_parameters() { return generator.mlp.parameters(); }

std::vector<Parameter *> Models::discriminator_parameters() {
  auto out = domain.mlp.parameters();
  auto cat = category.mlp.parameters();
  out.insert(out.end(), cat.begin(), cat.end());
  return out;
}

ModelDims Models::dims() const {
  const auto &g = generator.mlp.spec.layer_dims;
  const auto &d = domain.mlp.spec.layer_dims;
  const auto &c = category.mlp.spec.layer_dims;
  return ModelDims{g[0], g[1], g.back(), d[1], d.back(), c[1], c[2], c.back()};
}

Models build_models(const ModelDims &dims, Rng &rng) {
  Models m;
  m.generator.mlp = init_params(MlpSpec{{dims.input_dim, dims.generator_hidden, dims.embed_dim}, false}, rng, "gen");
  m.domain.mlp = init_params(MlpSpec{{dims.embed_dim, dims.domain_hidden, dims.num_domains}, true}, rng, "domain");
  m.category.mlp = init_params(
      MlpSpec{{dims.embed_dim, dims.category_hidden1, dims.category_hidden2, dims.num_classes}, false}, rng, "category");
  m.bank = init_proxies(dims.num_classes, dims.embed_dim, rng);
  return m;
}

namespace {

void fnv(std::uint64_t &h, const void *data, size_t n) {
  const auto *p = static_cast<const unsigned char *>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
}

} // namespace

std::uint64_t hash_parameters(std::span<const Parameter *const> params) {
  std::uint64_t h = 14695981039346656037ull;
  for (const Parameter *p : params) {
    fnv(h, p->name.data(), p->name.size());
    const Index shape[2] = {p->value.rows(), p->value.cols()};
    fnv(h, shape, sizeof(shape));
    fnv(h, p->value.data(), static_cast<size_t>(p->value.size()) * sizeof(double));
  }
  return h;
}

std::uint64_t hash_parameters(std::span<Parameter *const> params) {
  std::vector<const Parameter *> c(params.begin(), params.end());
  return hash_parameters(std::span<const Parameter *const>(c));
}

} // namespace dada
