#include "dada/optim.hpp"

#include <algorithm>
#include <cmath>

namespace dada {

void adam_update(std::span<Parameter *const> params, AdamState &state, const AdamConfig &cfg, const std::string &group,
                 std::span<const size_t> active) {
  if (state.slots.size() != params.size()) {
    if (!state.slots.empty())
      throw ContractError("adam_update: group '" + group + "' has " + std::to_string(params.size()) + " parameters but " +
                          std::to_string(state.slots.size()) + " moment slots");
    state.slots.resize(params.size());
  }
  for (size_t i = 0; i < params.size(); ++i) {
    if (!active.empty() && std::find(active.begin(), active.end(), i) == active.end()) continue;
    Parameter &p = *params[i];
    if (!p.grad.allFinite()) throw NumericError("non-finite gradient in group '" + group + "', parameter '" + p.name + "'");
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols())
      throw DimensionError("adam_update: gradient shape " + shape_str(p.grad) + " vs parameter " + shape_str(p.value));
    AdamMoments &s = state.slots[i];
    if (s.step == 0) {
      s.m = Matrix::Zero(p.value.rows(), p.value.cols());
      s.v = Matrix::Zero(p.value.rows(), p.value.cols());
    }
    Matrix g = p.grad;
    if (cfg.weight_decay != 0.0 && !cfg.decoupled) g += cfg.weight_decay * p.value;
    ++s.step;
    s.m = cfg.beta1 * s.m + (1.0 - cfg.beta1) * g;
    s.v = cfg.beta2 * s.v + (1.0 - cfg.beta2) * g.cwiseAbs2();
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(s.step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(s.step));
    if (cfg.weight_decay != 0.0 && cfg.decoupled) p.value *= 1.0 - cfg.lr * cfg.weight_decay;
    p.value.array() -= cfg.lr * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + cfg.eps);
  }
}

} // namespace dada
