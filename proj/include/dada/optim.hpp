#pragma once

#include "dada/autodiff.hpp"

#include <span>
#include <string>
#include <vector>

namespace dada {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  bool decoupled = false;  // false: g += wd * theta before the moments
};

struct AdamMoments {
  Matrix m;
  Matrix v;
  long step = 0;
};

/// Moments for one parameter group, aligned by position with the group's parameter list.
struct AdamState {
  std::vector<AdamMoments> slots;
};

/// One bias-corrected Adam step on every listed parameter whose slot index is in `active`
/// (all when empty). Throws NumericError naming the group and parameter on a non-finite gradient.
void adam_update(std::span<Parameter *const> params, AdamState &state, const AdamConfig &cfg, const std::string &group,
                 std::span<const size_t> active = {});

} // namespace dada
