#include "dada/random.hpp"

#include <cmath>

namespace dada {

double sample_gamma(double shape, Rng &rng) {
  if (!(shape > 0.0)) throw ContractError("sample_gamma: shape must be positive");
  if (shape < 1.0) {
    const double u = uniform01(rng);
    return sample_gamma(shape + 1.0, rng) * std::pow(u, 1.0 / shape);
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal(rng);
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform01(rng);
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

double sample_beta(const BetaParams &params, Rng &rng) {
  if (!(params.alpha > 0.0) || !(params.beta > 0.0))
    throw ContractError("sample_beta: alpha and beta must be positive");
  const double g1 = sample_gamma(params.alpha, rng);
  const double g2 = sample_gamma(params.beta, rng);
  const double s = g1 + g2;
  // Both draws can underflow to zero for tiny shapes; fall back to a fair coin.
  if (s <= 0.0) return uniform01(rng) < params.alpha / (params.alpha + params.beta) ? 1.0 : 0.0;
  return g1 / s;
}

} // namespace dada
