#pragma once

#include "dada/types.hpp"

#include <random>

namespace dada {

using Rng = std::mt19937_64;

inline double uniform01(Rng &rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

inline Matrix normal_matrix(Index rows, Index cols, double mean, double stddev, Rng &rng) {
  std::normal_distribution<double> dist(mean, stddev);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

/// Gamma(shape, 1) by Marsaglia and Tsang; shapes below one use the u^(1/shape) boost.
double sample_gamma(double shape, Rng &rng);

struct BetaParams {
  double alpha = 2.0;
  double beta = 1.0;
};

/// One Beta(alpha, beta) draw as g1 / (g1 + g2) of two Gamma draws.
double sample_beta(const BetaParams &params, Rng &rng);

} // namespace dada
