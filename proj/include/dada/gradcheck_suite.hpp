#pragma once

#include "dada/autodiff.hpp"

#include <string>
#include <vector>

namespace dada {

struct GradCheckResult {
  std::string scope;
  std::uint64_t seed = 0;
  GradCheckReport report;
};

/// Names accepted by run_gradcheck_suite, in run order.
std::vector<std::string> gradcheck_scopes();

/// Finite-difference checks of every op and composed objective in `scope` ("all" or one name),
/// each repeated over `seeds` random instances. Throws ConfigError for an unknown scope.
std::vector<GradCheckResult> run_gradcheck_suite(const std::string &scope, double h = 1e-5, double tol = 1e-4, int seeds = 3);

} // namespace dada
