#pragma once

#include "dada/nn.hpp"
#include "dada/random.hpp"

#include <string>

namespace dada {

struct Checkpoint {
  Models models;
  std::string config_ini;  // resolved run configuration
  std::string rng_state;   // textual std::mt19937_64 state
};

/// Text checkpoint, format version 1 (layout in README). Doubles are written in shortest
/// round-trip form so a save/load cycle is bit-exact.
void save_checkpoint(const std::string &path, const Models &models, const std::string &config_ini, const Rng &rng);
Checkpoint load_checkpoint(const std::string &path);

} // namespace dada
