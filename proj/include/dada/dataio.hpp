#pragma once

#include "dada/random.hpp"
#include "dada/types.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dada {

struct FeatureDataset {
  std::string name;
  Matrix features;                              // N x d_in
  Labels labels;                                // dense, in [0, num_classes)
  int num_classes = 0;
  std::vector<std::vector<Index>> class_index;  // class -> row indices
  std::vector<long long> original_labels;       // dense label -> label as found in the source

  Index size() const { return features.rows(); }
  Index dim() const { return features.cols(); }
  void rebuild_index();
  void validate() const;
};

struct SynthSpec {
  int num_classes = 8;
  Index dim = 32;
  int samples_per_class = 100;
  double center_scale = 4.0;
  double noise_sigma = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Centers uniform on the radius-center_scale sphere, samples = center + N(0, sigma^2 I).
FeatureDataset synth_generate(const SynthSpec &spec);

/// Reads "label,f0,...,f{d-1}". Labels are re-indexed densely by first appearance.
FeatureDataset load_csv(const std::string &path);

/// Writes the same format with 17 significant digits, so load_csv(write_csv(x)) is exact.
void write_csv(const std::string &path, const Matrix &rows, std::span<const long long> labels, const std::string &column_prefix = "f");
void write_csv(const std::string &path, const FeatureDataset &data);

struct Split {
  FeatureDataset train;
  FeatureDataset test;
};

/// Class-disjoint split: after a seeded shuffle of the classes, the first ceil(fraction * C) go to train.
Split split(const FeatureDataset &data, double train_fraction, std::uint64_t seed);

} // namespace dada
