#pragma once

#include "dada/nn.hpp"
#include "dada/random.hpp"
#include "dada/types.hpp"

#include <map>
#include <span>
#include <string>
#include <vector>

namespace dada {

/// Embeddings searched against themselves with cosine similarity; a query never retrieves itself.
struct RetrievalIndex {
  Matrix embeddings;  // N x d, unit rows
  Labels labels;

  void validate() const;
  Index size() const { return embeddings.rows(); }
};

/// Neighbours of `query` ordered by decreasing similarity, ties by ascending index, self excluded.
std::vector<Index> ranked_neighbors(const Matrix &similarity, Index query);

/// Fraction of queries with a same-class item among their K nearest neighbours, for each K.
std::map<int, double> recall_at_k(const RetrievalIndex &index, std::span<const int> ks);

struct MapAtR {
  double value = 0.0;
  int skipped = 0;  // queries whose class has no other member
};

/// Mean over queries of (1/R) sum_{i<=R} rel(i) * precision@i, with R the number of other
/// same-class items.
MapAtR map_at_r(const RetrievalIndex &index);

struct ProbeOptions {
  double train_fraction = 0.7;
  int iterations = 200;
  double learning_rate = 1.0;
  std::uint64_t seed = 1234;
};

/// Held-out balanced accuracy of a fresh logistic-regression probe separating sample embeddings from
/// proxies. 0.5 means the two populations are indistinguishable to a linear classifier.
double domain_probe(const Matrix &samples, const Matrix &proxies_norm, const ProbeOptions &opt = {});

/// counts(i, j): rows of true class i that f_C assigns to class j (argmax, lowest index on ties).
Eigen::MatrixXi confusion_matrix(CategoryDiscriminator &cat, const Matrix &rows, std::span<const int> labels);

/// CSV "label,e0,...,e{d-1}", full double precision.
void dump_embeddings(const RetrievalIndex &index, const std::string &path);

} // namespace dada
