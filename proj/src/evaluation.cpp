#include "dada/evaluation.hpp"
#include "dada/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dada {

void RetrievalIndex::validate() const {
  if (embeddings.rows() < 2) throw ContractError("RetrievalIndex: need at least 2 items");
  if (static_cast<Index>(labels.size()) != embeddings.rows())
    throw ContractError("RetrievalIndex: " + std::to_string(labels.size()) + " labels for " + std::to_string(embeddings.rows()) + " rows");
  for (Index i = 0; i < embeddings.rows(); ++i)
    if (std::abs(embeddings.row(i).norm() - 1.0) > 1e-6)
      throw ContractError("RetrievalIndex: row " + std::to_string(i) + " is not unit-norm");
}

std::vector<Index> ranked_neighbors(const Matrix &similarity, Index query) {
  std::vector<Index> order;
  order.reserve(static_cast<size_t>(similarity.cols()));
  for (Index j = 0; j < similarity.cols(); ++j)
    if (j != query) order.push_back(j);
  const auto row = similarity.row(query);
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return row(a) > row(b); });
  return order;
}

std::map<int, double> recall_at_k(const RetrievalIndex &index, std::span<const int> ks) {
  index.validate();
  const Index n = index.size();
  for (size_t i = 0; i < ks.size(); ++i) {
    if (ks[i] < 1 || ks[i] >= n)
      throw ConfigError("recall_at_k: K=" + std::to_string(ks[i]) + " must lie in [1, N) with N=" + std::to_string(n));
    if (i > 0 && ks[i] <= ks[i - 1]) throw ConfigError("recall_at_k: Ks must be strictly ascending");
  }
  const Matrix sim = index.embeddings * index.embeddings.transpose();
  std::vector<long> hits(ks.size(), 0);
  for (Index q = 0; q < n; ++q) {
    const auto order = ranked_neighbors(sim, q);
    const int y = index.labels[static_cast<size_t>(q)];
    // First rank (1-based) at which a same-class item appears.
    Index first = n;
    for (size_t r = 0; r < order.size(); ++r)
      if (index.labels[static_cast<size_t>(order[r])] == y) {
        first = static_cast<Index>(r) + 1;
        break;
      }
    for (size_t i = 0; i < ks.size(); ++i)
      if (first <= ks[i]) ++hits[i];
  }
  std::map<int, double> out;
  for (size_t i = 0; i < ks.size(); ++i) out[ks[i]] = static_cast<double>(hits[i]) / static_cast<double>(n);
  return out;
}

MapAtR map_at_r(const RetrievalIndex &index) {
  index.validate();
  const Index n = index.size();
  const Matrix sim = index.embeddings * index.embeddings.transpose();
  std::map<int, Index> counts;
  for (int y : index.labels) ++counts[y];

  MapAtR out;
  double total = 0.0;
  Index used = 0;
  for (Index q = 0; q < n; ++q) {
    const int y = index.labels[static_cast<size_t>(q)];
    const Index r = counts[y] - 1;
    if (r == 0) {
      ++out.skipped;
      continue;
    }
    const auto order = ranked_neighbors(sim, q);
    double ap = 0.0;
    Index relevant = 0;
    for (Index i = 0; i < r; ++i) {
      if (index.labels[static_cast<size_t>(order[static_cast<size_t>(i)])] == y) {
        ++relevant;
        ap += static_cast<double>(relevant) / static_cast<double>(i + 1);
      }
    }
    total += ap / static_cast<double>(r);
    ++used;
  }
  out.value = used > 0 ? total / static_cast<double>(used) : 0.0;
  return out;
}

double domain_probe(const Matrix &samples, const Matrix &proxies_norm, const ProbeOptions &opt) {
  if (samples.rows() == 0 || proxies_norm.rows() == 0) throw ContractError("domain_probe: both sets must be nonempty");
  if (samples.cols() != proxies_norm.cols())
    throw DimensionError("domain_probe: dims differ, " + shape_str(samples) + " vs " + shape_str(proxies_norm));
  Rng rng(opt.seed);

  // Each population is split on its own so both sides appear in training and held-out data.
  auto split_rows = [&](Index n) {
    std::vector<Index> idx(static_cast<size_t>(n));
    std::iota(idx.begin(), idx.end(), Index{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    Index n_train = static_cast<Index>(std::round(opt.train_fraction * static_cast<double>(n)));
    n_train = std::clamp<Index>(n_train, 1, std::max<Index>(1, n - 1));
    std::vector<Index> train(idx.begin(), idx.begin() + n_train);
    std::vector<Index> test(idx.begin() + n_train, idx.end());
    if (test.empty()) test = train;  // a single point is both seen and scored
    return std::pair{train, test};
  };
  auto [s_train, s_test] = split_rows(samples.rows());
  auto [p_train, p_test] = split_rows(proxies_norm.rows());

  // Oversample the smaller training side with replacement.
  auto balance = [&](std::vector<Index> &small, size_t target) {
    const size_t base = small.size();
    std::uniform_int_distribution<size_t> pick(0, base - 1);
    while (small.size() < target) small.push_back(small[pick(rng)]);
  };
  if (s_train.size() < p_train.size())
    balance(s_train, p_train.size());
  else
    balance(p_train, s_train.size());

  const Index d = samples.cols();
  const Index m = static_cast<Index>(s_train.size() + p_train.size());
  Matrix x(m, d);
  Vector y(m);
  Index r = 0;
  for (Index i : s_train) {
    x.row(r) = samples.row(i);
    y(r++) = 0.0;
  }
  for (Index i : p_train) {
    x.row(r) = proxies_norm.row(i);
    y(r++) = 1.0;
  }

  Vector w = Vector::Zero(d);
  double b = 0.0;
  for (int it = 0; it < opt.iterations; ++it) {
    const Vector z = (x * w).array() + b;
    const Vector p = (1.0 / (1.0 + (-z.array()).exp())).matrix();
    const Vector err = p - y;
    w -= opt.learning_rate * (x.transpose() * err) / static_cast<double>(m);
    b -= opt.learning_rate * err.mean();
  }

  auto accuracy = [&](const Matrix &set, const std::vector<Index> &rows, bool is_proxy) {
    Index correct = 0;
    for (Index i : rows) {
      const double z = set.row(i).dot(w) + b;
      if ((z > 0.0) == is_proxy) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(rows.size());
  };
  return 0.5 * (accuracy(samples, s_test, false) + accuracy(proxies_norm, p_test, true));
}

Eigen::MatrixXi confusion_matrix(CategoryDiscriminator &cat, const Matrix &rows, std::span<const int> labels) {
  if (static_cast<Index>(labels.size()) != rows.rows())
    throw ContractError("confusion_matrix: " + std::to_string(labels.size()) + " labels for " + std::to_string(rows.rows()) + " rows");
  const Index c = cat.num_classes();
  Tape tape;
  const Matrix logits = cat.forward(tape, tape.constant(rows), Binding::None).value();
  Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(c, c);
  for (Index i = 0; i < rows.rows(); ++i) {
    const int y = labels[static_cast<size_t>(i)];
    if (y < 0 || y >= c) throw ContractError("confusion_matrix: label " + std::to_string(y) + " out of range");
    Index best = 0;
    for (Index j = 1; j < c; ++j)
      if (logits(i, j) > logits(i, best)) best = j;
    ++counts(y, best);
  }
  return counts;
}

void dump_embeddings(const RetrievalIndex &index, const std::string &path) {
  std::vector<long long> labels(index.labels.begin(), index.labels.end());
  write_csv(path, index.embeddings, labels, "e");
}

} // namespace dada
