#pragma once

#include "dada/types.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace dada {

/// A learnable array. Owned by a model; a Tape only refers to it for the lifetime of one graph.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while its tape is alive.
class Var {
public:
  Var() = default;
  Var(Tape *tape, size_t id) : tape_(tape), id_(id) {}

  const Matrix &value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  double scalar() const;
  bool requires_grad() const;

  Tape *tape() const { return tape_; }
  size_t id() const { return id_; }

private:
  Tape *tape_ = nullptr;
  size_t id_ = 0;
};

/// Define-by-run graph. Nodes are appended in construction order and backward walks them in
/// exact reverse order, summing gradient contributions from every consumer.
class Tape {
public:
  // Receives the gradient flowing into the node and pushes contributions to its inputs.
  using Backward = std::function<void(Tape &, const Matrix &out_grad)>;

  Tape() = default;
  Tape(const Tape &) = delete;
  Tape &operator=(const Tape &) = delete;

  Var constant(Matrix value);
  Var param(Parameter &p);
  Var record(Matrix value, std::span<const Var> inputs, Backward backward);
  Var record(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
    return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
  }

  /// Writes d(loss)/d(leaf) into every Parameter reached by the graph. Parameter gradients
  /// accumulate across calls; node gradients are reset on each call.
  void backward(const Var &loss);

  const Matrix &value(size_t id) const { return nodes_[id].value; }
  bool requires_grad(size_t id) const { return nodes_[id].requires_grad; }
  void accumulate(const Var &v, const Matrix &g);
  size_t size() const { return nodes_.size(); }

private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Parameter *param = nullptr;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

// Differentiable operations. All arithmetic is double precision.

Var matmul(const Var &a, const Var &b);
Var matmul_nt(const Var &a, const Var &b);  // a * b^T
Var add(const Var &a, const Var &b);
Var sub(const Var &a, const Var &b);
Var scale(const Var &a, double s);
Var add_row(const Var &a, const Var &row);  // broadcast a 1xm row over every row of a
Var relu(const Var &a);
Var abs(const Var &a);
Var sum(const Var &a);
Var mean(const Var &a);
Var lerp(const Var &a, const Var &b, double t);  // t*a + (1-t)*b
Var concat_rows(std::span<const Var> parts);
Var slice_rows(const Var &a, Index begin, Index count);
Var gather_rows(const Var &a, std::span<const Index> rows);
Var l2_normalize_rows(const Var &a, double eps = 1e-12);
Var softmax_rows(const Var &a);
Var softmax_cross_entropy(const Var &logits, std::span<const int> labels);
/// x p^T for inputs whose rows are already unit-norm.
Var cosine_similarity_matrix(const Var &x, const Var &p);
Var nuclear_norm(const Var &a);
Var row_norm_sum(const Var &a);  // sum over rows of the row L2 norms

struct BatchStats {
  RowVector mean;
  RowVector variance;  // biased, as used for normalization
};

/// Batch normalization over rows using the batch's own statistics. Needs at least two rows.
Var batch_norm_train(const Var &x, const Var &gamma, const Var &beta, double eps, BatchStats *stats = nullptr);
/// Batch normalization with frozen statistics.
Var batch_norm_eval(const Var &x, const Var &gamma, const Var &beta, const RowVector &mean, const RowVector &variance, double eps);

inline Var operator+(const Var &a, const Var &b) { return add(a, b); }
inline Var operator-(const Var &a, const Var &b) { return sub(a, b); }
inline Var operator*(double s, const Var &a) { return scale(a, s); }

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tol = 0.0;

  bool passed() const;
  double max_error() const;
};

/// Compares analytic gradients with central differences for every entry of every parameter.
///
/// Per entry the error is |analytic - numeric| / max(|analytic|, |numeric|, floor), where the
/// floor is 1e-3 of the largest gradient magnitude over all checked parameters (plus 1e-10), so
/// entries that are negligible relative to the objective's gradient are judged on that scale.
/// Overwrites the parameters' grad slots.
GradCheckReport grad_check(const std::function<Var(Tape &)> &f, std::span<Parameter *const> params, double h = 1e-5,
                           double tol = 1e-4);

} // namespace dada
