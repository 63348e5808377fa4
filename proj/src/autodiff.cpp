#include "dada/autodiff.hpp"
#include "dada/linalg.hpp"

#include <algorithm>
#include <cmath>

namespace dada {

const Matrix &Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

double Var::scalar() const {
  const Matrix &v = value();
  if (v.rows() != 1 || v.cols() != 1)
    throw ContractError("Var::scalar: expected 1x1, got " + shape_str(v));
  return v(0, 0);
}

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, false, nullptr, {}});
  return {this, nodes_.size() - 1};
}

Var Tape::param(Parameter &p) {
  nodes_.push_back(Node{p.value, {}, true, &p, {}});
  return {this, nodes_.size() - 1};
}

Var Tape::record(Matrix value, std::span<const Var> inputs, Backward backward) {
  bool needs = false;
  for (const Var &in : inputs) {
    if (in.tape() != this) throw ContractError("Tape::record: input belongs to another tape");
    needs = needs || nodes_[in.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs, nullptr, needs ? std::move(backward) : Backward{}});
  return {this, nodes_.size() - 1};
}

void Tape::accumulate(const Var &v, const Matrix &g) {
  Node &n = nodes_[v.id()];
  if (!n.requires_grad) return;
  n.grad += g;
}

void Tape::backward(const Var &loss) {
  if (loss.tape() != this) throw ContractError("backward: loss belongs to another tape");
  const Matrix &lv = nodes_[loss.id()].value;
  if (lv.rows() != 1 || lv.cols() != 1)
    throw ContractError("backward: loss must be a scalar, got " + shape_str(lv));

  for (Node &n : nodes_) {
    if (n.requires_grad)
      n.grad.setZero(n.value.rows(), n.value.cols());
    else
      n.grad.resize(0, 0);
  }
  if (!nodes_[loss.id()].requires_grad) return;
  nodes_[loss.id()].grad(0, 0) = 1.0;

  for (size_t i = loss.id() + 1; i-- > 0;) {
    Node &n = nodes_[i];
    if (!n.requires_grad) continue;
    if (n.param) {
      n.param->grad += n.grad;
    } else if (n.backward) {
      // Copy: the callback may touch other nodes but never this one's gradient.
      const Matrix g = n.grad;
      n.backward(*this, g);
    }
  }
}

namespace {

void require_same_tape(const Var &a, const Var &b, const char *op) {
  if (a.tape() != b.tape()) throw ContractError(std::string(op) + ": operands live on different tapes");
}

void require_same_shape(const Var &a, const Var &b, const char *op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.value()) + " vs " + shape_str(b.value()));
}

Matrix scalar_matrix(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return m;
}

} // namespace

Var matmul(const Var &a, const Var &b) {
  require_same_tape(a, b, "matmul");
  if (a.cols() != b.rows())
    throw DimensionError("matmul: inner dimensions differ, " + shape_str(a.value()) + " * " + shape_str(b.value()));
  Tape &t = *a.tape();
  return t.record(a.value() * b.value(), {a, b}, [a, b](Tape &tape, const Matrix &g) {
    if (a.requires_grad()) tape.accumulate(a, g * b.value().transpose());
    if (b.requires_grad()) tape.accumulate(b, a.value().transpose() * g);
  });
}

Var matmul_nt(const Var &a, const Var &b) {
  require_same_tape(a, b, "matmul_nt");
  if (a.cols() != b.cols())
    throw DimensionError("matmul_nt: column counts differ, " + shape_str(a.value()) + " vs " + shape_str(b.value()));
  Tape &t = *a.tape();
  return t.record(a.value() * b.value().transpose(), {a, b}, [a, b](Tape &tape, const Matrix &g) {
    if (a.requires_grad()) tape.accumulate(a, g * b.value());
    if (b.requires_grad()) tape.accumulate(b, g.transpose() * a.value());
  });
}

Var add(const Var &a, const Var &b) {
  require_same_tape(a, b, "add");
  require_same_shape(a, b, "add");
  return a.tape()->record(a.value() + b.value(), {a, b}, [a, b](Tape &tape, const Matrix &g) {
    tape.accumulate(a, g);
    tape.accumulate(b, g);
  });
}

Var sub(const Var &a, const Var &b) {
  require_same_tape(a, b, "sub");
  require_same_shape(a, b, "sub");
  return a.tape()->record(a.value() - b.value(), {a, b}, [a, b](Tape &tape, const Matrix &g) {
    tape.accumulate(a, g);
    tape.accumulate(b, -g);
  });
}

Var scale(const Var &a, double s) {
  return a.tape()->record(s * a.value(), {a}, [a, s](Tape &tape, const Matrix &g) { tape.accumulate(a, s * g); });
}

Var add_row(const Var &a, const Var &row) {
  require_same_tape(a, row, "add_row");
  if (row.rows() != 1 || row.cols() != a.cols())
    throw DimensionError("add_row: expected 1x" + std::to_string(a.cols()) + " row, got " + shape_str(row.value()));
  Matrix out = a.value().rowwise() + row.value().row(0);
  return a.tape()->record(std::move(out), {a, row}, [a, row](Tape &tape, const Matrix &g) {
    tape.accumulate(a, g);
    if (row.requires_grad()) tape.accumulate(row, g.colwise().sum());
  });
}

Var relu(const Var &a) {
  Matrix out = a.value().cwiseMax(0.0);
  return a.tape()->record(std::move(out), {a}, [a](Tape &tape, const Matrix &g) {
    tape.accumulate(a, (a.value().array() > 0.0).select(g, 0.0));
  });
}

Var abs(const Var &a) {
  return a.tape()->record(a.value().cwiseAbs(), {a}, [a](Tape &tape, const Matrix &g) {
    tape.accumulate(a, Matrix(a.value().array().sign() * g.array()));
  });
}

Var sum(const Var &a) {
  return a.tape()->record(scalar_matrix(a.value().sum()), {a}, [a](Tape &tape, const Matrix &g) {
    tape.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

Var mean(const Var &a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw ContractError("mean: empty tensor");
  return a.tape()->record(scalar_matrix(a.value().sum() / n), {a}, [a, n](Tape &tape, const Matrix &g) {
    tape.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0) / n));
  });
}

Var lerp(const Var &a, const Var &b, double t) {
  require_same_tape(a, b, "lerp");
  require_same_shape(a, b, "lerp");
  return a.tape()->record(t * a.value() + (1.0 - t) * b.value(), {a, b}, [a, b, t](Tape &tape, const Matrix &g) {
    tape.accumulate(a, t * g);
    tape.accumulate(b, (1.0 - t) * g);
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  Tape &t = *parts.front().tape();
  const Index cols = parts.front().cols();
  Index rows = 0;
  for (const Var &p : parts) {
    if (p.tape() != &t) throw ContractError("concat_rows: operands live on different tapes");
    if (p.cols() != cols)
      throw DimensionError("concat_rows: column mismatch " + std::to_string(cols) + " vs " + std::to_string(p.cols()));
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Index at = 0;
  for (const Var &p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.record(std::move(out), parts, [inputs](Tape &tape, const Matrix &g) {
    Index offset = 0;
    for (const Var &p : inputs) {
      tape.accumulate(p, g.middleRows(offset, p.rows()));
      offset += p.rows();
    }
  });
}

Var slice_rows(const Var &a, Index begin, Index count) {
  if (begin < 0 || count < 0 || begin + count > a.rows())
    throw DimensionError("slice_rows: rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") out of range for " + shape_str(a.value()));
  return a.tape()->record(a.value().middleRows(begin, count), {a}, [a, begin, count](Tape &tape, const Matrix &g) {
    Matrix full = Matrix::Zero(a.rows(), a.cols());
    full.middleRows(begin, count) = g;
    tape.accumulate(a, full);
  });
}

Var gather_rows(const Var &a, std::span<const Index> rows) {
  Matrix out(static_cast<Index>(rows.size()), a.cols());
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= a.rows())
      throw DimensionError("gather_rows: row " + std::to_string(rows[i]) + " out of range for " + shape_str(a.value()));
    out.row(static_cast<Index>(i)) = a.value().row(rows[i]);
  }
  std::vector<Index> idx(rows.begin(), rows.end());
  return a.tape()->record(std::move(out), {a}, [a, idx](Tape &tape, const Matrix &g) {
    Matrix full = Matrix::Zero(a.rows(), a.cols());
    for (size_t i = 0; i < idx.size(); ++i) full.row(idx[i]) += g.row(static_cast<Index>(i));
    tape.accumulate(a, full);
  });
}

Var l2_normalize_rows(const Var &a, double eps) {
  if (!(eps > 0.0)) throw ContractError("l2_normalize_rows: eps must be positive");
  const Vector norms = a.value().rowwise().norm();
  const Vector denom = norms.cwiseMax(eps);
  Matrix out = a.value().array().colwise() / denom.array();
  Matrix y = out;
  return a.tape()->record(std::move(out), {a}, [a, y, norms, denom, eps](Tape &tape, const Matrix &g) {
    Matrix dx(a.rows(), a.cols());
    for (Index i = 0; i < a.rows(); ++i) {
      if (norms(i) > eps) {
        // d(x/|x|) = (g - y <y, g>) / |x|
        const double proj = y.row(i).dot(g.row(i));
        dx.row(i) = (g.row(i) - proj * y.row(i)) / denom(i);
      } else {
        dx.row(i) = g.row(i) / eps;
      }
    }
    tape.accumulate(a, dx);
  });
}

Var softmax_rows(const Var &a) {
  Matrix p = a.value();
  for (Index i = 0; i < p.rows(); ++i) {
    const double m = p.row(i).maxCoeff();
    p.row(i) = (p.row(i).array() - m).exp();
    p.row(i) /= p.row(i).sum();
  }
  Matrix y = p;
  return a.tape()->record(std::move(p), {a}, [a, y](Tape &tape, const Matrix &g) {
    Matrix dx(y.rows(), y.cols());
    for (Index i = 0; i < y.rows(); ++i) {
      const double dot = y.row(i).dot(g.row(i));
      dx.row(i) = y.row(i).array() * (g.row(i).array() - dot);
    }
    tape.accumulate(a, dx);
  });
}

Var softmax_cross_entropy(const Var &logits, std::span<const int> labels) {
  const Matrix &z = logits.value();
  const Index n = z.rows(), c = z.cols();
  if (static_cast<Index>(labels.size()) != n)
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) + " rows");
  if (n == 0) throw ContractError("softmax_cross_entropy: empty batch");
  Matrix prob(n, c);
  double loss = 0.0;
  for (Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<size_t>(i)];
    if (y < 0 || y >= c)
      throw std::out_of_range("softmax_cross_entropy: label " + std::to_string(y) + " outside [0, " + std::to_string(c) + ")");
    const double m = z.row(i).maxCoeff();
    const auto e = (z.row(i).array() - m).exp();
    const double s = e.sum();
    prob.row(i) = e / s;
    loss += std::log(s) + m - z(i, y);
  }
  loss /= static_cast<double>(n);
  std::vector<int> ys(labels.begin(), labels.end());
  return logits.tape()->record(scalar_matrix(loss), {logits}, [logits, prob, ys](Tape &tape, const Matrix &g) {
    Matrix dz = prob;
    for (size_t i = 0; i < ys.size(); ++i) dz(static_cast<Index>(i), ys[i]) -= 1.0;
    dz *= g(0, 0) / static_cast<double>(ys.size());
    tape.accumulate(logits, dz);
  });
}

Var cosine_similarity_matrix(const Var &x, const Var &p) {
  if (x.cols() != p.cols())
    throw DimensionError("cosine_similarity_matrix: embedding dims differ, " + shape_str(x.value()) + " vs " + shape_str(p.value()));
  return matmul_nt(x, p);
}

Var nuclear_norm(const Var &a) {
  if (a.rows() < 1 || a.cols() < 1) throw ContractError("nuclear_norm: empty matrix");
  const auto svd = gram_svd<double>(a.value(), 1e-10);
  const double value = svd.singular_values.sum();
  // Subgradient U V^T; directions with sigma below the cutoff carry zero columns.
  Matrix grad = svd.u * svd.v.transpose();
  return a.tape()->record(scalar_matrix(value), {a}, [a, grad](Tape &tape, const Matrix &g) {
    tape.accumulate(a, g(0, 0) * grad);
  });
}

Var row_norm_sum(const Var &a) {
  const Vector norms = a.value().rowwise().norm();
  return a.tape()->record(scalar_matrix(norms.sum()), {a}, [a, norms](Tape &tape, const Matrix &g) {
    Matrix dx = Matrix::Zero(a.rows(), a.cols());
    for (Index i = 0; i < a.rows(); ++i)
      if (norms(i) > 0.0) dx.row(i) = a.value().row(i) / norms(i);
    tape.accumulate(a, g(0, 0) * dx);
  });
}

Var batch_norm_train(const Var &x, const Var &gamma, const Var &beta, double eps, BatchStats *stats) {
  const Matrix &v = x.value();
  const Index n = v.rows(), m = v.cols();
  if (n < 2) throw ContractError("batch_norm_train: batch of size " + std::to_string(n) + " has no variance");
  if (gamma.rows() != 1 || gamma.cols() != m || beta.rows() != 1 || beta.cols() != m)
    throw DimensionError("batch_norm_train: scale/shift must be 1x" + std::to_string(m));
  const RowVector mu = v.colwise().mean();
  const Matrix centered = v.rowwise() - mu;
  const RowVector var = centered.cwiseAbs2().colwise().sum() / static_cast<double>(n);
  const RowVector inv_std = (var.array() + eps).rsqrt();
  Matrix xhat = centered.array().rowwise() * inv_std.array();
  Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() + beta.value().row(0).array();
  if (stats) *stats = BatchStats{mu, var};
  return x.tape()->record(std::move(out), {x, gamma, beta}, [x, gamma, beta, xhat, inv_std](Tape &tape, const Matrix &g) {
    const double n = static_cast<double>(g.rows());
    if (gamma.requires_grad()) tape.accumulate(gamma, g.cwiseProduct(xhat).colwise().sum());
    if (beta.requires_grad()) tape.accumulate(beta, g.colwise().sum());
    if (x.requires_grad()) {
      const Matrix gxhat = g.array().rowwise() * gamma.value().row(0).array();
      const RowVector sum_g = gxhat.colwise().sum();
      const RowVector sum_gx = gxhat.cwiseProduct(xhat).colwise().sum();
      Matrix dx = (n * gxhat).rowwise() - sum_g;
      dx.array() -= xhat.array().rowwise() * sum_gx.array();
      dx = dx.array().rowwise() * (inv_std.array() / n);
      tape.accumulate(x, dx);
    }
  });
}

Var batch_norm_eval(const Var &x, const Var &gamma, const Var &beta, const RowVector &mean, const RowVector &variance, double eps) {
  const Index m = x.cols();
  if (mean.size() != m || variance.size() != m || gamma.cols() != m || beta.cols() != m)
    throw DimensionError("batch_norm_eval: statistics must have " + std::to_string(m) + " features");
  const RowVector inv_std = (variance.array() + eps).rsqrt();
  Matrix xhat = (x.value().rowwise() - mean).array().rowwise() * inv_std.array();
  Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() + beta.value().row(0).array();
  return x.tape()->record(std::move(out), {x, gamma, beta}, [x, gamma, beta, xhat, inv_std](Tape &tape, const Matrix &g) {
    if (gamma.requires_grad()) tape.accumulate(gamma, g.cwiseProduct(xhat).colwise().sum());
    if (beta.requires_grad()) tape.accumulate(beta, g.colwise().sum());
    if (x.requires_grad())
      tape.accumulate(x, Matrix(g.array().rowwise() * (gamma.value().row(0).array() * inv_std.array())));
  });
}

bool GradCheckReport::passed() const {
  return std::all_of(entries.begin(), entries.end(), [this](const GradCheckEntry &e) { return e.max_rel_error < tol; });
}

double GradCheckReport::max_error() const {
  double worst = 0.0;
  for (const auto &e : entries) worst = std::max(worst, e.max_rel_error);
  return worst;
}

GradCheckReport grad_check(const std::function<Var(Tape &)> &f, std::span<Parameter *const> params, double h, double tol) {
  if (!(h > 0.0) || !(tol > 0.0)) throw ContractError("grad_check: h and tol must be positive");
  for (Parameter *p : params) p->zero_grad();
  {
    Tape tape;
    Var loss = f(tape);
    tape.backward(loss);
  }
  auto eval = [&f]() {
    Tape tape;
    return f(tape).scalar();
  };

  std::vector<Matrix> numerics;
  double scale = 0.0;
  for (Parameter *p : params) {
    Matrix numeric(p->value.rows(), p->value.cols());
    for (Index i = 0; i < p->value.size(); ++i) {
      double &x = p->value.data()[i];
      const double saved = x;
      x = saved + h;
      const double fp = eval();
      x = saved - h;
      const double fm = eval();
      x = saved;
      numeric.data()[i] = (fp - fm) / (2.0 * h);
    }
    if (numeric.size() > 0) scale = std::max({scale, numeric.cwiseAbs().maxCoeff(), p->grad.cwiseAbs().maxCoeff()});
    numerics.push_back(std::move(numeric));
  }

  GradCheckReport report;
  report.tol = tol;
  const double floor = 1e-3 * scale + 1e-10;
  for (size_t k = 0; k < params.size(); ++k) {
    const Matrix &analytic = params[k]->grad;
    const Matrix &numeric = numerics[k];
    double worst = 0.0;
    for (Index i = 0; i < analytic.size(); ++i) {
      const double a = analytic.data()[i], n = numeric.data()[i];
      const double denom = std::max({std::abs(a), std::abs(n), floor});
      worst = std::max(worst, std::abs(a - n) / denom);
    }
    if (!std::isfinite(worst)) worst = std::numeric_limits<double>::infinity();
    report.entries.push_back({params[k]->name, worst});
  }
  return report;
}

} // namespace dada
