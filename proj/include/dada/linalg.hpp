#pragma once

#include "dada/types.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dada {

template <typename Scalar>
struct SymmetricEigen {
  VectorX<Scalar> values;   // descending
  MatrixX<Scalar> vectors;  // column j pairs with values(j)
  int sweeps = 0;
};

// Cyclic Jacobi eigendecomposition of a small dense symmetric matrix.
// Throws NumericError if the off-diagonal mass has not vanished after max_sweeps.
template <typename Scalar, typename Derived>
SymmetricEigen<Scalar> jacobi_eigen(const Eigen::MatrixBase<Derived> &input, int max_sweeps = 100) {
  if (input.rows() != input.cols())
    throw DimensionError("jacobi_eigen: matrix must be square, got " + shape_str(input));
  const Index n = input.rows();
  MatrixX<Scalar> a = input.template cast<Scalar>();
  MatrixX<Scalar> v = MatrixX<Scalar>::Identity(n, n);

  const Scalar eps = std::numeric_limits<Scalar>::epsilon();
  const Scalar scale = std::max(a.cwiseAbs().maxCoeff(), Scalar(std::numeric_limits<Scalar>::min()));

  int sweep = 0;
  for (; sweep < max_sweeps; ++sweep) {
    Scalar off = 0;
    for (Index p = 0; p < n; ++p)
      for (Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (std::sqrt(off) <= eps * scale) break;

    for (Index p = 0; p < n; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        const Scalar apq = a(p, q);
        if (apq == Scalar(0)) continue;
        const Scalar theta = (a(q, q) - a(p, p)) / (Scalar(2) * apq);
        const Scalar t = (theta >= 0 ? Scalar(1) : Scalar(-1)) /
                         (std::abs(theta) + std::sqrt(theta * theta + Scalar(1)));
        const Scalar c = Scalar(1) / std::sqrt(t * t + Scalar(1));
        const Scalar s = t * c;
        for (Index k = 0; k < n; ++k) {
          const Scalar akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Index k = 0; k < n; ++k) {
          const Scalar apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Index k = 0; k < n; ++k) {
          const Scalar vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  if (sweep == max_sweeps) {
    Scalar off = 0;
    for (Index p = 0; p < n; ++p)
      for (Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (std::sqrt(off) > std::sqrt(eps) * scale)
      throw NumericError("jacobi_eigen: no convergence after " + std::to_string(max_sweeps) + " sweeps");
  }

  std::vector<Index> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index i, Index j) { return a(i, i) > a(j, j); });

  SymmetricEigen<Scalar> out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Index j = 0; j < n; ++j) {
    out.values(j) = a(order[static_cast<size_t>(j)], order[static_cast<size_t>(j)]);
    out.vectors.col(j) = v.col(order[static_cast<size_t>(j)]);
  }
  out.sweeps = sweep;
  return out;
}

template <typename Scalar>
struct ThinSvd {
  VectorX<Scalar> singular_values;  // descending, length min(rows, cols)
  MatrixX<Scalar> u;                // rows x r, columns with sigma below cutoff are zero
  MatrixX<Scalar> v;                // cols x r
};

// Thin SVD through the Gram matrix of the narrow side. Columns of u whose singular value
// falls below `cutoff` are left zero; they do not enter u * v^T.
template <typename Scalar, typename Derived>
ThinSvd<Scalar> gram_svd(const Eigen::MatrixBase<Derived> &input, Scalar cutoff = Scalar(1e-10)) {
  const bool wide = input.cols() > input.rows();
  MatrixX<Scalar> a = wide ? MatrixX<Scalar>(input.transpose().template cast<Scalar>())
                           : MatrixX<Scalar>(input.template cast<Scalar>());
  const MatrixX<Scalar> gram = a.transpose() * a;
  const auto eig = jacobi_eigen<Scalar>(gram);
  const Index r = a.cols();

  ThinSvd<Scalar> svd;
  svd.singular_values = eig.values.cwiseMax(Scalar(0)).cwiseSqrt();
  MatrixX<Scalar> right = eig.vectors;
  MatrixX<Scalar> left = MatrixX<Scalar>::Zero(a.rows(), r);
  for (Index j = 0; j < r; ++j) {
    const Scalar sigma = svd.singular_values(j);
    if (sigma >= cutoff) left.col(j) = a * right.col(j) / sigma;
  }
  if (wide) {
    svd.u = std::move(right);
    svd.v = std::move(left);
  } else {
    svd.u = std::move(left);
    svd.v = std::move(right);
  }
  return svd;
}

} // namespace dada
