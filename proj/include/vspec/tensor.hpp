// Copyright 2026 The vocab-spec Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense substrate shared by every module: row-major matrices, column vectors,
// the reference-order matvec and a numerically stable softmax.

#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vspec/errors.hpp"

namespace vspec {

using Index = Eigen::Index;
using TokenId = std::int32_t;

template <typename Scalar>
using DenseMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using DenseVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = DenseMatrix<float>;
using Vector = DenseVector<float>;

/// Probability distribution, optionally over an ordered subset of the vocabulary.
/// When `domain` is set, probs[j] is the probability of token domain[j].
struct ProbDist {
  Vector probs;
  std::optional<std::vector<TokenId>> domain;

  Index size() const { return probs.size(); }
  /// Token id of entry j.
  TokenId token(Index j) const {
    return domain ? (*domain)[static_cast<std::size_t>(j)] : static_cast<TokenId>(j);
  }
};

/// out[i] = sum_j m(i,j) * v(j), accumulated left to right. This order is part of the
/// contract: oracles in the tests reproduce it bit-for-bit. Four rows are interleaved with
/// independent accumulators, which leaves each row's summation order unchanged.
template <typename Scalar>
DenseVector<Scalar> matvec(const DenseMatrix<Scalar>& m, const DenseVector<Scalar>& v) {
  VSPEC_REQUIRE(m.cols() == v.size(), "matrix has " + std::to_string(m.cols()) +
                                          " cols, vector has " + std::to_string(v.size()));
  const Index rows = m.rows();
  const Index cols = m.cols();
  DenseVector<Scalar> out(rows);
  const Scalar* vp = v.data();
  Index i = 0;
  for (; i + 4 <= rows; i += 4) {
    const Scalar* r0 = m.data() + i * cols;
    const Scalar* r1 = r0 + cols;
    const Scalar* r2 = r1 + cols;
    const Scalar* r3 = r2 + cols;
    Scalar a0 = 0, a1 = 0, a2 = 0, a3 = 0;
    for (Index j = 0; j < cols; ++j) {
      const Scalar x = vp[j];
      a0 += r0[j] * x;
      a1 += r1[j] * x;
      a2 += r2[j] * x;
      a3 += r3[j] * x;
    }
    out[i] = a0;
    out[i + 1] = a1;
    out[i + 2] = a2;
    out[i + 3] = a3;
  }
  for (; i < rows; ++i) {
    const Scalar* row = m.data() + i * cols;
    Scalar acc = 0;
    for (Index j = 0; j < cols; ++j) acc += row[j] * vp[j];
    out[i] = acc;
  }
  return out;
}

/// Stable softmax; exponentials are summed in double.
template <typename Scalar>
DenseVector<Scalar> softmax_values(const DenseVector<Scalar>& z) {
  VSPEC_REQUIRE(z.size() > 0, "empty logits");
  const Scalar zmax = z.maxCoeff();
  VSPEC_REQUIRE(std::isfinite(static_cast<double>(zmax)), "non-finite logits");
  Eigen::VectorXd e(z.size());
  double sum = 0.0;
  for (Index i = 0; i < z.size(); ++i) {
    e[i] = std::exp(static_cast<double>(z[i]) - static_cast<double>(zmax));
    sum += e[i];
  }
  return (e / sum).template cast<Scalar>();
}

/// softmax over full-vocabulary logits.
ProbDist softmax(const Vector& z);

/// softmax over logits aligned with an ordered candidate list.
ProbDist softmax(const Vector& z, std::vector<TokenId> domain);

/// Index of the largest entry; ties resolve to the smallest index.
template <typename Derived>
Index argmax(const Eigen::MatrixBase<Derived>& v) {
  Index best = 0;
  for (Index i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

/// Cross entropy  -sum_i p_i log q_i  with q = softmax(logits), computed stably in double.
template <typename Scalar>
double cross_entropy_with_logits(const DenseVector<Scalar>& p, const DenseVector<Scalar>& logits) {
  VSPEC_REQUIRE(p.size() == logits.size(), "length mismatch");
  const double zmax = static_cast<double>(logits.maxCoeff());
  double sum = 0.0;
  for (Index i = 0; i < logits.size(); ++i) sum += std::exp(static_cast<double>(logits[i]) - zmax);
  const double log_z = zmax + std::log(sum);
  double ce = 0.0;
  for (Index i = 0; i < p.size(); ++i)
    if (p[i] != 0) ce -= static_cast<double>(p[i]) * (static_cast<double>(logits[i]) - log_z);
  return ce;
}

bool all_finite(const Vector& v);
bool all_finite(const Matrix& m);

}  // namespace vspec
