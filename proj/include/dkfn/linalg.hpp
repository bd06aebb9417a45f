// Copyright 2026 The dkfnewton Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DKFN_LINALG_HPP
#define DKFN_LINALG_HPP

// Small dense SPD kernel. Every solve and inverse goes through a Cholesky
// factorization with a trace-scaled pivot threshold.

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <string>
#include <utility>

#include "dkfn/errors.hpp"

namespace dkfn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

// (X + X^T) / 2. IEEE addition commutes, so the result is exactly symmetric.
inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

// Square, finite, exactly symmetric matrix. Positive definiteness is not a
// construction invariant; it is checked where needed via cholesky/assert_pd.
class SpdMatrix {
 public:
  SpdMatrix() = default;

  explicit SpdMatrix(const Matrix& m) {
    if (m.rows() != m.cols() || m.rows() == 0) {
      throw InputError("SpdMatrix: expected a non-empty square matrix, got " +
                       std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    }
    if (!m.allFinite()) throw InputError("SpdMatrix: non-finite entries");
    m_ = symmetrize(m);
  }

  static SpdMatrix identity(Index d) { return SpdMatrix(Matrix::Identity(d, d)); }
  static SpdMatrix scaled_identity(Index d, double c) {
    return SpdMatrix(c * Matrix::Identity(d, d));
  }
  static SpdMatrix diagonal(const Vector& diag) {
    return SpdMatrix(Matrix(diag.asDiagonal()));
  }

  Index dim() const { return m_.rows(); }
  const Matrix& matrix() const { return m_; }
  double operator()(Index i, Index j) const { return m_(i, j); }
  double trace() const { return m_.trace(); }

 private:
  Matrix m_;
};

// Pivot threshold 1e-12 * (1 + |trace|/d).
inline double pd_tolerance(const SpdMatrix& m) {
  return 1e-12 * (1.0 + std::abs(m.trace()) / static_cast<double>(m.dim()));
}

// Lower-triangular factor L with L L^T = m, or nullopt when some pivot
// does not exceed pd_tolerance(m).
inline std::optional<Matrix> cholesky(const SpdMatrix& m) {
  const Index d = m.dim();
  const double tol = pd_tolerance(m);
  const Matrix& a = m.matrix();
  Matrix l = Matrix::Zero(d, d);
  for (Index j = 0; j < d; ++j) {
    double pivot = a(j, j);
    for (Index k = 0; k < j; ++k) pivot -= l(j, k) * l(j, k);
    if (!(pivot > tol)) return std::nullopt;
    const double ljj = std::sqrt(pivot);
    l(j, j) = ljj;
    for (Index i = j + 1; i < d; ++i) {
      double s = a(i, j);
      for (Index k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return l;
}

inline bool is_positive_definite(const SpdMatrix& m) { return cholesky(m).has_value(); }

inline void assert_pd(const SpdMatrix& m, const std::string& context) {
  if (!is_positive_definite(m)) throw PdFailure(context + ": matrix is not positive definite");
}

// Solves L L^T x = b given the lower factor.
inline Vector cholesky_solve(const Matrix& l, const Vector& b) {
  const Index d = l.rows();
  Vector y(d);
  for (Index i = 0; i < d; ++i) {
    double s = b(i);
    for (Index k = 0; k < i; ++k) s -= l(i, k) * y(k);
    y(i) = s / l(i, i);
  }
  Vector x(d);
  for (Index i = d - 1; i >= 0; --i) {
    double s = y(i);
    for (Index k = i + 1; k < d; ++k) s -= l(k, i) * x(k);
    x(i) = s / l(i, i);
  }
  return x;
}

inline Matrix factor_or_throw(const SpdMatrix& m, const char* context) {
  auto l = cholesky(m);
  if (!l) throw PdFailure(std::string(context) + ": matrix is not positive definite");
  return std::move(*l);
}

inline Vector solve_spd(const SpdMatrix& m, const Vector& b) {
  if (b.size() != m.dim()) throw InputError("solve_spd: dimension mismatch");
  if (!b.allFinite()) throw InputError("solve_spd: non-finite right-hand side");
  return cholesky_solve(factor_or_throw(m, "solve_spd"), b);
}

inline SpdMatrix inverse_spd(const SpdMatrix& m) {
  const Matrix l = factor_or_throw(m, "inverse_spd");
  const Index d = m.dim();
  Matrix x(d, d);
  Vector e = Vector::Zero(d);
  for (Index j = 0; j < d; ++j) {
    e(j) = 1.0;
    x.col(j) = cholesky_solve(l, e);
    e(j) = 0.0;
  }
  return SpdMatrix(x);
}

struct EigenExtremes {
  double min;
  double max;
};

inline EigenExtremes eig_extremes(const SpdMatrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m.matrix(), Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericError("eig_extremes: eigensolver failed");
  const Vector& ev = es.eigenvalues();  // ascending
  return {ev(0), ev(ev.size() - 1)};
}

// Largest singular value; m may be non-symmetric.
inline double spectral_norm(const Matrix& m) {
  if (!m.allFinite()) throw InputError("spectral_norm: non-finite entries");
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

}  // namespace dkfn

#endif  // DKFN_LINALG_HPP
