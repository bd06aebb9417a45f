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

#ifndef DKFN_OBJECTIVE_HPP
#define DKFN_OBJECTIVE_HPP

// Sub-sampled objectives l(theta) = (1/n) sum_j log g_j(theta) with
// per-sample gradients and Hessians, and the batch evaluator that turns a
// batch of indices into a (gradient, Hessian, value) observation.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dkfn/errors.hpp"
#include "dkfn/linalg.hpp"
#include "dkfn/random.hpp"

namespace dkfn {

struct SampleDerivatives {
  Vector gradient;
  Matrix hessian;
};

template <class O>
concept SubsampledObjective = requires(const O& o, const Vector& theta, std::size_t j) {
  { o.size() } -> std::convertible_to<std::size_t>;
  { o.dim() } -> std::convertible_to<Index>;
  { o.log_loss(theta, j) } -> std::convertible_to<double>;
  { o.derivatives(theta, j) } -> std::same_as<SampleDerivatives>;
};

// Zero-based sample indices; duplicates allowed.
struct BatchSpec {
  std::vector<std::size_t> indices;

  std::size_t size() const { return indices.size(); }
  friend bool operator==(const BatchSpec&, const BatchSpec&) = default;
};

struct BatchObservation {
  Vector f;           // batch-mean gradient
  SpdMatrix q;        // batch-mean Hessian, ridge-regularized if needed
  double value = 0;   // batch-mean objective
  double ridge = 0;   // ridge added to reach positive definiteness
};

inline std::string format_vector(const Vector& v) {
  std::ostringstream os;
  os.precision(17);
  os << "(";
  for (Index i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v(i);
  os << ")";
  return os.str();
}

namespace detail {

inline void check_batch(const BatchSpec& batch, std::size_t n) {
  if (batch.indices.empty()) throw InputError("batch must contain at least one index");
  for (std::size_t j : batch.indices) {
    if (j >= n) {
      throw InputError("batch index " + std::to_string(j) + " out of range for n=" +
                       std::to_string(n));
    }
  }
}

inline std::vector<std::size_t> sorted_indices(const BatchSpec& batch) {
  std::vector<std::size_t> idx = batch.indices;
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace detail

// Adds eps*I with eps = 1e-8 (1 + trace/d), doubling up to 10 times, until the
// Cholesky factorization succeeds. Returns the matrix and the ridge used.
inline std::pair<SpdMatrix, double> regularize_hessian(const Matrix& raw) {
  SpdMatrix q(raw);
  if (is_positive_definite(q)) return {std::move(q), 0.0};
  const Index d = q.dim();
  double eps = 1e-8 * (1.0 + std::abs(q.trace()) / static_cast<double>(d));
  for (int attempt = 0; attempt <= 10; ++attempt, eps *= 2.0) {
    SpdMatrix shifted(q.matrix() + eps * Matrix::Identity(d, d));
    if (is_positive_definite(shifted)) return {std::move(shifted), eps};
  }
  throw PdFailure("batch Hessian is not positive definite after ridge regularization");
}

// Batch mean of log g_j(theta), summed in ascending index order.
template <SubsampledObjective O>
double batch_value(const O& obj, const Vector& theta, const BatchSpec& batch) {
  detail::check_batch(batch, obj.size());
  double sum = 0.0;
  for (std::size_t j : detail::sorted_indices(batch)) sum += obj.log_loss(theta, j);
  const double value = sum / static_cast<double>(batch.size());
  if (!std::isfinite(value)) {
    throw NumericError("non-finite batch objective at theta=" + format_vector(theta));
  }
  return value;
}

template <SubsampledObjective O>
double full_objective(const O& obj, const Vector& theta) {
  double sum = 0.0;
  for (std::size_t j = 0; j < obj.size(); ++j) sum += obj.log_loss(theta, j);
  return sum / static_cast<double>(obj.size());
}

// Batch-mean gradient and Hessian, unregularized.
template <SubsampledObjective O>
SampleDerivatives batch_derivatives(const O& obj, const Vector& theta, const BatchSpec& batch) {
  detail::check_batch(batch, obj.size());
  const Index d = obj.dim();
  SampleDerivatives sum{Vector::Zero(d), Matrix::Zero(d, d)};
  for (std::size_t j : detail::sorted_indices(batch)) {
    SampleDerivatives s = obj.derivatives(theta, j);
    sum.gradient += s.gradient;
    sum.hessian += s.hessian;
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  sum.gradient *= inv;
  sum.hessian *= inv;
  return sum;
}

template <SubsampledObjective O>
BatchObservation evaluate_batch(const O& obj, const Vector& theta, const BatchSpec& batch) {
  if (theta.size() != obj.dim()) throw InputError("evaluate_batch: theta has wrong dimension");
  if (!theta.allFinite()) throw InputError("evaluate_batch: non-finite theta");
  SampleDerivatives mean = batch_derivatives(obj, theta, batch);
  const double value = batch_value(obj, theta, batch);
  if (!mean.gradient.allFinite() || !mean.hessian.allFinite()) {
    throw NumericError("non-finite batch gradient or Hessian at theta=" + format_vector(theta));
  }
  auto [q, ridge] = regularize_hessian(mean.hessian);
  return {std::move(mean.gradient), std::move(q), value, ridge};
}

// size i.i.d. uniform draws from {0..n-1}.
inline BatchSpec sample_batch(RandomStream& stream, std::size_t n, std::size_t size) {
  if (size == 0) throw InputError("sample_batch: batch size must be at least 1");
  if (n == 0) throw InputError("sample_batch: empty population");
  BatchSpec batch;
  batch.indices.reserve(size);
  for (std::size_t i = 0; i < size; ++i) {
    batch.indices.push_back(static_cast<std::size_t>(stream.uniform_index(n)));
  }
  return batch;
}

inline BatchSpec full_batch(std::size_t n) {
  BatchSpec batch;
  batch.indices.resize(n);
  for (std::size_t j = 0; j < n; ++j) batch.indices[j] = j;
  return batch;
}

// ---------------------------------------------------------------------------
// Least squares: log g_j = (y_j - theta^T x_j)^2 / 2.

struct LeastSquaresData {
  Matrix x;  // n x d, one sample per row
  Vector y;  // n
};

class LeastSquaresObjective {
 public:
  explicit LeastSquaresObjective(LeastSquaresData data) : data_(std::move(data)) {
    if (data_.x.rows() != data_.y.size() || data_.x.rows() == 0 || data_.x.cols() == 0) {
      throw InputError("least squares data: need n >= 1 rows matching n responses");
    }
    if (!data_.x.allFinite() || !data_.y.allFinite()) {
      throw InputError("least squares data: non-finite entries");
    }
  }

  std::size_t size() const { return static_cast<std::size_t>(data_.x.rows()); }
  Index dim() const { return data_.x.cols(); }
  const LeastSquaresData& data() const { return data_; }

  double log_loss(const Vector& theta, std::size_t j) const {
    const double r = data_.y(static_cast<Index>(j)) - data_.x.row(static_cast<Index>(j)).dot(theta);
    return 0.5 * r * r;
  }

  // (x x^T) theta - x y, evaluated as x (x^T theta - y).
  SampleDerivatives derivatives(const Vector& theta, std::size_t j) const {
    const auto row = static_cast<Index>(j);
    const Vector xj = data_.x.row(row).transpose();
    return {xj * (xj.dot(theta) - data_.y(row)), xj * xj.transpose()};
  }

 private:
  LeastSquaresData data_;
};

inline SampleDerivatives least_squares_gradient_hessian(const LeastSquaresObjective& obj,
                                                        const Vector& theta, std::size_t j) {
  if (j >= obj.size()) throw InputError("sample index out of range");
  return obj.derivatives(theta, j);
}

// Reads columns x_1..x_d,y with a mandatory header row.
inline LeastSquaresData load_least_squares_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
  };
  std::string line;
  if (!std::getline(in, line)) throw InputError(path + ": missing header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = split(line);
  if (header.size() < 2) throw InputError(path + ": need at least one covariate and y");
  for (const std::string& h : header) {
    if (!h.empty() && (std::isdigit(static_cast<unsigned char>(h[0])) || h[0] == '-' || h[0] == '.')) {
      throw InputError(path + ": first row looks numeric; a header row is required");
    }
  }
  const std::size_t cols = header.size();
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> cells = split(line);
    if (cells.size() != cols) {
      throw InputError(path + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(cols) + " columns");
    }
    std::vector<double> values;
    for (const std::string& c : cells) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(c, &used));
        if (used != c.size() && c.find_first_not_of(" \t", used) != std::string::npos) {
          throw std::invalid_argument(c);
        }
      } catch (const std::exception&) {
        throw InputError(path + ":" + std::to_string(line_no) + ": bad number '" + c + "'");
      }
    }
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw InputError(path + ": no data rows");
  LeastSquaresData data{Matrix(static_cast<Index>(rows.size()), static_cast<Index>(cols - 1)),
                        Vector(static_cast<Index>(rows.size()))};
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c + 1 < cols; ++c) {
      data.x(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
    }
    data.y(static_cast<Index>(r)) = rows[r][cols - 1];
  }
  return data;
}

// ---------------------------------------------------------------------------
// Exponential family p(x|theta) = h(x) exp(<theta, T(x)> - A(theta)),
// log g_j = A(theta) - log h(x_j) - <theta, T(x_j)>.

struct ExpFamilySpec {
  Index dim = 0;
  std::function<Vector(const Vector& x)> sufficient_statistic;
  std::function<double(const Vector& theta)> log_normalizer;
  std::function<Vector(const Vector& theta)> log_normalizer_gradient;
  std::function<Matrix(const Vector& theta)> log_normalizer_hessian;
  std::function<double(const Vector& x)> log_base_measure;  // optional, log h
  std::function<Vector(const Vector& theta, RandomStream&)> sample;  // optional, draw from p_theta
};

class ExpFamilyObjective {
 public:
  ExpFamilyObjective(ExpFamilySpec spec, std::vector<Vector> samples)
      : spec_(std::move(spec)), samples_(std::move(samples)) {
    if (samples_.empty()) throw InputError("exponential family objective needs samples");
    stats_.reserve(samples_.size());
    log_h_.reserve(samples_.size());
    for (const Vector& x : samples_) {
      Vector t = spec_.sufficient_statistic(x);
      if (t.size() != spec_.dim) throw InputError("sufficient statistic has wrong dimension");
      stats_.push_back(std::move(t));
      log_h_.push_back(spec_.log_base_measure ? spec_.log_base_measure(x) : 0.0);
    }
  }

  std::size_t size() const { return samples_.size(); }
  Index dim() const { return spec_.dim; }
  const ExpFamilySpec& spec() const { return spec_; }

  double log_loss(const Vector& theta, std::size_t j) const {
    return spec_.log_normalizer(theta) - log_h_[j] - theta.dot(stats_[j]);
  }

  // grad A(theta) - T(x_j) and hess A(theta).
  SampleDerivatives derivatives(const Vector& theta, std::size_t j) const {
    Vector g = spec_.log_normalizer_gradient(theta);
    Matrix h = spec_.log_normalizer_hessian(theta);
    if (!g.allFinite() || !h.allFinite()) {
      throw NumericError("log-normalizer derivatives non-finite at theta=" + format_vector(theta));
    }
    return {g - stats_[j], std::move(h)};
  }

 private:
  ExpFamilySpec spec_;
  std::vector<Vector> samples_;
  std::vector<Vector> stats_;
  std::vector<double> log_h_;
};

inline SampleDerivatives expfam_gradient_hessian(const ExpFamilyObjective& obj,
                                                 const Vector& theta, std::size_t j) {
  if (j >= obj.size()) throw InputError("sample index out of range");
  return obj.derivatives(theta, j);
}

namespace detail {
inline double log1p_exp(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
inline double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace detail

namespace families {

// N(theta, I_d): T(x) = x, A = |theta|^2 / 2.
inline ExpFamilySpec gaussian_unit_variance(Index d) {
  ExpFamilySpec s;
  s.dim = d;
  s.sufficient_statistic = [](const Vector& x) { return x; };
  s.log_normalizer = [](const Vector& th) { return 0.5 * th.squaredNorm(); };
  s.log_normalizer_gradient = [](const Vector& th) { return th; };
  s.log_normalizer_hessian = [d](const Vector&) { return Matrix(Matrix::Identity(d, d)); };
  s.log_base_measure = [](const Vector& x) {
    return -0.5 * x.squaredNorm() - 0.5 * static_cast<double>(x.size()) * std::log(2.0 * std::numbers::pi);
  };
  s.sample = [d](const Vector& th, RandomStream& rng) {
    Vector x(d);
    for (Index i = 0; i < d; ++i) x(i) = th(i) + rng.normal();
    return x;
  };
  return s;
}

// Bernoulli with logit natural parameter: A = log(1 + e^theta).
inline ExpFamilySpec bernoulli() {
  ExpFamilySpec s;
  s.dim = 1;
  s.sufficient_statistic = [](const Vector& x) { return x; };
  s.log_normalizer = [](const Vector& th) { return detail::log1p_exp(th(0)); };
  s.log_normalizer_gradient = [](const Vector& th) {
    return Vector::Constant(1, detail::logistic(th(0)));
  };
  s.log_normalizer_hessian = [](const Vector& th) {
    const double p = detail::logistic(th(0));
    return Matrix::Constant(1, 1, p * (1.0 - p));
  };
  s.sample = [](const Vector& th, RandomStream& rng) {
    return Vector::Constant(1, rng.bernoulli(detail::logistic(th(0))) ? 1.0 : 0.0);
  };
  return s;
}

// Point mass with constant statistic c: A(theta) = <theta, c>, zero curvature.
inline ExpFamilySpec constant_statistic(const Vector& c) {
  ExpFamilySpec s;
  s.dim = c.size();
  s.sufficient_statistic = [c](const Vector&) { return c; };
  s.log_normalizer = [c](const Vector& th) { return th.dot(c); };
  s.log_normalizer_gradient = [c](const Vector&) { return c; };
  s.log_normalizer_hessian = [d = c.size()](const Vector&) { return Matrix(Matrix::Zero(d, d)); };
  s.sample = [c](const Vector&, RandomStream&) { return c; };
  return s;
}

}  // namespace families

struct FisherReport {
  Matrix score_variance;     // Monte-Carlo variance of the score at theta*
  Matrix expected_hessian;   // hess A(theta*)
  Matrix standard_error;     // entrywise MC standard error of score_variance
  double discrepancy = 0;    // Frobenius norm of the difference
  double discrepancy_se = 0; // Frobenius norm of standard_error
  std::size_t draws = 0;

  // Every entry of the difference within k standard errors. Entries with
  // zero standard error must match exactly.
  bool within(double k) const {
    const Matrix diff = (score_variance - expected_hessian).cwiseAbs();
    for (Index i = 0; i < diff.rows(); ++i)
      for (Index j = 0; j < diff.cols(); ++j)
        if (diff(i, j) > k * standard_error(i, j) + 1e-15) return false;
    return true;
  }
};

// Compares the sample variance of the score T(psi) - grad A(theta*),
// psi ~ p_theta*, with hess A(theta*). Diagnostic only.
inline FisherReport fisher_identity_check(const ExpFamilySpec& spec, const Vector& theta_star,
                                          std::size_t draws, RandomStream& rng) {
  if (draws < 1000) throw InputError("fisher_identity_check: need at least 1000 draws");
  if (!spec.sample) throw InputError("fisher_identity_check: family has no sampler");
  const Index d = spec.dim;
  const Vector mean_stat = spec.log_normalizer_gradient(theta_star);
  std::vector<Vector> scores;
  scores.reserve(draws);
  Vector score_mean = Vector::Zero(d);
  for (std::size_t r = 0; r < draws; ++r) {
    Vector s = spec.sufficient_statistic(spec.sample(theta_star, rng)) - mean_stat;
    score_mean += s;
    scores.push_back(std::move(s));
  }
  const double m = static_cast<double>(draws);
  score_mean /= m;
  Matrix var = Matrix::Zero(d, d);
  for (const Vector& s : scores) {
    const Vector c = s - score_mean;
    var += c * c.transpose();
  }
  var /= m - 1.0;
  Matrix second = Matrix::Zero(d, d);
  for (const Vector& s : scores) {
    const Vector c = s - score_mean;
    const Matrix dev = c * c.transpose() - var;
    second += dev.cwiseProduct(dev);
  }
  Matrix se = (second / (m - 1.0) / m).cwiseSqrt();

  FisherReport report;
  report.score_variance = symmetrize(var);
  report.expected_hessian = spec.log_normalizer_hessian(theta_star);
  report.standard_error = se;
  report.discrepancy = (report.score_variance - report.expected_hessian).norm();
  report.discrepancy_se = se.norm();
  report.draws = draws;
  return report;
}

// ---------------------------------------------------------------------------
// Canonical GLM with scalar response: eta_j = theta^T x_j,
// log g_j = A(eta_j) - log h(y_j) - eta_j T(y_j).

struct ScalarFamily {
  std::string name;
  std::function<double(double y)> sufficient_statistic;
  std::function<double(double eta)> log_normalizer;
  std::function<double(double eta)> mean;      // A'
  std::function<double(double eta)> variance;  // A''
  std::function<double(double y)> log_base_measure;
  std::function<bool(double eta)> in_domain;
};

namespace families {

// Identity link; log g_j reduces to (y - eta)^2 / 2.
inline ScalarFamily gaussian_glm() {
  return {"gaussian",
          [](double y) { return y; },
          [](double eta) { return 0.5 * eta * eta; },
          [](double eta) { return eta; },
          [](double) { return 1.0; },
          [](double y) { return -0.5 * y * y; },
          [](double) { return true; }};
}

inline ScalarFamily logistic_glm() {
  return {"bernoulli",
          [](double y) { return y; },
          [](double eta) { return detail::log1p_exp(eta); },
          [](double eta) { return detail::logistic(eta); },
          [](double eta) {
            const double p = detail::logistic(eta);
            return p * (1.0 - p);
          },
          [](double) { return 0.0; },
          [](double) { return true; }};
}

inline ScalarFamily poisson_glm() {
  return {"poisson",
          [](double y) { return y; },
          [](double eta) { return std::exp(eta); },
          [](double eta) { return std::exp(eta); },
          [](double eta) { return std::exp(eta); },
          [](double y) { return -std::lgamma(y + 1.0); },
          [](double) { return true; }};
}

// Exponential distribution with rate -eta; natural parameter must be negative.
inline ScalarFamily exponential_glm() {
  return {"exponential",
          [](double y) { return y; },
          [](double eta) { return -std::log(-eta); },
          [](double eta) { return -1.0 / eta; },
          [](double eta) { return 1.0 / (eta * eta); },
          [](double) { return 0.0; },
          [](double eta) { return eta < 0.0; }};
}

}  // namespace families

struct GlmData {
  Matrix x;  // n x d
  Vector y;  // n
};

class GlmObjective {
 public:
  GlmObjective(GlmData data, ScalarFamily family) : data_(std::move(data)), family_(std::move(family)) {
    if (data_.x.rows() != data_.y.size() || data_.x.rows() == 0 || data_.x.cols() == 0) {
      throw InputError("glm data: need n >= 1 rows matching n responses");
    }
    if (!data_.x.allFinite() || !data_.y.allFinite()) throw InputError("glm data: non-finite entries");
  }

  std::size_t size() const { return static_cast<std::size_t>(data_.x.rows()); }
  Index dim() const { return data_.x.cols(); }
  const GlmData& data() const { return data_; }
  const ScalarFamily& family() const { return family_; }

  double log_loss(const Vector& theta, std::size_t j) const {
    const auto row = static_cast<Index>(j);
    const Vector xj = data_.x.row(row).transpose();
    const double eta = linear_predictor(xj, theta, j);
    const double y = data_.y(row);
    return family_.log_normalizer(eta) - family_.log_base_measure(y) -
           eta * family_.sufficient_statistic(y);
  }

  // x_j (A'(eta_j) - T(y_j)) and (x_j x_j^T) A''(eta_j).
  SampleDerivatives derivatives(const Vector& theta, std::size_t j) const {
    const auto row = static_cast<Index>(j);
    const Vector xj = data_.x.row(row).transpose();
    const double eta = linear_predictor(xj, theta, j);
    const double resid = family_.mean(eta) - family_.sufficient_statistic(data_.y(row));
    const double curv = family_.variance(eta);
    if (!std::isfinite(resid) || !std::isfinite(curv)) {
      throw NumericError(family_.name + " GLM: non-finite derivatives at sample " + std::to_string(j));
    }
    return {xj * resid, (xj * xj.transpose()) * curv};
  }

 private:
  double linear_predictor(const Vector& xj, const Vector& theta, std::size_t j) const {
    const double eta = xj.dot(theta);
    if (!family_.in_domain(eta)) {
      throw NumericError(family_.name + " GLM: linear predictor " + std::to_string(eta) +
                         " outside the natural parameter domain at sample " + std::to_string(j));
    }
    return eta;
  }

  GlmData data_;
  ScalarFamily family_;
};

inline SampleDerivatives glm_gradient_hessian(const GlmObjective& obj, const Vector& theta,
                                              std::size_t j) {
  if (j >= obj.size()) throw InputError("sample index out of range");
  return obj.derivatives(theta, j);
}

static_assert(SubsampledObjective<LeastSquaresObjective>);
static_assert(SubsampledObjective<ExpFamilyObjective>);
static_assert(SubsampledObjective<GlmObjective>);

}  // namespace dkfn

#endif  // DKFN_OBJECTIVE_HPP
