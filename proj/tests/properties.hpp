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

// Randomized property suites shared by the unit tests and the acceptance
// runner. Each suite returns counts and the worst observed deviation.

#ifndef DKFN_TESTS_PROPERTIES_HPP
#define DKFN_TESTS_PROPERTIES_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "dkfn/dkfn.hpp"
#include "oracles.hpp"

namespace dkfn::testing {

struct SuiteOutcome {
  std::size_t instances = 0;
  std::size_t failures = 0;
  double worst = 0;  // largest observed deviation (suite-specific units)
  std::size_t branch_a = 0;
  std::size_t branch_b = 0;

  bool ok() const { return instances > 0 && failures == 0; }
};

inline BatchObservation random_observation(RandomStream& rng, Index d, double q_lo, double q_hi) {
  BatchObservation obs;
  obs.f = random_vector(rng, d);
  obs.q = SpdMatrix(random_spd(rng, d, q_lo, q_hi));
  return obs;
}

inline FilterConfig random_filter(RandomStream& rng, Index d) {
  return FilterConfig(uniform_in(rng, 0.05, 0.95), uniform_in(rng, 0.05, 2.0), d);
}

// Eigenvalues of every Sigma in [l1, ld], alpha ld < alpha^2 l1 + beta:
// each rho(M_k) and every product of consecutive M_k obey the bound.
inline SuiteOutcome prop1_suite(RandomStream& rng, std::size_t instances) {
  SuiteOutcome out;
  out.worst = -std::numeric_limits<double>::infinity();
  for (std::size_t rep = 0; rep < instances; ++rep) {
    const Index d = 1 + static_cast<Index>(rng.uniform_index(5));
    const double alpha = uniform_in(rng, 0.05, 0.99);
    const double l1 = std::exp(uniform_in(rng, -3.0, 2.0));
    const double ld = l1 * std::exp(uniform_in(rng, 0.0, 3.0));
    const double floor = std::max(0.0, alpha * ld - alpha * alpha * l1);
    const double beta = floor + std::exp(uniform_in(rng, -4.0, 1.0)) * (floor + l1);
    const FilterConfig cfg(alpha, beta, d);
    const Prop1Check check = check_prop1_bound(cfg, l1, ld);
    ++out.instances;
    if (!check.satisfied) {
      ++out.failures;
      continue;
    }
    const std::size_t len = 2 + rng.uniform_index(15);
    std::vector<Matrix> m;
    for (std::size_t k = 0; k < len; ++k) {
      Vector ev(d);
      for (Index i = 0; i < d; ++i) ev(i) = uniform_in(rng, l1, ld);
      if (rng.bernoulli(0.3)) ev(0) = l1;
      if (rng.bernoulli(0.3)) ev(d - 1) = ld;
      const MomentumMatrix mk = momentum_matrix(cfg, SpdMatrix(spd_with_eigenvalues(rng, ev)));
      out.worst = std::max(out.worst, mk.rho - check.bound);
      if (mk.rho > check.bound + 1e-9) ++out.failures;
      m.push_back(mk.m);
    }
    for (std::size_t i = 0; i < len; ++i) {
      Matrix product = Matrix::Identity(d, d);
      for (std::size_t k = i; k < len; ++k) {
        product = m[k] * product;
        const double limit = std::pow(check.bound, static_cast<double>(k - i + 1));
        const double rho = spectral_norm(product);
        out.worst = std::max(out.worst, rho - limit);
        if (rho > limit + 1e-9) ++out.failures;
      }
    }
  }
  return out;
}

// Unrolled sum against the recursive Sigma_t^-1 mu_t; worst is the largest
// relative error.
inline SuiteOutcome recursion_suite(RandomStream& rng, std::size_t sequences) {
  SuiteOutcome out;
  for (std::size_t rep = 0; rep < sequences; ++rep) {
    const Index d = 1 + static_cast<Index>(rng.uniform_index(5));
    const std::size_t len = 1 + rng.uniform_index(20);
    const FilterConfig cfg = random_filter(rng, d);
    std::vector<BatchObservation> obs;
    for (std::size_t t = 0; t < len; ++t) obs.push_back(random_observation(rng, d, 0.05, 5.0));
    GaussianBelief belief = init_belief(obs[0]);
    for (std::size_t t = 1; t < len; ++t) {
      const DkfStep s = dkf_step(cfg, belief, obs[t], t + 1);
      (s.fallback_fired ? out.branch_b : out.branch_a)++;
      belief = s.belief;
    }
    const Vector recursive = precision_mean(belief);
    const Vector unrolled = unrolled_direction(obs, cfg);
    const double err = (unrolled - recursive).norm() / std::max(recursive.norm(), 1e-300);
    out.worst = std::max(out.worst, err);
    ++out.instances;
    if (!(err <= 1e-8)) ++out.failures;
  }
  return out;
}

// Posterior from explicit density arithmetic:
// N(z; f, Q') N(z; alpha mu_prev, R) / N(z; 0, S), renormalized, where Q' is
// Q or (Q^-1 + S^-1)^-1 when Q^-1 - S^-1 is indefinite.
inline GaussianFit product_oracle(const FilterConfig& cfg, const GaussianBelief& prev,
                                  const BatchObservation& obs, bool* fallback = nullptr) {
  const Index d = obs.f.size();
  const Mat eye = Mat::Identity(d, d);
  const double s = cfg.stationary_variance();
  const Mat r = cfg.alpha() * cfg.alpha() * prev.covariance.matrix() + cfg.beta() * eye;
  Mat q = obs.q.matrix();
  Eigen::SelfAdjointEigenSolver<Mat> es(Mat(q.inverse() - eye / s));
  const bool replace = es.eigenvalues().minCoeff() <= 0.0;
  if (replace) q = (q.inverse() + eye / s).inverse();
  if (fallback) *fallback = replace;
  const Vec prior_mean = cfg.alpha() * prev.mean;
  const Mat s_mat = s * eye;
  return fit_gaussian_from_log_density(
      [&](const Vec& z) {
        return log_gaussian(z, obs.f, q) + log_gaussian(z, prior_mean, r) -
               log_gaussian(z, Vec::Zero(d), s_mat);
      },
      d);
}

// Half the instances draw Q below S (PD branch), half draw at least one
// eigenvalue of Q above S (fallback). worst is the largest relative error in
// either moment.
inline SuiteOutcome dkf_oracle_suite(RandomStream& rng, std::size_t instances) {
  SuiteOutcome out;
  for (std::size_t rep = 0; rep < instances; ++rep) {
    const Index d = 1 + static_cast<Index>(rng.uniform_index(3));
    const FilterConfig cfg = random_filter(rng, d);
    const double s = cfg.stationary_variance();
    GaussianBelief prev{random_vector(rng, d), SpdMatrix(random_spd(rng, d, 0.1 * s, 2.0 * s))};
    BatchObservation obs;
    obs.f = random_vector(rng, d);
    Vector ev(d);
    if (rep % 2 == 0) {
      for (Index i = 0; i < d; ++i) ev(i) = s * uniform_in(rng, 0.05, 0.95);
    } else {
      for (Index i = 0; i < d; ++i) ev(i) = s * uniform_in(rng, 0.05, 3.0);
      ev(static_cast<Index>(rng.uniform_index(static_cast<std::size_t>(d)))) = s * uniform_in(rng, 1.05, 3.0);
    }
    obs.q = SpdMatrix(spd_with_eigenvalues(rng, ev));
    bool oracle_fallback = false;
    const GaussianFit want = product_oracle(cfg, prev, obs, &oracle_fallback);
    const DkfStep got = dkf_step(cfg, prev, obs);
    (got.fallback_fired ? out.branch_b : out.branch_a)++;
    const double err = std::max(relative_error(got.belief.covariance.matrix(), want.cov),
                                relative_error(got.belief.mean, want.mean));
    out.worst = std::max(out.worst, err);
    ++out.instances;
    if (!(err <= 1e-9) || got.fallback_fired != oracle_fallback) ++out.failures;
  }
  return out;
}

// Sigma_prev = S and Q below S: the update must return Q. worst is the
// largest absolute entry deviation.
inline SuiteOutcome stationarity_suite(RandomStream& rng, std::size_t instances) {
  SuiteOutcome out;
  for (std::size_t rep = 0; rep < instances; ++rep) {
    const Index d = 1 + static_cast<Index>(rng.uniform_index(5));
    const FilterConfig cfg = random_filter(rng, d);
    const double s = cfg.stationary_variance();
    GaussianBelief prev{random_vector(rng, d), SpdMatrix::scaled_identity(d, s)};
    BatchObservation obs;
    obs.f = random_vector(rng, d);
    if (rep % 2 == 0) {
      obs.q = SpdMatrix::scaled_identity(d, s * uniform_in(rng, 0.05, 0.95));
    } else {
      Vector ev(d);
      for (Index i = 0; i < d; ++i) ev(i) = s * uniform_in(rng, 0.05, 0.95);
      obs.q = SpdMatrix(spd_with_eigenvalues(rng, ev));
    }
    const DkfStep got = dkf_step(cfg, prev, obs);
    const double err = (got.belief.covariance.matrix() - obs.q.matrix()).cwiseAbs().maxCoeff();
    out.worst = std::max(out.worst, err);
    ++out.instances;
    if (got.fallback_fired || !(err <= 1e-12)) ++out.failures;
  }
  return out;
}

// Filtered step 1 against the plain Newton step on random least-squares
// problems; any bit difference counts as a failure.
inline SuiteOutcome step1_identity_suite(RandomStream& rng, std::size_t instances) {
  SuiteOutcome out;
  for (std::size_t rep = 0; rep < instances; ++rep) {
    const Index d = 1 + static_cast<Index>(rng.uniform_index(4));
    const Index n = 10 + static_cast<Index>(rng.uniform_index(40));
    LeastSquaresObjective obj({random_matrix(rng, n, d), random_vector(rng, n)});
    const BatchSpec batch = sample_batch(rng, static_cast<std::size_t>(n), 1 + rng.uniform_index(8));
    const Vector theta = random_vector(rng, d, 3.0);
    const StepRecord a = unfiltered_step(obj, theta, batch);
    const auto [b, belief] = filtered_first_step(obj, theta, batch);
    ++out.instances;
    if (a.direction != b.direction || a.theta_after != b.theta_after || a.step != b.step) ++out.failures;
  }
  return out;
}

struct DerivativeOutcome {
  std::string family;
  std::size_t points = 0;
  double worst_gradient = 0;  // relative
  double worst_hessian = 0;   // relative

  bool ok() const { return points > 0 && worst_gradient <= 1e-5 && worst_hessian <= 1e-4; }
};

template <SubsampledObjective O>
DerivativeOutcome derivative_check(const std::string& family, const O& obj, RandomStream& rng,
                                   std::size_t points, double theta_scale) {
  DerivativeOutcome out{family};
  const Index d = obj.dim();
  for (std::size_t rep = 0; rep < points; ++rep) {
    const std::size_t j = rng.uniform_index(obj.size());
    const Vector theta = random_vector(rng, d, theta_scale);
    const SampleDerivatives s = obj.derivatives(theta, j);
    const Vector g_fd = fd_gradient([&](const Vec& t) { return obj.log_loss(t, j); }, theta);
    const Matrix h_fd = fd_jacobian([&](const Vec& t) { return Vec(obj.derivatives(t, j).gradient); }, theta);
    out.worst_gradient = std::max(out.worst_gradient, relative_error(s.gradient, g_fd));
    out.worst_hessian = std::max(out.worst_hessian, relative_error(s.hessian, h_fd));
    ++out.points;
  }
  return out;
}

// Least squares, logistic GLM and the unit-variance Gaussian family.
inline std::vector<DerivativeOutcome> derivative_suite(RandomStream& rng, std::size_t points) {
  std::vector<DerivativeOutcome> out;
  const Index d = 3, n = 40;
  {
    LeastSquaresObjective obj({random_matrix(rng, n, d), random_vector(rng, n)});
    out.push_back(derivative_check("least squares", obj, rng, points, 1.0));
  }
  {
    GlmData data{random_matrix(rng, n, d), Vector(n)};
    for (Index j = 0; j < n; ++j) data.y(j) = rng.bernoulli(0.4) ? 1.0 : 0.0;
    GlmObjective obj(std::move(data), families::logistic_glm());
    out.push_back(derivative_check("logistic glm", obj, rng, points, 1.0));
  }
  {
    std::vector<Vector> xs;
    for (Index j = 0; j < n; ++j) xs.push_back(random_vector(rng, d));
    ExpFamilyObjective obj(families::gaussian_unit_variance(d), std::move(xs));
    out.push_back(derivative_check("gaussian exponential family", obj, rng, points, 1.0));
  }
  return out;
}

struct VarianceOutcome {
  std::string family;
  double hessian = 0;   // hess A(theta)
  double variance = 0;  // Monte-Carlo Var[T(Y)]
  double standard_error = 0;

  bool ok() const { return std::abs(hessian - variance) <= 3.0 * standard_error; }
};

// Var[T(Y)] by direct simulation from p_theta, drawn here rather than with the
// family's own sampler.
inline VarianceOutcome gaussian_variance_check(RandomStream& rng, double theta, std::size_t m) {
  std::vector<double> ys(m);
  double sum = 0;
  for (double& y : ys) {
    y = theta + rng.normal();
    sum += y;
  }
  const double mean = sum / static_cast<double>(m);
  double s2 = 0;
  for (double y : ys) s2 += (y - mean) * (y - mean);
  const double var = s2 / static_cast<double>(m - 1);
  double s4 = 0;
  for (double y : ys) s4 += std::pow((y - mean) * (y - mean) - var, 2);
  VarianceOutcome out{"gaussian"};
  out.variance = var;
  out.standard_error = std::sqrt(s4 / static_cast<double>(m - 1) / static_cast<double>(m));
  out.hessian = families::gaussian_unit_variance(1).log_normalizer_hessian(Vector::Constant(1, theta))(0, 0);
  return out;
}

inline VarianceOutcome bernoulli_variance_check(RandomStream& rng, double theta, std::size_t m) {
  const double p = 1.0 / (1.0 + std::exp(-theta));
  double ones = 0;
  for (std::size_t r = 0; r < m; ++r) ones += rng.bernoulli(p) ? 1.0 : 0.0;
  const double md = static_cast<double>(m);
  const double phat = ones / md;
  VarianceOutcome out{"bernoulli"};
  out.variance = phat * (1.0 - phat) * md / (md - 1.0);
  // Var[(Y - p)^2] = p q (1 - 4 p q) for a Bernoulli(p).
  out.standard_error = std::sqrt(out.variance * (1.0 - 4.0 * out.variance) / md);
  out.hessian = families::bernoulli().log_normalizer_hessian(Vector::Constant(1, theta))(0, 0);
  return out;
}

}  // namespace dkfn::testing

#endif  // DKFN_TESTS_PROPERTIES_HPP
