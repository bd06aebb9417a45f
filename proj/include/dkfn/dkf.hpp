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

#ifndef DKFN_DKF_HPP
#define DKFN_DKF_HPP

// Discriminative Kalman filter for the latent gradient under the state model
// z_t ~ N(alpha z_{t-1}, beta I) and measurement model z_t | x_t ~ N(f_t, Q_t).
//
//   R_t     = alpha^2 Sigma_{t-1} + beta I
//   Sigma_t = (Q_t^-1 + R_t^-1 - S^-1)^-1,        S = beta / (1 - alpha^2) I
//   mu_t    = Sigma_t (Q_t^-1 f_t + R_t^-1 alpha mu_{t-1})
//
// When Q_t^-1 - S^-1 is not positive definite, Q_t is first replaced by
// (Q_t^-1 + S^-1)^-1 and the same formulas are applied.

#include <cstddef>
#include <string>
#include <vector>

#include "dkfn/errors.hpp"
#include "dkfn/linalg.hpp"
#include "dkfn/objective.hpp"

namespace dkfn {

class FilterConfig {
 public:
  FilterConfig(double alpha, double beta, Index dim) : alpha_(alpha), beta_(beta), dim_(dim) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("filter: alpha must lie in (0, 1)");
    if (!(beta > 0.0) || !std::isfinite(beta)) throw InputError("filter: beta must be positive");
    if (dim < 1) throw InputError("filter: dimension must be positive");
    stationary_variance_ = beta / (1.0 - alpha * alpha);
  }

  double alpha() const { return alpha_; }
  double beta() const { return beta_; }
  Index dim() const { return dim_; }
  // s such that S = s I satisfies S = alpha^2 S + beta I.
  double stationary_variance() const { return stationary_variance_; }

 private:
  double alpha_;
  double beta_;
  Index dim_;
  double stationary_variance_;
};

struct GaussianBelief {
  Vector mean;
  SpdMatrix covariance;
};

inline GaussianBelief init_belief(const BatchObservation& obs) { return {obs.f, obs.q}; }

// Sigma^-1 mu, the quantity whose negative is the filtered step direction.
inline Vector precision_mean(const GaussianBelief& belief) {
  return solve_spd(belief.covariance, belief.mean);
}

struct DkfStep {
  GaussianBelief belief;
  Matrix measurement_precision;  // Q_t^-1 actually used (after any replacement)
  bool fallback_fired = false;
};

inline SpdMatrix predicted_covariance(const FilterConfig& cfg, const SpdMatrix& sigma_prev) {
  const Index d = sigma_prev.dim();
  return SpdMatrix(cfg.alpha() * cfg.alpha() * sigma_prev.matrix() + cfg.beta() * Matrix::Identity(d, d));
}

inline DkfStep dkf_step(const FilterConfig& cfg, const GaussianBelief& prev,
                        const BatchObservation& obs, std::size_t t = 0) {
  const Index d = obs.q.dim();
  if (prev.covariance.dim() != d || prev.mean.size() != d || obs.f.size() != d || cfg.dim() != d) {
    throw InputError("dkf_update: dimension mismatch");
  }
  const auto context = [t](const char* what) {
    return std::string("dkf step ") + std::to_string(t) + ": " + what;
  };
  const Matrix eye = Matrix::Identity(d, d);
  const double s_inv = 1.0 / cfg.stationary_variance();

  const SpdMatrix r_inv = inverse_spd(predicted_covariance(cfg, prev.covariance));
  Matrix q_inv = inverse_spd(obs.q).matrix();

  DkfStep out;
  if (!is_positive_definite(SpdMatrix(q_inv - s_inv * eye))) {
    // Precision of (Q^-1 + S^-1)^-1.
    q_inv = symmetrize(q_inv + s_inv * eye);
    out.fallback_fired = true;
  }
  const SpdMatrix precision(q_inv + r_inv.matrix() - s_inv * eye);
  auto l = cholesky(precision);
  if (!l) throw FilterDivergence(context("posterior precision is not positive definite"));
  Matrix sigma(d, d);
  {
    Vector e = Vector::Zero(d);
    for (Index j = 0; j < d; ++j) {
      e(j) = 1.0;
      sigma.col(j) = cholesky_solve(*l, e);
      e(j) = 0.0;
    }
  }
  SpdMatrix covariance(sigma);
  if (!is_positive_definite(covariance)) {
    throw FilterDivergence(context("posterior covariance is not positive definite"));
  }
  Vector mean = covariance.matrix() * (q_inv * obs.f + cfg.alpha() * (r_inv.matrix() * prev.mean));
  if (!mean.allFinite()) throw FilterDivergence(context("posterior mean is not finite"));
  out.belief = {std::move(mean), std::move(covariance)};
  out.measurement_precision = std::move(q_inv);
  return out;
}

inline GaussianBelief dkf_update(const FilterConfig& cfg, const GaussianBelief& prev,
                                 const BatchObservation& obs) {
  return dkf_step(cfg, prev, obs).belief;
}

struct MomentumMatrix {
  Matrix m;
  double rho = 0;  // spectral norm of m
};

// alpha (alpha^2 Sigma_{t-1} + beta I)^-1 Sigma_{t-1}.
inline MomentumMatrix momentum_matrix(const FilterConfig& cfg, const SpdMatrix& sigma_prev) {
  const SpdMatrix r = predicted_covariance(cfg, sigma_prev);
  const Matrix l = factor_or_throw(r, "momentum_matrix");
  const Index d = sigma_prev.dim();
  Matrix m(d, d);
  for (Index j = 0; j < d; ++j) m.col(j) = cfg.alpha() * cholesky_solve(l, sigma_prev.matrix().col(j));
  const double rho = spectral_norm(m);
  return {std::move(m), rho};
}

struct Prop1Check {
  bool satisfied = false;
  double bound = 0;  // alpha Lambda_d / (alpha^2 Lambda_1 + beta)
};

// Sufficient condition alpha Lambda_d < alpha^2 Lambda_1 + beta for
// rho(M_t) < 1 given lambda(Sigma_t) in [Lambda_1, Lambda_d].
inline Prop1Check check_prop1_bound(const FilterConfig& cfg, double lambda_min, double lambda_max) {
  if (!(lambda_min > 0.0)) throw InputError("check_prop1_bound: lambda_min must be positive");
  if (!(lambda_min <= lambda_max) || !std::isfinite(lambda_max)) {
    throw InputError("check_prop1_bound: need lambda_min <= lambda_max");
  }
  const double a = cfg.alpha();
  const double denom = a * a * lambda_min + cfg.beta();
  return {a * lambda_max < denom, a * lambda_max / denom};
}

// Sigma_t^-1 mu_t as the explicit sum over i of (M_t ... M_{i+1}) Q_i^-1 f_i,
// with the Sigma sequence produced by successive filter updates. Used to check
// the recursive form; not on the optimizer path.
inline Vector unrolled_direction(const std::vector<BatchObservation>& observations,
                                 const FilterConfig& cfg) {
  if (observations.empty()) throw InputError("unrolled_direction: empty observation sequence");
  const std::size_t steps = observations.size();
  std::vector<Vector> newton_terms;  // Q_i^-1 f_i
  std::vector<Matrix> momenta;       // momenta[k] = M_{k+1} for k >= 1
  newton_terms.reserve(steps);
  momenta.reserve(steps);

  GaussianBelief belief = init_belief(observations[0]);
  newton_terms.push_back(solve_spd(observations[0].q, observations[0].f));
  momenta.emplace_back();
  for (std::size_t t = 1; t < steps; ++t) {
    momenta.push_back(momentum_matrix(cfg, belief.covariance).m);
    DkfStep step = dkf_step(cfg, belief, observations[t], t + 1);
    newton_terms.push_back(step.measurement_precision * observations[t].f);
    belief = std::move(step.belief);
  }

  const Index d = observations[0].f.size();
  Vector total = Vector::Zero(d);
  for (std::size_t i = 0; i < steps; ++i) {
    Matrix product = Matrix::Identity(d, d);
    for (std::size_t k = i + 1; k < steps; ++k) product = momenta[k] * product;
    total += product * newton_terms[i];
  }
  return total;
}

}  // namespace dkfn

#endif  // DKFN_DKF_HPP
