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

#ifndef DKFN_OPTIMIZER_HPP
#define DKFN_OPTIMIZER_HPP

// Stochastic Newton (direction -Q_t^-1 f_t) and its filtered variant
// (direction -Sigma_t^-1 mu_t), both with Armijo backtracking on the batch
// objective and a fixed step budget.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dkfn/dkf.hpp"
#include "dkfn/errors.hpp"
#include "dkfn/line_search.hpp"
#include "dkfn/linalg.hpp"
#include "dkfn/objective.hpp"
#include "dkfn/random.hpp"

namespace dkfn {

struct OptimizerConfig {
  std::size_t batch_size = 5;
  std::size_t max_steps = 30;
  std::optional<FilterConfig> filter;  // engaged => filtered variant
  ArmijoConfig line_search;

  void validate() const {
    if (batch_size < 1) throw InputError("optimizer: batch_size must be at least 1");
    if (max_steps < 1) throw InputError("optimizer: max_steps must be at least 1");
  }
};

struct StepRecord {
  std::size_t t = 0;  // 1-based
  Vector theta_before;
  Vector theta_after;
  Vector direction;          // -Q_t^-1 f_t or -Sigma_t^-1 mu_t
  Vector newton_direction;   // -Q_t^-1 f_t at theta_before (equals direction when unfiltered)
  Vector gradient;           // f_t
  double step = 0;           // lambda_t
  double batch_value = 0;    // batch objective at theta_before
  std::optional<double> rho; // spectral norm of M_t, filtered steps t >= 2
  bool fallback_fired = false;
  BatchSpec batch;
};

struct StepFailure {
  std::size_t t = 0;
  std::string message;
  bool input_error = false;
};

struct TrialTrace {
  std::vector<StepRecord> records;
  std::uint64_t seed = 0;
  std::uint32_t trial = 0;
  std::optional<StepFailure> failure;

  bool ok() const { return !failure.has_value(); }
};

namespace detail {

template <SubsampledObjective O>
void finish_step(const O& obj, const BatchObservation& obs, const ArmijoConfig& ls,
                 StepRecord& rec) {
  const auto h = [&](const Vector& th) { return batch_value(obj, th, rec.batch); };
  rec.gradient = obs.f;
  rec.batch_value = obs.value;
  rec.step = armijo_backtrack(h, rec.theta_before, rec.direction, obs.f, ls);
  rec.theta_after = rec.theta_before + rec.step * rec.direction;
}

}  // namespace detail

template <SubsampledObjective O>
StepRecord unfiltered_step(const O& obj, const Vector& theta_prev, const BatchSpec& batch,
                           const ArmijoConfig& ls = {}, std::size_t t = 1) {
  StepRecord rec;
  rec.t = t;
  rec.batch = batch;
  rec.theta_before = theta_prev;
  const BatchObservation obs = evaluate_batch(obj, theta_prev, batch);
  rec.direction = -solve_spd(obs.q, obs.f);
  rec.newton_direction = rec.direction;
  detail::finish_step(obj, obs, ls, rec);
  return rec;
}

// Step 1 of the filtered method: the belief is initialized from the first
// observation, so the direction is the unfiltered Newton direction.
template <SubsampledObjective O>
std::pair<StepRecord, GaussianBelief> filtered_first_step(const O& obj, const Vector& theta0,
                                                          const BatchSpec& batch,
                                                          const ArmijoConfig& ls = {}) {
  StepRecord rec;
  rec.t = 1;
  rec.batch = batch;
  rec.theta_before = theta0;
  const BatchObservation obs = evaluate_batch(obj, theta0, batch);
  GaussianBelief belief = init_belief(obs);
  rec.direction = -precision_mean(belief);
  rec.newton_direction = -solve_spd(obs.q, obs.f);
  detail::finish_step(obj, obs, ls, rec);
  return {std::move(rec), std::move(belief)};
}

template <SubsampledObjective O>
std::pair<StepRecord, GaussianBelief> filtered_step(const O& obj, const Vector& theta_prev,
                                                    const BatchSpec& batch,
                                                    const GaussianBelief& belief_prev,
                                                    const FilterConfig& cfg,
                                                    const ArmijoConfig& ls = {},
                                                    std::size_t t = 2) {
  StepRecord rec;
  rec.t = t;
  rec.batch = batch;
  rec.theta_before = theta_prev;
  const BatchObservation obs = evaluate_batch(obj, theta_prev, batch);
  rec.rho = momentum_matrix(cfg, belief_prev.covariance).rho;
  DkfStep upd = dkf_step(cfg, belief_prev, obs, t);
  rec.fallback_fired = upd.fallback_fired;
  rec.direction = -precision_mean(upd.belief);
  rec.newton_direction = -solve_spd(obs.q, obs.f);
  detail::finish_step(obj, obs, ls, rec);
  return {std::move(rec), std::move(upd.belief)};
}

inline std::vector<BatchSpec> sample_batches(RandomStream& stream, std::size_t n,
                                             std::size_t batch_size, std::size_t steps) {
  std::vector<BatchSpec> batches;
  batches.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) batches.push_back(sample_batch(stream, n, batch_size));
  return batches;
}

// Runs one trajectory over a prescribed batch sequence. A failing step stops
// the run; the records so far are kept and the failure is attached.
template <SubsampledObjective O>
TrialTrace run_with_batches(const O& obj, const Vector& theta0, const OptimizerConfig& cfg,
                            const std::vector<BatchSpec>& batches) {
  cfg.validate();
  if (theta0.size() != obj.dim() || !theta0.allFinite()) {
    throw InputError("optimizer: theta0 must be finite with dimension " + std::to_string(obj.dim()));
  }
  TrialTrace trace;
  trace.records.reserve(batches.size());
  Vector theta = theta0;
  std::optional<GaussianBelief> belief;
  for (std::size_t i = 0; i < batches.size(); ++i) {
    const std::size_t t = i + 1;
    try {
      StepRecord rec;
      if (!cfg.filter) {
        rec = unfiltered_step(obj, theta, batches[i], cfg.line_search, t);
      } else if (t == 1) {
        auto [r, b] = filtered_first_step(obj, theta, batches[i], cfg.line_search);
        rec = std::move(r);
        belief = std::move(b);
      } else {
        auto [r, b] = filtered_step(obj, theta, batches[i], *belief, *cfg.filter, cfg.line_search, t);
        rec = std::move(r);
        belief = std::move(b);
      }
      theta = rec.theta_after;
      trace.records.push_back(std::move(rec));
    } catch (const InputError& e) {
      trace.failure = StepFailure{t, e.what(), true};
      break;
    } catch (const NumericError& e) {
      trace.failure = StepFailure{t, e.what(), false};
      break;
    }
  }
  return trace;
}

// Samples one batch per step from the stream and runs max_steps steps.
template <SubsampledObjective O>
TrialTrace run(const O& obj, const Vector& theta0, const OptimizerConfig& cfg, RandomStream& stream) {
  cfg.validate();
  const std::vector<BatchSpec> batches = sample_batches(stream, obj.size(), cfg.batch_size, cfg.max_steps);
  return run_with_batches(obj, theta0, cfg, batches);
}

}  // namespace dkfn

#endif  // DKFN_OPTIMIZER_HPP
