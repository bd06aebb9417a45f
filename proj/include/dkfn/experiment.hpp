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

#ifndef DKFN_EXPERIMENT_HPP
#define DKFN_EXPERIMENT_HPP

// Paired-trial comparison of the filtered and unfiltered stochastic Newton
// methods on synthetic linear regression, with angular-error statistics,
// per-step aggregate curves and CSV output.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "dkfn/dkf.hpp"
#include "dkfn/errors.hpp"
#include "dkfn/linalg.hpp"
#include "dkfn/objective.hpp"
#include "dkfn/optimizer.hpp"
#include "dkfn/random.hpp"

namespace dkfn {

struct ExperimentConfig {
  std::size_t n = 100;
  Index d = 2;
  std::size_t batch_size = 5;
  std::size_t steps = 30;
  std::size_t trials = 1000;
  double alpha = 0.9;
  double beta = 0.2;
  Matrix covariate_covariance;
  double noise_mean = 1.0;
  double noise_variance = 1.0;
  std::uint64_t seed = 2022;
  Vector theta_true;
  Vector theta0;
  std::string out = "dkfn";
  unsigned threads = 1;
  ArmijoConfig line_search;
  double rho_threshold = 0.8;
  std::size_t rho_after = 5;  // rho threshold applies to steps t > rho_after

  // Unit variances with 0.1 covariances; theta_true = 1;
  // theta0 = theta_true + 2.6 (0.5, -2.0, 0.5, ...), i.e. (2.3, -4.2) for d = 2.
  // That start distance puts the step-1 angular MSE near 0.041.
  static ExperimentConfig defaults(Index d = 2) {
    ExperimentConfig cfg;
    cfg.d = d;
    cfg.covariate_covariance = Matrix::Constant(d, d, 0.1);
    cfg.covariate_covariance.diagonal().setOnes();
    cfg.theta_true = Vector::Ones(d);
    cfg.theta0 = Vector(d);
    for (Index i = 0; i < d; ++i) cfg.theta0(i) = 1.0 + 2.6 * ((i % 2 == 0) ? 0.5 : -2.0);
    return cfg;
  }

  void validate() const {
    if (d < 1) throw InputError("experiment: d must be positive");
    if (n < 1) throw InputError("experiment: n must be positive");
    if (batch_size < 1) throw InputError("experiment: batch size must be positive");
    if (steps < 1) throw InputError("experiment: steps must be positive");
    if (trials < 1) throw InputError("experiment: trials must be positive");
    if (covariate_covariance.rows() != d || covariate_covariance.cols() != d) {
      throw InputError("experiment: covariate covariance must be d x d");
    }
    if (theta_true.size() != d || theta0.size() != d) {
      throw InputError("experiment: theta_true and theta0 must have dimension d");
    }
    if (!theta_true.allFinite() || !theta0.allFinite()) throw InputError("experiment: non-finite theta");
    if (!(noise_variance >= 0.0) || !std::isfinite(noise_mean)) {
      throw InputError("experiment: noise variance must be non-negative");
    }
    FilterConfig(alpha, beta, d);
  }

  OptimizerConfig optimizer(bool filtered) const {
    OptimizerConfig oc;
    oc.batch_size = batch_size;
    oc.max_steps = steps;
    oc.line_search = line_search;
    if (filtered) oc.filter = FilterConfig(alpha, beta, d);
    return oc;
  }
};

// x_j ~ N(0, covariate_covariance), y_j = theta_true^T x_j + eps_j,
// eps_j ~ N(noise_mean, noise_variance).
inline LeastSquaresData generate_data(const ExperimentConfig& cfg, RandomStream& stream) {
  const SpdMatrix cov(cfg.covariate_covariance);
  const Matrix chol = factor_or_throw(cov, "covariate covariance");
  const double noise_sd = std::sqrt(cfg.noise_variance);
  LeastSquaresData data{Matrix(static_cast<Index>(cfg.n), cfg.d), Vector(static_cast<Index>(cfg.n))};
  Vector z(cfg.d);
  for (Index j = 0; j < static_cast<Index>(cfg.n); ++j) {
    for (Index i = 0; i < cfg.d; ++i) z(i) = stream.normal();
    const Vector x = chol * z;
    data.x.row(j) = x.transpose();
    data.y(j) = cfg.theta_true.dot(x) + cfg.noise_mean + noise_sd * stream.normal();
  }
  return data;
}

// argmin of the full least-squares objective via the normal equations.
inline Vector exact_mle(const LeastSquaresData& data) {
  const Index d = data.x.cols();
  Matrix gram = Matrix::Zero(d, d);
  Vector rhs = Vector::Zero(d);
  for (Index j = 0; j < data.x.rows(); ++j) {
    const Vector xj = data.x.row(j).transpose();
    gram += xj * xj.transpose();
    rhs += xj * data.y(j);
  }
  SpdMatrix g(gram);
  if (!is_positive_definite(g)) throw InputError("exact_mle: Gram matrix is singular");
  return solve_spd(g, rhs);
}

// Angle from the optimal direction theta* - theta to `direction`. Signed and
// counterclockwise-positive in (-pi, pi] for d = 2, unsigned otherwise.
inline double signed_angular_error(const Vector& direction, const Vector& theta,
                                   const Vector& theta_star) {
  const Vector opt = theta_star - theta;
  if (direction.size() != opt.size()) throw InputError("angular error: dimension mismatch");
  const double nd = direction.norm();
  const double no = opt.norm();
  if (!(nd > 0.0) || !(no > 0.0)) throw NumericError("angular error undefined for a zero vector");
  if (opt.size() == 2) {
    const double cross = opt(0) * direction(1) - opt(1) * direction(0);
    const double angle = std::atan2(cross, opt.dot(direction));
    return angle <= -std::numbers::pi ? std::numbers::pi : angle;
  }
  return std::acos(std::clamp(opt.dot(direction) / (nd * no), -1.0, 1.0));
}

struct MethodAngularStats {
  std::vector<double> mse;
  std::vector<double> bias_squared;
  std::vector<double> variance;
};

struct AngularErrorStats {
  MethodAngularStats unfiltered;
  MethodAngularStats filtered;
};

struct MethodCurves {
  std::vector<double> mean_distance, sd_distance;
  std::vector<double> mean_objective, sd_objective;
  std::vector<double> mean_displacement, sd_displacement;
  std::vector<double> mean_rho, max_rho;  // NaN where undefined
};

struct AggregateCurves {
  MethodCurves unfiltered;
  MethodCurves filtered;
};

struct PairedTrial {
  std::uint32_t index = 0;
  std::vector<BatchSpec> batches;
  TrialTrace filtered;
  TrialTrace unfiltered;
  // Angular errors at the filtered iterate: filtered direction and the
  // unfiltered direction -Q_t^-1 f_t recomputed there.
  std::vector<double> angle_filtered;
  std::vector<double> angle_unfiltered;
  std::optional<std::string> error;
  bool input_error = false;
};

struct ExperimentResult {
  LeastSquaresData data;
  Vector theta_star;
  std::vector<PairedTrial> trials;
  std::size_t failed_trials = 0;
  AngularErrorStats stats;
  AggregateCurves curves;
};

template <SubsampledObjective O>
PairedTrial run_paired_trial(const O& obj, const Vector& theta_star, const ExperimentConfig& cfg,
                             std::uint32_t index) {
  PairedTrial trial;
  trial.index = index;
  RandomStream stream(cfg.seed, index, StreamPurpose::kBatches);
  trial.batches = sample_batches(stream, obj.size(), cfg.batch_size, cfg.steps);
  trial.filtered = run_with_batches(obj, cfg.theta0, cfg.optimizer(true), trial.batches);
  trial.unfiltered = run_with_batches(obj, cfg.theta0, cfg.optimizer(false), trial.batches);
  for (const TrialTrace* tr : {&trial.filtered, &trial.unfiltered}) {
    if (tr->failure) {
      trial.error = "step " + std::to_string(tr->failure->t) + ": " + tr->failure->message;
      trial.input_error = tr->failure->input_error;
      return trial;
    }
  }
  try {
    for (const StepRecord& rec : trial.filtered.records) {
      trial.angle_filtered.push_back(signed_angular_error(rec.direction, rec.theta_before, theta_star));
      trial.angle_unfiltered.push_back(
          signed_angular_error(rec.newton_direction, rec.theta_before, theta_star));
    }
  } catch (const NumericError& e) {
    trial.error = e.what();
  }
  return trial;
}

namespace detail {

struct MeanSd {
  double mean = 0;
  double sd = 0;
};

inline MeanSd mean_sd(const std::vector<double>& v) {
  if (v.empty()) return {std::nan(""), std::nan("")};
  double s = 0;
  for (double x : v) s += x;
  const double mean = s / static_cast<double>(v.size());
  double ss = 0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size()))};
}

inline void angular_stats_step(const std::vector<double>& errors, MethodAngularStats& out) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (errors.empty()) {
    out.mse.push_back(nan);
    out.bias_squared.push_back(nan);
    out.variance.push_back(nan);
    return;
  }
  const double m = static_cast<double>(errors.size());
  double sum = 0, sum_sq = 0;
  for (double e : errors) {
    sum += e;
    sum_sq += e * e;
  }
  const double mean = sum / m;
  double var = 0;
  for (double e : errors) var += (e - mean) * (e - mean);
  out.mse.push_back(sum_sq / m);
  out.bias_squared.push_back(mean * mean);
  out.variance.push_back(var / m);
}

template <SubsampledObjective O>
void curves_step(const O& obj, const Vector& theta_star, const std::vector<const TrialTrace*>& traces,
                 std::size_t step, MethodCurves& out) {
  std::vector<double> dist, value, disp, rho;
  for (const TrialTrace* tr : traces) {
    const StepRecord& rec = tr->records[step];
    dist.push_back((rec.theta_after - theta_star).norm());
    value.push_back(full_objective(obj, rec.theta_after));
    disp.push_back((rec.theta_after - rec.theta_before).norm());
    if (rec.rho) rho.push_back(*rec.rho);
  }
  const MeanSd d = mean_sd(dist), v = mean_sd(value), s = mean_sd(disp), r = mean_sd(rho);
  out.mean_distance.push_back(d.mean);
  out.sd_distance.push_back(d.sd);
  out.mean_objective.push_back(v.mean);
  out.sd_objective.push_back(v.sd);
  out.mean_displacement.push_back(s.mean);
  out.sd_displacement.push_back(s.sd);
  out.mean_rho.push_back(r.mean);
  out.max_rho.push_back(rho.empty() ? std::nan("") : *std::max_element(rho.begin(), rho.end()));
}

// Runs body(i) for i in [0, count) on `threads` workers.
template <class F>
void parallel_for(std::size_t count, unsigned threads, F&& body) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (unsigned w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = next++; i < count; i = next++) body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace detail

inline ExperimentResult run_paired_trials(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentResult result;
  {
    RandomStream data_stream(cfg.seed, 0, StreamPurpose::kData);
    result.data = generate_data(cfg, data_stream);
  }
  result.theta_star = exact_mle(result.data);
  const LeastSquaresObjective obj(result.data);

  result.trials.resize(cfg.trials);
  detail::parallel_for(cfg.trials, cfg.threads, [&](std::size_t i) {
    result.trials[i] = run_paired_trial(obj, result.theta_star, cfg, static_cast<std::uint32_t>(i));
  });

  std::vector<const PairedTrial*> good;
  for (const PairedTrial& tr : result.trials) {
    if (tr.error) {
      if (tr.input_error) throw InputError("trial " + std::to_string(tr.index) + ": " + *tr.error);
      ++result.failed_trials;
    } else {
      good.push_back(&tr);
    }
  }
  if (result.failed_trials * 100 > cfg.trials) {
    throw NumericError(std::to_string(result.failed_trials) + " of " + std::to_string(cfg.trials) +
                       " trials failed numerically (limit 1%)");
  }

  std::vector<const TrialTrace*> filt, unfilt;
  for (const PairedTrial* tr : good) {
    filt.push_back(&tr->filtered);
    unfilt.push_back(&tr->unfiltered);
  }
  for (std::size_t t = 0; t < cfg.steps; ++t) {
    std::vector<double> ef, eu;
    ef.reserve(good.size());
    eu.reserve(good.size());
    for (const PairedTrial* tr : good) {
      ef.push_back(tr->angle_filtered[t]);
      eu.push_back(tr->angle_unfiltered[t]);
    }
    detail::angular_stats_step(eu, result.stats.unfiltered);
    detail::angular_stats_step(ef, result.stats.filtered);
    if (good.empty()) continue;
    detail::curves_step(obj, result.theta_star, unfilt, t, result.curves.unfiltered);
    detail::curves_step(obj, result.theta_star, filt, t, result.curves.filtered);
  }
  return result;
}

struct RhoSummary {
  std::vector<double> max_rho;           // per step, NaN where no trace has rho
  std::vector<std::size_t> violations;   // 1-based steps t > after with max_rho >= threshold
};

inline RhoSummary rho_monitor_summary(const std::vector<const TrialTrace*>& traces,
                                      double threshold = 0.8, std::size_t after = 5) {
  RhoSummary summary;
  for (const TrialTrace* tr : traces) {
    if (tr->records.size() > summary.max_rho.size()) {
      summary.max_rho.resize(tr->records.size(), std::nan(""));
    }
    for (std::size_t i = 0; i < tr->records.size(); ++i) {
      const auto& rho = tr->records[i].rho;
      if (!rho) continue;
      double& m = summary.max_rho[i];
      if (std::isnan(m) || *rho > m) m = *rho;
    }
  }
  for (std::size_t i = 0; i < summary.max_rho.size(); ++i) {
    if (i + 1 > after && !std::isnan(summary.max_rho[i]) && summary.max_rho[i] >= threshold) {
      summary.violations.push_back(i + 1);
    }
  }
  return summary;
}

inline RhoSummary rho_monitor_summary(const ExperimentResult& result, double threshold = 0.8,
                                      std::size_t after = 5) {
  std::vector<const TrialTrace*> traces;
  for (const PairedTrial& tr : result.trials)
    if (!tr.error) traces.push_back(&tr.filtered);
  return rho_monitor_summary(traces, threshold, after);
}

// Shortest round-trip decimal; empty for NaN.
inline std::string format_double(double x) {
  if (std::isnan(x)) return {};
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline void emit_csv(const AngularErrorStats& stats, const AggregateCurves& curves,
                     const std::string& path) {
  const std::string table_path = path + ".table1.csv";
  const std::string curves_path = path + ".curves.csv";
  {
    std::ofstream os(table_path, std::ios::binary);
    if (!os) throw IoError("cannot write " + table_path);
    os << "step,mse_unfiltered,mse_filtered,bias2_unfiltered,bias2_filtered,var_unfiltered,var_filtered\n";
    for (std::size_t t = 0; t < stats.filtered.mse.size(); ++t) {
      os << (t + 1) << ',' << format_double(stats.unfiltered.mse[t]) << ','
         << format_double(stats.filtered.mse[t]) << ',' << format_double(stats.unfiltered.bias_squared[t])
         << ',' << format_double(stats.filtered.bias_squared[t]) << ','
         << format_double(stats.unfiltered.variance[t]) << ',' << format_double(stats.filtered.variance[t])
         << '\n';
    }
    if (!os) throw IoError("write failed for " + table_path);
  }
  {
    std::ofstream os(curves_path, std::ios::binary);
    if (!os) throw IoError("cannot write " + curves_path);
    os << "step,method,mean_dist,sd_dist,mean_obj,sd_obj,mean_displacement,sd_displacement,mean_rho,max_rho\n";
    const auto rows = [&os](const MethodCurves& c, const char* method, bool with_rho) {
      for (std::size_t t = 0; t < c.mean_distance.size(); ++t) {
        os << (t + 1) << ',' << method << ',' << format_double(c.mean_distance[t]) << ','
           << format_double(c.sd_distance[t]) << ',' << format_double(c.mean_objective[t]) << ','
           << format_double(c.sd_objective[t]) << ',' << format_double(c.mean_displacement[t]) << ','
           << format_double(c.sd_displacement[t]) << ','
           << (with_rho ? format_double(c.mean_rho[t]) : std::string()) << ','
           << (with_rho ? format_double(c.max_rho[t]) : std::string()) << '\n';
      }
    };
    rows(curves.unfiltered, "unfiltered", false);
    rows(curves.filtered, "filtered", true);
    if (!os) throw IoError("write failed for " + curves_path);
  }
}

}  // namespace dkfn

#endif  // DKFN_EXPERIMENT_HPP
