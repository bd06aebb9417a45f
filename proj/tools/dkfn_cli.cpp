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

// Command-line front end: run-paired, check-prop1, trace.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dkfn/dkfn.hpp"

namespace {

constexpr int kExitInput = 1;
constexpr int kExitNumeric = 2;

struct ExperimentFlags {
  std::size_t n = 100;
  int d = 2;
  std::size_t batch = 5;
  std::size_t steps = 30;
  std::size_t trials = 1000;
  double alpha = 0.9;
  double beta = 0.2;
  std::uint64_t seed = 2022;
  std::vector<double> theta0;
  std::vector<double> theta_true;
  std::string out = "dkfn";
  unsigned threads = 1;

  void attach(CLI::App* cmd, bool with_output) {
    cmd->add_option("--n", n, "number of samples")->capture_default_str();
    cmd->add_option("--d", d, "parameter dimension")->capture_default_str();
    cmd->add_option("--batch", batch, "batch size")->capture_default_str();
    cmd->add_option("--steps", steps, "optimization steps per trial")->capture_default_str();
    cmd->add_option("--trials", trials, "number of paired trials")->capture_default_str();
    cmd->add_option("--alpha", alpha, "state-model correlation in (0,1)")->capture_default_str();
    cmd->add_option("--beta", beta, "state-model noise variance > 0")->capture_default_str();
    cmd->add_option("--seed", seed, "master seed")->capture_default_str();
    cmd->add_option("--theta0", theta0, "initial parameter, comma separated")->delimiter(',');
    cmd->add_option("--theta-true", theta_true, "data-generating parameter, comma separated")
        ->delimiter(',');
    cmd->add_option("--threads", threads, "worker threads")->capture_default_str();
    if (with_output) cmd->add_option("--out", out, "output prefix for CSV files")->capture_default_str();
  }

  dkfn::ExperimentConfig config() const {
    if (d < 1) throw dkfn::InputError("--d must be positive");
    dkfn::ExperimentConfig cfg = dkfn::ExperimentConfig::defaults(d);
    cfg.n = n;
    cfg.batch_size = batch;
    cfg.steps = steps;
    cfg.trials = trials;
    cfg.alpha = alpha;
    cfg.beta = beta;
    cfg.seed = seed;
    cfg.out = out;
    cfg.threads = threads == 0 ? 1 : threads;
    const auto to_vector = [d = d](const std::vector<double>& v, const char* flag) {
      if (static_cast<int>(v.size()) != d) {
        throw dkfn::InputError(std::string(flag) + " needs " + std::to_string(d) + " values");
      }
      return dkfn::Vector(Eigen::Map<const dkfn::Vector>(v.data(), d));
    };
    if (!theta0.empty()) cfg.theta0 = to_vector(theta0, "--theta0");
    if (!theta_true.empty()) cfg.theta_true = to_vector(theta_true, "--theta-true");
    cfg.validate();
    return cfg;
  }
};

std::string fmt(double x) {
  const std::string s = dkfn::format_double(x);
  return s.empty() ? "-" : s;
}

int run_paired(const ExperimentFlags& flags) {
  const dkfn::ExperimentConfig cfg = flags.config();
  const dkfn::ExperimentResult res = dkfn::run_paired_trials(cfg);
  dkfn::emit_csv(res.stats, res.curves, cfg.out);
  std::cout << "theta_star " << dkfn::format_vector(res.theta_star) << "\n";
  std::cout << "trials " << cfg.trials << " failed " << res.failed_trials << "\n";
  std::cout << "step mse_unfiltered mse_filtered\n";
  for (std::size_t t = 0; t < std::min<std::size_t>(cfg.steps, 5); ++t) {
    std::cout << (t + 1) << ' ' << fmt(res.stats.unfiltered.mse[t]) << ' '
              << fmt(res.stats.filtered.mse[t]) << "\n";
  }
  const dkfn::RhoSummary rho = dkfn::rho_monitor_summary(res, cfg.rho_threshold, cfg.rho_after);
  std::cout << "rho violations (t > " << cfg.rho_after << ", threshold " << cfg.rho_threshold
            << "): " << rho.violations.size() << "\n";
  std::cout << "wrote " << cfg.out << ".table1.csv " << cfg.out << ".curves.csv\n";
  return 0;
}

int check_prop1(double alpha, double beta, double lambda_min, double lambda_max) {
  const dkfn::FilterConfig cfg(alpha, beta, 1);
  const dkfn::Prop1Check c = dkfn::check_prop1_bound(cfg, lambda_min, lambda_max);
  std::cout << "bound " << fmt(c.bound) << "\n";
  std::cout << "satisfied " << (c.satisfied ? "true" : "false") << "\n";
  return 0;
}

int trace(const ExperimentFlags& flags, std::uint32_t trial_index) {
  const dkfn::ExperimentConfig cfg = flags.config();
  dkfn::RandomStream data_stream(cfg.seed, 0, dkfn::StreamPurpose::kData);
  const dkfn::LeastSquaresData data = dkfn::generate_data(cfg, data_stream);
  const dkfn::Vector theta_star = dkfn::exact_mle(data);
  const dkfn::LeastSquaresObjective obj(data);
  const dkfn::PairedTrial tr = dkfn::run_paired_trial(obj, theta_star, cfg, trial_index);
  std::cout << "theta_star " << dkfn::format_vector(theta_star) << "\n";
  std::cout << "method t batch theta_before direction step theta_after dist rho fallback angle\n";
  const auto print = [&](const dkfn::TrialTrace& trace, const char* method, bool angles) {
    for (std::size_t i = 0; i < trace.records.size(); ++i) {
      const dkfn::StepRecord& r = trace.records[i];
      std::cout << method << ' ' << r.t << " [";
      for (std::size_t k = 0; k < r.batch.indices.size(); ++k) std::cout << (k ? " " : "") << r.batch.indices[k];
      std::cout << "] " << dkfn::format_vector(r.theta_before) << ' ' << dkfn::format_vector(r.direction)
                << ' ' << fmt(r.step) << ' ' << dkfn::format_vector(r.theta_after) << ' '
                << fmt((r.theta_after - theta_star).norm()) << ' ' << (r.rho ? fmt(*r.rho) : "-") << ' '
                << (r.fallback_fired ? 1 : 0) << ' '
                << (angles && i < tr.angle_filtered.size() ? fmt(tr.angle_filtered[i]) : "-") << "\n";
    }
  };
  print(tr.filtered, "filtered", true);
  print(tr.unfiltered, "unfiltered", false);
  if (tr.error) {
    std::cerr << "trial failed: " << *tr.error << "\n";
    return tr.input_error ? kExitInput : kExitNumeric;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Filtered stochastic Newton experiments"};
  app.require_subcommand(1);

  ExperimentFlags paired_flags;
  CLI::App* paired = app.add_subcommand("run-paired", "paired filtered/unfiltered trials, CSV output");
  paired_flags.attach(paired, true);

  double alpha = 0.9, beta = 0.2, lambda_min = 1.0, lambda_max = 1.0;
  CLI::App* prop1 = app.add_subcommand("check-prop1", "evaluate the momentum decay condition");
  prop1->add_option("--alpha", alpha)->capture_default_str();
  prop1->add_option("--beta", beta)->capture_default_str();
  prop1->add_option("--lambda-min", lambda_min)->required();
  prop1->add_option("--lambda-max", lambda_max)->required();

  ExperimentFlags trace_flags;
  std::uint32_t trial_index = 0;
  CLI::App* tr = app.add_subcommand("trace", "verbose single-trial trace");
  trace_flags.attach(tr, false);
  tr->add_option("--trial", trial_index, "trial index")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  try {
    if (*paired) return run_paired(paired_flags);
    if (*prop1) return check_prop1(alpha, beta, lambda_min, lambda_max);
    if (*tr) return trace(trace_flags, trial_index);
  } catch (const dkfn::InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const dkfn::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitInput;
  } catch (const dkfn::NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumeric;
  }
  return 0;
}
