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

#ifndef DKFN_LINE_SEARCH_HPP
#define DKFN_LINE_SEARCH_HPP

#include <cmath>
#include <concepts>

#include "dkfn/errors.hpp"
#include "dkfn/linalg.hpp"
#include "dkfn/objective.hpp"

namespace dkfn {

struct ArmijoConfig {
  double sufficient_decrease = 0.95;
  int max_halvings = 4;  // trial steps 1, 1/2, ..., 2^-max_halvings
};

struct LineSearchResult {
  double step = 1.0;
  int evaluations = 0;  // evaluations of h beyond h(theta0)
  bool accepted = false;
};

// Backtracking over lambda = 2^-k, k = 0..max_halvings. Returns the first
// lambda with h(theta0 + lambda v) - h(theta0) <= c lambda <v, m>; if none
// passes, the last trial value.
template <class F>
  requires std::invocable<F&, const Vector&>
LineSearchResult armijo_search(F&& h, const Vector& theta0, const Vector& direction,
                               const Vector& gradient, const ArmijoConfig& cfg = {}) {
  const double h0 = h(theta0);
  if (!std::isfinite(h0)) {
    throw NumericError("line search: non-finite h at theta0=" + format_vector(theta0));
  }
  const double slope = direction.dot(gradient);
  LineSearchResult result;
  double lambda = 1.0;
  for (int k = 0; k <= cfg.max_halvings; ++k) {
    lambda = std::ldexp(1.0, -k);
    const Vector trial = theta0 + lambda * direction;
    const double hk = h(trial);
    ++result.evaluations;
    if (!std::isfinite(hk)) {
      throw NumericError("line search: non-finite h at trial point " + format_vector(trial) +
                         " (lambda=" + std::to_string(lambda) + ")");
    }
    if (hk - h0 <= cfg.sufficient_decrease * lambda * slope) {
      result.step = lambda;
      result.accepted = true;
      return result;
    }
  }
  result.step = lambda;
  return result;
}

template <class F>
  requires std::invocable<F&, const Vector&>
double armijo_backtrack(F&& h, const Vector& theta0, const Vector& direction,
                        const Vector& gradient, const ArmijoConfig& cfg = {}) {
  return armijo_search(h, theta0, direction, gradient, cfg).step;
}

}  // namespace dkfn

#endif  // DKFN_LINE_SEARCH_HPP
