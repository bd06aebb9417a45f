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

#ifndef DKFN_ERRORS_HPP
#define DKFN_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace dkfn {

// Bad arguments or malformed input data. Maps to CLI exit code 1.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Non-finite evaluations, PD failures and other numerical breakdowns.
// Maps to CLI exit code 2.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A matrix that was required to be positive definite is not.
class PdFailure : public NumericError {
 public:
  using NumericError::NumericError;
};

// The filtered covariance lost positive definiteness.
class FilterDivergence : public NumericError {
 public:
  using NumericError::NumericError;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dkfn

#endif  // DKFN_ERRORS_HPP
