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

#ifndef DKFN_DKFN_HPP
#define DKFN_DKFN_HPP

#include "dkfn/dkf.hpp"
#include "dkfn/errors.hpp"
#include "dkfn/experiment.hpp"
#include "dkfn/line_search.hpp"
#include "dkfn/linalg.hpp"
#include "dkfn/objective.hpp"
#include "dkfn/optimizer.hpp"
#include "dkfn/random.hpp"

#endif  // DKFN_DKFN_HPP
