// Copyright 2026 The dattn Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <functional>
#include <span>

#include "dattn/autodiff.hpp"

namespace dattn::ad {

/// Builds a scalar objective on `tape` from the parameter handles (one per
/// entry of `params`, in order).
using Objective = std::function<Var(Tape& tape, std::span<const Var> params)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  /// Flat index across all parameters of the worst coordinate.
  Index worst_coordinate = -1;
  Index coordinates = 0;
};

/// Compare reverse-mode gradients against central differences
/// (f(t + h) - f(t - h)) / 2h, coordinate by coordinate. The relative error of
/// a coordinate is |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
///
/// Throws ContractError for a non-scalar objective or h outside [1e-6, 1e-3].
GradCheckResult grad_check_detailed(const Objective& objective, std::span<const Tensor> params, double h = 1e-5);

/// Max relative error only.
double grad_check(const Objective& objective, std::span<const Tensor> params, double h = 1e-5);

}  // namespace dattn::ad
