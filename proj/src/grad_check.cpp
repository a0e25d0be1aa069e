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

#include "dattn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace dattn::ad {
namespace {

double evaluate(const Objective& objective, const std::vector<Tensor>& params) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const Tensor& p : params) vars.push_back(tape.constant(p));
  const Var out = objective(tape, vars);
  if (tape.value(out).size() != 1) throw ContractError("grad_check: objective must be scalar");
  return tape.value(out)[0];
}

}  // namespace

GradCheckResult grad_check_detailed(const Objective& objective, std::span<const Tensor> params, double h) {
  if (!(h >= 1e-6 && h <= 1e-3)) throw ContractError("grad_check: step must lie in [1e-6, 1e-3]");

  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& p : params) vars.push_back(tape.parameter(p));
    const Var out = objective(tape, vars);
    if (tape.value(out).size() != 1) throw ContractError("grad_check: objective must be scalar");
    tape.backward(out);
    for (Var v : vars) analytic.push_back(tape.grad(v));
  }

  GradCheckResult result;
  std::vector<Tensor> probe(params.begin(), params.end());
  Index flat = 0;
  for (std::size_t k = 0; k < probe.size(); ++k) {
    for (Index e = 0; e < probe[k].size(); ++e, ++flat) {
      const double saved = probe[k][e];
      probe[k][e] = saved + h;
      const double up = evaluate(objective, probe);
      probe[k][e] = saved - h;
      const double down = evaluate(objective, probe);
      probe[k][e] = saved;

      const double numeric = (up - down) / (2.0 * h);
      const double exact = analytic[k][e];
      const double denom = std::max({std::abs(exact), std::abs(numeric), 1e-8});
      const double rel = std::abs(exact - numeric) / denom;
      if (rel > result.max_rel_error || result.worst_coordinate < 0) {
        result.max_rel_error = std::max(result.max_rel_error, rel);
        result.worst_coordinate = flat;
      }
    }
  }
  result.coordinates = flat;
  return result;
}

double grad_check(const Objective& objective, std::span<const Tensor> params, double h) {
  return grad_check_detailed(objective, params, h).max_rel_error;
}

}  // namespace dattn::ad
