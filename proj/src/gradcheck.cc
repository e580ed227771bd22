// Copyright 2026 The AdaDFQ Lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "adadfq/gradcheck.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "adadfq/errors.h"

namespace adadfq {

double check_gradients(const std::function<Tensor()>& loss,
                       std::span<Tensor> params, double step,
                       const GradientFilter& include) {
  if (!(step > 0.0)) throw ContractError("check_gradients: step must be > 0");
  for (Tensor& p : params) p.zero_grad();
  loss().backward();

  std::vector<std::vector<double>> analytic;
  for (Tensor& p : params) {
    analytic.emplace_back(p.has_grad()
                              ? std::vector<double>(p.grad().begin(), p.grad().end())
                              : std::vector<double>(p.numel(), 0.0));
  }

  double worst = 0.0;
  NoGradGuard no_grad;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto values = params[k].mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (include && !include(k, i)) continue;
      const double saved = values[i];
      values[i] = saved + step;
      const double up = loss().item();
      values[i] = saved - step;
      const double down = loss().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double exact = analytic[k][i];
      const double denom =
          std::max({std::abs(exact), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(exact - numeric) / denom);
    }
  }
  for (Tensor& p : params) p.zero_grad();
  return worst;
}

}  // namespace adadfq
