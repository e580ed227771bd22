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

#include "adadfq/student.h"

#include <algorithm>
#include <cmath>
#include <limits>

namespace adadfq {

MlpNetwork build_quantized_student(const MlpNetwork& teacher,
                                   const QuantSpec& spec) {
  spec.validate();
  MlpNetwork student = teacher.clone();
  student.set_requires_grad(true);
  auto& layers = student.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (auto* bn = std::get_if<BatchNormLayer>(&layers[i])) {
      bn->frozen_stats = true;
      continue;
    }
    auto* lin = std::get_if<LinearLayer>(&layers[i]);
    if (!lin) continue;
    LinearQuant quant;
    quant.spec = spec;
    if (i + 1 < layers.size()) {
      if (const auto* bn = std::get_if<BatchNormLayer>(&layers[i + 1])) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (std::size_t j = 0; j < bn->features(); ++j) {
          const double reach =
              spec.activation_init_sigmas * std::sqrt(bn->running_var[j] + bn->eps);
          lo = std::min(lo, bn->running_mean[j] - reach);
          hi = std::max(hi, bn->running_mean[j] + reach);
        }
        quant.output_state.observed_min = lo;
        quant.output_state.observed_max = hi;
        quant.output_state.initialized = true;
      }
    }
    lin->quant = quant;
  }
  return student;
}

void set_activation_ranges_frozen(MlpNetwork& student, bool frozen) {
  for (Layer& layer : student.layers()) {
    if (auto* lin = std::get_if<LinearLayer>(&layer); lin && lin->quant) {
      lin->quant->output_state.frozen = frozen;
    }
  }
}

}  // namespace adadfq
