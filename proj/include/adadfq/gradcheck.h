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

#ifndef ADADFQ_GRADCHECK_H_
#define ADADFQ_GRADCHECK_H_

#include <cstddef>
#include <functional>
#include <span>

#include "adadfq/tensor.h"

namespace adadfq {

// Compares reverse-mode gradients of `loss` against central differences,
// element by element over every tensor in `params`. Returns the worst
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
//
// `loss` must be deterministic; it is called 2 * numel + 1 times. Existing
// gradients on `params` are cleared. When `include` is set, only elements
// (param index, element index) for which it returns true are compared.
using GradientFilter = std::function<bool(std::size_t param, std::size_t element)>;
double check_gradients(const std::function<Tensor()>& loss,
                       std::span<Tensor> params, double step = 1e-5,
                       const GradientFilter& include = {});

}  // namespace adadfq

#endif  // ADADFQ_GRADCHECK_H_
