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

#ifndef ADADFQ_STUDENT_H_
#define ADADFQ_STUDENT_H_

#include "adadfq/nn.h"
#include "adadfq/quantizer.h"

namespace adadfq {

// Builds the quantized student Q from a trained full-precision network.
//
// Q copies the architecture, latent weights and BN running statistics of the
// teacher. Every linear layer fake-quantizes its weights and its output
// activation. Q's BN layers always normalize with the copied running
// statistics.
//
// A linear output feeding a BN layer starts with the range
// [min_j(mu_j - k sigma_j), max_j(mu_j + k sigma_j)] taken from the teacher's
// running statistics, k = spec.activation_init_sigmas. Sites without a
// following BN layer (the logits) start unobserved and pass values through
// until the first calibration batch. No data is touched.
MlpNetwork build_quantized_student(const MlpNetwork& teacher,
                                   const QuantSpec& spec);

// Freezes or unfreezes every activation range in `student`.
void set_activation_ranges_frozen(MlpNetwork& student, bool frozen);

}  // namespace adadfq

#endif  // ADADFQ_STUDENT_H_
