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

// Sample adaptability between a full-precision teacher P and its quantized
// student Q, and the losses of the generator/student game built on it.
//
// All entropies are in nats. For logits z_p, z_q of one generated sample:
//
//   p_ds = softmax(z_p - z_q)          disagreement vector
//   p_as = softmax(z_p + z_q)          agreement vector
//   H    = sum_c p_ds(c) ln(1 / p_ds(c))
//   H'   = (H - min_batch H) / (ln C - min_batch H)
//   H_nor = 1 - H'                     adaptability
//
// H' reaches 1 exactly when z_q = z_p up to a constant shift. The batch
// minimum is treated as a constant when differentiating, and a batch whose
// minimum already equals ln C maps to all zeros.

#ifndef ADADFQ_ADAPTABILITY_H_
#define ADADFQ_ADAPTABILITY_H_

#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "adadfq/nn.h"
#include "adadfq/tensor.h"

namespace adadfq {

enum class SampleClass { kDisagreement, kAgreement, kTeacherWrong };

const char* to_string(SampleClass c);

struct ClassCounts {
  std::size_t disagreement = 0;
  std::size_t agreement = 0;
  std::size_t teacher_wrong = 0;
};

// Weights of the generator objective. Defaults are the reference settings
// (alpha_ds, alpha_as, lambda_l, lambda_u, beta, gamma) =
// (0.2, 0.1, 0.1, 0.8, 1, 1).
struct GameHyperparams {
  double alpha_ds = 0.2;
  double alpha_as = 0.1;
  double lambda_l = 0.1;
  double lambda_u = 0.8;
  double beta = 1.0;
  double gamma = 1.0;

  // Throws ConfigError unless 0 <= lambda_l < lambda_u <= 1 and the weights
  // are non-negative.
  void validate() const;
};

Tensor disagreement_vector(const Tensor& z_p, const Tensor& z_q);
Tensor agreement_vector(const Tensor& z_p, const Tensor& z_q);

// Row entropies of probability rows; 0 ln(1/0) is taken as 0. Throws
// ContractError if a row does not sum to 1 within 1e-6.
Tensor info_entropy(const Tensor& p);

// Entropy of softmax(logits) per row, computed through log-softmax.
Tensor entropy_from_logits(const Tensor& logits);

// H' for a batch of entropies measured in base `log_base`.
Tensor normalize_entropy(const Tensor& h_info, std::size_t num_classes,
                         double log_base = std::numbers::e);

// Definition-based labelling; argmax ties go to the lowest class index.
std::vector<SampleClass> classify_samples(const Tensor& z_p, const Tensor& z_q,
                                          const Tensor& y);
ClassCounts count_classes(std::span<const SampleClass> classes);

// Mean cross-entropy between softmax(logits) and one-hot targets.
Tensor softmax_cross_entropy(const Tensor& logits, const Tensor& y);

// Cross-entropy of p_ds (resp. p_as) against y, evaluated in logit space.
Tensor loss_ds(const Tensor& z_p, const Tensor& z_q, const Tensor& y);
Tensor loss_as(const Tensor& z_p, const Tensor& z_q, const Tensor& y);

Tensor loss_bal(const Tensor& l_ds, const Tensor& l_as, double alpha_ds,
                double alpha_as);

// mean_i[ -max(lambda_l - h'_i, 0) - max(h'_i - lambda_u, 0) ]; zero iff every
// h' lies inside [lambda_l, lambda_u].
Tensor margin_terms(const Tensor& h_prime, double lambda_l, double lambda_u);

// Stored statistics of one teacher BN layer.
struct BnReference {
  std::vector<double> mean;
  std::vector<double> var;
  double eps = 1e-5;
};

std::vector<BnReference> bn_references(const MlpNetwork& teacher);

// sum_m ||mu_g - mu_m||^2 + ||sigma_g - sigma_m||^2 with biased batch
// variance and sigma = sqrt(var + eps) on both sides.
Tensor loss_bns(std::span<const Tensor> bn_inputs,
                std::span<const BnReference> references);

struct AdaptabilityBatch {
  Tensor z_p, z_q, y;
  Tensor p_ds, p_as;
  Tensor h_info;   // [B], nats
  Tensor h_prime;  // [B] in [0, 1]
  Tensor h_nor;    // [B] = 1 - h_prime
  std::vector<SampleClass> classes;

  std::size_t batch_size() const { return classes.size(); }
  ClassCounts counts() const { return count_classes(classes); }
};

AdaptabilityBatch compute_adaptability(const Tensor& z_p, const Tensor& z_q,
                                       const Tensor& y);

// margin_terms - beta * L_bal - gamma * L_BNS. To be maximized over the
// generator; the training loop minimizes its negation.
Tensor generator_objective(const AdaptabilityBatch& batch,
                           std::span<const Tensor> bn_inputs,
                           std::span<const BnReference> references,
                           const GameHyperparams& hp);

// mean(1 - h'). To be minimized over the student.
Tensor calibration_objective(const AdaptabilityBatch& batch);

}  // namespace adadfq

#endif  // ADADFQ_ADAPTABILITY_H_
