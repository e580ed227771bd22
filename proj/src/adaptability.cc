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

#include "adadfq/adaptability.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "adadfq/errors.h"

namespace adadfq {

namespace {

void require_pair(const Tensor& z_p, const Tensor& z_q, const char* op) {
  if (z_p.shape() != z_q.shape()) {
    throw DimensionError(std::string(op) + ": logits " +
                         shape_string(z_p.shape()) + " vs " +
                         shape_string(z_q.shape()));
  }
}

}  // namespace

const char* to_string(SampleClass c) {
  switch (c) {
    case SampleClass::kDisagreement: return "disagreement";
    case SampleClass::kAgreement: return "agreement";
    case SampleClass::kTeacherWrong: return "teacher_wrong";
  }
  return "unknown";
}

void GameHyperparams::validate() const {
  if (!(0.0 <= lambda_l && lambda_l < lambda_u && lambda_u <= 1.0)) {
    throw ConfigError("margin bounds need 0 <= lambda_l < lambda_u <= 1, got " +
                      std::to_string(lambda_l) + ", " + std::to_string(lambda_u));
  }
  if (alpha_ds < 0 || alpha_as < 0 || beta < 0 || gamma < 0) {
    throw ConfigError("alpha_ds, alpha_as, beta and gamma must be >= 0");
  }
}

Tensor disagreement_vector(const Tensor& z_p, const Tensor& z_q) {
  require_pair(z_p, z_q, "disagreement_vector");
  return softmax(sub(z_p, z_q));
}

Tensor agreement_vector(const Tensor& z_p, const Tensor& z_q) {
  require_pair(z_p, z_q, "agreement_vector");
  return softmax(add(z_p, z_q));
}

Tensor info_entropy(const Tensor& p) {
  if (p.rank() != 2) {
    throw DimensionError("info_entropy expects [B x C], got " +
                         shape_string(p.shape()));
  }
  const std::size_t b = p.rows(), c = p.cols();
  auto d = p.data();
  std::vector<double> out(b, 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double v = d[i * c + j];
      if (v < 0.0) {
        throw ContractError("info_entropy: negative probability in row " +
                            std::to_string(i));
      }
      total += v;
      if (v > 0.0) out[i] -= v * std::log(v);
    }
    if (std::abs(total - 1.0) > 1e-6) {
      throw ContractError("info_entropy: row " + std::to_string(i) +
                          " sums to " + std::to_string(total));
    }
  }
  return make_result({b}, std::move(out), {p},
                     [p = p.detach(), b, c](std::span<const double> g,
                                            std::span<std::vector<double>*> pg) {
                       auto d = p.data();
                       for (std::size_t i = 0; i < b; ++i)
                         for (std::size_t j = 0; j < c; ++j) {
                           const double v = d[i * c + j];
                           // d/dv of -v ln v; the v = 0 endpoint uses 0.
                           if (v > 0.0)
                             (*pg[0])[i * c + j] -= g[i] * (std::log(v) + 1.0);
                         }
                     });
}

Tensor entropy_from_logits(const Tensor& logits) {
  return neg(row_sum(mul(softmax(logits), log_softmax(logits))));
}

Tensor normalize_entropy(const Tensor& h_info, std::size_t num_classes,
                         double log_base) {
  if (num_classes < 2) throw ContractError("normalize_entropy: C must be >= 2");
  if (h_info.rank() != 1) {
    throw DimensionError("normalize_entropy expects [B], got " +
                         shape_string(h_info.shape()));
  }
  auto d = h_info.data();
  const double batch_min = *std::min_element(d.begin(), d.end());
  const double max_entropy =
      std::log(static_cast<double>(num_classes)) / std::log(log_base);
  const double span = max_entropy - batch_min;
  Tensor shifted = add_scalar(h_info, -batch_min);
  if (span < 1e-12) return mul_scalar(shifted, 0.0);
  return mul_scalar(shifted, 1.0 / span);
}

std::vector<SampleClass> classify_samples(const Tensor& z_p, const Tensor& z_q,
                                          const Tensor& y) {
  require_pair(z_p, z_q, "classify_samples");
  require_pair(z_p, y, "classify_samples");
  auto ap = argmax_rows(z_p);
  auto aq = argmax_rows(z_q);
  auto ay = argmax_rows(y);
  std::vector<SampleClass> out(ap.size());
  for (std::size_t i = 0; i < ap.size(); ++i) {
    if (ap[i] == aq[i]) {
      out[i] = SampleClass::kAgreement;
    } else if (ap[i] == ay[i]) {
      out[i] = SampleClass::kDisagreement;
    } else {
      out[i] = SampleClass::kTeacherWrong;
    }
  }
  return out;
}

ClassCounts count_classes(std::span<const SampleClass> classes) {
  ClassCounts counts;
  for (SampleClass c : classes) {
    switch (c) {
      case SampleClass::kDisagreement: ++counts.disagreement; break;
      case SampleClass::kAgreement: ++counts.agreement; break;
      case SampleClass::kTeacherWrong: ++counts.teacher_wrong; break;
    }
  }
  return counts;
}

Tensor softmax_cross_entropy(const Tensor& logits, const Tensor& y) {
  require_pair(logits, y, "softmax_cross_entropy");
  return neg(mean(row_sum(mul(log_softmax(logits), y))));
}

Tensor loss_ds(const Tensor& z_p, const Tensor& z_q, const Tensor& y) {
  require_pair(z_p, z_q, "loss_ds");
  return softmax_cross_entropy(sub(z_p, z_q), y);
}

Tensor loss_as(const Tensor& z_p, const Tensor& z_q, const Tensor& y) {
  require_pair(z_p, z_q, "loss_as");
  return softmax_cross_entropy(add(z_p, z_q), y);
}

Tensor loss_bal(const Tensor& l_ds, const Tensor& l_as, double alpha_ds,
                double alpha_as) {
  if (alpha_ds < 0 || alpha_as < 0) {
    throw ConfigError("loss_bal: weights must be >= 0");
  }
  return add(mul_scalar(l_ds, alpha_ds), mul_scalar(l_as, alpha_as));
}

Tensor margin_terms(const Tensor& h_prime, double lambda_l, double lambda_u) {
  GameHyperparams bounds;
  bounds.lambda_l = lambda_l;
  bounds.lambda_u = lambda_u;
  bounds.validate();
  Tensor below = relu(add_scalar(neg(h_prime), lambda_l));
  Tensor above = relu(add_scalar(h_prime, -lambda_u));
  return neg(mean(add(below, above)));
}

std::vector<BnReference> bn_references(const MlpNetwork& teacher) {
  std::vector<BnReference> out;
  for (const BatchNormLayer* bn : teacher.batch_norm_layers()) {
    out.push_back({bn->running_mean, bn->running_var, bn->eps});
  }
  return out;
}

Tensor loss_bns(std::span<const Tensor> bn_inputs,
                std::span<const BnReference> references) {
  if (bn_inputs.size() != references.size()) {
    throw DimensionError("loss_bns: " + std::to_string(bn_inputs.size()) +
                         " BN inputs for " + std::to_string(references.size()) +
                         " reference layers");
  }
  Tensor total = Tensor::scalar(0.0);
  for (std::size_t m = 0; m < bn_inputs.size(); ++m) {
    const Tensor& x = bn_inputs[m];
    const BnReference& ref = references[m];
    if (x.rank() != 2 || x.cols() != ref.mean.size()) {
      throw DimensionError("loss_bns: site " + std::to_string(m) + " input " +
                           shape_string(x.shape()) + " vs " +
                           std::to_string(ref.mean.size()) + " features");
    }
    if (x.rows() < 2) {
      throw ContractError("loss_bns needs a batch of at least 2 samples");
    }
    const std::size_t d = ref.mean.size();
    std::vector<double> ref_std(d);
    for (std::size_t j = 0; j < d; ++j) ref_std[j] = std::sqrt(ref.var[j] + ref.eps);
    Tensor mu_diff = sub(column_mean(x), Tensor({d}, ref.mean));
    Tensor sd_diff =
        sub(sqrt(add_scalar(column_var(x), ref.eps)), Tensor({d}, ref_std));
    total = add(total, add(sum(mul(mu_diff, mu_diff)), sum(mul(sd_diff, sd_diff))));
  }
  return total;
}

AdaptabilityBatch compute_adaptability(const Tensor& z_p, const Tensor& z_q,
                                       const Tensor& y) {
  require_pair(z_p, z_q, "compute_adaptability");
  require_pair(z_p, y, "compute_adaptability");
  AdaptabilityBatch batch;
  batch.z_p = z_p;
  batch.z_q = z_q;
  batch.y = y;
  Tensor diff = sub(z_p, z_q);
  batch.p_ds = softmax(diff);
  batch.p_as = softmax(add(z_p, z_q));
  batch.h_info = entropy_from_logits(diff);
  batch.h_prime = normalize_entropy(batch.h_info, z_p.cols());
  batch.h_nor = add_scalar(neg(batch.h_prime), 1.0);
  batch.classes = classify_samples(z_p, z_q, y);
  return batch;
}

Tensor generator_objective(const AdaptabilityBatch& batch,
                           std::span<const Tensor> bn_inputs,
                           std::span<const BnReference> references,
                           const GameHyperparams& hp) {
  hp.validate();
  Tensor margin = margin_terms(batch.h_prime, hp.lambda_l, hp.lambda_u);
  Tensor bal = loss_bal(loss_ds(batch.z_p, batch.z_q, batch.y),
                        loss_as(batch.z_p, batch.z_q, batch.y), hp.alpha_ds,
                        hp.alpha_as);
  Tensor bns = loss_bns(bn_inputs, references);
  return sub(sub(margin, mul_scalar(bal, hp.beta)), mul_scalar(bns, hp.gamma));
}

Tensor calibration_objective(const AdaptabilityBatch& batch) {
  return mean(batch.h_nor);
}

}  // namespace adadfq
