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

#ifndef ADADFQ_QUANTIZER_H_
#define ADADFQ_QUANTIZER_H_

#include <cstdint>
#include <optional>
#include <span>

#include "adadfq/tensor.h"

namespace adadfq {

// n-bit linear quantizer over a [min, max] range:
//
//   code = round((2^n - 1) * (theta - min) / (max - min) - 2^(n-1))
//
// with round-half-away-from-zero and theta clamped into [min, max] first, so
// codes always lie in [-2^(n-1), 2^(n-1) - 1]. Weights use the per-tensor
// min/max of the latent values at every forward; activations use an EMA of
// observed batch min/max.
struct QuantSpec {
  static constexpr int kMinBits = 2;
  static constexpr int kMaxBits = 32;

  int bits = 8;
  double activation_ema_decay = 0.9;
  // Half-width, in standard deviations, of the data-free initial range of a
  // linear output that feeds a BN layer. By Chebyshev's inequality k = 10
  // leaves at most 1% of any channel outside the range.
  double activation_init_sigmas = 10.0;

  // Throws ConfigError unless kMinBits <= bits <= kMaxBits.
  void validate() const;
  std::int64_t code_min() const;
  std::int64_t code_max() const;
};

// Returns std::nullopt for a degenerate range (min >= max); callers pass the
// value through unquantized in that case.
std::optional<std::int64_t> quantize_value(double theta, double range_min,
                                           double range_max, int bits);

// Inverse map: (code + 2^(n-1)) * (max - min) / (2^n - 1) + min.
// Throws ContractError for codes outside the legal range.
double dequantize_value(std::int64_t code, double range_min, double range_max,
                        int bits);

// dequantize(quantize(theta)); identity on a degenerate range.
double fake_quant_value(double theta, double range_min, double range_max,
                        int bits);

// Fake quantization with a clipping straight-through estimator: the gradient
// is 1 where range_min <= x <= range_max and 0 elsewhere. A degenerate range
// is the identity (gradient 1 everywhere).
Tensor fake_quant(const Tensor& x, double range_min, double range_max, int bits);

// Weight fake-quant with the range taken from the tensor's own min/max.
Tensor fake_quant_weights(const Tensor& weights, const QuantSpec& spec);

// Range tracker for one activation quantization site.
struct FakeQuantState {
  double observed_min = 0.0;
  double observed_max = 0.0;
  bool initialized = false;
  bool frozen = false;

  // First observation sets the range; later ones blend with
  // range = decay * range + (1 - decay) * batch_range. No-op when frozen.
  void observe(std::span<const double> values, double decay);
  bool degenerate() const { return !initialized || observed_min >= observed_max; }
};

// Fake-quantizes `x` at an activation site, optionally updating the site's
// range first.
Tensor fake_quant_activation(const Tensor& x, const QuantSpec& spec,
                             FakeQuantState& state, bool observe);

}  // namespace adadfq

#endif  // ADADFQ_QUANTIZER_H_
