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

#include "adadfq/quantizer.h"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "adadfq/errors.h"

namespace adadfq {

namespace {

double levels(int bits) { return std::ldexp(1.0, bits) - 1.0; }
double half_span(int bits) { return std::ldexp(1.0, bits - 1); }

void check_bits(int bits) {
  if (bits < QuantSpec::kMinBits || bits > QuantSpec::kMaxBits) {
    throw ConfigError("quantization bit width must be in [" +
                      std::to_string(QuantSpec::kMinBits) + ", " +
                      std::to_string(QuantSpec::kMaxBits) + "], got " +
                      std::to_string(bits));
  }
}

}  // namespace

void QuantSpec::validate() const {
  check_bits(bits);
  if (!(activation_ema_decay >= 0.0 && activation_ema_decay < 1.0)) {
    throw ConfigError("activation_ema_decay must be in [0, 1)");
  }
  if (!(activation_init_sigmas > 0.0)) {
    throw ConfigError("activation_init_sigmas must be positive");
  }
}

std::int64_t QuantSpec::code_min() const {
  return -(std::int64_t{1} << (bits - 1));
}

std::int64_t QuantSpec::code_max() const {
  return (std::int64_t{1} << (bits - 1)) - 1;
}

std::optional<std::int64_t> quantize_value(double theta, double range_min,
                                           double range_max, int bits) {
  check_bits(bits);
  if (!(range_min < range_max)) return std::nullopt;
  const double clamped = std::clamp(theta, range_min, range_max);
  const double scaled =
      levels(bits) * (clamped - range_min) / (range_max - range_min) -
      half_span(bits);
  // std::round rounds halves away from zero.
  auto code = static_cast<std::int64_t>(std::round(scaled));
  const std::int64_t lo = -(std::int64_t{1} << (bits - 1));
  const std::int64_t hi = (std::int64_t{1} << (bits - 1)) - 1;
  return std::clamp(code, lo, hi);
}

double dequantize_value(std::int64_t code, double range_min, double range_max,
                        int bits) {
  check_bits(bits);
  const std::int64_t lo = -(std::int64_t{1} << (bits - 1));
  const std::int64_t hi = (std::int64_t{1} << (bits - 1)) - 1;
  if (code < lo || code > hi) {
    throw ContractError("code " + std::to_string(code) + " outside [" +
                        std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
  if (code == hi) return range_max;
  return (static_cast<double>(code) + half_span(bits)) *
             (range_max - range_min) / levels(bits) +
         range_min;
}

double fake_quant_value(double theta, double range_min, double range_max,
                        int bits) {
  auto code = quantize_value(theta, range_min, range_max, bits);
  if (!code) return theta;
  return dequantize_value(*code, range_min, range_max, bits);
}

Tensor fake_quant(const Tensor& x, double range_min, double range_max,
                  int bits) {
  check_bits(bits);
  auto in = x.data();
  std::vector<double> out(in.size());
  const bool degenerate = !(range_min < range_max);
  std::vector<double> pass(in.size(), 1.0);
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (degenerate) {
      out[i] = in[i];
    } else {
      out[i] = fake_quant_value(in[i], range_min, range_max, bits);
      if (in[i] < range_min || in[i] > range_max) pass[i] = 0.0;
    }
  }
  return make_result(x.shape(), std::move(out), {x},
                     [pass = std::move(pass)](std::span<const double> g,
                                              std::span<std::vector<double>*> pg) {
                       for (std::size_t i = 0; i < g.size(); ++i)
                         (*pg[0])[i] += g[i] * pass[i];
                     });
}

Tensor fake_quant_weights(const Tensor& weights, const QuantSpec& spec) {
  auto d = weights.data();
  auto [lo, hi] = std::minmax_element(d.begin(), d.end());
  return fake_quant(weights, *lo, *hi, spec.bits);
}

void FakeQuantState::observe(std::span<const double> values, double decay) {
  if (frozen || values.empty()) return;
  auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  if (!initialized) {
    observed_min = *lo;
    observed_max = *hi;
    initialized = true;
    return;
  }
  observed_min = decay * observed_min + (1.0 - decay) * *lo;
  observed_max = decay * observed_max + (1.0 - decay) * *hi;
}

Tensor fake_quant_activation(const Tensor& x, const QuantSpec& spec,
                             FakeQuantState& state, bool observe) {
  if (observe) state.observe(x.data(), spec.activation_ema_decay);
  if (state.degenerate()) {
    return fake_quant(x, 0.0, 0.0, spec.bits);
  }
  return fake_quant(x, state.observed_min, state.observed_max, spec.bits);
}

}  // namespace adadfq
