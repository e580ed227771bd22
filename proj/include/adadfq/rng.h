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

#ifndef ADADFQ_RNG_H_
#define ADADFQ_RNG_H_

#include <cstddef>
#include <cstdint>
#include <optional>

namespace adadfq {

// Named substreams. Values are part of the stream definition; do not renumber.
enum class Stream : std::uint64_t {
  kData = 1,
  kNoise = 2,
  kLabels = 3,
  kInit = 4,
  kSplit = 5,
};

// Counter-based generator: the i-th draw of a stream is
// splitmix64_finalize(key + (i + 1) * 0x9E3779B97F4A7C15), where key mixes the
// seed with the substream path. Any draw is therefore a pure function of
// (seed, substream path, counter), and substreams never share state.
//
// Normals use Box-Muller on consecutive uniforms (u1, u2):
//   r = sqrt(-2 ln(1 - u1)), z0 = r cos(2 pi u2), z1 = r sin(2 pi u2),
// with z0 returned first and z1 cached for the next call.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed);

  SeededRng substream(std::uint64_t key) const;
  SeededRng substream(Stream stream) const {
    return substream(static_cast<std::uint64_t>(stream));
  }

  std::uint64_t next_u64();
  // 53-bit uniform in [0, 1).
  double uniform();
  double normal();
  // Uniform integer in [0, n), rejection-sampled (no modulo bias).
  std::size_t uniform_index(std::size_t n);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

 private:
  SeededRng(std::uint64_t seed, std::uint64_t key);

  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  std::optional<double> cached_normal_;
};

}  // namespace adadfq

#endif  // ADADFQ_RNG_H_
