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

#ifndef ADADFQ_TESTS_TEST_UTIL_H_
#define ADADFQ_TESTS_TEST_UTIL_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "adadfq/rng.h"
#include "adadfq/tensor.h"

namespace adadfq::testing {

inline Tensor random_tensor(SeededRng& rng, Shape shape, double scale = 1.0,
                            bool requires_grad = false) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = scale * rng.normal();
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

inline Tensor random_one_hot(SeededRng& rng, std::size_t rows, std::size_t classes) {
  std::vector<double> v(rows * classes, 0.0);
  for (std::size_t i = 0; i < rows; ++i) v[i * classes + rng.uniform_index(classes)] = 1.0;
  return Tensor({rows, classes}, std::move(v));
}

inline std::vector<double> values(const Tensor& t) {
  return std::vector<double>(t.data().begin(), t.data().end());
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("adadfq_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace adadfq::testing

#endif  // ADADFQ_TESTS_TEST_UTIL_H_
