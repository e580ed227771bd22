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

#ifndef ADADFQ_DATA_H_
#define ADADFQ_DATA_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "adadfq/rng.h"
#include "adadfq/tensor.h"

namespace adadfq {

struct Dataset {
  Tensor train_x;  // [N_train x d]
  std::vector<int> train_y;
  Tensor test_x;   // [N_test x d]
  std::vector<int> test_y;
  std::size_t num_classes = 0;
  std::size_t dim = 0;
  std::string provenance;

  // Per-column standardization fitted on the train split; empty when the
  // features are raw.
  std::vector<double> feature_mean;
  std::vector<double> feature_std;
  std::vector<std::string> warnings;

  std::size_t size() const { return train_y.size() + test_y.size(); }
};

inline constexpr double kRingInnerRadius = 5.0;
inline constexpr double kRingSpacing = 0.5;

// Distance of each blob center from the origin.
inline constexpr double kBlobCenterScale = 3.5;

// Isotropic Gaussian clusters of standard deviation `spread`. Class c is
// centered at kBlobCenterScale * e_c for c < d and at -kBlobCenterScale *
// e_(c-d) for d <= c < 2d (cross-polytope vertices). Each class is split
// 80/20 into train/test.
Dataset make_blobs(std::size_t num_classes, std::size_t per_class,
                   std::size_t dim, double spread, std::uint64_t seed);

// Concentric 2-D annuli; class c has radius kRingInnerRadius +
// kRingSpacing * c with radial noise 0.1. The thin spacing keeps any
// half-plane below 60% accuracy for two classes.
Dataset make_rings(std::size_t num_classes, std::size_t per_class,
                   std::uint64_t seed);

struct CsvOptions {
  // When present, a column with values "train"/"test" assigns the split;
  // otherwise each class is split 80/20 in file order.
  std::string split_column = "split";
  bool standardize = true;
};

// Comma-separated, header row, '.' decimals. Feature columns must be numeric.
// Labels are used as integers when every value parses as one, otherwise the
// sorted distinct strings are coded 0..C-1. Standardization statistics come
// from the train split only; a constant column becomes all zeros and a
// warning is recorded.
Dataset load_csv(const std::filesystem::path& path,
                 const std::string& label_column, const CsvOptions& options = {});

// Writes f0..f{d-1},label,split with full double precision. Standardized
// datasets are written back in raw units.
void write_csv(const Dataset& dataset, const std::filesystem::path& path);

struct NoiseBatch {
  Tensor noise;   // [B x nz], standard normal
  Tensor labels;  // [B x C], one-hot
  std::vector<int> label_ids;
};

// Labels first (uniform over classes), then noise, from the same stream.
NoiseBatch sample_noise_and_labels(SeededRng& rng, std::size_t batch,
                                   std::size_t noise_dim,
                                   std::size_t num_classes);

}  // namespace adadfq

#endif  // ADADFQ_DATA_H_
