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

#ifndef ADADFQ_CONFIG_H_
#define ADADFQ_CONFIG_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "adadfq/game.h"
#include "adadfq/quantizer.h"

namespace adadfq {

// Everything a command needs. The file format is one `key = value` per line;
// '#' starts a comment, lists are comma-separated, booleans are true/false.
// Unknown keys and unparsable values are rejected with ConfigError.
struct RunConfig {
  // "blobs", "rings" or "csv" (reads dataset_path).
  std::string dataset = "blobs";
  std::string dataset_path;
  std::string label_column = "label";
  std::size_t num_classes = 4;
  std::size_t per_class = 500;
  std::size_t input_dim = 8;
  double spread = 1.0;

  std::vector<std::size_t> hidden = {64, 64};
  std::size_t gen_noise_dim = 64;
  std::size_t gen_embed_dim = 8;
  std::vector<std::size_t> gen_hidden = {64, 64};

  std::size_t teacher_epochs = 30;
  std::size_t teacher_batch_size = 64;
  double teacher_lr = 1e-2;

  QuantSpec quant{3};
  GameConfig game;

  std::uint64_t seed = 0;
  std::string out_dir = "out";
  std::size_t sample_dump_size = 64;

  // Checks ranges and copies seed/bits into the game config.
  void validate();
};

RunConfig parse_config(const std::string& text, const std::string& origin = "<string>");
RunConfig load_config(const std::filesystem::path& path);

// Canonical `key = value` listing of every field, sorted by key.
std::string serialize_config(const RunConfig& config);

// FNV-1a of the canonical listing without out_dir, as 16 hex digits.
std::string config_hash(const RunConfig& config);

}  // namespace adadfq

#endif  // ADADFQ_CONFIG_H_
