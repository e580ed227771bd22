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

#ifndef ADADFQ_CHECKPOINT_H_
#define ADADFQ_CHECKPOINT_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include "adadfq/nn.h"

namespace adadfq {

// Binary layout (all integers little-endian):
//
//   8 bytes   magic "ADFQCKPT"
//   u32       format version (kCheckpointVersion)
//   u64       header length in bytes
//   header    UTF-8 JSON: kind, architecture, tensor table, metadata
//   payload   float64 little-endian values; the tensor table gives each
//             tensor's name, shape and offset (in values)
//
// Activation ranges of quantized layers are stored as payload tensors so
// that a reload reproduces logits bit for bit.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMetadata {
  std::string kind;  // "network" or "generator"; filled in by the loaders
  std::uint64_t seed = 0;
  std::size_t epoch = 0;
  std::string config_hash;
  std::string role;  // free-form: "teacher", "student", ...
};

std::string encode_network(const MlpNetwork& net, const CheckpointMetadata& meta);
MlpNetwork decode_network(const std::string& bytes, CheckpointMetadata* meta = nullptr);

std::string encode_generator(const ConditionalGenerator& gen,
                             const CheckpointMetadata& meta);
ConditionalGenerator decode_generator(const std::string& bytes,
                                      CheckpointMetadata* meta = nullptr);

void save_network(const std::filesystem::path& path, const MlpNetwork& net,
                  const CheckpointMetadata& meta);
MlpNetwork load_network(const std::filesystem::path& path,
                        CheckpointMetadata* meta = nullptr);
void save_generator(const std::filesystem::path& path,
                    const ConditionalGenerator& gen, const CheckpointMetadata& meta);
ConditionalGenerator load_generator(const std::filesystem::path& path,
                                    CheckpointMetadata* meta = nullptr);

}  // namespace adadfq

#endif  // ADADFQ_CHECKPOINT_H_
