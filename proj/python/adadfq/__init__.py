# Copyright 2026 The AdaDFQ Lab Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Python bindings for the AdaDFQ desk-scale data-free quantization lab."""

from ._adadfq import (
    CheckpointMetadata,
    ConfigError,
    ContractError,
    FormatError,
    Network,
    NumericError,
    RunConfig,
    dequantize_value,
    dfq,
    disagreement_vector,
    entropy_from_logits,
    evaluate,
    fake_quant,
    make_blobs,
    make_rings,
    normalize_entropy,
    pds_similarity,
    quantize,
    quantize_value,
    run_cli,
    train_teacher,
)

__all__ = [
    "CheckpointMetadata",
    "ConfigError",
    "ContractError",
    "FormatError",
    "Network",
    "NumericError",
    "RunConfig",
    "dequantize_value",
    "dfq",
    "disagreement_vector",
    "entropy_from_logits",
    "evaluate",
    "fake_quant",
    "make_blobs",
    "make_rings",
    "normalize_entropy",
    "pds_similarity",
    "quantize",
    "quantize_value",
    "run_cli",
    "train_teacher",
]
