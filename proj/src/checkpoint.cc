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

#include "adadfq/checkpoint.h"

#include <bit>
#include <cstring>
#include <map>

#include "adadfq/errors.h"
#include "adadfq/io.h"
#include "json.hpp"

namespace adadfq {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'A', 'D', 'F', 'Q', 'C', 'K', 'P', 'T'};

std::string version_tag() {
  return "checkpoint format v" + std::to_string(kCheckpointVersion);
}

[[noreturn]] void corrupt(const std::string& what) {
  throw FormatError(version_tag() + ": " + what);
}

void put_u64(std::string& out, std::uint64_t v, int bytes = 8) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const std::string& in, std::size_t pos, int bytes = 8) {
  if (pos + static_cast<std::size_t>(bytes) > in.size()) corrupt("truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  return v;
}

// Collects tensors in insertion order and lays them out in the payload.
class PayloadWriter {
 public:
  void add(const std::string& name, const Shape& shape, std::span<const double> values) {
    table_.push_back({{"name", name}, {"shape", shape}, {"offset", offset_}});
    for (double v : values) put_u64(payload_, std::bit_cast<std::uint64_t>(v));
    offset_ += values.size();
  }
  void add(const std::string& name, const Tensor& t) { add(name, t.shape(), t.data()); }
  const json& table() const { return table_; }
  const std::string& payload() const { return payload_; }

 private:
  json table_ = json::array();
  std::string payload_;
  std::size_t offset_ = 0;
};

class PayloadReader {
 public:
  PayloadReader(const json& table, std::string payload) : payload_(std::move(payload)) {
    const std::size_t count = payload_.size() / 8;
    if (payload_.size() % 8 != 0) corrupt("payload is not a whole number of values");
    for (const json& entry : table) {
      Entry e;
      e.shape = entry.at("shape").get<Shape>();
      e.offset = entry.at("offset").get<std::size_t>();
      if (e.offset + shape_numel(e.shape) > count) {
        corrupt("tensor '" + entry.at("name").get<std::string>() +
                "' extends past the payload");
      }
      entries_[entry.at("name").get<std::string>()] = e;
    }
  }

  std::vector<double> values(const std::string& name, const Shape& expected) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) corrupt("missing tensor '" + name + "'");
    if (it->second.shape != expected) {
      corrupt("tensor '" + name + "' has shape " + shape_string(it->second.shape) +
              ", architecture needs " + shape_string(expected));
    }
    std::vector<double> out(shape_numel(expected));
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = std::bit_cast<double>(get_u64(payload_, (it->second.offset + i) * 8));
    }
    return out;
  }

  Tensor tensor(const std::string& name, const Shape& shape, bool requires_grad) const {
    return Tensor(shape, values(name, shape), requires_grad);
  }

 private:
  struct Entry {
    Shape shape;
    std::size_t offset = 0;
  };
  std::map<std::string, Entry> entries_;
  std::string payload_;
};

json metadata_json(const CheckpointMetadata& meta) {
  return {{"seed", meta.seed},
          {"epoch", meta.epoch},
          {"config_hash", meta.config_hash},
          {"role", meta.role}};
}

CheckpointMetadata metadata_from(const json& header) {
  CheckpointMetadata meta;
  meta.kind = header.at("kind").get<std::string>();
  const json& m = header.at("metadata");
  meta.seed = m.at("seed").get<std::uint64_t>();
  meta.epoch = m.at("epoch").get<std::size_t>();
  meta.config_hash = m.at("config_hash").get<std::string>();
  meta.role = m.at("role").get<std::string>();
  return meta;
}

json network_architecture(const MlpNetwork& net, const std::string& prefix,
                          PayloadWriter& writer) {
  json layers = json::array();
  for (std::size_t i = 0; i < net.layers().size(); ++i) {
    const std::string name = prefix + "layers." + std::to_string(i) + ".";
    const Layer& layer = net.layers()[i];
    if (const auto* l = std::get_if<LinearLayer>(&layer)) {
      json entry = {{"type", "linear"}, {"in", l->in_features()}, {"out", l->out_features()}};
      writer.add(name + "weight", l->weight);
      writer.add(name + "bias", l->bias);
      if (l->quant) {
        const LinearQuant& q = *l->quant;
        entry["quant"] = {{"bits", q.spec.bits},
                          {"activation_ema_decay", q.spec.activation_ema_decay},
                          {"activation_init_sigmas", q.spec.activation_init_sigmas},
                          {"initialized", q.output_state.initialized},
                          {"frozen", q.output_state.frozen}};
        const double range[2] = {q.output_state.observed_min, q.output_state.observed_max};
        writer.add(name + "output_range", Shape{2}, range);
      }
      layers.push_back(entry);
    } else if (const auto* b = std::get_if<BatchNormLayer>(&layer)) {
      layers.push_back({{"type", "batch_norm"},
                        {"features", b->features()},
                        {"momentum", b->momentum},
                        {"eps", b->eps},
                        {"frozen_stats", b->frozen_stats}});
      const Shape s{b->features()};
      writer.add(name + "gamma", b->gamma);
      writer.add(name + "beta", b->beta);
      writer.add(name + "running_mean", s, b->running_mean);
      writer.add(name + "running_var", s, b->running_var);
    } else {
      layers.push_back({{"type", "relu"}});
    }
  }
  return {{"input_dim", net.input_dim()},
          {"output_dim", net.output_dim()},
          {"layers", layers}};
}

MlpNetwork network_from(const json& arch, const std::string& prefix,
                        const PayloadReader& reader) {
  std::vector<Layer> layers;
  const json& entries = arch.at("layers");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const json& e = entries[i];
    const std::string name = prefix + "layers." + std::to_string(i) + ".";
    const std::string type = e.at("type").get<std::string>();
    if (type == "linear") {
      const auto in = e.at("in").get<std::size_t>();
      const auto out = e.at("out").get<std::size_t>();
      LinearLayer l;
      l.weight = reader.tensor(name + "weight", {out, in}, true);
      l.bias = reader.tensor(name + "bias", {out}, true);
      if (e.contains("quant")) {
        const json& q = e.at("quant");
        LinearQuant quant;
        quant.spec.bits = q.at("bits").get<int>();
        quant.spec.activation_ema_decay = q.at("activation_ema_decay").get<double>();
        quant.spec.activation_init_sigmas = q.at("activation_init_sigmas").get<double>();
        try {
          quant.spec.validate();
        } catch (const ConfigError& err) {
          corrupt(std::string("invalid quantizer settings: ") + err.what());
        }
        auto range = reader.values(name + "output_range", {2});
        quant.output_state.observed_min = range[0];
        quant.output_state.observed_max = range[1];
        quant.output_state.initialized = q.at("initialized").get<bool>();
        quant.output_state.frozen = q.at("frozen").get<bool>();
        l.quant = quant;
      }
      layers.emplace_back(std::move(l));
    } else if (type == "batch_norm") {
      const auto d = e.at("features").get<std::size_t>();
      BatchNormLayer b;
      b.gamma = reader.tensor(name + "gamma", {d}, true);
      b.beta = reader.tensor(name + "beta", {d}, true);
      b.running_mean = reader.values(name + "running_mean", {d});
      b.running_var = reader.values(name + "running_var", {d});
      b.momentum = e.at("momentum").get<double>();
      b.eps = e.at("eps").get<double>();
      b.frozen_stats = e.at("frozen_stats").get<bool>();
      layers.emplace_back(std::move(b));
    } else if (type == "relu") {
      layers.emplace_back(ReluLayer{});
    } else {
      corrupt("unknown layer type '" + type + "'");
    }
  }
  try {
    return MlpNetwork(arch.at("input_dim").get<std::size_t>(),
                      arch.at("output_dim").get<std::size_t>(), std::move(layers));
  } catch (const DimensionError& err) {
    corrupt(std::string("inconsistent architecture: ") + err.what());
  }
}

std::string assemble(const std::string& kind, json architecture,
                     const PayloadWriter& writer, const CheckpointMetadata& meta) {
  json header = {{"kind", kind},
                 {"architecture", std::move(architecture)},
                 {"tensors", writer.table()},
                 {"metadata", metadata_json(meta)}};
  const std::string text = header.dump();
  std::string out(kMagic, sizeof(kMagic));
  put_u64(out, kCheckpointVersion, 4);
  put_u64(out, text.size());
  out += text;
  out += writer.payload();
  return out;
}

struct Parsed {
  json header;
  std::string payload;
};

Parsed parse(const std::string& bytes, const std::string& expected_kind) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("not an adadfq checkpoint (bad magic); expected " + version_tag());
  }
  const auto version = static_cast<std::uint32_t>(get_u64(bytes, 8, 4));
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) +
                      "; this build reads " + version_tag());
  }
  const std::uint64_t header_len = get_u64(bytes, 12);
  const std::size_t header_start = 20;
  if (header_len > bytes.size() - header_start) corrupt("truncated header");
  Parsed p;
  try {
    p.header = json::parse(bytes.substr(header_start, header_len));
  } catch (const json::exception& err) {
    corrupt(std::string("unreadable header: ") + err.what());
  }
  if (!p.header.is_object() || p.header.value("kind", "") != expected_kind) {
    corrupt("expected a " + expected_kind + " checkpoint");
  }
  p.payload = bytes.substr(header_start + header_len);
  return p;
}

template <typename Fn>
auto guarded(Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const json::exception& err) {
    corrupt(std::string("malformed header: ") + err.what());
  }
}

}  // namespace

std::string encode_network(const MlpNetwork& net, const CheckpointMetadata& meta) {
  PayloadWriter writer;
  json arch = network_architecture(net, "", writer);
  return assemble("network", std::move(arch), writer, meta);
}

MlpNetwork decode_network(const std::string& bytes, CheckpointMetadata* meta) {
  Parsed p = parse(bytes, "network");
  return guarded([&] {
    PayloadReader reader(p.header.at("tensors"), std::move(p.payload));
    MlpNetwork net = network_from(p.header.at("architecture"), "", reader);
    if (meta) *meta = metadata_from(p.header);
    return net;
  });
}

std::string encode_generator(const ConditionalGenerator& gen,
                             const CheckpointMetadata& meta) {
  PayloadWriter writer;
  writer.add("embedding", gen.embedding());
  json arch = {{"noise_dim", gen.noise_dim()},
               {"num_classes", gen.num_classes()},
               {"embed_dim", gen.embedding().cols()},
               {"body", network_architecture(gen.body(), "body.", writer)}};
  return assemble("generator", std::move(arch), writer, meta);
}

ConditionalGenerator decode_generator(const std::string& bytes, CheckpointMetadata* meta) {
  Parsed p = parse(bytes, "generator");
  return guarded([&] {
    PayloadReader reader(p.header.at("tensors"), std::move(p.payload));
    const json& arch = p.header.at("architecture");
    const auto classes = arch.at("num_classes").get<std::size_t>();
    const auto embed = arch.at("embed_dim").get<std::size_t>();
    Tensor embedding = reader.tensor("embedding", {classes, embed}, true);
    MlpNetwork body = network_from(arch.at("body"), "body.", reader);
    if (meta) *meta = metadata_from(p.header);
    try {
      return ConditionalGenerator(std::move(embedding), std::move(body),
                                  arch.at("noise_dim").get<std::size_t>());
    } catch (const DimensionError& err) {
      corrupt(std::string("inconsistent generator: ") + err.what());
    }
  });
}

void save_network(const std::filesystem::path& path, const MlpNetwork& net,
                  const CheckpointMetadata& meta) {
  io::write_file_atomic(path, encode_network(net, meta));
}

MlpNetwork load_network(const std::filesystem::path& path, CheckpointMetadata* meta) {
  return decode_network(io::read_file(path), meta);
}

void save_generator(const std::filesystem::path& path, const ConditionalGenerator& gen,
                    const CheckpointMetadata& meta) {
  io::write_file_atomic(path, encode_generator(gen, meta));
}

ConditionalGenerator load_generator(const std::filesystem::path& path,
                                    CheckpointMetadata* meta) {
  return decode_generator(io::read_file(path), meta);
}

}  // namespace adadfq
