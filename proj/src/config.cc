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

#include "adadfq/config.h"

#include <charconv>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "adadfq/errors.h"
#include "adadfq/io.h"

namespace adadfq {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (value.empty() || ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError("config key '" + key + "': cannot parse '" + value + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true") return true;
  if (value == "false") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" +
                    value + "'");
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& value) {
  std::vector<std::size_t> out;
  std::istringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) {
    out.push_back(parse_number<std::size_t>(key, trim(item)));
  }
  return out;
}

std::string list_string(const std::vector<std::size_t>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(values[i]);
  }
  return out;
}

struct Field {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field number_field(T RunConfig::*member) {
  return {[member](RunConfig& c, const std::string& k, const std::string& v) {
            c.*member = parse_number<T>(k, v);
          },
          [member](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<T>) {
              return format_double(c.*member);
            } else {
              return std::to_string(c.*member);
            }
          }};
}

template <typename Owner, typename T>
Field nested_number(Owner RunConfig::*owner, T Owner::*member) {
  return {[=](RunConfig& c, const std::string& k, const std::string& v) {
            (c.*owner).*member = parse_number<T>(k, v);
          },
          [=](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<T>) {
              return format_double((c.*owner).*member);
            } else {
              return std::to_string((c.*owner).*member);
            }
          }};
}

template <typename T>
Field hp_number(T GameHyperparams::*member) {
  return {[=](RunConfig& c, const std::string& k, const std::string& v) {
            c.game.hp.*member = parse_number<T>(k, v);
          },
          [=](const RunConfig& c) { return format_double(c.game.hp.*member); }};
}

Field string_field(std::string RunConfig::*member) {
  return {[member](RunConfig& c, const std::string&, const std::string& v) { c.*member = v; },
          [member](const RunConfig& c) { return c.*member; }};
}

Field list_field(std::vector<std::size_t> RunConfig::*member) {
  return {[member](RunConfig& c, const std::string& k, const std::string& v) {
            c.*member = parse_list(k, v);
          },
          [member](const RunConfig& c) { return list_string(c.*member); }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      {"dataset", string_field(&RunConfig::dataset)},
      {"dataset_path", string_field(&RunConfig::dataset_path)},
      {"label_column", string_field(&RunConfig::label_column)},
      {"num_classes", number_field(&RunConfig::num_classes)},
      {"per_class", number_field(&RunConfig::per_class)},
      {"input_dim", number_field(&RunConfig::input_dim)},
      {"spread", number_field(&RunConfig::spread)},
      {"hidden", list_field(&RunConfig::hidden)},
      {"gen_noise_dim", number_field(&RunConfig::gen_noise_dim)},
      {"gen_embed_dim", number_field(&RunConfig::gen_embed_dim)},
      {"gen_hidden", list_field(&RunConfig::gen_hidden)},
      {"teacher_epochs", number_field(&RunConfig::teacher_epochs)},
      {"teacher_batch_size", number_field(&RunConfig::teacher_batch_size)},
      {"teacher_lr", number_field(&RunConfig::teacher_lr)},
      {"bits", nested_number(&RunConfig::quant, &QuantSpec::bits)},
      {"activation_ema_decay",
       nested_number(&RunConfig::quant, &QuantSpec::activation_ema_decay)},
      {"activation_init_sigmas",
       nested_number(&RunConfig::quant, &QuantSpec::activation_init_sigmas)},
      {"epochs", nested_number(&RunConfig::game, &GameConfig::epochs)},
      {"iterations_per_epoch",
       nested_number(&RunConfig::game, &GameConfig::iterations_per_epoch)},
      {"batch_size", nested_number(&RunConfig::game, &GameConfig::batch_size)},
      {"gen_lr", nested_number(&RunConfig::game, &GameConfig::gen_lr)},
      {"gen_beta1", nested_number(&RunConfig::game, &GameConfig::gen_beta1)},
      {"gen_beta2", nested_number(&RunConfig::game, &GameConfig::gen_beta2)},
      {"cal_lr", nested_number(&RunConfig::game, &GameConfig::cal_lr)},
      {"cal_momentum", nested_number(&RunConfig::game, &GameConfig::cal_momentum)},
      {"cal_weight_decay",
       nested_number(&RunConfig::game, &GameConfig::cal_weight_decay)},
      {"cal_nesterov",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          c.game.cal_nesterov = parse_bool(k, v);
        },
        [](const RunConfig& c) { return std::string(c.game.cal_nesterov ? "true" : "false"); }}},
      {"calibration_ce_weight",
       nested_number(&RunConfig::game, &GameConfig::calibration_ce_weight)},
      {"alpha_ds", hp_number(&GameHyperparams::alpha_ds)},
      {"alpha_as", hp_number(&GameHyperparams::alpha_as)},
      {"lambda_l", hp_number(&GameHyperparams::lambda_l)},
      {"lambda_u", hp_number(&GameHyperparams::lambda_u)},
      {"beta", hp_number(&GameHyperparams::beta)},
      {"gamma", hp_number(&GameHyperparams::gamma)},
      {"seed", number_field(&RunConfig::seed)},
      {"out_dir", string_field(&RunConfig::out_dir)},
      {"sample_dump_size", number_field(&RunConfig::sample_dump_size)},
  };
  return table;
}

}  // namespace

void RunConfig::validate() {
  static const std::set<std::string> kDatasets = {"blobs", "rings", "csv"};
  if (!kDatasets.count(dataset)) {
    throw ConfigError("dataset must be blobs, rings or csv, got '" + dataset + "'");
  }
  if (dataset == "csv" && dataset_path.empty()) {
    throw ConfigError("dataset = csv needs dataset_path");
  }
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (per_class < 2) throw ConfigError("per_class must be >= 2");
  if (input_dim < 2) throw ConfigError("input_dim must be >= 2");
  if (!(spread >= 0.0)) throw ConfigError("spread must be >= 0");
  for (const auto* widths : {&hidden, &gen_hidden}) {
    for (std::size_t w : *widths) {
      if (w == 0) throw ConfigError("hidden widths must be positive");
    }
  }
  if (gen_noise_dim == 0 || gen_embed_dim == 0) {
    throw ConfigError("gen_noise_dim and gen_embed_dim must be positive");
  }
  if (teacher_epochs == 0 || teacher_batch_size < 2 || !(teacher_lr > 0.0)) {
    throw ConfigError("teacher training needs epochs >= 1, batch >= 2, lr > 0");
  }
  if (sample_dump_size == 0) throw ConfigError("sample_dump_size must be positive");
  if (out_dir.empty()) throw ConfigError("out_dir must not be empty");
  quant.validate();
  game.seed = seed;
  game.bits = quant.bits;
  game.validate();
}

RunConfig parse_config(const std::string& text, const std::string& origin) {
  RunConfig config;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(line_no);
    if (eq == std::string::npos) {
      throw ConfigError(where + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto it = fields().find(key);
    if (it == fields().end()) throw ConfigError(where + ": unknown key '" + key + "'");
    if (!seen.insert(key).second) {
      throw ConfigError(where + ": duplicate key '" + key + "'");
    }
    try {
      it->second.set(config, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
  config.validate();
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  return parse_config(io::read_file(path), path.string());
}

std::string serialize_config(const RunConfig& config) {
  std::string out;
  for (const auto& [key, field] : fields()) {
    out += key + " = " + field.get(config) + "\n";
  }
  return out;
}

std::string config_hash(const RunConfig& config) {
  // The output location does not change any result.
  std::string text;
  for (const auto& [key, field] : fields()) {
    if (key != "out_dir") text += key + " = " + field.get(config) + "\n";
  }
  return io::fnv1a_hex(text);
}

}  // namespace adadfq
