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

#include "adadfq/data.h"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>

#include "adadfq/errors.h"
#include "adadfq/io.h"

namespace adadfq {

namespace {

// Rows grouped by class, in generation order.
struct ClassRows {
  std::vector<std::vector<double>> rows;
};

std::size_t train_count(std::size_t n) {
  return std::min(n - 1, std::max<std::size_t>(1, (n * 4) / 5));
}

Dataset assemble(std::vector<ClassRows> classes, std::size_t dim,
                 std::string provenance) {
  Dataset ds;
  ds.num_classes = classes.size();
  ds.dim = dim;
  ds.provenance = std::move(provenance);
  std::vector<double> train, test;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const auto& rows = classes[c].rows;
    const std::size_t n_train = train_count(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto& dst = i < n_train ? train : test;
      dst.insert(dst.end(), rows[i].begin(), rows[i].end());
      (i < n_train ? ds.train_y : ds.test_y).push_back(static_cast<int>(c));
    }
  }
  ds.train_x = Tensor({ds.train_y.size(), dim}, std::move(train));
  ds.test_x = Tensor({ds.test_y.size(), dim}, std::move(test));
  return ds;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::string trim(std::string s) {
  auto not_space = [](unsigned char ch) { return !std::isspace(ch); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::optional<double> parse_double(const std::string& s) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    return std::nullopt;
  }
  return value;
}

std::optional<long long> parse_int(const std::string& s) {
  long long value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    return std::nullopt;
  }
  return value;
}

void standardize(Dataset& ds) {
  const std::size_t d = ds.dim;
  const std::size_t n = ds.train_y.size();
  ds.feature_mean.assign(d, 0.0);
  ds.feature_std.assign(d, 0.0);
  auto train = ds.train_x.mutable_data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) ds.feature_mean[j] += train[i * d + j];
  for (double& m : ds.feature_mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const double c = train[i * d + j] - ds.feature_mean[j];
      ds.feature_std[j] += c * c;
    }
  for (std::size_t j = 0; j < d; ++j) {
    ds.feature_std[j] = std::sqrt(ds.feature_std[j] / static_cast<double>(n));
    if (ds.feature_std[j] < 1e-12) {
      std::string msg = "feature column " + std::to_string(j) +
                        " is constant on the train split; standardized to 0";
      spdlog::warn(msg);
      ds.warnings.push_back(std::move(msg));
    }
  }
  auto apply = [&](std::span<double> values) {
    const std::size_t rows = values.size() / d;
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        double& v = values[i * d + j];
        v = ds.feature_std[j] < 1e-12
                ? 0.0
                : (v - ds.feature_mean[j]) / ds.feature_std[j];
      }
  };
  apply(train);
  apply(ds.test_x.mutable_data());
}

}  // namespace

Dataset make_blobs(std::size_t num_classes, std::size_t per_class,
                   std::size_t dim, double spread, std::uint64_t seed) {
  if (num_classes < 2) throw ConfigError("make_blobs: need at least 2 classes");
  if (dim < 2) throw ConfigError("make_blobs: need at least 2 dimensions");
  if (num_classes > 2 * dim) {
    throw ConfigError("make_blobs: at most 2 * dim classes are supported");
  }
  if (per_class < 2) throw ConfigError("make_blobs: need >= 2 samples per class");
  if (!(spread >= 0.0)) throw ConfigError("make_blobs: spread must be >= 0");
  SeededRng rng = SeededRng(seed).substream(Stream::kData);
  std::vector<ClassRows> classes(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::vector<double> center(dim, 0.0);
    if (c < dim) {
      center[c] = kBlobCenterScale;
    } else {
      center[c - dim] = -kBlobCenterScale;
    }
    for (std::size_t i = 0; i < per_class; ++i) {
      std::vector<double> row(dim);
      for (std::size_t j = 0; j < dim; ++j) row[j] = center[j] + spread * rng.normal();
      classes[c].rows.push_back(std::move(row));
    }
  }
  std::ostringstream prov;
  prov << "blobs(C=" << num_classes << ",per_class=" << per_class
       << ",d=" << dim << ",spread=" << spread << ",seed=" << seed << ")";
  return assemble(std::move(classes), dim, prov.str());
}

Dataset make_rings(std::size_t num_classes, std::size_t per_class,
                   std::uint64_t seed) {
  if (num_classes < 2) throw ConfigError("make_rings: need at least 2 classes");
  if (per_class < 2) throw ConfigError("make_rings: need >= 2 samples per class");
  SeededRng rng = SeededRng(seed).substream(Stream::kData);
  std::vector<ClassRows> classes(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double radius = kRingInnerRadius + kRingSpacing * static_cast<double>(c);
    for (std::size_t i = 0; i < per_class; ++i) {
      const double angle = 2.0 * std::numbers::pi * rng.uniform();
      const double r = radius + 0.1 * rng.normal();
      classes[c].rows.push_back({r * std::cos(angle), r * std::sin(angle)});
    }
  }
  std::ostringstream prov;
  prov << "rings(C=" << num_classes << ",per_class=" << per_class
       << ",seed=" << seed << ")";
  return assemble(std::move(classes), 2, prov.str());
}

Dataset load_csv(const std::filesystem::path& path,
                 const std::string& label_column, const CsvOptions& options) {
  const std::string text = io::read_file(path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) {
    throw FormatError(path.string() + ": empty file");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> header = split_csv_line(line);
  for (auto& h : header) h = trim(h);
  if (!header.empty() && header[0].rfind("\xEF\xBB\xBF", 0) == 0) {
    header[0].erase(0, 3);
  }

  std::optional<std::size_t> label_idx, split_idx;
  std::vector<std::size_t> feature_idx;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == label_column) {
      label_idx = i;
    } else if (!options.split_column.empty() &&
               header[i] == options.split_column) {
      split_idx = i;
    } else {
      feature_idx.push_back(i);
    }
  }
  if (!label_idx) {
    throw ConfigError(path.string() + ": label column '" + label_column +
                      "' not in header");
  }
  if (feature_idx.empty()) {
    throw FormatError(path.string() + ": no feature columns");
  }

  struct Row {
    std::vector<double> features;
    std::string label;
    std::optional<bool> is_train;
  };
  std::vector<Row> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) +
                        ": expected " + std::to_string(header.size()) +
                        " fields, got " + std::to_string(fields.size()));
    }
    Row row;
    for (std::size_t idx : feature_idx) {
      auto value = parse_double(trim(fields[idx]));
      if (!value || !std::isfinite(*value)) {
        throw FormatError(path.string() + ":" + std::to_string(line_no) +
                          ": column '" + header[idx] + "' is not a finite number");
      }
      row.features.push_back(*value);
    }
    row.label = trim(fields[*label_idx]);
    if (row.label.empty()) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) +
                        ": empty label");
    }
    if (split_idx) {
      const std::string tag = trim(fields[*split_idx]);
      if (tag == "train") {
        row.is_train = true;
      } else if (tag == "test") {
        row.is_train = false;
      } else {
        throw FormatError(path.string() + ":" + std::to_string(line_no) +
                          ": split must be 'train' or 'test', got '" + tag + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) {
    throw FormatError(path.string() + ": dataset has a header but no rows");
  }

  // Label coding.
  bool all_int = std::all_of(rows.begin(), rows.end(), [](const Row& r) {
    return parse_int(r.label).has_value();
  });
  std::map<std::string, int> string_codes;
  std::set<long long> int_labels;
  if (all_int) {
    for (const Row& r : rows) int_labels.insert(*parse_int(r.label));
    if (*int_labels.begin() < 0) {
      throw FormatError(path.string() + ": negative integer label");
    }
  } else {
    std::set<std::string> distinct;
    for (const Row& r : rows) distinct.insert(r.label);
    int code = 0;
    for (const auto& s : distinct) string_codes[s] = code++;
  }
  auto code_of = [&](const std::string& label) {
    return all_int ? static_cast<int>(*parse_int(label)) : string_codes.at(label);
  };
  const std::size_t num_classes =
      all_int ? static_cast<std::size_t>(*int_labels.rbegin()) + 1
              : string_codes.size();
  if (num_classes < 2) throw FormatError(path.string() + ": need >= 2 classes");

  const std::size_t d = feature_idx.size();
  Dataset ds;
  ds.num_classes = num_classes;
  ds.dim = d;
  ds.provenance = "csv(" + path.string() + ")";
  std::vector<double> train, test;
  std::vector<std::size_t> seen(num_classes, 0), totals(num_classes, 0);
  for (const Row& r : rows) ++totals[static_cast<std::size_t>(code_of(r.label))];
  for (const Row& r : rows) {
    const int code = code_of(r.label);
    const auto c = static_cast<std::size_t>(code);
    bool is_train = r.is_train ? *r.is_train
                               : seen[c]++ < train_count(std::max<std::size_t>(totals[c], 2));
    auto& dst = is_train ? train : test;
    dst.insert(dst.end(), r.features.begin(), r.features.end());
    (is_train ? ds.train_y : ds.test_y).push_back(code);
  }
  if (ds.train_y.empty() || ds.test_y.empty()) {
    throw FormatError(path.string() + ": both train and test splits need rows");
  }
  for (std::size_t c = 0; c < num_classes; ++c) {
    auto present = [c](const std::vector<int>& ys) {
      return std::find(ys.begin(), ys.end(), static_cast<int>(c)) != ys.end();
    };
    if (!present(ds.train_y) || !present(ds.test_y)) {
      throw FormatError(path.string() + ": class " + std::to_string(c) +
                        " missing from a split");
    }
  }
  ds.train_x = Tensor({ds.train_y.size(), d}, std::move(train));
  ds.test_x = Tensor({ds.test_y.size(), d}, std::move(test));
  if (options.standardize) standardize(ds);
  return ds;
}

void write_csv(const Dataset& dataset, const std::filesystem::path& path) {
  std::ostringstream out;
  out.precision(17);
  for (std::size_t j = 0; j < dataset.dim; ++j) out << 'f' << j << ',';
  out << "label,split\n";
  const bool standardized = !dataset.feature_mean.empty();
  auto emit = [&](const Tensor& x, const std::vector<int>& y, const char* tag) {
    for (std::size_t i = 0; i < y.size(); ++i) {
      for (std::size_t j = 0; j < dataset.dim; ++j) {
        double v = x.at(i, j);
        if (standardized) v = v * dataset.feature_std[j] + dataset.feature_mean[j];
        out << v << ',';
      }
      out << y[i] << ',' << tag << '\n';
    }
  };
  emit(dataset.train_x, dataset.train_y, "train");
  emit(dataset.test_x, dataset.test_y, "test");
  io::write_file_atomic(path, out.str());
}

NoiseBatch sample_noise_and_labels(SeededRng& rng, std::size_t batch,
                                   std::size_t noise_dim,
                                   std::size_t num_classes) {
  if (batch == 0 || noise_dim == 0 || num_classes < 2) {
    throw ContractError("sample_noise_and_labels: invalid dimensions");
  }
  NoiseBatch out;
  out.label_ids.resize(batch);
  std::vector<double> y(batch * num_classes, 0.0);
  for (std::size_t i = 0; i < batch; ++i) {
    const std::size_t c = rng.uniform_index(num_classes);
    out.label_ids[i] = static_cast<int>(c);
    y[i * num_classes + c] = 1.0;
  }
  std::vector<double> z(batch * noise_dim);
  for (double& v : z) v = rng.normal();
  out.noise = Tensor({batch, noise_dim}, std::move(z));
  out.labels = Tensor({batch, num_classes}, std::move(y));
  return out;
}

}  // namespace adadfq
