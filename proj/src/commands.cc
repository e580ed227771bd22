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

#include "adadfq/commands.h"

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "adadfq/adaptability.h"
#include "adadfq/checkpoint.h"
#include "adadfq/errors.h"
#include "adadfq/io.h"
#include "adadfq/student.h"
#include "json.hpp"

namespace adadfq {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Generator initialization draws from this substream of the init stream; the
// teacher uses the init stream itself.
constexpr std::uint64_t kGeneratorInitKey = 7;

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

fs::path prepare_out_dir(const RunConfig& config) {
  fs::path dir(config.out_dir);
  fs::create_directories(dir);
  return dir;
}

CheckpointMetadata metadata(const RunConfig& config, std::size_t epoch,
                            const std::string& role) {
  CheckpointMetadata meta;
  meta.seed = config.seed;
  meta.epoch = epoch;
  meta.config_hash = config_hash(config);
  meta.role = role;
  return meta;
}

void write_json(const fs::path& path, const json& j) {
  io::write_file_atomic(path, j.dump(2) + "\n");
}

void check_dataset_matches(const MlpNetwork& net, const Dataset& ds) {
  if (net.output_dim() != ds.num_classes) {
    throw ConfigError("class-count mismatch: checkpoint has " +
                      std::to_string(net.output_dim()) + " classes, dataset has " +
                      std::to_string(ds.num_classes));
  }
  if (net.input_dim() != ds.dim) {
    throw ConfigError("input-dimension mismatch: checkpoint expects " +
                      std::to_string(net.input_dim()) + " features, dataset has " +
                      std::to_string(ds.dim));
  }
}

double mean_margin_fraction(std::span<const TraceRow> rows) {
  if (rows.empty()) return 0.0;
  double total = 0.0;
  for (const TraceRow& r : rows) total += r.hprime_in_margin;
  return total / static_cast<double>(rows.size());
}

}  // namespace

Dataset load_dataset(const RunConfig& config) {
  if (config.dataset == "blobs") {
    return make_blobs(config.num_classes, config.per_class, config.input_dim,
                      config.spread, config.seed);
  }
  if (config.dataset == "rings") {
    return make_rings(config.num_classes, config.per_class, config.seed);
  }
  if (config.dataset_path.empty()) throw ConfigError("dataset = csv needs dataset_path");
  if (!fs::exists(config.dataset_path)) {
    throw ConfigError("dataset file not found: " + config.dataset_path);
  }
  Dataset ds = load_csv(config.dataset_path, config.label_column);
  for (const std::string& w : ds.warnings) spdlog::warn("{}", w);
  return ds;
}

MlpNetwork train_teacher_network(const Dataset& ds, const RunConfig& config,
                                 double* final_loss) {
  SeededRng init = SeededRng(config.seed).substream(Stream::kInit);
  MlpNetwork teacher = MlpNetwork::make(ds.dim, config.hidden, ds.num_classes, init);
  TrainOptions opts;
  opts.epochs = config.teacher_epochs;
  opts.batch_size = config.teacher_batch_size;
  opts.lr = config.teacher_lr;
  opts.seed = config.seed;
  const double loss = train_classifier(teacher, ds.train_x, ds.train_y, opts);
  if (final_loss) *final_loss = loss;
  return teacher;
}

ConditionalGenerator make_generator(const RunConfig& config, std::size_t num_classes,
                                    std::size_t output_dim) {
  SeededRng init =
      SeededRng(config.seed).substream(Stream::kInit).substream(kGeneratorInitKey);
  return ConditionalGenerator::make(num_classes, config.gen_noise_dim,
                                    config.gen_embed_dim, config.gen_hidden, output_dim,
                                    init);
}

TeacherResult cmd_train_teacher(const RunConfig& config) {
  Dataset ds = load_dataset(config);
  const fs::path out = prepare_out_dir(config);
  spdlog::info("training teacher on {} ({} train / {} test)", ds.provenance,
               ds.train_y.size(), ds.test_y.size());

  TeacherResult result;
  MlpNetwork teacher = train_teacher_network(ds, config, &result.final_loss);
  result.train_accuracy = accuracy(teacher, ds.train_x, ds.train_y);
  result.test_accuracy = accuracy(teacher, ds.test_x, ds.test_y);
  spdlog::info("teacher train acc {:.4f}, test acc {:.4f}", result.train_accuracy,
               result.test_accuracy);

  save_network(out / kTeacherCkpt, teacher,
               metadata(config, config.teacher_epochs, "teacher"));
  write_json(out / kTeacherMetrics,
             {{"train_accuracy", result.train_accuracy},
              {"test_accuracy", result.test_accuracy},
              {"final_train_loss", result.final_loss},
              {"epochs", config.teacher_epochs},
              {"dataset", ds.provenance},
              {"warnings", ds.warnings},
              {"seed", config.seed},
              {"config_hash", config_hash(config)}});
  io::write_file_atomic(out / kResolvedConfig, serialize_config(config));
  return result;
}

QuantizeResult cmd_quantize(const RunConfig& config, const fs::path& teacher_ckpt) {
  config.quant.validate();
  MlpNetwork teacher = load_network(teacher_ckpt);
  Dataset ds = load_dataset(config);
  check_dataset_matches(teacher, ds);
  const fs::path out = prepare_out_dir(config);

  MlpNetwork student = build_quantized_student(teacher, config.quant);
  QuantizeResult result;
  result.bits = config.quant.bits;
  result.teacher_accuracy = accuracy(teacher, ds.test_x, ds.test_y);
  result.student_accuracy = accuracy(student, ds.test_x, ds.test_y);
  spdlog::info("{}-bit naive student test acc {:.4f} (teacher {:.4f})", result.bits,
               result.student_accuracy, result.teacher_accuracy);

  save_network(out / kNaiveStudentCkpt, student, metadata(config, 0, "student_naive"));
  write_json(out / kQuantizeReport,
             {{"bits", result.bits},
              {"teacher_test_accuracy", result.teacher_accuracy},
              {"student_test_accuracy", result.student_accuracy},
              {"accuracy_drop", result.teacher_accuracy - result.student_accuracy},
              {"dataset", ds.provenance}});
  return result;
}

DfqResult cmd_dfq(const RunConfig& config, const fs::path& teacher_ckpt) {
  config.game.validate();
  MlpNetwork teacher = load_network(teacher_ckpt);
  const fs::path out = prepare_out_dir(config);
  io::write_file_atomic(out / kResolvedConfig, serialize_config(config));

  const std::size_t classes = teacher.output_dim();
  MlpNetwork student = build_quantized_student(teacher, config.quant);
  ConditionalGenerator generator = make_generator(config, classes, teacher.input_dim());

  // Rows are appended as they are produced so a long run can be watched; the
  // file takes its final name only when the run completes.
  const fs::path trace_path = out / kTraceCsv;
  const fs::path partial = fs::path(trace_path.string() + ".partial");
  std::ofstream trace_file(partial, std::ios::binary | std::ios::trunc);
  if (!trace_file) throw std::runtime_error("cannot write file: " + partial.string());
  trace_file << kTraceCsvHeader << '\n';
  const std::size_t per_epoch = config.game.iterations_per_epoch;
  double epoch_gen = 0.0, epoch_cal = 0.0;
  auto on_row = [&](const TraceRow& row) {
    trace_file << trace_csv_row(row) << '\n';
    epoch_gen += row.loss_gen;
    epoch_cal += row.loss_cal;
    if ((row.iter + 1) % per_epoch == 0) {
      trace_file.flush();
      spdlog::info("epoch {}/{}: loss_gen {:.5f} loss_cal {:.5f}", row.epoch + 1,
                   config.game.epochs, epoch_gen / per_epoch, epoch_cal / per_epoch);
      epoch_gen = epoch_cal = 0.0;
    }
  };

  DfqResult result;
  try {
    result.trace = run_game(generator, teacher, student, config.game, on_row);
  } catch (const NumericError&) {
    trace_file.close();
    save_network(out / "student_snapshot.ckpt", student, metadata(config, 0, "snapshot"));
    save_generator(out / "generator_snapshot.ckpt", generator,
                   metadata(config, 0, "snapshot"));
    spdlog::error("non-finite loss; snapshots written to {}", out.string());
    throw;
  }
  trace_file.close();
  if (!trace_file) throw std::runtime_error("cannot write file: " + partial.string());
  fs::rename(partial, trace_path);

  set_activation_ranges_frozen(student, true);
  save_network(out / kStudentCkpt, student,
               metadata(config, config.game.epochs, "student"));
  save_generator(out / kGeneratorCkpt, generator,
                 metadata(config, config.game.epochs, "generator"));

  const std::size_t quarter = std::max<std::size_t>(1, result.trace.size() / 4);
  std::span<const TraceRow> rows(result.trace);
  result.equilibrium = equilibrium_report(rows, quarter);
  result.margin_fraction_first_quarter = mean_margin_fraction(rows.first(quarter));
  result.margin_fraction_last_quarter = mean_margin_fraction(rows.last(quarter));
  json eq = json::parse(equilibrium_json(result.equilibrium));
  eq["margin_fraction_first_quarter"] = result.margin_fraction_first_quarter;
  eq["margin_fraction_last_quarter"] = result.margin_fraction_last_quarter;
  write_json(out / kEquilibriumJson, eq);

  // Sample dump and its p_ds similarity matrix.
  SeededRng dump_rng = SeededRng(config.seed).substream(Stream::kNoise).substream(3);
  NoiseBatch batch = sample_noise_and_labels(dump_rng, config.sample_dump_size,
                                             config.gen_noise_dim, classes);
  SampleDump dump;
  dump.labels = batch.label_ids;
  {
    NoGradGuard no_grad;
    ForwardOptions fo;
    fo.update_statistics = false;
    dump.x = generator.generate(batch.noise, batch.labels, fo);
    teacher.set_mode(Mode::kEval);
    student.set_mode(Mode::kEval);
    Tensor z_p = teacher.forward(dump.x, fo);
    Tensor z_q = student.forward(dump.x, fo);
    io::write_file_atomic(out / kSimilarityCsv, similarity_csv(pds_similarity(z_p, z_q)));
  }
  io::write_file_atomic(out / kSamplesCsv, samples_csv(dump));
  spdlog::info("equilibrium {}: mean(dG+dQ) {:.3g}, mean|dG| {:.3g}",
               result.equilibrium.equilibrium ? "reached" : "not reached",
               result.equilibrium.mean_delta_sum, result.equilibrium.mean_abs_delta_g);
  return result;
}

EvalResult cmd_eval(const RunConfig& config, const fs::path& ckpt) {
  MlpNetwork net = load_network(ckpt);
  Dataset ds = load_dataset(config);
  check_dataset_matches(net, ds);
  const fs::path out = prepare_out_dir(config);

  const std::size_t c = ds.num_classes;
  EvalResult result;
  result.samples = ds.test_y.size();
  result.confusion.assign(c, std::vector<std::size_t>(c, 0));
  const std::vector<int> pred = predict(net, ds.test_x);
  for (std::size_t i = 0; i < pred.size(); ++i) ++result.confusion[ds.test_y[i]][pred[i]];
  result.accuracy = accuracy(net, ds.test_x, ds.test_y);
  result.per_class_accuracy.assign(c, 0.0);
  for (std::size_t k = 0; k < c; ++k) {
    std::size_t total = 0;
    for (std::size_t j = 0; j < c; ++j) total += result.confusion[k][j];
    result.per_class_accuracy[k] =
        total == 0 ? 0.0 : static_cast<double>(result.confusion[k][k]) / total;
  }
  io::write_file_atomic(out / kEvalJson, eval_json(result));
  return result;
}

std::vector<std::vector<double>> cmd_report_similarity(const fs::path& sample_dump,
                                                       const fs::path& teacher_ckpt,
                                                       const fs::path& student_ckpt,
                                                       const fs::path& out_csv) {
  SampleDump dump = parse_samples_csv(io::read_file(sample_dump));
  MlpNetwork teacher = load_network(teacher_ckpt);
  MlpNetwork student = load_network(student_ckpt);
  for (const MlpNetwork* net : {&teacher, &student}) {
    if (net->input_dim() != dump.x.cols()) {
      throw DimensionError("sample dump has " + std::to_string(dump.x.cols()) +
                           " features, network expects " +
                           std::to_string(net->input_dim()));
    }
  }
  if (teacher.output_dim() != student.output_dim()) {
    throw DimensionError("teacher and student disagree on the number of classes");
  }
  for (int label : dump.labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= teacher.output_dim()) {
      throw DimensionError("sample label " + std::to_string(label) +
                           " is outside the networks' classes");
    }
  }
  NoGradGuard no_grad;
  ForwardOptions fo;
  fo.update_statistics = false;
  teacher.set_mode(Mode::kEval);
  student.set_mode(Mode::kEval);
  auto matrix = pds_similarity(teacher.forward(dump.x, fo), student.forward(dump.x, fo));
  if (out_csv.has_parent_path()) fs::create_directories(out_csv.parent_path());
  io::write_file_atomic(out_csv, similarity_csv(matrix));
  return matrix;
}

std::vector<std::vector<double>> pds_similarity(const Tensor& z_p, const Tensor& z_q) {
  NoGradGuard no_grad;
  const Tensor p = disagreement_vector(z_p, z_q);
  const std::size_t n = p.rows(), c = p.cols();
  const auto v = p.data();
  std::vector<std::vector<double>> m(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double d = 0.0;
      for (std::size_t k = 0; k < c; ++k) d += std::fabs(v[i * c + k] - v[j * c + k]);
      m[i][j] = m[j][i] = d;
    }
  }
  return m;
}

std::string similarity_csv(const std::vector<std::vector<double>>& matrix) {
  std::string out = "sample";
  for (std::size_t j = 0; j < matrix.size(); ++j) out += "," + std::to_string(j);
  out += '\n';
  for (std::size_t i = 0; i < matrix.size(); ++i) {
    out += std::to_string(i);
    for (double v : matrix[i]) out += "," + format_double(v);
    out += '\n';
  }
  return out;
}

std::string samples_csv(const SampleDump& dump) {
  const std::size_t d = dump.x.cols();
  std::string out = "sample,label";
  for (std::size_t j = 0; j < d; ++j) out += ",x" + std::to_string(j);
  out += '\n';
  const auto v = dump.x.data();
  for (std::size_t i = 0; i < dump.labels.size(); ++i) {
    out += std::to_string(i) + "," + std::to_string(dump.labels[i]);
    for (std::size_t j = 0; j < d; ++j) out += "," + format_double(v[i * d + j]);
    out += '\n';
  }
  return out;
}

SampleDump parse_samples_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("sample,label", 0) != 0) {
    throw FormatError("sample dump: expected header 'sample,label,x0,...'");
  }
  const std::size_t d = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) - 1;
  SampleDump dump;
  std::vector<double> values;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string_view> cells;
    std::string_view rest(line);
    for (;;) {
      const auto comma = rest.find(',');
      cells.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    auto fail = [&](const std::string& what) -> void {
      throw FormatError("sample dump line " + std::to_string(line_no) + ": " + what);
    };
    if (cells.size() != d + 2) fail("expected " + std::to_string(d + 2) + " fields");
    if (cells[0] != std::to_string(dump.labels.size())) fail("samples out of order");
    int label = 0;
    auto [lp, lec] = std::from_chars(cells[1].data(), cells[1].data() + cells[1].size(), label);
    if (lec != std::errc() || lp != cells[1].data() + cells[1].size()) fail("bad label");
    dump.labels.push_back(label);
    for (std::size_t j = 0; j < d; ++j) {
      const std::string_view cell = cells[j + 2];
      double x = 0.0;
      auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), x);
      if (ec != std::errc() || p != cell.data() + cell.size()) fail("bad value");
      values.push_back(x);
    }
  }
  if (dump.labels.empty()) throw FormatError("sample dump has no rows");
  dump.x = Tensor({dump.labels.size(), d}, std::move(values));
  return dump;
}

std::string eval_json(const EvalResult& result) {
  json j = {{"accuracy", result.accuracy},
            {"per_class_accuracy", result.per_class_accuracy},
            {"confusion", result.confusion},
            {"samples", result.samples},
            {"num_classes", result.per_class_accuracy.size()}};
  return j.dump(2) + "\n";
}

namespace {

void configure_logging() {
  auto logger = spdlog::get("adadfq");
  if (!logger) logger = spdlog::stderr_logger_mt("adadfq");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::level::level_enum level = spdlog::level::info;
  if (const char* env = std::getenv("ADADFQ_LOG"); env != nullptr && *env != '\0') {
    const std::string name(env);
    static const char* kNames[] = {"trace", "debug", "info", "warn",
                                   "warning", "error", "critical", "off"};
    if (std::find(std::begin(kNames), std::end(kNames), name) == std::end(kNames)) {
      throw ConfigError("ADADFQ_LOG must be one of trace, debug, info, warn, error, "
                        "critical, off; got '" + name + "'");
    }
    level = spdlog::level::from_str(name);
  }
  spdlog::set_level(level);
}

struct CliOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> bits;
  std::string out_dir;
  std::string ckpt;
  std::string dataset;
  std::string student;
  std::string dump;
};

RunConfig resolve_config(const CliOptions& o) {
  RunConfig config = o.config.empty() ? RunConfig{} : load_config(o.config);
  if (o.seed) config.seed = *o.seed;
  if (o.bits) config.quant.bits = *o.bits;
  if (!o.out_dir.empty()) config.out_dir = o.out_dir;
  if (!o.dataset.empty()) {
    config.dataset = "csv";
    config.dataset_path = o.dataset;
  }
  config.validate();
  return config;
}

fs::path or_default(const std::string& given, const RunConfig& config, const char* name) {
  return given.empty() ? fs::path(config.out_dir) / name : fs::path(given);
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Data-free quantization with adaptability-driven sample generation"};
  app.require_subcommand(1);
  CliOptions o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "key = value config file");
    sub->add_option("--seed", o.seed, "override the config seed");
    sub->add_option("--out-dir", o.out_dir, "directory for outputs");
  };
  auto* train = app.add_subcommand("train-teacher", "train the full-precision network");
  add_common(train);
  train->add_option("--dataset", o.dataset, "CSV dataset (overrides the config)");

  auto* quantize = app.add_subcommand("quantize", "naive post-training quantization");
  add_common(quantize);
  quantize->add_option("--ckpt", o.ckpt, "teacher checkpoint");
  quantize->add_option("--bits", o.bits, "bit width");
  quantize->add_option("--dataset", o.dataset, "CSV dataset (overrides the config)");

  auto* dfq = app.add_subcommand("dfq", "data-free calibration game");
  add_common(dfq);
  dfq->add_option("--ckpt", o.ckpt, "teacher checkpoint");
  dfq->add_option("--bits", o.bits, "bit width");

  auto* eval = app.add_subcommand("eval", "test-split accuracy of a checkpoint");
  add_common(eval);
  eval->add_option("--ckpt", o.ckpt, "checkpoint to evaluate");
  eval->add_option("--dataset", o.dataset, "CSV dataset (overrides the config)");

  auto* sim = app.add_subcommand("report-similarity", "p_ds l1 matrix of a sample dump");
  add_common(sim);
  sim->add_option("--ckpt", o.ckpt, "teacher checkpoint");
  sim->add_option("--student", o.student, "student checkpoint");
  sim->add_option("--dump", o.dump, "samples CSV written by dfq");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    configure_logging();
    const RunConfig config = resolve_config(o);
    if (*train) {
      const TeacherResult r = cmd_train_teacher(config);
      std::cout << "teacher test accuracy " << format_double(r.test_accuracy) << "\n";
    } else if (*quantize) {
      const QuantizeResult r =
          cmd_quantize(config, or_default(o.ckpt, config, kTeacherCkpt));
      std::cout << r.bits << "-bit student test accuracy "
                << format_double(r.student_accuracy) << " (teacher "
                << format_double(r.teacher_accuracy) << ")\n";
    } else if (*dfq) {
      const DfqResult r = cmd_dfq(config, or_default(o.ckpt, config, kTeacherCkpt));
      std::cout << "iterations " << r.trace.size() << ", equilibrium "
                << (r.equilibrium.equilibrium ? "true" : "false") << "\n";
    } else if (*eval) {
      const EvalResult r = cmd_eval(config, or_default(o.ckpt, config, kTeacherCkpt));
      std::cout << eval_json(r);
    } else if (*sim) {
      const fs::path out = fs::path(config.out_dir) / kSimilarityCsv;
      const auto m = cmd_report_similarity(or_default(o.dump, config, kSamplesCsv),
                                           or_default(o.ckpt, config, kTeacherCkpt),
                                           or_default(o.student, config, kStudentCkpt),
                                           out);
      std::cout << "wrote " << m.size() << "x" << m.size() << " matrix to "
                << out.string() << "\n";
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}

}  // namespace adadfq
