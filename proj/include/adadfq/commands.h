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

#ifndef ADADFQ_COMMANDS_H_
#define ADADFQ_COMMANDS_H_

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "adadfq/config.h"
#include "adadfq/data.h"
#include "adadfq/game.h"
#include "adadfq/nn.h"

namespace adadfq {

// Output file names inside RunConfig::out_dir.
inline constexpr const char* kTeacherCkpt = "teacher.ckpt";
inline constexpr const char* kTeacherMetrics = "teacher_metrics.json";
inline constexpr const char* kNaiveStudentCkpt = "student_naive.ckpt";
inline constexpr const char* kQuantizeReport = "quantize.json";
inline constexpr const char* kStudentCkpt = "student.ckpt";
inline constexpr const char* kGeneratorCkpt = "generator.ckpt";
inline constexpr const char* kTraceCsv = "trace.csv";
inline constexpr const char* kEquilibriumJson = "equilibrium.json";
inline constexpr const char* kSimilarityCsv = "similarity.csv";
inline constexpr const char* kSamplesCsv = "samples.csv";
inline constexpr const char* kEvalJson = "eval.json";
inline constexpr const char* kResolvedConfig = "config.resolved";

// Builds the dataset named by the config. A csv path that does not exist is
// a ConfigError naming the path.
Dataset load_dataset(const RunConfig& config);

// The teacher recipe used by train-teacher: MLP input -> hidden -> C, Adam on
// cross-entropy with the config's teacher settings.
MlpNetwork train_teacher_network(const Dataset& ds, const RunConfig& config,
                                 double* final_loss = nullptr);

// The generator initialization used by dfq.
ConditionalGenerator make_generator(const RunConfig& config, std::size_t num_classes,
                                    std::size_t output_dim);

struct TeacherResult {
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double final_loss = 0.0;
};

struct QuantizeResult {
  int bits = 0;
  double teacher_accuracy = 0.0;
  double student_accuracy = 0.0;
};

struct DfqResult {
  GameTrace trace;
  EquilibriumReport equilibrium;
  double margin_fraction_first_quarter = 0.0;
  double margin_fraction_last_quarter = 0.0;
};

struct EvalResult {
  double accuracy = 0.0;
  std::vector<double> per_class_accuracy;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  std::size_t samples = 0;
};

// Each command writes its artifacts into config.out_dir (created if absent)
// and returns the headline numbers.
TeacherResult cmd_train_teacher(const RunConfig& config);
QuantizeResult cmd_quantize(const RunConfig& config,
                            const std::filesystem::path& teacher_ckpt);
// Reads only the teacher checkpoint; the dataset is never opened.
DfqResult cmd_dfq(const RunConfig& config, const std::filesystem::path& teacher_ckpt);
EvalResult cmd_eval(const RunConfig& config, const std::filesystem::path& ckpt);
// Rewrites the similarity matrix for a sample dump written by cmd_dfq.
std::vector<std::vector<double>> cmd_report_similarity(
    const std::filesystem::path& sample_dump, const std::filesystem::path& teacher_ckpt,
    const std::filesystem::path& student_ckpt, const std::filesystem::path& out_csv);

// Pairwise l1 distances between the rows of p_ds = softmax(z_p - z_q).
std::vector<std::vector<double>> pds_similarity(const Tensor& z_p, const Tensor& z_q);
std::string similarity_csv(const std::vector<std::vector<double>>& matrix);

struct SampleDump {
  std::vector<int> labels;
  Tensor x;  // [n x d]
};
std::string samples_csv(const SampleDump& dump);
SampleDump parse_samples_csv(const std::string& text);

std::string eval_json(const EvalResult& result);

// Parses argv, runs one subcommand and returns the process exit code:
// 0 success, 2 usage or configuration error, 3 runtime or numeric error.
int run_cli(int argc, const char* const* argv);

}  // namespace adadfq

#endif  // ADADFQ_COMMANDS_H_
