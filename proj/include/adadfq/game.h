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

#ifndef ADADFQ_GAME_H_
#define ADADFQ_GAME_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adadfq/adaptability.h"
#include "adadfq/nn.h"
#include "adadfq/rng.h"

namespace adadfq {

struct GameConfig {
  std::size_t epochs = 400;
  std::size_t iterations_per_epoch = 50;
  std::size_t batch_size = 16;

  double gen_lr = 1e-3;
  double gen_beta1 = 0.9;
  double gen_beta2 = 0.999;

  double cal_lr = 1e-4;
  double cal_momentum = 0.9;
  double cal_weight_decay = 1e-4;
  bool cal_nesterov = true;
  // Weight of an auxiliary cross-entropy between Q's logits and the
  // conditioning label. 0 keeps the calibration loss at mean(1 - h').
  double calibration_ce_weight = 0.0;

  GameHyperparams hp;
  std::uint64_t seed = 0;
  int bits = 3;

  void validate() const;
};

// One row per game iteration. H values are batch means of the unnormalized
// disagreement entropy in nats.
struct TraceRow {
  std::size_t iter = 0;
  std::size_t epoch = 0;
  double loss_gen = 0.0;  // negated generator objective (minimized)
  double loss_cal = 0.0;
  double h_info_pre_g = 0.0;
  double h_info_post_g = 0.0;
  double delta_g = 0.0;
  double h_info_pre_q = 0.0;
  double h_info_post_q = 0.0;
  double delta_q = 0.0;
  std::size_t n_disagree = 0;
  std::size_t n_agree = 0;
  std::size_t n_teacher_wrong = 0;
  double hprime_min = 0.0;
  double hprime_mean = 0.0;
  double hprime_max = 0.0;
  // Fraction of the generator batch with lambda_l <= h' <= lambda_u. Not part
  // of the CSV schema.
  double hprime_in_margin = 0.0;
};

using GameTrace = std::vector<TraceRow>;

inline constexpr const char* kTraceCsvHeader =
    "iter,epoch,loss_gen,loss_cal,h_info_pre_g,h_info_post_g,delta_g,"
    "h_info_pre_q,h_info_post_q,delta_q,n_disagree,n_agree,n_teacher_wrong,"
    "hprime_min,hprime_mean,hprime_max";

std::string trace_csv_row(const TraceRow& row);
GameTrace parse_trace_csv(const std::string& text);

// Alternating generator / calibration optimization. The game borrows the
// three networks; P is never modified.
class ZeroSumGame {
 public:
  ZeroSumGame(ConditionalGenerator& generator, MlpNetwork& teacher,
              MlpNetwork& student, const GameConfig& config);

  // One full iteration: generator half-step on a fresh batch, then a
  // calibration half-step on another fresh batch.
  TraceRow step();

  std::size_t iterations_done() const { return iteration_; }
  const GameConfig& config() const { return config_; }

 private:
  void generator_half_step(TraceRow& row);
  void calibration_half_step(TraceRow& row);
  Tensor student_logits(const Tensor& x, bool update);
  Tensor teacher_logits(const Tensor& x, std::vector<Tensor>* bn_inputs);

  ConditionalGenerator& generator_;
  MlpNetwork& teacher_;
  MlpNetwork& student_;
  GameConfig config_;
  std::vector<BnReference> references_;
  std::unique_ptr<AdamOptimizer> gen_opt_;
  std::unique_ptr<SgdMomentum> cal_opt_;
  SeededRng gen_rng_;
  SeededRng cal_rng_;
  std::size_t iteration_ = 0;
};

using TraceCallback = std::function<void(const TraceRow&)>;

// Runs epochs x iterations_per_epoch steps. `on_row` sees each row as it is
// produced.
GameTrace run_game(ConditionalGenerator& generator, MlpNetwork& teacher,
                   MlpNetwork& student, const GameConfig& config,
                   const TraceCallback& on_row = {});

struct EquilibriumReport {
  std::size_t window = 0;
  std::size_t first_iter = 0;
  double mean_delta_g = 0.0;
  double mean_delta_q = 0.0;
  double mean_delta_sum = 0.0;
  double mean_abs_delta_g = 0.0;
  double sum_delta_g = 0.0;
  double sum_delta_q = 0.0;
  double hprime_min = 0.0;
  double hprime_mean = 0.0;
  double hprime_max = 0.0;
  double mean_loss_gen = 0.0;
  double mean_loss_cal = 0.0;
  // |mean(dG + dQ)| < 0.25 * mean(|dG|)
  bool equilibrium = false;
  // Calibration loss stays >= 0.5 and the two halves of the window differ by
  // at most 1%.
  bool underfit = false;
  // Generator loss fell to <= 10% of its level in the first window while the
  // supplied held-out accuracy series declines. False without a series.
  bool overfit = false;
};

// Summarizes the last `window` rows. `heldout_accuracy`, when non-empty, is
// a series of accuracies sampled over the run in order.
EquilibriumReport equilibrium_report(std::span<const TraceRow> trace,
                                     std::size_t window,
                                     std::span<const double> heldout_accuracy = {});

std::string equilibrium_json(const EquilibriumReport& report);

}  // namespace adadfq

#endif  // ADADFQ_GAME_H_
