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

#include "adadfq/game.h"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "adadfq/data.h"
#include "adadfq/errors.h"
#include "json.hpp"

namespace adadfq {

namespace {

double batch_mean(const Tensor& t) {
  auto d = t.data();
  return std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void GameConfig::validate() const {
  if (epochs == 0 || iterations_per_epoch == 0) {
    throw ConfigError("epochs and iterations_per_epoch must be positive");
  }
  if (batch_size < 2) {
    throw ConfigError("batch_size must be >= 2 (batch statistics need it)");
  }
  if (gen_lr < 0 || cal_lr < 0) throw ConfigError("learning rates must be >= 0");
  if (!(gen_beta1 >= 0 && gen_beta1 < 1 && gen_beta2 >= 0 && gen_beta2 < 1)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(cal_momentum >= 0 && cal_momentum < 1)) {
    throw ConfigError("calibration momentum must lie in [0, 1)");
  }
  if (cal_weight_decay < 0 || calibration_ce_weight < 0) {
    throw ConfigError("weight decay and CE weight must be >= 0");
  }
  QuantSpec spec;
  spec.bits = bits;
  spec.validate();
  hp.validate();
}

std::string trace_csv_row(const TraceRow& r) {
  std::ostringstream out;
  out << r.iter << ',' << r.epoch << ',' << fmt_double(r.loss_gen) << ','
      << fmt_double(r.loss_cal) << ',' << fmt_double(r.h_info_pre_g) << ','
      << fmt_double(r.h_info_post_g) << ',' << fmt_double(r.delta_g) << ','
      << fmt_double(r.h_info_pre_q) << ',' << fmt_double(r.h_info_post_q) << ','
      << fmt_double(r.delta_q) << ',' << r.n_disagree << ',' << r.n_agree << ','
      << r.n_teacher_wrong << ',' << fmt_double(r.hprime_min) << ','
      << fmt_double(r.hprime_mean) << ',' << fmt_double(r.hprime_max);
  return out.str();
}

GameTrace parse_trace_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kTraceCsvHeader) {
    throw FormatError("trace CSV: unexpected header");
  }
  GameTrace trace;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::string field;
    std::istringstream fields(line);
    while (std::getline(fields, field, ',')) f.push_back(field);
    if (f.size() != 16) {
      throw FormatError("trace CSV line " + std::to_string(line_no) +
                        ": expected 16 fields");
    }
    try {
      TraceRow r;
      r.iter = std::stoull(f[0]);
      r.epoch = std::stoull(f[1]);
      r.loss_gen = std::stod(f[2]);
      r.loss_cal = std::stod(f[3]);
      r.h_info_pre_g = std::stod(f[4]);
      r.h_info_post_g = std::stod(f[5]);
      r.delta_g = std::stod(f[6]);
      r.h_info_pre_q = std::stod(f[7]);
      r.h_info_post_q = std::stod(f[8]);
      r.delta_q = std::stod(f[9]);
      r.n_disagree = std::stoull(f[10]);
      r.n_agree = std::stoull(f[11]);
      r.n_teacher_wrong = std::stoull(f[12]);
      r.hprime_min = std::stod(f[13]);
      r.hprime_mean = std::stod(f[14]);
      r.hprime_max = std::stod(f[15]);
      trace.push_back(r);
    } catch (const std::logic_error&) {
      throw FormatError("trace CSV line " + std::to_string(line_no) +
                        ": malformed number");
    }
  }
  return trace;
}

ZeroSumGame::ZeroSumGame(ConditionalGenerator& generator, MlpNetwork& teacher,
                         MlpNetwork& student, const GameConfig& config)
    : generator_(generator),
      teacher_(teacher),
      student_(student),
      config_(config),
      gen_rng_(SeededRng(config.seed).substream(Stream::kNoise).substream(1)),
      cal_rng_(SeededRng(config.seed).substream(Stream::kNoise).substream(2)) {
  config_.validate();
  if (generator_.output_dim() != teacher_.input_dim()) {
    throw DimensionError("generator emits " +
                         std::to_string(generator_.output_dim()) +
                         " features, teacher expects " +
                         std::to_string(teacher_.input_dim()));
  }
  if (generator_.num_classes() != teacher_.output_dim() ||
      student_.output_dim() != teacher_.output_dim() ||
      student_.input_dim() != teacher_.input_dim()) {
    throw DimensionError("generator, teacher and student class counts differ");
  }
  teacher_.set_mode(Mode::kEval);
  teacher_.set_requires_grad(false);
  generator_.set_mode(Mode::kTrain);
  student_.set_mode(Mode::kTrain);
  references_ = bn_references(teacher_);
  gen_opt_ = std::make_unique<AdamOptimizer>(generator_.parameters(),
                                             config_.gen_lr, config_.gen_beta1,
                                             config_.gen_beta2);
  cal_opt_ = std::make_unique<SgdMomentum>(
      student_.parameters(), config_.cal_lr, config_.cal_momentum,
      config_.cal_weight_decay, config_.cal_nesterov);
}

Tensor ZeroSumGame::student_logits(const Tensor& x, bool update) {
  ForwardOptions opts;
  opts.update_statistics = update;
  return student_.forward(x, opts);
}

Tensor ZeroSumGame::teacher_logits(const Tensor& x,
                                   std::vector<Tensor>* bn_inputs) {
  ForwardOptions opts;
  opts.bn_inputs = bn_inputs;
  opts.update_statistics = false;
  return teacher_.forward(x, opts);
}

TraceRow ZeroSumGame::step() {
  TraceRow row;
  row.iter = iteration_;
  row.epoch = iteration_ / config_.iterations_per_epoch;
  generator_half_step(row);
  // Fresh batch for Q; G is fixed.
  calibration_half_step(row);
  ++iteration_;
  return row;
}

void ZeroSumGame::generator_half_step(TraceRow& row) {
  const std::size_t num_classes = teacher_.output_dim();
  NoiseBatch batch = sample_noise_and_labels(
      gen_rng_, config_.batch_size, generator_.noise_dim(), num_classes);
  ForwardOptions gen_opts;
  Tensor x = generator_.generate(batch.noise, batch.labels, gen_opts);
  std::vector<Tensor> bn_inputs;
  Tensor z_p = teacher_logits(x, &bn_inputs);
  Tensor z_q = student_logits(x, false);
  AdaptabilityBatch ab = compute_adaptability(z_p, z_q, batch.labels);
  Tensor objective = generator_objective(ab, bn_inputs, references_, config_.hp);
  Tensor loss = neg(objective);
  row.loss_gen = loss.item();
  if (!std::isfinite(row.loss_gen)) {
    throw NumericError("generator loss is non-finite at iteration " +
                       std::to_string(iteration_) + " (mean H_info " +
                       fmt_double(batch_mean(ab.h_info)) + ")");
  }
  row.h_info_pre_g = batch_mean(ab.h_info);
  auto hp = ab.h_prime.data();
  row.hprime_min = *std::min_element(hp.begin(), hp.end());
  row.hprime_max = *std::max_element(hp.begin(), hp.end());
  row.hprime_mean = batch_mean(ab.h_prime);
  std::size_t inside = 0;
  for (double v : hp) {
    if (v >= config_.hp.lambda_l && v <= config_.hp.lambda_u) ++inside;
  }
  row.hprime_in_margin = static_cast<double>(inside) / static_cast<double>(hp.size());
  ClassCounts counts = ab.counts();
  row.n_disagree = counts.disagreement;
  row.n_agree = counts.agreement;
  row.n_teacher_wrong = counts.teacher_wrong;

  gen_opt_->zero_grad();
  loss.backward();
  gen_opt_->step();
  student_.zero_grad();

  NoGradGuard no_grad;
  ForwardOptions replay;
  replay.update_statistics = false;
  Tensor x_after = generator_.generate(batch.noise, batch.labels, replay);
  Tensor h_after = entropy_from_logits(
      sub(teacher_logits(x_after, nullptr), student_logits(x_after, false)));
  row.h_info_post_g = batch_mean(h_after);
  row.delta_g = row.h_info_post_g - row.h_info_pre_g;
}

void ZeroSumGame::calibration_half_step(TraceRow& row) {
  const std::size_t num_classes = teacher_.output_dim();
  NoiseBatch batch = sample_noise_and_labels(
      cal_rng_, config_.batch_size, generator_.noise_dim(), num_classes);
  Tensor x, z_p;
  {
    NoGradGuard no_grad;
    ForwardOptions opts;
    opts.update_statistics = false;
    x = generator_.generate(batch.noise, batch.labels, opts);
    z_p = teacher_logits(x, nullptr);
  }
  Tensor z_q = student_logits(x, true);
  Tensor diff = sub(z_p, z_q);
  Tensor h_info = entropy_from_logits(diff);
  Tensor h_prime = normalize_entropy(h_info, num_classes);
  Tensor loss = mean(add_scalar(neg(h_prime), 1.0));
  if (config_.calibration_ce_weight > 0.0) {
    loss = add(loss, mul_scalar(softmax_cross_entropy(z_q, batch.labels),
                                config_.calibration_ce_weight));
  }
  row.loss_cal = loss.item();
  if (!std::isfinite(row.loss_cal)) {
    throw NumericError("calibration loss is non-finite at iteration " +
                       std::to_string(iteration_) + " (mean H_info " +
                       fmt_double(batch_mean(h_info)) + ")");
  }
  row.h_info_pre_q = batch_mean(h_info);
  cal_opt_->zero_grad();
  loss.backward();
  cal_opt_->step();
  generator_.zero_grad();

  NoGradGuard no_grad;
  Tensor h_after = entropy_from_logits(sub(z_p, student_logits(x, false)));
  row.h_info_post_q = batch_mean(h_after);
  row.delta_q = row.h_info_post_q - row.h_info_pre_q;
}

GameTrace run_game(ConditionalGenerator& generator, MlpNetwork& teacher,
                   MlpNetwork& student, const GameConfig& config,
                   const TraceCallback& on_row) {
  ZeroSumGame game(generator, teacher, student, config);
  const std::size_t total = config.epochs * config.iterations_per_epoch;
  GameTrace trace;
  trace.reserve(total);
  for (std::size_t i = 0; i < total; ++i) {
    trace.push_back(game.step());
    if (on_row) on_row(trace.back());
    const TraceRow& r = trace.back();
    if ((i + 1) % config.iterations_per_epoch == 0) {
      spdlog::debug("epoch {} loss_gen {:.4f} loss_cal {:.4f} dG {:+.4f} dQ {:+.4f}",
                    r.epoch, r.loss_gen, r.loss_cal, r.delta_g, r.delta_q);
    }
  }
  return trace;
}

EquilibriumReport equilibrium_report(std::span<const TraceRow> trace,
                                     std::size_t window,
                                     std::span<const double> heldout_accuracy) {
  if (trace.empty()) throw ContractError("equilibrium_report: empty trace");
  if (window == 0 || window > trace.size()) {
    throw ContractError("equilibrium_report: window must be in [1, " +
                        std::to_string(trace.size()) + "]");
  }
  EquilibriumReport rep;
  rep.window = window;
  auto tail = trace.subspan(trace.size() - window);
  rep.first_iter = tail.front().iter;
  rep.hprime_min = tail.front().hprime_min;
  rep.hprime_max = tail.front().hprime_max;
  double hprime_sum = 0.0;
  for (const TraceRow& r : tail) {
    rep.sum_delta_g += r.delta_g;
    rep.sum_delta_q += r.delta_q;
    rep.mean_abs_delta_g += std::abs(r.delta_g);
    rep.mean_loss_gen += r.loss_gen;
    rep.mean_loss_cal += r.loss_cal;
    hprime_sum += r.hprime_mean;
    rep.hprime_min = std::min(rep.hprime_min, r.hprime_min);
    rep.hprime_max = std::max(rep.hprime_max, r.hprime_max);
  }
  const double w = static_cast<double>(window);
  rep.mean_delta_g = rep.sum_delta_g / w;
  rep.mean_delta_q = rep.sum_delta_q / w;
  rep.mean_delta_sum = (rep.sum_delta_g + rep.sum_delta_q) / w;
  rep.mean_abs_delta_g /= w;
  rep.mean_loss_gen /= w;
  rep.mean_loss_cal /= w;
  rep.hprime_mean = hprime_sum / w;
  rep.equilibrium = std::abs(rep.mean_delta_sum) < 0.25 * rep.mean_abs_delta_g;

  if (window >= 2) {
    const std::size_t half = window / 2;
    double first = 0.0, second = 0.0;
    for (std::size_t i = 0; i < half; ++i) first += tail[i].loss_cal;
    for (std::size_t i = half; i < window; ++i) second += tail[i].loss_cal;
    first /= static_cast<double>(half);
    second /= static_cast<double>(window - half);
    rep.underfit = rep.mean_loss_cal >= 0.5 &&
                   std::abs(first - second) <= 0.01 * std::abs(rep.mean_loss_cal);
  }

  if (heldout_accuracy.size() >= 2) {
    double initial_gen = 0.0;
    for (std::size_t i = 0; i < window; ++i) initial_gen += trace[i].loss_gen;
    initial_gen /= w;
    const bool collapsed = initial_gen > 0.0 && rep.mean_loss_gen <= 0.1 * initial_gen;
    const bool degrading = heldout_accuracy.back() < heldout_accuracy.front();
    rep.overfit = collapsed && degrading;
  }
  return rep;
}

std::string equilibrium_json(const EquilibriumReport& r) {
  nlohmann::json j;
  j["window"] = r.window;
  j["first_iter"] = r.first_iter;
  j["mean_delta_g"] = r.mean_delta_g;
  j["mean_delta_q"] = r.mean_delta_q;
  j["mean_delta_sum"] = r.mean_delta_sum;
  j["mean_abs_delta_g"] = r.mean_abs_delta_g;
  j["sum_delta_g"] = r.sum_delta_g;
  j["sum_delta_q"] = r.sum_delta_q;
  j["hprime_min"] = r.hprime_min;
  j["hprime_mean"] = r.hprime_mean;
  j["hprime_max"] = r.hprime_max;
  j["mean_loss_gen"] = r.mean_loss_gen;
  j["mean_loss_cal"] = r.mean_loss_cal;
  j["equilibrium"] = r.equilibrium;
  j["underfit"] = r.underfit;
  j["overfit"] = r.overfit;
  return j.dump(2) + "\n";
}

}  // namespace adadfq
