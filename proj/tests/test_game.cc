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

#include <cmath>
#include <limits>
#include <sstream>

#include "adadfq/checkpoint.h"
#include "adadfq/errors.h"
#include "adadfq/game.h"
#include "adadfq/io.h"
#include "adadfq/student.h"
#include "desk_fixture.h"
#include "doctest.h"
#include "json.hpp"

using namespace adadfq;
using adadfq::testing::desk;

namespace {

struct Players {
  MlpNetwork teacher;
  MlpNetwork student;
  ConditionalGenerator generator;
};

Players make_players(std::uint64_t seed = 0, int bits = 3) {
  const auto& d = desk(0);
  Players p{d.teacher.clone(), build_quantized_student(d.teacher, QuantSpec{bits}), {}};
  RunConfig rc = d.config;
  rc.seed = seed;
  p.generator = make_generator(rc, 4, 8);
  return p;
}

GameConfig short_game(std::size_t epochs = 2, std::size_t per_epoch = 5) {
  GameConfig c;
  c.epochs = epochs;
  c.iterations_per_epoch = per_epoch;
  return c;
}

std::string state_hash(const std::vector<NamedTensor>& state) {
  std::string bytes;
  for (const NamedTensor& nt : state) {
    bytes += nt.name;
    auto d = nt.tensor.data();
    bytes.append(reinterpret_cast<const char*>(d.data()), d.size() * sizeof(double));
  }
  return io::fnv1a_hex(bytes);
}

std::vector<double> latent_weights(const MlpNetwork& net) {
  std::vector<double> out;
  for (const Tensor& t : net.parameters()) out.insert(out.end(), t.data().begin(), t.data().end());
  return out;
}

std::vector<double> gen_weights(const ConditionalGenerator& g) {
  std::vector<double> out;
  for (const Tensor& t : g.parameters()) out.insert(out.end(), t.data().begin(), t.data().end());
  return out;
}

TraceRow row_with(std::size_t iter, double dg, double dq, double loss_gen = 1.0,
                  double loss_cal = 0.2) {
  TraceRow r;
  r.iter = iter;
  r.delta_g = dg;
  r.delta_q = dq;
  r.loss_gen = loss_gen;
  r.loss_cal = loss_cal;
  r.hprime_min = 0.0;
  r.hprime_mean = 0.5;
  r.hprime_max = 1.0;
  return r;
}

}  // namespace

TEST_CASE("defaults mirror the reference settings") {
  GameConfig c;
  CHECK(c.epochs == 400);
  CHECK(c.batch_size == 16);
  CHECK(c.gen_lr == 1e-3);
  CHECK(c.gen_beta1 == 0.9);
  CHECK(c.cal_momentum == 0.9);
  CHECK(c.cal_weight_decay == 1e-4);
  CHECK(c.cal_nesterov);
  CHECK(c.iterations_per_epoch == 50);
  CHECK(c.calibration_ce_weight == 0.0);
}

TEST_CASE("GameConfig validation") {
  GameConfig c;
  c.batch_size = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = GameConfig{};
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = GameConfig{};
  c.bits = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = GameConfig{};
  c.hp.lambda_l = 0.9;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("zero learning rates leave weights unchanged and deltas at zero") {
  Players p = make_players();
  GameConfig c = short_game(1, 4);
  c.gen_lr = 0.0;
  c.cal_lr = 0.0;
  const auto q0 = latent_weights(p.student);
  const auto g0 = gen_weights(p.generator);
  GameTrace trace = run_game(p.generator, p.teacher, p.student, c);
  for (const TraceRow& r : trace) {
    CHECK(r.delta_g == 0.0);
    CHECK(r.delta_q == 0.0);
  }
  CHECK(latent_weights(p.student) == q0);
  CHECK(gen_weights(p.generator) == g0);
}

TEST_CASE("the teacher is bit-identical across a run") {
  Players p = make_players();
  const std::string before = state_hash(p.teacher.state());
  run_game(p.generator, p.teacher, p.student, short_game());
  CHECK(state_hash(p.teacher.state()) == before);
}

TEST_CASE("trace length is epochs x iterations and deltas are post minus pre") {
  Players p = make_players();
  GameTrace trace = run_game(p.generator, p.teacher, p.student, short_game(3, 4));
  REQUIRE(trace.size() == 12);
  for (std::size_t i = 0; i < trace.size(); ++i) {
    CHECK(trace[i].iter == i);
    CHECK(trace[i].epoch == i / 4);
    CHECK(trace[i].delta_g == trace[i].h_info_post_g - trace[i].h_info_pre_g);
    CHECK(trace[i].delta_q == trace[i].h_info_post_q - trace[i].h_info_pre_q);
    CHECK(trace[i].n_disagree + trace[i].n_agree + trace[i].n_teacher_wrong == 16);
    CHECK(trace[i].hprime_min >= 0.0);
    CHECK(trace[i].hprime_max <= 1.0);
  }
}

TEST_CASE("identical seeds give identical runs") {
  Players a = make_players();
  Players b = make_players();
  GameTrace ta = run_game(a.generator, a.teacher, a.student, short_game());
  GameTrace tb = run_game(b.generator, b.teacher, b.student, short_game());
  REQUIRE(ta.size() == tb.size());
  for (std::size_t i = 0; i < ta.size(); ++i) CHECK(trace_csv_row(ta[i]) == trace_csv_row(tb[i]));
  CHECK(latent_weights(a.student) == latent_weights(b.student));
}

TEST_CASE("each player only moves its own parameters") {
  {
    Players p = make_players();
    GameConfig c = short_game(1, 3);
    c.cal_lr = 0.0;
    const auto q0 = latent_weights(p.student);
    const auto g0 = gen_weights(p.generator);
    run_game(p.generator, p.teacher, p.student, c);
    CHECK(latent_weights(p.student) == q0);
    CHECK(gen_weights(p.generator) != g0);
  }
  {
    Players p = make_players();
    GameConfig c = short_game(1, 3);
    c.gen_lr = 0.0;
    const auto q0 = latent_weights(p.student);
    const auto g0 = gen_weights(p.generator);
    run_game(p.generator, p.teacher, p.student, c);
    CHECK(latent_weights(p.student) != q0);
    CHECK(gen_weights(p.generator) == g0);
  }
}

TEST_CASE("calibration observes activation ranges; generation does not") {
  Players p = make_players();
  ZeroSumGame game(p.generator, p.teacher, p.student, short_game());
  const auto* logits = std::get_if<LinearLayer>(&p.student.layers().back());
  CHECK_FALSE(logits->quant->output_state.initialized);
  game.step();
  CHECK(logits->quant->output_state.initialized);
  CHECK(game.iterations_done() == 1);
}

TEST_CASE("without margin, balance and BNS terms the generator objective vanishes") {
  Players p = make_players();
  GameConfig c = short_game(1, 4);
  c.hp.lambda_l = 0.0;
  c.hp.lambda_u = 1.0;
  c.hp.beta = 0.0;
  c.hp.gamma = 0.0;
  const auto g0 = gen_weights(p.generator);
  GameTrace trace = run_game(p.generator, p.teacher, p.student, c);
  for (const TraceRow& r : trace) CHECK(r.loss_gen == 0.0);
  CHECK(gen_weights(p.generator) == g0);
}

TEST_CASE("a non-finite loss aborts the run") {
  Players p = make_players();
  std::get<LinearLayer>(p.teacher.layers().back()).weight.mutable_data()[0] =
      std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(run_game(p.generator, p.teacher, p.student, short_game()), NumericError);
}

TEST_CASE("trace CSV round trip") {
  Players p = make_players();
  GameTrace trace = run_game(p.generator, p.teacher, p.student, short_game(1, 3));
  std::string text = std::string(kTraceCsvHeader) + "\n";
  for (const TraceRow& r : trace) text += trace_csv_row(r) + "\n";
  GameTrace back = parse_trace_csv(text);
  REQUIRE(back.size() == trace.size());
  for (std::size_t i = 0; i < trace.size(); ++i) CHECK(trace_csv_row(back[i]) == trace_csv_row(trace[i]));
  CHECK_THROWS_AS(parse_trace_csv("iter,epoch\n1,2\n"), FormatError);
}

TEST_CASE("equilibrium report on a constant trace") {
  GameTrace t;
  for (std::size_t i = 0; i < 8; ++i) t.push_back(row_with(i, 0.01, 0.02));
  EquilibriumReport r = equilibrium_report(t, 4);
  CHECK(r.window == 4);
  CHECK(r.first_iter == 4);
  CHECK(r.sum_delta_g == doctest::Approx(4 * 0.01));
  CHECK(r.sum_delta_q == doctest::Approx(4 * 0.02));
  CHECK(r.mean_delta_sum == doctest::Approx(0.03));
  CHECK_FALSE(r.equilibrium);
  CHECK_FALSE(r.underfit);
  CHECK_FALSE(r.overfit);
}

TEST_CASE("exact cancellation sets the equilibrium flag") {
  GameTrace t;
  for (std::size_t i = 0; i < 10; ++i) t.push_back(row_with(i, -0.03, 0.03));
  EquilibriumReport r = equilibrium_report(t, 10);
  CHECK(r.mean_delta_sum == 0.0);
  CHECK(r.mean_abs_delta_g == doctest::Approx(0.03));
  CHECK(r.equilibrium);
}

TEST_CASE("underfit and overfit heuristics") {
  GameTrace flat;
  for (std::size_t i = 0; i < 20; ++i) flat.push_back(row_with(i, 0.0, 0.0, 1.0, 0.8));
  CHECK(equilibrium_report(flat, 10).underfit);

  GameTrace collapsing;
  for (std::size_t i = 0; i < 20; ++i) {
    collapsing.push_back(row_with(i, 0.0, 0.0, i < 10 ? 2.0 : 0.05));
  }
  const std::vector<double> declining{0.9, 0.85, 0.8};
  const std::vector<double> rising{0.8, 0.85, 0.9};
  CHECK(equilibrium_report(collapsing, 10, declining).overfit);
  CHECK_FALSE(equilibrium_report(collapsing, 10, rising).overfit);
  CHECK_FALSE(equilibrium_report(collapsing, 10).overfit);
}

TEST_CASE("equilibrium report rejects empty traces and oversized windows") {
  GameTrace empty;
  CHECK_THROWS_AS(equilibrium_report(empty, 1), ContractError);
  GameTrace t{row_with(0, 0, 0)};
  CHECK_THROWS_AS(equilibrium_report(t, 2), ContractError);
}

TEST_CASE("report values match a recomputation from the raw CSV") {
  Players p = make_players();
  GameTrace trace = run_game(p.generator, p.teacher, p.student, short_game(2, 6));
  std::string text = std::string(kTraceCsvHeader) + "\n";
  for (const TraceRow& r : trace) text += trace_csv_row(r) + "\n";

  // Independent parse: split lines and fields by hand.
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    std::vector<double> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(std::stod(cell));
    rows.push_back(f);
  }
  const std::size_t window = 3;
  double dg = 0, dq = 0, adg = 0, lg = 0, lc = 0, hmin = 1e9, hmax = -1e9;
  for (std::size_t i = rows.size() - window; i < rows.size(); ++i) {
    dg += rows[i][6];
    dq += rows[i][9];
    adg += std::fabs(rows[i][6]);
    lg += rows[i][2];
    lc += rows[i][3];
    hmin = std::min(hmin, rows[i][13]);
    hmax = std::max(hmax, rows[i][15]);
  }
  EquilibriumReport r = equilibrium_report(parse_trace_csv(text), window);
  CHECK(r.mean_delta_g == doctest::Approx(dg / window).epsilon(1e-12));
  CHECK(r.mean_delta_q == doctest::Approx(dq / window).epsilon(1e-12));
  CHECK(r.mean_delta_sum == doctest::Approx((dg + dq) / window).epsilon(1e-12));
  CHECK(r.mean_abs_delta_g == doctest::Approx(adg / window).epsilon(1e-12));
  CHECK(r.mean_loss_gen == doctest::Approx(lg / window).epsilon(1e-12));
  CHECK(r.mean_loss_cal == doctest::Approx(lc / window).epsilon(1e-12));
  CHECK(r.hprime_min == hmin);
  CHECK(r.hprime_max == hmax);
  CHECK(r.equilibrium == (std::fabs((dg + dq) / window) < 0.25 * adg / window));

  auto j = nlohmann::json::parse(equilibrium_json(r));
  CHECK(j["window"] == window);
  CHECK(j["equilibrium"].get<bool>() == r.equilibrium);
}
