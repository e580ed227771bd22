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
#include <numbers>

#include "adadfq/adaptability.h"
#include "adadfq/errors.h"
#include "adadfq/gradcheck.h"
#include "doctest.h"
#include "gradient_suite.h"
#include "test_util.h"

using namespace adadfq;
using adadfq::testing::random_one_hot;
using adadfq::testing::random_tensor;
using adadfq::testing::values;

namespace {

const double kLn4 = std::log(4.0);

// Entropy of a probability row evaluated directly, in long double.
long double direct_entropy(const std::vector<long double>& p) {
  long double h = 0;
  for (long double v : p) {
    if (v > 0) h -= v * std::log(v);
  }
  return h;
}

std::vector<long double> direct_softmax(const std::vector<long double>& z) {
  long double m = z[0];
  for (auto v : z) m = std::max(m, v);
  long double s = 0;
  std::vector<long double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) s += (out[i] = std::exp(z[i] - m));
  for (auto& v : out) v /= s;
  return out;
}

std::vector<long double> row(const Tensor& t, std::size_t i) {
  std::vector<long double> r(t.cols());
  for (std::size_t j = 0; j < t.cols(); ++j) r[j] = t.at(i, j);
  return r;
}

}  // namespace

TEST_CASE("p_ds is uniform when the logits agree") {
  SeededRng rng(1);
  Tensor z = random_tensor(rng, {3, 5});
  Tensor p = disagreement_vector(z, z);
  for (double v : p.data()) CHECK(v == doctest::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("p_ds for a logit difference of [ln2, 0, 0]") {
  Tensor zp({1, 3}, {std::log(2.0) + 1.0, 1.0, -3.0});
  Tensor zq({1, 3}, {1.0, 1.0, -3.0});
  Tensor p = disagreement_vector(zp, zq);
  CHECK(p.at(0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(p.at(1) == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(p.at(2) == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("p_ds is invariant to a shared constant shift") {
  SeededRng rng(2);
  Tensor zp = random_tensor(rng, {4, 3});
  Tensor zq = random_tensor(rng, {4, 3});
  Tensor p1 = disagreement_vector(zp, zq);
  Tensor p2 = disagreement_vector(add_scalar(zp, 7.5), add_scalar(zq, 7.5));
  for (std::size_t i = 0; i < p1.numel(); ++i) CHECK(p1.at(i) == doctest::Approx(p2.at(i)).epsilon(1e-12));
}

TEST_CASE("disagreement and agreement vectors reject shape mismatches") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({2, 4});
  CHECK_THROWS_AS(disagreement_vector(a, b), DimensionError);
  CHECK_THROWS_AS(agreement_vector(a, b), DimensionError);
}

TEST_CASE("p_as is uniform when the logits cancel") {
  SeededRng rng(3);
  Tensor z = random_tensor(rng, {2, 4});
  Tensor p = agreement_vector(z, neg(z));
  for (double v : p.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("p_as is more peaked than softmax(z_p) for aligned peaked logits") {
  Tensor z({1, 4}, {3.0, 0.5, 0.0, -1.0});
  const double pas_max = agreement_vector(z, z).at(0);
  const double p_max = softmax(z).at(0);
  CHECK(pas_max > p_max);
}

TEST_CASE("p_as is equivariant under class permutations") {
  SeededRng rng(4);
  Tensor zp = random_tensor(rng, {1, 3});
  Tensor zq = random_tensor(rng, {1, 3});
  const std::size_t perm[3] = {2, 0, 1};
  std::vector<double> pp(3), pq(3);
  for (std::size_t j = 0; j < 3; ++j) {
    pp[j] = zp.at(perm[j]);
    pq[j] = zq.at(perm[j]);
  }
  Tensor a = agreement_vector(zp, zq);
  Tensor b = agreement_vector(Tensor({1, 3}, pp), Tensor({1, 3}, pq));
  for (std::size_t j = 0; j < 3; ++j) CHECK(b.at(j) == doctest::Approx(a.at(perm[j])).epsilon(1e-14));
}

TEST_CASE("info_entropy of uniform, one-hot and [0.5, 0.25, 0.25] rows") {
  CHECK(info_entropy(Tensor({1, 4}, {0.25, 0.25, 0.25, 0.25})).at(0) ==
        doctest::Approx(1.386294).epsilon(1e-6));
  CHECK(std::fabs(info_entropy(Tensor({1, 4}, {0.25, 0.25, 0.25, 0.25})).at(0) - kLn4) < 1e-9);
  CHECK(info_entropy(Tensor({1, 3}, {0.0, 1.0, 0.0})).at(0) == 0.0);
  CHECK(info_entropy(Tensor({1, 3}, {0.5, 0.25, 0.25})).at(0) ==
        doctest::Approx(1.5 * std::log(2.0)).epsilon(1e-14));
  CHECK(info_entropy(Tensor({1, 3}, {0.5, 0.25, 0.25})).at(0) ==
        doctest::Approx(1.039721).epsilon(1e-6));
}

TEST_CASE("info_entropy rejects rows that are not distributions") {
  CHECK_THROWS_AS(info_entropy(Tensor({1, 2}, {0.5, 0.6})), ContractError);
}

TEST_CASE("entropy_from_logits agrees with info_entropy of the softmax") {
  SeededRng rng(5);
  Tensor z = random_tensor(rng, {6, 4}, 3.0);
  Tensor a = entropy_from_logits(z);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(a.at(i) == doctest::Approx(static_cast<double>(direct_entropy(direct_softmax(row(z, i))))).epsilon(1e-12));
  }
}

TEST_CASE("property: entropy lies in [0, ln C]") {
  SeededRng rng(6);
  for (double scale : {0.01, 1.0, 30.0}) {
    Tensor h = entropy_from_logits(random_tensor(rng, {64, 4}, scale));
    for (double v : h.data()) {
      CHECK(v >= 0.0);
      CHECK(v <= kLn4 + 1e-12);
    }
  }
}

TEST_CASE("normalize_entropy endpoints and worked case") {
  Tensor a = normalize_entropy(Tensor({2}, {0.2, kLn4}), 4);
  CHECK(a.at(0) == 0.0);
  CHECK(a.at(1) == doctest::Approx(1.0).epsilon(1e-15));
  Tensor b = normalize_entropy(Tensor({3}, {0.5, 1.0, 1.386294}), 4);
  CHECK(b.at(0) == 0.0);
  // (1.0 - 0.5) / (ln 4 - 0.5) evaluated in long double.
  const long double expected = 0.5L / (std::log(4.0L) - 0.5L);
  CHECK(b.at(1) == doctest::Approx(static_cast<double>(expected)).epsilon(1e-6));
  CHECK(b.at(2) == doctest::Approx((1.386294 - 0.5) / (kLn4 - 0.5)).epsilon(1e-12));
  CHECK(std::fabs(b.at(2) - 1.0) < 1e-6);
}

TEST_CASE("normalize_entropy of an all-equal batch is all zeros") {
  Tensor a = normalize_entropy(Tensor({3}, {kLn4, kLn4, kLn4}), 4);
  for (double v : a.data()) CHECK(v == 0.0);
  Tensor b = normalize_entropy(Tensor({2}, {0.7, 0.7}), 4);
  CHECK(b.at(0) == 0.0);
  CHECK(b.at(1) == 0.0);
}

TEST_CASE("normalized entropy is invariant to the log base") {
  SeededRng rng(7);
  Tensor h = entropy_from_logits(random_tensor(rng, {16, 4}));
  Tensor h2 = mul_scalar(h, 1.0 / std::log(2.0));
  Tensor a = normalize_entropy(h, 4);
  Tensor b = normalize_entropy(h2, 4, 2.0);
  for (std::size_t i = 0; i < 16; ++i) CHECK(std::fabs(a.at(i) - b.at(i)) < 1e-9);
}

TEST_CASE("the batch minimum is detached from the gradient") {
  Tensor h({3}, {0.3, 0.9, 1.2}, true);
  sum(normalize_entropy(h, 4)).backward();
  // d/dh_i of (h_i - m) / (ln4 - m) with m constant is 1 / (ln4 - m) for all i.
  const double expected = 1.0 / (kLn4 - 0.3);
  for (double g : h.grad()) CHECK(g == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("classify_samples on the definition instances") {
  Tensor y = one_hot({0, 1}, 3);
  Tensor zp({2, 3}, {5, 0, 0, 0, 5, 0});
  Tensor zq({2, 3}, {0, 5, 0, 0, 5, 0});
  auto c = classify_samples(zp, zq, y);
  CHECK(c[0] == SampleClass::kDisagreement);
  CHECK(c[1] == SampleClass::kAgreement);
}

TEST_CASE("classify_samples over every argmax configuration for C = 3") {
  for (int yc = 0; yc < 3; ++yc) {
    for (int pc = 0; pc < 3; ++pc) {
      for (int qc = 0; qc < 3; ++qc) {
        std::vector<double> zp(3, 0.0), zq(3, 0.0);
        zp[pc] = 1.0;
        zq[qc] = 1.0;
        auto c = classify_samples(Tensor({1, 3}, zp), Tensor({1, 3}, zq), one_hot({yc}, 3))[0];
        SampleClass expected = SampleClass::kTeacherWrong;
        if (pc == qc) {
          expected = SampleClass::kAgreement;
        } else if (pc == yc) {
          expected = SampleClass::kDisagreement;
        }
        CAPTURE(yc);
        CAPTURE(pc);
        CAPTURE(qc);
        CHECK(c == expected);
      }
    }
  }
}

TEST_CASE("classify_samples breaks argmax ties toward the lowest index") {
  auto c = classify_samples(Tensor({1, 3}, {1, 1, 0}), Tensor({1, 3}, {2, 0, 2}), one_hot({0}, 3));
  CHECK(c[0] == SampleClass::kAgreement);
}

TEST_CASE("property: sample classes partition the batch") {
  SeededRng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor zp = random_tensor(rng, {32, 4});
    Tensor zq = random_tensor(rng, {32, 4});
    Tensor y = random_one_hot(rng, 32, 4);
    ClassCounts n = count_classes(classify_samples(zp, zq, y));
    CHECK(n.disagreement + n.agreement + n.teacher_wrong == 32);
  }
}

TEST_CASE("loss_ds values") {
  // p_ds row equal to y: a very large logit gap on the label.
  Tensor y = one_hot({1}, 3);
  CHECK(loss_ds(Tensor({1, 3}, {0, 800, 0}), Tensor::zeros({1, 3}), y).item() ==
        doctest::Approx(0.0));
  Tensor z = Tensor::zeros({1, 4});
  CHECK(loss_ds(z, z, one_hot({2}, 4)).item() == doctest::Approx(kLn4).epsilon(1e-14));
  // p_ds[y] = 0.7 with C = 2: logit gap ln(0.7 / 0.3).
  Tensor zp({1, 2}, {std::log(0.7 / 0.3), 0.0});
  CHECK(loss_ds(zp, Tensor::zeros({1, 2}), one_hot({0}, 2)).item() ==
        doctest::Approx(0.356675).epsilon(1e-6));
  CHECK(loss_ds(zp, Tensor::zeros({1, 2}), one_hot({0}, 2)).item() ==
        doctest::Approx(-std::log(0.7)).epsilon(1e-13));
}

TEST_CASE("loss_as values") {
  Tensor y = one_hot({1}, 3);
  CHECK(loss_as(Tensor({1, 3}, {0, 400, 0}), Tensor({1, 3}, {0, 400, 0}), y).item() ==
        doctest::Approx(0.0));
  Tensor z = Tensor::zeros({1, 4});
  CHECK(loss_as(z, z, one_hot({0}, 4)).item() == doctest::Approx(kLn4).epsilon(1e-14));
  Tensor zp({1, 2}, {0.5 * std::log(0.7 / 0.3), 0.0});
  CHECK(loss_as(zp, zp, one_hot({0}, 2)).item() == doctest::Approx(-std::log(0.7)).epsilon(1e-13));
}

TEST_CASE("loss_bal weighting") {
  Tensor one = Tensor::scalar(1.0), two = Tensor::scalar(2.0);
  CHECK(loss_bal(one, two, 0.2, 0.1).item() == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(loss_bal(one, two, 0.0, 0.0).item() == 0.0);
  CHECK(loss_bal(one, two, 1.0, 0.0).item() == 1.0);
  CHECK(GameHyperparams{}.alpha_ds == 0.2);
  CHECK(GameHyperparams{}.alpha_as == 0.1);
}

TEST_CASE("margin_terms dead zone and hinge values") {
  CHECK(margin_terms(Tensor({3}, {0.1, 0.5, 0.8}), 0.1, 0.8).item() == 0.0);
  CHECK(margin_terms(Tensor({1}, {0.05}), 0.1, 0.8).item() == doctest::Approx(-0.05).epsilon(1e-14));
  CHECK(margin_terms(Tensor({1}, {0.9}), 0.1, 0.8).item() == doctest::Approx(-0.1).epsilon(1e-14));
  // Per-sample hinge, then the batch mean.
  CHECK(margin_terms(Tensor({2}, {0.05, 0.9}), 0.1, 0.8).item() ==
        doctest::Approx(-0.075).epsilon(1e-14));
}

TEST_CASE("margin_terms rejects misordered bounds") {
  CHECK_THROWS_AS(margin_terms(Tensor({1}, {0.5}), 0.8, 0.1), ConfigError);
  CHECK_THROWS_AS(margin_terms(Tensor({1}, {0.5}), -0.1, 0.5), ConfigError);
  GameHyperparams hp;
  hp.lambda_u = 1.2;
  CHECK_THROWS_AS(hp.validate(), ConfigError);
}

TEST_CASE("loss_bns is zero when batch statistics match") {
  Tensor x({2, 2}, {1.0, 3.0, 3.0, 5.0});  // mean [2, 4], biased var [1, 1]
  BnReference ref{{2.0, 4.0}, {1.0, 1.0}, 1e-5};
  std::vector<Tensor> in{x};
  std::vector<BnReference> refs{ref};
  CHECK(loss_bns(in, refs).item() == doctest::Approx(0.0).scale(1.0).epsilon(1e-15));
}

TEST_CASE("loss_bns with a unit mean offset is one") {
  Tensor x({2, 2}, {1.0, 3.0, 3.0, 5.0});
  BnReference ref{{1.0, 4.0}, {1.0, 1.0}, 1e-5};
  std::vector<Tensor> in{x};
  std::vector<BnReference> refs{ref};
  CHECK(loss_bns(in, refs).item() == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("loss_bns matches an independent two-pass computation") {
  SeededRng rng(9);
  std::vector<Tensor> inputs{random_tensor(rng, {7, 3}, 2.0), random_tensor(rng, {7, 5})};
  std::vector<BnReference> refs;
  long double expected = 0;
  for (const Tensor& t : inputs) {
    BnReference r;
    r.eps = 1e-5;
    for (std::size_t j = 0; j < t.cols(); ++j) {
      r.mean.push_back(rng.normal());
      r.var.push_back(0.5 + rng.uniform());
      long double m = 0;
      for (std::size_t i = 0; i < t.rows(); ++i) m += t.at(i, j);
      m /= t.rows();
      long double v = 0;
      for (std::size_t i = 0; i < t.rows(); ++i) v += (t.at(i, j) - m) * (t.at(i, j) - m);
      v /= t.rows();
      const long double ds = std::sqrt(v + r.eps) - std::sqrt(r.var[j] + r.eps);
      expected += (m - r.mean[j]) * (m - r.mean[j]) + ds * ds;
    }
    refs.push_back(r);
  }
  CHECK(std::fabs(loss_bns(inputs, refs).item() - static_cast<double>(expected)) < 1e-10);
}

TEST_CASE("loss_bns needs at least two samples") {
  std::vector<Tensor> in{Tensor({1, 2}, {1.0, 2.0})};
  std::vector<BnReference> refs{BnReference{{0, 0}, {1, 1}, 1e-5}};
  CHECK_THROWS_AS(loss_bns(in, refs), ContractError);
}

TEST_CASE("generator objective is zero with beta = gamma = 0 inside the margin") {
  // Build a batch whose h' values are 0 (batch min) ... choose lambda_l = 0 to
  // keep it inside.
  SeededRng rng(10);
  Tensor zp = random_tensor(rng, {8, 4});
  Tensor zq = random_tensor(rng, {8, 4});
  Tensor y = random_one_hot(rng, 8, 4);
  AdaptabilityBatch b = compute_adaptability(zp, zq, y);
  GameHyperparams hp;
  hp.beta = hp.gamma = 0.0;
  hp.lambda_l = 0.0;
  hp.lambda_u = 1.0;
  CHECK(generator_objective(b, {}, {}, hp).item() == 0.0);
}

TEST_CASE("generator objective isolates a single margin penalty") {
  SeededRng rng(11);
  Tensor zp = random_tensor(rng, {8, 4});
  Tensor zq = random_tensor(rng, {8, 4});
  Tensor y = random_one_hot(rng, 8, 4);
  AdaptabilityBatch b = compute_adaptability(zp, zq, y);
  // Only the batch-min sample (h' = 0) is below lambda_l when lambda_l is
  // just under the second smallest h'.
  std::vector<double> hp_sorted = values(b.h_prime);
  std::sort(hp_sorted.begin(), hp_sorted.end());
  GameHyperparams hp;
  hp.beta = hp.gamma = 0.0;
  hp.lambda_l = 0.5 * hp_sorted[1];
  hp.lambda_u = 1.0;
  CHECK(generator_objective(b, {}, {}, hp).item() ==
        doctest::Approx(-hp.lambda_l / 8.0).epsilon(1e-14));
}

TEST_CASE("generator objective equals the composition of its four terms") {
  SeededRng rng(12);
  Tensor zp = random_tensor(rng, {16, 4}, 2.0);
  Tensor zq = random_tensor(rng, {16, 4}, 2.0);
  Tensor y = random_one_hot(rng, 16, 4);
  std::vector<Tensor> bn{random_tensor(rng, {16, 6})};
  std::vector<BnReference> refs{BnReference{std::vector<double>(6, 0.1), std::vector<double>(6, 2.0), 1e-5}};
  GameHyperparams hp;  // defaults
  AdaptabilityBatch b = compute_adaptability(zp, zq, y);

  // Independent pieces.
  long double margin = 0;
  std::vector<long double> h(16);
  long double hmin = 1e300;
  long double lds = 0, las = 0;
  for (std::size_t i = 0; i < 16; ++i) {
    std::vector<long double> d(4), s(4);
    for (std::size_t j = 0; j < 4; ++j) {
      d[j] = static_cast<long double>(zp.at(i, j)) - zq.at(i, j);
      s[j] = static_cast<long double>(zp.at(i, j)) + zq.at(i, j);
    }
    auto pd = direct_softmax(d), ps = direct_softmax(s);
    h[i] = direct_entropy(pd);
    hmin = std::min(hmin, h[i]);
    std::size_t label = 0;
    for (std::size_t j = 0; j < 4; ++j) if (y.at(i, j) == 1.0) label = j;
    lds -= std::log(pd[label]);
    las -= std::log(ps[label]);
  }
  for (std::size_t i = 0; i < 16; ++i) {
    const long double hp_i = (h[i] - hmin) / (std::log(4.0L) - hmin);
    margin -= std::max<long double>(hp.lambda_l - hp_i, 0) + std::max<long double>(hp_i - hp.lambda_u, 0);
  }
  margin /= 16;
  lds /= 16;
  las /= 16;
  const double bns = loss_bns(bn, refs).item();
  const long double expected = margin - hp.beta * (hp.alpha_ds * lds + hp.alpha_as * las) - hp.gamma * bns;
  CHECK(generator_objective(b, bn, refs, hp).item() == doctest::Approx(static_cast<double>(expected)).epsilon(1e-11));
}

TEST_CASE("calibration objective on aligned and endpoint samples") {
  // Sample 0 has z_q = z_p (h' = 1); sample 1 attains the batch min (h' = 0).
  Tensor zp({2, 3}, {1.0, 2.0, 3.0, 4.0, 0.0, 0.0});
  Tensor zq({2, 3}, {1.0, 2.0, 3.0, 0.0, 0.0, 0.0});
  Tensor y = one_hot({2, 0}, 3);
  AdaptabilityBatch b = compute_adaptability(zp, zq, y);
  CHECK(b.h_prime.at(0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(b.h_prime.at(1) == 0.0);
  CHECK(b.h_nor.at(1) == 1.0);
  CHECK(calibration_objective(b).item() == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("calibration objective equals 1 - mean(h') on a random batch") {
  SeededRng rng(13);
  Tensor zp = random_tensor(rng, {16, 4});
  Tensor zq = random_tensor(rng, {16, 4});
  AdaptabilityBatch b = compute_adaptability(zp, zq, random_one_hot(rng, 16, 4));
  Tensor hprime = normalize_entropy(info_entropy(disagreement_vector(zp, zq)), 4);
  double m = 0;
  for (double v : hprime.data()) m += v;
  CHECK(calibration_objective(b).item() == doctest::Approx(1.0 - m / 16).epsilon(1e-13));
}

TEST_CASE("property: adaptability batch invariants") {
  SeededRng rng(14);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor zp = random_tensor(rng, {16, 5}, 3.0);
    Tensor zq = random_tensor(rng, {16, 5}, 3.0);
    AdaptabilityBatch b = compute_adaptability(zp, zq, random_one_hot(rng, 16, 5));
    for (std::size_t i = 0; i < 16; ++i) {
      double sds = 0, sas = 0;
      for (std::size_t j = 0; j < 5; ++j) {
        sds += b.p_ds.at(i, j);
        sas += b.p_as.at(i, j);
      }
      CHECK(std::fabs(sds - 1.0) < 1e-9);
      CHECK(std::fabs(sas - 1.0) < 1e-9);
      CHECK(b.h_info.at(i) >= 0.0);
      CHECK(b.h_info.at(i) <= std::log(5.0) + 1e-12);
      CHECK(b.h_prime.at(i) >= 0.0);
      CHECK(b.h_prime.at(i) <= 1.0);
      CHECK(b.h_nor.at(i) == 1.0 - b.h_prime.at(i));
    }
  }
}

TEST_CASE("property: entropy grows as z_q approaches z_p") {
  SeededRng rng(15);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor zp = random_tensor(rng, {1, 4}, 2.0);
    Tensor zq = random_tensor(rng, {1, 4}, 2.0);
    double prev = -1.0;
    for (int k = 0; k <= 50; ++k) {
      const double t = k / 50.0;  // fraction of the way from z_q to z_p
      Tensor zt = add(mul_scalar(zq, 1.0 - t), mul_scalar(zp, t));
      const double h = entropy_from_logits(sub(zp, zt)).at(0);
      CHECK(h >= prev - 1e-15);
      prev = h;
    }
    CHECK(prev == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  }
}

TEST_CASE("gradient checks over every differentiable loss, 20 seeds") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (const auto& [name, err] : adadfq::testing::gradient_suite(seed)) {
      CAPTURE(seed);
      CAPTURE(name);
      CHECK(err < 1e-4);
    }
  }
}
