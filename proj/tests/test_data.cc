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

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "adadfq/data.h"
#include "adadfq/errors.h"
#include "adadfq/io.h"
#include "adadfq/rng.h"
#include "doctest.h"
#include "test_util.h"

using namespace adadfq;
using adadfq::testing::scratch_dir;
using adadfq::testing::values;

namespace {

void check_split_contract(const Dataset& ds) {
  CHECK(ds.train_x.rows() == ds.train_y.size());
  CHECK(ds.test_x.rows() == ds.test_y.size());
  for (std::size_t c = 0; c < ds.num_classes; ++c) {
    const int k = static_cast<int>(c);
    CHECK(std::count(ds.train_y.begin(), ds.train_y.end(), k) > 0);
    CHECK(std::count(ds.test_y.begin(), ds.test_y.end(), k) > 0);
  }
}

// Best accuracy of any half-plane on 2-D points, by sweeping directions and
// every threshold between sorted projections.
double best_half_plane(const Dataset& ds) {
  std::vector<std::pair<double, double>> pts;
  std::vector<int> ys;
  for (std::size_t i = 0; i < ds.train_y.size(); ++i) {
    pts.emplace_back(ds.train_x.at(i, 0), ds.train_x.at(i, 1));
    ys.push_back(ds.train_y[i]);
  }
  for (std::size_t i = 0; i < ds.test_y.size(); ++i) {
    pts.emplace_back(ds.test_x.at(i, 0), ds.test_x.at(i, 1));
    ys.push_back(ds.test_y[i]);
  }
  const std::size_t n = pts.size();
  double best = 0.0;
  for (int a = 0; a < 720; ++a) {
    const double th = std::numbers::pi * a / 720.0;
    std::vector<std::pair<double, int>> proj;
    for (std::size_t i = 0; i < n; ++i) {
      proj.emplace_back(pts[i].first * std::cos(th) + pts[i].second * std::sin(th), ys[i]);
    }
    std::sort(proj.begin(), proj.end());
    const auto ones = static_cast<std::size_t>(std::count(ys.begin(), ys.end(), 1));
    std::size_t zeros_below = 0, ones_below = 0;
    for (std::size_t k = 0; k <= n; ++k) {
      // Predict 0 below the threshold and 1 above, or the reverse.
      const std::size_t fwd = zeros_below + (ones - ones_below);
      best = std::max({best, static_cast<double>(fwd) / n, static_cast<double>(n - fwd) / n});
      if (k < n) (proj[k].second == 0 ? zeros_below : ones_below)++;
    }
  }
  return best;
}

std::filesystem::path write_text(const std::string& name, const std::string& text) {
  auto path = scratch_dir("data_" + name) / name;
  io::write_file_atomic(path, text);
  return path;
}

}  // namespace

TEST_CASE("identical seeds yield identical streams; substreams differ") {
  SeededRng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  SeededRng data = SeededRng(42).substream(Stream::kData);
  SeededRng noise = SeededRng(42).substream(Stream::kNoise);
  int equal = 0;
  for (int i = 0; i < 100; ++i) equal += data.next_u64() == noise.next_u64();
  CHECK(equal == 0);
  CHECK(SeededRng(1).next_u64() != SeededRng(2).next_u64());
}

TEST_CASE("uniform draws stay in [0, 1) and uniform_index in range") {
  SeededRng rng(3);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    CHECK((u >= 0.0 && u < 1.0));
    CHECK(rng.uniform_index(7) < 7);
  }
}

TEST_CASE("make_blobs validates its arguments") {
  CHECK_THROWS_AS(make_blobs(1, 10, 4, 1.0, 0), ConfigError);
  CHECK_THROWS_AS(make_blobs(4, 10, 1, 1.0, 0), ConfigError);
  CHECK_THROWS_AS(make_blobs(4, 1, 4, 1.0, 0), ConfigError);
  CHECK_THROWS_AS(make_blobs(4, 10, 4, -1.0, 0), ConfigError);
}

TEST_CASE("degenerate blobs are linearly separable on the train split") {
  Dataset ds = make_blobs(4, 50, 8, 0.0, 0);
  check_split_contract(ds);
  // Scoring by the dot product with each class center is a linear classifier.
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ds.train_y.size(); ++i) {
    std::size_t best = 0;
    double best_score = -1e300;
    for (std::size_t c = 0; c < 4; ++c) {
      const double score = ds.train_x.at(i, c);
      if (score > best_score) best_score = score, best = c;
    }
    correct += static_cast<int>(best) == ds.train_y[i];
  }
  CHECK(correct == ds.train_y.size());
}

TEST_CASE("blobs are a pure function of their parameters and seed") {
  Dataset a = make_blobs(4, 30, 8, 1.0, 11);
  Dataset b = make_blobs(4, 30, 8, 1.0, 11);
  CHECK(values(a.train_x) == values(b.train_x));
  CHECK(values(a.test_x) == values(b.test_x));
  CHECK(a.train_y == b.train_y);
  CHECK(a.provenance == b.provenance);
  Dataset c = make_blobs(4, 30, 8, 1.0, 12);
  CHECK(values(a.train_x) != values(c.train_x));
}

TEST_CASE("blobs split 80/20 per class") {
  Dataset ds = make_blobs(4, 500, 8, 1.0, 0);
  CHECK(ds.size() == 2000);
  CHECK(ds.train_y.size() == 1600);
  CHECK(ds.test_y.size() == 400);
  check_split_contract(ds);
}

TEST_CASE("two rings defeat every linear classifier") {
  Dataset ds = make_rings(2, 500, 0);
  check_split_contract(ds);
  CHECK(best_half_plane(ds) <= 0.60);
}

TEST_CASE("ring class is recoverable from the radius") {
  constexpr std::size_t kClasses = 4;
  Dataset ds = make_rings(kClasses, 1000, 1);
  auto accuracy = [](const Tensor& x, const std::vector<int>& y) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double r = std::hypot(x.at(i, 0), x.at(i, 1));
      const long c = std::lround((r - kRingInnerRadius) / kRingSpacing);
      correct += c == y[i];
    }
    return static_cast<double>(correct) / y.size();
  };
  // Nearest-radius decoding errs when the radial noise (sd 0.1) crosses half
  // the spacing; interior classes have two such boundaries.
  const double tail = 0.5 * std::erfc(0.5 * kRingSpacing / 0.1 / std::sqrt(2.0));
  const double expected_err = tail * 2.0 * (kClasses - 1) / kClasses;
  auto floor_for = [&](std::size_t n) {
    return 1.0 - expected_err - 4.0 * std::sqrt(expected_err / static_cast<double>(n));
  };
  CHECK(accuracy(ds.train_x, ds.train_y) >= floor_for(ds.train_y.size()));
  CHECK(accuracy(ds.test_x, ds.test_y) >= floor_for(ds.test_y.size()));
  Dataset again = make_rings(kClasses, 1000, 1);
  CHECK(values(ds.train_x) == values(again.train_x));
  CHECK_THROWS_AS(make_rings(1, 10, 0), ConfigError);
}

TEST_CASE("noise draws are standard normal") {
  SeededRng rng = SeededRng(5).substream(Stream::kNoise);
  NoiseBatch b = sample_noise_and_labels(rng, 100000, 1, 4);
  const std::vector<double> z = values(b.noise);
  double mean = 0.0;
  for (double v : z) mean += v;
  mean /= z.size();
  double var = 0.0;
  for (double v : z) var += (v - mean) * (v - mean);
  var /= z.size();
  CHECK(std::fabs(mean) < 0.02);
  CHECK(std::fabs(var - 1.0) < 0.05);
}

TEST_CASE("labels are uniform and one-hot") {
  SeededRng rng = SeededRng(6).substream(Stream::kNoise);
  NoiseBatch b = sample_noise_and_labels(rng, 10000, 2, 4);
  std::vector<int> hist(4, 0);
  for (std::size_t i = 0; i < 10000; ++i) {
    double row_sum = 0.0;
    for (std::size_t c = 0; c < 4; ++c) row_sum += b.labels.at(i, c);
    CHECK(row_sum == 1.0);
    CHECK(b.labels.at(i, static_cast<std::size_t>(b.label_ids[i])) == 1.0);
    ++hist[b.label_ids[i]];
  }
  for (int h : hist) CHECK(std::abs(h - 2500) <= 125);
}

TEST_CASE("noise sampling is reproducible and validates dimensions") {
  SeededRng a(9), b(9);
  NoiseBatch x = sample_noise_and_labels(a, 8, 3, 4);
  NoiseBatch y = sample_noise_and_labels(b, 8, 3, 4);
  CHECK(values(x.noise) == values(y.noise));
  CHECK(x.label_ids == y.label_ids);
  CHECK_THROWS_AS(sample_noise_and_labels(a, 0, 3, 4), ContractError);
  CHECK_THROWS_AS(sample_noise_and_labels(a, 8, 3, 1), ContractError);
}

TEST_CASE("csv round trip of a blobs dataset") {
  Dataset ds = make_blobs(4, 20, 3, 1.0, 2);
  auto path = scratch_dir("csv_round_trip") / "blobs.csv";
  write_csv(ds, path);
  Dataset back = load_csv(path, "label", CsvOptions{"split", false});
  REQUIRE(back.train_y == ds.train_y);
  REQUIRE(back.test_y == ds.test_y);
  const auto a = values(ds.train_x), b = values(back.train_x);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::fabs(a[i] - b[i]) <= 1e-9);
  const auto at = values(ds.test_x), bt = values(back.test_x);
  for (std::size_t i = 0; i < at.size(); ++i) CHECK(std::fabs(at[i] - bt[i]) <= 1e-9);
}

TEST_CASE("standardized csv round trips in raw units") {
  Dataset ds = make_blobs(3, 20, 2, 1.0, 4);
  auto path = scratch_dir("csv_std_round_trip") / "a.csv";
  write_csv(ds, path);
  Dataset standardized = load_csv(path, "label");
  auto path2 = scratch_dir("csv_std_round_trip") / "b.csv";
  write_csv(standardized, path2);
  Dataset raw = load_csv(path2, "label", CsvOptions{"split", false});
  const auto a = values(ds.train_x), b = values(raw.train_x);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::fabs(a[i] - b[i]) <= 1e-9);
}

TEST_CASE("standardization uses train statistics only") {
  const std::string train_rows = "1,0,train\n3,0,train\n5,1,train\n7,1,train\n";
  auto p1 = write_text("leak1.csv", "x,label,split\n" + train_rows + "100,0,test\n-50,1,test\n");
  auto p2 = write_text("leak2.csv", "x,label,split\n" + train_rows + "9,0,test\n2,1,test\n");
  Dataset a = load_csv(p1, "label");
  Dataset b = load_csv(p2, "label");
  // Train mean 4, population std sqrt(5).
  CHECK(a.feature_mean[0] == doctest::Approx(4.0));
  CHECK(a.feature_std[0] == doctest::Approx(std::sqrt(5.0)));
  CHECK(values(a.train_x) == values(b.train_x));
  CHECK(a.test_x.at(0, 0) == doctest::Approx((100.0 - 4.0) / std::sqrt(5.0)));
  CHECK(b.test_x.at(1, 0) == doctest::Approx((2.0 - 4.0) / std::sqrt(5.0)));
  double m = 0.0, v = 0.0;
  for (double x : values(a.train_x)) m += x;
  m /= 4;
  for (double x : values(a.train_x)) v += (x - m) * (x - m);
  CHECK(m == doctest::Approx(0.0));
  CHECK(v / 4 == doctest::Approx(1.0));
}

TEST_CASE("a constant column is zeroed with a warning") {
  auto p = write_text("const.csv",
                      "a,b,label,split\n1,7,0,train\n2,7,1,train\n3,7,0,test\n4,7,1,test\n");
  Dataset ds = load_csv(p, "label");
  REQUIRE(ds.warnings.size() == 1);
  CHECK(ds.warnings[0].find("column 1") != std::string::npos);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(ds.train_x.at(i, 1) == 0.0);
    CHECK(ds.test_x.at(i, 1) == 0.0);
  }
}

TEST_CASE("csv errors") {
  SUBCASE("header-only file") {
    auto p = write_text("header_only.csv", "x,label\n");
    CHECK_THROWS_AS(load_csv(p, "label"), FormatError);
  }
  SUBCASE("malformed row names its line") {
    auto p = write_text("bad_row.csv", "x,label\n1,0\n2,1\nabc,0\n");
    try {
      load_csv(p, "label");
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find(":4:") != std::string::npos);
    }
  }
  SUBCASE("wrong field count names its line") {
    auto p = write_text("short_row.csv", "x,label\n1,0\n2\n");
    try {
      load_csv(p, "label");
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find(":3:") != std::string::npos);
    }
  }
  SUBCASE("unknown label column") {
    auto p = write_text("no_label.csv", "x,y\n1,0\n");
    CHECK_THROWS_AS(load_csv(p, "label"), ConfigError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_csv(scratch_dir("data") / "absent.csv", "label"), ConfigError);
  }
}

TEST_CASE("string labels are coded in sorted order") {
  auto p = write_text("strings.csv",
                      "x,label\n1,dog\n2,cat\n3,dog\n4,cat\n5,dog\n6,cat\n");
  Dataset ds = load_csv(p, "label");
  CHECK(ds.num_classes == 2);
  // File order without a split column: first 80% of each class trains.
  CHECK(ds.train_y == std::vector<int>{1, 0, 1, 0});
  CHECK(ds.test_y == std::vector<int>{1, 0});
}
