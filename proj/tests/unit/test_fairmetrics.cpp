/*
 * Copyright 2026 The FCRO Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <cmath>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "fairness_oracles.hpp"
#include "fcro/fairmetrics.hpp"

using namespace fcro;
using fcro::testing::brute_force_auc;
using fcro::testing::brute_force_auc_disparity;
using fcro::testing::brute_force_ed;
using fcro::testing::random_prediction_table;

namespace {

PredictionTable two_group_table(int pos_a0, int pos_hit_a0, int neg_a0, int neg_hit_a0, int pos_a1,
                                int pos_hit_a1, int neg_a1, int neg_hit_a1) {
  PredictionTable t;
  std::vector<int> attrs;
  auto add = [&](int a, int y, int count, int hits) {
    for (int i = 0; i < count; ++i) {
      const bool hit = i < hits;
      t.scores.push_back(y == 1 ? (hit ? 0.9 : 0.1) : (hit ? 0.1 : 0.9));
      t.labels.push_back(y);
      attrs.push_back(a);
    }
  };
  add(0, 1, pos_a0, pos_hit_a0);
  add(0, 0, neg_a0, neg_hit_a0);
  add(1, 1, pos_a1, pos_hit_a1);
  add(1, 0, neg_a1, neg_hit_a1);
  t.attributes = BinaryTable(t.scores.size(), 1, attrs);
  return t;
}

}  // namespace

TEST_CASE("auc hand cases") {
  CHECK(auc(std::vector<double>{0.9, 0.8, 0.3, 0.2}, std::vector<int>{1, 1, 0, 0}) == 1.0);
  CHECK(auc(std::vector<double>{0.9, 0.4, 0.6, 0.2}, std::vector<int>{1, 0, 0, 1}) == 0.5);
  CHECK(auc(std::vector<double>{0.3, 0.3, 0.3}, std::vector<int>{1, 0, 1}) == 0.5);
  try {
    (void)auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1});
    FAIL("expected throw");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("negative") != std::string::npos);
  }
}

TEST_CASE("auc equals pairwise counting including ties") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto t = random_prediction_table(20 + seed, 1, seed, /*score_levels=*/7);
    std::size_t pos = 0;
    for (int y : t.labels) pos += y;
    if (pos == 0 || pos == t.size()) continue;
    CHECK(auc(t.scores, t.labels) == brute_force_auc(t.scores, t.labels));
  }
}

TEST_CASE("ed_disparity hand cases") {
  // Identical confusion statistics.
  auto same = two_group_table(10, 7, 10, 6, 10, 7, 10, 6);
  CHECK(ed_disparity(same, Grouping::attribute(0)).value == 0.0);
  // TPR 1.0 vs 0.5, equal TNR.
  auto tpr = two_group_table(10, 10, 10, 8, 10, 5, 10, 8);
  CHECK(ed_disparity(tpr, Grouping::attribute(0)).value == doctest::Approx(0.5));
  MetricOptions mean;
  mean.ed_mode = EdMode::kMeanGap;
  CHECK(ed_disparity(tpr, Grouping::attribute(0), mean).value == doctest::Approx(0.25));
}

TEST_CASE("ed_disparity skips small groups and reports them") {
  // Group a=1 has only 3 positives: the TPR comparison is skipped, TNR is used.
  auto t = two_group_table(10, 10, 10, 8, 3, 0, 10, 5);
  auto r = ed_disparity(t, Grouping::attribute(0));
  CHECK(r.value == doctest::Approx(0.3));
  REQUIRE(r.skipped.size() == 1);
  CHECK(r.skipped[0].group == "1");
  CHECK(r.skipped[0].label == 1);

  auto tiny = two_group_table(2, 1, 2, 1, 2, 1, 2, 1);
  CHECK_THROWS_AS(ed_disparity(tiny, Grouping::attribute(0)), DisparityUndefined);
}

TEST_CASE("auc_disparity hand cases") {
  PredictionTable t;
  t.scores = {0.9, 0.1, 0.1, 0.9};
  t.labels = {1, 0, 1, 0};
  t.attributes = BinaryTable(4, 1, {0, 0, 1, 1});
  CHECK(auc_disparity(t, Grouping::attribute(0)).value == 1.0);

  // Exact duplicate groups.
  PredictionTable d;
  d.scores = {0.2, 0.7, 0.4, 0.2, 0.7, 0.4};
  d.labels = {0, 1, 1, 0, 1, 1};
  d.attributes = BinaryTable(6, 1, {0, 0, 0, 1, 1, 1});
  CHECK(auc_disparity(d, Grouping::attribute(0)).value == 0.0);
  CHECK(ed_disparity(d, Grouping::attribute(0), {1}).value == 0.0);
}

TEST_CASE("disparities equal brute-force enumeration on random tables") {
  int compared = 0;
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    const std::size_t m = 1 + seed % 3;
    auto t = random_prediction_table(40 + seed, m, 1000 + seed, 11);
    std::vector<Grouping> groupings{Grouping::joint()};
    for (std::size_t i = 0; i < m; ++i) groupings.push_back(Grouping::attribute(i));
    for (const auto& g : groupings) {
      for (std::size_t min_count : {std::size_t{1}, std::size_t{5}}) {
        MetricOptions opt;
        opt.min_count = min_count;
        auto expected = brute_force_ed(t, g, min_count);
        if (expected) {
          CHECK(ed_disparity(t, g, opt).value == *expected);
          ++compared;
        } else {
          CHECK_THROWS_AS(ed_disparity(t, g, opt), DisparityUndefined);
        }
      }
      auto expected_auc = brute_force_auc_disparity(t, g);
      if (expected_auc) {
        CHECK(auc_disparity(t, g).value == *expected_auc);
      } else {
        CHECK_THROWS_AS(auc_disparity(t, g), DisparityUndefined);
      }
    }
  }
  CHECK(compared > 100);
}

TEST_CASE("disparity properties") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    auto t = random_prediction_table(400, 2, 50 + seed, 0);
    // Squared scores with squared threshold.
    PredictionTable sq = t;
    for (double& s : sq.scores) s = s * s;
    sq.threshold = t.threshold * t.threshold;
    for (const auto& g : {Grouping::joint(), Grouping::attribute(0), Grouping::attribute(1)}) {
      const double ed = ed_disparity(t, g).value;
      CHECK(ed >= 0.0);
      CHECK(ed <= 1.0);
      CHECK(ed_disparity(sq, g).value == ed);
      CHECK(auc_disparity(sq, g).value == auc_disparity(t, g).value);
    }
    // Fully populated fixture: the joint max ranges over a refinement.
    const double joint = ed_disparity(t, Grouping::joint()).value;
    CHECK(joint >= ed_disparity(t, Grouping::attribute(0)).value);
    CHECK(joint >= ed_disparity(t, Grouping::attribute(1)).value);
  }
}

TEST_CASE("calibration curve") {
  PredictionTable t;
  t.scores = {0.1, 0.2, 0.7, 0.9};
  t.labels = {0, 1, 1, 1};
  t.attributes = BinaryTable(4, 1, {0, 0, 0, 0});
  auto curves = calibration_curve(t, Grouping::attribute(0), 2);
  REQUIRE(curves.size() == 1);
  CHECK(curves[0].bins[0].center == 0.25);
  CHECK(curves[0].bins[0].fraction == 0.5);
  CHECK(curves[0].bins[0].count == 2);
  CHECK(curves[0].bins[1].fraction == 1.0);

  auto all_pos = t;
  all_pos.labels = {1, 1, 1, 1};
  const auto all_pos_curves = calibration_curve(all_pos, Grouping::attribute(0), 10);
  for (const auto& b : all_pos_curves[0].bins) {
    if (b.count) {
      CHECK(b.fraction == 1.0);
    } else {
      CHECK(std::isnan(b.fraction));
    }
  }
  CHECK_THROWS(calibration_curve(t, Grouping::attribute(0), 1));

  std::ostringstream csv;
  write_calibration_csv(csv, calibration_curve(all_pos, Grouping::attribute(0), 10));
  CHECK(csv.str().find("null") != std::string::npos);
}

TEST_CASE("calibration of perfectly calibrated scores") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  PredictionTable t;
  const std::size_t n = 200000;
  std::vector<int> attrs(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double p = unif(rng);
    t.scores.push_back(p);
    t.labels.push_back(unif(rng) < p ? 1 : 0);
    attrs[i] = unif(rng) < 0.5 ? 1 : 0;
  }
  t.attributes = BinaryTable(n, 1, attrs);
  for (const auto& g : calibration_curve(t, Grouping::attribute(0), 10))
    for (const auto& b : g.bins) CHECK(std::abs(b.fraction - b.center) <= 0.05);
}

TEST_CASE("group positive rate") {
  std::vector<int> labels;
  std::vector<int> attrs;
  for (int i = 0; i < 1000; ++i) {
    labels.push_back(i < 264 ? 1 : 0);
    attrs.push_back(1);
  }
  for (int i = 0; i < 1000; ++i) {
    labels.push_back(i < 386 ? 1 : 0);
    attrs.push_back(0);
  }
  auto r = group_positive_rate(labels, BinaryTable(2000, 1, attrs), 0);
  CHECK(r.rate1 == doctest::Approx(0.264));
  CHECK(r.rate0 == doctest::Approx(0.386));
  CHECK(r.gap == doctest::Approx(0.122));

  auto balanced = group_positive_rate(std::vector<int>{1, 0, 1, 0}, BinaryTable(4, 1, {0, 0, 1, 1}), 0);
  CHECK(balanced.gap == 0.0);
  CHECK_THROWS(group_positive_rate(std::vector<int>{1, 0}, BinaryTable(2, 1, {1, 1}), 0));

  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto t = random_prediction_table(80, 2, 300 + seed, 0);
    for (std::size_t a = 0; a < 2; ++a) {
      std::size_t n1 = 0, p1 = 0, n0 = 0, p0 = 0;
      for (std::size_t i = 0; i < t.size(); ++i) {
        if (t.attributes(i, a)) {
          ++n1;
          p1 += t.labels[i];
        } else {
          ++n0;
          p0 += t.labels[i];
        }
      }
      auto g = group_positive_rate(t.labels, t.attributes, a);
      CHECK(g.rate1 == static_cast<double>(p1) / n1);
      CHECK(g.rate0 == static_cast<double>(p0) / n0);
    }
  }
}

TEST_CASE("fairness report serialization") {
  auto t = random_prediction_table(300, 3, 5, 0);
  auto report = evaluate_fairness(t);
  std::size_t total = 0;
  for (const auto& [k, v] : report.subgroup_counts) total += v;
  CHECK(total == 300);
  auto j = to_json(report);
  for (const char* field : {"auc", "joint_ed", "joint_auc_gap", "per_attribute", "subgroup_counts", "skipped_pairs"})
    CHECK(j.contains(field));
  auto back = fairness_report_from_json(nlohmann::json::parse(j.dump()));
  CHECK(back.auc == report.auc);
  CHECK(back.joint_ed == report.joint_ed);
  CHECK(back.per_attribute.size() == 3);

  std::stringstream csv;
  write_prediction_csv(csv, t);
  CHECK(csv.str().rfind("score,label,a_1,a_2,a_3\n", 0) == 0);
  auto parsed = read_prediction_csv(csv);
  CHECK(parsed.scores == t.scores);
  CHECK(parsed.attributes == t.attributes);
}
