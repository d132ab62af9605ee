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

// Utility and subgroup-fairness metrics for binary classifiers evaluated
// against binary sensitive attributes.
//
// Groups are either joint (every combination of all attributes, keyed by the
// bit string "a_1 a_2 ... a_m", e.g. "101") or a single attribute (keyed "0"
// or "1"). Groups too small to estimate a rate are excluded from the
// disparity and reported in `skipped`, never dropped silently.

#ifndef FCRO_FAIRMETRICS_HPP_
#define FCRO_FAIRMETRICS_HPP_

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fcro/table.hpp"
#include "json.hpp"

namespace fcro {

struct PredictionTable {
  std::vector<double> scores;  // in [0, 1]
  std::vector<int> labels;
  BinaryTable attributes;      // n x m
  double threshold = 0.5;

  std::size_t size() const { return scores.size(); }
  std::size_t num_attributes() const { return attributes.cols(); }
  void validate() const;
};

class Grouping {
 public:
  static Grouping joint() { return Grouping(-1); }
  static Grouping attribute(std::size_t index) { return Grouping(static_cast<int>(index)); }

  bool is_joint() const { return index_ < 0; }
  std::size_t attribute_index() const { return static_cast<std::size_t>(index_); }
  std::string name() const;
  // Key of sample `row` under this grouping.
  std::string key(const BinaryTable& attributes, std::size_t row) const;
  // Every possible key, in sorted order.
  std::vector<std::string> all_keys(std::size_t num_attributes) const;

 private:
  explicit Grouping(int index) : index_(index) {}
  int index_;
};

class DisparityUndefined : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct SkippedGroup {
  std::string grouping;
  std::string group;
  int label = -1;  // conditioning label, -1 when not label-specific
  std::string reason;
};

struct DisparityResult {
  double value = 0.0;
  std::vector<SkippedGroup> skipped;
};

enum class EdMode {
  kMaxOverLabels,  // max over y of the largest rate gap
  kMeanGap,        // mean of the TPR gap and the TNR gap
};

struct MetricOptions {
  std::size_t min_count = 5;
  EdMode ed_mode = EdMode::kMaxOverLabels;
};

// Mann-Whitney U / (n+ n-), ties count one half.
double auc(std::span<const double> scores, std::span<const int> labels);

DisparityResult ed_disparity(const PredictionTable& table, const Grouping& grouping,
                             const MetricOptions& options = {});
DisparityResult auc_disparity(const PredictionTable& table, const Grouping& grouping);

struct CalibrationBin {
  double center = 0.0;
  double fraction = 0.0;  // NaN for empty bins
  std::size_t count = 0;
};

struct GroupCalibration {
  std::string group;
  std::vector<CalibrationBin> bins;
};

std::vector<GroupCalibration> calibration_curve(const PredictionTable& table,
                                                const Grouping& grouping, std::size_t bins);

struct GroupRate {
  double rate1 = 0.0;  // P(y = 1 | a = 1)
  double rate0 = 0.0;  // P(y = 1 | a = 0)
  double gap = 0.0;
};

GroupRate group_positive_rate(std::span<const int> labels, const BinaryTable& attributes,
                              std::size_t attribute);

struct AttributeDisparity {
  std::size_t attribute = 0;
  std::optional<double> ed;
  std::optional<double> auc_gap;
};

// Undefined disparities are empty optionals (serialized as null).
struct FairnessReport {
  double auc = 0.0;
  std::optional<double> joint_ed;
  std::optional<double> joint_auc_gap;
  std::vector<AttributeDisparity> per_attribute;
  std::map<std::string, std::size_t> subgroup_counts;
  std::vector<SkippedGroup> skipped_pairs;

  // Mean individual ED over attributes; undefined entries count as 1.
  double mean_attribute_ed() const;
};

FairnessReport evaluate_fairness(const PredictionTable& table, const MetricOptions& options = {});

nlohmann::ordered_json to_json(const FairnessReport& report);
FairnessReport fairness_report_from_json(const nlohmann::json& j);

// Header `score,label,a_1,...,a_m`.
void write_prediction_csv(std::ostream& out, const PredictionTable& table);
PredictionTable read_prediction_csv(std::istream& in);

// Header `group,bin_center,fraction,count`; empty bins write `null`.
void write_calibration_csv(std::ostream& out, const std::vector<GroupCalibration>& curves);

}  // namespace fcro

#endif  // FCRO_FAIRMETRICS_HPP_
