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

#include "fcro/fairmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>

#include "csv_util.hpp"
#include "fcro/linalg.hpp"

namespace fcro {

void PredictionTable::validate() const {
  if (labels.size() != scores.size() || attributes.rows() != scores.size()) {
    throw std::invalid_argument("PredictionTable: " + std::to_string(scores.size()) + " scores, " +
                                std::to_string(labels.size()) + " labels, " +
                                std::to_string(attributes.rows()) + " attribute rows");
  }
  for (double s : scores)
    if (!std::isfinite(s)) throw std::invalid_argument("PredictionTable: non-finite score");
  for (int y : labels)
    if (y != 0 && y != 1) throw std::invalid_argument("PredictionTable: labels must be 0 or 1");
}

std::string Grouping::name() const {
  return is_joint() ? "joint" : "a_" + std::to_string(attribute_index() + 1);
}

std::string Grouping::key(const BinaryTable& attributes, std::size_t row) const {
  if (!is_joint()) return attributes(row, attribute_index()) ? "1" : "0";
  std::string k;
  k.reserve(attributes.cols());
  for (int v : attributes.row(row)) k.push_back(v ? '1' : '0');
  return k;
}

std::vector<std::string> Grouping::all_keys(std::size_t num_attributes) const {
  if (!is_joint()) return {"0", "1"};
  std::vector<std::string> keys;
  const std::size_t total = std::size_t{1} << num_attributes;
  for (std::size_t code = 0; code < total; ++code) {
    std::string k(num_attributes, '0');
    for (std::size_t i = 0; i < num_attributes; ++i)
      if (code & (std::size_t{1} << (num_attributes - 1 - i))) k[i] = '1';
    keys.push_back(std::move(k));
  }
  return keys;
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("auc: length mismatch");
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (int y : labels) n_pos += y == 1 ? 1 : 0;
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0) throw std::invalid_argument("auc: no positive labels");
  if (n_neg == 0) throw std::invalid_argument("auc: no negative labels");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of mid-ranks of the positives, computed in doubled units so ties stay integral.
  std::size_t doubled_rank_sum = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const std::size_t doubled_mid = (i + 1) + (j + 1);
    for (std::size_t t = i; t <= j; ++t)
      if (labels[order[t]] == 1) doubled_rank_sum += doubled_mid;
    i = j + 1;
  }
  // U = R+ - n+(n+ + 1)/2, all doubled.
  const double doubled_u =
      static_cast<double>(doubled_rank_sum) - static_cast<double>(n_pos * (n_pos + 1));
  return doubled_u / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

namespace {

struct GroupStats {
  std::size_t count = 0;
  std::size_t with_label[2] = {0, 0};
  std::size_t correct[2] = {0, 0};  // yhat == y, split by y
};

std::map<std::string, GroupStats> collect(const PredictionTable& table, const Grouping& grouping) {
  std::map<std::string, GroupStats> stats;
  for (const auto& k : grouping.all_keys(table.num_attributes())) stats[k];
  for (std::size_t r = 0; r < table.size(); ++r) {
    auto& g = stats[grouping.key(table.attributes, r)];
    const int y = table.labels[r];
    const int yhat = table.scores[r] >= table.threshold ? 1 : 0;
    ++g.count;
    ++g.with_label[y];
    if (yhat == y) ++g.correct[y];
  }
  return stats;
}

void check_grouping(const PredictionTable& table, const Grouping& grouping) {
  table.validate();
  if (!grouping.is_joint() && grouping.attribute_index() >= table.num_attributes()) {
    throw std::invalid_argument("attribute index " + std::to_string(grouping.attribute_index()) +
                                " out of range for " + std::to_string(table.num_attributes()) +
                                " attributes");
  }
}

}  // namespace

DisparityResult ed_disparity(const PredictionTable& table, const Grouping& grouping,
                             const MetricOptions& options) {
  check_grouping(table, grouping);
  const auto stats = collect(table, grouping);
  const std::size_t min_count = std::max<std::size_t>(options.min_count, 1);
  DisparityResult out;
  std::vector<double> gaps;
  for (int y : {1, 0}) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    std::size_t eligible = 0;
    for (const auto& [key, g] : stats) {
      if (g.with_label[y] < min_count) {
        out.skipped.push_back({grouping.name(), key, y,
                               std::to_string(g.with_label[y]) + " samples with label " +
                                   std::to_string(y) + " (minimum " + std::to_string(min_count) + ")"});
        continue;
      }
      const double rate = static_cast<double>(g.correct[y]) / static_cast<double>(g.with_label[y]);
      lo = std::min(lo, rate);
      hi = std::max(hi, rate);
      ++eligible;
    }
    if (eligible >= 2) gaps.push_back(hi - lo);
  }
  if (gaps.empty()) {
    throw DisparityUndefined("ed_disparity(" + grouping.name() +
                             "): disparity undefined, fewer than two eligible groups for both labels");
  }
  if (options.ed_mode == EdMode::kMaxOverLabels) {
    out.value = *std::max_element(gaps.begin(), gaps.end());
  } else {
    out.value = std::accumulate(gaps.begin(), gaps.end(), 0.0) / static_cast<double>(gaps.size());
  }
  return out;
}

DisparityResult auc_disparity(const PredictionTable& table, const Grouping& grouping) {
  check_grouping(table, grouping);
  std::map<std::string, std::vector<std::size_t>> members;
  for (const auto& k : grouping.all_keys(table.num_attributes())) members[k];
  for (std::size_t r = 0; r < table.size(); ++r) members[grouping.key(table.attributes, r)].push_back(r);

  DisparityResult out;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  std::size_t eligible = 0;
  for (const auto& [key, rows] : members) {
    std::vector<double> s;
    std::vector<int> y;
    std::size_t pos = 0;
    for (std::size_t r : rows) {
      s.push_back(table.scores[r]);
      y.push_back(table.labels[r]);
      pos += table.labels[r];
    }
    if (pos == 0 || pos == rows.size()) {
      out.skipped.push_back({grouping.name(), key, -1,
                             rows.empty() ? "no samples"
                                          : std::string("only label ") + (pos == 0 ? "0" : "1") + " present"});
      continue;
    }
    const double a = auc(s, y);
    lo = std::min(lo, a);
    hi = std::max(hi, a);
    ++eligible;
  }
  if (eligible < 2) {
    throw DisparityUndefined("auc_disparity(" + grouping.name() +
                             "): disparity undefined, fewer than two groups with both labels");
  }
  out.value = hi - lo;
  return out;
}

std::vector<GroupCalibration> calibration_curve(const PredictionTable& table,
                                                const Grouping& grouping, std::size_t bins) {
  check_grouping(table, grouping);
  if (bins < 2) throw std::invalid_argument("calibration_curve: need at least 2 bins");
  std::map<std::string, std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> acc;
  for (std::size_t r = 0; r < table.size(); ++r) {
    auto& [counts, positives] = acc[grouping.key(table.attributes, r)];
    if (counts.empty()) {
      counts.assign(bins, 0);
      positives.assign(bins, 0);
    }
    const double s = std::clamp(table.scores[r], 0.0, 1.0);
    const std::size_t b =
        std::min(static_cast<std::size_t>(s * static_cast<double>(bins)), bins - 1);
    ++counts[b];
    positives[b] += table.labels[r];
  }
  std::vector<GroupCalibration> out;
  for (const auto& [key, cp] : acc) {
    GroupCalibration g;
    g.group = key;
    for (std::size_t b = 0; b < bins; ++b) {
      CalibrationBin bin;
      bin.center = (static_cast<double>(b) + 0.5) / static_cast<double>(bins);
      bin.count = cp.first[b];
      bin.fraction = bin.count ? static_cast<double>(cp.second[b]) / static_cast<double>(bin.count)
                               : std::numeric_limits<double>::quiet_NaN();
      g.bins.push_back(bin);
    }
    out.push_back(std::move(g));
  }
  return out;
}

GroupRate group_positive_rate(std::span<const int> labels, const BinaryTable& attributes,
                              std::size_t attribute) {
  if (labels.size() != attributes.rows()) throw std::invalid_argument("group_positive_rate: length mismatch");
  if (attribute >= attributes.cols()) throw std::invalid_argument("group_positive_rate: attribute out of range");
  std::size_t n[2] = {0, 0};
  std::size_t pos[2] = {0, 0};
  for (std::size_t r = 0; r < labels.size(); ++r) {
    const int a = attributes(r, attribute);
    ++n[a];
    pos[a] += labels[r];
  }
  if (n[0] == 0 || n[1] == 0) {
    throw std::invalid_argument("group_positive_rate: attribute a_" + std::to_string(attribute + 1) +
                                " has no samples with value " + (n[0] == 0 ? "0" : "1"));
  }
  GroupRate out;
  out.rate1 = static_cast<double>(pos[1]) / static_cast<double>(n[1]);
  out.rate0 = static_cast<double>(pos[0]) / static_cast<double>(n[0]);
  out.gap = std::abs(out.rate1 - out.rate0);
  return out;
}

double FairnessReport::mean_attribute_ed() const {
  if (per_attribute.empty()) return 0.0;
  double s = 0.0;
  for (const auto& a : per_attribute) s += a.ed.value_or(1.0);
  return s / static_cast<double>(per_attribute.size());
}

FairnessReport evaluate_fairness(const PredictionTable& table, const MetricOptions& options) {
  table.validate();
  FairnessReport report;
  report.auc = auc(table.scores, table.labels);
  auto absorb = [&](auto&& compute, std::optional<double>& slot) {
    try {
      auto r = compute();
      slot = r.value;
      report.skipped_pairs.insert(report.skipped_pairs.end(), r.skipped.begin(), r.skipped.end());
    } catch (const DisparityUndefined& e) {
      report.skipped_pairs.push_back({"", "", -1, e.what()});
    }
  };
  const Grouping joint = Grouping::joint();
  absorb([&] { return ed_disparity(table, joint, options); }, report.joint_ed);
  absorb([&] { return auc_disparity(table, joint); }, report.joint_auc_gap);
  for (std::size_t i = 0; i < table.num_attributes(); ++i) {
    AttributeDisparity a;
    a.attribute = i;
    const Grouping g = Grouping::attribute(i);
    absorb([&] { return ed_disparity(table, g, options); }, a.ed);
    absorb([&] { return auc_disparity(table, g); }, a.auc_gap);
    report.per_attribute.push_back(a);
  }
  for (std::size_t r = 0; r < table.size(); ++r) ++report.subgroup_counts[joint.key(table.attributes, r)];
  return report;
}

namespace {

nlohmann::ordered_json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

std::optional<double> optional_from(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace

nlohmann::ordered_json to_json(const FairnessReport& report) {
  nlohmann::ordered_json j;
  j["auc"] = report.auc;
  j["joint_ed"] = optional_json(report.joint_ed);
  j["joint_auc_gap"] = optional_json(report.joint_auc_gap);
  auto per = nlohmann::ordered_json::array();
  for (const auto& a : report.per_attribute) {
    per.push_back({{"attribute", a.attribute}, {"ed", optional_json(a.ed)}, {"auc_gap", optional_json(a.auc_gap)}});
  }
  j["per_attribute"] = per;
  nlohmann::ordered_json counts = nlohmann::ordered_json::object();
  for (const auto& [k, v] : report.subgroup_counts) counts[k] = v;
  j["subgroup_counts"] = counts;
  auto skipped = nlohmann::ordered_json::array();
  for (const auto& s : report.skipped_pairs) {
    skipped.push_back({{"grouping", s.grouping}, {"group", s.group}, {"label", s.label}, {"reason", s.reason}});
  }
  j["skipped_pairs"] = skipped;
  return j;
}

FairnessReport fairness_report_from_json(const nlohmann::json& j) {
  FairnessReport r;
  r.auc = j.at("auc").get<double>();
  r.joint_ed = optional_from(j.at("joint_ed"));
  r.joint_auc_gap = optional_from(j.at("joint_auc_gap"));
  for (const auto& a : j.at("per_attribute")) {
    r.per_attribute.push_back({a.at("attribute").get<std::size_t>(), optional_from(a.at("ed")),
                               optional_from(a.at("auc_gap"))});
  }
  for (const auto& [k, v] : j.at("subgroup_counts").items()) r.subgroup_counts[k] = v.get<std::size_t>();
  for (const auto& s : j.at("skipped_pairs")) {
    r.skipped_pairs.push_back({s.at("grouping").get<std::string>(), s.at("group").get<std::string>(),
                               s.at("label").get<int>(), s.at("reason").get<std::string>()});
  }
  return r;
}

void write_prediction_csv(std::ostream& out, const PredictionTable& table) {
  table.validate();
  out << "score,label";
  for (std::size_t i = 0; i < table.num_attributes(); ++i) out << ",a_" << i + 1;
  out << '\n';
  for (std::size_t r = 0; r < table.size(); ++r) {
    out << format_double(table.scores[r]) << ',' << table.labels[r];
    for (int a : table.attributes.row(r)) out << ',' << a;
    out << '\n';
  }
}

PredictionTable read_prediction_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("prediction CSV: missing header");
  const auto header = detail::split_csv_line(line);
  if (header.size() < 2 || header[0] != "score" || header[1] != "label") {
    throw std::runtime_error("prediction CSV: header must start with score,label");
  }
  const std::size_t m = header.size() - 2;
  for (std::size_t i = 0; i < m; ++i) {
    if (header[2 + i] != "a_" + std::to_string(i + 1)) {
      throw std::runtime_error("prediction CSV: expected column a_" + std::to_string(i + 1));
    }
  }
  PredictionTable t;
  std::vector<int> attrs;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != header.size()) {
      throw std::runtime_error("prediction CSV: line " + std::to_string(line_no) + " has " +
                               std::to_string(f.size()) + " fields");
    }
    t.scores.push_back(detail::parse_double(f[0], line_no));
    t.labels.push_back(detail::parse_binary(f[1], line_no));
    for (std::size_t i = 0; i < m; ++i) attrs.push_back(detail::parse_binary(f[2 + i], line_no));
  }
  t.attributes = BinaryTable(t.scores.size(), m, std::move(attrs));
  t.validate();
  return t;
}

void write_calibration_csv(std::ostream& out, const std::vector<GroupCalibration>& curves) {
  out << "group,bin_center,fraction,count\n";
  for (const auto& g : curves) {
    for (const auto& b : g.bins) {
      out << g.group << ',' << format_double(b.center) << ','
          << (std::isnan(b.fraction) ? std::string("null") : format_double(b.fraction)) << ','
          << b.count << '\n';
    }
  }
}

}  // namespace fcro
