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

#include "fcro/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "csv_util.hpp"

namespace fcro {

void GenSpec::validate() const {
  std::vector<std::string> problems;
  if (n < 100) problems.push_back("n must be >= 100");
  if (m < 1) problems.push_back("m must be >= 1");
  if (m > 6) problems.push_back("m must be <= 6");
  if (p < m + 1) problems.push_back("p must be >= m + 1");
  if (!(base_positive_rate > 0.0 && base_positive_rate < 1.0)) {
    problems.push_back("base_positive_rate must be in (0, 1)");
  }
  if (!(noise_sigma >= 0.0)) problems.push_back("noise_sigma must be >= 0");
  for (double v : {target_signal_strength, attribute_signal_strength, label_sharpness,
                   attribute_label_coupling}) {
    if (!std::isfinite(v)) problems.push_back("signal strengths must be finite");
  }
  if (problems.empty()) return;
  std::string msg = "GenSpec:";
  for (const auto& p : problems) msg += " " + p + ";";
  throw std::invalid_argument(msg);
}

nlohmann::ordered_json to_json(const GenSpec& s) {
  return {{"n", s.n},
          {"p", s.p},
          {"m", s.m},
          {"target_signal_strength", s.target_signal_strength},
          {"attribute_signal_strength", s.attribute_signal_strength},
          {"noise_sigma", s.noise_sigma},
          {"base_positive_rate", s.base_positive_rate},
          {"label_sharpness", s.label_sharpness},
          {"attribute_label_coupling", s.attribute_label_coupling},
          {"seed", s.seed}};
}

GenSpec gen_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("GenSpec: expected a JSON object");
  GenSpec s;
  for (const auto& [key, value] : j.items()) {
    if (key == "n") s.n = value.get<std::size_t>();
    else if (key == "p") s.p = value.get<std::size_t>();
    else if (key == "m") s.m = value.get<std::size_t>();
    else if (key == "target_signal_strength") s.target_signal_strength = value.get<double>();
    else if (key == "attribute_signal_strength") s.attribute_signal_strength = value.get<double>();
    else if (key == "noise_sigma") s.noise_sigma = value.get<double>();
    else if (key == "base_positive_rate") s.base_positive_rate = value.get<double>();
    else if (key == "label_sharpness") s.label_sharpness = value.get<double>();
    else if (key == "attribute_label_coupling") s.attribute_label_coupling = value.get<double>();
    else if (key == "seed") s.seed = value.get<std::uint64_t>();
    else throw std::invalid_argument("GenSpec: unknown field '" + key + "'");
  }
  s.validate();
  return s;
}

void LabeledDataset::validate() const {
  if (features.rows() != labels.size() || attributes.rows() != labels.size()) {
    throw std::invalid_argument("LabeledDataset: " + std::to_string(features.rows()) + " feature rows, " +
                                std::to_string(labels.size()) + " labels, " +
                                std::to_string(attributes.rows()) + " attribute rows");
  }
  if (!features.all_finite()) throw std::invalid_argument("LabeledDataset: non-finite feature");
  for (int y : labels)
    if (y != 0 && y != 1) throw std::invalid_argument("LabeledDataset: labels must be 0 or 1");
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
  LabeledDataset out;
  out.features = Matrix(indices.size(), features.cols());
  out.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t r = indices[i];
    if (r >= size()) throw std::out_of_range("LabeledDataset::subset: index " + std::to_string(r));
    std::copy(features.row(r).begin(), features.row(r).end(), out.features.row(i).begin());
    out.labels.push_back(labels[r]);
  }
  out.attributes = attributes.select_rows(indices);
  return out;
}

LabeledDataset generate(const GenSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  // Column 0 is the target direction, columns 1..m the attribute directions.
  Matrix directions(spec.p, spec.m + 1);
  for (double& v : directions.data()) v = gauss(rng);
  if (!orthonormalize_columns(directions)) throw std::runtime_error("generate: degenerate directions");

  const double offset = std::log(spec.base_positive_rate / (1.0 - spec.base_positive_rate));
  LabeledDataset data;
  data.features = Matrix(spec.n, spec.p);
  data.labels.resize(spec.n);
  data.attributes = BinaryTable(spec.n, spec.m);
  std::vector<double> coef(spec.m + 1);
  for (std::size_t r = 0; r < spec.n; ++r) {
    double coupling = 0.0;
    for (std::size_t i = 0; i < spec.m; ++i) {
      const int a = unif(rng) < 0.5 ? 1 : 0;
      data.attributes(r, i) = a;
      coef[i + 1] = spec.attribute_signal_strength * a;
      coupling += a - 0.5;
    }
    const double t = gauss(rng);
    coef[0] = spec.target_signal_strength * t;
    const double score = spec.label_sharpness * t + offset + spec.attribute_label_coupling * coupling;
    data.labels[r] = unif(rng) < 1.0 / (1.0 + std::exp(-score)) ? 1 : 0;
    auto row = data.features.row(r);
    for (std::size_t f = 0; f < spec.p; ++f) {
      double v = spec.noise_sigma * gauss(rng);
      for (std::size_t k = 0; k <= spec.m; ++k) v += coef[k] * directions(f, k);
      row[f] = v;
    }
  }
  return data;
}

std::vector<double> signed_gaps(std::span<const int> labels, const BinaryTable& attributes) {
  if (labels.size() != attributes.rows()) throw std::invalid_argument("signed_gaps: length mismatch");
  std::vector<double> gaps;
  for (std::size_t i = 0; i < attributes.cols(); ++i) {
    std::size_t n[2] = {0, 0};
    std::size_t pos[2] = {0, 0};
    for (std::size_t r = 0; r < labels.size(); ++r) {
      const int a = attributes(r, i);
      ++n[a];
      pos[a] += labels[r];
    }
    if (n[0] == 0 || n[1] == 0) {
      throw std::invalid_argument("signed_gaps: attribute a_" + std::to_string(i + 1) + " has an empty side");
    }
    gaps.push_back(static_cast<double>(pos[1]) / n[1] - static_cast<double>(pos[0]) / n[0]);
  }
  return gaps;
}

namespace {

std::size_t joint_code(const BinaryTable& attributes, std::size_t row) {
  std::size_t code = 0;
  for (int v : attributes.row(row)) code = 2 * code + static_cast<std::size_t>(v);
  return code;
}

// Cell index (joint code, label) -> count; gaps computed from cell counts
// alone. Returns false when an attribute side is empty.
bool gaps_from_cells(const std::vector<std::size_t>& cells, std::size_t m, std::vector<double>& gaps) {
  gaps.assign(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t bit = std::size_t{1} << (m - 1 - i);
    double n[2] = {0, 0};
    double pos[2] = {0, 0};
    for (std::size_t cell = 0; cell < cells.size(); ++cell) {
      const int side = (cell / 2) & bit ? 1 : 0;
      n[side] += static_cast<double>(cells[cell]);
      if (cell % 2 == 1) pos[side] += static_cast<double>(cells[cell]);
    }
    if (n[0] == 0 || n[1] == 0) return false;
    gaps[i] = pos[1] / n[1] - pos[0] / n[0];
  }
  return true;
}

std::string format_gaps(const std::vector<double>& gaps) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < gaps.size(); ++i) out << (i ? ", " : "") << format_double(gaps[i]);
  out << ']';
  return out.str();
}

}  // namespace

AmplifyResult bias_amplify(const LabeledDataset& data, double target_gap, const AmplifyOptions& options) {
  data.validate();
  if (!(target_gap >= 0.0 && target_gap <= 1.0)) {
    throw std::invalid_argument("bias_amplify: target_gap must be in [0, 1]");
  }
  const std::size_t m = data.num_attributes();
  if (m == 0) throw std::invalid_argument("bias_amplify: dataset has no attributes");
  std::vector<std::size_t> cells(2 * (std::size_t{1} << m), 0);
  std::vector<std::vector<std::size_t>> members(cells.size());
  for (std::size_t r = 0; r < data.size(); ++r) {
    const std::size_t cell = 2 * joint_code(data.attributes, r) + static_cast<std::size_t>(data.labels[r]);
    ++cells[cell];
    members[cell].push_back(r);
  }

  std::vector<double> gaps;
  if (!gaps_from_cells(cells, m, gaps)) {
    throw std::invalid_argument("bias_amplify: some attribute has only one value present");
  }
  std::vector<double> targets(m);
  for (std::size_t i = 0; i < m; ++i) targets[i] = (gaps[i] < 0.0 ? -1.0 : 1.0) * target_gap;
  auto objective = [&](const std::vector<double>& g) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += (g[i] - targets[i]) * (g[i] - targets[i]);
    return s;
  };
  auto satisfied = [&](const std::vector<double>& g) {
    for (std::size_t i = 0; i < m; ++i)
      if (std::abs(g[i] - targets[i]) > options.tolerance) return false;
    return true;
  };

  // Greedy: remove one sample from whichever cell reduces the squared
  // distance to the targets the most.
  std::vector<std::size_t> removed(cells.size(), 0);
  std::vector<double> trial;
  double current = objective(gaps);
  std::size_t total_removed = 0;
  while (!satisfied(gaps)) {
    std::size_t best_cell = cells.size();
    double best = current;
    for (std::size_t cell = 0; cell < cells.size(); ++cell) {
      if (cells[cell] == 0) continue;
      --cells[cell];
      if (gaps_from_cells(cells, m, trial)) {
        const double value = objective(trial);
        if (value < best) {
          best = value;
          best_cell = cell;
        }
      }
      ++cells[cell];
    }
    if (best_cell == cells.size()) {
      double reached = 1.0;
      for (double g : gaps) reached = std::min(reached, std::abs(g));
      throw InfeasibleGap("bias_amplify: target gap " + format_double(target_gap) +
                          " is not achievable by removal; stalled at gaps " + format_gaps(gaps) +
                          " after removing " + std::to_string(total_removed) +
                          " samples (max achievable gap about " + format_double(reached) + ")");
    }
    --cells[best_cell];
    ++removed[best_cell];
    ++total_removed;
    current = best;
    gaps_from_cells(cells, m, gaps);
  }

  std::mt19937_64 rng(options.seed);
  std::vector<char> drop(data.size(), 0);
  for (std::size_t cell = 0; cell < members.size(); ++cell) {
    if (removed[cell] == 0) continue;
    auto order = members[cell];
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < removed[cell]; ++i) drop[order[i]] = 1;
  }
  AmplifyResult out;
  for (std::size_t r = 0; r < data.size(); ++r)
    if (!drop[r]) out.kept.push_back(r);
  out.data = data.subset(out.kept);
  out.gaps = signed_gaps(out.data.labels, out.data.attributes);
  return out;
}

SplitResult split(const LabeledDataset& data, double test_fraction, std::size_t folds, std::uint64_t seed) {
  data.validate();
  if (folds < 2) throw std::invalid_argument("split: folds must be >= 2");
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
    throw std::invalid_argument("split: test_fraction must be in [0, 1)");
  }
  const std::size_t m = data.num_attributes();
  std::map<std::size_t, std::vector<std::size_t>> strata;
  for (std::size_t r = 0; r < data.size(); ++r) {
    strata[2 * joint_code(data.attributes, r) + static_cast<std::size_t>(data.labels[r])].push_back(r);
  }

  SplitResult out;
  std::vector<std::vector<std::size_t>> groups;
  std::vector<std::size_t> fallback[2];
  for (auto& [key, rows] : strata) {
    if (rows.size() >= folds) {
      groups.push_back(std::move(rows));
      continue;
    }
    std::string subgroup(m, '0');
    for (std::size_t i = 0; i < m; ++i)
      if ((key / 2) & (std::size_t{1} << (m - 1 - i))) subgroup[i] = '1';
    out.warnings.push_back("stratum label=" + std::to_string(key % 2) + " subgroup=" + subgroup + " has " +
                           std::to_string(rows.size()) + " samples (< " + std::to_string(folds) +
                           " folds); stratified by label only");
    fallback[key % 2].insert(fallback[key % 2].end(), rows.begin(), rows.end());
  }
  for (auto& f : fallback) {
    std::sort(f.begin(), f.end());
    if (!f.empty()) groups.push_back(std::move(f));
  }

  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::size_t>> validation(folds);
  std::size_t seen = 0;
  std::size_t rotor = 0;
  for (auto& rows : groups) {
    std::shuffle(rows.begin(), rows.end(), rng);
    seen += rows.size();
    // Cumulative rounding keeps the overall test share close to the target.
    const auto want = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(seen)));
    const std::size_t take = std::min(rows.size(), want > out.test.size() ? want - out.test.size() : 0);
    out.test.insert(out.test.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(take));
    for (std::size_t i = take; i < rows.size(); ++i) {
      validation[rotor].push_back(rows[i]);
      rotor = (rotor + 1) % folds;
    }
  }
  std::sort(out.test.begin(), out.test.end());
  for (std::size_t f = 0; f < folds; ++f) {
    Fold fold;
    fold.validation = validation[f];
    std::sort(fold.validation.begin(), fold.validation.end());
    for (std::size_t g = 0; g < folds; ++g)
      if (g != f) fold.train.insert(fold.train.end(), validation[g].begin(), validation[g].end());
    std::sort(fold.train.begin(), fold.train.end());
    out.folds.push_back(std::move(fold));
  }
  return out;
}

void write_dataset_csv(std::ostream& out, const LabeledDataset& data) {
  data.validate();
  for (std::size_t f = 0; f < data.num_features(); ++f) out << "f_" << f + 1 << ',';
  out << "label";
  for (std::size_t i = 0; i < data.num_attributes(); ++i) out << ",a_" << i + 1;
  out << '\n';
  for (std::size_t r = 0; r < data.size(); ++r) {
    for (double v : data.features.row(r)) out << format_double(v) << ',';
    out << data.labels[r];
    for (int a : data.attributes.row(r)) out << ',' << a;
    out << '\n';
  }
}

void write_dataset_csv(const std::string& path, const LabeledDataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write dataset " + path);
  write_dataset_csv(out, data);
  if (!out) throw std::runtime_error("failed writing dataset " + path);
}

LabeledDataset read_dataset_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("dataset CSV: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split_csv_line(line);
  const auto label_pos = std::find(header.begin(), header.end(), "label");
  if (label_pos == header.end()) throw std::runtime_error("dataset CSV: header has no label column");
  const std::size_t p = static_cast<std::size_t>(label_pos - header.begin());
  const std::size_t m = header.size() - p - 1;
  for (std::size_t f = 0; f < p; ++f) {
    if (header[f] != "f_" + std::to_string(f + 1)) {
      throw std::runtime_error("dataset CSV: expected column f_" + std::to_string(f + 1) + ", got '" +
                               header[f] + "'");
    }
  }
  for (std::size_t i = 0; i < m; ++i) {
    if (header[p + 1 + i] != "a_" + std::to_string(i + 1)) {
      throw std::runtime_error("dataset CSV: expected column a_" + std::to_string(i + 1));
    }
  }
  std::vector<double> features;
  std::vector<int> labels;
  std::vector<int> attrs;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != header.size()) {
      throw std::runtime_error("dataset CSV: line " + std::to_string(line_no) + " has " +
                               std::to_string(fields.size()) + " fields, expected " +
                               std::to_string(header.size()));
    }
    for (std::size_t f = 0; f < p; ++f) features.push_back(detail::parse_double(fields[f], line_no));
    labels.push_back(detail::parse_binary(fields[p], line_no));
    for (std::size_t i = 0; i < m; ++i) attrs.push_back(detail::parse_binary(fields[p + 1 + i], line_no));
  }
  LabeledDataset data;
  const std::size_t n = labels.size();
  data.features = Matrix(n, p, std::move(features));
  data.labels = std::move(labels);
  data.attributes = BinaryTable(n, m, std::move(attrs));
  data.validate();
  return data;
}

LabeledDataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset " + path);
  return read_dataset_csv(in);
}

}  // namespace fcro
