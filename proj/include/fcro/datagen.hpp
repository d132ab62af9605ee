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

// Synthetic multi-attribute datasets with a controllable positive-rate gap
// per sensitive attribute.

#ifndef FCRO_DATAGEN_HPP_
#define FCRO_DATAGEN_HPP_

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fcro/linalg.hpp"
#include "fcro/table.hpp"
#include "json.hpp"

namespace fcro {

struct GenSpec {
  std::size_t n = 4000;
  std::size_t p = 32;
  std::size_t m = 3;
  double target_signal_strength = 2.0;
  double attribute_signal_strength = 3.0;
  double noise_sigma = 0.5;
  double base_positive_rate = 0.5;
  // Slope of the label logit in the latent target score.
  double label_sharpness = 2.0;
  // Per-attribute contribution to the label logit. Zero keeps the label
  // independent of the attributes before amplification.
  double attribute_label_coupling = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::ordered_json to_json(const GenSpec& spec);
// Missing fields keep their defaults; unknown fields are rejected.
GenSpec gen_spec_from_json(const nlohmann::json& j);

struct LabeledDataset {
  Matrix features;  // n x p, one row per sample
  std::vector<int> labels;
  BinaryTable attributes;  // n x m

  std::size_t size() const { return labels.size(); }
  std::size_t num_features() const { return features.cols(); }
  std::size_t num_attributes() const { return attributes.cols(); }
  void validate() const;

  LabeledDataset subset(std::span<const std::size_t> indices) const;
  friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;
};

LabeledDataset generate(const GenSpec& spec);

class InfeasibleGap : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AmplifyOptions {
  std::uint64_t seed = 0;
  // Stop once every attribute gap is within this distance of the target.
  double tolerance = 0.005;
};

struct AmplifyResult {
  LabeledDataset data;
  std::vector<std::size_t> kept;  // indices into the input, ascending
  std::vector<double> gaps;       // signed P(y=1|a=1) - P(y=1|a=0) per attribute
};

// Removes samples until every attribute's positive-rate gap magnitude equals
// `target_gap` (within the tolerance). The sign of each gap is preserved
// (non-negative when currently zero). Throws InfeasibleGap when no further
// removal brings the gaps closer.
AmplifyResult bias_amplify(const LabeledDataset& data, double target_gap,
                           const AmplifyOptions& options = {});

// Signed positive-rate gap P(y=1|a_i=1) - P(y=1|a_i=0) for each attribute.
std::vector<double> signed_gaps(std::span<const int> labels, const BinaryTable& attributes);

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

struct SplitResult {
  std::vector<std::size_t> test;
  std::vector<Fold> folds;
  std::vector<std::string> warnings;
};

// Stratified by (label, joint subgroup). Index lists are ascending.
SplitResult split(const LabeledDataset& data, double test_fraction, std::size_t folds,
                  std::uint64_t seed);

// Header `f_1..f_p,label,a_1..a_m`.
void write_dataset_csv(std::ostream& out, const LabeledDataset& data);
void write_dataset_csv(const std::string& path, const LabeledDataset& data);
LabeledDataset read_dataset_csv(std::istream& in);
LabeledDataset read_dataset_csv(const std::string& path);

}  // namespace fcro

#endif  // FCRO_DATAGEN_HPP_
