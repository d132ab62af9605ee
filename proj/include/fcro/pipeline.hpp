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

// Two-branch training: a sensitive encoder with one logistic head per
// attribute is pretrained and frozen, its representations define a low-rank
// sensitive space, and the target encoder and head are then trained with
// cross-entropy plus the column and row orthogonality penalties.
//
// Everything here is a deterministic function of the configuration and
// seeds. Folds may run on separate threads; results are stored by fold
// index so the output does not depend on scheduling.

#ifndef FCRO_PIPELINE_HPP_
#define FCRO_PIPELINE_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fcro/datagen.hpp"
#include "fcro/fairmetrics.hpp"
#include "fcro/linalg.hpp"
#include "fcro/nets.hpp"
#include "fcro/subspace.hpp"
#include "json.hpp"

namespace fcro {

enum class SpaceMode { kBatch, kAccumulative };

std::string to_string(SpaceMode mode);
SpaceMode space_mode_from_string(const std::string& name);

struct TrainConfig {
  double lambda_c = 80.0;
  double lambda_r = 500.0;
  std::size_t k = 3;
  std::size_t epochs = 40;
  std::size_t sensitive_epochs = 40;
  std::size_t batch_size = 128;
  double lr = 1e-4;
  double weight_decay = 4e-4;
  std::size_t rep_dim = 16;
  std::vector<std::size_t> hidden_dims{64};
  Activation activation = Activation::kRelu;
  SpaceMode space_mode = SpaceMode::kBatch;
  std::size_t accumulation_epochs = 3;
  bool enable_corth = true;
  bool enable_rorth = true;
  // Unit-normalize representation columns before the orthogonality losses.
  bool normalize_representations = false;
  std::uint64_t seed = 0;

  double test_fraction = 0.15;
  std::size_t folds = 5;
  std::size_t selection_top = 5;
  std::size_t calibration_bins = 10;
  MetricOptions metrics;

  // Throws std::invalid_argument listing every violated constraint.
  void validate() const;
};

nlohmann::ordered_json to_json(const TrainConfig& config);
// Missing fields keep their defaults; unknown fields are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j);

// Seed for an independent random stream derived from a base seed and a tag.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag);

// Samples as columns: p x n.
Matrix feature_columns(const LabeledDataset& data);
Matrix feature_columns(const LabeledDataset& data, std::span<const std::size_t> rows);

struct SensitiveModel {
  MlpParams encoder;  // p -> d
  MlpParams heads;    // d -> m, one logit per attribute
  std::vector<double> validation_auc;
  std::vector<std::string> warnings;
};

// Zero sensitive_epochs returns the initialized parameters.
SensitiveModel pretrain_sensitive(const LabeledDataset& train, const LabeledDataset& validation,
                                  const TrainConfig& config, std::uint64_t seed);

struct SpaceReport {
  SubspaceBasis basis;
  double captured_variance = 0.0;
  std::vector<std::string> warnings;
};

SpaceReport build_sensitive_space(const MlpParams& sensitive_encoder, const LabeledDataset& train,
                                  const TrainConfig& config, std::uint64_t seed);

struct TargetModel {
  MlpParams encoder;  // p -> d
  MlpParams head;     // d -> 1
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double l_t = 0.0;       // batch means
  double l_corth = 0.0;
  double l_rorth = 0.0;
  double l_targ = 0.0;
  FairnessReport validation;
};

struct BatchTrace {
  std::size_t fold = 0;
  std::size_t epoch = 0;
  std::size_t batch = 0;
  double objective = 0.0;
  // Squared norm of the gradient assigned to the sensitive branch, and
  // whether its parameters are bit-identical to the frozen copy.
  double sensitive_grad_squared_norm = 0.0;
  bool sensitive_unchanged = true;
};

using BatchObserver = std::function<void(const BatchTrace&)>;

struct TargetRun {
  std::vector<EpochRecord> epochs;
  std::vector<TargetModel> checkpoints;  // one per epoch, same order
  std::vector<std::string> warnings;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Throws TrainingError naming the epoch and batch on a non-finite loss.
TargetRun train_target(const LabeledDataset& train, const LabeledDataset& validation,
                       const SensitiveModel& sensitive, const SubspaceBasis& basis,
                       const TrainConfig& config, std::uint64_t seed,
                       const BatchObserver& observer = {});

// Cross-entropy only, no sensitive branch. Shares batching and initialization
// with train_target.
TargetRun train_erm(const LabeledDataset& train, const LabeledDataset& validation,
                    const TrainConfig& config, std::uint64_t seed);

// Scores in [0, 1] for every sample.
std::vector<double> predict_scores(const TargetModel& model, const LabeledDataset& data);
PredictionTable prediction_table(const TargetModel& model, const LabeledDataset& data);
FairnessReport evaluate_model(const TargetModel& model, const LabeledDataset& data,
                              const MetricOptions& options = {});

struct CheckpointSummary {
  std::size_t epoch = 0;
  double auc = 0.0;
  double mean_attribute_ed = 0.0;
};

// Among the `top` checkpoints by AUC, the one with the lowest mean individual
// ED; ties go to higher AUC, then the earlier epoch. Returns an index.
std::size_t select_model(std::span<const CheckpointSummary> checkpoints, std::size_t top = 5);

// select_model over the validation summaries of every epoch of a run.
std::size_t select_checkpoint(const TargetRun& run, std::size_t top = 5);

struct RunRecord {
  std::size_t fold = 0;
  std::uint64_t seed = 0;
  std::vector<EpochRecord> epochs;
  std::size_t selected_epoch = 0;  // 1-based
  double captured_variance = 0.0;
  std::vector<double> sensitive_auc;
  FairnessReport test;
  std::vector<GroupCalibration> calibration;
  std::vector<std::string> warnings;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single value
  std::size_t count = 0;
};

MeanStd mean_std(std::span<const double> values);

struct AggregateReport {
  MeanStd auc;
  MeanStd joint_ed;
  MeanStd joint_auc_gap;
  MeanStd mean_attribute_ed;
  MeanStd captured_variance;
  std::vector<MeanStd> attribute_ed;
  std::vector<MeanStd> attribute_auc_gap;
};

struct ExperimentReport {
  TrainConfig config;
  GenSpec gen_spec;
  double target_gap = 0.0;
  std::vector<double> amplified_gaps;
  std::size_t dataset_size = 0;
  std::vector<RunRecord> per_fold;
  AggregateReport aggregate;
  std::vector<std::string> warnings;
};

struct ExperimentOptions {
  std::size_t parallel_folds = 1;
  // Called from the worker thread of the fold being trained; must be
  // thread-safe when parallel_folds > 1.
  BatchObserver observer;
};

// A stage failure with the fold and stage attached to the message.
class StageError : public std::runtime_error {
 public:
  StageError(std::size_t fold, const std::string& stage, const std::string& what);
  std::size_t fold() const { return fold_; }
  const std::string& stage() const { return stage_; }

 private:
  std::size_t fold_;
  std::string stage_;
};

// The generated dataset amplified to target_gap, as used by run_experiment.
AmplifyResult generate_amplified(const GenSpec& gen_spec, double target_gap);
// Test set plus folds; folds = 1 yields a 5-way split.
SplitResult experiment_split(const LabeledDataset& data, const TrainConfig& config);

// generate -> amplify -> split -> per fold (pretrain, space, train, select)
// -> evaluate on the shared test set. folds = 1 runs the first fold of a
// 5-way split. Stage failures are rethrown with the fold attached.
ExperimentReport run_experiment(const TrainConfig& config, const GenSpec& gen_spec, double target_gap,
                                const ExperimentOptions& options = {});

// Runs one fold of an already prepared split.
RunRecord run_fold(const LabeledDataset& data, const SplitResult& split, std::size_t fold,
                   const TrainConfig& config, const ExperimentOptions& options = {});

nlohmann::ordered_json to_json(const EpochRecord& record);
nlohmann::ordered_json to_json(const AggregateReport& aggregate);
nlohmann::ordered_json to_json(const ExperimentReport& report);

struct AblationRow {
  std::string setting;
  double value = 0.0;
  AggregateReport aggregate;
};

// parameter is one of "lambda_c", "lambda_r", "k".
std::vector<AblationRow> ablate(const TrainConfig& config, const GenSpec& gen_spec, double target_gap,
                                const std::string& parameter, std::span<const double> values,
                                const ExperimentOptions& options = {});

// Header `setting,value,auc_mean,auc_std,ed_mean,ed_std,variance_captured`.
void write_ablation_csv(std::ostream& out, std::span<const AblationRow> rows);
// Header `auc,ed,setting`.
void write_tradeoff_csv(std::ostream& out, std::span<const AblationRow> rows);

}  // namespace fcro

#endif  // FCRO_PIPELINE_HPP_
