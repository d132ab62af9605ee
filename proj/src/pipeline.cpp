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

#include "fcro/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <numeric>
#include <ostream>
#include <random>
#include <thread>

#include "fcro/losses.hpp"

namespace fcro {

namespace {

// Stream tags for derive_seed; one independent stream per use.
constexpr std::uint64_t kSensitiveEncoderInit = 1;
constexpr std::uint64_t kSensitiveHeadInit = 2;
constexpr std::uint64_t kSensitiveBatches = 3;
constexpr std::uint64_t kAccumulationBatches = 4;
constexpr std::uint64_t kTargetEncoderInit = 5;
constexpr std::uint64_t kTargetHeadInit = 6;
constexpr std::uint64_t kTargetBatches = 7;
constexpr std::uint64_t kAmplify = 8;
constexpr std::uint64_t kSplit = 9;

std::string ed_mode_name(EdMode mode) { return mode == EdMode::kMaxOverLabels ? "max_over_labels" : "mean_gap"; }

EdMode ed_mode_from_string(const std::string& name) {
  if (name == "max_over_labels") return EdMode::kMaxOverLabels;
  if (name == "mean_gap") return EdMode::kMeanGap;
  throw std::invalid_argument("unknown ed_mode '" + name + "' (expected max_over_labels or mean_gap)");
}

// Shuffled mini-batches of row indices, one call per epoch.
class Batcher {
 public:
  Batcher(std::size_t n, std::size_t batch_size, std::uint64_t seed)
      : order_(n), batch_size_(batch_size), rng_(seed) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
  }

  std::vector<std::vector<std::size_t>> next_epoch() {
    std::shuffle(order_.begin(), order_.end(), rng_);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < order_.size(); start += batch_size_) {
      const std::size_t end = std::min(order_.size(), start + batch_size_);
      batches.emplace_back(order_.begin() + static_cast<std::ptrdiff_t>(start),
                           order_.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
  }

 private:
  std::vector<std::size_t> order_;
  std::size_t batch_size_;
  std::mt19937_64 rng_;
};

std::vector<int> gather(const std::vector<int>& values, std::span<const std::size_t> rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(values[r]);
  return out;
}

AdamConfig adam_config(const TrainConfig& c) {
  AdamConfig a;
  a.lr = c.lr;
  a.weight_decay = c.weight_decay;
  return a;
}

TargetModel init_target(const LabeledDataset& train, const TrainConfig& config, std::uint64_t seed) {
  TargetModel m;
  m.encoder = init({train.num_features(), config.hidden_dims, config.rep_dim, config.activation,
                    derive_seed(seed, kTargetEncoderInit)});
  m.head = init({config.rep_dim, {}, 1, config.activation, derive_seed(seed, kTargetHeadInit)});
  return m;
}

void check_finite(double value, const char* what, std::size_t epoch, std::size_t batch) {
  if (!std::isfinite(value)) {
    throw TrainingError(std::string(what) + ": non-finite loss at epoch " + std::to_string(epoch) +
                        ", batch " + std::to_string(batch));
  }
}

void check_finite(const Matrix& logits, const char* what, std::size_t epoch, std::size_t batch) {
  for (double v : logits.data()) check_finite(v, what, epoch, batch);
}

LossResult zero_loss(const Matrix& like) {
  LossResult r;
  r.grad = Matrix(like.rows(), like.cols());
  return r;
}

bool same_params(const MlpParams& a, const MlpParams& b) {
  return a.weights == b.weights && a.biases == b.biases;
}

void append_unique(std::vector<std::string>& out, const std::vector<std::string>& in) {
  for (const auto& w : in)
    if (std::find(out.begin(), out.end(), w) == out.end()) out.push_back(w);
}

}  // namespace

std::string to_string(SpaceMode mode) { return mode == SpaceMode::kBatch ? "batch" : "accumulative"; }

SpaceMode space_mode_from_string(const std::string& name) {
  if (name == "batch") return SpaceMode::kBatch;
  if (name == "accumulative") return SpaceMode::kAccumulative;
  throw std::invalid_argument("unknown space_mode '" + name + "' (expected batch or accumulative)");
}

void TrainConfig::validate() const {
  std::vector<std::string> problems;
  if (!(lambda_c >= 0.0) || !std::isfinite(lambda_c)) problems.push_back("lambda_c must be finite and >= 0");
  if (!(lambda_r >= 0.0) || !std::isfinite(lambda_r)) problems.push_back("lambda_r must be finite and >= 0");
  if (rep_dim < 1) problems.push_back("rep_dim must be >= 1");
  if (k < 1 || k > rep_dim) problems.push_back("k must be in [1, rep_dim]");
  if (batch_size < 1) problems.push_back("batch_size must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) problems.push_back("lr must be > 0");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) problems.push_back("weight_decay must be >= 0");
  for (auto h : hidden_dims)
    if (h < 1) problems.push_back("hidden_dims entries must be >= 1");
  if (accumulation_epochs < 1) problems.push_back("accumulation_epochs must be >= 1");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) problems.push_back("test_fraction must be in (0, 1)");
  if (folds < 1) problems.push_back("folds must be >= 1");
  if (selection_top < 1) problems.push_back("selection_top must be >= 1");
  if (calibration_bins < 2) problems.push_back("calibration_bins must be >= 2");
  if (metrics.min_count < 1) problems.push_back("min_count must be >= 1");
  if (problems.empty()) return;
  std::string msg = "TrainConfig:";
  for (const auto& p : problems) msg += " " + p + ";";
  throw std::invalid_argument(msg);
}

nlohmann::ordered_json to_json(const TrainConfig& c) {
  return {{"lambda_c", c.lambda_c},
          {"lambda_r", c.lambda_r},
          {"k", c.k},
          {"epochs", c.epochs},
          {"sensitive_epochs", c.sensitive_epochs},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"weight_decay", c.weight_decay},
          {"rep_dim", c.rep_dim},
          {"hidden_dims", c.hidden_dims},
          {"activation", to_string(c.activation)},
          {"space_mode", to_string(c.space_mode)},
          {"accumulation_epochs", c.accumulation_epochs},
          {"enable_corth", c.enable_corth},
          {"enable_rorth", c.enable_rorth},
          {"normalize_representations", c.normalize_representations},
          {"seed", c.seed},
          {"test_fraction", c.test_fraction},
          {"folds", c.folds},
          {"selection_top", c.selection_top},
          {"calibration_bins", c.calibration_bins},
          {"min_count", c.metrics.min_count},
          {"ed_mode", ed_mode_name(c.metrics.ed_mode)}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("TrainConfig: expected a JSON object");
  TrainConfig c;
  std::vector<std::string> problems;
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "lambda_c") c.lambda_c = v.get<double>();
      else if (key == "lambda_r") c.lambda_r = v.get<double>();
      else if (key == "k") c.k = v.get<std::size_t>();
      else if (key == "epochs") c.epochs = v.get<std::size_t>();
      else if (key == "sensitive_epochs") c.sensitive_epochs = v.get<std::size_t>();
      else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
      else if (key == "lr") c.lr = v.get<double>();
      else if (key == "weight_decay") c.weight_decay = v.get<double>();
      else if (key == "rep_dim") c.rep_dim = v.get<std::size_t>();
      else if (key == "hidden_dims") c.hidden_dims = v.get<std::vector<std::size_t>>();
      else if (key == "activation") c.activation = activation_from_string(v.get<std::string>());
      else if (key == "space_mode") c.space_mode = space_mode_from_string(v.get<std::string>());
      else if (key == "accumulation_epochs") c.accumulation_epochs = v.get<std::size_t>();
      else if (key == "enable_corth") c.enable_corth = v.get<bool>();
      else if (key == "enable_rorth") c.enable_rorth = v.get<bool>();
      else if (key == "normalize_representations") c.normalize_representations = v.get<bool>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "test_fraction") c.test_fraction = v.get<double>();
      else if (key == "folds") c.folds = v.get<std::size_t>();
      else if (key == "selection_top") c.selection_top = v.get<std::size_t>();
      else if (key == "calibration_bins") c.calibration_bins = v.get<std::size_t>();
      else if (key == "min_count") c.metrics.min_count = v.get<std::size_t>();
      else if (key == "ed_mode") c.metrics.ed_mode = ed_mode_from_string(v.get<std::string>());
      else problems.push_back("unknown field '" + key + "'");
    } catch (const nlohmann::json::exception&) {
      problems.push_back("field '" + key + "' has the wrong type");
    } catch (const std::invalid_argument& e) {
      problems.push_back(e.what());
    }
  }
  if (!problems.empty()) {
    std::string msg = "TrainConfig:";
    for (const auto& p : problems) msg += " " + p + ";";
    throw std::invalid_argument(msg);
  }
  c.validate();
  return c;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
  // splitmix64 finalizer over the combined words.
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Matrix feature_columns(const LabeledDataset& data) {
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return feature_columns(data, all);
}

Matrix feature_columns(const LabeledDataset& data, std::span<const std::size_t> rows) {
  Matrix x(data.num_features(), rows.size());
  for (std::size_t j = 0; j < rows.size(); ++j) {
    const auto src = data.features.row(rows[j]);
    for (std::size_t f = 0; f < src.size(); ++f) x(f, j) = src[f];
  }
  return x;
}

SensitiveModel pretrain_sensitive(const LabeledDataset& train, const LabeledDataset& validation,
                                  const TrainConfig& config, std::uint64_t seed) {
  config.validate();
  train.validate();
  const std::size_t m = train.num_attributes();
  if (m < 1) throw std::invalid_argument("pretrain_sensitive: dataset has no sensitive attributes");
  SensitiveModel model;
  model.encoder = init({train.num_features(), config.hidden_dims, config.rep_dim, config.activation,
                        derive_seed(seed, kSensitiveEncoderInit)});
  model.heads = init({config.rep_dim, {}, m, config.activation, derive_seed(seed, kSensitiveHeadInit)});
  AdamState enc_opt = adam_init(model.encoder, adam_config(config));
  AdamState head_opt = adam_init(model.heads, adam_config(config));
  Batcher batcher(train.size(), config.batch_size, derive_seed(seed, kSensitiveBatches));

  for (std::size_t epoch = 1; epoch <= config.sensitive_epochs; ++epoch) {
    const auto batches = batcher.next_epoch();
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const Matrix x = feature_columns(train, batches[b]);
      auto enc = forward(model.encoder, x);
      auto heads = forward(model.heads, enc.z);
      check_finite(heads.z, "pretrain_sensitive", epoch, b);
      auto loss = sens_loss(heads.z, train.attributes.select_rows(batches[b]));
      check_finite(loss.value, "pretrain_sensitive", epoch, b);
      auto head_back = backward(model.heads, heads.cache, loss.grad);
      auto enc_back = backward(model.encoder, enc.cache, head_back.grad_x);
      adam_step(head_opt, model.heads, head_back.grads);
      adam_step(enc_opt, model.encoder, enc_back.grads);
    }
  }

  if (validation.size() > 0) {
    const Matrix logits = predict(model.heads, predict(model.encoder, feature_columns(validation)));
    for (std::size_t i = 0; i < m; ++i) {
      const auto row = logits.row(i);
      const std::vector<int> a = validation.attributes.col(i);
      double value = 0.5;
      try {
        value = auc(row, a);
      } catch (const std::invalid_argument&) {
        model.warnings.push_back("attribute a_" + std::to_string(i + 1) +
                                 " has a single value in validation; AUC reported as 0.5");
      }
      model.validation_auc.push_back(value);
      if (value < 0.6) {
        model.warnings.push_back("attribute a_" + std::to_string(i + 1) + " validation AUC " +
                                 format_double(value) +
                                 ": sensitive branch weak; orthogonality may be vacuous");
      }
    }
  }
  return model;
}

namespace {

Matrix sensitive_representation(const MlpParams& encoder, const Matrix& x, bool normalize) {
  Matrix z = predict(encoder, x);
  if (!normalize) return z;
  std::vector<double> norms;
  return normalize_columns(z, norms);
}

}  // namespace

SpaceReport build_sensitive_space(const MlpParams& sensitive_encoder, const LabeledDataset& train,
                                  const TrainConfig& config, std::uint64_t seed) {
  config.validate();
  const Matrix z_a =
      sensitive_representation(sensitive_encoder, feature_columns(train), config.normalize_representations);
  SpaceReport out;
  if (config.space_mode == SpaceMode::kBatch) {
    out.basis = build_space(z_a, config.k);
  } else {
    const std::size_t working = default_working_rank(config.k, config.rep_dim);
    Batcher batcher(train.size(), config.batch_size, derive_seed(seed, kAccumulationBatches));
    std::optional<AccumulationState> state;
    for (std::size_t e = 0; e < config.accumulation_epochs; ++e) {
      for (const auto& rows : batcher.next_epoch()) {
        const Matrix batch = z_a.select_cols(rows);
        if (!state) state = accumulate_init(batch, working, config.accumulation_epochs);
        else state = accumulate_step(std::move(*state), batch);
      }
      accumulate_end_epoch(*state);
    }
    out.basis = accumulate_finalize(*state, config.k);
  }
  out.captured_variance = captured_variance(z_a, out.basis);
  out.warnings = out.basis.warnings;
  return out;
}

TargetRun train_target(const LabeledDataset& train, const LabeledDataset& validation,
                       const SensitiveModel& sensitive, const SubspaceBasis& basis,
                       const TrainConfig& config, std::uint64_t seed, const BatchObserver& observer) {
  config.validate();
  train.validate();
  if (basis.dim() != config.rep_dim) {
    throw std::invalid_argument("train_target: basis dimension " + std::to_string(basis.dim()) +
                                " does not match rep_dim " + std::to_string(config.rep_dim));
  }
  TargetModel model = init_target(train, config, seed);
  AdamState enc_opt = adam_init(model.encoder, adam_config(config));
  AdamState head_opt = adam_init(model.head, adam_config(config));
  Batcher batcher(train.size(), config.batch_size, derive_seed(seed, kTargetBatches));
  const LossWeights weights{config.lambda_c, config.lambda_r};

  // The sensitive branch is read through predict() only, so nothing writes
  // to this buffer; the observer reports it together with a bitwise check of
  // the frozen parameters.
  const MlpGrads sensitive_grads = zero_grads(sensitive.encoder);
  const MlpParams frozen = observer ? sensitive.encoder : MlpParams{};

  TargetRun run;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto batches = batcher.next_epoch();
    EpochRecord record;
    record.epoch = epoch;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const Matrix x = feature_columns(train, batches[b]);
      const std::vector<int> y = gather(train.labels, batches[b]);

      auto enc = forward(model.encoder, x);
      auto head = forward(model.head, enc.z);
      check_finite(head.z, "train_target", epoch, b);
      auto ce = cross_entropy(head.z.row(0), y);
      auto head_back = backward(model.head, head.cache, ce.grad);
      LossResult l_t{ce.value, std::move(head_back.grad_x), {}};

      const Matrix z_a = sensitive_representation(sensitive.encoder, x, config.normalize_representations);
      std::vector<double> norms;
      const Matrix z_t = config.normalize_representations ? normalize_columns(enc.z, norms) : enc.z;
      LossResult l_c = config.enable_corth ? corth_loss(z_t, basis) : zero_loss(z_t);
      LossResult l_r = config.enable_rorth ? rorth_loss(z_t, z_a) : zero_loss(z_t);
      if (config.normalize_representations) {
        l_c.grad = normalize_columns_backward(l_c.grad, z_t, norms);
        l_r.grad = normalize_columns_backward(l_r.grad, z_t, norms);
      }
      append_unique(run.warnings, l_c.warnings);

      auto total = target_objective(l_t, l_c, l_r, weights);
      check_finite(total.value, "train_target", epoch, b);
      auto enc_back = backward(model.encoder, enc.cache, total.grad);
      adam_step(enc_opt, model.encoder, enc_back.grads);
      adam_step(head_opt, model.head, head_back.grads);

      record.l_t += l_t.value;
      record.l_corth += l_c.value;
      record.l_rorth += l_r.value;
      record.l_targ += total.value;
      if (observer) {
        BatchTrace trace;
        trace.epoch = epoch;
        trace.batch = b;
        trace.objective = total.value;
        trace.sensitive_grad_squared_norm = sensitive_grads.squared_norm();
        trace.sensitive_unchanged = same_params(frozen, sensitive.encoder);
        observer(trace);
      }
    }
    const double nb = static_cast<double>(batches.size());
    record.l_t /= nb;
    record.l_corth /= nb;
    record.l_rorth /= nb;
    record.l_targ /= nb;
    record.validation = evaluate_model(model, validation, config.metrics);
    run.epochs.push_back(std::move(record));
    run.checkpoints.push_back(model);
  }
  return run;
}

TargetRun train_erm(const LabeledDataset& train, const LabeledDataset& validation, const TrainConfig& config,
                    std::uint64_t seed) {
  config.validate();
  train.validate();
  TargetModel model = init_target(train, config, seed);
  AdamState enc_opt = adam_init(model.encoder, adam_config(config));
  AdamState head_opt = adam_init(model.head, adam_config(config));
  Batcher batcher(train.size(), config.batch_size, derive_seed(seed, kTargetBatches));

  TargetRun run;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto batches = batcher.next_epoch();
    EpochRecord record;
    record.epoch = epoch;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const Matrix x = feature_columns(train, batches[b]);
      auto enc = forward(model.encoder, x);
      auto head = forward(model.head, enc.z);
      const std::vector<int> y = gather(train.labels, batches[b]);
      check_finite(head.z, "train_erm", epoch, b);
      auto ce = cross_entropy(head.z.row(0), y);
      check_finite(ce.value, "train_erm", epoch, b);
      auto head_back = backward(model.head, head.cache, ce.grad);
      auto enc_back = backward(model.encoder, enc.cache, head_back.grad_x);
      adam_step(enc_opt, model.encoder, enc_back.grads);
      adam_step(head_opt, model.head, head_back.grads);
      record.l_t += ce.value;
    }
    record.l_t /= static_cast<double>(batches.size());
    record.l_targ = record.l_t;
    record.validation = evaluate_model(model, validation, config.metrics);
    run.epochs.push_back(std::move(record));
    run.checkpoints.push_back(model);
  }
  return run;
}

std::vector<double> predict_scores(const TargetModel& model, const LabeledDataset& data) {
  const Matrix logits = predict(model.head, predict(model.encoder, feature_columns(data)));
  std::vector<double> scores(logits.cols());
  for (std::size_t j = 0; j < scores.size(); ++j) scores[j] = sigmoid(logits(0, j));
  return scores;
}

PredictionTable prediction_table(const TargetModel& model, const LabeledDataset& data) {
  PredictionTable t;
  t.scores = predict_scores(model, data);
  t.labels = data.labels;
  t.attributes = data.attributes;
  return t;
}

namespace {

}  // namespace

FairnessReport evaluate_model(const TargetModel& model, const LabeledDataset& data, const MetricOptions& options) {
  return evaluate_fairness(prediction_table(model, data), options);
}

std::size_t select_model(std::span<const CheckpointSummary> checkpoints, std::size_t top) {
  if (checkpoints.empty()) throw std::invalid_argument("select_model: no checkpoints");
  std::vector<std::size_t> order(checkpoints.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto better_auc = [&](std::size_t a, std::size_t b) {
    if (checkpoints[a].auc != checkpoints[b].auc) return checkpoints[a].auc > checkpoints[b].auc;
    return checkpoints[a].epoch < checkpoints[b].epoch;
  };
  std::sort(order.begin(), order.end(), better_auc);
  order.resize(std::min(std::max<std::size_t>(top, 1), order.size()));
  return *std::min_element(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (checkpoints[a].mean_attribute_ed != checkpoints[b].mean_attribute_ed) {
      return checkpoints[a].mean_attribute_ed < checkpoints[b].mean_attribute_ed;
    }
    return better_auc(a, b);
  });
}

std::size_t select_checkpoint(const TargetRun& run, std::size_t top) {
  if (run.epochs.empty()) throw std::invalid_argument("select_checkpoint: no checkpoints (epochs = 0)");
  std::vector<CheckpointSummary> summaries;
  for (const auto& e : run.epochs) {
    summaries.push_back({e.epoch, e.validation.auc, e.validation.mean_attribute_ed()});
  }
  return select_model(summaries, top);
}

StageError::StageError(std::size_t fold, const std::string& stage, const std::string& what)
    : std::runtime_error("fold " + std::to_string(fold) + ", stage " + stage + ": " + what),
      fold_(fold),
      stage_(stage) {}

namespace {

template <typename F>
auto stage(std::size_t fold, const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(fold, name, e.what());
  }
}

}  // namespace

RunRecord run_fold(const LabeledDataset& data, const SplitResult& split, std::size_t fold,
                   const TrainConfig& config, const ExperimentOptions& options) {
  if (fold >= split.folds.size()) throw std::invalid_argument("run_fold: fold index out of range");
  RunRecord rec;
  rec.fold = fold;
  rec.seed = config.seed + fold;
  const LabeledDataset train = data.subset(split.folds[fold].train);
  const LabeledDataset validation = data.subset(split.folds[fold].validation);
  const LabeledDataset test = data.subset(split.test);

  const SensitiveModel sensitive =
      stage(fold, "pretrain_sensitive", [&] { return pretrain_sensitive(train, validation, config, rec.seed); });
  rec.sensitive_auc = sensitive.validation_auc;
  append_unique(rec.warnings, sensitive.warnings);

  const SpaceReport space =
      stage(fold, "build_sensitive_space", [&] { return build_sensitive_space(sensitive.encoder, train, config, rec.seed); });
  rec.captured_variance = space.captured_variance;
  append_unique(rec.warnings, space.warnings);

  BatchObserver observer;
  if (options.observer) {
    observer = [&](const BatchTrace& t) {
      BatchTrace copy = t;
      copy.fold = fold;
      options.observer(copy);
    };
  }
  TargetRun run = stage(fold, "train_target", [&] {
    return train_target(train, validation, sensitive, space.basis, config, rec.seed, observer);
  });
  append_unique(rec.warnings, run.warnings);

  const std::size_t chosen = stage(fold, "select_model", [&] { return select_checkpoint(run, config.selection_top); });
  rec.selected_epoch = run.epochs[chosen].epoch;

  stage(fold, "evaluate", [&] {
    const PredictionTable table = prediction_table(run.checkpoints[chosen], test);
    rec.test = evaluate_fairness(table, config.metrics);
    rec.calibration = calibration_curve(table, Grouping::joint(), config.calibration_bins);
    return 0;
  });
  rec.epochs = std::move(run.epochs);
  return rec;
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd out;
  out.count = values.size();
  if (values.empty()) return out;
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return out;
}

namespace {

AggregateReport aggregate(const std::vector<RunRecord>& folds, std::size_t m) {
  auto collect = [&](auto&& get) {
    std::vector<double> v;
    for (const auto& f : folds) {
      std::optional<double> x = get(f);
      if (x) v.push_back(*x);
    }
    return mean_std(v);
  };
  AggregateReport out;
  out.auc = collect([](const RunRecord& f) { return std::optional<double>(f.test.auc); });
  out.joint_ed = collect([](const RunRecord& f) { return f.test.joint_ed; });
  out.joint_auc_gap = collect([](const RunRecord& f) { return f.test.joint_auc_gap; });
  out.mean_attribute_ed =
      collect([](const RunRecord& f) { return std::optional<double>(f.test.mean_attribute_ed()); });
  out.captured_variance = collect([](const RunRecord& f) { return std::optional<double>(f.captured_variance); });
  for (std::size_t i = 0; i < m; ++i) {
    out.attribute_ed.push_back(collect([&](const RunRecord& f) { return f.test.per_attribute.at(i).ed; }));
    out.attribute_auc_gap.push_back(
        collect([&](const RunRecord& f) { return f.test.per_attribute.at(i).auc_gap; }));
  }
  return out;
}

}  // namespace

AmplifyResult generate_amplified(const GenSpec& gen_spec, double target_gap) {
  AmplifyOptions amp;
  amp.seed = derive_seed(gen_spec.seed, kAmplify);
  return bias_amplify(generate(gen_spec), target_gap, amp);
}

SplitResult experiment_split(const LabeledDataset& data, const TrainConfig& config) {
  const std::size_t split_folds = config.folds == 1 ? 5 : config.folds;
  return split(data, config.test_fraction, split_folds, derive_seed(config.seed, kSplit));
}

ExperimentReport run_experiment(const TrainConfig& config, const GenSpec& gen_spec, double target_gap,
                                const ExperimentOptions& options) {
  config.validate();
  gen_spec.validate();
  ExperimentReport report;
  report.config = config;
  report.gen_spec = gen_spec;
  report.target_gap = target_gap;

  const AmplifyResult amplified = generate_amplified(gen_spec, target_gap);
  report.amplified_gaps = amplified.gaps;
  report.dataset_size = amplified.data.size();
  const LabeledDataset& data = amplified.data;

  const SplitResult parts = experiment_split(data, config);
  append_unique(report.warnings, parts.warnings);
  const std::size_t run_folds = config.folds;

  std::vector<std::optional<RunRecord>> results(run_folds);
  std::vector<std::exception_ptr> errors(run_folds);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t f = next.fetch_add(1); f < run_folds; f = next.fetch_add(1)) {
      try {
        results[f] = run_fold(data, parts, f, config, options);
      } catch (...) {
        errors[f] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(options.parallel_folds, 1, run_folds);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (std::size_t f = 0; f < run_folds; ++f)
    if (errors[f]) std::rethrow_exception(errors[f]);

  for (auto& r : results) report.per_fold.push_back(std::move(*r));
  for (const auto& r : report.per_fold) append_unique(report.warnings, r.warnings);
  report.aggregate = aggregate(report.per_fold, data.num_attributes());
  return report;
}

namespace {

void mean_std_json(const std::string& name, const MeanStd& v, nlohmann::ordered_json& into) {
  into[name + "_mean"] = v.mean;
  into[name + "_std"] = v.std;
}

}  // namespace

nlohmann::ordered_json to_json(const EpochRecord& e) {
  return {{"epoch", e.epoch},
          {"l_t", e.l_t},
          {"l_corth", e.l_corth},
          {"l_rorth", e.l_rorth},
          {"l_targ", e.l_targ},
          {"validation_auc", e.validation.auc},
          {"validation_joint_ed", e.validation.joint_ed ? nlohmann::ordered_json(*e.validation.joint_ed) : nullptr},
          {"validation_mean_attribute_ed", e.validation.mean_attribute_ed()}};
}

nlohmann::ordered_json to_json(const AggregateReport& a) {
  nlohmann::ordered_json agg;
  mean_std_json("auc", a.auc, agg);
  mean_std_json("joint_ed", a.joint_ed, agg);
  mean_std_json("joint_auc_gap", a.joint_auc_gap, agg);
  mean_std_json("mean_attribute_ed", a.mean_attribute_ed, agg);
  mean_std_json("captured_variance", a.captured_variance, agg);
  agg["joint_ed_folds"] = a.joint_ed.count;
  auto per = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < a.attribute_ed.size(); ++i) {
    nlohmann::ordered_json entry;
    entry["attribute"] = i;
    mean_std_json("ed", a.attribute_ed[i], entry);
    mean_std_json("auc_gap", a.attribute_auc_gap[i], entry);
    per.push_back(entry);
  }
  agg["per_attribute"] = per;
  return agg;
}

nlohmann::ordered_json to_json(const ExperimentReport& report) {
  nlohmann::ordered_json j;
  j["config"] = to_json(report.config);
  j["gen_spec"] = to_json(report.gen_spec);
  j["target_gap"] = report.target_gap;
  j["amplified_gaps"] = report.amplified_gaps;
  j["dataset_size"] = report.dataset_size;
  auto folds = nlohmann::ordered_json::array();
  for (const auto& r : report.per_fold) {
    nlohmann::ordered_json f;
    f["fold"] = r.fold;
    f["seed"] = r.seed;
    f["selected_epoch"] = r.selected_epoch;
    f["captured_variance"] = r.captured_variance;
    f["sensitive_auc"] = r.sensitive_auc;
    auto epochs = nlohmann::ordered_json::array();
    for (const auto& e : r.epochs) epochs.push_back(to_json(e));
    f["epochs"] = epochs;
    f["test"] = to_json(r.test);
    f["warnings"] = r.warnings;
    folds.push_back(f);
  }
  j["per_fold"] = folds;
  j["aggregate"] = to_json(report.aggregate);
  j["warnings"] = report.warnings;
  return j;
}

std::vector<AblationRow> ablate(const TrainConfig& config, const GenSpec& gen_spec, double target_gap,
                                const std::string& parameter, std::span<const double> values,
                                const ExperimentOptions& options) {
  if (values.empty()) throw std::invalid_argument("ablate: sweep is empty");
  if (parameter != "lambda_c" && parameter != "lambda_r" && parameter != "k") {
    throw std::invalid_argument("ablate: unknown parameter '" + parameter + "' (expected lambda_c, lambda_r or k)");
  }
  std::vector<TrainConfig> settings;
  for (double v : values) {
    TrainConfig c = config;
    if (parameter == "lambda_c") {
      c.lambda_c = v;
    } else if (parameter == "lambda_r") {
      c.lambda_r = v;
    } else {
      if (!(v >= 1.0) || v != std::floor(v)) {
        throw std::invalid_argument("ablate: k values must be positive integers, got " + format_double(v));
      }
      c.k = static_cast<std::size_t>(v);
    }
    c.validate();
    settings.push_back(c);
  }
  std::vector<AblationRow> rows;
  for (std::size_t i = 0; i < settings.size(); ++i) {
    AblationRow row;
    row.setting = parameter + "=" + format_double(values[i]);
    row.value = values[i];
    row.aggregate = run_experiment(settings[i], gen_spec, target_gap, options).aggregate;
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_ablation_csv(std::ostream& out, std::span<const AblationRow> rows) {
  out << "setting,value,auc_mean,auc_std,ed_mean,ed_std,variance_captured\n";
  for (const auto& r : rows) {
    const auto& a = r.aggregate;
    out << r.setting << ',' << format_double(r.value) << ',' << format_double(a.auc.mean) << ','
        << format_double(a.auc.std) << ',' << format_double(a.joint_ed.mean) << ','
        << format_double(a.joint_ed.std) << ',' << format_double(a.captured_variance.mean) << '\n';
  }
}

void write_tradeoff_csv(std::ostream& out, std::span<const AblationRow> rows) {
  out << "auc,ed,setting\n";
  for (const auto& r : rows) {
    out << format_double(r.aggregate.auc.mean) << ',' << format_double(r.aggregate.joint_ed.mean) << ','
        << r.setting << '\n';
  }
}

}  // namespace fcro
