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

#include "fcro/cli.hpp"

#include <openssl/evp.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <vector>

#include "CLI11.hpp"
#include "fcro/fairmetrics.hpp"
#include "fcro/nets.hpp"
#include "fcro/subspace.hpp"

namespace fcro::cli {

namespace fs = std::filesystem;

namespace {

// Input problems detected by the front end itself.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class RuntimeStageError : public std::runtime_error {
 public:
  RuntimeStageError(const std::string& stage, const std::string& what)
      : std::runtime_error("stage " + stage + ": " + what) {}
};

template <typename F>
auto run_stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const std::invalid_argument&) {
    throw;
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw RuntimeStageError(name, e.what());
  }
}

void require_keys(const nlohmann::json& j, const std::vector<std::string>& allowed, const std::string& where,
                  std::vector<std::string>& problems) {
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      problems.push_back(where + "unknown field '" + key + "'");
    }
  }
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? sep : "") + parts[i];
  return out;
}

}  // namespace

nlohmann::ordered_json to_json(const ExperimentDocument& doc) {
  nlohmann::ordered_json j;
  j["data"] = fcro::to_json(doc.data);
  j["target_gap"] = doc.target_gap;
  j["train"] = fcro::to_json(doc.train);
  return j;
}

ExperimentDocument experiment_document_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("config: expected a JSON object");
  std::vector<std::string> problems;
  require_keys(j, {"data", "target_gap", "train"}, "config: ", problems);
  ExperimentDocument doc;
  auto section = [&](const char* name, auto&& parse) {
    if (!j.contains(name)) return;
    try {
      parse(j.at(name));
    } catch (const std::exception& e) {
      problems.push_back(std::string("config.") + name + ": " + e.what());
    }
  };
  section("data", [&](const nlohmann::json& s) {
    doc.data = gen_spec_from_json(s);
    doc.data.validate();
    doc.data_seed_given = s.contains("seed");
  });
  section("train", [&](const nlohmann::json& s) {
    doc.train = train_config_from_json(s);
    doc.train_seed_given = s.contains("seed");
  });
  section("target_gap", [&](const nlohmann::json& s) {
    if (!s.is_number()) throw std::invalid_argument("must be a number");
    doc.target_gap = s.get<double>();
    if (!(doc.target_gap >= 0.0 && doc.target_gap < 1.0)) throw std::invalid_argument("must lie in [0, 1)");
  });
  if (!problems.empty()) throw std::invalid_argument(join(problems, "; "));
  return doc;
}

ExperimentDocument load_experiment_document(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("--config: cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw UsageError("--config: " + path + " is not valid JSON: " + e.what());
  }
  try {
    return experiment_document_from_json(j);
  } catch (const std::invalid_argument& e) {
    throw UsageError("--config " + path + ": " + e.what());
  }
}

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("sha256: cannot open " + path);
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw std::runtime_error("sha256: digest initialization failed");
  }
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int{digest[i]};
  return hex.str();
}

namespace {

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<double> lambda_c, lambda_r, lr;
  std::optional<std::size_t> k, epochs, sensitive_epochs, folds, batch_size;
  std::optional<std::string> space_mode;
  std::optional<double> gap;
};

struct Context {
  std::vector<std::string> arguments;
  std::ostream& out;
  std::ostream& err;
  int verbosity = 1;

  void log(int level, const std::string& message) const {
    if (verbosity >= level) err << message << '\n';
  }
};

void add_training_flags(CLI::App* app, Overrides& o) {
  app->add_option("--lambda-c", o.lambda_c, "column orthogonality weight (paper default 80)");
  app->add_option("--lambda-r", o.lambda_r, "row orthogonality weight (paper default 500)");
  app->add_option("--k", o.k, "rank of the sensitive space (paper default 3)");
  app->add_option("--epochs", o.epochs, "target training epochs (paper default 40)");
  app->add_option("--sensitive-epochs", o.sensitive_epochs, "sensitive pretraining epochs (default 40)");
  app->add_option("--lr", o.lr, "Adam learning rate (paper default 1e-4)");
  app->add_option("--batch-size", o.batch_size, "mini-batch size (paper default 128)");
  app->add_option("--folds", o.folds, "cross-validation folds; 1 runs the first fold only (paper default 5)");
  app->add_option("--space-mode", o.space_mode, "sensitive space construction: batch or accumulative (default batch)")
      ->check(CLI::IsMember({"batch", "accumulative"}));
}

std::uint64_t env_seed() {
  const char* raw = std::getenv("FCRO_SEED");
  if (raw == nullptr) throw std::logic_error("FCRO_SEED unset");
  const std::string text(raw);
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    if (!text.empty() && text[0] == '-') throw std::invalid_argument("negative");
    v = std::stoull(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) {
    throw UsageError("FCRO_SEED: expected a non-negative integer, got '" + text + "'");
  }
  return v;
}

// Flag, then config file, then FCRO_SEED, then 0.
void resolve_seeds(ExperimentDocument& doc, const Overrides& o) {
  if (o.seed) {
    doc.data.seed = *o.seed;
    doc.train.seed = *o.seed;
    return;
  }
  if (doc.data_seed_given && doc.train_seed_given) return;
  if (std::getenv("FCRO_SEED") == nullptr) return;
  const std::uint64_t s = env_seed();
  if (!doc.data_seed_given) doc.data.seed = s;
  if (!doc.train_seed_given) doc.train.seed = s;
}

void apply_overrides(ExperimentDocument& doc, const Overrides& o) {
  resolve_seeds(doc, o);
  TrainConfig& c = doc.train;
  if (o.lambda_c) c.lambda_c = *o.lambda_c;
  if (o.lambda_r) c.lambda_r = *o.lambda_r;
  if (o.lr) c.lr = *o.lr;
  if (o.k) c.k = *o.k;
  if (o.epochs) c.epochs = *o.epochs;
  if (o.sensitive_epochs) c.sensitive_epochs = *o.sensitive_epochs;
  if (o.folds) c.folds = *o.folds;
  if (o.batch_size) c.batch_size = *o.batch_size;
  if (o.space_mode) c.space_mode = space_mode_from_string(*o.space_mode);
  if (o.gap) doc.target_gap = *o.gap;
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("config after flag overrides: ") + e.what());
  }
  if (!(doc.target_gap >= 0.0 && doc.target_gap < 1.0)) throw UsageError("--gap: must lie in [0, 1)");
}

ExperimentDocument load_document(const std::string& config_path, const Overrides& o) {
  ExperimentDocument doc = config_path.empty() ? ExperimentDocument{} : load_experiment_document(config_path);
  apply_overrides(doc, o);
  return doc;
}

void ensure_directory(const std::string& dir, const char* flag) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw UsageError(std::string(flag) + ": cannot create directory " + dir);
  const fs::path probe = fs::path(dir) / ".fcro_write_probe";
  std::ofstream test(probe);
  if (!test) throw UsageError(std::string(flag) + ": directory " + dir + " is not writable");
  test.close();
  fs::remove(probe, ec);
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void write_json(const fs::path& path, const nlohmann::ordered_json& j) {
  auto out = open_output(path);
  out << j.dump(2) << '\n';
}

// Records every artifact with its hash so the run can be checked against a
// rerun with the same arguments.
void write_manifest(const Context& ctx, const fs::path& dir, const std::string& command,
                    const nlohmann::ordered_json& config, const nlohmann::ordered_json& seeds,
                    std::vector<fs::path> artifacts) {
  std::sort(artifacts.begin(), artifacts.end());
  nlohmann::ordered_json m;
  m["tool"] = "fcro";
  m["command"] = command;
  m["arguments"] = ctx.arguments;
  m["config"] = config;
  m["seeds"] = seeds;
  nlohmann::ordered_json hashes = nlohmann::ordered_json::object();
  for (const auto& a : artifacts) hashes[fs::relative(a, dir).generic_string()] = sha256_file(a.string());
  m["artifacts"] = hashes;
  write_json(dir / "manifest.json", m);
}

// Every regular file under dir except the manifest.
std::vector<fs::path> files_under(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().filename() != "manifest.json") out.push_back(e.path());
  }
  return out;
}

nlohmann::ordered_json seeds_json(const ExperimentDocument& doc) {
  return {{"data", doc.data.seed},
          {"train", doc.train.seed},
          {"amplify", derive_seed(doc.data.seed, 8)},
          {"split", derive_seed(doc.train.seed, 9)}};
}

LabeledDataset read_data(const std::string& path) {
  try {
    return read_dataset_csv(path);
  } catch (const std::exception& e) {
    throw UsageError("--data " + path + ": " + e.what());
  }
}

struct FoldView {
  LabeledDataset train, validation, test;
};

FoldView fold_view(const LabeledDataset& data, const TrainConfig& config, std::size_t fold) {
  const SplitResult parts = run_stage("split", [&] { return experiment_split(data, config); });
  if (fold >= parts.folds.size()) {
    throw UsageError("--fold: " + std::to_string(fold) + " is out of range for " +
                     std::to_string(parts.folds.size()) + " folds");
  }
  return {data.subset(parts.folds[fold].train), data.subset(parts.folds[fold].validation), data.subset(parts.test)};
}

// ---------------------------------------------------------------------------

struct DatagenArgs {
  std::string config, out;
  std::optional<std::size_t> n, p, m;
  std::optional<double> target_signal, attribute_signal, noise;
  Overrides o;
};

int cmd_datagen(const DatagenArgs& a, const Context& ctx) {
  ExperimentDocument doc = a.config.empty() ? ExperimentDocument{} : load_experiment_document(a.config);
  bool amplify = a.o.gap.has_value();
  if (!a.config.empty()) {
    std::ifstream in(a.config);
    amplify = amplify || nlohmann::json::parse(in).contains("target_gap");
  }
  if (a.n) doc.data.n = *a.n;
  if (a.p) doc.data.p = *a.p;
  if (a.m) doc.data.m = *a.m;
  if (a.target_signal) doc.data.target_signal_strength = *a.target_signal;
  if (a.attribute_signal) doc.data.attribute_signal_strength = *a.attribute_signal;
  if (a.noise) doc.data.noise_sigma = *a.noise;
  apply_overrides(doc, a.o);
  try {
    doc.data.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("data spec after flag overrides: ") + e.what());
  }

  const fs::path out_path(a.out);
  const fs::path dir = out_path.has_parent_path() ? out_path.parent_path() : fs::path(".");
  ensure_directory(dir.string(), "--out");

  LabeledDataset data;
  nlohmann::ordered_json config;
  config["data"] = fcro::to_json(doc.data);
  if (amplify) {
    AmplifyResult r = run_stage("amplify", [&] { return generate_amplified(doc.data, doc.target_gap); });
    std::ostringstream gaps;
    for (double g : r.gaps) gaps << ' ' << format_double(g);
    ctx.log(1, "amplified to " + std::to_string(r.data.size()) + " samples, gaps" + gaps.str());
    config["target_gap"] = doc.target_gap;
    data = std::move(r.data);
  } else {
    data = run_stage("generate", [&] { return generate(doc.data); });
  }
  run_stage("write", [&] {
    write_dataset_csv(out_path.string(), data);
    return 0;
  });
  write_manifest(ctx, dir, "datagen", config, {{"data", doc.data.seed}, {"amplify", derive_seed(doc.data.seed, 8)}},
                 {out_path});
  ctx.out << "wrote " << out_path.string() << " (" << data.size() << " samples)\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ModelArgs {
  std::string config, data, out, sensitive, model, subset = "test";
  std::size_t fold = 0;
  std::size_t bins = 10;
  Overrides o;
};

int cmd_pretrain(const ModelArgs& a, const Context& ctx) {
  ExperimentDocument doc = load_document(a.config, a.o);
  const LabeledDataset data = read_data(a.data);
  ensure_directory(a.out, "--out");
  const FoldView v = fold_view(data, doc.train, a.fold);
  const std::uint64_t seed = doc.train.seed + a.fold;

  const SensitiveModel model =
      run_stage("pretrain_sensitive", [&] { return pretrain_sensitive(v.train, v.validation, doc.train, seed); });
  const SpaceReport space =
      run_stage("build_sensitive_space", [&] { return build_sensitive_space(model.encoder, v.train, doc.train, seed); });
  for (const auto& w : model.warnings) ctx.log(1, "warning: " + w);
  for (const auto& w : space.warnings) ctx.log(1, "warning: " + w);

  const fs::path dir(a.out);
  run_stage("write", [&] {
    save_checkpoint(a.out, "sensitive_encoder", model.encoder, doc.train.sensitive_epochs);
    save_checkpoint(a.out, "sensitive_heads", model.heads, doc.train.sensitive_epochs);
    save_basis((dir / "basis.csv").string(), (dir / "basis.json").string(), space.basis);
    nlohmann::ordered_json summary;
    summary["fold"] = a.fold;
    summary["validation_auc"] = model.validation_auc;
    summary["captured_variance"] = space.captured_variance;
    std::vector<std::string> warnings = model.warnings;
    warnings.insert(warnings.end(), space.warnings.begin(), space.warnings.end());
    summary["warnings"] = warnings;
    write_json(dir / "sensitive.json", summary);
    return 0;
  });
  nlohmann::ordered_json seeds = seeds_json(doc);
  seeds["fold"] = seed;
  write_manifest(ctx, dir, "pretrain", to_json(doc), seeds, files_under(dir));
  ctx.out << "captured variance " << format_double(space.captured_variance) << " at k=" << doc.train.k << '\n';
  return kExitOk;
}

int cmd_train(const ModelArgs& a, const Context& ctx) {
  ExperimentDocument doc = load_document(a.config, a.o);
  const LabeledDataset data = read_data(a.data);
  ensure_directory(a.out, "--out");
  const fs::path sdir(a.sensitive);

  SensitiveModel sensitive;
  SubspaceBasis basis;
  try {
    sensitive.encoder = load_checkpoint(a.sensitive, "sensitive_encoder");
    sensitive.heads = load_checkpoint(a.sensitive, "sensitive_heads");
    basis = load_basis((sdir / "basis.csv").string(), (sdir / "basis.json").string());
  } catch (const std::exception& e) {
    throw UsageError("--sensitive " + a.sensitive + ": " + e.what());
  }
  if (sensitive.encoder.spec.input_dim != data.num_features()) {
    throw UsageError("--sensitive: encoder expects " + std::to_string(sensitive.encoder.spec.input_dim) +
                     " features but --data has " + std::to_string(data.num_features()));
  }
  if (basis.dim() != doc.train.rep_dim) {
    throw UsageError("--sensitive: basis dimension " + std::to_string(basis.dim()) + " does not match rep_dim " +
                     std::to_string(doc.train.rep_dim));
  }
  const FoldView v = fold_view(data, doc.train, a.fold);
  const std::uint64_t seed = doc.train.seed + a.fold;

  TargetRun run = run_stage("train_target", [&] {
    return train_target(v.train, v.validation, sensitive, basis, doc.train, seed, [&](const BatchTrace& t) {
      if (t.batch == 0) ctx.log(2, "epoch " + std::to_string(t.epoch) + " objective " + format_double(t.objective));
    });
  });
  const std::size_t chosen = run_stage("select_model", [&] { return select_checkpoint(run, doc.train.selection_top); });

  const fs::path dir(a.out);
  run_stage("write", [&] {
    const TargetModel& m = run.checkpoints[chosen];
    save_checkpoint(a.out, "target_encoder", m.encoder, run.epochs[chosen].epoch);
    save_checkpoint(a.out, "target_head", m.head, run.epochs[chosen].epoch);
    nlohmann::ordered_json log;
    log["fold"] = a.fold;
    log["selected_epoch"] = run.epochs[chosen].epoch;
    auto epochs = nlohmann::ordered_json::array();
    for (const auto& e : run.epochs) epochs.push_back(to_json(e));
    log["epochs"] = epochs;
    log["warnings"] = run.warnings;
    write_json(dir / "training.json", log);
    return 0;
  });
  nlohmann::ordered_json seeds = seeds_json(doc);
  seeds["fold"] = seed;
  nlohmann::ordered_json config = to_json(doc);
  config["sensitive_manifest"] = (sdir / "manifest.json").generic_string();
  write_manifest(ctx, dir, "train", config, seeds, files_under(dir));
  ctx.out << "selected epoch " << run.epochs[chosen].epoch << ", validation AUC "
          << format_double(run.epochs[chosen].validation.auc) << '\n';
  return kExitOk;
}

int cmd_evaluate(const ModelArgs& a, const Context& ctx) {
  ExperimentDocument doc = load_document(a.config, a.o);
  const LabeledDataset data = read_data(a.data);
  ensure_directory(a.out, "--out");
  if (a.bins < 1) throw UsageError("--bins: must be at least 1");
  TargetModel model;
  try {
    model.encoder = load_checkpoint(a.model, "target_encoder");
    model.head = load_checkpoint(a.model, "target_head");
  } catch (const std::exception& e) {
    throw UsageError("--model " + a.model + ": " + e.what());
  }
  if (model.encoder.spec.input_dim != data.num_features()) {
    throw UsageError("--model: encoder expects " + std::to_string(model.encoder.spec.input_dim) +
                     " features but --data has " + std::to_string(data.num_features()));
  }
  const LabeledDataset eval = a.subset == "all" ? data : fold_view(data, doc.train, 0).test;

  const fs::path dir(a.out);
  const PredictionTable table = run_stage("predict", [&] { return prediction_table(model, eval); });
  const FairnessReport report = run_stage("evaluate", [&] { return evaluate_fairness(table, doc.train.metrics); });
  const auto curves = run_stage("calibration", [&] { return calibration_curve(table, Grouping::joint(), a.bins); });
  run_stage("write", [&] {
    write_json(dir / "report.json", fcro::to_json(report));
    auto preds = open_output(dir / "predictions.csv");
    write_prediction_csv(preds, table);
    auto cal = open_output(dir / "calibration.csv");
    write_calibration_csv(cal, curves);
    return 0;
  });
  nlohmann::ordered_json config = to_json(doc);
  config["subset"] = a.subset;
  config["bins"] = a.bins;
  write_manifest(ctx, dir, "evaluate", config, seeds_json(doc),
                 {dir / "report.json", dir / "predictions.csv", dir / "calibration.csv"});
  ctx.out << "AUC " << format_double(report.auc) << ", joint ED "
          << (report.joint_ed ? format_double(*report.joint_ed) : std::string("undefined")) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ExperimentArgs {
  std::string config, out, param;
  std::vector<double> values;
  std::size_t parallel_folds = 1;
  bool with_erm = false;
  Overrides o;
};

ExperimentOptions experiment_options(const ExperimentArgs& a, const Context& ctx) {
  ExperimentOptions opt;
  opt.parallel_folds = a.parallel_folds;
  if (ctx.verbosity >= 2) {
    auto mu = std::make_shared<std::mutex>();
    std::ostream* err = &ctx.err;
    opt.observer = [mu, err](const BatchTrace& t) {
      if (t.batch != 0) return;
      std::lock_guard<std::mutex> lock(*mu);
      *err << "fold " << t.fold << " epoch " << t.epoch << " objective " << format_double(t.objective) << '\n';
    };
  }
  return opt;
}

int cmd_experiment(const ExperimentArgs& a, const Context& ctx) {
  ExperimentDocument doc = load_document(a.config, a.o);
  if (a.parallel_folds < 1) throw UsageError("--parallel-folds: must be at least 1");
  ensure_directory(a.out, "--out");
  const fs::path dir(a.out);
  const ExperimentOptions opt = experiment_options(a, ctx);

  const ExperimentReport report = run_stage("experiment", [&] {
    return run_experiment(doc.train, doc.data, doc.target_gap, opt);
  });
  for (const auto& w : report.warnings) ctx.log(1, "warning: " + w);
  std::vector<fs::path> artifacts{dir / "report.json", dir / "tradeoff.csv"};
  std::vector<AblationRow> points;
  for (const auto& f : report.per_fold) {
    AblationRow row;
    row.setting = "fold=" + std::to_string(f.fold);
    row.value = static_cast<double>(f.fold);
    row.aggregate.auc = {f.test.auc, 0.0, 1};
    row.aggregate.joint_ed = {f.test.joint_ed.value_or(std::nan("")), 0.0, 1};
    points.push_back(row);
  }
  AblationRow summary{"fcro", 0.0, report.aggregate};
  if (a.with_erm) {
    TrainConfig erm = doc.train;
    erm.lambda_c = 0.0;
    erm.lambda_r = 0.0;
    const ExperimentReport base = run_stage("erm", [&] { return run_experiment(erm, doc.data, doc.target_gap, opt); });
    write_json(dir / "report_erm.json", to_json(base));
    artifacts.push_back(dir / "report_erm.json");
    points.push_back({"erm", 0.0, base.aggregate});
    ctx.out << "ERM  AUC " << format_double(base.aggregate.auc.mean) << ", joint ED "
            << format_double(base.aggregate.joint_ed.mean) << '\n';
  }
  points.push_back(summary);

  run_stage("write", [&] {
    write_json(dir / "report.json", to_json(report));
    auto trade = open_output(dir / "tradeoff.csv");
    write_tradeoff_csv(trade, points);
    for (const auto& f : report.per_fold) {
      const fs::path p = dir / ("calibration_fold_" + std::to_string(f.fold) + ".csv");
      auto cal = open_output(p);
      write_calibration_csv(cal, f.calibration);
      artifacts.push_back(p);
    }
    return 0;
  });
  write_manifest(ctx, dir, "experiment", to_json(doc), seeds_json(doc), artifacts);
  ctx.out << "FCRO AUC " << format_double(report.aggregate.auc.mean) << ", joint ED "
          << format_double(report.aggregate.joint_ed.mean) << ", captured variance "
          << format_double(report.aggregate.captured_variance.mean) << '\n';
  return kExitOk;
}

int cmd_ablate(const ExperimentArgs& a, const Context& ctx) {
  ExperimentDocument doc = load_document(a.config, a.o);
  if (a.parallel_folds < 1) throw UsageError("--parallel-folds: must be at least 1");
  if (a.values.empty()) throw UsageError("--values: at least one value is required");
  if (a.param == "k") {
    for (double v : a.values) {
      if (!(v >= 1.0) || v != std::floor(v) || v > static_cast<double>(doc.train.rep_dim)) {
        throw UsageError("--values: k must be an integer in [1, rep_dim], got " + format_double(v));
      }
    }
  } else {
    for (double v : a.values) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw UsageError("--values: weights must be finite and >= 0");
    }
  }
  ensure_directory(a.out, "--out");
  const fs::path dir(a.out);
  const ExperimentOptions opt = experiment_options(a, ctx);
  const auto rows = run_stage("ablate", [&] {
    return ablate(doc.train, doc.data, doc.target_gap, a.param, a.values, opt);
  });
  run_stage("write", [&] {
    auto abl = open_output(dir / "ablation.csv");
    write_ablation_csv(abl, rows);
    auto trade = open_output(dir / "tradeoff.csv");
    write_tradeoff_csv(trade, rows);
    nlohmann::ordered_json j;
    j["parameter"] = a.param;
    auto arr = nlohmann::ordered_json::array();
    for (const auto& r : rows) arr.push_back({{"setting", r.setting}, {"value", r.value}, {"aggregate", to_json(r.aggregate)}});
    j["rows"] = arr;
    write_json(dir / "ablation.json", j);
    return 0;
  });
  nlohmann::ordered_json config = to_json(doc);
  config["ablate"] = {{"parameter", a.param}, {"values", a.values}};
  write_manifest(ctx, dir, "ablate", config, seeds_json(doc),
                 {dir / "ablation.csv", dir / "tradeoff.csv", dir / "ablation.json"});
  for (const auto& r : rows) {
    ctx.out << r.setting << ": AUC " << format_double(r.aggregate.auc.mean) << ", joint ED "
            << format_double(r.aggregate.joint_ed.mean) << '\n';
  }
  return kExitOk;
}

}  // namespace

int parse_and_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fair representation learning with column and row orthogonality"};
  app.name("fcro");
  app.require_subcommand(1);
  app.fallthrough(false);

  int verbose = 0;
  bool quiet = false;
  app.add_flag("-v,--verbose", verbose, "more progress output; repeat for per-epoch lines");
  app.add_flag("-q,--quiet", quiet, "only results and errors");

  auto add_common = [](CLI::App* sub, std::string& config, Overrides& o) {
    sub->add_option("--config", config, "JSON config {data, target_gap, train}; flags override its fields")
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "seed for data and training; falls back to the config, then FCRO_SEED, then 0");
  };

  DatagenArgs dg;
  auto* datagen = app.add_subcommand("datagen", "generate a synthetic dataset, optionally bias-amplified");
  add_common(datagen, dg.config, dg.o);
  datagen->add_option("--out", dg.out, "output CSV path")->required();
  datagen->add_option("--n", dg.n, "samples before amplification (default 4000)");
  datagen->add_option("--p", dg.p, "feature count (default 32)");
  datagen->add_option("--m", dg.m, "sensitive attributes (default 3)");
  datagen->add_option("--gap", dg.o.gap, "amplify every attribute's positive-rate gap to this value (paper 0.12)");
  datagen->add_option("--target-signal", dg.target_signal, "strength of the label direction (default 2)");
  datagen->add_option("--attribute-signal", dg.attribute_signal, "strength of each attribute direction (default 3)");
  datagen->add_option("--noise-sigma", dg.noise, "isotropic feature noise (default 0.5)");

  ModelArgs pt;
  auto* pretrain = app.add_subcommand("pretrain", "train the sensitive branch and build its low-rank space");
  add_common(pretrain, pt.config, pt.o);
  pretrain->add_option("--data", pt.data, "dataset CSV")->required()->check(CLI::ExistingFile);
  pretrain->add_option("--out", pt.out, "output directory")->required();
  pretrain->add_option("--fold", pt.fold, "cross-validation fold to train on (default 0)");
  add_training_flags(pretrain, pt.o);

  ModelArgs tr;
  auto* train = app.add_subcommand("train", "train the target branch against a pretrained sensitive branch");
  add_common(train, tr.config, tr.o);
  train->add_option("--data", tr.data, "dataset CSV")->required()->check(CLI::ExistingFile);
  train->add_option("--sensitive", tr.sensitive, "output directory of pretrain")->required()->check(CLI::ExistingDirectory);
  train->add_option("--out", tr.out, "output directory")->required();
  train->add_option("--fold", tr.fold, "cross-validation fold to train on (default 0)");
  add_training_flags(train, tr.o);

  ModelArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "score a trained target model and report fairness metrics");
  add_common(evaluate, ev.config, ev.o);
  evaluate->add_option("--data", ev.data, "dataset CSV")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--model", ev.model, "output directory of train")->required()->check(CLI::ExistingDirectory);
  evaluate->add_option("--out", ev.out, "output directory")->required();
  evaluate->add_option("--bins", ev.bins, "calibration bins (default 10)");
  evaluate->add_option("--subset", ev.subset, "evaluate the held-out test split or all rows (default test)")
      ->check(CLI::IsMember({"test", "all"}));

  ExperimentArgs ex;
  auto* experiment = app.add_subcommand("experiment", "generate, amplify, cross-validate and report");
  add_common(experiment, ex.config, ex.o);
  experiment->add_option("--out", ex.out, "output directory")->required();
  experiment->add_option("--gap", ex.o.gap, "target positive-rate gap (paper 0.12)");
  experiment->add_option("--parallel-folds", ex.parallel_folds, "folds trained concurrently (default 1)");
  experiment->add_flag("--with-erm", ex.with_erm, "also run the unpenalized baseline on the same data");
  add_training_flags(experiment, ex.o);

  ExperimentArgs ab;
  auto* abl = app.add_subcommand("ablate", "sweep one hyperparameter and emit ablation and tradeoff CSVs");
  add_common(abl, ab.config, ab.o);
  abl->add_option("--out", ab.out, "output directory")->required();
  abl->add_option("--param", ab.param, "swept parameter")->required()->check(CLI::IsMember({"lambda_c", "lambda_r", "k"}));
  abl->add_option("--values", ab.values, "comma-separated sweep values")->required()->delimiter(',');
  abl->add_option("--gap", ab.o.gap, "target positive-rate gap (paper 0.12)");
  abl->add_option("--parallel-folds", ab.parallel_folds, "folds trained concurrently (default 1)");
  add_training_flags(abl, ab.o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "error: " << e.what() << '\n';
    return kExitInvalid;
  }

  Context ctx{std::vector<std::string>(argv + 1, argv + argc), out, err, quiet ? 0 : 1 + verbose};
  try {
    if (*datagen) return cmd_datagen(dg, ctx);
    if (*pretrain) return cmd_pretrain(pt, ctx);
    if (*train) return cmd_train(tr, ctx);
    if (*evaluate) return cmd_evaluate(ev, ctx);
    if (*experiment) return cmd_experiment(ex, ctx);
    if (*abl) return cmd_ablate(ab, ctx);
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitInvalid;
}

}  // namespace fcro::cli
