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

// Command-line front end. Subcommands: datagen, pretrain, train, evaluate,
// experiment, ablate. Exit codes: 0 success, 1 invalid input (bad flag,
// missing file, schema violation), 2 failure while running a stage.

#ifndef FCRO_CLI_HPP_
#define FCRO_CLI_HPP_

#include <iosfwd>
#include <string>

#include "fcro/datagen.hpp"
#include "fcro/pipeline.hpp"
#include "json.hpp"

namespace fcro::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitRuntime = 2;

// The config file: {"data": GenSpec, "target_gap": g, "train": TrainConfig}.
// Every section is optional.
struct ExperimentDocument {
  GenSpec data;
  double target_gap = 0.12;
  TrainConfig train;
  // Whether the file set the seeds explicitly.
  bool data_seed_given = false;
  bool train_seed_given = false;
};

nlohmann::ordered_json to_json(const ExperimentDocument& doc);
// Throws std::invalid_argument listing every violation.
ExperimentDocument experiment_document_from_json(const nlohmann::json& j);
ExperimentDocument load_experiment_document(const std::string& path);

// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::string& path);

// Messages go to `out`; diagnostics and progress to `err`.
int parse_and_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace fcro::cli

#endif  // FCRO_CLI_HPP_
