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

// Low-rank sensitive subspace: batch construction from the top-k left
// singular vectors of a representation matrix, and a streaming variant that
// accumulates bases over mini-batches.
//
// Streaming update, per batch Z:
//   1. re-score every kept basis u as u^T Z Z^T u,
//   2. take the SVD of the residual Z - S S^T Z and score its left singular
//      vectors by sigma^2,
//   3. pool both candidate sets, sort by score (older bases win ties) and
//      keep ceil((q_old + q_new) / 2) of them,
//   4. re-orthonormalize the kept set by modified Gram-Schmidt in score order.
// After the configured number of epochs the k best-scored bases form the
// final space.

#ifndef FCRO_SUBSPACE_HPP_
#define FCRO_SUBSPACE_HPP_

#include <cstddef>
#include <string>
#include <vector>

#include "fcro/linalg.hpp"

namespace fcro {

struct SubspaceBasis {
  Matrix basis;                    // d x q, orthonormal columns
  std::vector<double> importance;  // length q, non-increasing
  std::size_t capacity = 0;        // target rank
  std::vector<std::string> warnings;

  std::size_t dim() const { return basis.rows(); }
  std::size_t rank() const { return basis.cols(); }
};

SubspaceBasis build_space(const Matrix& z_a, std::size_t k);

// ||S^T Z||_F^2 / ||Z||_F^2. Throws on an all-zero Z.
double captured_variance(const Matrix& z_a, const SubspaceBasis& basis);
double captured_variance(const Matrix& z_a, const Matrix& basis);

struct AccumulationState {
  SubspaceBasis current;
  std::size_t working_rank = 0;
  std::size_t max_epochs = 3;
  std::size_t epoch_counter = 0;
  std::size_t batches_seen = 0;
  // Provenance of the most recent step, for diagnostics.
  std::size_t last_kept_old = 0;
  std::size_t last_kept_new = 0;
  std::vector<std::string> warnings;
};

inline constexpr std::size_t kDefaultAccumulationEpochs = 3;

// Working rank used during accumulation for a final rank k: 2k capped at d.
std::size_t default_working_rank(std::size_t k, std::size_t d);

AccumulationState accumulate_init(const Matrix& z_a_batch, std::size_t k_working,
                                  std::size_t max_epochs = kDefaultAccumulationEpochs);
AccumulationState accumulate_step(AccumulationState state, const Matrix& z_a_batch);
// Marks an epoch boundary; throws past max_epochs.
void accumulate_end_epoch(AccumulationState& state);
SubspaceBasis accumulate_finalize(const AccumulationState& state, std::size_t k);

// Principal angles (radians, ascending) between the spans of two
// orthonormal bases of the same ambient dimension.
std::vector<double> principal_angles(const Matrix& a, const Matrix& b);
double largest_principal_angle(const Matrix& a, const Matrix& b);

// CSV basis plus JSON sidecar {"importance": [...], "capacity": k}.
void save_basis(const std::string& csv_path, const std::string& json_path,
                const SubspaceBasis& basis);
SubspaceBasis load_basis(const std::string& csv_path, const std::string& json_path);

}  // namespace fcro

#endif  // FCRO_SUBSPACE_HPP_
