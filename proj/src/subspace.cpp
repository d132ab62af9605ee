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

#include "fcro/subspace.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace fcro {

namespace {

// Relative threshold below which a singular value counts as zero.
constexpr double kRankTolerance = 1e-10;

}  // namespace

SubspaceBasis build_space(const Matrix& z_a, std::size_t k) {
  const std::size_t limit = std::min(z_a.rows(), z_a.cols());
  if (k < 1 || k > limit) {
    throw std::invalid_argument("build_space: k=" + std::to_string(k) + " outside [1, " +
                                std::to_string(limit) + "] for " + z_a.shape_string() +
                                " representations");
  }
  SvdResult svd = svd_thin(z_a);
  SubspaceBasis out;
  out.basis = svd.u.left_cols(k);
  out.capacity = k;
  out.importance.resize(k);
  const double top = svd.singular_values.front();
  for (std::size_t i = 0; i < k; ++i) {
    const double s = svd.singular_values[i];
    out.importance[i] = s * s;
    if (top == 0.0 || s <= kRankTolerance * top) {
      out.warnings.push_back("build_space: basis " + std::to_string(i) +
                             " exceeds the numerical rank of the representations");
    }
  }
  return out;
}

double captured_variance(const Matrix& z_a, const Matrix& basis) {
  if (basis.rows() != z_a.rows()) throw ShapeError("captured_variance", basis, z_a);
  const double total = squared_frobenius_norm(z_a);
  if (total == 0.0) throw std::invalid_argument("captured_variance: all-zero representations");
  const double inside = squared_frobenius_norm(matmul_tn(basis, z_a));
  return std::clamp(inside / total, 0.0, 1.0);
}

double captured_variance(const Matrix& z_a, const SubspaceBasis& basis) {
  return captured_variance(z_a, basis.basis);
}

std::size_t default_working_rank(std::size_t k, std::size_t d) { return std::min(2 * k, d); }

AccumulationState accumulate_init(const Matrix& z_a_batch, std::size_t k_working,
                                  std::size_t max_epochs) {
  AccumulationState state;
  const std::size_t q = std::min(k_working, std::min(z_a_batch.rows(), z_a_batch.cols()));
  if (q < k_working) {
    state.warnings.push_back("accumulate_init: working rank capped at " + std::to_string(q) +
                             " by the first batch shape " + z_a_batch.shape_string());
  }
  state.current = build_space(z_a_batch, q == 0 ? k_working : q);
  state.working_rank = k_working;
  state.max_epochs = max_epochs;
  state.batches_seen = 1;
  state.last_kept_old = 0;
  state.last_kept_new = state.current.rank();
  return state;
}

AccumulationState accumulate_step(AccumulationState state, const Matrix& z_a_batch) {
  const Matrix& s = state.current.basis;
  if (z_a_batch.cols() < 1) throw std::invalid_argument("accumulate_step: empty batch");
  if (z_a_batch.rows() != s.rows()) throw ShapeError("accumulate_step", s, z_a_batch);
  ++state.batches_seen;

  const double energy = frobenius_norm(z_a_batch);
  if (energy == 0.0) {
    state.warnings.push_back("accumulate_step: batch " + std::to_string(state.batches_seen) +
                             " is all zeros, skipped");
    state.last_kept_old = state.current.rank();
    state.last_kept_new = 0;
    return state;
  }

  const std::size_t d = s.rows();
  const std::size_t q_old = s.cols();
  Matrix proj = matmul_tn(s, z_a_batch);  // q_old x B
  Matrix residual = z_a_batch - matmul(s, proj);

  struct Candidate {
    double score;
    bool old;
    std::vector<double> direction;
  };
  std::vector<Candidate> pool;
  pool.reserve(q_old + d);
  for (std::size_t i = 0; i < q_old; ++i) {
    double delta = 0.0;
    for (double x : proj.row(i)) delta += x * x;
    pool.push_back({delta, true, s.col(i)});
  }

  SvdResult rsvd = svd_thin(residual);
  const std::size_t new_cap = std::min(state.working_rank, d - std::min(d, q_old));
  std::size_t q_new = 0;
  for (std::size_t j = 0; j < rsvd.singular_values.size() && q_new < new_cap; ++j) {
    const double sigma = rsvd.singular_values[j];
    if (sigma <= kRankTolerance * energy) break;
    pool.push_back({sigma * sigma, false, rsvd.u.col(j)});
    ++q_new;
  }

  std::stable_sort(pool.begin(), pool.end(),
                   [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
  const std::size_t keep = (q_old + q_new + 1) / 2;

  Matrix kept(d, keep);
  std::vector<double> scores(keep);
  std::size_t from_old = 0;
  for (std::size_t j = 0; j < keep; ++j) {
    kept.set_col(j, pool[j].direction);
    scores[j] = pool[j].score;
    from_old += pool[j].old ? 1 : 0;
  }
  if (!orthonormalize_columns(kept)) {
    // Dependent directions were zeroed; drop them.
    std::vector<std::size_t> live;
    std::vector<double> live_scores;
    const auto norms = col_norms(kept);
    for (std::size_t j = 0; j < keep; ++j) {
      if (norms[j] > 0.5) {
        live.push_back(j);
        live_scores.push_back(scores[j]);
      }
    }
    state.warnings.push_back("accumulate_step: dropped " + std::to_string(keep - live.size()) +
                             " dependent bases");
    kept = kept.select_cols(live);
    scores = std::move(live_scores);
  }

  state.current.basis = std::move(kept);
  state.current.importance = std::move(scores);
  state.current.capacity = state.working_rank;
  state.last_kept_old = from_old;
  state.last_kept_new = state.current.rank() - std::min(from_old, state.current.rank());
  return state;
}

void accumulate_end_epoch(AccumulationState& state) {
  if (state.epoch_counter >= state.max_epochs) {
    throw std::logic_error("accumulate_end_epoch: already completed " +
                           std::to_string(state.max_epochs) + " epochs");
  }
  ++state.epoch_counter;
}

SubspaceBasis accumulate_finalize(const AccumulationState& state, std::size_t k) {
  const std::size_t q = state.current.rank();
  if (k < 1 || k > q) {
    throw std::invalid_argument("accumulate_finalize: k=" + std::to_string(k) +
                                " exceeds the " + std::to_string(q) + " accumulated bases");
  }
  SubspaceBasis out;
  out.basis = state.current.basis.left_cols(k);
  out.importance.assign(state.current.importance.begin(), state.current.importance.begin() + k);
  out.capacity = k;
  out.warnings = state.warnings;
  return out;
}

std::vector<double> principal_angles(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw ShapeError("principal_angles", a, b);
  SvdResult svd = svd_thin(matmul_tn(a, b));
  std::vector<double> angles;
  angles.reserve(svd.singular_values.size());
  for (double c : svd.singular_values) angles.push_back(std::acos(std::clamp(c, 0.0, 1.0)));
  return angles;
}

double largest_principal_angle(const Matrix& a, const Matrix& b) {
  auto angles = principal_angles(a, b);
  return angles.empty() ? 0.0 : angles.back();
}

void save_basis(const std::string& csv_path, const std::string& json_path,
                const SubspaceBasis& basis) {
  write_matrix_csv(csv_path, basis.basis);
  nlohmann::ordered_json sidecar;
  sidecar["importance"] = basis.importance;
  sidecar["capacity"] = basis.capacity;
  std::ofstream out(json_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + json_path + " for writing");
  out << sidecar.dump(2) << '\n';
}

SubspaceBasis load_basis(const std::string& csv_path, const std::string& json_path) {
  SubspaceBasis out;
  out.basis = read_matrix_csv(csv_path);
  std::ifstream in(json_path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + json_path);
  auto sidecar = nlohmann::json::parse(in);
  out.importance = sidecar.at("importance").get<std::vector<double>>();
  out.capacity = sidecar.at("capacity").get<std::size_t>();
  if (out.importance.size() != out.basis.cols()) {
    throw std::runtime_error(json_path + ": importance length does not match basis columns");
  }
  return out;
}

}  // namespace fcro
