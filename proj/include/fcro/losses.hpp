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

// Training objectives with analytic gradients. Representation matrices are
// d x B with one sample per column; every gradient has the shape of the
// input it is taken with respect to.

#ifndef FCRO_LOSSES_HPP_
#define FCRO_LOSSES_HPP_

#include <span>
#include <string>
#include <vector>

#include "fcro/linalg.hpp"
#include "fcro/subspace.hpp"
#include "fcro/table.hpp"

namespace fcro {

struct LossResult {
  double value = 0.0;
  Matrix grad;
  std::vector<std::string> warnings;
};

struct LossWeights {
  double lambda_c = 80.0;
  double lambda_r = 500.0;
};

inline constexpr double kDefaultNormEpsilon = 1e-8;

// Column orthogonality: sum over samples of ||S^T z||^2 / ||z||^2. Each term
// lies in [0, 1]. Columns shorter than `eps_norm` contribute nothing.
LossResult corth_loss(const Matrix& z_t, const Matrix& basis,
                      double eps_norm = kDefaultNormEpsilon);
LossResult corth_loss(const Matrix& z_t, const SubspaceBasis& basis,
                      double eps_norm = kDefaultNormEpsilon);

// Row orthogonality: ||Zc_T Zc_A^T||_F^2 / d^2 where Zc subtracts from every
// column its mean over the d feature rows. Gradient is w.r.t. z_t only.
LossResult rorth_loss(const Matrix& z_t, const Matrix& z_a);

// Mean binary cross-entropy on logits; gradient is 1 x B.
LossResult cross_entropy(std::span<const double> logits, std::span<const int> labels);

// Mean over attribute heads of per-head cross-entropy. `logits` is m x B
// (one row per head), `attributes` is B x m. Gradient is m x B.
LossResult sens_loss(const Matrix& logits, const BinaryTable& attributes);

// L_T + lambda_c L_corth + lambda_r L_rorth. All three gradients must already
// be expressed w.r.t. the same target representation.
LossResult target_objective(const LossResult& l_t, const LossResult& l_corth,
                            const LossResult& l_rorth, const LossWeights& w);

// Unit-normalizes columns; `norms` receives the original lengths.
Matrix normalize_columns(const Matrix& z, std::vector<double>& norms);
// Pulls a gradient taken at normalize_columns(z) back to z.
Matrix normalize_columns_backward(const Matrix& grad_normalized, const Matrix& normalized,
                                  std::span<const double> norms);

double sigmoid(double x);

}  // namespace fcro

#endif  // FCRO_LOSSES_HPP_
