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

// Shared fixtures for the unit and acceptance suites.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "fcro/linalg.hpp"

namespace fcro::testing {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed,
                            double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, scale);
  Matrix m(rows, cols);
  for (double& x : m.data()) x = gauss(rng);
  return m;
}

inline std::vector<double> random_vector(std::size_t n, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, scale);
  std::vector<double> v(n);
  for (double& x : v) x = gauss(rng);
  return v;
}

inline Matrix random_orthonormal(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Matrix m = random_matrix(rows, cols, seed);
  orthonormalize_columns(m);
  return m;
}

// Largest |Q^T Q - I| entry.
inline double orthonormality_error(const Matrix& q) {
  Matrix qtq = matmul_tn(q, q);
  return max_abs_diff(qtq, Matrix::identity(q.cols()));
}

inline Matrix reconstruct(const SvdResult& svd) {
  Matrix us = svd.u;
  for (std::size_t i = 0; i < us.rows(); ++i)
    for (std::size_t j = 0; j < us.cols(); ++j) us(i, j) *= svd.singular_values[j];
  return matmul_nt(us, svd.v);
}

// Central finite difference of a scalar function of a matrix, entry by entry.
template <typename F>
Matrix numeric_gradient(const Matrix& at, F&& f, double eps = 1e-5) {
  Matrix g(at.rows(), at.cols());
  Matrix probe = at;
  for (std::size_t i = 0; i < at.size(); ++i) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + eps;
    const double up = f(probe);
    probe.data()[i] = orig - eps;
    const double down = f(probe);
    probe.data()[i] = orig;
    g.data()[i] = (up - down) / (2.0 * eps);
  }
  return g;
}

// Max element-wise relative error with an absolute floor so that entries
// near zero do not dominate.
inline double max_relative_error(const Matrix& analytic, const Matrix& numeric,
                                 double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic.data()[i];
    const double n = numeric.data()[i];
    const double denom = std::max({std::abs(a), std::abs(n), floor});
    worst = std::max(worst, std::abs(a - n) / denom);
  }
  return worst;
}

}  // namespace fcro::testing

namespace fcro::testing {

// Samples drawn from a fixed rank-3 subspace of R^d with distinct per-axis
// scales, plus isotropic Gaussian noise. Columns are samples.
struct StationaryStream {
  Matrix data;
  Matrix true_basis;
};

inline StationaryStream stationary_rank3_stream(std::size_t d, std::size_t n, double noise,
                                                std::uint64_t seed) {
  StationaryStream s;
  s.true_basis = random_orthonormal(d, 3, seed);
  std::mt19937_64 rng(seed + 1);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double scales[3] = {3.0, 2.0, 1.2};
  s.data = Matrix(d, n);
  for (std::size_t j = 0; j < n; ++j) {
    double coeff[3];
    for (int a = 0; a < 3; ++a) coeff[a] = scales[a] * gauss(rng);
    for (std::size_t i = 0; i < d; ++i) {
      double v = noise * gauss(rng);
      for (int a = 0; a < 3; ++a) v += s.true_basis(i, a) * coeff[a];
      s.data(i, j) = v;
    }
  }
  return s;
}

}  // namespace fcro::testing
