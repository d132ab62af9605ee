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

// Dense row-major double matrices and a deterministic thin SVD.
//
// Representation matrices follow the column-per-sample convention: a d x n
// matrix holds n samples, each a d-dimensional column.

#ifndef FCRO_LINALG_HPP_
#define FCRO_LINALG_HPP_

#include <cstddef>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fcro {

class Matrix {
 public:
  Matrix() = default;
  // Zero-filled rows x cols matrix.
  Matrix(std::size_t rows, std::size_t cols);
  // Takes ownership of row-major entries. Throws if the size is wrong or any
  // entry is NaN/Inf.
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> entries);

  static Matrix identity(std::size_t n);
  static Matrix from_rows(const std::vector<std::vector<double>>& rows);
  // Single column built from a vector.
  static Matrix column(std::span<const double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::vector<double> col(std::size_t c) const;
  void set_col(std::size_t c, std::span<const double> values);

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  // Columns [indices...] gathered into a new matrix.
  Matrix select_cols(std::span<const std::size_t> indices) const;
  // Leading `count` columns.
  Matrix left_cols(std::size_t count) const;

  bool all_finite() const;
  std::string shape_string() const;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double scale);

  friend bool operator==(const Matrix& a, const Matrix& b) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double scale);
Matrix operator*(double scale, Matrix a);

// Thrown for non-conforming shapes; the message names both operands.
class ShapeError : public std::invalid_argument {
 public:
  ShapeError(const std::string& op, const Matrix& a, const Matrix& b);
  using std::invalid_argument::invalid_argument;
};

class SvdConvergenceError : public std::runtime_error {
 public:
  SvdConvergenceError(int sweeps, double off_diagonal_residual);
  double residual() const { return residual_; }

 private:
  double residual_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
// a^T * b without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// a * b^T without materializing the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);
// m * m^T, exactly symmetric.
Matrix gram(const Matrix& m);
std::vector<double> col_norms(const Matrix& m);
double frobenius_norm(const Matrix& m);
double squared_frobenius_norm(const Matrix& m);
double max_abs_diff(const Matrix& a, const Matrix& b);

struct SvdResult {
  Matrix u;                            // rows x r, orthonormal columns
  std::vector<double> singular_values; // length r, non-increasing
  Matrix v;                            // cols x r, orthonormal columns
};

// Thin SVD by one-sided Jacobi rotations, r = min(rows, cols). The largest
// magnitude entry of every left singular vector is made positive, so output
// is a deterministic function of the input.
SvdResult svd_thin(const Matrix& m);

// Modified Gram-Schmidt applied twice, in column order. Columns that become
// numerically dependent are reported via the return value (false) and left
// as zeros.
bool orthonormalize_columns(Matrix& m, double dependence_tolerance = 1e-10);

// Plain CSV, one row per line, no header.
void write_matrix_csv(std::ostream& out, const Matrix& m);
void write_matrix_csv(const std::string& path, const Matrix& m);
Matrix read_matrix_csv(std::istream& in);
Matrix read_matrix_csv(const std::string& path);

// Shortest round-trip decimal representation used by every CSV writer.
std::string format_double(double value);

}  // namespace fcro

#endif  // FCRO_LINALG_HPP_
