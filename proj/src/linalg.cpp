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

#include "fcro/linalg.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

namespace fcro {

Matrix::Matrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> entries)
    : rows_(rows), cols_(cols), data_(std::move(entries)) {
  if (data_.size() != rows_ * cols_) {
    throw std::invalid_argument("Matrix: " + std::to_string(data_.size()) +
                                " entries given for shape " + shape_string());
  }
  if (!all_finite()) {
    throw std::invalid_argument("Matrix: non-finite entry in " + shape_string() + " input");
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.front().size();
  std::vector<double> entries;
  entries.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw std::invalid_argument("Matrix::from_rows: ragged rows");
    entries.insert(entries.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(entries));
}

Matrix Matrix::column(std::span<const double> values) {
  return Matrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

std::vector<double> Matrix::col(std::size_t c) const {
  std::vector<double> out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
  return out;
}

void Matrix::set_col(std::size_t c, std::span<const double> values) {
  if (values.size() != rows_) throw std::invalid_argument("Matrix::set_col: length mismatch");
  for (std::size_t r = 0; r < rows_; ++r) (*this)(r, c) = values[r];
}

Matrix Matrix::select_cols(std::span<const std::size_t> indices) const {
  Matrix out(rows_, indices.size());
  for (std::size_t r = 0; r < rows_; ++r) {
    const double* src = data_.data() + r * cols_;
    double* dst = out.data_.data() + r * indices.size();
    for (std::size_t j = 0; j < indices.size(); ++j) dst[j] = src[indices[j]];
  }
  return out;
}

Matrix Matrix::left_cols(std::size_t count) const {
  std::vector<std::size_t> idx(count);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return select_cols(idx);
}

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

std::string Matrix::shape_string() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

Matrix& Matrix::operator+=(const Matrix& other) {
  if (rows_ != other.rows_ || cols_ != other.cols_) throw ShapeError("add", *this, other);
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  if (rows_ != other.rows_ || cols_ != other.cols_) throw ShapeError("subtract", *this, other);
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double scale) {
  for (double& x : data_) x *= scale;
  return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(Matrix a, double scale) { return a *= scale; }
Matrix operator*(double scale, Matrix a) { return a *= scale; }

ShapeError::ShapeError(const std::string& op, const Matrix& a, const Matrix& b)
    : std::invalid_argument(op + ": shape mismatch between " + a.shape_string() + " and " +
                            b.shape_string()) {}

SvdConvergenceError::SvdConvergenceError(int sweeps, double off_diagonal_residual)
    : std::runtime_error("svd_thin: no convergence after " + std::to_string(sweeps) +
                         " sweeps, off-diagonal residual " + format_double(off_diagonal_residual)),
      residual_(off_diagonal_residual) {}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul", a, b);
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto dst = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto src = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) dst[j] += aik * src[j];
    }
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw ShapeError("matmul_tn", a, b);
  Matrix out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    auto arow = a.row(k);
    auto brow = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = arow[i];
      if (aki == 0.0) continue;
      auto dst = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) dst[j] += aki * brow[j];
    }
  }
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw ShapeError("matmul_nt", a, b);
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto arow = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      auto brow = b.row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += arow[k] * brow[k];
      out(i, j) = s;
    }
  }
  return out;
}

Matrix transpose(const Matrix& m) {
  Matrix out(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(j, i) = m(i, j);
  return out;
}

Matrix gram(const Matrix& m) {
  Matrix out(m.rows(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto ri = m.row(i);
    for (std::size_t j = i; j < m.rows(); ++j) {
      auto rj = m.row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < m.cols(); ++k) s += ri[k] * rj[k];
      out(i, j) = s;
      out(j, i) = s;
    }
  }
  return out;
}

std::vector<double> col_norms(const Matrix& m) {
  std::vector<double> sq(m.cols(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    for (std::size_t j = 0; j < m.cols(); ++j) sq[j] += r[j] * r[j];
  }
  for (double& x : sq) x = std::sqrt(x);
  return sq;
}

double squared_frobenius_norm(const Matrix& m) {
  double s = 0.0;
  for (double x : m.data()) s += x * x;
  return s;
}

double frobenius_norm(const Matrix& m) { return std::sqrt(squared_frobenius_norm(m)); }

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("max_abs_diff", a, b);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  return worst;
}

namespace {

using Columns = std::vector<std::vector<double>>;

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Fills columns flagged in `missing` with unit vectors orthogonal to every
// other column, choosing the canonical basis vector with the largest
// remaining component.
void complete_orthonormal(Columns& cols, const std::vector<bool>& missing, std::size_t dim) {
  std::vector<std::size_t> fixed;
  for (std::size_t j = 0; j < cols.size(); ++j)
    if (!missing[j]) fixed.push_back(j);
  for (std::size_t j = 0; j < cols.size(); ++j) {
    if (!missing[j]) continue;
    std::vector<double> best;
    double best_norm = -1.0;
    for (std::size_t e = 0; e < dim; ++e) {
      std::vector<double> cand(dim, 0.0);
      cand[e] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t f : fixed) {
          const double proj = dot(cols[f], cand);
          for (std::size_t i = 0; i < dim; ++i) cand[i] -= proj * cols[f][i];
        }
      }
      const double nrm = std::sqrt(dot(cand, cand));
      if (nrm > best_norm + 1e-12) {
        best_norm = nrm;
        best = std::move(cand);
      }
      if (best_norm >= 0.5) break;
    }
    for (double& x : best) x /= best_norm;
    cols[j] = std::move(best);
    fixed.push_back(j);
  }
}

// One-sided Jacobi on a tall matrix given as columns (length rows >= count).
// On return `work` holds U*diag(s) and `rot` holds V (count x count, columns).
void jacobi_sweeps(Columns& work, Columns& rot) {
  const std::size_t n = work.size();
  constexpr int kMaxSweeps = 80;
  const double tol = std::numeric_limits<double>::epsilon() * 4.0;
  double total = 0.0;
  for (const auto& c : work) total += dot(c, c);
  // Columns below this squared norm are roundoff and are left alone.
  const double floor_sq = total * std::pow(std::numeric_limits<double>::epsilon(), 2) *
                          static_cast<double>(work.front().size());
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    double worst = 0.0;
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        auto& cp = work[p];
        auto& cq = work[q];
        const double alpha = dot(cp, cp);
        const double beta = dot(cq, cq);
        const double gamma = dot(cp, cq);
        if (alpha <= floor_sq || beta <= floor_sq) continue;
        const double off = std::abs(gamma) / std::sqrt(alpha * beta);
        worst = std::max(worst, off);
        if (off <= tol) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < cp.size(); ++i) {
          const double x = cp[i];
          const double y = cq[i];
          cp[i] = c * x - s * y;
          cq[i] = s * x + c * y;
        }
        auto& vp = rot[p];
        auto& vq = rot[q];
        for (std::size_t i = 0; i < vp.size(); ++i) {
          const double x = vp[i];
          const double y = vq[i];
          vp[i] = c * x - s * y;
          vq[i] = s * x + c * y;
        }
      }
    }
    if (!rotated) return;
    if (sweep + 1 == kMaxSweeps) throw SvdConvergenceError(kMaxSweeps, worst);
  }
}

}  // namespace

SvdResult svd_thin(const Matrix& m) {
  if (m.rows() == 0 || m.cols() == 0) throw std::invalid_argument("svd_thin: empty matrix");
  if (!m.all_finite()) throw std::invalid_argument("svd_thin: non-finite entries");

  // Work on the tall orientation; `tall` is rows x r with rows >= r.
  const bool transposed = m.rows() < m.cols();
  const std::size_t tall_rows = transposed ? m.cols() : m.rows();
  const std::size_t r = transposed ? m.rows() : m.cols();

  Columns work(r, std::vector<double>(tall_rows));
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (transposed) work[i][j] = m(i, j);
      else work[j][i] = m(i, j);
    }
  Columns rot(r, std::vector<double>(r, 0.0));
  for (std::size_t j = 0; j < r; ++j) rot[j][j] = 1.0;

  jacobi_sweeps(work, rot);

  std::vector<double> sigma(r);
  for (std::size_t j = 0; j < r; ++j) sigma[j] = std::sqrt(dot(work[j], work[j]));
  std::vector<std::size_t> order(r);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sigma[a] > sigma[b]; });

  const double sigma_max = sigma[order.front()];
  const double negligible =
      sigma_max * std::numeric_limits<double>::epsilon() * static_cast<double>(tall_rows) * 8.0;

  Columns normalized(r);
  Columns rotations(r);
  std::vector<double> sorted_sigma(r);
  std::vector<bool> missing(r, false);
  for (std::size_t k = 0; k < r; ++k) {
    const std::size_t j = order[k];
    sorted_sigma[k] = sigma[j];
    rotations[k] = rot[j];
    if (sigma[j] <= negligible || sigma[j] == 0.0) {
      missing[k] = true;
      normalized[k].assign(tall_rows, 0.0);
    } else {
      normalized[k] = work[j];
      for (double& x : normalized[k]) x /= sigma[j];
    }
  }
  if (std::find(missing.begin(), missing.end(), true) != missing.end())
    complete_orthonormal(normalized, missing, tall_rows);

  // transposed: m^T = W S R^T  =>  m = R S W^T, so U = R and V = W.
  const Columns& left = transposed ? rotations : normalized;
  const Columns& right = transposed ? normalized : rotations;

  SvdResult out{Matrix(m.rows(), r), std::move(sorted_sigma), Matrix(m.cols(), r)};
  for (std::size_t k = 0; k < r; ++k) {
    const auto& u = left[k];
    std::size_t arg = 0;
    for (std::size_t i = 1; i < u.size(); ++i)
      if (std::abs(u[i]) > std::abs(u[arg])) arg = i;
    const double sign = u[arg] < 0.0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < m.rows(); ++i) out.u(i, k) = sign * u[i];
    for (std::size_t i = 0; i < m.cols(); ++i) out.v(i, k) = sign * right[k][i];
  }
  return out;
}

bool orthonormalize_columns(Matrix& m, double dependence_tolerance) {
  bool ok = true;
  const std::size_t d = m.rows();
  Columns cols(m.cols());
  for (std::size_t j = 0; j < m.cols(); ++j) cols[j] = m.col(j);
  for (std::size_t j = 0; j < cols.size(); ++j) {
    const double original = std::sqrt(dot(cols[j], cols[j]));
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t i = 0; i < j; ++i) {
        const double proj = dot(cols[i], cols[j]);
        for (std::size_t t = 0; t < d; ++t) cols[j][t] -= proj * cols[i][t];
      }
    }
    const double nrm = std::sqrt(dot(cols[j], cols[j]));
    if (original == 0.0 || nrm <= dependence_tolerance * original) {
      std::fill(cols[j].begin(), cols[j].end(), 0.0);
      ok = false;
      continue;
    }
    for (double& x : cols[j]) x /= nrm;
  }
  for (std::size_t j = 0; j < cols.size(); ++j) m.set_col(j, cols[j]);
  return ok;
}

std::string format_double(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

void write_matrix_csv(std::ostream& out, const Matrix& m) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << format_double(m(i, j));
    }
    out << '\n';
  }
}

void write_matrix_csv(const std::string& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_matrix_csv(out, m);
}

Matrix read_matrix_csv(std::istream& in) {
  std::vector<double> entries;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t count = 0;
    std::size_t start = 0;
    while (start <= line.size()) {
      std::size_t end = line.find(',', start);
      if (end == std::string::npos) end = line.size();
      double value = 0.0;
      auto res = std::from_chars(line.data() + start, line.data() + end, value);
      if (res.ec != std::errc() || res.ptr != line.data() + end) {
        throw std::runtime_error("matrix CSV: bad number on row " + std::to_string(rows + 1));
      }
      entries.push_back(value);
      ++count;
      start = end + 1;
    }
    if (rows == 0) cols = count;
    else if (count != cols)
      throw std::runtime_error("matrix CSV: row " + std::to_string(rows + 1) + " has " +
                               std::to_string(count) + " fields, expected " + std::to_string(cols));
    ++rows;
  }
  return Matrix(rows, cols, std::move(entries));
}

Matrix read_matrix_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_matrix_csv(in);
}

}  // namespace fcro
