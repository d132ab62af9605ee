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

#include <Eigen/Dense>
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "fcro/linalg.hpp"
#include "test_support.hpp"

using namespace fcro;
using fcro::testing::orthonormality_error;
using fcro::testing::random_matrix;
using fcro::testing::reconstruct;

namespace {

double relative_reconstruction_error(const Matrix& m, const SvdResult& svd) {
  const double denom = std::max(frobenius_norm(m), 1e-300);
  return frobenius_norm(reconstruct(svd) - m) / denom;
}

}  // namespace

TEST_CASE("matrix construction rejects bad input") {
  CHECK_THROWS_AS(Matrix(2, 2, {1.0, 2.0, 3.0}), std::invalid_argument);
  CHECK_THROWS_AS(Matrix(1, 2, {1.0, std::nan("")}), std::invalid_argument);
  CHECK_THROWS_AS(Matrix(1, 1, {INFINITY}), std::invalid_argument);
}

TEST_CASE("matmul, transpose, norms") {
  Matrix m = random_matrix(3, 4, 1);
  CHECK(matmul(Matrix::identity(3), m) == m);
  CHECK(transpose(transpose(m)) == m);
  CHECK(max_abs_diff(matmul_tn(m, m), matmul(transpose(m), m)) < 1e-14);
  CHECK(max_abs_diff(matmul_nt(m, m), matmul(m, transpose(m))) < 1e-14);

  auto norms = col_norms(Matrix::from_rows({{3.0}, {4.0}}));
  REQUIRE(norms.size() == 1);
  CHECK(norms[0] == doctest::Approx(5.0));
  CHECK(frobenius_norm(Matrix(3, 3)) == 0.0);
}

TEST_CASE("shape mismatch names both shapes") {
  Matrix a(2, 3);
  Matrix b(2, 3);
  try {
    (void)matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
    CHECK(msg.find("and 2x3") != std::string::npos);
  }
}

TEST_CASE("gram") {
  CHECK(gram(Matrix::identity(2)) == Matrix::identity(2));
  CHECK(gram(Matrix::from_rows({{3.0}, {4.0}})) == Matrix::from_rows({{9, 12}, {12, 16}}));

  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Matrix m = random_matrix(6, 9, 100 + seed);
    Matrix g = gram(m);
    CHECK(max_abs_diff(g, transpose(g)) <= 1e-12);
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> eg(
        g.data().data(), 6, 6);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(eg);
    CHECK(es.eigenvalues().minCoeff() >= -1e-10);
  }
}

TEST_CASE("svd of diagonal and zero matrices") {
  auto svd = svd_thin(Matrix::from_rows({{3.0, 0.0}, {0.0, 1.0}}));
  REQUIRE(svd.singular_values.size() == 2);
  CHECK(svd.singular_values[0] == doctest::Approx(3.0));
  CHECK(svd.singular_values[1] == doctest::Approx(1.0));
  CHECK(max_abs_diff(svd.u, Matrix::identity(2)) < 1e-14);
  CHECK(max_abs_diff(svd.v, Matrix::identity(2)) < 1e-14);

  auto zero = svd_thin(Matrix(3, 3));
  for (double s : zero.singular_values) CHECK(s == 0.0);
  CHECK(orthonormality_error(zero.u) < 1e-12);
  CHECK(orthonormality_error(zero.v) < 1e-12);
}

TEST_CASE("svd invariants on random shapes") {
  const std::pair<std::size_t, std::size_t> shapes[] = {{5, 4}, {4, 5}, {1, 7}, {7, 1},
                                                        {16, 300}, {64, 256}, {40, 40}};
  std::uint64_t seed = 7;
  for (auto [r, c] : shapes) {
    CAPTURE(r);
    CAPTURE(c);
    Matrix m = random_matrix(r, c, seed++);
    auto svd = svd_thin(m);
    const std::size_t k = std::min(r, c);
    REQUIRE(svd.u.rows() == r);
    REQUIRE(svd.u.cols() == k);
    REQUIRE(svd.v.rows() == c);
    REQUIRE(svd.v.cols() == k);
    CHECK(relative_reconstruction_error(m, svd) < 1e-10);
    CHECK(orthonormality_error(svd.u) < 1e-10);
    CHECK(orthonormality_error(svd.v) < 1e-10);
    double energy = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      CHECK(svd.singular_values[i] >= 0.0);
      if (i) CHECK(svd.singular_values[i] <= svd.singular_values[i - 1]);
      energy += svd.singular_values[i] * svd.singular_values[i];
    }
    CHECK(std::abs(energy - squared_frobenius_norm(m)) <= 1e-9 * squared_frobenius_norm(m));
  }
}

TEST_CASE("svd handles rank deficiency") {
  // Rank 2 embedded in 6x10.
  Matrix m = matmul(random_matrix(6, 2, 31), random_matrix(2, 10, 32));
  auto svd = svd_thin(m);
  CHECK(relative_reconstruction_error(m, svd) < 1e-10);
  CHECK(orthonormality_error(svd.u) < 1e-10);
  CHECK(orthonormality_error(svd.v) < 1e-10);
  for (std::size_t i = 2; i < svd.singular_values.size(); ++i)
    CHECK(svd.singular_values[i] < 1e-12 * svd.singular_values[0]);
}

TEST_CASE("svd sign convention and determinism") {
  Matrix m = random_matrix(9, 13, 77);
  auto a = svd_thin(m);
  auto b = svd_thin(m);
  CHECK(a.u == b.u);
  CHECK(a.v == b.v);
  CHECK(a.singular_values == b.singular_values);
  for (std::size_t j = 0; j < a.u.cols(); ++j) {
    double largest = 0.0;
    for (std::size_t i = 0; i < a.u.rows(); ++i)
      if (std::abs(a.u(i, j)) > std::abs(largest)) largest = a.u(i, j);
    CHECK(largest > 0.0);
  }
  // Flipping the input's sign flips v only.
  auto neg = svd_thin(-1.0 * m);
  CHECK(max_abs_diff(neg.u, a.u) < 1e-12);
  CHECK(max_abs_diff(neg.v, -1.0 * a.v) < 1e-12);
}

TEST_CASE("left singular vectors match symmetric eigenvectors of the gram matrix") {
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    const std::size_t r = 2 + seed % 7;
    const std::size_t c = 3 + (seed * 5) % 6;
    Matrix m = random_matrix(r, c, 500 + seed);
    auto svd = svd_thin(m);
    Matrix g = gram(m);
    Eigen::MatrixXd eg(r, r);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < r; ++j) eg(i, j) = g(i, j);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(eg);
    // Eigen sorts ascending.
    for (std::size_t k = 0; k < std::min(r, c); ++k) {
      const Eigen::Index idx = static_cast<Eigen::Index>(r - 1 - k);
      CHECK(es.eigenvalues()(idx) ==
            doctest::Approx(svd.singular_values[k] * svd.singular_values[k]).epsilon(1e-9));
      double overlap = 0.0;
      for (std::size_t i = 0; i < r; ++i) overlap += svd.u(i, k) * es.eigenvectors()(i, idx);
      CHECK(std::abs(overlap) == doctest::Approx(1.0).epsilon(1e-8));
    }
  }
}

TEST_CASE("orthonormalize_columns flags dependent columns") {
  Matrix m = Matrix::from_rows({{1, 2, 0}, {0, 0, 0}, {0, 0, 1}});
  CHECK_FALSE(orthonormalize_columns(m));
  CHECK(m(0, 0) == 1.0);
  CHECK(m(0, 1) == 0.0);
  CHECK(m(2, 2) == 1.0);
}

TEST_CASE("matrix csv roundtrip is exact") {
  Matrix m = random_matrix(4, 3, 9);
  std::stringstream ss;
  write_matrix_csv(ss, m);
  CHECK(read_matrix_csv(ss) == m);

  std::stringstream bad("1,2\n3\n");
  CHECK_THROWS(read_matrix_csv(bad));
}
