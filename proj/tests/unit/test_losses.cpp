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

#include <cmath>
#include <random>

#include "doctest.h"
#include "fcro/losses.hpp"
#include "test_support.hpp"

using namespace fcro;
using fcro::testing::max_relative_error;
using fcro::testing::numeric_gradient;
using fcro::testing::random_matrix;
using fcro::testing::random_orthonormal;

namespace {

BinaryTable random_binary(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  BinaryTable t(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) t(r, c) = coin(rng) ? 1 : 0;
  return t;
}

}  // namespace

TEST_CASE("corth_loss hand values") {
  Matrix s = Matrix::from_rows({{1.0}, {0.0}});
  auto l = corth_loss(Matrix::from_rows({{3.0}, {4.0}}), s);
  CHECK(l.value == doctest::Approx(0.36));

  // Columns orthogonal to the basis: zero value and zero gradient.
  auto zero = corth_loss(Matrix::from_rows({{0.0, 0.0}, {2.0, -1.0}}), s);
  CHECK(zero.value == 0.0);
  CHECK(frobenius_norm(zero.grad) == 0.0);

  // Columns inside the basis: each contributes exactly one.
  Matrix basis = random_orthonormal(6, 2, 3);
  Matrix inside = matmul(basis, random_matrix(2, 5, 4));
  CHECK(corth_loss(inside, basis).value == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("corth_loss skips near-zero columns") {
  Matrix s = Matrix::from_rows({{1.0}, {0.0}});
  Matrix z = Matrix::from_rows({{1e-10, 1.0}, {0.0, 1.0}});
  auto l = corth_loss(z, s);
  CHECK(l.value == doctest::Approx(0.5));
  CHECK(l.warnings.size() == 1);
  CHECK(l.grad(0, 0) == 0.0);
  CHECK(l.grad(1, 0) == 0.0);
}

TEST_CASE("corth_loss per-column terms are bounded and basis-rotation invariant") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Matrix z = random_matrix(8, 10, 700 + seed);
    Matrix s = random_orthonormal(8, 3, 800 + seed);
    auto l = corth_loss(z, s);
    CHECK(l.value >= 0.0);
    CHECK(l.value <= 10.0);
    for (std::size_t j = 0; j < 10; ++j) {
      auto single = corth_loss(z.select_cols(std::vector<std::size_t>{j}), s);
      CHECK(single.value >= 0.0);
      CHECK(single.value <= 1.0);
    }
    Matrix q = random_orthonormal(3, 3, 900 + seed);
    CHECK(std::abs(corth_loss(z, matmul(s, q)).value - l.value) <= 1e-10);
  }
}

TEST_CASE("rorth_loss hand values") {
  Matrix zt = Matrix::from_rows({{1.0, -1.0}, {0.0, 0.0}});
  CHECK(rorth_loss(zt, zt).value == doctest::Approx(0.25));

  // Rows identical in z_a center away entirely.
  Matrix za = Matrix::from_rows({{2.0, -3.0, 1.0}, {2.0, -3.0, 1.0}, {2.0, -3.0, 1.0}});
  auto l = rorth_loss(random_matrix(3, 3, 1), za);
  CHECK(l.value == 0.0);
  CHECK(frobenius_norm(l.grad) == 0.0);
  CHECK_THROWS_AS(rorth_loss(Matrix(3, 2), Matrix(3, 3)), ShapeError);
}

TEST_CASE("rorth_loss symmetry and shift invariance") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Matrix zt = random_matrix(5, 7, 10 + seed);
    Matrix za = random_matrix(5, 7, 40 + seed);
    const double base = rorth_loss(zt, za).value;
    CHECK(std::abs(rorth_loss(za, zt).value - base) <= 1e-10 * std::max(1.0, base));
    // z_a + 1_d v^T
    auto v = fcro::testing::random_vector(7, 70 + seed, 3.0);
    Matrix shifted = za;
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 7; ++j) shifted(i, j) += v[j];
    CHECK(std::abs(rorth_loss(zt, shifted).value - base) <= 1e-10 * std::max(1.0, base));
  }
}

TEST_CASE("cross_entropy values") {
  std::vector<double> zeros(4, 0.0);
  std::vector<int> labels{1, 0, 1, 1};
  CHECK(cross_entropy(zeros, labels).value == doctest::Approx(std::log(2.0)));
  std::vector<double> sat{20.0};
  std::vector<int> one{1};
  CHECK(cross_entropy(sat, one).value < 1e-8);
  std::vector<double> huge{-800.0};
  CHECK(cross_entropy(huge, one).value == doctest::Approx(800.0));
  CHECK_THROWS(cross_entropy(zeros, one));
}

TEST_CASE("sens_loss averages heads") {
  Matrix logits = random_matrix(3, 6, 5);
  BinaryTable attrs = random_binary(6, 3, 6);
  auto l = sens_loss(logits, attrs);
  double manual = 0.0;
  for (std::size_t h = 0; h < 3; ++h) manual += cross_entropy(logits.row(h), attrs.col(h)).value;
  CHECK(std::abs(l.value - manual / 3.0) <= 1e-12);

  Matrix one_head(1, 6);
  for (std::size_t j = 0; j < 6; ++j) one_head(0, j) = logits(0, j);
  BinaryTable one_attr(6, 1, attrs.col(0));
  CHECK(sens_loss(one_head, one_attr).value == cross_entropy(one_head.row(0), attrs.col(0)).value);

  // Two identical heads.
  Matrix twin(2, 6);
  BinaryTable twin_attr(6, 2);
  for (std::size_t j = 0; j < 6; ++j) {
    twin(0, j) = twin(1, j) = logits(0, j);
    twin_attr(j, 0) = twin_attr(j, 1) = attrs(j, 0);
  }
  CHECK(sens_loss(twin, twin_attr).value ==
        doctest::Approx(cross_entropy(twin.row(0), twin_attr.col(0)).value).epsilon(1e-15));
  CHECK_THROWS(sens_loss(Matrix(0, 6), BinaryTable(6, 0)));
}

TEST_CASE("analytic gradients match central differences") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CAPTURE(seed);
    Matrix zt = random_matrix(5, 7, 1000 + seed);
    Matrix za = random_matrix(5, 7, 2000 + seed);
    Matrix s = random_orthonormal(5, 2, 3000 + seed);

    auto corth = corth_loss(zt, s);
    auto num_c = numeric_gradient(zt, [&](const Matrix& z) { return corth_loss(z, s).value; });
    CHECK(max_relative_error(corth.grad, num_c) < 1e-4);

    auto rorth = rorth_loss(zt, za);
    auto num_r = numeric_gradient(zt, [&](const Matrix& z) { return rorth_loss(z, za).value; });
    CHECK(max_relative_error(rorth.grad, num_r) < 1e-4);

    Matrix logits = random_matrix(1, 6, 4000 + seed, 2.0);
    BinaryTable y = random_binary(6, 1, 5000 + seed);
    auto labels = y.col(0);
    auto ce = cross_entropy(logits.row(0), labels);
    auto num_ce = numeric_gradient(
        logits, [&](const Matrix& l) { return cross_entropy(l.row(0), labels).value; });
    CHECK(max_relative_error(ce.grad, num_ce) < 1e-4);

    Matrix heads = random_matrix(3, 6, 6000 + seed);
    BinaryTable attrs = random_binary(6, 3, 7000 + seed);
    auto sens = sens_loss(heads, attrs);
    auto num_s = numeric_gradient(heads, [&](const Matrix& l) { return sens_loss(l, attrs).value; });
    CHECK(max_relative_error(sens.grad, num_s) < 1e-4);
  }
}

TEST_CASE("normalization backward matches central differences") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Matrix z = random_matrix(4, 6, 90 + seed);
    Matrix s = random_orthonormal(4, 2, 95 + seed);
    auto f = [&](const Matrix& x) {
      std::vector<double> n;
      return corth_loss(normalize_columns(x, n), s).value;
    };
    std::vector<double> norms;
    Matrix zn = normalize_columns(z, norms);
    auto g = normalize_columns_backward(corth_loss(zn, s).grad, zn, norms);
    CHECK(max_relative_error(g, numeric_gradient(z, f)) < 1e-4);
  }
}

TEST_CASE("target_objective combines linearly") {
  Matrix zt = random_matrix(4, 5, 1);
  Matrix za = random_matrix(4, 5, 2);
  Matrix s = random_orthonormal(4, 1, 3);
  LossResult lt{0.7, random_matrix(4, 5, 4), {}};
  auto lc = corth_loss(zt, s);
  auto lr = rorth_loss(zt, za);

  auto erm = target_objective(lt, lc, lr, {0.0, 0.0});
  CHECK(erm.value == lt.value);
  CHECK(erm.grad == lt.grad);

  auto paper = target_objective(lt, lc, lr, {80.0, 500.0});
  CHECK(paper.value == doctest::Approx(lt.value + 80.0 * lc.value + 500.0 * lr.value));

  auto one = target_objective(lt, lc, lr, {1.5, 2.5});
  auto two = target_objective(lt, lc, lr, {3.0, 5.0});
  CHECK(std::abs((two.value - lt.value) - 2.0 * (one.value - lt.value)) <= 1e-12 * two.value);
  CHECK(max_abs_diff(two.grad - lt.grad, 2.0 * (one.grad - lt.grad)) <= 1e-12);
  CHECK_THROWS(target_objective(lt, lc, lr, {-1.0, 0.0}));
}
