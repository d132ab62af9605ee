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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "doctest.h"
#include "fcro/subspace.hpp"
#include "test_support.hpp"

using namespace fcro;
using fcro::testing::orthonormality_error;
using fcro::testing::random_matrix;
using fcro::testing::random_orthonormal;

namespace {

constexpr double kPi = 3.14159265358979323846;

Matrix diag_like(std::size_t d, std::size_t n, std::vector<double> diag) {
  Matrix m(d, n);
  for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
  return m;
}

// Streams `data` in shuffled batches for `epochs` epochs, as the pipeline does.
AccumulationState stream(const Matrix& data, std::size_t batch, std::size_t working,
                         std::size_t epochs, std::uint64_t seed) {
  std::vector<std::size_t> order(data.cols());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  AccumulationState state;
  bool initialized = false;
  for (std::size_t e = 0; e < epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      std::vector<std::size_t> idx(order.begin() + start, order.begin() + end);
      Matrix z = data.select_cols(idx);
      if (!initialized) {
        state = accumulate_init(z, working, epochs);
        initialized = true;
      } else {
        state = accumulate_step(std::move(state), z);
        CHECK(orthonormality_error(state.current.basis) < 1e-8);
        CHECK(std::is_sorted(state.current.importance.rbegin(), state.current.importance.rend()));
      }
    }
    accumulate_end_epoch(state);
  }
  return state;
}

}  // namespace

TEST_CASE("build_space on a rank-1 input") {
  Matrix z(4, 8);
  for (std::size_t j = 0; j < 8; ++j) z(0, j) = 1.0;
  auto space = build_space(z, 1);
  REQUIRE(space.rank() == 1);
  CHECK(std::abs(space.basis(0, 0)) == doctest::Approx(1.0));
  CHECK(space.importance[0] == doctest::Approx(8.0));
  CHECK(space.warnings.empty());

  auto over = build_space(z, 3);
  CHECK(over.warnings.size() == 2);
  CHECK(orthonormality_error(over.basis) < 1e-10);
}

TEST_CASE("build_space importance and captured variance by hand") {
  Matrix z = diag_like(2, 3, {3.0, 1.0});
  auto space = build_space(z, 1);
  CHECK(space.importance[0] == doctest::Approx(9.0));
  CHECK(captured_variance(z, space) == doctest::Approx(0.9));
  CHECK(captured_variance(z, build_space(z, 2)) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("build_space rejects bad k") {
  Matrix z = random_matrix(4, 6, 1);
  CHECK_THROWS_AS(build_space(z, 0), std::invalid_argument);
  CHECK_THROWS_AS(build_space(z, 5), std::invalid_argument);
  CHECK_THROWS_AS(captured_variance(Matrix(4, 6), build_space(z, 2)), std::invalid_argument);
  CHECK_THROWS_AS(captured_variance(random_matrix(3, 6, 2), build_space(z, 2)), ShapeError);
}

TEST_CASE("captured variance matches the singular value ratio and is monotone") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Matrix z = random_matrix(8, 20, 40 + seed);
    auto svd = svd_thin(z);
    double total = 0.0;
    for (double s : svd.singular_values) total += s * s;
    double running = 0.0;
    double previous = 0.0;
    for (std::size_t k = 1; k <= 8; ++k) {
      running += svd.singular_values[k - 1] * svd.singular_values[k - 1];
      const double fraction = captured_variance(z, build_space(z, k));
      CHECK(fraction == doctest::Approx(running / total).epsilon(1e-9));
      CHECK(fraction >= previous - 1e-12);
      previous = fraction;
    }
    CHECK(previous == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("build_space is invariant to column permutation") {
  Matrix z = random_matrix(6, 30, 11);
  std::vector<std::size_t> perm(30);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(5);
  std::shuffle(perm.begin(), perm.end(), rng);
  auto a = build_space(z, 3);
  auto b = build_space(z.select_cols(perm), 3);
  CHECK(largest_principal_angle(a.basis, b.basis) < 1e-6);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(a.importance[i] == doctest::Approx(b.importance[i]).epsilon(1e-10));
}

TEST_CASE("accumulate_init equals build_space") {
  Matrix z = random_matrix(10, 40, 3);
  auto state = accumulate_init(z, 4);
  auto direct = build_space(z, 4);
  CHECK(state.current.basis == direct.basis);
  CHECK(state.current.importance == direct.importance);
  auto svd = svd_thin(z);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(state.current.importance[i] ==
          doctest::Approx(svd.singular_values[i] * svd.singular_values[i]));
}

TEST_CASE("accumulate_step with a batch inside the span keeps only old bases") {
  Matrix basis = random_orthonormal(8, 3, 21);
  Matrix first = matmul(basis, random_matrix(3, 20, 22));
  auto state = accumulate_init(first, 3);
  Matrix inside = matmul(basis, random_matrix(3, 15, 23));

  // Residual energy of the new batch is at roundoff level.
  Matrix residual = inside - matmul(state.current.basis, matmul_tn(state.current.basis, inside));
  for (double s : svd_thin(residual).singular_values) CHECK(s <= 1e-8);

  auto next = accumulate_step(state, inside);
  CHECK(next.last_kept_new == 0);
  CHECK(next.last_kept_old == next.current.rank());
  CHECK(largest_principal_angle(next.current.basis, basis.left_cols(3)) >= 0.0);
  // Kept bases lie in the old span.
  CHECK(captured_variance(next.current.basis, state.current.basis) ==
        doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("accumulate_step promotes stronger orthogonal directions") {
  const std::size_t d = 6;
  Matrix weak(d, 10);
  for (std::size_t j = 0; j < 10; ++j) {
    weak(0, j) = (j % 2 ? 1.0 : -1.0) * 0.5;
    weak(1, j) = (j % 3 ? 0.3 : -0.2);
  }
  auto state = accumulate_init(weak, 2);
  Matrix strong(d, 10);
  for (std::size_t j = 0; j < 10; ++j) {
    strong(2, j) = (j % 2 ? 5.0 : -4.0);
    strong(3, j) = (j % 3 ? 3.0 : -2.5);
  }
  auto next = accumulate_step(state, strong);
  REQUIRE(next.current.rank() == 2);
  // Old bases score zero on the new batch; both kept come from the residual.
  CHECK(next.last_kept_new == 2);
  Matrix e23(d, 2);
  e23(2, 0) = 1.0;
  e23(3, 1) = 1.0;
  CHECK(largest_principal_angle(next.current.basis, e23) < 1e-10);
  // Projection energies confirm it.
  CHECK(captured_variance(strong, next.current) == doctest::Approx(1.0));
}

TEST_CASE("accumulate_step top-half rule and zero batches") {
  Matrix z = random_matrix(12, 50, 8);
  auto state = accumulate_init(z, 4);
  auto next = accumulate_step(state, random_matrix(12, 50, 9));
  CHECK(next.current.rank() == 4);  // ceil((4 + 4) / 2)
  CHECK(next.batches_seen == 2);

  auto same = accumulate_step(next, Matrix(12, 5));
  CHECK(same.current.basis == next.current.basis);
  CHECK(same.warnings.size() == next.warnings.size() + 1);
  CHECK_THROWS(accumulate_step(next, Matrix(12, 0)));
  CHECK_THROWS_AS(accumulate_step(next, Matrix(11, 5)), ShapeError);
}

TEST_CASE("accumulation over one full batch spans the batch space") {
  Matrix z = random_matrix(10, 60, 12);
  auto state = accumulate_init(z, 6, 1);
  state = accumulate_step(state, z);
  accumulate_end_epoch(state);
  auto finalized = accumulate_finalize(state, 3);
  auto direct = build_space(z, 3);
  CHECK(largest_principal_angle(finalized.basis, direct.basis) <= 1e-6);
}

TEST_CASE("accumulate_finalize picks the best k") {
  Matrix z = random_matrix(10, 60, 13);
  auto state = accumulate_init(z, 6);
  auto top3 = accumulate_finalize(state, 3);
  CHECK(top3.rank() == 3);
  CHECK(top3.capacity == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(top3.importance[i] == state.current.importance[i]);
  auto all = accumulate_finalize(state, 6);
  CHECK(all.basis == state.current.basis);
  CHECK_THROWS(accumulate_finalize(state, 7));
}

TEST_CASE("epoch counter respects the configured limit") {
  auto state = accumulate_init(random_matrix(5, 10, 1), 2, 2);
  accumulate_end_epoch(state);
  accumulate_end_epoch(state);
  CHECK(state.epoch_counter == 2);
  CHECK_THROWS(accumulate_end_epoch(state));
}

TEST_CASE("stationary rank-3 stream: accumulated space tracks the batch space") {
  auto fixture = fcro::testing::stationary_rank3_stream(16, 1024, 0.01, 99);
  auto state = stream(fixture.data, 128, default_working_rank(3, 16), 3, 7);
  CHECK(state.epoch_counter == 3);
  auto accumulated = accumulate_finalize(state, 3);
  auto batch = build_space(fixture.data, 3);
  const double acc_var = captured_variance(fixture.data, accumulated);
  const double batch_var = captured_variance(fixture.data, batch);
  CHECK(acc_var >= 0.99 * batch_var);
  CHECK(largest_principal_angle(batch.basis, accumulated.basis) <= 15.0 * kPi / 180.0);
}

TEST_CASE("basis serialization roundtrip") {
  auto dir = std::filesystem::temp_directory_path() / "fcro_test_subspace";
  std::filesystem::create_directories(dir);
  auto space = build_space(random_matrix(5, 9, 4), 2);
  save_basis((dir / "b.csv").string(), (dir / "b.json").string(), space);
  auto back = load_basis((dir / "b.csv").string(), (dir / "b.json").string());
  CHECK(back.basis == space.basis);
  CHECK(back.importance == space.importance);
  CHECK(back.capacity == 2);
}
