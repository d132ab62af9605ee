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

#include "fcro/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace fcro {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

LossResult corth_loss(const Matrix& z_t, const Matrix& basis, double eps_norm) {
  if (basis.rows() != z_t.rows()) throw ShapeError("corth_loss", z_t, basis);
  const std::size_t d = z_t.rows();
  const std::size_t k = basis.cols();
  LossResult out;
  out.grad = Matrix(d, z_t.cols());
  Matrix proj = matmul_tn(basis, z_t);  // k x B
  const auto norms = col_norms(z_t);
  std::vector<double> p(k);
  for (std::size_t j = 0; j < z_t.cols(); ++j) {
    if (norms[j] < eps_norm) {
      out.warnings.push_back("corth_loss: column " + std::to_string(j) +
                             " has near-zero norm, skipped");
      continue;
    }
    const double den = norms[j] * norms[j];
    double num = 0.0;
    for (std::size_t a = 0; a < k; ++a) {
      p[a] = proj(a, j);
      num += p[a] * p[a];
    }
    out.value += num / den;
    // d/dz = 2 S S^T z / |z|^2 - 2 |S^T z|^2 z / |z|^4
    for (std::size_t i = 0; i < d; ++i) {
      double sp = 0.0;
      for (std::size_t a = 0; a < k; ++a) sp += basis(i, a) * p[a];
      out.grad(i, j) = 2.0 * sp / den - 2.0 * num * z_t(i, j) / (den * den);
    }
  }
  return out;
}

LossResult corth_loss(const Matrix& z_t, const SubspaceBasis& basis, double eps_norm) {
  return corth_loss(z_t, basis.basis, eps_norm);
}

namespace {

// Subtracts from every column its mean over rows.
Matrix center_columns(const Matrix& z) {
  Matrix out = z;
  const double inv_rows = 1.0 / static_cast<double>(z.rows());
  for (std::size_t j = 0; j < z.cols(); ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < z.rows(); ++i) mean += z(i, j);
    mean *= inv_rows;
    for (std::size_t i = 0; i < z.rows(); ++i) out(i, j) -= mean;
  }
  return out;
}

}  // namespace

LossResult rorth_loss(const Matrix& z_t, const Matrix& z_a) {
  if (z_t.rows() != z_a.rows() || z_t.cols() != z_a.cols()) throw ShapeError("rorth_loss", z_t, z_a);
  if (z_t.cols() < 1) throw std::invalid_argument("rorth_loss: empty batch");
  const double d = static_cast<double>(z_t.rows());
  const Matrix ct = center_columns(z_t);
  const Matrix ca = center_columns(z_a);
  const Matrix c = matmul_nt(ct, ca);  // d x d cross products between rows
  LossResult out;
  out.value = squared_frobenius_norm(c) / (d * d);
  // Centering is an orthogonal projection, so its adjoint is itself.
  out.grad = center_columns(matmul(c, ca));
  out.grad *= 2.0 / (d * d);
  return out;
}

LossResult cross_entropy(std::span<const double> logits, std::span<const int> labels) {
  if (logits.size() != labels.size()) {
    throw std::invalid_argument("cross_entropy: " + std::to_string(logits.size()) + " logits vs " +
                                std::to_string(labels.size()) + " labels");
  }
  if (logits.empty()) throw std::invalid_argument("cross_entropy: empty batch");
  const double inv_b = 1.0 / static_cast<double>(logits.size());
  LossResult out;
  out.grad = Matrix(1, logits.size());
  for (std::size_t j = 0; j < logits.size(); ++j) {
    const double l = logits[j];
    if (!std::isfinite(l)) throw std::invalid_argument("cross_entropy: non-finite logit");
    const double y = labels[j];
    out.value += std::max(l, 0.0) - l * y + std::log1p(std::exp(-std::abs(l)));
    out.grad(0, j) = (sigmoid(l) - y) * inv_b;
  }
  out.value *= inv_b;
  return out;
}

LossResult sens_loss(const Matrix& logits, const BinaryTable& attributes) {
  const std::size_t m = logits.rows();
  if (m == 0) throw std::invalid_argument("sens_loss: no sensitive attributes");
  if (attributes.cols() != m || attributes.rows() != logits.cols()) {
    throw std::invalid_argument("sens_loss: logits " + logits.shape_string() +
                                " do not match attributes " + std::to_string(attributes.rows()) +
                                "x" + std::to_string(attributes.cols()));
  }
  const double inv_m = 1.0 / static_cast<double>(m);
  LossResult out;
  out.grad = Matrix(m, logits.cols());
  for (std::size_t h = 0; h < m; ++h) {
    auto head = cross_entropy(logits.row(h), attributes.col(h));
    out.value += head.value;
    for (std::size_t j = 0; j < logits.cols(); ++j) out.grad(h, j) = head.grad(0, j) * inv_m;
  }
  out.value *= inv_m;
  return out;
}

LossResult target_objective(const LossResult& l_t, const LossResult& l_corth,
                            const LossResult& l_rorth, const LossWeights& w) {
  if (!(w.lambda_c >= 0.0) || !(w.lambda_r >= 0.0) || !std::isfinite(w.lambda_c) ||
      !std::isfinite(w.lambda_r)) {
    throw std::invalid_argument("target_objective: loss weights must be finite and >= 0");
  }
  LossResult out;
  out.value = l_t.value + w.lambda_c * l_corth.value + w.lambda_r * l_rorth.value;
  out.grad = l_t.grad;
  Matrix gc = l_corth.grad;
  gc *= w.lambda_c;
  Matrix gr = l_rorth.grad;
  gr *= w.lambda_r;
  out.grad += gc;
  out.grad += gr;
  out.warnings = l_corth.warnings;
  return out;
}

Matrix normalize_columns(const Matrix& z, std::vector<double>& norms) {
  norms = col_norms(z);
  Matrix out = z;
  for (std::size_t j = 0; j < z.cols(); ++j) {
    if (norms[j] < kDefaultNormEpsilon) continue;
    for (std::size_t i = 0; i < z.rows(); ++i) out(i, j) /= norms[j];
  }
  return out;
}

Matrix normalize_columns_backward(const Matrix& grad_normalized, const Matrix& normalized,
                                  std::span<const double> norms) {
  Matrix out(grad_normalized.rows(), grad_normalized.cols());
  for (std::size_t j = 0; j < out.cols(); ++j) {
    if (norms[j] < kDefaultNormEpsilon) continue;
    double radial = 0.0;
    for (std::size_t i = 0; i < out.rows(); ++i) radial += normalized(i, j) * grad_normalized(i, j);
    for (std::size_t i = 0; i < out.rows(); ++i)
      out(i, j) = (grad_normalized(i, j) - normalized(i, j) * radial) / norms[j];
  }
  return out;
}

}  // namespace fcro
