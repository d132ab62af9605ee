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

#ifndef FCRO_TABLE_HPP_
#define FCRO_TABLE_HPP_

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fcro {

// n x m table of 0/1 values, row-major; one row per sample.
class BinaryTable {
 public:
  BinaryTable() = default;
  BinaryTable(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0) {}
  BinaryTable(std::size_t rows, std::size_t cols, std::vector<int> values)
      : rows_(rows), cols_(cols), data_(std::move(values)) {
    if (data_.size() != rows_ * cols_) throw std::invalid_argument("BinaryTable: size mismatch");
    for (int v : data_)
      if (v != 0 && v != 1) throw std::invalid_argument("BinaryTable: entries must be 0 or 1");
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  int operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  int& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  std::span<const int> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<int> col(std::size_t c) const {
    std::vector<int> out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
    return out;
  }

  BinaryTable select_rows(std::span<const std::size_t> indices) const {
    BinaryTable out(indices.size(), cols_);
    for (std::size_t i = 0; i < indices.size(); ++i)
      for (std::size_t c = 0; c < cols_; ++c) out(i, c) = (*this)(indices[i], c);
    return out;
  }

  friend bool operator==(const BinaryTable&, const BinaryTable&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<int> data_;
};

}  // namespace fcro

#endif  // FCRO_TABLE_HPP_
