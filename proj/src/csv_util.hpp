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

// Minimal comma-separated helpers shared by the table readers.
#pragma once

#include <charconv>
#include <stdexcept>
#include <string>
#include <vector>

namespace fcro::detail {

inline std::vector<std::string> split_csv_line(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t end = line.find(',', start);
    fields.push_back(line.substr(start, end == std::string::npos ? std::string::npos : end - start));
    if (end == std::string::npos) break;
    start = end + 1;
  }
  return fields;
}

inline double parse_double(const std::string& field, std::size_t line_no) {
  double value = 0.0;
  auto res = std::from_chars(field.data(), field.data() + field.size(), value);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    throw std::runtime_error("line " + std::to_string(line_no) + ": bad number '" + field + "'");
  }
  return value;
}

inline int parse_binary(const std::string& field, std::size_t line_no) {
  if (field == "0") return 0;
  if (field == "1") return 1;
  throw std::runtime_error("line " + std::to_string(line_no) + ": expected 0 or 1, got '" + field + "'");
}

}  // namespace fcro::detail
