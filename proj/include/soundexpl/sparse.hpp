/*
 * Copyright 2026 The soundexpl Authors.
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

#pragma once

#include <charconv>
#include <cstddef>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <system_error>
#include <utility>
#include <vector>

#include "soundexpl/error.hpp"

namespace soundexpl {

struct SparseEntry {
  std::size_t col = 0;
  double value = 0.0;
  bool operator==(const SparseEntry&) const = default;
};

// Column-sorted nonzeros of one row.
using SparseRow = std::vector<SparseEntry>;

// Compressed sparse rows. Column indices are strictly increasing within a
// row and stored values are nonzero.
class SparseMatrix {
 public:
  SparseMatrix() = default;
  explicit SparseMatrix(std::size_t cols) : cols_(cols) {}

  std::size_t rows() const { return row_ptr_.size() - 1; }
  std::size_t cols() const { return cols_; }
  std::size_t nnz() const { return entries_.size(); }

  std::span<const SparseEntry> row(std::size_t r) const {
    return std::span<const SparseEntry>(entries_).subspan(row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]);
  }

  // Zero values are dropped; columns must be increasing.
  void append_row(std::span<const SparseEntry> row) {
    std::size_t last = 0;
    bool first = true;
    for (const auto& e : row) {
      if (e.col >= cols_) throw ValidationError("column " + std::to_string(e.col) + " out of range");
      if (!first && e.col <= last) throw ValidationError("row columns must be strictly increasing");
      first = false;
      last = e.col;
      if (e.value != 0.0) entries_.push_back(e);
    }
    row_ptr_.push_back(entries_.size());
  }

  double at(std::size_t r, std::size_t c) const {
    for (const auto& e : row(r))
      if (e.col == c) return e.value;
    return 0.0;
  }

  std::vector<double> dense_row(std::size_t r) const {
    std::vector<double> out(cols_, 0.0);
    for (const auto& e : row(r)) out[e.col] = e.value;
    return out;
  }

  // Keep only `columns` (in the given order, which must be increasing);
  // the result has columns.size() columns.
  SparseMatrix project(std::span<const std::size_t> columns) const {
    std::vector<long> where(cols_, -1);
    for (std::size_t k = 0; k < columns.size(); ++k) where.at(columns[k]) = static_cast<long>(k);
    SparseMatrix out(columns.size());
    SparseRow buf;
    for (std::size_t r = 0; r < rows(); ++r) {
      buf.clear();
      for (const auto& e : row(r))
        if (where[e.col] >= 0) buf.push_back({static_cast<std::size_t>(where[e.col]), e.value});
      out.append_row(buf);
    }
    return out;
  }

  SparseMatrix select_rows(std::span<const std::size_t> rows_wanted) const {
    SparseMatrix out(cols_);
    for (std::size_t r : rows_wanted) out.append_row(row(r));
    return out;
  }

  double density() const {
    const double cells = static_cast<double>(rows()) * static_cast<double>(cols_);
    return cells == 0.0 ? 0.0 : static_cast<double>(nnz()) / cells;
  }

  bool operator==(const SparseMatrix&) const = default;

 private:
  std::size_t cols_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<SparseEntry> entries_;
};

// Shortest representation that parses back to the identical double.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view text) {
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size())
    throw ValidationError("not a number: '" + std::string(text) + "'");
  return v;
}

// Triplet text format: header "rows cols nnz", then one "row col value"
// line per stored entry in row-major order.
inline std::string matrix_to_triplets(const SparseMatrix& m) {
  std::string out = std::to_string(m.rows()) + " " + std::to_string(m.cols()) + " " +
                    std::to_string(m.nnz()) + "\n";
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (const auto& e : m.row(r))
      out += std::to_string(r) + " " + std::to_string(e.col) + " " + format_double(e.value) + "\n";
  return out;
}

inline SparseMatrix matrix_from_triplets(std::istream& in) {
  std::size_t rows = 0, cols = 0, nnz = 0;
  if (!(in >> rows >> cols >> nnz)) throw ValidationError("matrix file: bad header");
  SparseMatrix m(cols);
  SparseRow current;
  std::size_t current_row = 0;
  std::string value_text;
  for (std::size_t k = 0; k < nnz; ++k) {
    std::size_t r = 0, c = 0;
    if (!(in >> r >> c >> value_text)) throw ValidationError("matrix file: truncated at entry " + std::to_string(k));
    if (r >= rows) throw ValidationError("matrix file: row out of range");
    if (r < current_row) throw ValidationError("matrix file: rows out of order");
    while (current_row < r) {
      m.append_row(current);
      current.clear();
      ++current_row;
    }
    current.push_back({c, parse_double(value_text)});
  }
  while (m.rows() < rows) {
    m.append_row(current);
    current.clear();
  }
  if (m.nnz() != nnz) throw ValidationError("matrix file: explicit zeros are not allowed");
  return m;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << contents;
  if (!out) throw IoError("write failed: " + path);
}

inline std::vector<std::string> read_lines(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) lines.push_back(line);
  return lines;
}

}  // namespace soundexpl
