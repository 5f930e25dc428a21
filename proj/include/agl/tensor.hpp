// Copyright 2026 The agl-desk Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "agl/error.hpp"

namespace agl {

/// Dense row-major matrix.
template <typename T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T(0))
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<T> flat() { return data_; }
  std::span<const T> flat() const { return data_; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <typename U>
  Matrix<U> cast() const {
    Matrix<U> out(rows_, cols_);
    for (std::size_t i = 0; i < data_.size(); ++i) out.flat()[i] = static_cast<U>(data_[i]);
    return out;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

inline void check_shape(bool ok, const std::string& what) {
  if (!ok) raise(ErrorKind::kShape, what);
}

/// out.row(r) = H.row(r) * W for the listed rows; other rows of `out` are
/// left untouched. Zero inputs are skipped, which pays off on sparse
/// bag-of-words features.
template <typename T>
void matmul_rows(const Matrix<T>& h, const Matrix<T>& w, std::span<const std::uint32_t> rows,
                 Matrix<T>& out) {
  check_shape(h.cols() == w.rows(), "matmul: inner dims " + std::to_string(h.cols()) + " vs " +
                                        std::to_string(w.rows()));
  check_shape(out.rows() == h.rows() && out.cols() == w.cols(), "matmul: output shape");
  const std::size_t n = w.cols();
  for (auto r : rows) {
    auto o = out.row(r);
    std::fill(o.begin(), o.end(), T(0));
    auto in = h.row(r);
    for (std::size_t k = 0; k < in.size(); ++k) {
      const T a = in[k];
      if (a == T(0)) continue;
      const T* wk = &w(k, 0);
      for (std::size_t j = 0; j < n; ++j) o[j] += a * wk[j];
    }
  }
}

/// grad_w += H[rows]^T * G[rows].
template <typename T>
void accumulate_outer(const Matrix<T>& h, const Matrix<T>& g, std::span<const std::uint32_t> rows,
                      Matrix<T>& grad_w) {
  for (auto r : rows) {
    auto in = h.row(r);
    auto gr = g.row(r);
    for (std::size_t k = 0; k < in.size(); ++k) {
      const T a = in[k];
      if (a == T(0)) continue;
      T* dst = &grad_w(k, 0);
      for (std::size_t j = 0; j < gr.size(); ++j) dst[j] += a * gr[j];
    }
  }
}

/// out.row(r) = G.row(r) * W^T for the listed rows.
template <typename T>
void matmul_transposed_rows(const Matrix<T>& g, const Matrix<T>& w, std::span<const std::uint32_t> rows,
                            Matrix<T>& out) {
  for (auto r : rows) {
    auto gr = g.row(r);
    auto o = out.row(r);
    for (std::size_t k = 0; k < w.rows(); ++k) {
      const T* wk = &w(k, 0);
      T acc = 0;
      for (std::size_t j = 0; j < gr.size(); ++j) acc += gr[j] * wk[j];
      o[k] = acc;
    }
  }
}

/// Glorot-uniform initialization.
template <typename T>
void glorot(Matrix<T>& m, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (auto& v : m.flat()) v = static_cast<T>(dist(rng));
}

}  // namespace agl
