#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "relay/error.hpp"

namespace relay::diffcore {

/// Dense row-major matrix. Vectors are 1×n or n×1 matrices.
template <typename T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{0})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw InvalidInput("matrix data size " + std::to_string(data_.size()) +
                         " does not match " + std::to_string(rows_) + "x" +
                         std::to_string(cols_));
    }
  }

  static Matrix row_vector(std::span<const T> values) {
    return Matrix(1, values.size(), std::vector<T>(values.begin(), values.end()));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  template <typename U>
  bool same_shape(const Matrix<U>& other) const noexcept {
    return rows_ == other.rows() && cols_ == other.cols();
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

template <typename T>
std::string shape_string(const Matrix<T>& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

template <typename T>
void require_same_shape(const Matrix<T>& a, const Matrix<T>& b, const char* what) {
  if (!a.same_shape(b)) {
    throw InvalidInput(std::string(what) + ": shape mismatch " + shape_string(a) + " vs " +
                       shape_string(b));
  }
}

// out = a * b^T ; a is n×k, b is m×k.
template <typename T>
Matrix<T> matmul_nt(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols() != b.cols()) {
    throw InvalidInput("matmul_nt: inner dimension mismatch " + shape_string(a) + " vs " +
                       shape_string(b));
  }
  Matrix<T> out(a.rows(), b.rows());
  const std::size_t k = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const T* ar = a.row(i).data();
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const T* br = b.row(j).data();
      T acc{0};
      for (std::size_t p = 0; p < k; ++p) acc += ar[p] * br[p];
      out(i, j) = acc;
    }
  }
  return out;
}

// out = a * b ; a is n×k, b is k×m.
template <typename T>
Matrix<T> matmul_nn(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols() != b.rows()) {
    throw InvalidInput("matmul_nn: inner dimension mismatch " + shape_string(a) + " vs " +
                       shape_string(b));
  }
  Matrix<T> out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    T* orow = out.row(i).data();
    for (std::size_t p = 0; p < a.cols(); ++p) {
      const T av = a(i, p);
      const T* brow = b.row(p).data();
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

// out = a^T * b ; a is n×k, b is n×m.
template <typename T>
Matrix<T> matmul_tn(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.rows() != b.rows()) {
    throw InvalidInput("matmul_tn: outer dimension mismatch " + shape_string(a) + " vs " +
                       shape_string(b));
  }
  Matrix<T> out(a.cols(), b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const T* arow = a.row(r).data();
    const T* brow = b.row(r).data();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const T av = arow[i];
      T* orow = out.row(i).data();
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

}  // namespace relay::diffcore
