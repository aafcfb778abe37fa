#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "recg/error.hpp"

namespace recg {

/// Dense row-major float32 matrix. Parameters and embeddings are stored in
/// this form; forward/backward arithmetic widens to double.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, float fill = 0.0f)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  float& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  float operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<float> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const float> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<float> flat() { return data_; }
  std::span<const float> flat() const { return data_; }

  void fill(float v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const Matrix& o) const noexcept {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

using DVec = std::vector<double>;

template <typename A, typename B>
double dot(std::span<const A> a, std::span<const B> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::DimensionMismatch, "dot of vectors with different lengths");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += double(a[i]) * double(b[i]);
  return acc;
}

inline double dot(const DVec& a, const DVec& b) {
  return dot(std::span<const double>(a), std::span<const double>(b));
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

/// out += W * x
template <typename T>
void matvec_acc(const Matrix& w, std::span<const T> x, std::span<double> out) {
  if (x.size() != w.cols() || out.size() != w.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "matvec shape mismatch");
  }
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const auto wr = w.row(r);
    double acc = 0.0;
    for (std::size_t c = 0; c < wr.size(); ++c) acc += double(wr[c]) * double(x[c]);
    out[r] += acc;
  }
}

/// out += W^T * g
inline void matvec_t_acc(const Matrix& w, std::span<const double> g, std::span<double> out) {
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const auto wr = w.row(r);
    const double gr = g[r];
    if (gr == 0.0) continue;
    for (std::size_t c = 0; c < wr.size(); ++c) out[c] += double(wr[c]) * gr;
  }
}

/// Gradient accumulator with the same shape as a float parameter matrix.
class GradMatrix {
 public:
  GradMatrix() = default;
  GradMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }
  void zero() { std::fill(data_.begin(), data_.end(), 0.0); }

  /// this += g * x^T
  template <typename T>
  void add_outer(std::span<const double> g, std::span<const T> x) {
    for (std::size_t r = 0; r < rows_; ++r) {
      const double gr = g[r];
      if (gr == 0.0) continue;
      double* dst = data_.data() + r * cols_;
      for (std::size_t c = 0; c < cols_; ++c) dst[c] += gr * double(x[c]);
    }
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline bool all_finite(std::span<const float> v) {
  for (float x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace recg
