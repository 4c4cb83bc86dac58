#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "grec/error.hpp"

namespace grec {

#if defined(GREC_DOUBLE_PRECISION)
using Real = double;
#else
using Real = float;
#endif

// Row-major dense matrix. Rows are exposed as spans so kernels never touch
// raw pointers.
template <typename T>
class DenseMatrix {
 public:
  using value_type = T;

  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, T fill = T{0})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw InputError("DenseMatrix: data length does not match rows*cols");
    }
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) noexcept {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }
  const T& operator()(std::size_t r, std::size_t c) const noexcept {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }

  std::span<T> row(std::size_t r) noexcept {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<const T> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  // Appends one row; the first append on an empty 0x0 matrix fixes cols.
  void append_row(std::span<const T> values) {
    if (rows_ == 0 && cols_ == 0) cols_ = values.size();
    if (values.size() != cols_) throw InputError("DenseMatrix: row width mismatch");
    data_.insert(data_.end(), values.begin(), values.end());
    ++rows_;
  }

  bool operator==(const DenseMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

template <typename T>
T dot(std::span<const T> a, std::span<const T> b) noexcept {
  assert(a.size() == b.size());
  T acc{0};
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

template <typename T>
T squared_distance(std::span<const T> a, std::span<const T> b) noexcept {
  assert(a.size() == b.size());
  T acc{0};
  for (std::size_t i = 0; i < a.size(); ++i) {
    const T d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

template <typename T>
T squared_norm(std::span<const T> a) noexcept {
  return dot(a, a);
}

// y += alpha * x
template <typename T>
void axpy(T alpha, std::span<const T> x, std::span<T> y) noexcept {
  assert(x.size() == y.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

// out = W x + b, W is (out x in).
template <typename T>
void affine(const DenseMatrix<T>& w, std::span<const T> b, std::span<const T> x,
            std::span<T> out) noexcept {
  assert(w.cols() == x.size() && w.rows() == out.size() && b.size() == out.size());
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const auto wr = w.row(i);
    T acc{0};
    for (std::size_t j = 0; j < x.size(); ++j) acc += wr[j] * x[j];
    out[i] = acc + b[i];
  }
}

// out += W^T g, W is (rows x cols), g has rows entries, out has cols entries.
template <typename T>
void add_transposed_product(const DenseMatrix<T>& w, std::span<const T> g,
                            std::span<T> out) noexcept {
  assert(w.rows() == g.size() && w.cols() == out.size());
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const T gi = g[i];
    if (gi == T{0}) continue;
    const auto wr = w.row(i);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += gi * wr[j];
  }
}

// G += g x^T
template <typename T>
void add_outer(std::span<const T> g, std::span<const T> x, DenseMatrix<T>& acc) noexcept {
  assert(acc.rows() == g.size() && acc.cols() == x.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const T gi = g[i];
    if (gi == T{0}) continue;
    auto ar = acc.row(i);
    for (std::size_t j = 0; j < x.size(); ++j) ar[j] += gi * x[j];
  }
}

template <typename T>
bool all_finite(std::span<const T> values) noexcept {
  return std::all_of(values.begin(), values.end(),
                     [](T v) { return std::isfinite(v); });
}

template <typename To, typename From>
std::vector<To> convert_values(std::span<const From> values) {
  std::vector<To> out(values.size());
  std::transform(values.begin(), values.end(), out.begin(),
                 [](From v) { return static_cast<To>(v); });
  return out;
}

}  // namespace grec
