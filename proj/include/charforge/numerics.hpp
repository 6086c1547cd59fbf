#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstring>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "charforge/error.hpp"

namespace charforge {

/// Dense row-major matrix. Value type; copies are deep.
template <std::floating_point T>
class Matrix {
 public:
  using value_type = T;

  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{0})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ShapeError("matrix data length " + std::to_string(data_.size()) + " does not match " +
                       shape_string());
    }
  }
  Matrix(std::initializer_list<std::initializer_list<T>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw ShapeError("ragged matrix initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T{1};
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  std::span<T> flat() noexcept { return data_; }
  std::span<const T> flat() const noexcept { return data_; }
  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  std::string shape_string() const {
    return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
  }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  template <std::floating_point U>
  Matrix<U> cast() const {
    Matrix<U> out(rows_, cols_);
    std::transform(data_.begin(), data_.end(), out.data(), [](T v) { return static_cast<U>(v); });
    return out;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

/// Unchecked inner kernels for the hot paths. Every output element is
/// accumulated in increasing index order of the contracted dimension, so
/// results do not depend on how many columns are processed together.
namespace kernels {

#if defined(__AVX__)
inline constexpr std::size_t kVectorBytes = 32;
#else
inline constexpr std::size_t kVectorBytes = 16;
#endif

/// c(i, j) += sum_p a_at(i, p) * b(p, j), with b and c row-major and n columns.
/// Every c element accumulates its terms in increasing p, the same order as
/// the plain i-k-j loop, so the tiling never changes results. Tiles of 6 rows
/// by two vectors stay in registers across the whole p loop.
template <std::floating_point T, typename AAt>
void tiled_acc(std::size_t m, std::size_t n, std::size_t k, AAt a_at, const T* b, T* c) {
  typedef T V __attribute__((vector_size(kVectorBytes)));
  constexpr std::size_t L = kVectorBytes / sizeof(T);
  constexpr std::size_t R = 6;
  constexpr std::size_t NV = 2;
  constexpr std::size_t J = NV * L;
  std::size_t i = 0;
  for (; i + R <= m; i += R) {
    std::size_t j0 = 0;
    for (; j0 + J <= n; j0 += J) {
      V acc[R][NV];
      for (std::size_t r = 0; r < R; ++r) {
        for (std::size_t v = 0; v < NV; ++v) {
          std::memcpy(&acc[r][v], c + (i + r) * n + j0 + v * L, kVectorBytes);
        }
      }
      for (std::size_t p = 0; p < k; ++p) {
        V bv[NV];
        for (std::size_t v = 0; v < NV; ++v) std::memcpy(&bv[v], b + p * n + j0 + v * L, kVectorBytes);
        for (std::size_t r = 0; r < R; ++r) {
          const T av = a_at(i + r, p);
          for (std::size_t v = 0; v < NV; ++v) acc[r][v] += av * bv[v];
        }
      }
      for (std::size_t r = 0; r < R; ++r) {
        for (std::size_t v = 0; v < NV; ++v) {
          std::memcpy(c + (i + r) * n + j0 + v * L, &acc[r][v], kVectorBytes);
        }
      }
    }
    for (std::size_t r = 0; r < R; ++r) {
      T* crow = c + (i + r) * n;
      for (std::size_t p = 0; p < k; ++p) {
        const T av = a_at(i + r, p);
        const T* brow = b + p * n;
        for (std::size_t j = j0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
  for (; i < m; ++i) {
    T* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a_at(i, p);
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

/// c += a * b
template <std::floating_point T>
void gemm_nn_acc(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& c) {
  const std::size_t k = a.cols();
  const T* ad = a.data();
  tiled_acc<T>(a.rows(), b.cols(), k, [ad, k](std::size_t i, std::size_t p) { return ad[i * k + p]; },
               b.data(), c.data());
}

/// c += a^T * b
template <std::floating_point T>
void gemm_tn_acc(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& c) {
  const std::size_t m = a.cols();
  const T* ad = a.data();
  tiled_acc<T>(m, b.cols(), a.rows(), [ad, m](std::size_t i, std::size_t p) { return ad[p * m + i]; },
               b.data(), c.data());
}

template <std::floating_point T>
void transpose_into(const Matrix<T>& a, Matrix<T>& out) {
  if (out.rows() != a.cols() || out.cols() != a.rows()) out = Matrix<T>(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  }
}

/// c += a * b^T, via an explicit transpose of b held in `scratch`.
template <std::floating_point T>
void gemm_nt_acc(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& c, Matrix<T>& scratch) {
  transpose_into(b, scratch);
  gemm_nn_acc(a, scratch, c);
}

}  // namespace kernels

namespace detail {
template <std::floating_point T>
void require_finite(const Matrix<T>& m, const char* op) {
  if (!m.all_finite()) throw NumericError(std::string(op) + " produced a non-finite value");
}
}  // namespace detail

template <std::floating_point T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul shape mismatch: " + a.shape_string() + " x " + b.shape_string());
  }
  Matrix<T> c(a.rows(), b.cols());
  kernels::gemm_nn_acc(a, b, c);
  detail::require_finite(c, "matmul");
  return c;
}

template <std::floating_point T>
inline T sigmoid(T v) noexcept {
  return T{1} / (T{1} + std::exp(-v));
}

enum class Activation { sigmoid, tanh };

template <std::floating_point T>
Matrix<T> elementwise(Activation kind, const Matrix<T>& x) {
  detail::require_finite(x, "elementwise input");
  Matrix<T> out = x;
  for (T& v : out.flat()) v = kind == Activation::sigmoid ? sigmoid(v) : std::tanh(v);
  return out;
}

/// Max-shifted softmax. Writes into `out` (same length as `logits`).
template <std::floating_point T>
void softmax_into(std::span<const T> logits, std::span<T> out) {
  if (logits.empty()) throw ArgumentError("softmax of an empty vector");
  const T mx = *std::max_element(logits.begin(), logits.end());
  T sum{0};
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] /= sum;
}

template <std::floating_point T>
std::vector<T> softmax(std::span<const T> logits) {
  for (T v : logits) {
    if (!std::isfinite(v)) throw NumericError("softmax input is not finite");
  }
  std::vector<T> out(logits.size());
  softmax_into<T>(logits, out);
  return out;
}

template <std::floating_point T>
std::vector<T> softmax(const std::vector<T>& logits) {
  return softmax(std::span<const T>(logits));
}

inline constexpr double kProbabilityFloor = 1e-12;

/// -ln(probs[target]), with the probability clamped to 1e-12 first.
template <std::floating_point T>
T cross_entropy(std::span<const T> probs, std::size_t target) {
  if (target >= probs.size()) {
    throw IndexError("cross_entropy target " + std::to_string(target) + " out of range for " +
                     std::to_string(probs.size()) + " classes");
  }
  const T p = std::max(probs[target], static_cast<T>(kProbabilityFloor));
  return p >= T{1} ? T{0} : -std::log(p);
}

template <std::floating_point T>
T cross_entropy(const std::vector<T>& probs, std::size_t target) {
  return cross_entropy(std::span<const T>(probs), target);
}

/// Index of the first maximal entry.
template <std::floating_point T>
std::size_t argmax(std::span<const T> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace charforge
