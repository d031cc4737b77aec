#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "voxgraph/error.hpp"

namespace voxgraph::gnn {

/// Dense row-major matrix.
template <typename R>
struct Matrix {
  std::size_t rows = 0, cols = 0;
  std::vector<R> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, R fill = R(0)) : rows(r), cols(c), data(r * c, fill) {}

  R& operator()(std::size_t i, std::size_t j) noexcept { return data[i * cols + j]; }
  R operator()(std::size_t i, std::size_t j) const noexcept { return data[i * cols + j]; }

  R* row(std::size_t i) noexcept { return data.data() + i * cols; }
  const R* row(std::size_t i) const noexcept { return data.data() + i * cols; }

  void set_zero() { std::fill(data.begin(), data.end(), R(0)); }

  bool all_finite() const noexcept {
    return std::all_of(data.begin(), data.end(), [](R v) { return std::isfinite(v); });
  }
};

/// C = A B
template <typename R>
Matrix<R> matmul(const Matrix<R>& a, const Matrix<R>& b) {
  if (a.cols != b.rows) throw ContractError("matmul: shape mismatch");
  Matrix<R> c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    R* ci = c.row(i);
    const R* ai = a.row(i);
    for (std::size_t p = 0; p < a.cols; ++p) {
      const R av = ai[p];
      if (av == R(0)) continue;
      const R* bp = b.row(p);
      for (std::size_t j = 0; j < b.cols; ++j) ci[j] += av * bp[j];
    }
  }
  return c;
}

/// C += A^T B
template <typename R>
void matmul_tn_acc(const Matrix<R>& a, const Matrix<R>& b, Matrix<R>& c) {
  if (a.rows != b.rows || c.rows != a.cols || c.cols != b.cols) throw ContractError("matmul_tn: shape mismatch");
  for (std::size_t i = 0; i < a.rows; ++i) {
    const R* ai = a.row(i);
    const R* bi = b.row(i);
    for (std::size_t p = 0; p < a.cols; ++p) {
      const R av = ai[p];
      if (av == R(0)) continue;
      R* cp = c.row(p);
      for (std::size_t j = 0; j < b.cols; ++j) cp[j] += av * bi[j];
    }
  }
}

/// C = A B^T
template <typename R>
Matrix<R> matmul_nt(const Matrix<R>& a, const Matrix<R>& b) {
  if (a.cols != b.cols) throw ContractError("matmul_nt: shape mismatch");
  Matrix<R> c(a.rows, b.rows);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const R* ai = a.row(i);
    R* ci = c.row(i);
    for (std::size_t j = 0; j < b.rows; ++j) {
      const R* bj = b.row(j);
      R s = 0;
      for (std::size_t p = 0; p < a.cols; ++p) s += ai[p] * bj[p];
      ci[j] = s;
    }
  }
  return c;
}

/// Adds row vector `b` (1 x cols) to every row.
template <typename R>
void add_row_bias(Matrix<R>& m, std::span<const R> b) {
  for (std::size_t i = 0; i < m.rows; ++i) {
    R* mi = m.row(i);
    for (std::size_t j = 0; j < m.cols; ++j) mi[j] += b[j];
  }
}

template <typename R>
void accumulate_column_sums(const Matrix<R>& m, std::span<R> out) {
  for (std::size_t i = 0; i < m.rows; ++i) {
    const R* mi = m.row(i);
    for (std::size_t j = 0; j < m.cols; ++j) out[j] += mi[j];
  }
}

template <typename R>
std::vector<R> column_means(const Matrix<R>& m) {
  std::vector<R> out(m.cols, R(0));
  accumulate_column_sums<R>(m, out);
  for (auto& v : out) v /= R(m.rows);
  return out;
}

template <typename R>
R sigmoid(R x) {
  if (x >= R(0)) return R(1) / (R(1) + std::exp(-x));
  const R e = std::exp(x);
  return e / (R(1) + e);
}

}  // namespace voxgraph::gnn
