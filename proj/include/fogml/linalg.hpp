#pragma once

// Small dense linear algebra used by the optimizers and summarizers.
// Row-major storage, double precision, no expression templates.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "fogml/error.hpp"

namespace fogml {

using Vec = std::vector<double>;

inline double dot(std::span<const double> a, std::span<const double> b) {
  require_dims(a.size(), b.size(), "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double norm_inf(std::span<const double> a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

inline double distance2(std::span<const double> a, std::span<const double> b) {
  require_dims(a.size(), b.size(), "distance");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

/// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  require_dims(y.size(), x.size(), "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline Vec sub(std::span<const double> a, std::span<const double> b) {
  require_dims(a.size(), b.size(), "sub");
  Vec r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
  return r;
}

inline bool all_finite(std::span<const double> a) {
  return std::all_of(a.begin(), a.end(),
                     [](double v) { return std::isfinite(v); });
}

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return data[r * cols + c];
  }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const {
    return {data.data() + r * cols, cols};
  }
};

inline Vec matvec(const Matrix& a, std::span<const double> x) {
  require_dims(a.cols, x.size(), "matvec");
  Vec y(a.rows, 0.0);
  for (std::size_t r = 0; r < a.rows; ++r) y[r] = dot(a.row(r), x);
  return y;
}

/// Aᵀx
inline Vec matvec_t(const Matrix& a, std::span<const double> x) {
  require_dims(a.rows, x.size(), "matvec_t");
  Vec y(a.cols, 0.0);
  for (std::size_t r = 0; r < a.rows; ++r) axpy(x[r], a.row(r), y);
  return y;
}

/// AᵀA
inline Matrix gram(const Matrix& a) {
  Matrix g(a.cols, a.cols);
  for (std::size_t r = 0; r < a.rows; ++r) {
    const auto row = a.row(r);
    for (std::size_t i = 0; i < a.cols; ++i) {
      if (row[i] == 0.0) continue;
      for (std::size_t j = 0; j < a.cols; ++j) g(i, j) += row[i] * row[j];
    }
  }
  return g;
}

/// Solves A x = b for symmetric positive definite A by Cholesky.
inline Vec cholesky_solve(const Matrix& a, std::span<const double> b) {
  require_dims(a.rows, a.cols, "cholesky_solve (square)");
  require_dims(a.rows, b.size(), "cholesky_solve rhs");
  const std::size_t n = a.rows;
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0)) {
      throw Error(ErrorKind::kSingular,
                  "cholesky_solve: matrix not positive definite", j);
    }
    l(j, j) = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  Vec y(b.begin(), b.end());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < i; ++k) y[i] -= l(i, k) * y[k];
    y[i] /= l(i, i);
  }
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t k = i + 1; k < n; ++k) y[i] -= l(k, i) * y[k];
    y[i] /= l(i, i);
  }
  return y;
}

}  // namespace fogml
