#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bpls/errors.hpp"

namespace bpls {

// Dense row-major matrix. Deliberately minimal: the models here stay below
// a few hundred rows and q < 100 columns, so no sparse or blocked paths.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double value = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, value) {}

  static Matrix from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return {};
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != m.cols_)
        throw std::invalid_argument("Matrix::from_rows: ragged rows");
      for (std::size_t j = 0; j < m.cols_; ++j) m.at(i, j) = rows[i][j];
    }
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return rows_ == 0 || cols_ == 0; }

  double& at(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double at(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * cols_, cols_};
  }
  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }

  const std::vector<double>& data() const { return data_; }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Symmetric matrix with q < ~100; stored dense, both triangles kept equal.
class SpdMatrix {
 public:
  SpdMatrix() = default;
  explicit SpdMatrix(std::size_t dim) : dim_(dim), entries_(dim * dim, 0.0) {}

  static SpdMatrix identity(std::size_t dim) {
    SpdMatrix m(dim);
    for (std::size_t i = 0; i < dim; ++i) m.at(i, i) = 1.0;
    return m;
  }

  static SpdMatrix from_rows(const std::vector<std::vector<double>>& rows) {
    SpdMatrix m(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != m.dim_)
        throw std::invalid_argument("SpdMatrix::from_rows: not square");
      for (std::size_t j = 0; j < m.dim_; ++j) m.at(i, j) = rows[i][j];
    }
    if (!m.is_symmetric()) throw std::invalid_argument("SpdMatrix: not symmetric");
    return m;
  }

  std::size_t dim() const { return dim_; }
  double& at(std::size_t i, std::size_t j) { return entries_[i * dim_ + j]; }
  double at(std::size_t i, std::size_t j) const { return entries_[i * dim_ + j]; }

  // Writes value to (i,j) and (j,i) so symmetry holds exactly as stored.
  void set_symmetric(std::size_t i, std::size_t j, double value) {
    entries_[i * dim_ + j] = value;
    entries_[j * dim_ + i] = value;
  }

  void add_diagonal(double value) {
    for (std::size_t i = 0; i < dim_; ++i) at(i, i) += value;
  }

  bool is_symmetric() const {
    for (std::size_t i = 0; i < dim_; ++i)
      for (std::size_t j = i + 1; j < dim_; ++j)
        if (at(i, j) != at(j, i)) return false;
    return true;
  }

  bool all_finite() const {
    for (double v : entries_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  std::vector<double> multiply(std::span<const double> x) const {
    std::vector<double> y(dim_, 0.0);
    for (std::size_t i = 0; i < dim_; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < dim_; ++j) s += at(i, j) * x[j];
      y[i] = s;
    }
    return y;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<double> entries_;
};

class LowerTriangular {
 public:
  LowerTriangular() = default;
  explicit LowerTriangular(std::size_t dim) : dim_(dim), entries_(dim * dim, 0.0) {}

  std::size_t dim() const { return dim_; }
  double& at(std::size_t i, std::size_t j) { return entries_[i * dim_ + j]; }
  double at(std::size_t i, std::size_t j) const { return entries_[i * dim_ + j]; }

  // Solves L y = b.
  std::vector<double> forward_solve(std::span<const double> b) const {
    std::vector<double> y(dim_, 0.0);
    for (std::size_t i = 0; i < dim_; ++i) {
      double s = b[i];
      for (std::size_t j = 0; j < i; ++j) s -= at(i, j) * y[j];
      y[i] = s / at(i, i);
    }
    return y;
  }

  // Solves L^T x = y.
  std::vector<double> backward_solve(std::span<const double> y) const {
    std::vector<double> x(dim_, 0.0);
    for (std::size_t ii = dim_; ii > 0; --ii) {
      const std::size_t i = ii - 1;
      double s = y[i];
      for (std::size_t j = i + 1; j < dim_; ++j) s -= at(j, i) * x[j];
      x[i] = s / at(i, i);
    }
    return x;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<double> entries_;
};

// Pivot threshold distinguishing genuine rank deficiency from rounding in
// the q < 100 regime this library targets.
inline constexpr double kCholeskyPivotTol = 1e-12;

// Standard left-looking Cholesky, L L^T = m. Throws NotPositiveDefinite as
// soon as a pivot drops to or below the tolerance.
inline LowerTriangular cholesky(const SpdMatrix& m) {
  if (!m.all_finite()) throw std::invalid_argument("cholesky: non-finite entries");
  const std::size_t q = m.dim();
  LowerTriangular lower(q);
  for (std::size_t j = 0; j < q; ++j) {
    double diag = m.at(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= lower.at(j, k) * lower.at(j, k);
    if (!(diag > kCholeskyPivotTol))
      throw NotPositiveDefinite("cholesky: pivot " + std::to_string(diag) +
                                " at column " + std::to_string(j));
    const double l_jj = std::sqrt(diag);
    lower.at(j, j) = l_jj;
    for (std::size_t i = j + 1; i < q; ++i) {
      double s = m.at(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= lower.at(i, k) * lower.at(j, k);
      lower.at(i, j) = s / l_jj;
    }
  }
  return lower;
}

// log |m| via the Cholesky factor: 2 * sum_i log L_ii.
inline double log_det_spd(const SpdMatrix& m) {
  const LowerTriangular lower = cholesky(m);
  double s = 0.0;
  for (std::size_t i = 0; i < m.dim(); ++i) s += std::log(lower.at(i, i));
  return 2.0 * s;
}

inline std::vector<double> solve_with_factor(const LowerTriangular& lower,
                                             std::span<const double> b) {
  return lower.backward_solve(lower.forward_solve(b));
}

inline std::vector<double> solve_spd(const SpdMatrix& m, std::span<const double> b) {
  if (b.size() != m.dim()) throw std::invalid_argument("solve_spd: dimension mismatch");
  return solve_with_factor(cholesky(m), b);
}

// Streaming log(sum exp(x_k)) accumulator; memory stays O(1) no matter how
// many terms the quadrature grids feed in.
class LogSumExp {
 public:
  void add(double log_term) {
    if (log_term == -std::numeric_limits<double>::infinity()) return;
    if (log_term > max_) {
      sum_ = sum_ * std::exp(max_ - log_term) + 1.0;
      max_ = log_term;
    } else {
      sum_ += std::exp(log_term - max_);
    }
  }

  double value() const {
    if (sum_ == 0.0) return -std::numeric_limits<double>::infinity();
    return max_ + std::log(sum_);
  }

 private:
  double max_ = -std::numeric_limits<double>::infinity();
  double sum_ = 0.0;
};

}  // namespace bpls
