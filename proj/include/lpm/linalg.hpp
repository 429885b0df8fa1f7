/**
 * @file linalg.hpp
 * @brief Small dense matrices and the norms used on split spaces E(t) x F(t).
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace lpm {

using Vector = std::vector<double>;

/// Row-major dense matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  [[nodiscard]] static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      m(i, i) = 1.0;
    }
    return m;
  }

  [[nodiscard]] static Matrix diagonal(std::span<const double> d) {
    Matrix m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
      m(i, i) = d[i];
    }
    return m;
  }

  [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
  [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
  [[nodiscard]] bool square() const noexcept { return rows_ == cols_; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  [[nodiscard]] std::span<double> data() noexcept { return data_; }
  [[nodiscard]] std::span<const double> data() const noexcept { return data_; }

  Matrix& operator+=(const Matrix& o) {
    check_same(o);
    for (std::size_t k = 0; k < data_.size(); ++k) {
      data_[k] += o.data_[k];
    }
    return *this;
  }
  Matrix& operator-=(const Matrix& o) {
    check_same(o);
    for (std::size_t k = 0; k < data_.size(); ++k) {
      data_[k] -= o.data_[k];
    }
    return *this;
  }
  Matrix& operator*=(double a) {
    for (double& v : data_) {
      v *= a;
    }
    return *this;
  }

  [[nodiscard]] Matrix transpose() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i) {
      for (std::size_t j = 0; j < cols_; ++j) {
        t(j, i) = (*this)(i, j);
      }
    }
    return t;
  }

  /// Sub-block [r0, r0+nr) x [c0, c0+nc).
  [[nodiscard]] Matrix block(std::size_t r0, std::size_t c0, std::size_t nr, std::size_t nc) const {
    Matrix b(nr, nc);
    for (std::size_t i = 0; i < nr; ++i) {
      for (std::size_t j = 0; j < nc; ++j) {
        b(i, j) = (*this)(r0 + i, c0 + j);
      }
    }
    return b;
  }

  [[nodiscard]] bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

 private:
  void check_same(const Matrix& o) const {
    if (o.rows_ != rows_ || o.cols_ != cols_) {
      throw std::invalid_argument("matrix shape mismatch");
    }
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

[[nodiscard]] inline Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
[[nodiscard]] inline Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
[[nodiscard]] inline Matrix operator*(double s, Matrix a) { return a *= s; }

[[nodiscard]] inline Matrix operator*(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matrix product shape mismatch");
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) {
        continue;
      }
      for (std::size_t j = 0; j < b.cols(); ++j) {
        out(i, j) += aik * b(k, j);
      }
    }
  }
  return out;
}

[[nodiscard]] inline Vector operator*(const Matrix& a, std::span<const double> x) {
  if (a.cols() != x.size()) {
    throw std::invalid_argument("matrix-vector shape mismatch");
  }
  Vector out(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) {
      acc += a(i, j) * x[j];
    }
    out[i] = acc;
  }
  return out;
}

[[nodiscard]] inline double max_abs(const Matrix& m) {
  double best = 0.0;
  for (double v : m.data()) {
    best = std::max(best, std::abs(v));
  }
  return best;
}

[[nodiscard]] inline double euclidean_norm(std::span<const double> x) {
  double acc = 0.0;
  for (double v : x) {
    acc += v * v;
  }
  return std::sqrt(acc);
}

/// Norm on E x F: Euclidean inside each block, summed across the blocks.
[[nodiscard]] inline double split_norm(std::span<const double> v, std::size_t n_e) {
  return euclidean_norm(v.first(n_e)) + euclidean_norm(v.subspan(n_e));
}

/// Spectral norm. Closed form for 2x2, power iteration on M^T M otherwise.
[[nodiscard]] inline double spectral_norm(const Matrix& m) {
  if (m.rows() == 0 || m.cols() == 0) {
    return 0.0;
  }
  if (m.rows() == 2 && m.cols() == 2) {
    const double a = m(0, 0), b = m(0, 1), c = m(1, 0), d = m(1, 1);
    const double frob2 = a * a + b * b + c * c + d * d;
    const double det = a * d - b * c;
    const double disc = std::sqrt(std::max(0.0, frob2 * frob2 - 4.0 * det * det));
    return std::sqrt(std::max(0.0, 0.5 * (frob2 + disc)));
  }
  if (m.rows() == 1 || m.cols() == 1) {
    return euclidean_norm(m.data());
  }
  const Matrix gram = m.transpose() * m;
  Vector x(gram.cols(), 1.0 / std::sqrt(static_cast<double>(gram.cols())));
  // Deterministic tilt so the start vector is not orthogonal to the top singular vector.
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] += 1e-3 * static_cast<double>(i + 1);
  }
  double lambda = 0.0;
  for (int it = 0; it < 50; ++it) {
    Vector y = gram * x;
    const double ny = euclidean_norm(y);
    if (ny == 0.0) {
      return 0.0;
    }
    for (std::size_t i = 0; i < y.size(); ++i) {
      x[i] = y[i] / ny;
    }
    const double prev = lambda;
    lambda = ny;
    if (it > 0 && std::abs(lambda - prev) <= 1e-12 * lambda) {
      break;
    }
  }
  return std::sqrt(lambda);
}

/// Inverse by Gauss-Jordan elimination with partial pivoting. Throws on a singular matrix.
[[nodiscard]] inline Matrix inverse(const Matrix& m) {
  if (!m.square()) {
    throw std::invalid_argument("inverse of non-square matrix");
  }
  const std::size_t n = m.rows();
  Matrix a = m;
  Matrix inv = Matrix::identity(n);
  const double scale = std::max(max_abs(m), 1e-300);
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(a(r, col)) > std::abs(a(piv, col))) {
        piv = r;
      }
    }
    if (std::abs(a(piv, col)) <= 1e-14 * scale) {
      throw std::domain_error("singular matrix");
    }
    if (piv != col) {
      for (std::size_t j = 0; j < n; ++j) {
        std::swap(a(piv, j), a(col, j));
        std::swap(inv(piv, j), inv(col, j));
      }
    }
    const double d = a(col, col);
    for (std::size_t j = 0; j < n; ++j) {
      a(col, j) /= d;
      inv(col, j) /= d;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) {
        continue;
      }
      const double f = a(r, col);
      if (f == 0.0) {
        continue;
      }
      for (std::size_t j = 0; j < n; ++j) {
        a(r, j) -= f * a(col, j);
        inv(r, j) -= f * inv(col, j);
      }
    }
  }
  return inv;
}

}  // namespace lpm
