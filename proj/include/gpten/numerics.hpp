#pragma once

// Dense linear algebra needed by the decomposition and the scorer: a small
// row-major matrix, an SVD-backed Moore-Penrose pseudoinverse, Frobenius
// norms and the regularized Gram solve used by ALS.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "gpten/error.hpp"

namespace gpten {

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
      : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != rows_ * cols_) throw ConfigError("matrix value count does not match shape");
  }
  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    values_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw ConfigError("ragged matrix literal");
      values_.insert(values_.end(), r.begin(), r.end());
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  Matrix transpose() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  Matrix& operator+=(const Matrix& o) {
    check_same(o);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
    return *this;
  }
  Matrix& operator-=(const Matrix& o) {
    check_same(o);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= o.values_[i];
    return *this;
  }
  Matrix& operator*=(double s) {
    for (double& v : values_) v *= s;
    return *this;
  }

  friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
  friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
  friend Matrix operator*(Matrix a, double s) { return a *= s; }
  friend Matrix operator*(double s, Matrix a) { return a *= s; }

  friend Matrix operator*(const Matrix& a, const Matrix& b) {
    if (a.cols_ != b.rows_) throw ConfigError("matrix product shape mismatch");
    Matrix c(a.rows_, b.cols_);
    for (std::size_t i = 0; i < a.rows_; ++i) {
      double* out = c.values_.data() + i * c.cols_;
      for (std::size_t k = 0; k < a.cols_; ++k) {
        const double aik = a(i, k);
        if (aik == 0.0) continue;
        const double* brow = b.values_.data() + k * b.cols_;
        for (std::size_t j = 0; j < b.cols_; ++j) out[j] += aik * brow[j];
      }
    }
    return c;
  }

  bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  void check_same(const Matrix& o) const {
    if (rows_ != o.rows_ || cols_ != o.cols_) throw ConfigError("matrix shape mismatch");
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

/// Elementwise product of equally shaped matrices.
inline Matrix hadamard(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ConfigError("hadamard shape mismatch");
  Matrix c = a;
  auto cv = c.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < cv.size(); ++i) cv[i] *= bv[i];
  return c;
}

/// AᵀA without forming the transpose.
inline Matrix gram(const Matrix& a) {
  Matrix g(a.cols(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto r = a.row(i);
    for (std::size_t p = 0; p < a.cols(); ++p) {
      const double v = r[p];
      if (v == 0.0) continue;
      for (std::size_t q = p; q < a.cols(); ++q) g(p, q) += v * r[q];
    }
  }
  for (std::size_t p = 0; p < a.cols(); ++p)
    for (std::size_t q = 0; q < p; ++q) g(p, q) = g(q, p);
  return g;
}

/// Scaled sum of squares, so huge entries do not overflow.
inline double frobenius_norm(const Matrix& m) {
  double scale = 0.0;
  double ssq = 1.0;
  for (double v : m.values()) {
    if (v == 0.0) continue;
    const double a = std::abs(v);
    if (scale < a) {
      ssq = 1.0 + ssq * (scale / a) * (scale / a);
      scale = a;
    } else {
      ssq += (a / scale) * (a / scale);
    }
  }
  return scale * std::sqrt(ssq);
}

struct Svd {
  Matrix u;                    // rows x k, orthonormal columns where sigma > 0
  std::vector<double> sigma;   // k = min(rows, cols), descending
  Matrix v;                    // cols x k, orthonormal columns
};

namespace detail {

/// One-sided (Hestenes) Jacobi on a tall matrix: orthogonalizes the columns
/// of `work` by plane rotations accumulated into `v`.
inline Svd jacobi_svd_tall(Matrix work) {
  const std::size_t m = work.rows();
  const std::size_t n = work.cols();
  Matrix v = Matrix::identity(n);
  constexpr double eps = std::numeric_limits<double>::epsilon();
  constexpr int max_sweeps = 80;

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          const double wp = work(i, p), wq = work(i, q);
          alpha += wp * wp;
          beta += wq * wq;
          gamma += wp * wq;
        }
        if (gamma == 0.0 || std::abs(gamma) <= eps * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double wp = work(i, p), wq = work(i, q);
          work(i, p) = c * wp - s * wq;
          work(i, q) = s * wp + c * wq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vp = v(i, p), vq = v(i, q);
          v(i, p) = c * vp - s * vq;
          v(i, q) = s * vp + c * vq;
        }
      }
    }
    if (!rotated) break;
  }

  std::vector<double> norms(n);
  for (std::size_t j = 0; j < n; ++j) {
    double ss = 0.0;
    for (std::size_t i = 0; i < m; ++i) ss += work(i, j) * work(i, j);
    norms[j] = std::sqrt(ss);
  }
  std::vector<std::size_t> order(n);
  for (std::size_t j = 0; j < n; ++j) order[j] = j;
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return norms[a] > norms[b]; });

  Svd out{Matrix(m, n), std::vector<double>(n), Matrix(n, n)};
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    out.sigma[k] = norms[j];
    for (std::size_t i = 0; i < n; ++i) out.v(i, k) = v(i, j);
    if (norms[j] > 0.0)
      for (std::size_t i = 0; i < m; ++i) out.u(i, k) = work(i, j) / norms[j];
  }
  return out;
}

}  // namespace detail

/// Thin SVD, m = U·diag(sigma)·Vᵀ.
inline Svd svd(const Matrix& m) {
  if (m.rows() >= m.cols()) return detail::jacobi_svd_tall(m);
  Svd t = detail::jacobi_svd_tall(m.transpose());
  return Svd{std::move(t.v), std::move(t.sigma), std::move(t.u)};
}

/// Default relative cutoff: max(rows, cols) * machine epsilon.
inline double default_pinv_tolerance(const Matrix& m) {
  return static_cast<double>(std::max(m.rows(), m.cols())) * std::numeric_limits<double>::epsilon();
}

/// Moore-Penrose pseudoinverse. Singular values at or below
/// `rel_tol * sigma_max` are treated as zero; a negative tolerance selects
/// the default.
inline Matrix pinv(const Matrix& m, double rel_tol = -1.0) {
  if (!m.all_finite()) throw NumericalError("pinv: matrix has non-finite entries");
  if (rel_tol < 0.0) rel_tol = default_pinv_tolerance(m);
  Matrix out(m.cols(), m.rows());
  if (m.empty()) return out;
  const Svd d = svd(m);
  const double cutoff = rel_tol * (d.sigma.empty() ? 0.0 : d.sigma.front());
  for (std::size_t k = 0; k < d.sigma.size(); ++k) {
    const double s = d.sigma[k];
    if (s <= cutoff || s == 0.0) continue;
    const double inv = 1.0 / s;
    for (std::size_t i = 0; i < m.cols(); ++i) {
      const double vik = d.v(i, k) * inv;
      if (vik == 0.0) continue;
      for (std::size_t j = 0; j < m.rows(); ++j) out(i, j) += vik * d.u(j, k);
    }
  }
  return out;
}

/// Lower-triangular Cholesky factor, or nothing if `g` is not numerically
/// positive definite.
inline std::optional<Matrix> cholesky(const Matrix& g) {
  const std::size_t n = g.rows();
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = g(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0) || d <= 1e-14 * std::abs(g(j, j))) return std::nullopt;
    l(j, j) = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = g(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  return l;
}

/// Solves X·(G + ridge·I) = RHS for X (n x r), with G symmetric r x r.
/// Cholesky when the shifted Gram matrix is positive definite, otherwise the
/// pseudoinverse.
inline Matrix solve_gram(const Matrix& g, const Matrix& rhs, double ridge = 0.0) {
  const std::size_t r = g.rows();
  if (g.cols() != r || rhs.cols() != r) throw ConfigError("solve_gram shape mismatch");
  Matrix shifted = g;
  for (std::size_t i = 0; i < r; ++i) shifted(i, i) += ridge;

  if (auto l = cholesky(shifted)) {
    // Each row x of X satisfies (G+ridge I) xᵀ = rowᵀ, i.e. L Lᵀ xᵀ = rowᵀ.
    Matrix x(rhs.rows(), r);
    std::vector<double> y(r);
    for (std::size_t row = 0; row < rhs.rows(); ++row) {
      for (std::size_t i = 0; i < r; ++i) {
        double s = rhs(row, i);
        for (std::size_t k = 0; k < i; ++k) s -= (*l)(i, k) * y[k];
        y[i] = s / (*l)(i, i);
      }
      for (std::size_t ii = r; ii-- > 0;) {
        double s = y[ii];
        for (std::size_t k = ii + 1; k < r; ++k) s -= (*l)(k, ii) * x(row, k);
        x(row, ii) = s / (*l)(ii, ii);
      }
    }
    return x;
  }
  return rhs * pinv(shifted);
}

}  // namespace gpten
