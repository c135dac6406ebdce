#pragma once

// CANDECOMP/PARAFAC decomposition of a sparse third-order tensor by
// alternating least squares. Mode 0 indexes slice rows (factor A), mode 1
// slice columns (factor B), mode 2 documents (factor C).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "gpten/cooc.hpp"
#include "gpten/error.hpp"
#include "gpten/numerics.hpp"
#include "gpten/random.hpp"

namespace gpten {

struct TensorEntry {
  std::uint32_t i = 0;  // mode 0
  std::uint32_t j = 0;  // mode 1
  std::uint32_t k = 0;  // mode 2
  double value = 0.0;
};

/// Coordinate-format third-order tensor. Entries need not be sorted, but
/// each coordinate appears at most once.
struct SparseTensor {
  std::array<std::size_t, 3> dims{};
  std::vector<TensorEntry> entries;

  double squared_norm() const {
    double s = 0.0;
    for (const auto& e : entries) s += e.value * e.value;
    return s;
  }

  static SparseTensor from_cooc(const CoocTensor& t) {
    SparseTensor out;
    out.dims = {t.dim(), t.dim(), t.n_slices()};
    out.entries.reserve(t.nnz());
    for (std::size_t k = 0; k < t.n_slices(); ++k)
      for (const auto& e : t.slices()[k].entries)
        out.entries.push_back({e.row, e.col, static_cast<std::uint32_t>(k), e.value});
    return out;
  }
};

using Factors = std::array<Matrix, 3>;

struct AlsOptions {
  std::size_t max_iters = 100;
  double tol = 1e-6;
  std::uint64_t seed = 0;
  std::size_t restarts = 1;
  double ridge = 1e-10;
};

/// λ-weighted Kruskal tensor: sum over columns q of
/// lambda[q] · A(:,q) ∘ B(:,q) ∘ C(:,q), factor columns unit-norm.
struct CpModel {
  Matrix a;
  Matrix b;
  Matrix c;
  std::vector<double> lambda;
  std::size_t rank = 0;
  double fit = 0.0;
  std::size_t iterations_run = 0;
  std::vector<double> fit_history;  // fit after each sweep of the winning restart
  std::vector<DocId> sources;       // documents whose slices were decomposed
  std::uint64_t geometry = 0;       // vocabulary/window fingerprint, 0 when unset

  Factors factors() const { return {a, b, c}; }

  double value_at(std::size_t i, std::size_t j, std::size_t k) const {
    double s = 0.0;
    for (std::size_t q = 0; q < rank; ++q) s += lambda[q] * a(i, q) * b(j, q) * c(k, q);
    return s;
  }
};

/// A (dims[0] x r), B (dims[1] x r), C (dims[2] x r) filled with uniform
/// [0, 1) draws from one seeded stream, in that order.
inline Factors init_factors(const std::array<std::size_t, 3>& dims, std::size_t rank, std::uint64_t seed) {
  if (rank < 1) throw ConfigError("rank must be at least 1");
  Rng rng(seed);
  Factors f;
  for (std::size_t m = 0; m < 3; ++m) {
    f[m] = Matrix(dims[m], rank);
    for (double& v : f[m].values()) v = rng.uniform();
  }
  return f;
}

inline Factors init_factors(std::size_t terms, std::size_t docs, std::size_t rank, std::uint64_t seed) {
  return init_factors({terms, terms, docs}, rank, seed);
}

/// Matricized tensor times Khatri-Rao product of the two factors other than
/// `mode`, accumulated straight from the sparse entries.
inline Matrix mttkrp(const SparseTensor& t, const Factors& f, std::size_t mode) {
  if (mode > 2) throw ConfigError("mttkrp mode must be 0, 1 or 2");
  const std::size_t r = f[0].cols();
  for (std::size_t m = 0; m < 3; ++m)
    if (f[m].rows() != t.dims[m] || f[m].cols() != r) throw ConfigError("mttkrp: factor shape does not match tensor");
  const std::size_t m1 = mode == 0 ? 1 : 0;
  const std::size_t m2 = mode == 2 ? 1 : 2;
  Matrix out(t.dims[mode], r);
  for (const auto& e : t.entries) {
    const std::array<std::size_t, 3> idx{e.i, e.j, e.k};
    auto x = f[m1].row(idx[m1]);
    auto y = f[m2].row(idx[m2]);
    auto o = out.row(idx[mode]);
    for (std::size_t q = 0; q < r; ++q) o[q] += e.value * x[q] * y[q];
  }
  return out;
}

namespace detail {

// Tensors with at most this many cells have their residual summed cell by
// cell; larger ones use the sparse expansion.
inline constexpr std::size_t kDenseFitCells = std::size_t{1} << 18;

inline double residual_squared(const SparseTensor& t, const CpModel& m) {
  const std::size_t r = m.rank;
  const std::size_t cells = t.dims[0] * t.dims[1] * t.dims[2];
  if (cells <= kDenseFitCells) {
    std::vector<double> dense(cells, 0.0);
    for (const auto& e : t.entries) dense[(std::size_t{e.k} * t.dims[0] + e.i) * t.dims[1] + e.j] = e.value;
    double s = 0.0;
    for (std::size_t k = 0; k < t.dims[2]; ++k) {
      auto ck = m.c.row(k);
      for (std::size_t i = 0; i < t.dims[0]; ++i) {
        auto ai = m.a.row(i);
        for (std::size_t j = 0; j < t.dims[1]; ++j) {
          auto bj = m.b.row(j);
          double x = 0.0;
          for (std::size_t q = 0; q < r; ++q) x += m.lambda[q] * ai[q] * bj[q] * ck[q];
          const double d = dense[(k * t.dims[0] + i) * t.dims[1] + j] - x;
          s += d * d;
        }
      }
    }
    return s;
  }

  // ||T - X||² = Σ_support (t - x)² + (||X||² - Σ_support x²)
  double on_support = 0.0;
  double model_on_support = 0.0;
  for (const auto& e : t.entries) {
    const double x = m.value_at(e.i, e.j, e.k);
    on_support += (e.value - x) * (e.value - x);
    model_on_support += x * x;
  }
  const Matrix g = hadamard(hadamard(gram(m.a), gram(m.b)), gram(m.c));
  double model_sq = 0.0;
  for (std::size_t p = 0; p < r; ++p)
    for (std::size_t q = 0; q < r; ++q) model_sq += m.lambda[p] * g(p, q) * m.lambda[q];
  return on_support + std::max(0.0, model_sq - model_on_support);
}

/// Moves column norms into `lambda`. Zero columns become e_0 with weight 0.
inline void normalize_columns(Matrix& f, std::vector<double>& lambda) {
  const std::size_t r = f.cols();
  lambda.assign(r, 0.0);
  for (std::size_t q = 0; q < r; ++q) {
    double ss = 0.0;
    for (std::size_t i = 0; i < f.rows(); ++i) ss += f(i, q) * f(i, q);
    const double n = std::sqrt(ss);
    lambda[q] = n;
    if (n > 0.0) {
      for (std::size_t i = 0; i < f.rows(); ++i) f(i, q) /= n;
    } else if (f.rows() > 0) {
      f(0, q) = 1.0;
    }
  }
}

}  // namespace detail

/// 1 - ||T - X||_F / ||T||_F.
inline double cp_fit(const SparseTensor& t, const CpModel& m) {
  if (m.a.rows() != t.dims[0] || m.b.rows() != t.dims[1] || m.c.rows() != t.dims[2])
    throw ConfigError("cp_fit: model shape does not match tensor");
  const double norm = std::sqrt(t.squared_norm());
  if (norm == 0.0) throw DegenerateTensor("cp_fit: tensor norm is zero");
  return 1.0 - std::sqrt(detail::residual_squared(t, m)) / norm;
}

inline double cp_fit(const CoocTensor& t, const CpModel& m) { return cp_fit(SparseTensor::from_cooc(t), m); }

namespace detail {

inline CpModel cp_als_single(const SparseTensor& t, std::size_t rank, const AlsOptions& opts, std::uint64_t seed) {
  Factors f = init_factors(t.dims, rank, seed);
  std::vector<double> lambda(rank, 1.0);
  std::array<Matrix, 3> grams;
  for (std::size_t m = 0; m < 3; ++m) {
    normalize_columns(f[m], lambda);
    grams[m] = gram(f[m]);
  }
  std::fill(lambda.begin(), lambda.end(), 1.0);

  CpModel model;
  model.rank = rank;
  double previous = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t iter = 0; iter < opts.max_iters; ++iter) {
    for (std::size_t mode = 0; mode < 3; ++mode) {
      const std::size_t m1 = mode == 0 ? 1 : 0;
      const std::size_t m2 = mode == 2 ? 1 : 2;
      const Matrix v = hadamard(grams[m1], grams[m2]);
      f[mode] = solve_gram(v, mttkrp(t, f, mode), opts.ridge);
      normalize_columns(f[mode], lambda);
      grams[mode] = gram(f[mode]);
    }
    model.a = f[0];
    model.b = f[1];
    model.c = f[2];
    model.lambda = lambda;
    model.fit = cp_fit(t, model);
    model.fit_history.push_back(model.fit);
    model.iterations_run = iter + 1;
    if (!std::isfinite(model.fit)) throw NumericalError("cp_als: fit became non-finite");
    if (iter > 0 && std::abs(model.fit - previous) < opts.tol) break;
    previous = model.fit;
  }
  return model;
}

}  // namespace detail

/// Best-of-`restarts` ALS. Restart `s` seeds its factors with
/// derive_seed(opts.seed, s).
inline CpModel cp_als(const SparseTensor& t, std::size_t rank, const AlsOptions& opts = {}) {
  if (rank < 1) throw ConfigError("rank must be at least 1");
  if (opts.max_iters < 1) throw ConfigError("max_iters must be at least 1");
  if (!(opts.tol > 0.0)) throw ConfigError("tolerance must be positive");
  if (t.squared_norm() == 0.0) throw DegenerateTensor("cp_als: tensor norm is zero");
  const std::size_t restarts = std::max<std::size_t>(1, opts.restarts);
  CpModel best;
  bool have = false;
  for (std::size_t s = 0; s < restarts; ++s) {
    CpModel m = detail::cp_als_single(t, rank, opts, derive_seed(opts.seed, s));
    if (!have || m.fit > best.fit) {
      best = std::move(m);
      have = true;
    }
  }
  return best;
}

inline CpModel cp_als(const CoocTensor& t, std::size_t rank, const AlsOptions& opts = {}) {
  CpModel m = cp_als(SparseTensor::from_cooc(t), rank, opts);
  m.sources = t.sources();
  return m;
}

}  // namespace gpten
