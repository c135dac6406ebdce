#pragma once

// Out-of-distribution scoring: each document slice S is projected through
// the fitted row/column factors, P = A⁺·S·B, reconstructed as S' = A·P·B⁺,
// and scored by ||S' - S||_F.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <thread>
#include <vector>

#include "gpten/cooc.hpp"
#include "gpten/cpd.hpp"
#include "gpten/error.hpp"
#include "gpten/numerics.hpp"

namespace gpten {

/// Reconstruction errors aligned with the documents that produced them.
struct ErrorVector {
  std::vector<DocId> doc_ids;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
};

namespace detail {
inline void check_factor_shapes(const Matrix& s, const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw ConfigError("factor ranks differ");
  if (s.rows() != a.rows() || s.cols() != b.rows())
    throw ConfigError("slice shape does not match factor row counts");
}
}  // namespace detail

inline Matrix project_slice(const Matrix& s, const Matrix& a, const Matrix& b) {
  detail::check_factor_shapes(s, a, b);
  return pinv(a) * s * b;
}

inline Matrix reconstruct_slice(const Matrix& p, const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols() || p.rows() != a.cols() || p.cols() != b.cols())
    throw ConfigError("core shape does not match factor rank");
  return a * p * pinv(b);
}

/// ||A·A⁺·S·B·B⁺ - S||_F, evaluated densely.
inline double reconstruction_error(const Matrix& s, const Matrix& a, const Matrix& b) {
  return frobenius_norm(reconstruct_slice(project_slice(s, a, b), a, b) - s);
}

/// Range basis of a factor: the left singular vectors that survive the
/// pseudoinverse cutoff, so F·F⁺ = U·Uᵀ.
inline Matrix range_basis(const Matrix& f, double rel_tol = -1.0) {
  if (rel_tol < 0.0) rel_tol = default_pinv_tolerance(f);
  const Svd d = svd(f);
  const double cutoff = rel_tol * (d.sigma.empty() ? 0.0 : d.sigma.front());
  std::size_t k = 0;
  while (k < d.sigma.size() && d.sigma[k] > cutoff && d.sigma[k] > 0.0) ++k;
  Matrix u(f.rows(), k);
  for (std::size_t i = 0; i < f.rows(); ++i)
    for (std::size_t q = 0; q < k; ++q) u(i, q) = d.u(i, q);
  return u;
}

/// Scores slices against one pair of factors. Pseudoinverses and range
/// bases are computed once at construction.
///
/// Because A·A⁺ and B·B⁺ are orthogonal projectors onto the factor ranges,
/// S' = U_A·U_Aᵀ·S·U_B·U_Bᵀ and ||S - S'||² = ||S||² - ||U_Aᵀ·S·U_B||². The
/// sparse route evaluates that form, touching only the nonzero rows of S and
/// never forming A⁺, whose entries blow up when A is ill-conditioned.
class SliceScorer {
 public:
  SliceScorer(Matrix a, Matrix b) : a_(std::move(a)), b_(std::move(b)) {
    if (a_.cols() != b_.cols()) throw ConfigError("factor ranks differ");
    if (a_.rows() != b_.rows()) throw ConfigError("factor row counts differ");
    a_pinv_ = pinv(a_);
    b_pinv_ = pinv(b_);
    ua_ = range_basis(a_);
    ub_ = range_basis(b_);
  }

  std::size_t rank() const { return a_.cols(); }
  std::size_t dim() const { return a_.rows(); }
  const Matrix& a() const { return a_; }
  const Matrix& b() const { return b_; }
  const Matrix& a_pinv() const { return a_pinv_; }
  const Matrix& b_pinv() const { return b_pinv_; }

  Matrix project(const Matrix& s) const {
    detail::check_factor_shapes(s, a_, b_);
    return a_pinv_ * s * b_;
  }

  Matrix reconstruct(const Matrix& p) const {
    if (p.rows() != rank() || p.cols() != rank()) throw ConfigError("core shape does not match factor rank");
    return a_ * p * b_pinv_;
  }

  /// Dense route through the literal projection and reconstruction.
  double error(const Matrix& s) const { return frobenius_norm(reconstruct(project(s)) - s); }

  double error(const Slice& s) const {
    if (s.dim != dim()) throw ConfigError("slice dimension does not match model");
    if (s.is_zero()) return 0.0;
    const std::size_t ka = ua_.cols(), kb = ub_.cols();
    Matrix core(ka, kb);  // U_Aᵀ·S·U_B
    std::vector<double> row_times_ub(kb);
    std::size_t pos = 0;
    double s_sq = 0.0;
    while (pos < s.entries.size()) {
      const std::uint32_t i = s.entries[pos].row;
      std::fill(row_times_ub.begin(), row_times_ub.end(), 0.0);
      for (; pos < s.entries.size() && s.entries[pos].row == i; ++pos) {
        const auto& e = s.entries[pos];
        s_sq += e.value * e.value;
        auto u = ub_.row(e.col);
        for (std::size_t q = 0; q < kb; ++q) row_times_ub[q] += e.value * u[q];
      }
      auto ua = ua_.row(i);
      for (std::size_t x = 0; x < ka; ++x) {
        const double w = ua[x];
        if (w == 0.0) continue;
        auto c = core.row(x);
        for (std::size_t y = 0; y < kb; ++y) c[y] += w * row_times_ub[y];
      }
    }
    double kept = 0.0;
    for (double v : core.values()) kept += v * v;
    return std::sqrt(std::max(0.0, s_sq - kept));
  }

 private:
  Matrix a_, b_;
  Matrix a_pinv_, b_pinv_;
  Matrix ua_, ub_;
};

/// Fingerprint of everything that fixes slice geometry: the ordered
/// vocabulary and the co-occurrence options.
inline std::uint64_t geometry_fingerprint(const Vocabulary& vocab, const CoocOptions& opts) {
  std::uint64_t h = vocab.hash();
  auto mix = [&](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) h = (h ^ ((v >> (8 * b)) & 0xffu)) * 0x100000001b3ULL;
  };
  mix(opts.window);
  mix(static_cast<std::uint64_t>(opts.weighting));
  mix(opts.include_diagonal ? 1 : 0);
  return h == 0 ? 1 : h;
}

struct ScoreOptions {
  /// Divide each error by max(||S||_F, 1e-12).
  bool normalize = false;
  std::size_t threads = 1;
};

/// Builds every document's slice on its own and scores it. The vocabulary
/// and options must reproduce the model's geometry fingerprint.
inline ErrorVector score_corpus(const std::vector<TokenSeq>& docs, const std::vector<DocId>& doc_ids,
                                const SliceScorer& scorer, std::uint64_t model_geometry, const Vocabulary& vocab,
                                const CoocOptions& cooc, const ScoreOptions& opts = {}) {
  if (model_geometry != geometry_fingerprint(vocab, cooc))
    throw FingerprintMismatch("vocabulary/window fingerprint does not match the model");
  if (doc_ids.size() != docs.size()) throw ConfigError("score_corpus: id list does not match document list");
  if (vocab.size() != scorer.dim()) throw FingerprintMismatch("vocabulary size does not match the model");

  ErrorVector out;
  out.doc_ids = doc_ids;
  out.values.assign(docs.size(), 0.0);
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      const Slice s = build_slice(docs[k], vocab, cooc, doc_ids[k]);
      double e = scorer.error(s);
      if (opts.normalize) e /= std::max(std::sqrt(s.squared_norm()), 1e-12);
      out.values[k] = e;
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(opts.threads, docs.size()));
  if (threads == 1) {
    work(0, docs.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (docs.size() + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t b = t * chunk, e = std::min(docs.size(), b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
    for (auto& th : pool) th.join();
  }
  return out;
}

inline ErrorVector score_corpus(const std::vector<TokenSeq>& docs, const CpModel& model, const Vocabulary& vocab,
                                const CoocOptions& cooc, const ScoreOptions& opts = {}) {
  std::vector<DocId> ids(docs.size());
  for (std::size_t k = 0; k < ids.size(); ++k) ids[k] = k;
  return score_corpus(docs, ids, SliceScorer(model.a, model.b), model.geometry, vocab, cooc, opts);
}

}  // namespace gpten
