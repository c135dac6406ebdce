#pragma once

// Windowed term co-occurrence slices and the document-stacked tensor built
// from them.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gpten/corpus.hpp"
#include "gpten/error.hpp"
#include "gpten/numerics.hpp"

namespace gpten {

enum class Weighting { count, binary, inverse_distance };

inline std::string_view to_string(Weighting w) {
  switch (w) {
    case Weighting::count: return "count";
    case Weighting::binary: return "binary";
    case Weighting::inverse_distance: return "inverse_distance";
  }
  return "count";
}

inline Weighting weighting_from_string(std::string_view s) {
  if (s == "count") return Weighting::count;
  if (s == "binary") return Weighting::binary;
  if (s == "inverse_distance") return Weighting::inverse_distance;
  throw ConfigError("unknown weighting '" + std::string(s) + "'");
}

struct CoocOptions {
  std::size_t window = 5;
  Weighting weighting = Weighting::count;
  bool include_diagonal = true;
};

/// One stored entry of a sparse slice. Both (i, j) and (j, i) are stored.
struct SliceEntry {
  std::uint32_t row = 0;
  std::uint32_t col = 0;
  double value = 0.0;

  friend bool operator==(const SliceEntry&, const SliceEntry&) = default;
};

/// Symmetric M x M co-occurrence matrix of one document, entries sorted by
/// (row, col).
struct Slice {
  DocId doc_id = 0;
  std::size_t dim = 0;
  std::vector<SliceEntry> entries;

  bool is_zero() const { return entries.empty(); }

  double squared_norm() const {
    double s = 0.0;
    for (const auto& e : entries) s += e.value * e.value;
    return s;
  }

  double at(std::size_t i, std::size_t j) const {
    auto it = std::lower_bound(entries.begin(), entries.end(), std::pair{i, j}, [](const SliceEntry& e, auto key) {
      return std::pair<std::size_t, std::size_t>{e.row, e.col} < key;
    });
    if (it != entries.end() && it->row == i && it->col == j) return it->value;
    return 0.0;
  }

  Matrix to_matrix() const {
    Matrix m(dim, dim);
    for (const auto& e : entries) m(e.row, e.col) = e.value;
    return m;
  }
};

/// Builds the slice of one token sequence. Out-of-vocabulary tokens are
/// removed before windowing, so their neighbours close ranks. Every position
/// pair (p, q) with 0 < q - p <= window contributes to (t_p, t_q) and
/// (t_q, t_p); a same-term pair contributes once to the diagonal.
inline Slice build_slice(const TokenSeq& tokens, const Vocabulary& vocab, const CoocOptions& opts,
                         DocId doc_id = 0) {
  if (opts.window < 1) throw ConfigError("co-occurrence window must be at least 1");
  std::vector<std::uint32_t> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) {
    const auto idx = vocab.index_of(t);
    if (idx != Vocabulary::npos) ids.push_back(static_cast<std::uint32_t>(idx));
  }

  std::map<std::pair<std::uint32_t, std::uint32_t>, double> acc;
  for (std::size_t p = 0; p < ids.size(); ++p) {
    const std::size_t last = std::min(ids.size() - 1, p + opts.window);
    for (std::size_t q = p + 1; q <= last; ++q) {
      const std::uint32_t a = ids[p], b = ids[q];
      if (a == b && !opts.include_diagonal) continue;
      const double w = opts.weighting == Weighting::inverse_distance ? 1.0 / static_cast<double>(q - p) : 1.0;
      acc[{a, b}] += w;
      if (a != b) acc[{b, a}] += w;
    }
  }

  Slice s;
  s.doc_id = doc_id;
  s.dim = vocab.size();
  s.entries.reserve(acc.size());
  for (const auto& [key, value] : acc)
    s.entries.push_back({key.first, key.second, opts.weighting == Weighting::binary ? 1.0 : value});
  return s;
}

/// N slices over a shared vocabulary. Slice k belongs to document
/// `slices[k].doc_id`; `sources()` is the list of those ids.
class CoocTensor {
 public:
  CoocTensor(std::vector<Slice> slices, std::size_t dim, CoocOptions opts)
      : slices_(std::move(slices)), dim_(dim), opts_(opts) {}

  const std::vector<Slice>& slices() const { return slices_; }
  std::size_t dim() const { return dim_; }
  std::size_t n_slices() const { return slices_.size(); }
  const CoocOptions& options() const { return opts_; }
  std::size_t window() const { return opts_.window; }

  std::size_t nnz() const {
    std::size_t n = 0;
    for (const auto& s : slices_) n += s.entries.size();
    return n;
  }

  double squared_norm() const {
    double s = 0.0;
    for (const auto& sl : slices_) s += sl.squared_norm();
    return s;
  }

  std::vector<DocId> sources() const {
    std::vector<DocId> out;
    out.reserve(slices_.size());
    for (const auto& s : slices_) out.push_back(s.doc_id);
    return out;
  }

 private:
  std::vector<Slice> slices_;
  std::size_t dim_;
  CoocOptions opts_;
};

/// Stacks one slice per document in input order. `doc_ids`, when given,
/// labels the slices (defaults to 0..n-1).
inline CoocTensor build_tensor(const std::vector<TokenSeq>& docs, const Vocabulary& vocab, const CoocOptions& opts,
                               const std::vector<DocId>& doc_ids = {}) {
  if (!doc_ids.empty() && doc_ids.size() != docs.size())
    throw ConfigError("build_tensor: doc id list does not match document list");
  std::vector<Slice> slices;
  slices.reserve(docs.size());
  bool any = false;
  for (std::size_t k = 0; k < docs.size(); ++k) {
    slices.push_back(build_slice(docs[k], vocab, opts, doc_ids.empty() ? k : doc_ids[k]));
    any = any || !slices.back().is_zero();
  }
  if (!any) throw DegenerateTensor("every document slice is zero; the tensor has nothing to decompose");
  return CoocTensor(std::move(slices), vocab.size(), opts);
}

/// COO dump: one `i,j,value` line per stored entry, both triangles.
inline void write_slice_coo(std::ostream& out, const Slice& s) {
  out << "i,j,count\n";
  for (const auto& e : s.entries) out << e.row << ',' << e.col << ',' << e.value << '\n';
}

inline nlohmann::json slice_sidecar(const Slice& s, std::size_t window) {
  return nlohmann::json{{"doc_id", s.doc_id}, {"M", s.dim}, {"window", window}};
}

}  // namespace gpten
