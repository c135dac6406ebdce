#pragma once

// Supervised text baseline: smoothed TF-IDF features and an L2-regularized
// logistic regression trained by seeded SGD. It stands in for the classic
// SVM / random-forest baselines and is reported as a substitute.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "gpten/config.hpp"
#include "gpten/corpus.hpp"
#include "gpten/error.hpp"
#include "gpten/eval.hpp"
#include "gpten/random.hpp"

namespace gpten {

/// Sparse feature row, (feature index, value) sorted by index.
using FeatureRow = std::vector<std::pair<std::uint32_t, double>>;

struct TfidfModel {
  Vocabulary vocab;
  std::vector<std::size_t> df;
  std::vector<double> idf;
  std::size_t n_docs = 0;

  std::size_t width() const { return vocab.size(); }
};

/// idf_t = ln((1 + N) / (1 + df_t)) + 1 over the training documents.
inline TfidfModel fit_tfidf(const std::vector<TokenSeq>& tokens, const std::vector<DocId>& train_ids,
                            std::size_t cap) {
  TfidfModel m;
  m.vocab = build_vocabulary_all_labels(tokens, train_ids, cap);
  m.n_docs = train_ids.size();
  m.df.assign(m.vocab.size(), 0);
  std::vector<char> seen(m.vocab.size(), 0);
  for (DocId id : train_ids) {
    std::fill(seen.begin(), seen.end(), 0);
    for (const auto& t : tokens[id]) {
      const auto idx = m.vocab.index_of(t);
      if (idx != Vocabulary::npos && !seen[idx]) {
        seen[idx] = 1;
        ++m.df[idx];
      }
    }
  }
  m.idf.resize(m.vocab.size());
  const double n = static_cast<double>(m.n_docs);
  for (std::size_t t = 0; t < m.idf.size(); ++t)
    m.idf[t] = std::log((1.0 + n) / (1.0 + static_cast<double>(m.df[t]))) + 1.0;
  return m;
}

/// Raw tf · idf weights before normalization.
inline FeatureRow tfidf_raw(const TokenSeq& doc, const TfidfModel& m) {
  std::vector<double> tf(m.width(), 0.0);
  for (const auto& t : doc) {
    const auto idx = m.vocab.index_of(t);
    if (idx != Vocabulary::npos) tf[idx] += 1.0;
  }
  FeatureRow row;
  for (std::size_t t = 0; t < tf.size(); ++t)
    if (tf[t] > 0.0) row.emplace_back(static_cast<std::uint32_t>(t), tf[t] * m.idf[t]);
  return row;
}

/// L2-normalized TF-IDF rows; an empty document yields an empty row.
inline std::vector<FeatureRow> tfidf_features(const std::vector<TokenSeq>& docs, const TfidfModel& m) {
  std::vector<FeatureRow> rows;
  rows.reserve(docs.size());
  for (const auto& d : docs) {
    FeatureRow row = tfidf_raw(d, m);
    double ss = 0.0;
    for (const auto& [idx, v] : row) ss += v * v;
    if (ss > 0.0) {
      const double inv = 1.0 / std::sqrt(ss);
      for (auto& [idx, v] : row) v *= inv;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

struct LinearOptions {
  std::size_t epochs = 100;
  double learning_rate = 0.5;
  double l2 = 1e-4;
  // Weight each class by n / (2 · class count) so the 0.5 cutoff is not
  // swamped by the majority class.
  bool balanced = true;
  std::uint64_t seed = 0;
};

struct LinearModel {
  std::vector<double> weights;
  double bias = 0.0;
  LinearOptions options;

  double margin(const FeatureRow& row) const {
    double z = bias;
    for (const auto& [idx, v] : row) z += weights[idx] * v;
    return z;
  }
};

namespace detail {
inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(-y z)) for y in {-1, +1}, without overflow.
inline double logistic_loss(double z, int label) {
  const double m = (label ? 1.0 : -1.0) * z;
  return m > 0.0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m));
}
}  // namespace detail

/// Mean logistic loss over the batch plus (l2 / 2) · ||w||².
inline double linear_loss(const LinearModel& m, std::span<const FeatureRow> rows, std::span<const int> labels,
                          double l2) {
  double total = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) total += detail::logistic_loss(m.margin(rows[i]), labels[i]);
  double wsq = 0.0;
  for (double w : m.weights) wsq += w * w;
  return total / static_cast<double>(rows.size()) + 0.5 * l2 * wsq;
}

struct LinearGradient {
  std::vector<double> weights;
  double bias = 0.0;
};

/// Analytic gradient of `linear_loss`.
inline LinearGradient linear_gradient(const LinearModel& m, std::span<const FeatureRow> rows,
                                      std::span<const int> labels, double l2) {
  LinearGradient g{std::vector<double>(m.weights.size(), 0.0), 0.0};
  const double inv_n = 1.0 / static_cast<double>(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double residual = detail::sigmoid(m.margin(rows[i])) - (labels[i] ? 1.0 : 0.0);
    for (const auto& [idx, v] : rows[i]) g.weights[idx] += residual * v * inv_n;
    g.bias += residual * inv_n;
  }
  for (std::size_t k = 0; k < g.weights.size(); ++k) g.weights[k] += l2 * m.weights[k];
  return g;
}

/// Per-sample SGD with a 1/sqrt(epoch) step decay. Sample order is
/// reshuffled every epoch from `opts.seed`.
inline LinearModel train_linear(std::span<const FeatureRow> rows, std::span<const int> labels, std::size_t width,
                                const LinearOptions& opts = {}) {
  if (rows.size() != labels.size()) throw ConfigError("features and labels differ in length");
  const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  if (positives == 0 || positives == labels.size()) throw DataError("linear baseline needs both classes");
  for (const auto& r : rows)
    for (const auto& [idx, v] : r)
      if (idx >= width) throw ConfigError("feature index exceeds model width");

  LinearModel m{std::vector<double>(width, 0.0), 0.0, opts};
  std::vector<std::size_t> order(rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const double n = static_cast<double>(rows.size());
  const double w_pos = opts.balanced ? n / (2.0 * static_cast<double>(positives)) : 1.0;
  const double w_neg = opts.balanced ? n / (2.0 * (n - static_cast<double>(positives))) : 1.0;
  Rng rng(opts.seed);
  // Weight decay is applied as a running scale factor so each step only
  // touches the row's nonzeros: w = scale · v.
  double scale = 1.0;
  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    const double lr = opts.learning_rate / std::sqrt(static_cast<double>(epoch + 1));
    for (std::size_t i : order) {
      double z = m.bias;
      for (const auto& [idx, v] : rows[i]) z += scale * m.weights[idx] * v;
      const double residual = (detail::sigmoid(z) - (labels[i] ? 1.0 : 0.0)) * (labels[i] ? w_pos : w_neg);
      scale *= (1.0 - lr * opts.l2);
      if (scale < 1e-9) {
        for (double& w : m.weights) w *= scale;
        scale = 1.0;
      }
      for (const auto& [idx, v] : rows[i]) m.weights[idx] -= lr * residual * v / scale;
      m.bias -= lr * residual;
    }
  }
  for (double& w : m.weights) w *= scale;
  return m;
}

/// sigmoid(w · x + b) per row.
inline std::vector<double> predict_linear(const LinearModel& m, std::span<const FeatureRow> rows, std::size_t width) {
  if (width != m.weights.size()) throw ConfigError("feature width does not match the linear model");
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    for (const auto& [idx, v] : r)
      if (idx >= width) throw ConfigError("feature index exceeds model width");
    out.push_back(detail::sigmoid(m.margin(r)));
  }
  return out;
}

/// Cross-validated TF-IDF + logistic baseline on the same fold plan as the
/// main pipeline. Unlike the main pipeline it trains on both labels.
inline Report cross_validate_baseline(const Corpus& corpus, const PipelineConfig& cfg, const FoldPlan& plan,
                                      const LinearOptions& lin = {}) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const auto tokens = tokenize_corpus(corpus, cfg.tokenizer);
  Report report;
  report.method = "tfidf_logistic (substitute baseline)";
  report.fingerprint = fingerprint(cfg);
  report.detector = "logistic";
  report.contamination = cfg.contamination;
  report.folds.resize(plan.k);
  report.oof_scores.assign(corpus.size(), 0.0);
  report.oof_errors.assign(corpus.size(), 0.0);

  run_jobs(plan.k, cfg.effective_threads(), [&](std::size_t fold) {
    std::vector<DocId> train;
    for (DocId id : plan.train_ids(fold))
      if (corpus[id].label != Label::unlabeled) train.push_back(id);
    const auto test = plan.test_ids(fold);
    const TfidfModel tfidf = fit_tfidf(tokens, train, cfg.vocab_cap);
    const auto train_rows = tfidf_features(detail::gather(tokens, train), tfidf);
    std::vector<int> train_labels;
    for (DocId id : train) train_labels.push_back(corpus[id].label == Label::gpt ? 1 : 0);
    LinearOptions lo = lin;
    lo.seed = derive_seed(cfg.seed, fold, 0x6c696e);
    const LinearModel model = train_linear(train_rows, train_labels, tfidf.width(), lo);
    const auto scores = predict_linear(model, tfidf_features(detail::gather(tokens, test), tfidf), tfidf.width());

    std::vector<double> eval_scores;
    std::vector<int> eval_pred, eval_labels;
    for (std::size_t i = 0; i < test.size(); ++i) {
      report.oof_scores[test[i]] = scores[i];
      if (corpus[test[i]].label == Label::unlabeled) continue;
      eval_scores.push_back(scores[i]);
      eval_pred.push_back(scores[i] >= 0.5 ? 1 : 0);
      eval_labels.push_back(corpus[test[i]].label == Label::gpt ? 1 : 0);
    }
    FoldReport& fr = report.folds[fold];
    fr.fold = fold;
    // The supervised baseline legitimately reads gpt training text, so only
    // the no-test-document rule applies to its vocabulary.
    for (DocId id : tfidf.vocab.sources())
      if (plan.assignments[id] == fold) fr.audit.violations.push_back("tfidf: test document " + std::to_string(id));
    if (!fr.audit.passed()) throw DataError("baseline hygiene audit failed: " + fr.audit.violations.front());
    fr.f1 = f1_score(eval_pred, eval_labels);
    fr.f1_opt = best_f1(eval_scores, eval_labels);
    fr.auc = roc_auc(eval_scores, eval_labels);
    fr.n_test = test.size();
    fr.vocab_size = tfidf.width();
  });
  report.aggregate();
  report.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace gpten
