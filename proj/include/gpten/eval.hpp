#pragma once

// Metrics, the per-fold pipeline, cross-validation, the hygiene audit and
// the rank sweep.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <exception>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "gpten/config.hpp"
#include "gpten/cooc.hpp"
#include "gpten/corpus.hpp"
#include "gpten/cpd.hpp"
#include "gpten/detect.hpp"
#include "gpten/error.hpp"
#include "gpten/oodscore.hpp"

namespace gpten {

inline constexpr int kReportVersion = 1;

// ---------------------------------------------------------------------------
// Metrics

/// Mann-Whitney AUC with midranks, so tied scores contribute one half.
inline double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ConfigError("roc_auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (int l : labels) n_pos += l ? 1 : 0;
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw DataError("roc_auc needs both classes");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t t = i; t <= j; ++t)
      if (labels[order[t]]) pos_rank_sum += midrank;
    i = j + 1;
  }
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

struct Confusion {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

inline Confusion confusion(std::span<const int> pred, std::span<const int> labels) {
  if (pred.size() != labels.size()) throw ConfigError("predictions and labels differ in length");
  Confusion c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] && labels[i]) ++c.tp;
    else if (pred[i]) ++c.fp;
    else if (labels[i]) ++c.fn;
    else ++c.tn;
  }
  return c;
}

inline double f1_from_confusion(const Confusion& c) {
  const double precision = c.tp + c.fp ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
  const double recall = c.tp + c.fn ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

/// F1 of the positive (gpt = 1) class.
inline double f1_score(std::span<const int> pred, std::span<const int> labels) {
  return f1_from_confusion(confusion(pred, labels));
}

/// Largest F1 over all rules of the form "flag score >= t".
inline double best_f1(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ConfigError("best_f1: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
  std::size_t total_pos = 0;
  for (int l : labels) total_pos += l ? 1 : 0;
  Confusion c;
  c.fn = total_pos;
  double best = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    for (; j < order.size() && scores[order[j]] == scores[order[i]]; ++j) {
      if (labels[order[j]]) {
        ++c.tp;
        --c.fn;
      } else {
        ++c.fp;
      }
    }
    best = std::max(best, f1_from_confusion(c));
    i = j;
  }
  return best;
}

inline double mean(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

inline double stddev(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

// ---------------------------------------------------------------------------
// Hygiene audit

/// Which documents fed each fitted stage of one fold.
struct Provenance {
  std::vector<DocId> vocabulary;
  std::vector<DocId> tensor;
  std::vector<DocId> model;
  std::vector<DocId> detector;
  bool detector_uses_labels = false;   // supervised heads need gpt training errors
  bool detector_transductive = false;  // fitted on test errors by request
};

struct AuditResult {
  std::vector<std::string> violations;
  bool passed() const { return violations.empty(); }
};

/// Every stage may only see human-labeled training documents. Supervised
/// heads may also see gpt training documents; a transductive detector is
/// exempt from the test-set rule because that mode exists to break it.
inline AuditResult audit_fold(const Corpus& corpus, const std::vector<DocId>& train_ids, const Provenance& p) {
  std::vector<char> in_train(corpus.size(), 0);
  for (DocId id : train_ids) in_train.at(id) = 1;
  AuditResult r;
  auto check = [&](const char* stage, const std::vector<DocId>& ids, bool allow_gpt, bool allow_test) {
    for (DocId id : ids) {
      if (id >= corpus.size()) {
        r.violations.push_back(std::string(stage) + ": unknown document " + std::to_string(id));
      } else if (!allow_test && !in_train[id]) {
        r.violations.push_back(std::string(stage) + ": test document " + std::to_string(id));
      } else if (!allow_gpt && corpus[id].label != Label::human) {
        r.violations.push_back(std::string(stage) + ": " + std::string(to_string(corpus[id].label)) +
                               "-labeled document " + std::to_string(id));
      }
    }
  };
  check("vocabulary", p.vocabulary, false, false);
  check("tensor", p.tensor, false, false);
  check("model", p.model, false, false);
  if (!p.detector_transductive) check("detector", p.detector, p.detector_uses_labels, false);
  return r;
}

// ---------------------------------------------------------------------------
// One fold

/// Everything fitted on one training split.
struct FittedPipeline {
  Vocabulary vocab;
  CpModel model;
  std::vector<DocId> tensor_sources;
  ErrorVector train_errors;        // human training documents
  std::string head;                // detector name
  std::optional<Detector> detector;
  std::optional<SupervisedHead> supervised;
  std::vector<DocId> detector_sources;
  std::vector<std::string> warnings;

  std::vector<double> anomaly_scores(std::span<const double> errors) const {
    return detector ? detector->score(errors) : supervised->score(errors);
  }

  std::vector<int> predictions(std::span<const double> errors, double contamination) const {
    if (detector) return apply_threshold(detector->score(errors), contamination);
    std::vector<int> out(errors.size());
    for (std::size_t i = 0; i < errors.size(); ++i) out[i] = supervised->predict(errors[i]);
    return out;
  }
};

namespace detail {

inline std::vector<DocId> filter_ids(const Corpus& corpus, const std::vector<DocId>& ids, Label label) {
  std::vector<DocId> out;
  for (DocId id : ids)
    if (corpus[id].label == label) out.push_back(id);
  return out;
}

inline std::vector<TokenSeq> gather(const std::vector<TokenSeq>& tokens, const std::vector<DocId>& ids) {
  std::vector<TokenSeq> out;
  out.reserve(ids.size());
  for (DocId id : ids) out.push_back(tokens[id]);
  return out;
}

}  // namespace detail

/// Fits vocabulary, tensor and CP model on the human documents of
/// `train_ids`; the head is fitted separately.
inline FittedPipeline fit_decomposition(const Corpus& corpus, const std::vector<TokenSeq>& tokens,
                                        const std::vector<DocId>& train_ids, const PipelineConfig& cfg,
                                        std::uint64_t als_seed) {
  FittedPipeline fp;
  fp.vocab = build_vocabulary(corpus, tokens, train_ids, cfg.vocab_cap);
  const auto human = detail::filter_ids(corpus, train_ids, Label::human);
  const auto tensor = build_tensor(detail::gather(tokens, human), fp.vocab, cfg.cooc, human);
  const std::size_t smallest_mode = std::min(tensor.n_slices(), tensor.dim());
  if (cfg.rank > smallest_mode)
    throw ConfigError("rank " + std::to_string(cfg.rank) + " exceeds the smallest tensor mode (" +
                      std::to_string(smallest_mode) + ")");
  fp.tensor_sources = tensor.sources();
  AlsOptions als = cfg.als;
  als.seed = als_seed;
  fp.model = cp_als(tensor, cfg.rank, als);
  fp.model.geometry = geometry_fingerprint(fp.vocab, cfg.cooc);
  return fp;
}

inline ScoreOptions score_options(const PipelineConfig& cfg) {
  return ScoreOptions{cfg.normalize_errors, cfg.effective_threads()};
}

/// Fits the configured head. `fit_errors`/`fit_labels` are the sample it
/// learns from; unsupervised heads ignore the labels.
inline void fit_head(FittedPipeline& fp, const PipelineConfig& cfg, const ErrorVector& fit_errors,
                     const std::vector<int>& fit_labels, std::uint64_t head_seed) {
  fp.head = cfg.detector;
  fp.detector_sources = fit_errors.doc_ids;
  if (is_supervised_head(cfg.detector)) {
    SupervisedOptions so;
    so.rounds = cfg.boost_rounds;
    fp.supervised = fit_supervised(cfg.detector == "stump" ? SupervisedKind::stump : SupervisedKind::boosted_stumps,
                                   fit_errors.values, fit_labels, so);
  } else {
    fp.detector = fit_detector(detector_kind_from_string(cfg.detector), fit_errors.values,
                               cfg.detector_options(head_seed));
    fp.warnings = fp.detector->warnings();
  }
}

// ---------------------------------------------------------------------------
// Cross-validation

struct FoldReport {
  std::size_t fold = 0;
  double f1 = 0.0;
  double f1_opt = 0.0;
  double auc = 0.0;
  std::size_t n_train_human = 0;
  std::size_t n_test = 0;
  std::size_t vocab_size = 0;
  double cp_fit = 0.0;
  std::size_t als_iterations = 0;
  double mean_train_error = 0.0;
  AuditResult audit;
  std::vector<std::string> warnings;
};

struct Report {
  std::string method = "gpten";
  std::string fingerprint;
  std::size_t rank = 0;
  std::string detector;
  double contamination = 0.0;
  std::vector<FoldReport> folds;
  double f1 = 0.0, f1_std = 0.0;
  double f1_opt = 0.0, f1_opt_std = 0.0;
  double auc = 0.0, auc_std = 0.0;
  double mean_train_error = 0.0;
  double runtime_seconds = 0.0;

  /// Out-of-fold values per document: reconstruction error and head score.
  std::vector<double> oof_errors;
  std::vector<double> oof_scores;

  bool audit_passed() const {
    return std::all_of(folds.begin(), folds.end(), [](const auto& f) { return f.audit.passed(); });
  }

  void aggregate() {
    std::vector<double> f1s, f1o, aucs, errs;
    for (const auto& f : folds) {
      f1s.push_back(f.f1);
      f1o.push_back(f.f1_opt);
      aucs.push_back(f.auc);
      errs.push_back(f.mean_train_error);
    }
    f1 = mean(f1s);
    f1_std = stddev(f1s);
    f1_opt = mean(f1o);
    f1_opt_std = stddev(f1o);
    auc = mean(aucs);
    auc_std = stddev(aucs);
    mean_train_error = mean(errs);
  }
};

inline nlohmann::json to_json(const Report& r, bool include_runtime = true) {
  nlohmann::json folds = nlohmann::json::array();
  for (const auto& f : r.folds) {
    folds.push_back({{"fold", f.fold},
                     {"f1", f.f1},
                     {"f1_opt", f.f1_opt},
                     {"auc", f.auc},
                     {"n_train_human", f.n_train_human},
                     {"n_test", f.n_test},
                     {"vocab_size", f.vocab_size},
                     {"cp_fit", f.cp_fit},
                     {"als_iterations", f.als_iterations},
                     {"mean_train_error", f.mean_train_error},
                     {"audit", {{"passed", f.audit.passed()}, {"violations", f.audit.violations}}},
                     {"warnings", f.warnings}});
  }
  nlohmann::json j{{"version", kReportVersion},
                   {"method", r.method},
                   {"fingerprint", r.fingerprint},
                   {"rank", r.rank},
                   {"detector", r.detector},
                   {"contamination", r.contamination},
                   {"f1", r.f1},
                   {"f1_std", r.f1_std},
                   {"f1_opt", r.f1_opt},
                   {"f1_opt_std", r.f1_opt_std},
                   {"auc", r.auc},
                   {"auc_std", r.auc_std},
                   {"mean_train_error", r.mean_train_error},
                   {"audit_passed", r.audit_passed()},
                   {"folds", folds}};
  if (include_runtime) j["runtime_seconds"] = r.runtime_seconds;
  return j;
}

/// Runs `job(i)` for i in [0, n) on up to `threads` workers. Results must be
/// written to per-index slots by the job itself.
template <class Job>
void run_jobs(std::size_t n, std::size_t threads, Job&& job) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          job(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

namespace detail {

template <class E>
[[noreturn]] void rethrow_annotated(const E& e, std::size_t fold) {
  throw E("fold " + std::to_string(fold) + ": " + e.what());
}

}  // namespace detail

/// Seeds are derived per job as derive_seed(seed, fold, rank), so a fold
/// gives the same numbers regardless of scheduling.
inline Report cross_validate(const Corpus& corpus, const PipelineConfig& cfg, const FoldPlan& plan) {
  cfg.validate();
  if (plan.assignments.size() != corpus.size()) throw ConfigError("fold plan does not match corpus size");
  const auto start = std::chrono::steady_clock::now();
  const auto tokens = tokenize_corpus(corpus, cfg.tokenizer);

  Report report;
  report.fingerprint = fingerprint(cfg);
  report.rank = cfg.rank;
  report.detector = cfg.detector;
  report.contamination = cfg.contamination;
  report.folds.resize(plan.k);
  report.oof_errors.assign(corpus.size(), 0.0);
  report.oof_scores.assign(corpus.size(), 0.0);

  PipelineConfig inner = cfg;
  inner.threads = 1;  // parallelism goes to folds

  run_jobs(plan.k, cfg.effective_threads(), [&](std::size_t fold) {
    try {
      const auto train_ids = plan.train_ids(fold);
      const auto test_ids = plan.test_ids(fold);
      const std::uint64_t job_seed = derive_seed(cfg.seed, fold, cfg.rank);
      FittedPipeline fp = fit_decomposition(corpus, tokens, train_ids, inner, job_seed);
      const SliceScorer scorer(fp.model.a, fp.model.b);
      const auto so = score_options(inner);

      const auto human_train = detail::filter_ids(corpus, train_ids, Label::human);
      fp.train_errors = score_corpus(detail::gather(tokens, human_train), human_train, scorer, fp.model.geometry,
                                     fp.vocab, cfg.cooc, so);
      const ErrorVector test_errors =
          score_corpus(detail::gather(tokens, test_ids), test_ids, scorer, fp.model.geometry, fp.vocab, cfg.cooc, so);

      Provenance prov{fp.vocab.sources(), fp.tensor_sources, fp.model.sources, {}, false, false};
      const std::uint64_t head_seed = derive_seed(job_seed, 0x68656164);
      if (is_supervised_head(cfg.detector)) {
        std::vector<DocId> labeled;
        for (DocId id : train_ids)
          if (corpus[id].label != Label::unlabeled) labeled.push_back(id);
        const ErrorVector fit_errors = score_corpus(detail::gather(tokens, labeled), labeled, scorer,
                                                    fp.model.geometry, fp.vocab, cfg.cooc, so);
        std::vector<int> fit_labels;
        for (DocId id : labeled) fit_labels.push_back(corpus[id].label == Label::gpt ? 1 : 0);
        fit_head(fp, cfg, fit_errors, fit_labels, head_seed);
        prov.detector_uses_labels = true;
      } else if (cfg.fit_mode == FitMode::transductive) {
        fit_head(fp, cfg, test_errors, {}, head_seed);
        prov.detector_transductive = true;
      } else {
        fit_head(fp, cfg, fp.train_errors, {}, head_seed);
      }
      prov.detector = fp.detector_sources;

      FoldReport& fr = report.folds[fold];
      fr.fold = fold;
      fr.audit = audit_fold(corpus, train_ids, prov);
      if (!fr.audit.passed()) throw DataError("hygiene audit failed: " + fr.audit.violations.front());

      const auto scores = fp.anomaly_scores(test_errors.values);
      const auto preds = fp.predictions(test_errors.values, cfg.contamination);
      std::vector<double> eval_scores;
      std::vector<int> eval_pred, eval_labels;
      for (std::size_t i = 0; i < test_ids.size(); ++i) {
        report.oof_errors[test_ids[i]] = test_errors.values[i];
        report.oof_scores[test_ids[i]] = scores[i];
        const Label l = corpus[test_ids[i]].label;
        if (l == Label::unlabeled) continue;
        eval_scores.push_back(scores[i]);
        eval_pred.push_back(preds[i]);
        eval_labels.push_back(l == Label::gpt ? 1 : 0);
      }
      fr.f1 = f1_score(eval_pred, eval_labels);
      fr.f1_opt = best_f1(eval_scores, eval_labels);
      fr.auc = roc_auc(eval_scores, eval_labels);
      fr.n_train_human = human_train.size();
      fr.n_test = test_ids.size();
      fr.vocab_size = fp.vocab.size();
      fr.cp_fit = fp.model.fit;
      fr.als_iterations = fp.model.iterations_run;
      fr.mean_train_error = mean(fp.train_errors.values);
      fr.warnings = fp.warnings;
    } catch (const ConfigError& e) {
      detail::rethrow_annotated(e, fold);
    } catch (const DataError& e) {
      detail::rethrow_annotated(e, fold);
    } catch (const NumericalError& e) {
      detail::rethrow_annotated(e, fold);
    }
  });

  report.aggregate();
  report.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

inline Report cross_validate(const Corpus& corpus, const PipelineConfig& cfg) {
  return cross_validate(corpus, cfg, make_splits(corpus, cfg.folds, cfg.seed));
}

// ---------------------------------------------------------------------------
// Rank sweep

struct SweepRow {
  std::size_t rank = 0;
  double f1 = 0.0;
  double f1_opt = 0.0;
  double auc = 0.0;
  double mean_train_error = 0.0;
};

struct SweepReport {
  std::string fingerprint;  // of the base config
  std::vector<SweepRow> rows;
  std::vector<Report> reports;
};

/// Largest admissible rank for a plan: the smallest tensor mode over all
/// folds, min(#human training docs, vocabulary size).
inline std::size_t max_admissible_rank(const Corpus& corpus, const std::vector<TokenSeq>& tokens,
                                       const FoldPlan& plan, const PipelineConfig& cfg) {
  std::size_t limit = static_cast<std::size_t>(-1);
  for (std::size_t fold = 0; fold < plan.k; ++fold) {
    const auto train = plan.train_ids(fold);
    const auto vocab = build_vocabulary(corpus, tokens, train, cfg.vocab_cap);
    const auto human = detail::filter_ids(corpus, train, Label::human);
    limit = std::min({limit, human.size(), vocab.size()});
  }
  return limit;
}

inline SweepReport rank_sweep(const Corpus& corpus, const std::vector<std::size_t>& ranks, const PipelineConfig& cfg) {
  cfg.validate();
  if (ranks.empty()) throw ConfigError("rank ladder is empty");
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    if (ranks[i] < 1) throw ConfigError("ranks must be at least 1");
    if (i > 0 && ranks[i] <= ranks[i - 1]) throw ConfigError("rank ladder must be strictly increasing");
  }
  const FoldPlan plan = make_splits(corpus, cfg.folds, cfg.seed);
  const auto tokens = tokenize_corpus(corpus, cfg.tokenizer);
  const std::size_t limit = max_admissible_rank(corpus, tokens, plan, cfg);
  if (ranks.back() > limit)
    throw ConfigError("rank " + std::to_string(ranks.back()) + " exceeds the smallest tensor mode (" +
                      std::to_string(limit) + ")");

  SweepReport out;
  out.fingerprint = fingerprint(cfg);
  for (std::size_t r : ranks) {
    PipelineConfig c = cfg;
    c.rank = r;
    Report rep = cross_validate(corpus, c, plan);
    out.rows.push_back({r, rep.f1, rep.f1_opt, rep.auc, rep.mean_train_error});
    out.reports.push_back(std::move(rep));
  }
  return out;
}

inline nlohmann::json to_json(const SweepReport& s) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : s.rows)
    rows.push_back({{"rank", r.rank},
                    {"f1", r.f1},
                    {"f1_opt", r.f1_opt},
                    {"auc", r.auc},
                    {"mean_train_error", r.mean_train_error}});
  return {{"version", kReportVersion}, {"fingerprint", s.fingerprint}, {"rows", rows}};
}

}  // namespace gpten
