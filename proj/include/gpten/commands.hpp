#pragma once

// Staged pipeline commands behind the CLI. Each writes fixed file names
// into an output directory:
//   run       report.json, scores.csv, folds.json, model.bin, detector.json
//   decompose model.bin, detector.json
//   score     scores.csv (and anomaly.csv with a detector)
//   sweep     sweep.csv, sweep.json
//   baseline  report.json

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gpten/artifacts.hpp"
#include "gpten/baseline.hpp"
#include "gpten/config.hpp"
#include "gpten/corpus.hpp"
#include "gpten/eval.hpp"

namespace gpten {

// Seed slot of the model fitted on the whole input, distinct from every
// fold index.
inline constexpr std::uint64_t kFullDataJob = 0xfffffffffULL;

struct Decomposition {
  ModelArtifact artifact;
  FittedPipeline fitted;
};

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

inline std::filesystem::path prepare_dir(const std::string& dir) {
  std::filesystem::path p(dir);
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec) throw DataError("cannot create output directory '" + dir + "': " + ec.message());
  return p;
}

inline Corpus load_input(const PipelineConfig& cfg) {
  if (cfg.input.empty()) throw ConfigError("no input file given");
  return load_corpus(cfg.input, cfg.schema());
}

}  // namespace detail

/// Fits vocabulary, tensor, CP model and head on every labeled document of
/// `corpus` (human ones only, except for supervised heads).
inline Decomposition decompose(const Corpus& corpus, const PipelineConfig& cfg) {
  cfg.validate();
  const auto tokens = tokenize_corpus(corpus, cfg.tokenizer);
  std::vector<DocId> all(corpus.size());
  for (DocId id = 0; id < all.size(); ++id) all[id] = id;
  const std::uint64_t job_seed = derive_seed(cfg.seed, kFullDataJob, cfg.rank);

  Decomposition d;
  d.fitted = fit_decomposition(corpus, tokens, all, cfg, job_seed);
  const SliceScorer scorer(d.fitted.model.a, d.fitted.model.b);
  const auto so = score_options(cfg);
  const auto human = detail::filter_ids(corpus, all, Label::human);
  d.fitted.train_errors = score_corpus(detail::gather(tokens, human), human, scorer, d.fitted.model.geometry,
                                       d.fitted.vocab, cfg.cooc, so);
  const std::uint64_t head_seed = derive_seed(job_seed, 0x68656164);
  if (is_supervised_head(cfg.detector)) {
    std::vector<DocId> labeled;
    std::vector<int> labels;
    for (DocId id : all)
      if (corpus[id].label != Label::unlabeled) {
        labeled.push_back(id);
        labels.push_back(corpus[id].label == Label::gpt ? 1 : 0);
      }
    const auto errs = score_corpus(detail::gather(tokens, labeled), labeled, scorer, d.fitted.model.geometry,
                                   d.fitted.vocab, cfg.cooc, so);
    fit_head(d.fitted, cfg, errs, labels, head_seed);
  } else {
    fit_head(d.fitted, cfg, d.fitted.train_errors, {}, head_seed);
  }
  d.artifact = ModelArtifact{fingerprint(cfg), cfg.tokenizer, cfg.cooc, d.fitted.vocab, d.fitted.model};
  return d;
}

inline void write_decomposition(const std::filesystem::path& dir, const Decomposition& d) {
  save_model((dir / "model.bin").string(), d.artifact);
  if (d.fitted.detector)
    detail::write_json(dir / "detector.json", detector_artifact(*d.fitted.detector, d.artifact.fingerprint));
}

inline Decomposition cmd_decompose(const PipelineConfig& cfg, const std::string& out_dir) {
  const auto dir = detail::prepare_dir(out_dir);
  Decomposition d = decompose(detail::load_input(cfg), cfg);
  write_decomposition(dir, d);
  return d;
}

/// Cross-validated evaluation plus the full-data model. scores.csv holds
/// out-of-fold reconstruction errors.
inline Report cmd_run(const PipelineConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  const auto dir = detail::prepare_dir(out_dir);
  const Corpus corpus = detail::load_input(cfg);
  const FoldPlan plan = make_splits(corpus, cfg.folds, cfg.seed);
  Report report = cross_validate(corpus, cfg, plan);

  nlohmann::json j = to_json(report);
  j["config"] = to_json(cfg, false);
  detail::write_json(dir / "report.json", j);
  nlohmann::json folds = to_json(plan);
  folds["fingerprint"] = report.fingerprint;
  detail::write_json(dir / "folds.json", folds);

  ErrorVector oof;
  oof.values = report.oof_errors;
  for (DocId id = 0; id < corpus.size(); ++id) oof.doc_ids.push_back(id);
  std::ostringstream scores;
  write_scores(scores, oof, report.fingerprint);
  detail::write_text(dir / "scores.csv", scores.str());

  write_decomposition(dir, decompose(corpus, cfg));
  return report;
}

struct ScoreRequest {
  std::string model_path;
  std::string input_path;
  std::string out_dir;
  std::string detector_path;         // optional
  std::string expected_fingerprint;  // optional; checked against the model
  CsvSchema schema;
  double contamination = 0.1;
  bool normalize_errors = false;
  std::size_t threads = 1;
};

/// Scores every row of an input file against a saved model, in file order.
inline ErrorVector cmd_score(const ScoreRequest& req) {
  const ModelArtifact art = load_model(req.model_path);
  if (!req.expected_fingerprint.empty() && req.expected_fingerprint != art.fingerprint)
    throw FingerprintMismatch("model fingerprint " + art.fingerprint + " does not match expected " +
                              req.expected_fingerprint);
  const auto dir = detail::prepare_dir(req.out_dir);
  std::optional<Detector> det;
  if (!req.detector_path.empty()) det = load_detector(req.detector_path, art.fingerprint);

  const Corpus corpus = load_corpus(req.input_path, req.schema);
  const auto tokens = tokenize_corpus(corpus, art.tokenizer);
  std::vector<DocId> ids(corpus.size());
  for (DocId id = 0; id < ids.size(); ++id) ids[id] = id;
  const SliceScorer scorer(art.model.a, art.model.b);
  const ErrorVector ev = score_corpus(tokens, ids, scorer, art.model.geometry, art.vocab, art.cooc,
                                      ScoreOptions{req.normalize_errors, req.threads});
  std::ostringstream out;
  write_scores(out, ev, art.fingerprint);
  detail::write_text(dir / "scores.csv", out.str());

  if (det) {
    const auto scores = det->score(ev.values);
    const auto flags = apply_threshold(scores, req.contamination);
    std::ostringstream a;
    a << "# fingerprint: " << art.fingerprint << '\n' << "doc_id,anomaly_score,flagged\n";
    for (std::size_t i = 0; i < scores.size(); ++i) a << ids[i] << ',' << format_double(scores[i]) << ',' << flags[i] << '\n';
    detail::write_text(dir / "anomaly.csv", a.str());
  }
  return ev;
}

inline SweepReport cmd_sweep(const PipelineConfig& cfg, const std::vector<std::size_t>& ranks,
                             const std::string& out_dir) {
  const auto dir = detail::prepare_dir(out_dir);
  const SweepReport sweep = rank_sweep(detail::load_input(cfg), ranks, cfg);
  std::ostringstream csv;
  csv << "# fingerprint: " << sweep.fingerprint << '\n' << "rank,f1,auc,mean_train_error\n";
  for (const auto& r : sweep.rows)
    csv << r.rank << ',' << format_double(r.f1) << ',' << format_double(r.auc) << ','
        << format_double(r.mean_train_error) << '\n';
  detail::write_text(dir / "sweep.csv", csv.str());
  nlohmann::json j = to_json(sweep);
  j["config"] = to_json(cfg, false);
  detail::write_json(dir / "sweep.json", j);
  return sweep;
}

inline Report cmd_baseline(const PipelineConfig& cfg, const std::string& out_dir) {
  const auto dir = detail::prepare_dir(out_dir);
  const Corpus corpus = detail::load_input(cfg);
  const Report report = cross_validate_baseline(corpus, cfg, make_splits(corpus, cfg.folds, cfg.seed));
  nlohmann::json j = to_json(report);
  j["config"] = to_json(cfg, false);
  detail::write_json(dir / "report.json", j);
  return report;
}

}  // namespace gpten
