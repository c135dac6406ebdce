#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "gpten/cooc.hpp"
#include "gpten/corpus.hpp"
#include "gpten/cpd.hpp"
#include "gpten/detect.hpp"
#include "gpten/error.hpp"

namespace gpten {

enum class FitMode { train_errors, transductive };

inline std::string_view to_string(FitMode m) { return m == FitMode::train_errors ? "train-errors" : "transductive"; }

inline FitMode fit_mode_from_string(std::string_view s) {
  if (s == "train-errors") return FitMode::train_errors;
  if (s == "transductive") return FitMode::transductive;
  throw ConfigError("unknown fit mode '" + std::string(s) + "'");
}

/// Heads accepted by the pipeline: the three unsupervised detectors plus
/// the two supervised ones.
inline bool is_supervised_head(std::string_view head) { return head == "stump" || head == "boosted_stumps"; }

inline void validate_head(std::string_view head) {
  if (is_supervised_head(head)) return;
  detector_kind_from_string(head);
}

struct PipelineConfig {
  std::string input;
  std::string text_column = "text";
  std::string label_column = "label";
  std::string human_label = "human";
  std::string gpt_label = "gpt";

  TokenizerOptions tokenizer;
  CoocOptions cooc;
  std::size_t vocab_cap = 2000;
  std::size_t rank = 16;
  AlsOptions als;

  std::string detector = "kde";
  double contamination = 0.1;
  std::size_t lof_neighbors = 20;
  std::size_t iforest_trees = 100;
  std::size_t iforest_subsample = 0;
  std::size_t boost_rounds = 50;
  FitMode fit_mode = FitMode::train_errors;
  bool normalize_errors = false;

  std::size_t folds = 10;
  std::uint64_t seed = 0;

  // Execution knobs. They never change results and are left out of the
  // fingerprint.
  std::size_t threads = 1;
  bool deterministic = false;

  CsvSchema schema() const {
    CsvSchema s;
    s.text_column = text_column;
    s.label_column = label_column;
    s.label_map = {{human_label, Label::human}, {gpt_label, Label::gpt}};
    return s;
  }

  DetectorOptions detector_options(std::uint64_t seed_for_job) const {
    DetectorOptions d;
    d.lof_neighbors = lof_neighbors;
    d.iforest_trees = iforest_trees;
    d.iforest_subsample = iforest_subsample;
    d.seed = seed_for_job;
    return d;
  }

  std::size_t effective_threads() const { return deterministic ? 1 : std::max<std::size_t>(1, threads); }

  void validate() const {
    if (cooc.window < 1) throw ConfigError("window must be at least 1");
    if (vocab_cap < 1) throw ConfigError("vocab_cap must be at least 1");
    if (rank < 1) throw ConfigError("rank must be at least 1");
    if (als.max_iters < 1) throw ConfigError("als.max_iters must be at least 1");
    if (!(als.tol > 0.0)) throw ConfigError("als.tol must be positive");
    if (!(contamination >= 0.0 && contamination <= 1.0)) throw ConfigError("contamination must lie in [0, 1]");
    if (folds < 2) throw ConfigError("folds must be at least 2");
    if (human_label == gpt_label) throw ConfigError("human and gpt label strings must differ");
    validate_head(detector);
  }
};

inline nlohmann::json to_json(const PipelineConfig& c, bool include_execution = true) {
  nlohmann::json j{
      {"input", c.input},
      {"text_column", c.text_column},
      {"label_column", c.label_column},
      {"human_label", c.human_label},
      {"gpt_label", c.gpt_label},
      {"tokenizer",
       {{"lowercase", c.tokenizer.lowercase}, {"strip_urls", c.tokenizer.strip_urls}, {"min_length", c.tokenizer.min_length}}},
      {"window", c.cooc.window},
      {"weighting", to_string(c.cooc.weighting)},
      {"include_diagonal", c.cooc.include_diagonal},
      {"vocab_cap", c.vocab_cap},
      {"rank", c.rank},
      {"als",
       {{"max_iters", c.als.max_iters}, {"tol", c.als.tol}, {"restarts", c.als.restarts}, {"ridge", c.als.ridge}}},
      {"detector", c.detector},
      {"contamination", c.contamination},
      {"lof_neighbors", c.lof_neighbors},
      {"iforest_trees", c.iforest_trees},
      {"iforest_subsample", c.iforest_subsample},
      {"boost_rounds", c.boost_rounds},
      {"fit_mode", to_string(c.fit_mode)},
      {"normalize_errors", c.normalize_errors},
      {"folds", c.folds},
      {"seed", c.seed},
  };
  if (include_execution) {
    j["threads"] = c.threads;
    j["deterministic"] = c.deterministic;
  }
  return j;
}

/// Overlays the keys present in `j` onto `base`; unknown keys are an error.
inline PipelineConfig config_from_json(const nlohmann::json& j, PipelineConfig c = {}) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string& k = it.key();
      const auto& v = it.value();
      if (k == "input") c.input = v.get<std::string>();
      else if (k == "text_column") c.text_column = v.get<std::string>();
      else if (k == "label_column") c.label_column = v.get<std::string>();
      else if (k == "human_label") c.human_label = v.get<std::string>();
      else if (k == "gpt_label") c.gpt_label = v.get<std::string>();
      else if (k == "tokenizer") {
        if (v.contains("lowercase")) c.tokenizer.lowercase = v["lowercase"].get<bool>();
        if (v.contains("strip_urls")) c.tokenizer.strip_urls = v["strip_urls"].get<bool>();
        if (v.contains("min_length")) c.tokenizer.min_length = v["min_length"].get<std::size_t>();
      } else if (k == "window") c.cooc.window = v.get<std::size_t>();
      else if (k == "weighting") c.cooc.weighting = weighting_from_string(v.get<std::string>());
      else if (k == "include_diagonal") c.cooc.include_diagonal = v.get<bool>();
      else if (k == "vocab_cap") c.vocab_cap = v.get<std::size_t>();
      else if (k == "rank") c.rank = v.get<std::size_t>();
      else if (k == "als") {
        if (v.contains("max_iters")) c.als.max_iters = v["max_iters"].get<std::size_t>();
        if (v.contains("tol")) c.als.tol = v["tol"].get<double>();
        if (v.contains("restarts")) c.als.restarts = v["restarts"].get<std::size_t>();
        if (v.contains("ridge")) c.als.ridge = v["ridge"].get<double>();
      } else if (k == "detector") c.detector = v.get<std::string>();
      else if (k == "contamination") c.contamination = v.get<double>();
      else if (k == "lof_neighbors") c.lof_neighbors = v.get<std::size_t>();
      else if (k == "iforest_trees") c.iforest_trees = v.get<std::size_t>();
      else if (k == "iforest_subsample") c.iforest_subsample = v.get<std::size_t>();
      else if (k == "boost_rounds") c.boost_rounds = v.get<std::size_t>();
      else if (k == "fit_mode") c.fit_mode = fit_mode_from_string(v.get<std::string>());
      else if (k == "normalize_errors") c.normalize_errors = v.get<bool>();
      else if (k == "folds") c.folds = v.get<std::size_t>();
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else if (k == "threads") c.threads = v.get<std::size_t>();
      else if (k == "deterministic") c.deterministic = v.get<bool>();
      else throw ConfigError("unknown config key '" + k + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config value has the wrong type: ") + e.what());
  }
  return c;
}

inline PipelineConfig load_config(const std::string& path, PipelineConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j, std::move(base));
}

/// FNV-1a over the canonical JSON of every result-affecting field.
inline std::string fingerprint(const PipelineConfig& c) {
  const std::string canon = to_json(c, false).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canon) h = (h ^ ch) * 0x100000001b3ULL;
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace gpten
