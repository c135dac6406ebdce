// gpten: command-line front end for the detector pipeline.
//
//   gpten run       --input corpus.csv --out dir [--config cfg.json] [overrides]
//   gpten decompose --input corpus.csv --out dir
//   gpten score     --model dir/model.bin --input new.csv --out dir [--detector dir/detector.json]
//   gpten sweep     --input corpus.csv --ranks 2,4,8,16,32 --out dir
//   gpten baseline  --input corpus.csv --out dir
//
// Helpers: splits (fold plan JSON), slices (per-document COO export) and
// synth (seeded synthetic corpus).
//
// Settings resolve as flags over config file over defaults. Exit codes:
// 0 ok, 2 config error, 3 data error, 4 numerical failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gpten/commands.hpp"
#include "gpten/synthetic.hpp"

namespace {

using gpten::PipelineConfig;

/// Pipeline flags shared by run, decompose, sweep and baseline. Only the
/// flags actually given on the command line override the config file.
struct ConfigFlags {
  std::string config_path;
  std::string input;
  std::optional<std::string> text_column, label_column, human_label, gpt_label;
  std::optional<std::size_t> window, vocab_cap, rank, folds, max_iters, restarts, threads;
  std::optional<std::size_t> lof_neighbors, iforest_trees, iforest_subsample, boost_rounds, min_token_length;
  std::optional<std::string> weighting, detector, fit_mode;
  std::optional<double> contamination, tol;
  std::optional<std::uint64_t> seed;
  bool normalize = false;
  bool deterministic = false;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
    app->add_option("--input", input, "Corpus CSV");
    app->add_option("--text-column", text_column, "Name of the text column");
    app->add_option("--label-column", label_column, "Name of the label column");
    app->add_option("--human-label", human_label, "Label string for human rows");
    app->add_option("--gpt-label", gpt_label, "Label string for gpt rows");
    app->add_option("--window", window, "Co-occurrence window");
    app->add_option("--weighting", weighting, "count | binary | inverse_distance");
    app->add_option("--vocab-cap", vocab_cap, "Vocabulary size cap");
    app->add_option("--min-token-length", min_token_length, "Shortest token kept");
    app->add_option("--rank", rank, "CP rank");
    app->add_option("--max-iters", max_iters, "ALS sweep limit");
    app->add_option("--tol", tol, "ALS fit-change tolerance");
    app->add_option("--restarts", restarts, "ALS restarts, best fit kept");
    app->add_option("--detector", detector, "kde | lof | iforest | stump | boosted_stumps");
    app->add_option("--contamination", contamination, "Fraction of documents flagged");
    app->add_option("--lof-neighbors", lof_neighbors, "LOF neighbour count");
    app->add_option("--iforest-trees", iforest_trees, "Isolation forest size");
    app->add_option("--iforest-subsample", iforest_subsample, "Isolation forest subsample (0 = auto)");
    app->add_option("--boost-rounds", boost_rounds, "Boosted stump rounds");
    app->add_option("--fit-mode", fit_mode, "train-errors | transductive");
    app->add_option("--folds", folds, "Cross-validation folds");
    app->add_option("--seed", seed, "Master seed");
    app->add_option("--threads", threads, "Worker threads");
    app->add_flag("--normalize", normalize, "Divide each error by the slice norm");
    app->add_flag("--deterministic", deterministic, "Sequential execution for bit-exact output");
  }

  PipelineConfig resolve() const {
    PipelineConfig c = config_path.empty() ? PipelineConfig{} : gpten::load_config(config_path);
    if (!input.empty()) c.input = input;
    if (text_column) c.text_column = *text_column;
    if (label_column) c.label_column = *label_column;
    if (human_label) c.human_label = *human_label;
    if (gpt_label) c.gpt_label = *gpt_label;
    if (window) c.cooc.window = *window;
    if (weighting) c.cooc.weighting = gpten::weighting_from_string(*weighting);
    if (vocab_cap) c.vocab_cap = *vocab_cap;
    if (min_token_length) c.tokenizer.min_length = *min_token_length;
    if (rank) c.rank = *rank;
    if (max_iters) c.als.max_iters = *max_iters;
    if (tol) c.als.tol = *tol;
    if (restarts) c.als.restarts = *restarts;
    if (detector) c.detector = *detector;
    if (contamination) c.contamination = *contamination;
    if (lof_neighbors) c.lof_neighbors = *lof_neighbors;
    if (iforest_trees) c.iforest_trees = *iforest_trees;
    if (iforest_subsample) c.iforest_subsample = *iforest_subsample;
    if (boost_rounds) c.boost_rounds = *boost_rounds;
    if (fit_mode) c.fit_mode = gpten::fit_mode_from_string(*fit_mode);
    if (folds) c.folds = *folds;
    if (seed) c.seed = *seed;
    if (threads) c.threads = *threads;
    if (normalize) c.normalize_errors = true;
    if (deterministic) c.deterministic = true;
    c.validate();
    return c;
  }
};

void print_warnings(const gpten::Report& r) {
  for (const auto& f : r.folds)
    for (const auto& w : f.warnings) std::cerr << "warning: fold " << f.fold << ": " << w << '\n';
}

void print_summary(const gpten::Report& r) {
  std::printf("%s  detector=%s  auc=%.4f  f1=%.4f  f1_opt=%.4f  fingerprint=%s\n", r.method.c_str(),
              r.detector.c_str(), r.auc, r.f1, r.f1_opt, r.fingerprint.c_str());
}

std::vector<std::size_t> parse_ranks(const std::string& text) {
  std::vector<std::size_t> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const std::string item = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    try {
      std::size_t used = 0;
      const long long v = std::stoll(item, &used);
      if (used != item.size() || v < 1) throw std::invalid_argument(item);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw gpten::ConfigError("bad rank '" + item + "' in --ranks");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GpTen: flag machine-generated text by tensor reconstruction error"};
  app.require_subcommand(1);

  ConfigFlags run_flags, decompose_flags, sweep_flags, baseline_flags;
  std::string run_out = "out", decompose_out = "out", sweep_out = "out", baseline_out = "out";

  auto* run = app.add_subcommand("run", "Cross-validated evaluation plus full-data model");
  run_flags.attach(run);
  run->add_option("--out", run_out, "Output directory");

  auto* decompose = app.add_subcommand("decompose", "Fit vocabulary, tensor, CP model and head on all input");
  decompose_flags.attach(decompose);
  decompose->add_option("--out", decompose_out, "Output directory");

  gpten::ScoreRequest score_req;
  bool score_normalize = false;
  auto* score = app.add_subcommand("score", "Score documents against a saved model");
  score->add_option("--model", score_req.model_path, "model.bin from run or decompose")->required();
  score->add_option("--input", score_req.input_path, "Corpus CSV to score")->required();
  score->add_option("--out", score_req.out_dir, "Output directory")->default_val("out");
  score->add_option("--detector", score_req.detector_path, "detector.json; adds anomaly.csv");
  score->add_option("--fingerprint", score_req.expected_fingerprint, "Reject the model unless it has this fingerprint");
  score->add_option("--contamination", score_req.contamination, "Fraction flagged in anomaly.csv");
  score->add_option("--text-column", score_req.schema.text_column, "Name of the text column");
  score->add_option("--label-column", score_req.schema.label_column, "Name of the label column");
  score->add_option("--threads", score_req.threads, "Worker threads");
  score->add_flag("--normalize", score_normalize, "Divide each error by the slice norm");

  std::string ranks_text = "2,4,8,16,32";
  auto* sweep = app.add_subcommand("sweep", "Cross-validate along a ladder of ranks");
  sweep_flags.attach(sweep);
  sweep->add_option("--ranks", ranks_text, "Comma-separated, strictly increasing");
  sweep->add_option("--out", sweep_out, "Output directory");

  auto* baseline = app.add_subcommand("baseline", "TF-IDF + logistic regression on the same folds");
  baseline_flags.attach(baseline);
  baseline->add_option("--out", baseline_out, "Output directory");

  ConfigFlags split_flags;
  std::string split_out = "folds.json";
  auto* splits = app.add_subcommand("splits", "Write the stratified fold plan");
  split_flags.attach(splits);
  splits->add_option("--out", split_out, "Output JSON file");

  std::string slices_model, slices_input, slices_out = "slices";
  gpten::CsvSchema slices_schema;
  auto* slices = app.add_subcommand("slices", "Export each document's slice as COO CSV");
  slices->add_option("--model", slices_model, "model.bin supplying vocabulary and window")->required();
  slices->add_option("--input", slices_input, "Corpus CSV")->required();
  slices->add_option("--out", slices_out, "Output directory");
  slices->add_option("--text-column", slices_schema.text_column, "Name of the text column");
  slices->add_option("--label-column", slices_schema.label_column, "Name of the label column");

  gpten::SyntheticOptions synth_opts;
  std::string synth_out = "synthetic.csv";
  auto* synth = app.add_subcommand("synth", "Write a seeded synthetic bigram corpus");
  synth->add_option("--out", synth_out, "Output CSV");
  synth->add_option("--n-human", synth_opts.n_human, "Human documents");
  synth->add_option("--n-gpt", synth_opts.n_gpt, "Gpt documents");
  synth->add_option("--vocab", synth_opts.vocab, "Distinct words");
  synth->add_option("--clusters", synth_opts.clusters, "Topic clusters");
  synth->add_option("--core", synth_opts.successors, "Core words per cluster");
  synth->add_option("--shift", synth_opts.shift, "Transition mass moved in gpt rows");
  synth->add_option("--seed", synth_opts.seed, "Generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*run) {
      const auto report = gpten::cmd_run(run_flags.resolve(), run_out);
      print_warnings(report);
      print_summary(report);
    } else if (*decompose) {
      const auto d = gpten::cmd_decompose(decompose_flags.resolve(), decompose_out);
      for (const auto& w : d.fitted.warnings) std::cerr << "warning: " << w << '\n';
      std::printf("rank=%zu  fit=%.6f  iterations=%zu  vocabulary=%zu  fingerprint=%s\n", d.fitted.model.rank,
                  d.fitted.model.fit, d.fitted.model.iterations_run, d.fitted.vocab.size(),
                  d.artifact.fingerprint.c_str());
    } else if (*score) {
      score_req.normalize_errors = score_normalize;
      const auto ev = gpten::cmd_score(score_req);
      std::printf("scored %zu documents\n", ev.size());
    } else if (*sweep) {
      const auto s = gpten::cmd_sweep(sweep_flags.resolve(), parse_ranks(ranks_text), sweep_out);
      for (const auto& r : s.rows)
        std::printf("rank=%zu  auc=%.4f  f1=%.4f  mean_train_error=%.6g\n", r.rank, r.auc, r.f1, r.mean_train_error);
    } else if (*baseline) {
      print_summary(gpten::cmd_baseline(baseline_flags.resolve(), baseline_out));
    } else if (*splits) {
      const auto cfg = split_flags.resolve();
      const auto corpus = gpten::load_corpus(cfg.input, cfg.schema());
      auto j = gpten::to_json(gpten::make_splits(corpus, cfg.folds, cfg.seed));
      j["fingerprint"] = gpten::fingerprint(cfg);
      std::ofstream out(split_out);
      if (!out) throw gpten::DataError("cannot write '" + split_out + "'");
      out << j.dump(2) << '\n';
    } else if (*slices) {
      const auto art = gpten::load_model(slices_model);
      const auto corpus = gpten::load_corpus(slices_input, slices_schema);
      const auto tokens = gpten::tokenize_corpus(corpus, art.tokenizer);
      const std::filesystem::path dir(slices_out);
      std::filesystem::create_directories(dir);
      for (gpten::DocId id = 0; id < corpus.size(); ++id) {
        const auto s = gpten::build_slice(tokens[id], art.vocab, art.cooc, id);
        const std::string stem = "slice_" + std::to_string(id);
        std::ofstream coo(dir / (stem + ".csv"));
        gpten::write_slice_coo(coo, s);
        auto side = gpten::slice_sidecar(s, art.cooc.window);
        side["fingerprint"] = art.fingerprint;
        std::ofstream(dir / (stem + ".json")) << side.dump(2) << '\n';
        if (!coo) throw gpten::DataError("cannot write slices under '" + slices_out + "'");
      }
      std::printf("wrote %zu slices\n", corpus.size());
    } else if (*synth) {
      const auto corpus = gpten::make_synthetic_corpus(synth_opts);
      std::ofstream out(synth_out);
      if (!out) throw gpten::DataError("cannot write '" + synth_out + "'");
      gpten::write_corpus(out, corpus);
    }
  } catch (const gpten::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
