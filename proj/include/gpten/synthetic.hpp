#pragma once

// Seeded bigram corpora with a controlled distribution shift, used to
// exercise the pipeline where ground truth is known by construction.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "gpten/corpus.hpp"
#include "gpten/error.hpp"
#include "gpten/random.hpp"

namespace gpten {

struct SyntheticOptions {
  std::size_t n_human = 200;
  std::size_t n_gpt = 50;
  std::size_t vocab = 64;
  std::size_t clusters = 4;    // words are split into this many contiguous topic clusters
  std::size_t successors = 2;  // core words per cluster; the rest of the cluster is tail
  double human_tail = 0.03;    // human transition mass that reaches tail words
  double shift = 0.3;          // transition mass (half L1) by which gpt rows differ from human rows
  std::size_t min_length = 40;
  std::size_t max_length = 80;
  std::uint64_t seed = 7;
};

/// Row-stochastic sparse transition table.
struct BigramModel {
  std::vector<std::vector<std::pair<std::size_t, double>>> rows;

  std::size_t next(std::size_t word, Rng& rng) const {
    double u = rng.uniform();
    for (const auto& [to, p] : rows[word]) {
      if (u < p) return to;
      u -= p;
    }
    return rows[word].back().first;
  }

  /// Half the L1 distance between the two transition rows of `word`.
  double shifted_mass(const BigramModel& other, std::size_t word) const {
    std::vector<double> a(rows.size(), 0.0), b(rows.size(), 0.0);
    for (const auto& [to, p] : rows[word]) a[to] += p;
    for (const auto& [to, p] : other.rows[word]) b[to] += p;
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d += std::abs(a[i] - b[i]);
    return d / 2.0;
  }
};

inline std::string synthetic_word(std::size_t i) {
  static constexpr const char* kOnset[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"};
  static constexpr const char* kVowel[] = {"a", "e", "i", "o", "u"};
  std::string w;
  std::size_t x = i;
  do {
    w += kOnset[x % 14];
    x /= 14;
    w += kVowel[x % 5];
    x /= 5;
  } while (x > 0);
  return w;
}

struct SyntheticSource {
  BigramModel human;
  BigramModel gpt;
};

/// Every cluster holds `successors` core words and a tail. Human rows move
/// within the cluster, almost always to core words, so human co-occurrence
/// concentrates on a few term directions per cluster. A gpt row mixes the
/// human row with a distribution over the cluster's tail, with the mixing
/// weight chosen so that exactly `shift` of the mass moves.
inline SyntheticSource make_bigram_pair(const SyntheticOptions& o) {
  if (o.clusters < 1 || o.vocab % o.clusters != 0) throw ConfigError("vocabulary must split evenly into clusters");
  const std::size_t width = o.vocab / o.clusters;
  if (o.successors < 1 || o.successors >= width) throw ConfigError("clusters need both core and tail words");
  if (!(o.shift >= 0.0 && o.shift <= 1.0)) throw ConfigError("shift must lie in [0, 1]");
  if (!(o.human_tail >= 0.0 && o.human_tail < 1.0)) throw ConfigError("human_tail must lie in [0, 1)");
  Rng rng(derive_seed(o.seed, 1));
  SyntheticSource src;
  src.human.rows.resize(o.vocab);
  src.gpt.rows.resize(o.vocab);
  auto weights = [&](std::size_t n, double total) {
    std::vector<double> w(n);
    double s = 0.0;
    for (double& v : w) s += (v = rng.uniform(0.5, 1.5));
    for (double& v : w) v *= total / s;
    return w;
  };
  const std::size_t tail = width - o.successors;
  for (std::size_t w = 0; w < o.vocab; ++w) {
    const std::size_t base = (w / width) * width;
    const auto core_w = weights(o.successors, 1.0 - o.human_tail);
    const auto tail_h = weights(tail, o.human_tail);
    const auto tail_g = weights(tail, 1.0);
    std::vector<double> h(width), t(width, 0.0);
    for (std::size_t i = 0; i < o.successors; ++i) h[i] = core_w[i];
    for (std::size_t i = 0; i < tail; ++i) {
      h[o.successors + i] = tail_h[i];
      t[o.successors + i] = tail_g[i];
    }
    double tv = 0.0;
    for (std::size_t i = 0; i < width; ++i) tv += std::abs(h[i] - t[i]) / 2.0;
    const double mix = std::min(1.0, o.shift / tv);
    for (std::size_t i = 0; i < width; ++i) {
      if (h[i] > 0.0) src.human.rows[w].emplace_back(base + i, h[i]);
      src.gpt.rows[w].emplace_back(base + i, (1.0 - mix) * h[i] + mix * t[i]);
    }
  }
  return src;
}

/// Human and gpt documents interleaved in a seeded order.
inline Corpus make_synthetic_corpus(const SyntheticOptions& o) {
  if (o.min_length < 2 || o.max_length < o.min_length) throw ConfigError("invalid synthetic length range");
  const SyntheticSource src = make_bigram_pair(o);
  Rng rng(derive_seed(o.seed, 2));
  auto sample_doc = [&](const BigramModel& model) {
    const std::size_t len = o.min_length + rng.below(o.max_length - o.min_length + 1);
    std::size_t w = rng.below(o.vocab);
    std::string text = synthetic_word(w);
    for (std::size_t i = 1; i < len; ++i) {
      w = model.next(w, rng);
      text += ' ';
      text += synthetic_word(w);
    }
    return text;
  };
  std::vector<Document> docs;
  for (std::size_t i = 0; i < o.n_human; ++i) docs.push_back({0, sample_doc(src.human), Label::human});
  for (std::size_t i = 0; i < o.n_gpt; ++i) docs.push_back({0, sample_doc(src.gpt), Label::gpt});
  rng.shuffle(std::span<Document>(docs));
  return Corpus(std::move(docs));
}

}  // namespace gpten
