#pragma once

// Anomaly heads over the one-dimensional reconstruction-error feature.
// Unsupervised heads (KDE, LOF, isolation forest) are fitted on errors of
// in-distribution documents; supervised heads (a Gini stump and boosted
// stumps) are fitted on labeled errors. Every head returns scores where
// larger means more anomalous.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gpten/error.hpp"
#include "gpten/random.hpp"

namespace gpten {

enum class DetectorKind { kde, lof, iforest };

inline std::string_view to_string(DetectorKind k) {
  switch (k) {
    case DetectorKind::kde: return "kde";
    case DetectorKind::lof: return "lof";
    case DetectorKind::iforest: return "iforest";
  }
  return "kde";
}

inline DetectorKind detector_kind_from_string(std::string_view s) {
  if (s == "kde") return DetectorKind::kde;
  if (s == "lof") return DetectorKind::lof;
  if (s == "iforest") return DetectorKind::iforest;
  throw ConfigError("unknown detector kind '" + std::string(s) + "'");
}

struct DetectorOptions {
  std::size_t lof_neighbors = 20;
  std::size_t iforest_trees = 100;
  std::size_t iforest_subsample = 0;  // 0: min(256, n)
  std::uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// Isolation forest pieces

/// Average path length of an unsuccessful binary-search-tree lookup among n
/// points: 2·H(n-1) - 2·(n-1)/n with H(i) ≈ ln(i) + γ.
inline double average_path_length(std::size_t n) {
  if (n <= 1) return 0.0;
  if (n == 2) return 1.0;
  constexpr double euler_gamma = 0.5772156649015329;
  const double m = static_cast<double>(n - 1);
  return 2.0 * (std::log(m) + euler_gamma) - 2.0 * m / static_cast<double>(n);
}

struct IsolationNode {
  double split = 0.0;
  std::int32_t left = -1;  // -1 on leaves
  std::int32_t right = -1;
  std::uint32_t size = 0;  // samples reaching a leaf

  bool leaf() const { return left < 0; }
};

using IsolationTree = std::vector<IsolationNode>;

namespace detail {

inline std::int32_t grow_isolation_tree(IsolationTree& tree, std::vector<double>& sample, std::size_t begin,
                                        std::size_t end, std::size_t depth, std::size_t max_depth, Rng& rng) {
  const auto id = static_cast<std::int32_t>(tree.size());
  tree.push_back({});
  const auto [lo, hi] = std::minmax_element(sample.begin() + begin, sample.begin() + end);
  if (end - begin <= 1 || depth >= max_depth || *lo == *hi) {
    tree[id].size = static_cast<std::uint32_t>(end - begin);
    return id;
  }
  double split = rng.uniform(*lo, *hi);
  if (split <= *lo) split = std::nextafter(*lo, *hi);
  const auto mid = std::partition(sample.begin() + begin, sample.begin() + end, [&](double v) { return v < split; });
  const auto cut = static_cast<std::size_t>(mid - sample.begin());
  tree[id].split = split;
  const auto l = grow_isolation_tree(tree, sample, begin, cut, depth + 1, max_depth, rng);
  const auto r = grow_isolation_tree(tree, sample, cut, end, depth + 1, max_depth, rng);
  tree[id].left = l;
  tree[id].right = r;
  return id;
}

inline double isolation_path_length(const IsolationTree& tree, double x) {
  std::size_t node = 0;
  double depth = 0.0;
  while (!tree[node].leaf()) {
    node = static_cast<std::size_t>(x < tree[node].split ? tree[node].left : tree[node].right);
    depth += 1.0;
  }
  return depth + average_path_length(tree[node].size);
}

// Log of the Gaussian kernel mixture at x, via log-sum-exp.
inline double kde_log_density(std::span<const double> sample, double h, double x) {
  double max_term = -std::numeric_limits<double>::infinity();
  for (double xi : sample) {
    const double z = (x - xi) / h;
    max_term = std::max(max_term, -0.5 * z * z);
  }
  double acc = 0.0;
  for (double xi : sample) {
    const double z = (x - xi) / h;
    acc += std::exp(-0.5 * z * z - max_term);
  }
  constexpr double log_sqrt_2pi = 0.91893853320467274178;
  return max_term + std::log(acc) - std::log(static_cast<double>(sample.size()) * h) - log_sqrt_2pi;
}

// Distances to the k nearest points of the sorted `sample`, skipping index
// `skip` (pass npos to keep all). Returns indices into `sample`; on equal
// distance the left neighbour is taken first.
inline std::vector<std::size_t> nearest_sorted(std::span<const double> sample, double x, std::size_t k,
                                               std::size_t skip) {
  const std::size_t n = sample.size();
  std::size_t right = static_cast<std::size_t>(std::lower_bound(sample.begin(), sample.end(), x) - sample.begin());
  std::ptrdiff_t left = static_cast<std::ptrdiff_t>(right) - 1;
  std::vector<std::size_t> out;
  out.reserve(k);
  while (out.size() < k && (left >= 0 || right < n)) {
    if (left >= 0 && static_cast<std::size_t>(left) == skip) {
      --left;
      continue;
    }
    if (right < n && right == skip) {
      ++right;
      continue;
    }
    const double dl = left >= 0 ? x - sample[static_cast<std::size_t>(left)] : std::numeric_limits<double>::infinity();
    const double dr = right < n ? sample[right] - x : std::numeric_limits<double>::infinity();
    if (dl <= dr) {
      out.push_back(static_cast<std::size_t>(left--));
    } else {
      out.push_back(right++);
    }
  }
  return out;
}

}  // namespace detail

/// A fitted unsupervised head. Immutable after `fit_detector`.
class Detector {
 public:
  DetectorKind kind() const { return kind_; }
  double bandwidth() const { return bandwidth_; }
  std::size_t neighbors() const { return neighbors_; }
  std::size_t subsample() const { return subsample_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<double>& train_sample() const { return sample_; }
  const std::vector<IsolationTree>& trees() const { return trees_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  double score(double x) const {
    switch (kind_) {
      case DetectorKind::kde: return -detail::kde_log_density(sample_, bandwidth_, x);
      case DetectorKind::lof: return lof_score(x);
      case DetectorKind::iforest: {
        double total = 0.0;
        for (const auto& t : trees_) total += detail::isolation_path_length(t, x);
        const double mean = total / static_cast<double>(trees_.size());
        return std::exp2(-mean / average_path_length(subsample_));
      }
    }
    return 0.0;
  }

  std::vector<double> score(std::span<const double> xs) const {
    std::vector<double> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = score(xs[i]);
    return out;
  }

  nlohmann::json to_json() const {
    nlohmann::json j{{"kind", to_string(kind_)}, {"seed", seed_}, {"train_sample", sample_}};
    switch (kind_) {
      case DetectorKind::kde: j["bandwidth"] = bandwidth_; break;
      case DetectorKind::lof: j["neighbors"] = neighbors_; break;
      case DetectorKind::iforest: {
        j["subsample"] = subsample_;
        auto& trees = j["trees"] = nlohmann::json::array();
        for (const auto& t : trees_) {
          auto jt = nlohmann::json::array();
          for (const auto& n : t) jt.push_back({n.split, n.left, n.right, n.size});
          trees.push_back(std::move(jt));
        }
        break;
      }
    }
    return j;
  }

  static Detector from_json(const nlohmann::json& j) {
    Detector d;
    d.kind_ = detector_kind_from_string(j.at("kind").get<std::string>());
    d.seed_ = j.at("seed").get<std::uint64_t>();
    d.sample_ = j.at("train_sample").get<std::vector<double>>();
    if (d.sample_.empty()) throw DataError("detector artifact has an empty training sample");
    switch (d.kind_) {
      case DetectorKind::kde: d.bandwidth_ = j.at("bandwidth").get<double>(); break;
      case DetectorKind::lof:
        d.neighbors_ = j.at("neighbors").get<std::size_t>();
        d.prepare_lof();
        break;
      case DetectorKind::iforest:
        d.subsample_ = j.at("subsample").get<std::size_t>();
        for (const auto& jt : j.at("trees")) {
          IsolationTree t;
          for (const auto& n : jt)
            t.push_back({n.at(0).get<double>(), n.at(1).get<std::int32_t>(), n.at(2).get<std::int32_t>(),
                         n.at(3).get<std::uint32_t>()});
          d.trees_.push_back(std::move(t));
        }
        break;
    }
    return d;
  }

  friend Detector fit_detector(DetectorKind kind, std::span<const double> train, const DetectorOptions& opts);

 private:
  void prepare_lof() {
    const std::size_t n = sample_.size();
    k_distance_.assign(n, 0.0);
    lrd_.assign(n, 0.0);
    std::vector<std::vector<std::size_t>> nbrs(n);
    for (std::size_t i = 0; i < n; ++i) {
      nbrs[i] = detail::nearest_sorted(sample_, sample_[i], neighbors_, i);
      k_distance_[i] = std::abs(sample_[nbrs[i].back()] - sample_[i]);
    }
    for (std::size_t i = 0; i < n; ++i) lrd_[i] = local_reachability(sample_[i], nbrs[i]);
  }

  double local_reachability(double x, const std::vector<std::size_t>& nbrs) const {
    double reach = 0.0;
    for (std::size_t o : nbrs) reach += std::max(k_distance_[o], std::abs(x - sample_[o]));
    return 1.0 / (reach / static_cast<double>(nbrs.size()) + 1e-10);
  }

  double lof_score(double x) const {
    const auto nbrs = detail::nearest_sorted(sample_, x, neighbors_, static_cast<std::size_t>(-1));
    double sum = 0.0;
    for (std::size_t o : nbrs) sum += lrd_[o];
    return sum / static_cast<double>(nbrs.size()) / local_reachability(x, nbrs);
  }

  DetectorKind kind_ = DetectorKind::kde;
  std::vector<double> sample_;  // sorted ascending
  double bandwidth_ = 0.0;
  std::size_t neighbors_ = 0;
  std::size_t subsample_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<IsolationTree> trees_;
  std::vector<double> k_distance_;
  std::vector<double> lrd_;
  std::vector<std::string> warnings_;
};

/// Silverman's rule, 1.06 · σ̂ · n^(-1/5), with σ̂ the n-1 sample deviation.
inline double silverman_bandwidth(double sigma, std::size_t n) {
  return 1.06 * sigma * std::pow(static_cast<double>(n), -0.2);
}

/// Fits a head on a training sample. The sample is sorted first, so KDE and
/// LOF scores do not depend on input order.
inline Detector fit_detector(DetectorKind kind, std::span<const double> train, const DetectorOptions& opts = {}) {
  for (double v : train)
    if (!std::isfinite(v)) throw DataError("detector training sample contains a non-finite value");
  Detector d;
  d.kind_ = kind;
  d.seed_ = opts.seed;
  d.sample_.assign(train.begin(), train.end());
  std::sort(d.sample_.begin(), d.sample_.end());
  const std::size_t n = d.sample_.size();

  switch (kind) {
    case DetectorKind::kde: {
      if (n < 2) throw DataError("kde needs at least 2 training values");
      const double mean = std::accumulate(d.sample_.begin(), d.sample_.end(), 0.0) / static_cast<double>(n);
      double ss = 0.0;
      for (double v : d.sample_) ss += (v - mean) * (v - mean);
      const double sigma = std::sqrt(ss / static_cast<double>(n - 1));
      if (sigma > 0.0) {
        d.bandwidth_ = silverman_bandwidth(sigma, n);
      } else {
        d.bandwidth_ = 1e-6 * std::max(1.0, std::abs(mean));
        d.warnings_.push_back("kde: training sample has zero spread; bandwidth set to " +
                              std::to_string(d.bandwidth_));
      }
      break;
    }
    case DetectorKind::lof: {
      if (n < 2) throw DataError("lof needs at least 2 training values");
      if (opts.lof_neighbors < 1) throw ConfigError("lof neighbor count must be at least 1");
      d.neighbors_ = std::min(opts.lof_neighbors, n - 1);
      d.prepare_lof();
      break;
    }
    case DetectorKind::iforest: {
      const std::size_t psi = opts.iforest_subsample == 0 ? std::min<std::size_t>(256, n) : opts.iforest_subsample;
      if (n < 2 || n < psi)
        throw DataError("isolation forest needs at least " + std::to_string(std::max<std::size_t>(psi, 2)) +
                        " training values, got " + std::to_string(n));
      if (opts.iforest_trees < 1) throw ConfigError("isolation forest needs at least one tree");
      d.subsample_ = psi;
      const auto max_depth = static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(std::max<std::size_t>(psi, 2)))));
      Rng rng(opts.seed);
      std::vector<double> pool = d.sample_;
      for (std::size_t t = 0; t < opts.iforest_trees; ++t) {
        // Partial Fisher-Yates draws psi distinct positions without replacement.
        for (std::size_t i = 0; i < psi; ++i) std::swap(pool[i], pool[i + rng.below(n - i)]);
        std::vector<double> sub(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(psi));
        IsolationTree tree;
        detail::grow_isolation_tree(tree, sub, 0, sub.size(), 0, max_depth, rng);
        d.trees_.push_back(std::move(tree));
      }
      break;
    }
  }
  return d;
}

// ---------------------------------------------------------------------------
// Thresholding

/// Flags the ceil(contamination · n) highest scores; equal scores are
/// flagged in index order.
inline std::vector<int> apply_threshold(std::span<const double> scores, double contamination) {
  if (!(contamination >= 0.0 && contamination <= 1.0)) throw ConfigError("contamination must lie in [0, 1]");
  const std::size_t n = scores.size();
  const double target = contamination * static_cast<double>(n);
  // Products such as 0.1 * 30 land a hair above the integer they denote.
  auto flagged = static_cast<std::size_t>(std::ceil(target - 1e-9 * std::max(1.0, target)));
  flagged = std::min(flagged, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<int> out(n, 0);
  for (std::size_t i = 0; i < flagged; ++i) out[order[i]] = 1;
  return out;
}

// ---------------------------------------------------------------------------
// Supervised heads

enum class SupervisedKind { stump, boosted_stumps };

inline std::string_view to_string(SupervisedKind k) {
  return k == SupervisedKind::stump ? "stump" : "boosted_stumps";
}

/// x >= threshold votes `polarity` (+1 means gpt), otherwise -polarity.
struct Stump {
  double threshold = 0.0;
  int polarity = 1;
  double weight = 1.0;
  double p_above = 1.0;  // gpt fraction of training samples at or above threshold
  double p_below = 0.0;

  int vote(double x) const { return x >= threshold ? polarity : -polarity; }
};

struct SupervisedHead {
  SupervisedKind kind = SupervisedKind::stump;
  std::vector<Stump> stumps;

  /// Stump: gpt fraction of the side x falls on. Boosted: Σ weight · vote.
  double score(double x) const {
    if (kind == SupervisedKind::stump) {
      const auto& s = stumps.front();
      return x >= s.threshold ? s.p_above : s.p_below;
    }
    double total = 0.0;
    for (const auto& s : stumps) total += s.weight * s.vote(x);
    return total;
  }

  std::vector<double> score(std::span<const double> xs) const {
    std::vector<double> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = score(xs[i]);
    return out;
  }

  int predict(double x) const {
    return kind == SupervisedKind::stump ? (stumps.front().vote(x) > 0 ? 1 : 0) : (score(x) > 0.0 ? 1 : 0);
  }
};

namespace detail {

struct WeightedSplit {
  double threshold = 0.0;
  double cost = std::numeric_limits<double>::infinity();
  int polarity = 1;
  double pos_above = 0.0, w_above = 0.0, pos_below = 0.0, w_below = 0.0;
};

// Scans midpoints between consecutive distinct values of `xs` (sorted by
// `order`). `gini` selects weighted Gini impurity, otherwise weighted
// misclassification. Strict improvement only, so the lowest threshold wins
// ties.
inline WeightedSplit best_split(std::span<const double> xs, std::span<const int> labels, std::span<const double> w,
                                const std::vector<std::size_t>& order, bool gini) {
  double total_w = 0.0, total_pos = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    total_w += w[i];
    if (labels[i]) total_pos += w[i];
  }
  WeightedSplit best;
  double below_w = 0.0, below_pos = 0.0;
  for (std::size_t r = 0; r + 1 < order.size(); ++r) {
    const std::size_t i = order[r];
    below_w += w[i];
    if (labels[i]) below_pos += w[i];
    const double cur = xs[i], next = xs[order[r + 1]];
    if (cur == next) continue;
    const double above_w = total_w - below_w, above_pos = total_pos - below_pos;
    const double t = cur + (next - cur) / 2.0;
    double cost;
    int polarity;
    if (gini) {
      auto g = [](double pos, double wt) {
        if (wt <= 0.0) return 0.0;
        const double p = pos / wt;
        return wt * 2.0 * p * (1.0 - p);
      };
      cost = g(below_pos, below_w) + g(above_pos, above_w);
      polarity = above_pos / std::max(above_w, 1e-300) >= below_pos / std::max(below_w, 1e-300) ? 1 : -1;
    } else {
      // polarity +1: above -> gpt. errors = negatives above + positives below
      const double err_pos = (above_w - above_pos) + below_pos;
      const double err_neg = total_w - err_pos;
      polarity = err_pos <= err_neg ? 1 : -1;
      cost = std::min(err_pos, err_neg);
    }
    if (cost < best.cost) best = {t, cost, polarity, above_pos, above_w, below_pos, below_w};
  }
  return best;
}

}  // namespace detail

struct SupervisedOptions {
  std::size_t rounds = 50;
};

/// Fits a Gini stump or discrete AdaBoost over stumps on (error, label)
/// pairs, label 1 = gpt.
inline SupervisedHead fit_supervised(SupervisedKind kind, std::span<const double> errors, std::span<const int> labels,
                                     const SupervisedOptions& opts = {}) {
  if (errors.size() != labels.size()) throw ConfigError("errors and labels differ in length");
  const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  if (positives == 0 || positives == labels.size()) throw DataError("supervised head needs both classes");
  std::vector<std::size_t> order(errors.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return errors[a] < errors[b]; });

  SupervisedHead head;
  head.kind = kind;
  std::vector<double> w(errors.size(), 1.0 / static_cast<double>(errors.size()));
  if (kind == SupervisedKind::stump) {
    const auto s = detail::best_split(errors, labels, w, order, true);
    if (!std::isfinite(s.cost)) throw DataError("all training errors are identical; no split exists");
    head.stumps.push_back({s.threshold, s.polarity, 1.0, s.pos_above / s.w_above, s.pos_below / s.w_below});
    return head;
  }

  for (std::size_t round = 0; round < opts.rounds; ++round) {
    const auto s = detail::best_split(errors, labels, w, order, false);
    if (!std::isfinite(s.cost)) break;
    double total = 0.0;
    for (double v : w) total += v;
    const double err = std::clamp(s.cost / total, 1e-10, 1.0 - 1e-10);
    if (err >= 0.5) break;
    Stump st{s.threshold, s.polarity, 0.5 * std::log((1.0 - err) / err), 0.0, 0.0};
    double z = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const int y = labels[i] ? 1 : -1;
      w[i] *= std::exp(-st.weight * y * st.vote(errors[i]));
      z += w[i];
    }
    for (double& v : w) v /= z;
    head.stumps.push_back(st);
  }
  if (head.stumps.empty()) throw DataError("boosting found no stump better than chance");
  return head;
}

}  // namespace gpten
