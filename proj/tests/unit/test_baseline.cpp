#include <gtest/gtest.h>

#include "gpten/baseline.hpp"
#include "gpten/synthetic.hpp"

using namespace gpten;

TEST(Tfidf, SmoothedIdfRawWeight) {
  // N = 2, "xx" appears three times in one document: 3 · (ln(3/2) + 1).
  const std::vector<TokenSeq> docs{{"xx", "xx", "xx", "yy"}, {"yy", "zz"}};
  const TfidfModel m = fit_tfidf(docs, {0, 1}, 10);
  const FeatureRow raw = tfidf_raw(docs[0], m);
  const auto idx = m.vocab.index_of("xx");
  double w = 0.0;
  for (const auto& [i, v] : raw)
    if (i == idx) w = v;
  EXPECT_NEAR(w, 4.2164, 5e-5);
  EXPECT_DOUBLE_EQ(w, 3.0 * (std::log(1.5) + 1.0));
}

TEST(Tfidf, AbsentTermsAndSingleTermRows) {
  const std::vector<TokenSeq> docs{{"aa", "bb"}, {"cc"}};
  const TfidfModel m = fit_tfidf(docs, {0, 1}, 10);
  const auto rows = tfidf_features({{"cc", "cc"}, {}}, m);
  ASSERT_EQ(rows[0].size(), 1u);
  EXPECT_EQ(rows[0][0].first, m.vocab.index_of("cc"));
  EXPECT_DOUBLE_EQ(rows[0][0].second, 1.0);
  EXPECT_TRUE(rows[1].empty());
}

TEST(Linear, GradientMatchesCentralDifferences) {
  Rng rng(4);
  std::vector<FeatureRow> rows;
  std::vector<int> labels;
  for (int i = 0; i < 5; ++i) {
    rows.push_back({{0, rng.uniform(-1, 1)}, {2, rng.uniform(-1, 1)}, {3, rng.uniform(-1, 1)}});
    labels.push_back(i % 2);
  }
  LinearModel m{{0.3, -0.2, 0.5, 0.1}, 0.05, {}};
  const double l2 = 1e-2;
  const LinearGradient g = linear_gradient(m, rows, labels, l2);
  const double h = 1e-6;
  for (std::size_t k = 0; k < m.weights.size(); ++k) {
    LinearModel up = m, down = m;
    up.weights[k] += h;
    down.weights[k] -= h;
    const double fd = (linear_loss(up, rows, labels, l2) - linear_loss(down, rows, labels, l2)) / (2 * h);
    EXPECT_NEAR(g.weights[k], fd, 1e-6 * std::max(1.0, std::abs(fd))) << k;
  }
  LinearModel up = m, down = m;
  up.bias += h;
  down.bias -= h;
  const double fd = (linear_loss(up, rows, labels, l2) - linear_loss(down, rows, labels, l2)) / (2 * h);
  EXPECT_NEAR(g.bias, fd, 1e-6 * std::max(1.0, std::abs(fd)));
}

TEST(Linear, SeparableToySetAndDeterminism) {
  std::vector<FeatureRow> rows;
  std::vector<int> labels;
  Rng rng(12);
  for (int i = 0; i < 40; ++i) {
    const int y = i % 2;
    const double x0 = (y ? 1.0 : -1.0) + rng.uniform(-0.5, 0.5), x1 = rng.uniform(-1, 1);
    rows.push_back({{0, x0}, {1, x1}});
    labels.push_back(y);
  }
  LinearOptions o;
  o.seed = 3;
  const LinearModel m = train_linear(rows, labels, 2, o);
  const auto p = predict_linear(m, rows, 2);
  for (std::size_t i = 0; i < rows.size(); ++i) EXPECT_EQ(p[i] >= 0.5 ? 1 : 0, labels[i]);
  EXPECT_EQ(train_linear(rows, labels, 2, o).weights, m.weights);
  EXPECT_THROW(train_linear(rows, std::vector<int>(40, 1), 2, o), DataError);
}

TEST(Linear, PredictionExamples) {
  const LinearModel zero{{0, 0, 0}, 0.0, {}};
  const std::vector<FeatureRow> rows{{{0, 1.0}, {2, -3.0}}, {}};
  for (double p : predict_linear(zero, rows, 3)) EXPECT_EQ(p, 0.5);

  // 0.5·2 - 1·1 + 2·0.25 + bias 0.1 = 0.6 > 0.
  const LinearModel m{{0.5, -1.0, 2.0}, 0.1, {}};
  const double s = predict_linear(m, std::vector<FeatureRow>{{{0, 2.0}, {1, 1.0}, {2, 0.25}}}, 3)[0];
  EXPECT_NEAR(s, 1.0 / (1.0 + std::exp(-0.6)), 1e-15);
  EXPECT_THROW(predict_linear(m, rows, 4), ConfigError);
}

TEST(Baseline, CrossValidatesWithoutTestLeakage) {
  SyntheticOptions so;
  so.n_human = 60;
  so.n_gpt = 20;
  const Corpus c = make_synthetic_corpus(so);
  PipelineConfig cfg;
  cfg.folds = 4;
  const Report r = cross_validate_baseline(c, cfg, make_splits(c, 4, 1));
  EXPECT_TRUE(r.audit_passed());
  EXPECT_NE(r.method.find("substitute"), std::string::npos);
  EXPECT_GT(r.auc, 0.5);
}
