#include <gtest/gtest.h>

#include "gpten/oodscore.hpp"
#include "support/oracles.hpp"

using namespace gpten;

namespace {
const Matrix kE1{{1}, {0}};
}

TEST(ProjectSlice, HandExamples) {
  EXPECT_EQ(project_slice(Matrix(2, 2), kE1, kE1), Matrix(1, 1));
  EXPECT_EQ(project_slice(Matrix{{0, 0}, {0, 1}}, kE1, kE1), Matrix(1, 1));
  EXPECT_THROW(project_slice(Matrix(3, 3), kE1, kE1), ConfigError);
}

TEST(ReconstructSlice, HandExamples) {
  EXPECT_EQ(reconstruct_slice(Matrix(1, 1), kE1, kE1), Matrix(2, 2));
  EXPECT_EQ(reconstruct_slice(Matrix{{3}}, kE1, kE1), Matrix({{3, 0}, {0, 0}}));
}

TEST(ReconstructionError, HandExamples) {
  EXPECT_EQ(reconstruction_error(Matrix(2, 2), kE1, kE1), 0.0);
  EXPECT_DOUBLE_EQ(reconstruction_error(Matrix{{0, 0}, {0, 1}}, kE1, kE1), 1.0);
}

TEST(ProjectSlice, OrthonormalRowFactor) {
  // With orthonormal A and S = A·Y·Bᵀ the projection is Y·(BᵀB).
  Rng rng(6);
  const Svd d = svd(oracle::random_matrix(7, 3, rng));
  const Matrix& a = d.u;
  const Matrix b = oracle::random_matrix(7, 3, rng);
  const Matrix y = oracle::random_matrix(3, 3, rng);
  EXPECT_LT(oracle::rel_diff(project_slice(a * y * b.transpose(), a, b), y * gram(b)), 1e-12);
}

TEST(ReconstructionError, ZeroForSlicesInTheFactorSpan) {
  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 3 + rng.below(15), r = 1 + rng.below(std::min<std::size_t>(5, m));
    const Matrix a = oracle::random_matrix(m, r, rng), b = oracle::random_matrix(m, r, rng);
    const Matrix s = a * oracle::random_matrix(r, r, rng) * b.transpose();
    EXPECT_LE(reconstruction_error(s, a, b), 1e-8 * frobenius_norm(s));
  }
}

TEST(SliceScorer, ProjectorPairIsIdempotent) {
  Rng rng(14);
  const Matrix a = oracle::random_matrix(9, 4, rng), b = oracle::random_matrix(9, 4, rng);
  const SliceScorer sc(a, b);
  const Matrix s = oracle::random_matrix(9, 9, rng);
  const Matrix once = sc.reconstruct(sc.project(s));
  const Matrix twice = sc.reconstruct(sc.project(once));
  EXPECT_LT(oracle::rel_diff(twice, once), 1e-8);
}

TEST(SliceScorer, SparseRouteMatchesDenseRoute) {
  Rng rng(15);
  std::vector<std::string> terms;
  for (int i = 0; i < 12; ++i) terms.push_back("t" + std::to_string(i));
  const Vocabulary v = Vocabulary::from_terms(terms);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t r = 1 + rng.below(6);
    const SliceScorer sc(oracle::random_matrix(12, r, rng), oracle::random_matrix(12, r, rng));
    TokenSeq doc;
    for (int i = 0; i < 40; ++i) doc.push_back(terms[rng.below(12)]);
    const Slice s = build_slice(doc, v, {});
    const double dense = reconstruction_error(s.to_matrix(), sc.a(), sc.b());
    EXPECT_NEAR(sc.error(s), dense, 1e-9 * std::max(1.0, dense));
    EXPECT_NEAR(sc.error(s.to_matrix()), dense, 1e-9 * std::max(1.0, dense));
  }
}

TEST(SliceScorer, IllConditionedFactorsStayBounded) {
  // Nearly parallel columns make A⁺ enormous; the error must still lie in
  // [0, ||S||].
  Rng rng(16);
  Matrix a = oracle::random_matrix(10, 3, rng);
  for (std::size_t i = 0; i < 10; ++i) a(i, 2) = a(i, 1) + 1e-9 * rng.uniform(-1, 1);
  const SliceScorer sc(a, oracle::random_matrix(10, 3, rng));
  std::vector<std::string> terms;
  for (int i = 0; i < 10; ++i) terms.push_back("w" + std::to_string(i));
  TokenSeq doc;
  for (int i = 0; i < 50; ++i) doc.push_back(terms[rng.below(10)]);
  const Slice s = build_slice(doc, Vocabulary::from_terms(terms), {});
  const double e = sc.error(s);
  EXPECT_GE(e, 0.0);
  EXPECT_LE(e, std::sqrt(s.squared_norm()) * (1.0 + 1e-12));
}

TEST(ScoreCorpus, ZeroSliceScoresZeroAndOrderIsKept) {
  const Vocabulary v = Vocabulary::from_terms({"aa", "bb", "cc"});
  const CoocOptions o;
  Rng rng(1);
  const SliceScorer sc(oracle::random_matrix(3, 1, rng), oracle::random_matrix(3, 1, rng));
  const std::vector<TokenSeq> docs{{"zz"}, {"aa", "bb", "cc", "aa"}, {"cc", "bb"}};
  const ErrorVector ev = score_corpus(docs, {5, 6, 7}, sc, geometry_fingerprint(v, o), v, o);
  EXPECT_EQ(ev.doc_ids, (std::vector<DocId>{5, 6, 7}));
  EXPECT_EQ(ev.values[0], 0.0);
  EXPECT_NEAR(ev.values[2], reconstruction_error(build_slice(docs[2], v, o).to_matrix(), sc.a(), sc.b()), 1e-12);
}

TEST(ScoreCorpus, ThreadCountDoesNotChangeValues) {
  std::vector<std::string> terms;
  for (int i = 0; i < 8; ++i) terms.push_back("t" + std::to_string(i));
  const Vocabulary v = Vocabulary::from_terms(terms);
  Rng rng(2);
  const SliceScorer sc(oracle::random_matrix(8, 3, rng), oracle::random_matrix(8, 3, rng));
  std::vector<TokenSeq> docs(25);
  std::vector<DocId> ids(25);
  for (std::size_t k = 0; k < docs.size(); ++k) {
    ids[k] = k;
    for (int i = 0; i < 30; ++i) docs[k].push_back(terms[rng.below(8)]);
  }
  const auto g = geometry_fingerprint(v, {});
  EXPECT_EQ(score_corpus(docs, ids, sc, g, v, {}, {false, 1}).values,
            score_corpus(docs, ids, sc, g, v, {}, {false, 4}).values);
}

TEST(ScoreCorpus, GeometryMismatchIsRejected) {
  const Vocabulary v = Vocabulary::from_terms({"aa", "bb"});
  CoocOptions trained;
  trained.window = 5;
  CoocOptions other = trained;
  other.window = 6;
  const SliceScorer sc(Matrix{{1}, {0}}, Matrix{{1}, {0}});
  EXPECT_THROW(score_corpus({{"aa", "bb"}}, {0}, sc, geometry_fingerprint(v, trained), v, other), FingerprintMismatch);
  const Vocabulary reordered = Vocabulary::from_terms({"bb", "aa"});
  EXPECT_THROW(score_corpus({{"aa", "bb"}}, {0}, sc, geometry_fingerprint(v, trained), reordered, trained),
               FingerprintMismatch);
}

TEST(ScoreCorpus, NormalizedErrorLiesInUnitInterval) {
  const Vocabulary v = Vocabulary::from_terms({"aa", "bb", "cc", "dd"});
  Rng rng(4);
  const SliceScorer sc(oracle::random_matrix(4, 2, rng), oracle::random_matrix(4, 2, rng));
  const ErrorVector ev =
      score_corpus({{"aa", "bb", "cc", "dd", "aa"}}, {0}, sc, geometry_fingerprint(v, {}), v, {}, {true, 1});
  EXPECT_GE(ev.values[0], 0.0);
  EXPECT_LE(ev.values[0], 1.0 + 1e-12);
}
