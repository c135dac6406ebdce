#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "gpten/corpus.hpp"

using namespace gpten;

namespace {

Corpus parse(const std::string& csv, const CsvSchema& schema = {}) {
  std::istringstream in(csv);
  return read_corpus(in, schema);
}

Corpus labeled(std::size_t n_human, std::size_t n_gpt) {
  std::vector<Document> docs;
  for (std::size_t i = 0; i < n_human; ++i) docs.push_back({0, "human text " + std::to_string(i), Label::human});
  for (std::size_t i = 0; i < n_gpt; ++i) docs.push_back({0, "gpt text " + std::to_string(i), Label::gpt});
  return Corpus(std::move(docs));
}

}  // namespace

TEST(LoadCorpus, TwoRowsCountsLabels) {
  const Corpus c = parse("text,label\n\"hello world\",human\n\"foo bar\",gpt\n");
  EXPECT_EQ(c.size(), 2u);
  EXPECT_EQ(c.n_human(), 1u);
  EXPECT_EQ(c.n_gpt(), 1u);
  EXPECT_EQ(c[0].text, "hello world");
  EXPECT_EQ(c[1].label, Label::gpt);
  EXPECT_EQ(c[1].id, 1u);
}

TEST(LoadCorpus, HeaderOnlyIsEmptyCorpus) {
  EXPECT_THROW(parse("text,label\n"), EmptyCorpus);
  EXPECT_THROW(parse(""), DataError);
}

TEST(LoadCorpus, WrongColumnCountNamesTheLine) {
  try {
    parse("text,label\nok,human\nbroken\n");
    FAIL() << "expected a DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(LoadCorpus, UnknownLabelAndMissingColumn) {
  EXPECT_THROW(parse("text,label\nx y,robot\n"), DataError);
  EXPECT_THROW(parse("body,label\nx y,human\n"), DataError);
}

TEST(LoadCorpus, QuotedFieldsAndCustomSchema) {
  CsvSchema s;
  s.text_column = "body";
  s.label_column = "src";
  s.label_map = {{"0", Label::human}, {"1", Label::gpt}};
  const Corpus c = parse("id,body,src\n7,\"a, \"\"quoted\"\"\nline\",0\n8,plain,1\n", s);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[0].text, "a, \"quoted\"\nline");
  EXPECT_EQ(c[1].label, Label::gpt);
}

TEST(LoadCorpus, WriteThenReadRoundTrips) {
  const Corpus c = parse("text,label\n\"x, y\",human\n\"he said \"\"hi\"\"\",gpt\n");
  std::ostringstream out;
  write_corpus(out, c);
  const Corpus back = parse(out.str());
  ASSERT_EQ(back.size(), c.size());
  for (DocId i = 0; i < c.size(); ++i) {
    EXPECT_EQ(back[i].text, c[i].text);
    EXPECT_EQ(back[i].label, c[i].label);
  }
}

TEST(Tokenize, Examples) {
  EXPECT_EQ(tokenize("Hello, World!"), (TokenSeq{"hello", "world"}));
  EXPECT_EQ(tokenize("check https://x.com now"), (TokenSeq{"check", "now"}));
  EXPECT_EQ(tokenize("**bold** a text"), (TokenSeq{"bold", "text"}));
  EXPECT_TRUE(tokenize("").empty());
}

TEST(Tokenize, UrlOnlyStrippedAtTokenStart) {
  EXPECT_EQ(tokenize("see (www.example.org) here"), (TokenSeq{"see", "here"}));
  EXPECT_EQ(tokenize("nohttp://xy"), (TokenSeq{"nohttp", "xy"}));
}

TEST(Tokenize, RejoiningTokensIsAFixedPoint) {
  for (const std::string text : {"The quick, brown FOX -- jumps!", "a1 b2 c3 http://t.co/x ok", "éclair café 42"}) {
    const TokenSeq once = tokenize(text);
    std::string joined;
    for (const auto& t : once) joined += t + " ";
    EXPECT_EQ(tokenize(joined), once) << text;
  }
}

TEST(Vocabulary, FrequencyThenLexicographic) {
  const Corpus c(std::vector<Document>{{0, "aa bb", Label::human}, {0, "bb cc", Label::human}, {0, "dd ee", Label::gpt}});
  const Vocabulary v = build_vocabulary(c, {0, 1, 2}, 10);
  ASSERT_EQ(v.size(), 3u);
  EXPECT_EQ(v.index_of("bb"), 0u);
  EXPECT_EQ(v.index_of("aa"), 1u);
  EXPECT_EQ(v.index_of("cc"), 2u);
  EXPECT_EQ(v.index_of("dd"), Vocabulary::npos);
  EXPECT_EQ(v.sources(), (std::vector<DocId>{0, 1}));

  const Vocabulary one = build_vocabulary(c, {0, 1, 2}, 1);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one.terms().front(), "bb");
}

TEST(Vocabulary, GptOnlyTrainingSetIsAnError) {
  const Corpus c(std::vector<Document>{{0, "aa bb", Label::human}, {0, "dd ee", Label::gpt}});
  EXPECT_THROW(build_vocabulary(c, {1}, 10), DataError);
}

TEST(Vocabulary, HashDependsOnOrder) {
  EXPECT_NE(Vocabulary::from_terms({"a", "b"}).hash(), Vocabulary::from_terms({"b", "a"}).hash());
  EXPECT_EQ(Vocabulary::from_terms({"a", "b"}).hash(), Vocabulary::from_terms({"a", "b"}).hash());
}

TEST(MakeSplits, StratifiedAndDeterministic) {
  const Corpus c = labeled(10, 10);
  const FoldPlan p = make_splits(c, 2, 42);
  for (std::size_t f = 0; f < 2; ++f) {
    std::size_t h = 0, g = 0;
    for (DocId id : p.test_ids(f)) (c[id].label == Label::human ? h : g)++;
    EXPECT_EQ(h, 5u);
    EXPECT_EQ(g, 5u);
  }
  EXPECT_EQ(make_splits(c, 2, 42).assignments, p.assignments);
  EXPECT_NE(make_splits(c, 2, 43).assignments, p.assignments);
}

TEST(MakeSplits, FoldsPartitionTheCorpus) {
  const Corpus c = labeled(23, 11);
  const FoldPlan p = make_splits(c, 5, 1);
  std::set<DocId> seen;
  for (std::size_t f = 0; f < p.k; ++f) {
    const auto test = p.test_ids(f), train = p.train_ids(f);
    EXPECT_EQ(test.size() + train.size(), c.size());
    for (DocId id : test) EXPECT_TRUE(seen.insert(id).second);
  }
  EXPECT_EQ(seen.size(), c.size());
}

TEST(MakeSplits, PreconditionsAndJson) {
  EXPECT_THROW(make_splits(labeled(10, 10), 21, 0), ConfigError);
  EXPECT_THROW(make_splits(labeled(10, 10), 1, 0), ConfigError);
  const FoldPlan p = make_splits(labeled(6, 4), 3, 9);
  const FoldPlan back = fold_plan_from_json(to_json(p));
  EXPECT_EQ(back.assignments, p.assignments);
  EXPECT_EQ(back.k, p.k);
}
