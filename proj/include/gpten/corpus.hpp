#pragma once

// Labeled text ingestion, tokenization, the human-only vocabulary, and
// stratified cross-validation plans.

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gpten/error.hpp"
#include "gpten/random.hpp"

namespace gpten {

using DocId = std::size_t;

enum class Label { human, gpt, unlabeled };

inline std::string_view to_string(Label label) {
  switch (label) {
    case Label::human: return "human";
    case Label::gpt: return "gpt";
    case Label::unlabeled: return "unlabeled";
  }
  return "unlabeled";
}

struct Document {
  DocId id = 0;
  std::string text;
  Label label = Label::unlabeled;
};

class Corpus {
 public:
  Corpus() = default;

  /// Ids are reassigned to positions so that `docs()[i].id == i`.
  explicit Corpus(std::vector<Document> docs) : docs_(std::move(docs)) {
    for (std::size_t i = 0; i < docs_.size(); ++i) {
      docs_[i].id = i;
      switch (docs_[i].label) {
        case Label::human: ++n_human_; break;
        case Label::gpt: ++n_gpt_; break;
        case Label::unlabeled: ++n_unlabeled_; break;
      }
    }
  }

  const std::vector<Document>& docs() const { return docs_; }
  const Document& operator[](DocId id) const { return docs_.at(id); }
  std::size_t size() const { return docs_.size(); }
  std::size_t n_human() const { return n_human_; }
  std::size_t n_gpt() const { return n_gpt_; }
  std::size_t n_unlabeled() const { return n_unlabeled_; }

  std::vector<DocId> ids_with(Label label) const {
    std::vector<DocId> out;
    for (const auto& d : docs_)
      if (d.label == label) out.push_back(d.id);
    return out;
  }

 private:
  std::vector<Document> docs_;
  std::size_t n_human_ = 0;
  std::size_t n_gpt_ = 0;
  std::size_t n_unlabeled_ = 0;
};

// ---------------------------------------------------------------------------
// CSV

/// Column names and label encoding of an input file. GRiD-style files use
/// `text,label` with `human` / `gpt`; other encodings are mapped here.
struct CsvSchema {
  std::string text_column = "text";
  std::string label_column = "label";
  std::map<std::string, Label> label_map = {{"human", Label::human}, {"gpt", Label::gpt}};
};

namespace detail {

struct CsvRecord {
  std::vector<std::string> fields;
  std::size_t line = 0;  // 1-based line on which the record starts
};

/// RFC-4180 reader: quoted fields may hold commas, doubled quotes and line
/// breaks. Accepts LF or CRLF line endings.
class CsvReader {
 public:
  explicit CsvReader(std::istream& in) : in_(in) {}

  std::optional<CsvRecord> next() {
    CsvRecord rec;
    rec.line = line_;
    std::string field;
    bool in_quotes = false;
    bool field_was_quoted = false;
    bool any = false;
    char c;
    while (in_.get(c)) {
      any = true;
      if (in_quotes) {
        if (c == '"') {
          if (in_.peek() == '"') {
            in_.get();
            field.push_back('"');
          } else {
            in_quotes = false;
          }
        } else {
          if (c == '\n') ++line_;
          field.push_back(c);
        }
        continue;
      }
      if (c == '"') {
        if (!field.empty() || field_was_quoted)
          throw DataError("line " + std::to_string(line_) + ": stray quote inside unquoted field");
        in_quotes = true;
        field_was_quoted = true;
      } else if (c == ',') {
        rec.fields.push_back(std::move(field));
        field.clear();
        field_was_quoted = false;
      } else if (c == '\r' && in_.peek() == '\n') {
        // swallowed; the '\n' terminates the record
      } else if (c == '\n') {
        ++line_;
        rec.fields.push_back(std::move(field));
        return rec;
      } else {
        field.push_back(c);
      }
    }
    if (in_quotes) throw DataError("line " + std::to_string(rec.line) + ": unterminated quoted field");
    if (!any) return std::nullopt;
    rec.fields.push_back(std::move(field));
    return rec;
  }

 private:
  std::istream& in_;
  std::size_t line_ = 1;
};

inline bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

inline std::string csv_quote(std::string_view s) {
  const bool needs = s.find_first_of(",\"\r\n") != std::string_view::npos;
  if (!needs) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace detail

/// Reads a labeled corpus. Rows whose text is blank are dropped; the
/// remaining rows keep file order as id order.
inline Corpus read_corpus(std::istream& in, const CsvSchema& schema = {}) {
  detail::CsvReader reader(in);
  auto header = reader.next();
  if (!header) throw EmptyCorpus("input has no header row");
  if (!header->fields.empty() && header->fields[0].rfind("\xEF\xBB\xBF", 0) == 0)
    header->fields[0].erase(0, 3);

  auto column = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header->fields.begin(), header->fields.end(), name);
    if (it == header->fields.end())
      throw DataError("header is missing column '" + name + "'");
    return static_cast<std::size_t>(it - header->fields.begin());
  };
  const std::size_t text_col = column(schema.text_column);
  const std::size_t label_col = column(schema.label_column);
  const std::size_t width = header->fields.size();

  std::vector<Document> docs;
  while (auto rec = reader.next()) {
    if (rec->fields.size() == 1 && rec->fields[0].empty()) continue;  // blank line
    if (rec->fields.size() != width)
      throw DataError("line " + std::to_string(rec->line) + ": expected " + std::to_string(width) +
                      " columns, found " + std::to_string(rec->fields.size()));
    const std::string& raw_label = rec->fields[label_col];
    auto it = schema.label_map.find(raw_label);
    if (it == schema.label_map.end())
      throw DataError("line " + std::to_string(rec->line) + ": unknown label '" + raw_label + "'");
    if (detail::is_blank(rec->fields[text_col])) continue;
    docs.push_back(Document{docs.size(), std::move(rec->fields[text_col]), it->second});
  }
  if (docs.empty()) throw EmptyCorpus("input has no data rows");
  return Corpus(std::move(docs));
}

inline Corpus load_corpus(const std::string& path, const CsvSchema& schema = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open corpus file '" + path + "'");
  return read_corpus(in, schema);
}

inline void write_corpus(std::ostream& out, const Corpus& corpus) {
  out << "text,label\n";
  for (const auto& d : corpus.docs())
    out << detail::csv_quote(d.text) << ',' << to_string(d.label) << '\n';
}

// ---------------------------------------------------------------------------
// Tokenization

using TokenSeq = std::vector<std::string>;

struct TokenizerOptions {
  bool lowercase = true;
  bool strip_urls = true;
  std::size_t min_length = 2;
};

namespace detail {

inline bool url_start(std::string_view text, std::size_t pos) {
  auto starts = [&](std::string_view prefix) {
    if (text.size() - pos < prefix.size()) return false;
    for (std::size_t k = 0; k < prefix.size(); ++k)
      if (std::tolower(static_cast<unsigned char>(text[pos + k])) != prefix[k]) return false;
    return true;
  };
  if (pos > 0 && !std::isspace(static_cast<unsigned char>(text[pos - 1])) && text[pos - 1] != '(' &&
      text[pos - 1] != '[' && text[pos - 1] != '<' && text[pos - 1] != '"' && text[pos - 1] != '\'')
    return false;
  return starts("http://") || starts("https://") || starts("www.");
}

}  // namespace detail

/// Lowercases, blanks out URLs, splits on runs of non-alphanumeric ASCII and
/// drops short tokens. Bytes outside ASCII act as separators.
inline TokenSeq tokenize(std::string_view text, const TokenizerOptions& opts = {}) {
  TokenSeq tokens;
  std::string current;
  auto flush = [&] {
    if (current.size() >= opts.min_length && !current.empty()) tokens.push_back(current);
    current.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (opts.strip_urls && detail::url_start(text, i)) {
      flush();
      while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
      continue;
    }
    const auto c = static_cast<unsigned char>(text[i]);
    if (c < 128 && std::isalnum(c)) {
      current.push_back(opts.lowercase ? static_cast<char>(std::tolower(c)) : static_cast<char>(c));
    } else {
      flush();
    }
  }
  flush();
  return tokens;
}

inline std::vector<TokenSeq> tokenize_corpus(const Corpus& corpus, const TokenizerOptions& opts = {}) {
  std::vector<TokenSeq> out;
  out.reserve(corpus.size());
  for (const auto& d : corpus.docs()) out.push_back(tokenize(d.text, opts));
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary

/// Frozen term -> index map. `sources()` lists the documents whose tokens
/// were counted, which is what the hygiene audit inspects.
class Vocabulary {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  Vocabulary() = default;

  /// Terms in index order.
  static Vocabulary from_terms(std::vector<std::string> terms, std::vector<DocId> sources = {}) {
    Vocabulary v;
    v.terms_ = std::move(terms);
    for (std::size_t i = 0; i < v.terms_.size(); ++i) {
      if (!v.index_.emplace(v.terms_[i], i).second)
        throw DataError("duplicate vocabulary term '" + v.terms_[i] + "'");
    }
    v.sources_ = std::move(sources);
    return v;
  }

  std::size_t size() const { return terms_.size(); }
  bool frozen() const { return true; }
  const std::vector<std::string>& terms() const { return terms_; }
  const std::vector<DocId>& sources() const { return sources_; }

  std::size_t index_of(std::string_view term) const {
    auto it = index_.find(std::string(term));
    return it == index_.end() ? npos : it->second;
  }
  bool contains(std::string_view term) const { return index_of(term) != npos; }

  /// FNV-1a over the ordered term list.
  std::uint64_t hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& t : terms_) {
      for (unsigned char c : t) h = (h ^ c) * 0x100000001b3ULL;
      h = (h ^ 0xffu) * 0x100000001b3ULL;
    }
    return h;
  }

 private:
  std::vector<std::string> terms_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<DocId> sources_;
};

namespace detail {

inline Vocabulary rank_terms(const std::map<std::string, std::size_t>& freq, std::size_t cap,
                             std::vector<DocId> sources) {
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  // map iteration is already lexicographic, so a stable sort on frequency
  // yields (frequency desc, term asc).
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.size() > cap) ranked.resize(cap);
  std::vector<std::string> terms;
  terms.reserve(ranked.size());
  for (auto& [term, count] : ranked) terms.push_back(term);
  return Vocabulary::from_terms(std::move(terms), std::move(sources));
}

}  // namespace detail

/// Counts terms over the human-labeled documents of `train_ids` only and
/// keeps the `cap` most frequent (ties broken lexicographically).
inline Vocabulary build_vocabulary(const Corpus& corpus, const std::vector<TokenSeq>& tokens,
                                   const std::vector<DocId>& train_ids, std::size_t cap) {
  if (cap < 1) throw ConfigError("vocabulary cap must be at least 1");
  if (tokens.size() != corpus.size()) throw ConfigError("token list does not match corpus size");
  std::map<std::string, std::size_t> freq;
  std::vector<DocId> sources;
  for (DocId id : train_ids) {
    if (id >= corpus.size()) throw ConfigError("training id " + std::to_string(id) + " out of range");
    if (corpus[id].label != Label::human) continue;
    sources.push_back(id);
    for (const auto& t : tokens[id]) ++freq[t];
  }
  if (sources.empty()) throw DataError("training split has no human-labeled documents");
  std::sort(sources.begin(), sources.end());
  return detail::rank_terms(freq, cap, std::move(sources));
}

inline Vocabulary build_vocabulary(const Corpus& corpus, const std::vector<DocId>& train_ids,
                                   std::size_t cap, const TokenizerOptions& opts = {}) {
  return build_vocabulary(corpus, tokenize_corpus(corpus, opts), train_ids, cap);
}

/// Label-agnostic variant used by the supervised TF-IDF baseline.
inline Vocabulary build_vocabulary_all_labels(const std::vector<TokenSeq>& tokens,
                                              const std::vector<DocId>& train_ids, std::size_t cap) {
  if (cap < 1) throw ConfigError("vocabulary cap must be at least 1");
  std::map<std::string, std::size_t> freq;
  for (DocId id : train_ids)
    for (const auto& t : tokens.at(id)) ++freq[t];
  std::vector<DocId> sources(train_ids.begin(), train_ids.end());
  std::sort(sources.begin(), sources.end());
  return detail::rank_terms(freq, cap, std::move(sources));
}

// ---------------------------------------------------------------------------
// Cross-validation plans

struct FoldPlan {
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> assignments;  // doc id -> fold

  std::vector<DocId> test_ids(std::size_t fold) const {
    std::vector<DocId> out;
    for (DocId id = 0; id < assignments.size(); ++id)
      if (assignments[id] == fold) out.push_back(id);
    return out;
  }
  std::vector<DocId> train_ids(std::size_t fold) const {
    std::vector<DocId> out;
    for (DocId id = 0; id < assignments.size(); ++id)
      if (assignments[id] != fold) out.push_back(id);
    return out;
  }
};

/// Stratified k-fold assignment: each label class is shuffled with `seed`
/// and dealt round-robin, continuing the deal position across classes so
/// fold sizes stay within one document of each other.
inline FoldPlan make_splits(const Corpus& corpus, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("fold count must be at least 2");
  if (corpus.n_human() < k || corpus.n_gpt() < k)
    throw ConfigError("fold count " + std::to_string(k) + " exceeds class size (human=" +
                      std::to_string(corpus.n_human()) + ", gpt=" + std::to_string(corpus.n_gpt()) + ")");
  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.assignments.assign(corpus.size(), 0);
  Rng rng(seed);
  std::size_t deal = 0;
  for (Label label : {Label::human, Label::gpt, Label::unlabeled}) {
    auto ids = corpus.ids_with(label);
    rng.shuffle(std::span<DocId>(ids));
    for (DocId id : ids) plan.assignments[id] = deal++ % k;
  }
  return plan;
}

inline nlohmann::json to_json(const FoldPlan& plan) {
  return nlohmann::json{{"seed", plan.seed}, {"k", plan.k}, {"assignments", plan.assignments}};
}

inline FoldPlan fold_plan_from_json(const nlohmann::json& j) {
  FoldPlan plan;
  plan.seed = j.at("seed").get<std::uint64_t>();
  plan.k = j.at("k").get<std::size_t>();
  plan.assignments = j.at("assignments").get<std::vector<std::size_t>>();
  for (auto f : plan.assignments)
    if (f >= plan.k) throw DataError("fold plan assigns a document to fold " + std::to_string(f));
  return plan;
}

}  // namespace gpten
