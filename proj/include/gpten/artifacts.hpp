#pragma once

// On-disk artifacts: the binary model file, detector JSON and scores CSV.
// Every artifact carries the fingerprint of the config that produced it.
//
// model.bin layout (little-endian):
//   char[8]  magic "GPTENMD1"
//   u32      format version (1)
//   str      config fingerprint            (str = u64 length + bytes)
//   u64      geometry fingerprint
//   u64      window, u8 weighting, u8 include_diagonal
//   u8       lowercase, u8 strip_urls, u64 min_length
//   u64      M, u64 N, u64 r
//   f64      fit, u64 iterations
//   u64      vocabulary size, then one str per term in index order
//   u64      source count, then u64 document ids
//   f64[r]   lambda
//   f64[M*r] A, f64[M*r] B, f64[N*r] C   (row-major)

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gpten/cooc.hpp"
#include "gpten/corpus.hpp"
#include "gpten/cpd.hpp"
#include "gpten/detect.hpp"
#include "gpten/error.hpp"
#include "gpten/oodscore.hpp"

namespace gpten {

static_assert(std::endian::native == std::endian::little, "model.bin I/O assumes a little-endian host");

struct ModelArtifact {
  std::string fingerprint;
  TokenizerOptions tokenizer;
  CoocOptions cooc;
  Vocabulary vocab;
  CpModel model;
};

namespace detail {

class BinWriter {
 public:
  explicit BinWriter(std::ostream& out) : out_(out) {}
  template <class T>
  void pod(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void doubles(std::span<const double> v) {
    out_.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  }

 private:
  std::ostream& out_;
};

class BinReader {
 public:
  explicit BinReader(std::istream& in) : in_(in) {}
  template <class T>
  T pod() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in_) throw DataError("model file is truncated");
    return v;
  }
  std::uint64_t count(std::uint64_t limit) {
    const auto n = pod<std::uint64_t>();
    if (n > limit) throw DataError("model file holds an implausible length field");
    return n;
  }
  std::string str() {
    std::string s(count(std::uint64_t{1} << 20), '\0');
    in_.read(s.data(), static_cast<std::streamsize>(s.size()));
    if (!in_) throw DataError("model file is truncated");
    return s;
  }
  void doubles(std::span<double> v) {
    in_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (!in_) throw DataError("model file is truncated");
  }

 private:
  std::istream& in_;
};

inline constexpr char kModelMagic[8] = {'G', 'P', 'T', 'E', 'N', 'M', 'D', '1'};
inline constexpr std::uint32_t kModelVersion = 1;

}  // namespace detail

inline void write_model(std::ostream& out, const ModelArtifact& art) {
  const auto& m = art.model;
  detail::BinWriter w(out);
  out.write(detail::kModelMagic, sizeof detail::kModelMagic);
  w.pod(detail::kModelVersion);
  w.str(art.fingerprint);
  w.pod<std::uint64_t>(m.geometry);
  w.pod<std::uint64_t>(art.cooc.window);
  w.pod<std::uint8_t>(static_cast<std::uint8_t>(art.cooc.weighting));
  w.pod<std::uint8_t>(art.cooc.include_diagonal ? 1 : 0);
  w.pod<std::uint8_t>(art.tokenizer.lowercase ? 1 : 0);
  w.pod<std::uint8_t>(art.tokenizer.strip_urls ? 1 : 0);
  w.pod<std::uint64_t>(art.tokenizer.min_length);
  w.pod<std::uint64_t>(m.a.rows());
  w.pod<std::uint64_t>(m.c.rows());
  w.pod<std::uint64_t>(m.rank);
  w.pod<double>(m.fit);
  w.pod<std::uint64_t>(m.iterations_run);
  w.pod<std::uint64_t>(art.vocab.size());
  for (const auto& t : art.vocab.terms()) w.str(t);
  w.pod<std::uint64_t>(m.sources.size());
  for (DocId id : m.sources) w.pod<std::uint64_t>(id);
  w.doubles(m.lambda);
  w.doubles(m.a.values());
  w.doubles(m.b.values());
  w.doubles(m.c.values());
}

inline ModelArtifact read_model(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, detail::kModelMagic, sizeof magic) != 0)
    throw DataError("not a model file (bad magic)");
  detail::BinReader r(in);
  if (r.pod<std::uint32_t>() != detail::kModelVersion) throw DataError("unsupported model file version");
  ModelArtifact art;
  art.fingerprint = r.str();
  art.model.geometry = r.pod<std::uint64_t>();
  art.cooc.window = r.pod<std::uint64_t>();
  const auto weighting = r.pod<std::uint8_t>();
  if (weighting > 2) throw DataError("model file has an unknown weighting");
  art.cooc.weighting = static_cast<Weighting>(weighting);
  art.cooc.include_diagonal = r.pod<std::uint8_t>() != 0;
  art.tokenizer.lowercase = r.pod<std::uint8_t>() != 0;
  art.tokenizer.strip_urls = r.pod<std::uint8_t>() != 0;
  art.tokenizer.min_length = r.pod<std::uint64_t>();
  constexpr std::uint64_t kLimit = std::uint64_t{1} << 28;
  const auto m = r.count(kLimit), n = r.count(kLimit), rank = r.count(kLimit);
  if (m * rank > kLimit || n * rank > kLimit) throw DataError("model file dimensions are implausible");
  art.model.rank = rank;
  art.model.fit = r.pod<double>();
  art.model.iterations_run = r.pod<std::uint64_t>();
  std::vector<std::string> terms(r.count(kLimit));
  for (auto& t : terms) t = r.str();
  if (terms.size() != m) throw DataError("model vocabulary size does not match M");
  std::vector<DocId> sources(r.count(kLimit));
  for (auto& id : sources) id = r.pod<std::uint64_t>();
  art.vocab = Vocabulary::from_terms(std::move(terms));
  art.model.sources = std::move(sources);
  art.model.lambda.resize(rank);
  r.doubles(art.model.lambda);
  art.model.a = Matrix(m, rank);
  art.model.b = Matrix(m, rank);
  art.model.c = Matrix(n, rank);
  r.doubles(art.model.a.values());
  r.doubles(art.model.b.values());
  r.doubles(art.model.c.values());
  if (art.model.geometry != geometry_fingerprint(art.vocab, art.cooc))
    throw DataError("model file is internally inconsistent (geometry fingerprint)");
  return art;
}

inline void save_model(const std::string& path, const ModelArtifact& art) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  write_model(out, art);
}

inline ModelArtifact load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file '" + path + "'");
  return read_model(in);
}

// ---------------------------------------------------------------------------

inline nlohmann::json detector_artifact(const Detector& d, const std::string& fingerprint) {
  nlohmann::json j = d.to_json();
  j["fingerprint"] = fingerprint;
  return j;
}

/// Parses a detector artifact and rejects it unless it was produced under
/// `expected_fingerprint`.
inline Detector load_detector(const std::string& path, const std::string& expected_fingerprint) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open detector file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("detector file is not valid JSON: " + std::string(e.what()));
  }
  const std::string fp = j.value("fingerprint", "");
  if (fp != expected_fingerprint)
    throw FingerprintMismatch("detector fingerprint " + fp + " does not match model fingerprint " +
                              expected_fingerprint);
  try {
    return Detector::from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed detector file: " + std::string(e.what()));
  }
}

// ---------------------------------------------------------------------------

/// 17 significant digits, enough to round-trip any double.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// `# fingerprint: <hex>` comment line, then `doc_id,recon_error` rows.
inline void write_scores(std::ostream& out, const ErrorVector& ev, const std::string& fingerprint) {
  out << "# fingerprint: " << fingerprint << '\n';
  out << "doc_id,recon_error\n";
  for (std::size_t i = 0; i < ev.size(); ++i) out << ev.doc_ids[i] << ',' << format_double(ev.values[i]) << '\n';
}

struct ScoresFile {
  std::string fingerprint;
  ErrorVector errors;
};

inline ScoresFile read_scores(std::istream& in) {
  ScoresFile f;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.rfind("# fingerprint: ", 0) == 0) {
      f.fingerprint = line.substr(15);
      continue;
    }
    if (!header) {
      if (line != "doc_id,recon_error") throw DataError("scores file has an unexpected header");
      header = true;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw DataError("malformed scores row '" + line + "'");
    f.errors.doc_ids.push_back(std::stoull(line.substr(0, comma)));
    f.errors.values.push_back(std::stod(line.substr(comma + 1)));
  }
  return f;
}

}  // namespace gpten
