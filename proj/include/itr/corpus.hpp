#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cwctype>
#include <fstream>
#include <istream>
#include <locale>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "itr/error.hpp"
#include "itr/hash.hpp"
#include "itr/stopwords.hpp"

namespace itr {

// Half-open interval [begin, end).
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool operator==(const Span&) const = default;
};

// A lowercase unigram with its location in the source text. `bytes` indexes
// the UTF-8 string; `chars` indexes Unicode code points (the wire unit).
struct Token {
  std::string text;
  Span bytes;
  Span chars;
};

namespace detail {

struct Utf8Char {
  char32_t cp;
  std::size_t len;
};

inline Utf8Char decode_utf8(std::string_view s, std::size_t i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  auto cont = [&](std::size_t k) -> int {
    if (i + k >= s.size()) return -1;
    auto b = static_cast<unsigned char>(s[i + k]);
    return (b & 0xC0) == 0x80 ? (b & 0x3F) : -1;
  };
  if (b0 < 0x80) return {b0, 1};
  if ((b0 & 0xE0) == 0xC0) {
    int c1 = cont(1);
    if (c1 >= 0) {
      char32_t cp = ((b0 & 0x1Fu) << 6) | static_cast<char32_t>(c1);
      if (cp >= 0x80) return {cp, 2};
    }
  } else if ((b0 & 0xF0) == 0xE0) {
    int c1 = cont(1), c2 = cont(2);
    if (c1 >= 0 && c2 >= 0) {
      char32_t cp = ((b0 & 0x0Fu) << 12) | (static_cast<char32_t>(c1) << 6) | static_cast<char32_t>(c2);
      if (cp >= 0x800 && (cp < 0xD800 || cp > 0xDFFF)) return {cp, 3};
    }
  } else if ((b0 & 0xF8) == 0xF0) {
    int c1 = cont(1), c2 = cont(2), c3 = cont(3);
    if (c1 >= 0 && c2 >= 0 && c3 >= 0) {
      char32_t cp = ((b0 & 0x07u) << 18) | (static_cast<char32_t>(c1) << 12) |
                    (static_cast<char32_t>(c2) << 6) | static_cast<char32_t>(c3);
      if (cp >= 0x10000 && cp <= 0x10FFFF) return {cp, 4};
    }
  }
  return {0xFFFD, 1};
}

inline void encode_utf8(char32_t cp, std::string& out) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

// Non-ASCII classification goes through the C.UTF-8 wide ctype facet. When
// that locale is unavailable every non-ASCII code point counts as a letter.
inline const std::ctype<wchar_t>* unicode_ctype() {
  static const std::ctype<wchar_t>* facet = []() -> const std::ctype<wchar_t>* {
    for (const char* name : {"C.UTF-8", "C.utf8", "en_US.UTF-8"}) {
      try {
        static const std::locale loc(name);
        return &std::use_facet<std::ctype<wchar_t>>(loc);
      } catch (const std::runtime_error&) {
      }
    }
    return nullptr;
  }();
  return facet;
}

inline bool is_word_char(char32_t cp) {
  if (cp < 0x80) {
    return (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z') || (cp >= '0' && cp <= '9');
  }
  if (cp == 0xFFFD) return false;
  if (const auto* f = unicode_ctype(); f != nullptr && sizeof(wchar_t) >= 4) {
    return f->is(std::ctype_base::alnum, static_cast<wchar_t>(cp));
  }
  return true;
}

inline char32_t to_lower(char32_t cp) {
  if (cp < 0x80) return (cp >= 'A' && cp <= 'Z') ? cp + 32 : cp;
  if (const auto* f = unicode_ctype(); f != nullptr && sizeof(wchar_t) >= 4) {
    return static_cast<char32_t>(f->tolower(static_cast<wchar_t>(cp)));
  }
  return cp;
}

}  // namespace detail

// Maximal runs of letters/digits, lowercased. Order follows the text.
inline std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> out;
  std::size_t i = 0, ci = 0;
  bool in_word = false;
  Token cur;
  while (i < text.size()) {
    auto [cp, len] = detail::decode_utf8(text, i);
    if (detail::is_word_char(cp)) {
      if (!in_word) {
        cur = Token{{}, {i, i}, {ci, ci}};
        in_word = true;
      }
      detail::encode_utf8(detail::to_lower(cp), cur.text);
      cur.bytes.end = i + len;
      cur.chars.end = ci + 1;
    } else if (in_word) {
      out.push_back(std::move(cur));
      in_word = false;
    }
    i += len;
    ++ci;
  }
  if (in_word) out.push_back(std::move(cur));
  return out;
}

inline std::vector<Token> remove_stopwords(std::vector<Token> tokens) {
  std::erase_if(tokens, [](const Token& t) { return is_stopword(t.text); });
  return tokens;
}

inline std::vector<Token> content_tokens(std::string_view text) { return remove_stopwords(tokenize(text)); }

// Length of a UTF-8 string in code points, using the tokenizer's decoding.
inline std::size_t codepoint_length(std::string_view text) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < text.size(); i += detail::decode_utf8(text, i).len) ++n;
  return n;
}

struct Document {
  std::string id;
  std::string text;
  std::optional<std::size_t> label;  // zero-based class index; shown as label + 1
};

struct LabeledCorpus {
  std::vector<Document> docs;
  std::vector<std::string> label_names;

  std::size_t num_classes() const { return label_names.size(); }
};

// ---------------------------------------------------------------------------
// TSV dataset format: header `id\tlabel\ttext`, `\t` `\n` `\\` escapes in text.

inline std::string escape_tsv_field(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\\': out += "\\\\"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

inline std::string unescape_tsv_field(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size()) {
      char n = s[i + 1];
      if (n == 't') { out.push_back('\t'); ++i; continue; }
      if (n == 'n') { out.push_back('\n'); ++i; continue; }
      if (n == 'r') { out.push_back('\r'); ++i; continue; }
      if (n == '\\') { out.push_back('\\'); ++i; continue; }
    }
    out.push_back(s[i]);
  }
  return out;
}

namespace detail {

inline std::optional<long> parse_positive_int(std::string_view s) {
  long v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || v < 1) return std::nullopt;
  return v;
}

inline std::string trim(std::string_view s) {
  auto ws = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && ws(s.back())) s.remove_suffix(1);
  return std::string(s);
}

}  // namespace detail

// Reads a dataset. Labels that are all integers >= 1 map to index value-1 and
// names "1".."K"; otherwise label strings are indexed in first-seen order.
// When `known_labels` is given (e.g. from a trained model) labels are mapped
// onto it, and an unknown label is a parse error.
inline LabeledCorpus read_tsv(std::istream& in, const std::vector<std::string>* known_labels = nullptr,
                              std::string_view source = "<stream>") {
  std::string line;
  if (!std::getline(in, line)) fail(Errc::ParseError, std::string(source) + ": empty dataset (missing header)");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "id\tlabel\ttext") {
    fail(Errc::ParseError, std::string(source) + ": expected header 'id<TAB>label<TAB>text'");
  }
  struct Raw {
    std::string id, label, text;
  };
  std::vector<Raw> rows;
  std::set<std::string> seen_ids;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto t1 = line.find('\t');
    auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t2 == std::string::npos || line.find('\t', t2 + 1) != std::string::npos) {
      fail(Errc::ParseError, std::string(source) + ":" + std::to_string(lineno) + ": expected 3 tab-separated fields");
    }
    Raw r{line.substr(0, t1), line.substr(t1 + 1, t2 - t1 - 1), unescape_tsv_field(line.substr(t2 + 1))};
    if (r.id.empty()) fail(Errc::ParseError, std::string(source) + ":" + std::to_string(lineno) + ": empty id");
    if (!seen_ids.insert(r.id).second) {
      fail(Errc::ParseError, std::string(source) + ":" + std::to_string(lineno) + ": duplicate id '" + r.id + "'");
    }
    if (detail::trim(r.text).empty()) {
      fail(Errc::ParseError, std::string(source) + ":" + std::to_string(lineno) + ": empty text for '" + r.id + "'");
    }
    rows.push_back(std::move(r));
  }

  LabeledCorpus corpus;
  if (known_labels != nullptr) {
    corpus.label_names = *known_labels;
    std::unordered_map<std::string, std::size_t> by_name;
    for (std::size_t k = 0; k < known_labels->size(); ++k) by_name.emplace((*known_labels)[k], k);
    for (auto& r : rows) {
      Document d{std::move(r.id), std::move(r.text), std::nullopt};
      if (!r.label.empty()) {
        if (auto it = by_name.find(r.label); it != by_name.end()) {
          d.label = it->second;
        } else {
          fail(Errc::ParseError, std::string(source) + ": label '" + r.label + "' of '" + d.id +
                                     "' is not one of the model's labels");
        }
      }
      corpus.docs.push_back(std::move(d));
    }
    return corpus;
  }

  bool all_int = true;
  long max_label = 0;
  for (const auto& r : rows) {
    if (r.label.empty()) continue;
    auto v = detail::parse_positive_int(r.label);
    if (!v) {
      all_int = false;
      break;
    }
    max_label = std::max(max_label, *v);
  }
  if (all_int) {
    for (long k = 1; k <= max_label; ++k) corpus.label_names.push_back(std::to_string(k));
    for (auto& r : rows) {
      Document d{std::move(r.id), std::move(r.text), std::nullopt};
      if (!r.label.empty()) d.label = static_cast<std::size_t>(*detail::parse_positive_int(r.label) - 1);
      corpus.docs.push_back(std::move(d));
    }
  } else {
    std::unordered_map<std::string, std::size_t> by_name;
    for (auto& r : rows) {
      Document d{std::move(r.id), std::move(r.text), std::nullopt};
      if (!r.label.empty()) {
        auto [it, inserted] = by_name.emplace(r.label, corpus.label_names.size());
        if (inserted) corpus.label_names.push_back(r.label);
        d.label = it->second;
      }
      corpus.docs.push_back(std::move(d));
    }
  }
  return corpus;
}

inline LabeledCorpus read_tsv_file(const std::string& path, const std::vector<std::string>* known_labels = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::IoError, "cannot open dataset '" + path + "'");
  return read_tsv(in, known_labels, path);
}

inline void write_tsv(std::ostream& out, const LabeledCorpus& corpus) {
  out << "id\tlabel\ttext\n";
  for (const auto& d : corpus.docs) {
    out << d.id << '\t' << (d.label ? corpus.label_names.at(*d.label) : std::string{}) << '\t'
        << escape_tsv_field(d.text) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Vocabulary and TF-IDF.

class VocabularyIndex {
 public:
  VocabularyIndex() = default;

  // `terms` must be sorted and unique.
  explicit VocabularyIndex(std::vector<std::string> terms) : terms_(std::move(terms)) {
    index_.reserve(terms_.size());
    for (std::size_t i = 0; i < terms_.size(); ++i) {
      if (i > 0 && !(terms_[i - 1] < terms_[i])) {
        fail(Errc::ParseError, "vocabulary terms must be strictly increasing");
      }
      index_.emplace(terms_[i], i);
    }
  }

  std::size_t size() const { return terms_.size(); }
  const std::vector<std::string>& terms() const { return terms_; }
  const std::string& term(std::size_t pos) const { return terms_.at(pos); }

  std::optional<std::size_t> find(std::string_view term) const {
    if (auto it = index_.find(std::string(term)); it != index_.end()) return it->second;
    return std::nullopt;
  }

  std::uint64_t checksum() const {
    Fnv1a h;
    for (const auto& t : terms_) {
      h.update(t);
      h.update("\n");
    }
    return h.value();
  }

 private:
  std::vector<std::string> terms_;
  std::unordered_map<std::string, std::size_t> index_;
};

namespace detail {

inline std::map<std::string, std::size_t> document_frequencies(const std::vector<Document>& docs) {
  std::map<std::string, std::size_t> df;
  for (const auto& d : docs) {
    std::set<std::string> uniq;
    for (auto& t : content_tokens(d.text)) uniq.insert(std::move(t.text));
    for (const auto& t : uniq) ++df[t];
  }
  return df;
}

}  // namespace detail

// Post-stopword unigrams across the corpus, sorted. Terms occurring in fewer
// than `min_df` documents are pruned.
inline VocabularyIndex build_vocabulary(const std::vector<Document>& docs, std::size_t min_df = 1) {
  if (docs.empty()) fail(Errc::EmptyVocabulary, "cannot build a vocabulary from an empty corpus");
  std::vector<std::string> terms;
  for (auto& [term, df] : detail::document_frequencies(docs)) {
    if (df >= min_df) terms.push_back(term);
  }
  if (terms.empty()) fail(Errc::EmptyVocabulary, "no tokens survive stopword removal");
  return VocabularyIndex(std::move(terms));
}

// Smoothed idf: ln((1 + N) / (1 + df)) + 1.
inline std::vector<double> compute_idf(const std::vector<Document>& docs, const VocabularyIndex& vocab) {
  std::vector<std::size_t> df(vocab.size(), 0);
  for (const auto& d : docs) {
    std::set<std::size_t> uniq;
    for (const auto& t : content_tokens(d.text)) {
      if (auto pos = vocab.find(t.text)) uniq.insert(*pos);
    }
    for (auto pos : uniq) ++df[pos];
  }
  const double n = static_cast<double>(docs.size());
  std::vector<double> idf(vocab.size());
  for (std::size_t i = 0; i < idf.size(); ++i) {
    idf[i] = std::log((1.0 + n) / (1.0 + static_cast<double>(df[i]))) + 1.0;
  }
  return idf;
}

// Sparse vector with entries sorted by feature position.
struct FeatureVector {
  struct Entry {
    std::size_t feature;
    double value;
    bool operator==(const Entry&) const = default;
  };
  std::vector<Entry> entries;

  double get(std::size_t feature) const {
    auto it = std::lower_bound(entries.begin(), entries.end(), feature,
                               [](const Entry& e, std::size_t f) { return e.feature < f; });
    return (it != entries.end() && it->feature == feature) ? it->value : 0.0;
  }
  double norm() const {
    double s = 0;
    for (const auto& e : entries) s += e.value * e.value;
    return std::sqrt(s);
  }
  bool empty() const { return entries.empty(); }
  bool operator==(const FeatureVector&) const = default;
};

struct FeatureMatrix {
  std::size_t cols = 0;
  std::vector<FeatureVector> rows;

  std::size_t num_rows() const { return rows.size(); }

  static FeatureMatrix from_dense(const std::vector<std::vector<double>>& dense) {
    FeatureMatrix m;
    m.cols = dense.empty() ? 0 : dense.front().size();
    for (const auto& r : dense) {
      if (r.size() != m.cols) fail(Errc::DimensionMismatch, "ragged dense matrix");
      FeatureVector v;
      for (std::size_t j = 0; j < r.size(); ++j) {
        if (r[j] != 0.0) v.entries.push_back({j, r[j]});
      }
      m.rows.push_back(std::move(v));
    }
    return m;
  }
};

// Frozen featurization: vocabulary + idf fitted on a training corpus.
class Featurizer {
 public:
  Featurizer() = default;
  Featurizer(VocabularyIndex vocab, std::vector<double> idf) : vocab_(std::move(vocab)), idf_(std::move(idf)) {
    if (idf_.size() != vocab_.size()) fail(Errc::DimensionMismatch, "idf length differs from vocabulary size");
  }

  static Featurizer fit(const std::vector<Document>& docs, std::size_t min_df = 1) {
    auto vocab = build_vocabulary(docs, min_df);
    auto idf = compute_idf(docs, vocab);
    return Featurizer(std::move(vocab), std::move(idf));
  }

  const VocabularyIndex& vocabulary() const { return vocab_; }
  const std::vector<double>& idf() const { return idf_; }
  std::size_t dimension() const { return vocab_.size(); }

  // Feature position for each in-vocabulary content token, in text order.
  std::vector<std::pair<Token, std::size_t>> vocabulary_tokens(std::string_view text) const {
    std::vector<std::pair<Token, std::size_t>> out;
    for (auto& t : content_tokens(text)) {
      if (auto pos = vocab_.find(t.text)) out.emplace_back(std::move(t), *pos);
    }
    return out;
  }

  // counts[feature] -> raw term frequency; result is tf * idf, L2 normalized.
  FeatureVector from_counts(const std::map<std::size_t, double>& counts) const {
    FeatureVector v;
    double sq = 0;
    for (auto [f, c] : counts) {
      if (c <= 0) continue;
      double w = c * idf_[f];
      v.entries.push_back({f, w});
      sq += w * w;
    }
    if (sq > 0) {
      double inv = 1.0 / std::sqrt(sq);
      for (auto& e : v.entries) e.value *= inv;
    }
    return v;
  }

  FeatureVector featurize(std::string_view text) const {
    std::map<std::size_t, double> counts;
    for (const auto& [tok, pos] : vocabulary_tokens(text)) counts[pos] += 1.0;
    return from_counts(counts);
  }
  FeatureVector featurize(const Document& doc) const { return featurize(doc.text); }

  FeatureMatrix featurize_all(const std::vector<Document>& docs) const {
    FeatureMatrix m;
    m.cols = dimension();
    m.rows.reserve(docs.size());
    for (const auto& d : docs) m.rows.push_back(featurize(d));
    return m;
  }

 private:
  VocabularyIndex vocab_;
  std::vector<double> idf_;
};

}  // namespace itr
