#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace qfsum {

// ---------------------------------------------------------------------------
// Sentence splitting
//
// Rule set, applied left to right:
//   1. A whitespace run containing two or more newlines always ends a sentence.
//   2. A run of terminal marks [.!?], optionally followed by closing quotes or
//      brackets, ends a sentence when followed by whitespace or end of text...
//   3. ...unless the word carrying a final '.' is a listed abbreviation
//      (case-insensitive, e.g. "Dr.", "e.g."),
//   4. ...or the mark is a single '.' and the next visible character is a
//      lowercase letter.
// Sentences are trimmed and internal whitespace runs collapse to one space.
// ---------------------------------------------------------------------------

struct SentenceRules {
  std::vector<std::string> abbreviations;  // lowercase, with trailing '.'

  static const SentenceRules& defaults();
};

std::vector<std::string> split_sentences(std::string_view text);
std::vector<std::string> split_sentences(std::string_view text, const SentenceRules& rules);

/// Collapses whitespace runs to a single space and trims.
std::string collapse_whitespace(std::string_view text);

/// Equality key for "unique sentences": lowercase, whitespace-collapsed.
std::string fingerprint(std::string_view sentence);

/// Lowercased model tokens: runs of alphanumerics (bytes >= 0x80 count as
/// alphanumeric) and single punctuation characters.
std::vector<std::string> word_pieces(std::string_view sentence);

/// Lowercased TF-IDF terms: alphanumeric runs of length >= 2. Punctuation and
/// single characters are dropped.
std::vector<std::string> tfidf_terms(std::string_view text);

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

struct SpecialTokens {
  static constexpr int cls = 0;
  static constexpr int sep = 1;
  static constexpr int pad = 2;
  static constexpr int unk = 3;
  static constexpr int count = 4;
};

class Vocabulary {
 public:
  Vocabulary();

  /// Ids are dense: specials first, then tokens by descending frequency with
  /// ties broken lexicographically.
  static Vocabulary build(const std::vector<std::string>& texts, std::size_t max_size = 30000,
                          std::size_t min_frequency = 1);
  static Vocabulary from_tokens(std::vector<std::string> tokens_in_id_order);

  int id(std::string_view token) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

std::vector<int> tokenize(std::string_view sentence, const Vocabulary& vocab,
                          std::size_t max_tokens = 64);

// ---------------------------------------------------------------------------
// TF-IDF
// ---------------------------------------------------------------------------

using SparseVector = Eigen::SparseVector<double>;

class TfidfModel {
 public:
  /// idf(t) = ln((1 + N) / (1 + df(t))) + 1 over the fitted documents.
  static TfidfModel fit(const std::vector<std::string>& documents);

  /// Raw term counts times idf, L2-normalised. Zero vector when no term is
  /// in the vocabulary.
  SparseVector vector(std::string_view text) const;

  std::size_t size() const { return terms_.size(); }
  std::size_t document_count() const { return documents_; }
  double idf(std::string_view term) const;
  int index(std::string_view term) const;
  const std::vector<std::string>& terms() const { return terms_; }

  void save(const std::filesystem::path& path) const;
  static TfidfModel load(const std::filesystem::path& path);

  friend bool operator==(const TfidfModel& a, const TfidfModel& b) {
    return a.documents_ == b.documents_ && a.terms_ == b.terms_ && a.idf_ == b.idf_;
  }

 private:
  void reindex();

  std::size_t documents_ = 0;
  std::vector<std::string> terms_;  // sorted
  std::vector<double> idf_;
  std::unordered_map<std::string, int> index_;
};

/// u.v / (|u||v|), or 0 when either norm is zero.
template <class A, class B>
double cosine(const Eigen::MatrixBase<A>& u, const Eigen::MatrixBase<B>& v) {
  const double nu = static_cast<double>(u.norm());
  const double nv = static_cast<double>(v.norm());
  if (nu == 0.0 || nv == 0.0) return 0.0;
  return static_cast<double>(u.cwiseProduct(v).sum()) / (nu * nv);
}

double cosine(const SparseVector& u, const SparseVector& v);

}  // namespace qfsum
