#include "qfsum/lexical.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>

#include "qfsum/util.hpp"

namespace qfsum {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }
bool is_terminal(char c) { return c == '.' || c == '!' || c == '?'; }
bool is_closing(char c) { return c == '"' || c == '\'' || c == ')' || c == ']' || c == '}'; }
bool is_opening(char c) { return c == '"' || c == '\'' || c == '(' || c == '[' || c == '{'; }
bool is_word_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }
char lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = lower(c);
  return out;
}

// The whitespace-delimited word ending at `end` (exclusive), stripped of
// opening punctuation, lowercased.
std::string word_before(std::string_view text, std::size_t end) {
  std::size_t begin = end;
  while (begin > 0 && !is_space(text[begin - 1])) --begin;
  while (begin < end && is_opening(text[begin])) ++begin;
  return to_lower(text.substr(begin, end - begin));
}

}  // namespace

const SentenceRules& SentenceRules::defaults() {
  static const SentenceRules rules{{
      "dr.", "mr.", "mrs.", "ms.", "prof.", "sr.", "jr.", "st.", "e.g.", "i.e.", "vs.", "approx.",
      "no.", "fig.", "pt.", "b.i.d.", "t.i.d.", "q.i.d.", "q.d.", "p.o.", "p.r.n.", "a.m.", "p.m.",
  }};
  return rules;
}

std::string collapse_whitespace(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += c;
  }
  return out;
}

std::string fingerprint(std::string_view sentence) { return to_lower(collapse_whitespace(sentence)); }

std::vector<std::string> split_sentences(std::string_view text) {
  return split_sentences(text, SentenceRules::defaults());
}

std::vector<std::string> split_sentences(std::string_view text, const SentenceRules& rules) {
  std::vector<std::string> out;
  auto emit = [&](std::size_t begin, std::size_t end) {
    auto s = collapse_whitespace(text.substr(begin, end - begin));
    if (!s.empty()) out.push_back(std::move(s));
  };
  const auto is_abbreviation = [&](const std::string& word) {
    return std::find(rules.abbreviations.begin(), rules.abbreviations.end(), word) !=
           rules.abbreviations.end();
  };

  std::size_t start = 0;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    const char c = text[i];
    if (is_space(c)) {
      std::size_t j = i;
      int newlines = 0;
      while (j < n && is_space(text[j])) newlines += text[j++] == '\n';
      if (newlines >= 2) {
        emit(start, i);
        start = j;
      }
      i = j;
      continue;
    }
    if (!is_terminal(c)) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && is_terminal(text[j])) ++j;
    const std::size_t marks_end = j;
    while (j < n && is_closing(text[j])) ++j;
    if (j < n && !is_space(text[j])) {
      i = j;
      continue;
    }
    bool boundary = true;
    if (marks_end - i == 1 && c == '.') {
      if (is_abbreviation(word_before(text, marks_end))) boundary = false;
      std::size_t k = j;
      while (k < n && is_space(text[k])) ++k;
      if (k < n && text[k] >= 'a' && text[k] <= 'z') boundary = false;
    } else if (text[marks_end - 1] == '.' && is_abbreviation(word_before(text, marks_end))) {
      boundary = false;
    }
    if (boundary) {
      emit(start, j);
      start = j;
    }
    i = j;
  }
  emit(start, n);
  return out;
}

std::vector<std::string> word_pieces(std::string_view sentence) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < sentence.size()) {
    const auto c = static_cast<unsigned char>(sentence[i]);
    if (is_space(static_cast<char>(c))) {
      ++i;
    } else if (is_word_byte(c)) {
      std::size_t j = i;
      while (j < sentence.size() && is_word_byte(static_cast<unsigned char>(sentence[j]))) ++j;
      out.push_back(to_lower(sentence.substr(i, j - i)));
      i = j;
    } else {
      out.emplace_back(1, static_cast<char>(c));
      ++i;
    }
  }
  return out;
}

std::vector<std::string> tfidf_terms(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!is_word_byte(static_cast<unsigned char>(text[i]))) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && is_word_byte(static_cast<unsigned char>(text[j]))) ++j;
    if (j - i >= 2) out.push_back(to_lower(text.substr(i, j - i)));
    i = j;
  }
  return out;
}

// ---------------------------------------------------------------------------

Vocabulary::Vocabulary() : tokens_{"[CLS]", "[SEP]", "[PAD]", "[UNK]"} {
  for (std::size_t i = 0; i < tokens_.size(); ++i) index_.emplace(tokens_[i], static_cast<int>(i));
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens_in_id_order) {
  static const std::vector<std::string> specials = {"[CLS]", "[SEP]", "[PAD]", "[UNK]"};
  Vocabulary v;
  v.tokens_.clear();
  v.index_.clear();
  if (tokens_in_id_order.size() < specials.size() ||
      !std::equal(specials.begin(), specials.end(), tokens_in_id_order.begin())) {
    tokens_in_id_order.insert(tokens_in_id_order.begin(), specials.begin(), specials.end());
  }
  v.tokens_ = std::move(tokens_in_id_order);
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    if (!v.index_.emplace(v.tokens_[i], static_cast<int>(i)).second)
      fail(ErrorKind::data, "duplicate vocabulary token '" + v.tokens_[i] + "'");
  }
  return v;
}

Vocabulary Vocabulary::build(const std::vector<std::string>& texts, std::size_t max_size,
                             std::size_t min_frequency) {
  std::map<std::string, std::size_t> counts;
  for (const auto& text : texts)
    for (auto& piece : word_pieces(text)) ++counts[piece];
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens = {"[CLS]", "[SEP]", "[PAD]", "[UNK]"};
  for (const auto& [tok, count] : ranked) {
    if (tokens.size() >= max_size) break;
    if (count < min_frequency) continue;
    tokens.push_back(tok);
  }
  return from_tokens(std::move(tokens));
}

int Vocabulary::id(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  return it == index_.end() ? SpecialTokens::unk : it->second;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::string out = "#qfsum-vocabulary\t1\n";
  for (std::size_t i = 0; i < tokens_.size(); ++i) out += tokens_[i] + '\t' + std::to_string(i) + '\n';
  write_file(path, out);
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  const auto text = read_file(path);
  std::vector<std::string> tokens;
  std::size_t pos = 0;
  bool header = false;
  while (pos < text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    const std::string_view line(text.data() + pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) continue;
    if (!header) {
      if (line != "#qfsum-vocabulary\t1") fail(ErrorKind::data, "unsupported vocabulary header");
      header = true;
      continue;
    }
    const auto tab = line.rfind('\t');
    if (tab == std::string_view::npos) fail(ErrorKind::data, "malformed vocabulary line");
    const auto id = std::stoul(std::string(line.substr(tab + 1)));
    if (id != tokens.size()) fail(ErrorKind::data, "vocabulary ids must be dense and ordered");
    tokens.emplace_back(line.substr(0, tab));
  }
  return from_tokens(std::move(tokens));
}

std::vector<int> tokenize(std::string_view sentence, const Vocabulary& vocab, std::size_t max_tokens) {
  std::vector<int> ids;
  for (const auto& piece : word_pieces(sentence)) {
    if (ids.size() >= max_tokens) break;
    ids.push_back(vocab.id(piece));
  }
  return ids;
}

// ---------------------------------------------------------------------------

void TfidfModel::reindex() {
  index_.clear();
  for (std::size_t i = 0; i < terms_.size(); ++i) index_.emplace(terms_[i], static_cast<int>(i));
}

TfidfModel TfidfModel::fit(const std::vector<std::string>& documents) {
  if (documents.empty()) fail(ErrorKind::invalid_argument, "TF-IDF needs at least one document");
  std::map<std::string, std::size_t> df;
  for (const auto& doc : documents) {
    auto terms = tfidf_terms(doc);
    std::set<std::string> unique(terms.begin(), terms.end());
    for (const auto& t : unique) ++df[t];
  }
  TfidfModel model;
  model.documents_ = documents.size();
  const double n = static_cast<double>(documents.size());
  for (const auto& [term, count] : df) {
    model.terms_.push_back(term);
    model.idf_.push_back(std::log((1.0 + n) / (1.0 + static_cast<double>(count))) + 1.0);
  }
  model.reindex();
  return model;
}

int TfidfModel::index(std::string_view term) const {
  const auto it = index_.find(std::string(term));
  return it == index_.end() ? -1 : it->second;
}

double TfidfModel::idf(std::string_view term) const {
  const int i = index(term);
  return i < 0 ? 0.0 : idf_[static_cast<std::size_t>(i)];
}

SparseVector TfidfModel::vector(std::string_view text) const {
  std::map<int, double> counts;
  for (const auto& term : tfidf_terms(text)) {
    const int i = index(term);
    if (i >= 0) counts[i] += 1.0;
  }
  SparseVector v(static_cast<Eigen::Index>(terms_.size()));
  v.reserve(static_cast<Eigen::Index>(counts.size()));
  double norm2 = 0.0;
  for (auto& [i, tf] : counts) {
    tf *= idf_[static_cast<std::size_t>(i)];
    norm2 += tf * tf;
  }
  if (norm2 == 0.0) return v;
  const double inv = 1.0 / std::sqrt(norm2);
  for (const auto& [i, w] : counts) v.insertBack(i) = w * inv;
  return v;
}

void TfidfModel::save(const std::filesystem::path& path) const {
  std::string out = "#qfsum-tfidf\t1\t" + std::to_string(documents_) + '\n';
  for (std::size_t i = 0; i < terms_.size(); ++i) out += terms_[i] + '\t' + format_float(idf_[i]) + '\n';
  write_file(path, out);
}

TfidfModel TfidfModel::load(const std::filesystem::path& path) {
  const auto text = read_file(path);
  TfidfModel model;
  std::size_t pos = 0;
  bool header = false;
  while (pos < text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    const std::string line = text.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) continue;
    const auto fields = split_delimited(line, "\t");
    if (!header) {
      if (fields.size() != 3 || fields[0] != "#qfsum-tfidf" || fields[1] != "1")
        fail(ErrorKind::data, "unsupported TF-IDF header");
      model.documents_ = std::stoul(fields[2]);
      header = true;
      continue;
    }
    if (fields.size() != 2) fail(ErrorKind::data, "malformed TF-IDF line");
    double idf = 0.0;
    const auto r = std::from_chars(fields[1].data(), fields[1].data() + fields[1].size(), idf);
    if (r.ec != std::errc{}) fail(ErrorKind::data, "malformed idf value");
    model.terms_.push_back(fields[0]);
    model.idf_.push_back(idf);
  }
  if (!std::is_sorted(model.terms_.begin(), model.terms_.end()))
    fail(ErrorKind::data, "TF-IDF terms must be sorted");
  model.reindex();
  return model;
}

double cosine(const SparseVector& u, const SparseVector& v) {
  if (u.size() != v.size()) fail(ErrorKind::invalid_argument, "cosine: dimension mismatch");
  const double nu = u.norm();
  const double nv = v.norm();
  if (nu == 0.0 || nv == 0.0) return 0.0;
  return u.dot(v) / (nu * nv);
}

}  // namespace qfsum
