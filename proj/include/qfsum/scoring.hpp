#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "qfsum/hierarchy.hpp"
#include "qfsum/lexical.hpp"
#include "qfsum/model.hpp"

namespace qfsum {

enum class QueryMode { indicator, description, hierarchy_path, free_text };

std::string_view to_string(QueryMode mode);
/// Accepts "hierarchy" as a synonym for "hierarchy_path".
QueryMode parse_query_mode(std::string_view text);

struct QuerySpec {
  QueryMode mode = QueryMode::description;
  std::string category_id;  // indicator, description, hierarchy_path
  std::string text;         // free_text

  static QuerySpec category(QueryMode mode, std::string id) { return {mode, std::move(id), {}}; }
  static QuerySpec free_text(std::string text) { return {QueryMode::free_text, {}, std::move(text)}; }
};

/// A trained (or freshly initialised) pointer model with everything needed to
/// turn text into ids and categories into indicator rows.
struct TrainedModel {
  ModelParameters<float> params;
  Vocabulary vocab;
  std::vector<std::string> categories;  // indicator row order
  QueryMode query_mode = QueryMode::description;
  json meta = json::object();

  /// Indicator row for `id`; not_found when the category was not in the table.
  std::size_t category_row(std::string_view id) const;
};

void save_checkpoint(const std::filesystem::path& path, const TrainedModel& model);
TrainedModel load_checkpoint(const std::filesystem::path& path);
std::string serialize_checkpoint(const TrainedModel& model);
TrainedModel parse_checkpoint(std::string_view text);

/// [CLS] followed by the sentence tokens, capped at max_tokens_per_sentence.
std::vector<int> sentence_sequence(std::string_view text, const Vocabulary& vocab, const EncoderConfig& config);

/// Encoder input for a text query: [CLS] d_q for description and free text,
/// [CLS] d_p1 [SEP] d_p2 ... [SEP] d_pL for hierarchy paths. Indicator
/// queries have no token sequence.
std::vector<int> query_sequence(const QuerySpec& spec, const DiagnosisHierarchy& hierarchy,
                                const Vocabulary& vocab, const EncoderConfig& config);

/// Sentence embeddings S (m x d_hidden); identical sentences are encoded once.
Matrix<float> encode_sentences(const TrainedModel& model, const std::vector<std::string>& sentences);

/// e_q.
RowVector<float> embed_query(const TrainedModel& model, const QuerySpec& spec, const DiagnosisHierarchy& hierarchy);

struct RelevanceRanking {
  std::vector<double> scores;       // aligned with the input sentences
  std::vector<std::size_t> order;   // indices by descending score, ties by position
  std::optional<double> probability;
  std::size_t truncated = 0;        // oldest sentences dropped by the instance cap
};

/// Indices sorted by descending score; equal scores keep input order.
std::vector<std::size_t> ranking_order(const std::vector<double>& scores);

/// Attention scores and P(y=1) for one (history, query) pair. Histories longer
/// than max_sentences_per_instance keep their most recent sentences; dropped
/// sentences score 0 and rank last.
RelevanceRanking score_instance(const TrainedModel& model, const std::vector<std::string>& sentences,
                                const QuerySpec& spec, const DiagnosisHierarchy& hierarchy);

/// Same as score_instance with precomputed sentence embeddings.
RelevanceRanking score_embedded(const TrainedModel& model, const Matrix<float>& sentence_embeddings,
                                const RowVector<float>& query);

/// cos(tfidf(x_i), tfidf(d_q)) per sentence.
std::vector<double> tfidf_scores(const std::vector<std::string>& sentences, std::string_view description,
                                 const TfidfModel& tfidf);

/// cos(mean-pooled x_i, mean-pooled d_q) per sentence.
std::vector<double> contextual_scores(const std::vector<std::string>& sentences, std::string_view description,
                                      const ModelParameters<float>& params, const Vocabulary& vocab);

/// The text a baseline compares against: the node description for category
/// queries, the raw text otherwise.
std::string query_description(const QuerySpec& spec, const DiagnosisHierarchy& hierarchy);

}  // namespace qfsum
