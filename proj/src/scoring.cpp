#include "qfsum/scoring.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include <spdlog/spdlog.h>

namespace qfsum {

namespace {

constexpr std::size_t kEncodeChunk = 256;

}  // namespace

std::string_view to_string(QueryMode mode) {
  switch (mode) {
    case QueryMode::indicator: return "indicator";
    case QueryMode::description: return "description";
    case QueryMode::hierarchy_path: return "hierarchy_path";
    case QueryMode::free_text: return "free_text";
  }
  return "?";
}

QueryMode parse_query_mode(std::string_view text) {
  if (text == "indicator") return QueryMode::indicator;
  if (text == "description") return QueryMode::description;
  if (text == "hierarchy" || text == "hierarchy_path") return QueryMode::hierarchy_path;
  if (text == "free_text") return QueryMode::free_text;
  fail(ErrorKind::invalid_argument, "unknown query mode: " + std::string(text));
}

std::vector<int> sentence_sequence(std::string_view text, const Vocabulary& vocab, const EncoderConfig& config) {
  std::vector<int> seq{SpecialTokens::cls};
  const auto ids = tokenize(text, vocab, config.max_tokens_per_sentence);
  seq.insert(seq.end(), ids.begin(), ids.end());
  return seq;
}

std::vector<int> query_sequence(const QuerySpec& spec, const DiagnosisHierarchy& hierarchy,
                                const Vocabulary& vocab, const EncoderConfig& config) {
  const std::size_t cap = config.max_query_tokens;
  std::vector<int> seq{SpecialTokens::cls};
  auto append = [&](std::string_view text) {
    for (int id : tokenize(text, vocab, cap)) seq.push_back(id);
  };
  switch (spec.mode) {
    case QueryMode::indicator:
      fail(ErrorKind::invalid_argument, "indicator queries have no token sequence");
    case QueryMode::free_text:
      if (collapse_whitespace(spec.text).empty()) fail(ErrorKind::unprocessable, "free-text query is empty");
      append(spec.text);
      break;
    case QueryMode::description:
      if (spec.category_id.empty()) fail(ErrorKind::unprocessable, "description query without a category");
      append(hierarchy.node(spec.category_id).description);
      break;
    case QueryMode::hierarchy_path: {
      if (spec.category_id.empty()) fail(ErrorKind::unprocessable, "hierarchy query requires a category, not free text");
      bool first = true;
      for (const auto& id : hierarchy.path_to(spec.category_id)) {
        if (!first) seq.push_back(SpecialTokens::sep);
        first = false;
        append(hierarchy.node(id).description);
      }
      break;
    }
  }
  if (seq.size() > cap) seq.resize(cap);
  return seq;
}

Matrix<float> encode_sentences(const TrainedModel& model, const std::vector<std::string>& sentences) {
  const auto& params = model.params;
  const auto h = static_cast<Eigen::Index>(params.config.d_hidden);
  std::map<std::vector<int>, std::size_t> unique;
  std::vector<const std::vector<int>*> order;
  std::vector<std::size_t> slot(sentences.size());
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    auto [it, inserted] = unique.emplace(sentence_sequence(sentences[i], model.vocab, params.config), unique.size());
    if (inserted) order.push_back(&it->first);
    slot[i] = it->second;
  }
  Matrix<float> encoded(static_cast<Eigen::Index>(order.size()), h);
  for (std::size_t start = 0; start < order.size(); start += kEncodeChunk) {
    const std::size_t end = std::min(order.size(), start + kEncodeChunk);
    PackedSequences packed;
    for (std::size_t u = start; u < end; ++u) packed.add(*order[u]);
    const Matrix<float> out = encoder_forward(params, packed);
    encoded.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(end - start)) =
        project(params, first_rows(out, packed));
  }
  Matrix<float> result(static_cast<Eigen::Index>(sentences.size()), h);
  for (std::size_t i = 0; i < sentences.size(); ++i)
    result.row(static_cast<Eigen::Index>(i)) = encoded.row(static_cast<Eigen::Index>(slot[i]));
  return result;
}

RowVector<float> embed_query(const TrainedModel& model, const QuerySpec& spec, const DiagnosisHierarchy& hierarchy) {
  if (spec.mode == QueryMode::indicator) {
    if (spec.category_id.empty()) fail(ErrorKind::unprocessable, "indicator queries cannot use free text");
    if (!hierarchy.contains(spec.category_id)) fail(ErrorKind::not_found, "unknown category " + spec.category_id);
    if (hierarchy.node(spec.category_id).custom)
      fail(ErrorKind::unprocessable, "indicator model has no embedding for custom category " + spec.category_id);
    return model.params.indicator.row(static_cast<Eigen::Index>(model.category_row(spec.category_id)));
  }
  const auto seq = query_sequence(spec, hierarchy, model.vocab, model.params.config);
  PackedSequences packed;
  packed.add(seq);
  const Matrix<float> out = encoder_forward(model.params, packed);
  return project(model.params, Matrix<float>(out.topRows(1))).row(0);
}

std::vector<std::size_t> ranking_order(const std::vector<double>& scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

RelevanceRanking score_embedded(const TrainedModel& model, const Matrix<float>& sentence_embeddings,
                                const RowVector<float>& query) {
  RelevanceRanking r;
  const auto m = static_cast<std::size_t>(sentence_embeddings.rows());
  if (m == 0) return r;
  const std::size_t cap = model.params.config.max_sentences_per_instance;
  const std::size_t keep = std::min(m, cap);
  r.truncated = m - keep;
  const Matrix<float> S = sentence_embeddings.bottomRows(static_cast<Eigen::Index>(keep));
  const auto state = head_forward(model.params, S, query);
  r.scores.assign(m, 0.0);
  for (std::size_t i = 0; i < keep; ++i) r.scores[r.truncated + i] = state.attention(static_cast<Eigen::Index>(i));
  r.probability = state.probability;
  r.order = ranking_order(r.scores);
  if (r.truncated > 0) {
    // Unscored sentences go last, in position order.
    std::stable_partition(r.order.begin(), r.order.end(), [&](std::size_t i) { return i >= r.truncated; });
  }
  return r;
}

RelevanceRanking score_instance(const TrainedModel& model, const std::vector<std::string>& sentences,
                                const QuerySpec& spec, const DiagnosisHierarchy& hierarchy) {
  const RowVector<float> e = embed_query(model, spec, hierarchy);
  if (sentences.empty()) return {};
  const std::size_t cap = model.params.config.max_sentences_per_instance;
  if (sentences.size() > cap) {
    spdlog::warn("history of {} sentences exceeds the cap of {}; keeping the most recent", sentences.size(), cap);
    std::vector<std::string> recent(sentences.end() - static_cast<std::ptrdiff_t>(cap), sentences.end());
    Matrix<float> S = Matrix<float>::Zero(static_cast<Eigen::Index>(sentences.size()), e.cols());
    S.bottomRows(static_cast<Eigen::Index>(cap)) = encode_sentences(model, recent);
    return score_embedded(model, S, e);
  }
  return score_embedded(model, encode_sentences(model, sentences), e);
}

std::vector<double> tfidf_scores(const std::vector<std::string>& sentences, std::string_view description,
                                 const TfidfModel& tfidf) {
  const SparseVector q = tfidf.vector(description);
  std::vector<double> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) out.push_back(cosine(tfidf.vector(s), q));
  return out;
}

std::vector<double> contextual_scores(const std::vector<std::string>& sentences, std::string_view description,
                                      const ModelParameters<float>& params, const Vocabulary& vocab) {
  const std::size_t cap = params.config.max_tokens_per_sentence;
  auto embed = [&](std::string_view text) -> RowVector<float> {
    auto ids = tokenize(text, vocab, cap);
    if (ids.empty()) return RowVector<float>::Zero(static_cast<Eigen::Index>(params.config.d_model));
    return encode_mean(params, ids);
  };
  const RowVector<float> q = embed(description);
  std::map<std::string, double> cache;
  std::vector<double> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) {
    auto it = cache.find(s);
    if (it == cache.end()) it = cache.emplace(s, cosine(embed(s), q)).first;
    out.push_back(it->second);
  }
  return out;
}

std::string query_description(const QuerySpec& spec, const DiagnosisHierarchy& hierarchy) {
  if (spec.mode == QueryMode::free_text) return spec.text;
  return hierarchy.node(spec.category_id).description;
}

}  // namespace qfsum
