#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "qfsum/lexical.hpp"

namespace qfsum {

/// (instance key, query id) -> relevant sentence fingerprints.
using QueryKey = std::pair<std::string, std::string>;
using References = std::map<QueryKey, std::set<std::string>>;

/// One ranked (instance, query) pair. Sentences are raw text in history order;
/// scores are aligned with them.
struct RankedResult {
  std::string instance_key;
  std::string query;        // category id, or the custom category's id/text
  int query_depth = 0;      // 0 for free text
  bool custom = false;
  std::string description;  // query text used by the TF-IDF subset filter
  std::vector<std::string> sentences;
  std::vector<double> scores;

  QueryKey key() const { return {instance_key, query}; }
};

/// A unique sentence of a result: its fingerprint, its best score across
/// duplicates and its first position.
struct UniqueSentence {
  std::string fingerprint;
  double score = 0;
  std::size_t position = 0;
};

/// Deduplicated by fingerprint, in ranking order (score descending, then
/// first position).
std::vector<UniqueSentence> unique_ranking(const RankedResult& result);

/// Fraction of unique sentences with a strictly greater score. Duplicates
/// share their fingerprint's percentile (computed from the best duplicate).
std::vector<double> percentiles(const std::vector<std::string>& sentences, const std::vector<double>& scores);

struct CurvePoint {
  double threshold = 0;
  std::size_t tp = 0, fp = 0;
  double tpr = 0, fpr = 0, precision = 0, recall = 0;
};

struct Curve {
  std::vector<CurvePoint> points;  // one per distinct threshold, descending
  std::size_t positives = 0, negatives = 0;
  double auroc = 0;              // NaN when either class is empty
  double average_precision = 0;  // NaN without positives
};

/// Predict positive when score >= threshold, for every distinct score.
/// AUROC by the trapezoid rule from (0,0); AP = sum (R_k - R_{k-1}) P_k.
Curve curve_from_scores(const std::vector<double>& scores, const std::vector<bool>& labels);

enum class ThresholdSource { percentile, attention };

/// Pooled over every (instance, query) pair; each unique sentence is one
/// example. Every result needs a reference entry whose fingerprints occur in
/// the result.
Curve retrieval_curves(const std::vector<RankedResult>& results, const References& references,
                       ThresholdSource source = ThresholdSource::percentile);

/// Binary-gain NDCG over the full ranking; 1/log2(rank + 1) discount.
double ndcg(const std::vector<std::string>& ranked_fingerprints, const std::set<std::string>& relevant);

/// Mean NDCG over results whose reference set is nonempty; NaN if none.
double mean_ndcg(const std::vector<RankedResult>& results, const References& references);

struct PrfAtK {
  std::size_t tp = 0, fp = 0, fn = 0;
  double precision = 0, recall = 0, f1 = 0;
};

/// Micro P/R/F1 over the top-k unique sentences of every result.
PrfAtK topk_prf(const std::vector<RankedResult>& results, const References& references, std::size_t k = 20);

struct ValidationMark {
  bool relevant = false;
  std::optional<std::size_t> rank;  // 0-based position in the reviewed list
};

/// Relevant marks over reviewed marks, counting only marks ranked below k
/// (marks without a rank always count). 0 when nothing was reviewed.
double validated_precision(const std::vector<ValidationMark>& marks, std::size_t k = 20);

struct Subset {
  enum Kind { all, tfidf_zero, custom_only, depth } kind = all;
  int depth_value = 0;
  static Subset parse(const std::string& text);  // all | tfidf_zero | custom | depth=N
  std::string name() const;
};

/// Filters results and references together. tfidf_zero removes reference
/// sentences with nonzero TF-IDF similarity to the query description from
/// both the reference and the result's candidate list.
std::pair<std::vector<RankedResult>, References> apply_subset(const std::vector<RankedResult>& results,
                                                              const References& references, const Subset& subset,
                                                              const TfidfModel* tfidf = nullptr);

/// Pooled (instance, category) code prediction.
Curve code_prediction_metrics(const std::vector<double>& probabilities, const std::vector<bool>& labels);

/// One annotator's reference summaries: query -> sentences, plus which
/// queries were custom.
struct AnnotationSet {
  References summaries;
  std::set<QueryKey> custom;
};

struct AgreementRow {
  std::optional<std::size_t> overlapping;  // empty for custom queries
  std::size_t only_first = 0;
  std::size_t only_second = 0;
};

struct AgreementTable {
  AgreementRow queries_excluding_custom;
  AgreementRow custom_queries;
  AgreementRow sentences_on_overlapping_queries;
};

AgreementTable annotator_agreement(const AnnotationSet& first, const AnnotationSet& second);

}  // namespace qfsum
