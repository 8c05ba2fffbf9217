#pragma once

// Glue between scorers, references and the metric suite.

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "qfsum/annotations.hpp"
#include "qfsum/corpus.hpp"
#include "qfsum/extraction.hpp"
#include "qfsum/metrics.hpp"
#include "qfsum/scoring.hpp"

namespace qfsum {

struct EvalQuery {
  std::size_t instance = 0;  // index into EvaluationPlan::instances
  QuerySpec spec;            // description-mode category or free text
  std::string id;            // reference key component
};

struct EvaluationPlan {
  std::vector<TrainingInstance> instances;
  std::vector<EvalQuery> queries;
  References references;
};

/// Queries are the positive leaves of each instance (optionally with their
/// positive ancestors); references are the oracle sentences planted for that
/// patient and category that occur in the instance history.
EvaluationPlan plan_from_oracle(const std::vector<TrainingInstance>& instances, const EvidenceOracle& oracle,
                                const DiagnosisHierarchy& hierarchy, bool include_ancestors = false);

/// Reference-round annotations: one query per annotated (patient, time point,
/// query), history rebuilt from the corpus, references from relevant marks.
EvaluationPlan plan_from_annotations(const std::vector<AnnotationRecord>& records, const Corpus& corpus,
                                     const DiagnosisHierarchy& hierarchy);

struct ScoredQuery {
  std::vector<double> scores;
  std::optional<double> probability;
};

/// Scores every query against one history. nullopt marks a query the scorer
/// cannot answer (custom queries for the indicator model).
using ScoreFn = std::function<std::vector<std::optional<ScoredQuery>>(const std::vector<std::string>& sentences,
                                                                      const std::vector<QuerySpec>& queries)>;

ScoreFn model_scorer(const TrainedModel& model, const DiagnosisHierarchy& hierarchy);
ScoreFn tfidf_scorer(const TfidfModel& tfidf, const DiagnosisHierarchy& hierarchy);
ScoreFn contextual_scorer(const ModelParameters<float>& params, const Vocabulary& vocab,
                          const DiagnosisHierarchy& hierarchy);

/// Runs the scorer over the plan. Unanswerable queries are dropped along with
/// their references.
std::pair<std::vector<RankedResult>, References> run_plan(const EvaluationPlan& plan, const ScoreFn& scorer,
                                                          const DiagnosisHierarchy& hierarchy);

struct CodePredictions {
  std::vector<double> probabilities;
  std::vector<bool> labels;
};

/// P(y=1) for every (instance, query) label.
CodePredictions predict_codes(const std::vector<TrainingInstance>& instances, const TrainedModel& model,
                              const DiagnosisHierarchy& hierarchy);

struct MetricsReport {
  std::string model;
  std::string subset = "all";
  std::string threshold_source = "percentile";
  std::size_t k = 20;
  std::size_t queries = 0;
  std::size_t examples = 0;
  double auroc = 0, avg_precision = 0, mean_ndcg = 0;
  PrfAtK topk;
  std::optional<double> validated_p;
  std::optional<double> code_auroc, code_avg_precision;
  Curve curve;

  json to_json() const;
};

MetricsReport compute_report(const std::string& model_name, const std::vector<RankedResult>& results,
                             const References& references, const Subset& subset, ThresholdSource source,
                             std::size_t k, const TfidfModel* tfidf);

/// threshold,tpr,fpr,precision,recall
std::string curve_csv(const Curve& curve);

json result_to_json(const RankedResult& r);
RankedResult result_from_json(const json& doc);
void save_results(const std::filesystem::path& path, const std::vector<RankedResult>& results);
std::vector<RankedResult> load_results(const std::filesystem::path& path);

}  // namespace qfsum
