#include "qfsum/evaluation.hpp"

#include <cmath>
#include <memory>
#include <set>
#include <sstream>

namespace qfsum {

namespace {

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::vector<std::string> texts_of(const TrainingInstance& inst) {
  std::vector<std::string> out;
  out.reserve(inst.sentences.size());
  for (const auto& s : inst.sentences) out.push_back(s.text);
  return out;
}

void collect_leaves(const DiagnosisHierarchy& h, const std::string& id, std::vector<std::string>& out) {
  const auto& node = h.node(id);
  if (node.is_leaf()) {
    out.push_back(id);
    return;
  }
  for (const auto& c : node.children) collect_leaves(h, c, out);
}

}  // namespace

EvaluationPlan plan_from_oracle(const std::vector<TrainingInstance>& instances, const EvidenceOracle& oracle,
                                const DiagnosisHierarchy& hierarchy, bool include_ancestors) {
  std::map<std::pair<std::string, std::string>, std::set<std::string>> planted;
  for (const auto& e : oracle.entries) planted[{e.patient_id, e.category_id}].insert(fingerprint(e.sentence));

  EvaluationPlan plan;
  plan.instances = instances;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto& inst = instances[i];
    std::set<std::string> present;
    for (const auto& s : inst.sentences) present.insert(fingerprint(s.text));
    for (std::size_t j = 0; j < inst.queries.size(); ++j) {
      if (!inst.labels[j]) continue;
      const auto& id = inst.queries[j];
      if (!hierarchy.node(id).is_leaf() && !include_ancestors) continue;
      std::vector<std::string> leaves;
      collect_leaves(hierarchy, id, leaves);
      std::set<std::string> ref;
      for (const auto& leaf : leaves) {
        const auto it = planted.find({inst.patient_id, leaf});
        if (it == planted.end()) continue;
        for (const auto& fp : it->second)
          if (present.count(fp)) ref.insert(fp);
      }
      plan.queries.push_back({i, QuerySpec::category(QueryMode::description, id), id});
      plan.references[{inst.key(), id}] = std::move(ref);
    }
  }
  return plan;
}

EvaluationPlan plan_from_annotations(const std::vector<AnnotationRecord>& records, const Corpus& corpus,
                                     const DiagnosisHierarchy& hierarchy) {
  EvaluationPlan plan;
  std::map<std::pair<std::string, Day>, std::size_t> instance_index;
  std::set<QueryKey> seen_queries;
  for (const auto& r : records) {
    if (r.round != AnnotationRound::reference) continue;
    auto [it, inserted] = instance_index.emplace(std::make_pair(r.patient_id, r.time_point), plan.instances.size());
    if (inserted) {
      TrainingInstance inst;
      inst.patient_id = r.patient_id;
      inst.t = r.time_point;
      for (auto& s : sentences_before(corpus, r.patient_id, r.time_point))
        inst.sentences.push_back({std::move(s.text), std::move(s.report_id)});
      plan.instances.push_back(std::move(inst));
    }
    const auto& inst = plan.instances[it->second];
    const QueryKey key{inst.key(), r.query.key()};
    if (seen_queries.insert(key).second) {
      QuerySpec spec;
      if (r.query.is_custom()) {
        spec = QuerySpec::free_text(r.query.custom_description);
      } else {
        if (!hierarchy.contains(r.query.category_id))
          fail(ErrorKind::not_found, "annotated category not in hierarchy: " + r.query.category_id);
        spec = QuerySpec::category(QueryMode::description, r.query.category_id);
      }
      plan.queries.push_back({it->second, spec, r.query.key()});
      plan.references[key];
    }
    if (r.relevant) plan.references[key].insert(r.fingerprint);
  }
  return plan;
}

ScoreFn model_scorer(const TrainedModel& model, const DiagnosisHierarchy& hierarchy) {
  auto cache = std::make_shared<std::map<std::string, RowVector<float>>>();
  return [&model, &hierarchy, cache](const std::vector<std::string>& sentences, const std::vector<QuerySpec>& queries) {
    std::vector<std::optional<ScoredQuery>> out(queries.size());
    if (sentences.empty()) return out;
    Matrix<float> S;
    bool encoded = false;
    for (std::size_t j = 0; j < queries.size(); ++j) {
      QuerySpec spec = queries[j];
      if (spec.mode != QueryMode::free_text) {
        if (model.query_mode == QueryMode::indicator && hierarchy.node(spec.category_id).custom) continue;
        spec.mode = model.query_mode;
      } else if (model.query_mode == QueryMode::indicator) {
        continue;
      }
      const std::string key = std::string(to_string(spec.mode)) + "\x1f" + spec.category_id + "\x1f" + spec.text;
      auto it = cache->find(key);
      if (it == cache->end()) it = cache->emplace(key, embed_query(model, spec, hierarchy)).first;
      if (!encoded) {
        const std::size_t cap = model.params.config.max_sentences_per_instance;
        if (sentences.size() > cap) {
          S = Matrix<float>::Zero(static_cast<Eigen::Index>(sentences.size()),
                                  static_cast<Eigen::Index>(model.params.config.d_hidden));
          std::vector<std::string> recent(sentences.end() - static_cast<std::ptrdiff_t>(cap), sentences.end());
          S.bottomRows(static_cast<Eigen::Index>(cap)) = encode_sentences(model, recent);
        } else {
          S = encode_sentences(model, sentences);
        }
        encoded = true;
      }
      auto ranking = score_embedded(model, S, it->second);
      out[j] = ScoredQuery{std::move(ranking.scores), ranking.probability};
    }
    return out;
  };
}

ScoreFn tfidf_scorer(const TfidfModel& tfidf, const DiagnosisHierarchy& hierarchy) {
  return [&tfidf, &hierarchy](const std::vector<std::string>& sentences, const std::vector<QuerySpec>& queries) {
    std::vector<SparseVector> vecs;
    vecs.reserve(sentences.size());
    for (const auto& s : sentences) vecs.push_back(tfidf.vector(s));
    std::vector<std::optional<ScoredQuery>> out;
    for (const auto& q : queries) {
      const auto qv = tfidf.vector(query_description(q, hierarchy));
      ScoredQuery sq;
      for (const auto& v : vecs) sq.scores.push_back(cosine(v, qv));
      out.emplace_back(std::move(sq));
    }
    return out;
  };
}

ScoreFn contextual_scorer(const ModelParameters<float>& params, const Vocabulary& vocab,
                          const DiagnosisHierarchy& hierarchy) {
  return [&params, &vocab, &hierarchy](const std::vector<std::string>& sentences, const std::vector<QuerySpec>& queries) {
    const std::size_t cap = params.config.max_tokens_per_sentence;
    const auto d = static_cast<Eigen::Index>(params.config.d_model);
    auto embed = [&](const std::string& text) -> RowVector<float> {
      const auto ids = tokenize(text, vocab, cap);
      if (ids.empty()) return RowVector<float>::Zero(d);
      return encode_mean(params, ids);
    };
    std::map<std::string, RowVector<float>> cache;
    std::vector<const RowVector<float>*> rows;
    for (const auto& s : sentences) {
      auto it = cache.find(s);
      if (it == cache.end()) it = cache.emplace(s, embed(s)).first;
      rows.push_back(&it->second);
    }
    std::vector<std::optional<ScoredQuery>> out;
    for (const auto& q : queries) {
      const RowVector<float> qv = embed(query_description(q, hierarchy));
      ScoredQuery sq;
      for (const auto* r : rows) sq.scores.push_back(cosine(*r, qv));
      out.emplace_back(std::move(sq));
    }
    return out;
  };
}

std::pair<std::vector<RankedResult>, References> run_plan(const EvaluationPlan& plan, const ScoreFn& scorer,
                                                          const DiagnosisHierarchy& hierarchy) {
  std::vector<RankedResult> results;
  References refs;
  std::size_t j = 0;
  while (j < plan.queries.size()) {
    const std::size_t inst_index = plan.queries[j].instance;
    std::size_t end = j;
    std::vector<QuerySpec> specs;
    while (end < plan.queries.size() && plan.queries[end].instance == inst_index) specs.push_back(plan.queries[end++].spec);
    const auto& inst = plan.instances[inst_index];
    const auto sentences = texts_of(inst);
    const auto scored = scorer(sentences, specs);
    for (std::size_t q = j; q < end; ++q) {
      const auto& s = scored[q - j];
      if (!s) continue;
      const auto& eq = plan.queries[q];
      RankedResult r;
      r.instance_key = inst.key();
      r.query = eq.id;
      const bool is_category = eq.spec.mode != QueryMode::free_text;
      r.query_depth = is_category ? hierarchy.node(eq.spec.category_id).depth : 0;
      r.custom = !is_category || hierarchy.node(eq.spec.category_id).custom;
      r.description = query_description(eq.spec, hierarchy);
      r.sentences = sentences;
      r.scores = s->scores;
      refs[r.key()] = plan.references.at(r.key());
      results.push_back(std::move(r));
    }
    j = end;
  }
  return {std::move(results), std::move(refs)};
}

CodePredictions predict_codes(const std::vector<TrainingInstance>& instances, const TrainedModel& model,
                              const DiagnosisHierarchy& hierarchy) {
  CodePredictions out;
  auto scorer = model_scorer(model, hierarchy);
  for (const auto& inst : instances) {
    std::vector<QuerySpec> specs;
    for (const auto& q : inst.queries) specs.push_back(QuerySpec::category(QueryMode::description, q));
    const auto scored = scorer(texts_of(inst), specs);
    for (std::size_t j = 0; j < scored.size(); ++j) {
      if (!scored[j] || !scored[j]->probability) continue;
      out.probabilities.push_back(*scored[j]->probability);
      out.labels.push_back(inst.labels[j] != 0);
    }
  }
  return out;
}

json MetricsReport::to_json() const {
  const std::string k_str = std::to_string(k);
  json out = {{"model", model},
              {"subset", subset},
              {"threshold_source", threshold_source},
              {"queries", queries},
              {"examples", examples},
              {"auroc", number_or_null(auroc)},
              {"avg_precision", number_or_null(avg_precision)},
              {"mean_ndcg", number_or_null(mean_ndcg)},
              {"p@" + k_str, topk.precision},
              {"r@" + k_str, topk.recall},
              {"f1@" + k_str, topk.f1},
              {"validated_p", validated_p ? json(*validated_p) : json(nullptr)}};
  if (code_auroc) out["code_auroc"] = number_or_null(*code_auroc);
  if (code_avg_precision) out["code_avg_precision"] = number_or_null(*code_avg_precision);
  return out;
}

MetricsReport compute_report(const std::string& model_name, const std::vector<RankedResult>& results,
                             const References& references, const Subset& subset, ThresholdSource source,
                             std::size_t k, const TfidfModel* tfidf) {
  const auto [filtered, refs] = apply_subset(results, references, subset, tfidf);
  MetricsReport report;
  report.model = model_name;
  report.subset = subset.name();
  report.threshold_source = source == ThresholdSource::percentile ? "percentile" : "attention";
  report.k = k;
  report.queries = filtered.size();
  report.curve = retrieval_curves(filtered, refs, source);
  report.examples = report.curve.positives + report.curve.negatives;
  report.auroc = report.curve.auroc;
  report.avg_precision = report.curve.average_precision;
  report.mean_ndcg = mean_ndcg(filtered, refs);
  report.topk = topk_prf(filtered, refs, k);
  return report;
}

std::string curve_csv(const Curve& curve) {
  std::ostringstream out;
  out << "threshold,tpr,fpr,precision,recall\n";
  auto num = [](double v) { return std::isfinite(v) ? format_float(v) : std::string("nan"); };
  for (const auto& p : curve.points)
    out << num(p.threshold) << ',' << num(p.tpr) << ',' << num(p.fpr) << ',' << num(p.precision) << ','
        << num(p.recall) << '\n';
  return out.str();
}

json result_to_json(const RankedResult& r) {
  return {{"instance", r.instance_key}, {"query", r.query},         {"depth", r.query_depth},
          {"custom", r.custom},         {"description", r.description}, {"sentences", r.sentences},
          {"scores", r.scores}};
}

RankedResult result_from_json(const json& doc) {
  RankedResult r;
  try {
    r.instance_key = doc.at("instance").get<std::string>();
    r.query = doc.at("query").get<std::string>();
    r.query_depth = doc.value("depth", 0);
    r.custom = doc.value("custom", false);
    r.description = doc.value("description", "");
    r.sentences = doc.at("sentences").get<std::vector<std::string>>();
    r.scores = doc.at("scores").get<std::vector<double>>();
  } catch (const json::exception& e) {
    fail(ErrorKind::data, std::string("results row: ") + e.what());
  }
  if (r.sentences.size() != r.scores.size()) fail(ErrorKind::data, "results row: sentences and scores differ in length");
  return r;
}

void save_results(const std::filesystem::path& path, const std::vector<RankedResult>& results) {
  std::vector<json> rows;
  for (const auto& r : results) rows.push_back(result_to_json(r));
  write_jsonl(path, rows);
}

std::vector<RankedResult> load_results(const std::filesystem::path& path) {
  std::vector<RankedResult> out;
  for (const auto& row : read_jsonl(path)) out.push_back(result_from_json(row));
  return out;
}

}  // namespace qfsum
