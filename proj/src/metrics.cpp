#include "qfsum/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "qfsum/util.hpp"

namespace qfsum {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const std::set<std::string>& reference_for(const References& references, const RankedResult& r) {
  const auto it = references.find(r.key());
  if (it == references.end())
    fail(ErrorKind::invalid_argument, "no reference entry for " + r.instance_key + " / " + r.query);
  return it->second;
}

void check_reference(const std::set<std::string>& ref, const std::vector<UniqueSentence>& ranking,
                     const RankedResult& r) {
  for (const auto& fp : ref) {
    const bool found = std::any_of(ranking.begin(), ranking.end(), [&](const UniqueSentence& u) { return u.fingerprint == fp; });
    if (!found)
      fail(ErrorKind::invalid_argument,
           "reference sentence not in instance " + r.instance_key + " / " + r.query + ": " + fp);
  }
}

}  // namespace

std::vector<UniqueSentence> unique_ranking(const RankedResult& result) {
  if (result.sentences.size() != result.scores.size())
    fail(ErrorKind::invalid_argument, "sentences and scores differ in length");
  std::vector<UniqueSentence> unique;
  std::unordered_map<std::string, std::size_t> seen;
  for (std::size_t i = 0; i < result.sentences.size(); ++i) {
    auto fp = fingerprint(result.sentences[i]);
    const auto it = seen.find(fp);
    if (it == seen.end()) {
      seen.emplace(fp, unique.size());
      unique.push_back({std::move(fp), result.scores[i], i});
    } else {
      unique[it->second].score = std::max(unique[it->second].score, result.scores[i]);
    }
  }
  std::stable_sort(unique.begin(), unique.end(),
                   [](const UniqueSentence& a, const UniqueSentence& b) { return a.score > b.score; });
  return unique;
}

std::vector<double> percentiles(const std::vector<std::string>& sentences, const std::vector<double>& scores) {
  RankedResult r;
  r.sentences = sentences;
  r.scores = scores;
  const auto unique = unique_ranking(r);
  std::unordered_map<std::string, double> pct;
  const double n = static_cast<double>(unique.size());
  for (std::size_t i = 0; i < unique.size(); ++i) {
    // Ranking order is score-descending, so everything strictly above sits
    // before the first entry with an equal score.
    std::size_t above = i;
    while (above > 0 && unique[above - 1].score == unique[i].score) --above;
    pct[unique[i].fingerprint] = static_cast<double>(above) / n;
  }
  std::vector<double> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) out.push_back(pct.at(fingerprint(s)));
  return out;
}

Curve curve_from_scores(const std::vector<double>& scores, const std::vector<bool>& labels) {
  if (scores.size() != labels.size()) fail(ErrorKind::invalid_argument, "scores and labels differ in length");
  Curve c;
  for (bool y : labels) (y ? c.positives : c.negatives) += 1;
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  const double P = static_cast<double>(c.positives), N = static_cast<double>(c.negatives);
  std::size_t tp = 0, fp = 0;
  double auc = 0, ap = 0, prev_tpr = 0, prev_fpr = 0, prev_recall = 0;
  for (std::size_t i = 0; i < idx.size();) {
    const double threshold = scores[idx[i]];
    while (i < idx.size() && scores[idx[i]] == threshold) {
      (labels[idx[i]] ? tp : fp) += 1;
      ++i;
    }
    CurvePoint pt;
    pt.threshold = threshold;
    pt.tp = tp;
    pt.fp = fp;
    pt.tpr = P > 0 ? static_cast<double>(tp) / P : kNaN;
    pt.fpr = N > 0 ? static_cast<double>(fp) / N : kNaN;
    pt.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    pt.recall = pt.tpr;
    if (P > 0 && N > 0) auc += (pt.fpr - prev_fpr) * (pt.tpr + prev_tpr) / 2;
    if (P > 0) ap += (pt.recall - prev_recall) * pt.precision;
    prev_tpr = pt.tpr;
    prev_fpr = pt.fpr;
    prev_recall = pt.recall;
    c.points.push_back(pt);
  }
  c.auroc = (P > 0 && N > 0) ? auc : kNaN;
  c.average_precision = P > 0 ? ap : kNaN;
  return c;
}

Curve retrieval_curves(const std::vector<RankedResult>& results, const References& references,
                       ThresholdSource source) {
  std::vector<double> scores;
  std::vector<bool> labels;
  for (const auto& r : results) {
    const auto& ref = reference_for(references, r);
    const auto ranking = unique_ranking(r);
    check_reference(ref, ranking, r);
    const double n = static_cast<double>(ranking.size());
    for (std::size_t i = 0; i < ranking.size(); ++i) {
      double s = ranking[i].score;
      if (source == ThresholdSource::percentile) {
        std::size_t above = i;
        while (above > 0 && ranking[above - 1].score == ranking[i].score) --above;
        s = 1.0 - static_cast<double>(above) / n;
      }
      scores.push_back(s);
      labels.push_back(ref.count(ranking[i].fingerprint) > 0);
    }
  }
  return curve_from_scores(scores, labels);
}

double ndcg(const std::vector<std::string>& ranked_fingerprints, const std::set<std::string>& relevant) {
  if (relevant.empty()) return kNaN;
  double dcg = 0, ideal = 0;
  for (std::size_t k = 0; k < ranked_fingerprints.size(); ++k)
    if (relevant.count(ranked_fingerprints[k])) dcg += 1.0 / std::log2(static_cast<double>(k) + 2.0);
  for (std::size_t k = 0; k < relevant.size(); ++k) ideal += 1.0 / std::log2(static_cast<double>(k) + 2.0);
  return dcg / ideal;
}

double mean_ndcg(const std::vector<RankedResult>& results, const References& references) {
  double sum = 0;
  std::size_t n = 0;
  for (const auto& r : results) {
    const auto& ref = reference_for(references, r);
    if (ref.empty()) continue;
    const auto ranking = unique_ranking(r);
    check_reference(ref, ranking, r);
    std::vector<std::string> fps;
    for (const auto& u : ranking) fps.push_back(u.fingerprint);
    sum += ndcg(fps, ref);
    ++n;
  }
  return n ? sum / static_cast<double>(n) : kNaN;
}

PrfAtK topk_prf(const std::vector<RankedResult>& results, const References& references, std::size_t k) {
  PrfAtK out;
  for (const auto& r : results) {
    const auto& ref = reference_for(references, r);
    const auto ranking = unique_ranking(r);
    check_reference(ref, ranking, r);
    const std::size_t take = std::min(k, ranking.size());
    std::size_t hit = 0;
    for (std::size_t i = 0; i < take; ++i) hit += ref.count(ranking[i].fingerprint);
    out.tp += hit;
    out.fp += take - hit;
    out.fn += ref.size() - hit;
  }
  out.precision = out.tp + out.fp ? static_cast<double>(out.tp) / static_cast<double>(out.tp + out.fp) : 0.0;
  out.recall = out.tp + out.fn ? static_cast<double>(out.tp) / static_cast<double>(out.tp + out.fn) : 0.0;
  out.f1 = out.precision + out.recall > 0 ? 2 * out.precision * out.recall / (out.precision + out.recall) : 0.0;
  return out;
}

double validated_precision(const std::vector<ValidationMark>& marks, std::size_t k) {
  std::size_t reviewed = 0, relevant = 0;
  for (const auto& m : marks) {
    if (m.rank && *m.rank >= k) continue;
    ++reviewed;
    relevant += m.relevant ? 1 : 0;
  }
  return reviewed ? static_cast<double>(relevant) / static_cast<double>(reviewed) : 0.0;
}

Subset Subset::parse(const std::string& text) {
  if (text == "all") return {};
  if (text == "tfidf_zero") return {tfidf_zero, 0};
  if (text == "custom" || text == "custom_only") return {custom_only, 0};
  if (text.rfind("depth=", 0) == 0) {
    try {
      const int d = std::stoi(text.substr(6));
      if (d >= 1) return {depth, d};
    } catch (const std::exception&) {
    }
  }
  fail(ErrorKind::invalid_argument, "unknown subset '" + text + "' (all | tfidf_zero | custom | depth=N)");
}

std::string Subset::name() const {
  switch (kind) {
    case all: return "all";
    case tfidf_zero: return "tfidf_zero";
    case custom_only: return "custom";
    case depth: return "depth=" + std::to_string(depth_value);
  }
  return "?";
}

std::pair<std::vector<RankedResult>, References> apply_subset(const std::vector<RankedResult>& results,
                                                              const References& references, const Subset& subset,
                                                              const TfidfModel* tfidf) {
  std::vector<RankedResult> out_results;
  References out_refs;
  for (const auto& r : results) {
    const auto& ref = reference_for(references, r);
    if (subset.kind == Subset::custom_only && !r.custom) continue;
    if (subset.kind == Subset::depth && r.query_depth != subset.depth_value) continue;
    if (subset.kind != Subset::tfidf_zero) {
      out_results.push_back(r);
      out_refs[r.key()] = ref;
      continue;
    }
    if (!tfidf) fail(ErrorKind::invalid_argument, "tfidf_zero subset needs a TF-IDF model");
    const auto q = tfidf->vector(r.description);
    std::set<std::string> kept, dropped;
    for (const auto& fp : ref) {
      // Fingerprints are lowercase; TF-IDF terms are case-insensitive.
      (cosine(tfidf->vector(fp), q) != 0.0 ? dropped : kept).insert(fp);
    }
    RankedResult filtered = r;
    filtered.sentences.clear();
    filtered.scores.clear();
    for (std::size_t i = 0; i < r.sentences.size(); ++i) {
      if (dropped.count(fingerprint(r.sentences[i]))) continue;
      filtered.sentences.push_back(r.sentences[i]);
      filtered.scores.push_back(r.scores[i]);
    }
    out_refs[r.key()] = std::move(kept);
    out_results.push_back(std::move(filtered));
  }
  return {std::move(out_results), std::move(out_refs)};
}

Curve code_prediction_metrics(const std::vector<double>& probabilities, const std::vector<bool>& labels) {
  return curve_from_scores(probabilities, labels);
}

AgreementTable annotator_agreement(const AnnotationSet& first, const AnnotationSet& second) {
  AgreementTable t;
  t.custom_queries.overlapping.reset();
  std::size_t overlap = 0;
  std::size_t sent_both = 0, sent_first = 0, sent_second = 0;
  for (const auto& [key, sents] : first.summaries) {
    if (first.custom.count(key)) {
      ++t.custom_queries.only_first;
      continue;
    }
    const auto other = second.summaries.find(key);
    if (other == second.summaries.end() || second.custom.count(key)) {
      ++t.queries_excluding_custom.only_first;
      continue;
    }
    ++overlap;
    for (const auto& s : sents) (other->second.count(s) ? sent_both : sent_first) += 1;
    for (const auto& s : other->second) sent_second += sents.count(s) ? 0 : 1;
  }
  for (const auto& [key, sents] : second.summaries) {
    if (second.custom.count(key)) {
      ++t.custom_queries.only_second;
      continue;
    }
    if (!first.summaries.count(key) || first.custom.count(key)) ++t.queries_excluding_custom.only_second;
  }
  t.queries_excluding_custom.overlapping = overlap;
  t.sentences_on_overlapping_queries = {sent_both, sent_first, sent_second};
  return t;
}

}  // namespace qfsum
