#include <doctest.h>

#include <cmath>
#include <random>

#include "metric_oracle.hpp"
#include "qfsum/metrics.hpp"
#include "qfsum/util.hpp"

using qfsum::testing::random_fixture;
namespace brute = qfsum::testing::brute;

using namespace qfsum;

namespace {

RankedResult result(std::string key, std::string query, std::vector<std::string> sentences,
                    std::vector<double> scores) {
  RankedResult r;
  r.instance_key = std::move(key);
  r.query = std::move(query);
  r.sentences = std::move(sentences);
  r.scores = std::move(scores);
  return r;
}


}  // namespace

TEST_CASE("percentiles") {
  CHECK(percentiles({"a", "b", "c", "d"}, {.9, .5, .5, .1}) == std::vector<double>{0, .25, .25, .75});
  CHECK(percentiles({"a", "b", "c"}, {.3, .3, .3}) == std::vector<double>{0, 0, 0});
  CHECK(percentiles({"only"}, {.7}) == std::vector<double>{0});
  // Duplicates collapse to one unique sentence carrying the best score.
  CHECK(percentiles({"A b", "x", "a  B"}, {.1, .5, .9}) == std::vector<double>{0, .5, 0});
}

TEST_CASE("curves: trivial and hand values") {
  const auto perfect = curve_from_scores({.9, .8, .2, .1}, {true, true, false, false});
  CHECK(perfect.auroc == 1.0);
  CHECK(perfect.average_precision == 1.0);
  CHECK(curve_from_scores({.9, .8, .2, .1}, {false, false, true, true}).auroc == 0.0);
  CHECK(code_prediction_metrics({.5, .5, .5, .5}, {true, false, true, false}).auroc == doctest::Approx(0.5));
  CHECK(std::isnan(curve_from_scores({.5}, {true}).auroc));

  // Six sentences, relevant at ranks 2 and 4.
  const auto six = curve_from_scores({6, 5, 4, 3, 2, 1}, {false, true, false, true, false, false});
  CHECK(six.auroc == doctest::Approx(5.0 / 8.0).epsilon(1e-12));
  CHECK(six.average_precision == doctest::Approx(0.5 * 0.5 + 0.5 * 0.5).epsilon(1e-12));
  CHECK(six.points.size() == 6);
  CHECK(six.points[3].tp == 2);
  CHECK(six.points[3].fp == 2);

  // Eight code predictions.
  const auto eight = code_prediction_metrics({.9, .8, .7, .6, .55, .4, .3, .2},
                                             {true, true, false, true, false, false, true, false});
  CHECK(eight.auroc == doctest::Approx(12.0 / 16.0).epsilon(1e-12));
  CHECK(eight.average_precision == doctest::Approx((1.0 + 1.0 + 0.75 + 4.0 / 7.0) / 4.0).epsilon(1e-12));
}

TEST_CASE("ndcg hand values") {
  CHECK(ndcg({"a", "b", "c"}, {"a"}) == 1.0);
  CHECK(ndcg({"a", "b", "c"}, {"b"}) == doctest::Approx(0.6309297535714575).epsilon(1e-12));
  CHECK(ndcg({"c", "a", "b"}, {"a", "b", "c"}) == doctest::Approx(1.0));
  CHECK(std::isnan(ndcg({"a"}, {})));
}

TEST_CASE("topk hand values") {
  const std::vector<RankedResult> results = {result("i", "q1", {"a.", "b.", "c.", "d."}, {.4, .3, .2, .1}),
                                             result("i", "q2", {"e.", "f."}, {.1, .9})};
  const References refs = {{{"i", "q1"}, {"b.", "d."}}, {{"i", "q2"}, {"e."}}};
  const auto prf = topk_prf(results, refs, 2);
  // q1 top-2 {a, b}: 1 TP, 1 FP, 1 FN. q2 top-2 {f, e}: 1 TP, 1 FP.
  CHECK(prf.tp == 2);
  CHECK(prf.fp == 2);
  CHECK(prf.fn == 1);
  CHECK(prf.precision == 0.5);
  CHECK(prf.recall == doctest::Approx(2.0 / 3.0));
  CHECK(prf.f1 == doctest::Approx(4.0 / 7.0));
  CHECK(topk_prf(results, refs, 20).recall == 1.0);

  const References empty = {{{"i", "q1"}, {}}, {{"i", "q2"}, {}}};
  CHECK(topk_prf(results, empty, 20).precision == 0.0);
  CHECK(std::isnan(mean_ndcg(results, empty)));
}

TEST_CASE("reference errors") {
  const std::vector<RankedResult> results = {result("i", "q", {"a."}, {1.0})};
  CHECK_THROWS_AS(retrieval_curves(results, {}), Error);
  CHECK_THROWS_AS(retrieval_curves(results, {{{"i", "q"}, {"missing."}}}), Error);
}

TEST_CASE("metric oracle equivalence on 200 random fixtures") {
  std::mt19937_64 rng(42);
  int compared = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto f = random_fixture(rng);
    for (bool pct : {true, false}) {
      const auto ex = brute::examples(f.results, f.refs, pct);
      const auto curve = retrieval_curves(f.results, f.refs, pct ? ThresholdSource::percentile : ThresholdSource::attention);
      const auto counts = brute::confusion(ex);
      REQUIRE(curve.points.size() == counts.size());
      for (std::size_t i = 0; i < counts.size(); ++i) {
        CHECK(curve.points[i].threshold == counts[i].threshold);
        CHECK(curve.points[i].tp == counts[i].tp);
        CHECK(curve.points[i].fp == counts[i].fp);
      }
      const bool has_pos = curve.positives > 0, has_neg = curve.negatives > 0;
      if (has_pos && has_neg) {
        CHECK(std::abs(curve.auroc - brute::mann_whitney(ex)) < 1e-9);
        ++compared;
      }
      if (has_pos) CHECK(std::abs(curve.average_precision - brute::average_precision(ex)) < 1e-9);
    }

    double sum = 0;
    int n = 0;
    for (const auto& r : f.results) {
      const auto& ref = f.refs.at(r.key());
      if (ref.empty()) continue;
      const double v = brute::ndcg(brute::ranking(r), ref);
      CHECK(v >= 0.0);
      CHECK(v <= 1.0 + 1e-12);
      sum += v;
      ++n;
    }
    if (n) CHECK(std::abs(mean_ndcg(f.results, f.refs) - sum / n) < 1e-9);

    for (std::size_t k : {1u, 5u, 20u, 100u}) {
      std::size_t tp = 0, fp = 0, fn = 0;
      for (const auto& r : f.results) {
        const auto ranked = brute::ranking(r);
        const auto& ref = f.refs.at(r.key());
        for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i) (ref.count(ranked[i]) ? tp : fp) += 1;
        std::size_t hit = 0;
        for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i) hit += ref.count(ranked[i]);
        fn += ref.size() - hit;
      }
      const auto prf = topk_prf(f.results, f.refs, k);
      CHECK(prf.tp == tp);
      CHECK(prf.fp == fp);
      CHECK(prf.fn == fn);
    }
  }
  CHECK(compared > 300);
}

TEST_CASE("AUROC is invariant under monotone transforms; ndcg is 1 iff relevant lead") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> s;
    std::vector<bool> y;
    const int n = std::uniform_int_distribution<int>(2, 40)(rng);
    for (int i = 0; i < n; ++i) {
      s.push_back(std::uniform_int_distribution<int>(0, 9)(rng) / 9.0);
      y.push_back(i == 0 ? true : i == 1 ? false : std::bernoulli_distribution(0.4)(rng));
    }
    std::vector<double> t;
    for (double x : s) t.push_back(std::exp(3 * x) - 7);
    CHECK(curve_from_scores(s, y).auroc == doctest::Approx(curve_from_scores(t, y).auroc).epsilon(1e-12));

    std::vector<std::string> ranked;
    std::set<std::string> rel;
    for (int i = 0; i < n; ++i) {
      ranked.push_back("s" + std::to_string(i));
      if (y[static_cast<std::size_t>(i)]) rel.insert(ranked.back());
    }
    bool leading = true, seen_irrelevant = false;
    for (const auto& r : ranked) {
      if (!rel.count(r)) seen_irrelevant = true;
      else if (seen_irrelevant) leading = false;
    }
    CHECK((std::abs(ndcg(ranked, rel) - 1.0) < 1e-12) == leading);
  }
}

TEST_CASE("validated precision") {
  std::vector<ValidationMark> marks;
  for (int i = 0; i < 200; ++i) marks.push_back({i < 37, std::nullopt});
  CHECK(validated_precision(marks, 20) == doctest::Approx(0.185).epsilon(1e-15));
  CHECK(validated_precision({{true, 0}, {true, 1}}) == 1.0);
  CHECK(validated_precision({{false, 0}}) == 0.0);
  CHECK(validated_precision({}) == 0.0);
  CHECK(validated_precision({{true, 0}, {false, 1}, {true, 25}}, 20) == 0.5);
}

TEST_CASE("topk precision equals validated precision on identical data") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const auto f = random_fixture(rng);
    std::vector<ValidationMark> marks;
    for (const auto& r : f.results) {
      const auto ranked = unique_ranking(r);
      for (std::size_t i = 0; i < std::min<std::size_t>(20, ranked.size()); ++i)
        marks.push_back({f.refs.at(r.key()).count(ranked[i].fingerprint) > 0, i});
    }
    CHECK(topk_prf(f.results, f.refs, 20).precision == doctest::Approx(validated_precision(marks, 20)).epsilon(1e-15));
  }
}

TEST_CASE("subsets") {
  const auto tfidf = TfidfModel::fit({"acute stroke", "brain tumor", "patient stable", "mass effect"});
  auto r1 = result("i", "stroke", {"Acute infarct.", "Patient stable.", "Mass effect."}, {.5, .3, .2});
  r1.description = "acute stroke";
  r1.query_depth = 3;
  auto r2 = result("i", "tumor", {"Mass effect.", "Brain lesion."}, {.6, .4});
  r2.description = "brain tumor";
  r2.query_depth = 2;
  auto r3 = result("i", "custom-1", {"Mass effect."}, {1});
  r3.description = "headache";
  r3.custom = true;
  const std::vector<RankedResult> results = {r1, r2, r3};
  const References refs = {{{"i", "stroke"}, {"acute infarct.", "mass effect."}},
                           {{"i", "tumor"}, {"brain lesion."}},
                           {{"i", "custom-1"}, {"mass effect."}}};

  const auto [zero_results, zero_refs] = apply_subset(results, refs, Subset::parse("tfidf_zero"), &tfidf);
  // "acute infarct." shares "acute" with the stroke description.
  CHECK(zero_refs.at({"i", "stroke"}) == std::set<std::string>{"mass effect."});
  CHECK(zero_results[0].sentences == std::vector<std::string>{"Patient stable.", "Mass effect."});
  CHECK(zero_refs.at({"i", "tumor"}).empty());
  CHECK(zero_refs.at({"i", "custom-1"}).size() == 1);
  CHECK_THROWS_AS(apply_subset(results, refs, Subset::parse("tfidf_zero")), Error);

  const auto [depth_results, depth_refs] = apply_subset(results, refs, Subset::parse("depth=2"));
  REQUIRE(depth_results.size() == 1);
  CHECK(depth_results[0].query == "tumor");
  CHECK(depth_refs.size() == 1);

  const auto custom = apply_subset(results, refs, Subset::parse("custom")).first;
  REQUIRE(custom.size() == 1);
  CHECK(custom[0].query == "custom-1");

  CHECK(Subset::parse("depth=3").name() == "depth=3");
  CHECK_THROWS_AS(Subset::parse("depth=0"), Error);
  CHECK_THROWS_AS(Subset::parse("bogus"), Error);
}

TEST_CASE("annotator agreement") {
  AnnotationSet a, b;
  a.summaries = {{{"i1", "stroke"}, {"s1", "s2", "s3"}}, {{"i1", "tumor"}, {"s4"}}, {{"i2", "c1"}, {"s5"}}};
  a.custom = {{"i2", "c1"}};
  b.summaries = {{{"i1", "stroke"}, {"s2", "s3", "s6"}}, {{"i3", "bleed"}, {"s7"}}, {{"i3", "c2"}, {"s8"}},
                 {{"i4", "c3"}, {"s9"}}};
  b.custom = {{"i3", "c2"}, {"i4", "c3"}};
  const auto t = annotator_agreement(a, b);
  CHECK(t.queries_excluding_custom.overlapping == std::optional<std::size_t>(1));
  CHECK(t.queries_excluding_custom.only_first == 1);
  CHECK(t.queries_excluding_custom.only_second == 1);
  CHECK(!t.custom_queries.overlapping);
  CHECK(t.custom_queries.only_first == 1);
  CHECK(t.custom_queries.only_second == 2);
  CHECK(t.sentences_on_overlapping_queries.overlapping == std::optional<std::size_t>(2));
  CHECK(t.sentences_on_overlapping_queries.only_first == 1);
  CHECK(t.sentences_on_overlapping_queries.only_second == 1);

  const auto same = annotator_agreement(a, a);
  CHECK(same.queries_excluding_custom.only_first == 0);
  CHECK(same.queries_excluding_custom.only_second == 0);
  CHECK(same.sentences_on_overlapping_queries.only_first == 0);

  AnnotationSet c;
  c.summaries = {{{"z", "q"}, {"s"}}};
  CHECK(annotator_agreement(a, c).queries_excluding_custom.overlapping == std::optional<std::size_t>(0));
}
