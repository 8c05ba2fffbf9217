// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "../cli_support.hpp"
#include "../metric_oracle.hpp"
#include "../support.hpp"
#include "qfsum/corpus.hpp"
#include "qfsum/service.hpp"
#include "qfsum/synth.hpp"
#include "qfsum/util.hpp"

// After the Eigen headers: <resolv.h> defines a `_res` macro.
#include <httplib.h>

using namespace qfsum;
using namespace qfsum::testing;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

int failures = 0;

void criterion(const std::string& name, const std::function<void(Outcome&)>& body) {
  Outcome out;
  const auto start = std::chrono::steady_clock::now();
  try {
    body(out);
  } catch (const std::exception& e) {
    out.pass = false;
    out.detail << " [exception: " << e.what() << "]";
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!out.pass) ++failures;
  std::cout << (out.pass ? "PASS " : "FAIL ") << name << ":" << out.detail.str() << " (" << std::fixed
            << std::setprecision(1) << secs << "s)" << std::endl;
}

void cli(const std::vector<std::string>& args) {
  auto full = args;
  full.insert(full.begin(), "--quiet");
  if (const int rc = run_cli(full, {}, true); rc != 0)
    throw std::runtime_error("qfsum " + args.front() + " exited with " + std::to_string(rc));
}

double evaluate_auroc(const std::filesystem::path& dir, const std::string& tag, std::vector<std::string> model,
                      const std::string& subset) {
  const auto d = dir.string();
  const auto out = dir / ("eval_" + tag + "_" + subset);
  std::vector<std::string> args = {"evaluate",      "--instances", d + "/inst/test.jsonl",
                                   "--oracle",      d + "/corpus/oracle.jsonl",
                                   "--hierarchy",   d + "/corpus/hierarchy.jsonl",
                                   "--tfidf",       d + "/inst/tfidf.tsv",
                                   "--subset",      subset,
                                   "--out",         out.string()};
  args.insert(args.end(), model.begin(), model.end());
  cli(args);
  return json::parse(read_file(out / "metrics.json"))["auroc"].get<double>();
}

// ---------------------------------------------------------------------------

void headline(Outcome& o) {
  const auto start = std::chrono::steady_clock::now();
  const auto dir = scratch_dir("acceptance-headline");
  const auto d = dir.string();
  const std::string seed = "31";
  cli({"synth-data", "--config", (kTinyData / "synth.json").string(), "--seed", seed, "--patients", "5000", "--rho",
       "0.9", "--out", d + "/corpus"});
  cli({"build-instances", "--corpus", d + "/corpus", "--hierarchy", d + "/corpus/hierarchy.jsonl", "--seed", seed,
       "--out", d + "/inst"});
  for (const std::string mode : {"description", "hierarchy", "indicator"})
    cli({"train", "--instances", d + "/inst/train.jsonl", "--hierarchy", d + "/corpus/hierarchy.jsonl",
         "--category-stats", d + "/inst/category_stats.json", "--query-mode", mode, "--epochs", "5",
         "--downsample-p", "0.1", "--d-model", "32", "--layers", "1", "--heads", "2", "--d-ff", "64", "--d-hidden",
         "32", "--max-tokens", "32", "--seed", seed, "--out", d + "/t_" + mode});

  const auto oracle = EvidenceOracle::load(dir / "corpus/oracle.jsonl");
  std::size_t paraphrased = 0;
  for (const auto& e : oracle.entries) paraphrased += e.paraphrased;
  const double share = oracle.entries.empty() ? 0.0 : static_cast<double>(paraphrased) / oracle.entries.size();

  std::map<std::string, double> all, zero;
  for (const std::string subset : {"all", "tfidf_zero"}) {
    auto& into = subset == "all" ? all : zero;
    for (const std::string mode : {"description", "hierarchy", "indicator"})
      into[mode] = evaluate_auroc(dir, mode, {"--checkpoint", d + "/t_" + mode + "/checkpoint.ckpt"}, subset);
    into["tfidf"] = evaluate_auroc(dir, "tfidf", {"--baseline", "tfidf"}, subset);
    into["contextual"] = evaluate_auroc(
        dir, "contextual", {"--baseline", "contextual", "--checkpoint", d + "/t_description/checkpoint.ckpt"}, subset);
  }
  const double minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() / 60;

  o.detail << std::setprecision(3) << " paraphrased=" << share;
  for (const auto& [k, v] : all) o.detail << " " << k << "=" << v;
  o.detail << " | tfidf_zero:";
  for (const auto& [k, v] : zero) o.detail << " " << k << "=" << v;
  o.detail << " | " << minutes << " min";

  o.require(oracle.entries.size() > 0 && share >= 0.30, "paraphrased share >= 0.30");
  o.require(all["description"] >= 0.75, "description AUROC >= 0.75");
  o.require(all["hierarchy"] >= 0.75, "hierarchy AUROC >= 0.75");
  o.require(zero["description"] - zero["tfidf"] >= 0.15, "description margin over TF-IDF on tfidf_zero >= 0.15");
  o.require(zero["hierarchy"] - zero["tfidf"] >= 0.15, "hierarchy margin over TF-IDF on tfidf_zero >= 0.15");
  o.require(std::min(all["description"], all["hierarchy"]) > all["indicator"], "description/hierarchy > indicator");
  o.require(all["indicator"] > all["contextual"], "indicator > contextual");
  o.require(minutes <= 15.0, "runtime <= 15 min");
}

void gradients(Outcome& o) {
  const auto hierarchy = seven_node_tree();
  const auto batch = gradient_fixture_batch();
  std::vector<std::string> texts;
  for (const auto& inst : batch)
    for (const auto& s : inst.sentences) texts.push_back(s.text);
  for (const auto& n : hierarchy.nodes()) texts.push_back(n.description);
  TrainedModel model;
  model.vocab = Vocabulary::build(texts);
  for (const auto& n : hierarchy.nodes()) model.categories.push_back(n.id);
  const auto config = tiny_config(model.vocab.size(), hierarchy.size());
  const auto params = random_parameters(config, 21);

  double worst = 0;
  for (auto mode : {QueryMode::description, QueryMode::hierarchy_path, QueryMode::indicator}) {
    model.query_mode = mode;
    const auto ctx = make_query_context(model, hierarchy);
    const auto r = gradient_check(params, pointers(batch), model.vocab, ctx, LossOptions{}, 1e-4);
    o.detail << " " << to_string(mode) << "=" << std::scientific << std::setprecision(2) << r.max_relative_error;
    worst = std::max(worst, r.max_relative_error);
  }
  model.query_mode = QueryMode::description;
  const auto mutated = gradient_check(params, pointers(batch), model.vocab, make_query_context(model, hierarchy),
                                      LossOptions{}, 1e-4, [](ModelParameters<double>& g) { g.head_w1 *= 2.0; });
  o.detail << " mutated=" << mutated.max_relative_error;
  o.require(worst < 1e-4, "max relative error < 1e-4");
  o.require(mutated.max_relative_error > 1e-1, "mutation drives error > 1e-1");
}

void attention(Outcome& o) {
  std::mt19937_64 rng(101);
  double worst_sum = 0, worst_shift = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int m = std::uniform_int_distribution<int>(1, 256)(rng);
    const int d = std::uniform_int_distribution<int>(1, 32)(rng);
    std::normal_distribution<double> normal(0, std::uniform_real_distribution<double>(0.1, 5.0)(rng));
    Matrix<double> S(m, d);
    RowVector<double> e(d);
    for (Eigen::Index i = 0; i < S.size(); ++i) S.data()[i] = normal(rng);
    for (Eigen::Index i = 0; i < e.size(); ++i) e(i) = normal(rng);
    if (e.squaredNorm() < 1e-12) e(0) = 1;
    const auto a = attend(S, e);
    worst_sum = std::max(worst_sum, std::abs(a.sum() - 1.0));

    // Adding the same row v to every sentence shifts every logit by v.e = c.
    const double c = std::uniform_real_distribution<double>(-20, 20)(rng);
    const RowVector<double> v = e * (c / e.squaredNorm());
    const Matrix<double> shifted = S.rowwise() + v;
    worst_shift = std::max(worst_shift, (attend(shifted, e) - a).cwiseAbs().maxCoeff());
  }
  o.detail << std::scientific << std::setprecision(2) << " max|sum-1|=" << worst_sum << " max shift diff=" << worst_shift;
  o.require(worst_sum <= 1e-6, "sum within 1e-6");
  o.require(worst_shift <= 1e-6, "shift invariance within 1e-6");
}

TrainingInstance negatives_only(std::vector<std::string> negatives) {
  std::vector<std::uint8_t> labels(negatives.size(), 0);
  return make_instance("p", 1, {"x"}, std::move(negatives), std::move(labels));
}

void rebalancing(Outcome& o) {
  CategoryStats stats;
  stats.counts = {{"a", {4, 2}}, {"b", {1, 1}}, {"c", {7, 30}}, {"d", {2, 9}}, {"z", {0, 3}}};
  const auto inst = negatives_only({"a", "b", "c", "d", "z"});
  const auto target = resampling_distribution(inst, stats);
  std::map<std::string, double> seen;
  std::size_t draws = 0;
  std::mt19937_64 rng(2024);
  while (draws < 100000)
    for (const auto& c : resample_negatives(inst, stats, 1.0, rng)) {
      seen[c] += 1;
      ++draws;
    }
  double tv = 0;
  const std::vector<std::string> names = {"a", "b", "c", "d", "z"};
  for (std::size_t i = 0; i < names.size(); ++i) tv += std::abs(seen[names[i]] / static_cast<double>(draws) - target[i]);
  tv /= 2;

  CategoryStats flat;
  std::vector<std::string> negatives;
  for (int i = 0; i < 100; ++i) {
    negatives.push_back("n" + std::to_string(i));
    flat.counts[negatives.back()] = {1, 1};
  }
  const auto many = negatives_only(negatives);
  double total = 0;
  const int trials = 100000;
  for (int i = 0; i < trials; ++i) total += static_cast<double>(resample_negatives(many, flat, 0.01, rng).size());
  const double mean = total / trials;  // expected 100 * 0.01

  const auto hierarchy = seven_node_tree();
  const auto model = initialize_model(gradient_fixture_batch(), hierarchy, tiny_config(0, 0), QueryMode::description, 4);
  const std::vector<TrainingInstance> counted = {make_instance("p", 1, {"MRI shows an acute infarct."},
                                                               {"stroke", "glioma", "bleed", "infection"}, {1, 0, 0, 0})};
  BatchInfo info;
  batch_loss(pointers(counted), model.params, model.vocab, make_query_context(model, hierarchy), LossOptions{}, static_cast<ModelParameters<float>*>(nullptr),
             &info);

  o.detail << std::setprecision(4) << " tv=" << tv << " binomial mean=" << mean << " w_b=" << info.negative_weight;
  o.require(tv < 0.05, "total variation < 0.05");
  o.require(std::abs(mean - 1.0) <= 0.03, "binomial mean within 3%");
  o.require(info.negative_weight == 3.0, "w_b == 3.0");
}

void metric_oracle(Outcome& o) {
  std::mt19937_64 rng(42);
  std::size_t count_mismatches = 0, area_mismatches = 0, ndcg_mismatches = 0, prf_mismatches = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto f = random_fixture(rng);
    for (bool pct : {true, false}) {
      const auto ex = brute::examples(f.results, f.refs, pct);
      const auto curve =
          retrieval_curves(f.results, f.refs, pct ? ThresholdSource::percentile : ThresholdSource::attention);
      const auto counts = brute::confusion(ex);
      if (curve.points.size() != counts.size()) {
        ++count_mismatches;
        continue;
      }
      for (std::size_t i = 0; i < counts.size(); ++i)
        count_mismatches += curve.points[i].threshold != counts[i].threshold || curve.points[i].tp != counts[i].tp ||
                            curve.points[i].fp != counts[i].fp;
      if (curve.positives > 0 && curve.negatives > 0)
        area_mismatches += std::abs(curve.auroc - brute::mann_whitney(ex)) >= 1e-9;
      if (curve.positives > 0) area_mismatches += std::abs(curve.average_precision - brute::average_precision(ex)) >= 1e-9;
    }
    double sum = 0;
    int n = 0;
    for (const auto& r : f.results) {
      const auto& ref = f.refs.at(r.key());
      if (ref.empty()) continue;
      sum += brute::ndcg(brute::ranking(r), ref);
      ++n;
    }
    if (n) ndcg_mismatches += std::abs(mean_ndcg(f.results, f.refs) - sum / n) >= 1e-9;
    for (std::size_t k : {1u, 5u, 20u, 100u}) {
      std::size_t tp = 0, fp = 0, fn = 0;
      for (const auto& r : f.results) {
        const auto ranked = brute::ranking(r);
        const auto& ref = f.refs.at(r.key());
        std::size_t hit = 0;
        for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i) {
          const bool rel = ref.count(ranked[i]);
          (rel ? tp : fp) += 1;
          hit += rel;
        }
        fn += ref.size() - hit;
      }
      const auto prf = topk_prf(f.results, f.refs, k);
      prf_mismatches += prf.tp != tp || prf.fp != fp || prf.fn != fn;
    }
  }
  const double rank2 = ndcg({"a", "b", "c"}, {"b"});
  const double perfect = curve_from_scores({.9, .8, .2, .1}, {true, true, false, false}).auroc;
  o.detail << " mismatches counts=" << count_mismatches << " areas=" << area_mismatches << " ndcg=" << ndcg_mismatches
           << " topk=" << prf_mismatches << std::setprecision(10) << " ndcg(rank 2 of 3)=" << rank2
           << " perfect auroc=" << perfect;
  o.require(count_mismatches + area_mismatches + ndcg_mismatches + prf_mismatches == 0, "brute-force agreement");
  o.require(std::abs(rank2 - 0.6309297535714575) < 1e-12, "NDCG 0.6309");
  o.require(perfect == 1.0, "perfect AUROC 1.0");
}

void extraction(Outcome& o) {
  const auto h = hand_hierarchy();
  const auto hand = build_instances(hand_corpus(), h);
  bool exact = hand.size() == 2;
  if (exact) {
    exact = hand[0].key() == "a@200" && hand[1].key() == "b@250" &&
            hand[0].queries ==
                std::vector<std::string>{"neuro", "vascular", "stroke", "bleed", "tumor", "glioma", "infection"} &&
            hand[0].labels == std::vector<std::uint8_t>{1, 1, 1, 0, 0, 0, 0} &&
            hand[1].queries == std::vector<std::string>{"neuro", "vascular", "stroke", "bleed", "tumor", "glioma"} &&
            hand[1].labels == std::vector<std::uint8_t>{1, 1, 0, 1, 1, 1} &&
            hand[0].sentences == std::vector<InstanceSentence>{{"Baseline scan.", "a1"}, {"Normal.", "a1"},
                                                               {"Headache reported.", "a2"}} &&
            hand[1].sentences == std::vector<InstanceSentence>{{"Confusion noted.", "b1"}};
  }
  o.require(exact, "hand corpus instance set");

  auto config = SynthConfig::load(kTinyData / "synth.json");
  config.patients = 1000;
  const auto sh = DiagnosisHierarchy::load(config.hierarchy);
  const auto data = generate_synthetic(config, sh, 23);
  const auto instances = build_instances(data.corpus, sh);
  std::size_t leaks = 0, duplicates = 0, bad_labels = 0;
  std::set<std::string> keys;
  for (const auto& inst : instances) {
    duplicates += !keys.insert(inst.key()).second;  // one instance per (patient, t)
    const auto& patient = data.corpus.patient(inst.patient_id);
    std::map<std::string, Day> report_day;
    for (const auto& r : patient.reports) report_day[r.id] = r.timestamp;
    for (const auto& s : inst.sentences) leaks += report_day.at(s.report_id) >= inst.t;
    for (std::size_t i = 0; i < inst.queries.size(); ++i) {
      const auto& node = sh.node(inst.queries[i]);
      if (!node.is_leaf()) continue;
      bool later = false, ever = false;
      for (const auto& e : patient.code_events) {
        const bool match = sh.map_code(e.code, e.system) == node.id;
        ever |= match;
        later |= match && e.timestamp > inst.t;
      }
      bad_labels += inst.labels[i] ? !later : ever;
    }
  }
  o.detail << " hand=" << (exact ? "exact" : "mismatch") << " synthetic instances=" << instances.size()
           << " leaks=" << leaks << " duplicates=" << duplicates << " label violations=" << bad_labels;
  o.require(!instances.empty(), "synthetic instances exist");
  o.require(leaks == 0, "no leakage");
  o.require(duplicates == 0, "dedup");
  o.require(bad_labels == 0, "labels follow codes");
}

int small_pipeline(const std::filesystem::path& dir) {
  const auto d = dir.string();
  try {
    cli({"synth-data", "--config", (kTinyData / "synth.json").string(), "--seed", "5", "--patients", "150", "--out",
         d + "/corpus"});
    cli({"build-instances", "--corpus", d + "/corpus", "--hierarchy", d + "/corpus/hierarchy.jsonl", "--seed", "5",
         "--out", d + "/instances"});
    cli({"train", "--instances", d + "/instances/train.jsonl", "--hierarchy", d + "/corpus/hierarchy.jsonl", "--epochs",
         "2", "--d-model", "16", "--layers", "1", "--heads", "2", "--d-ff", "32", "--d-hidden", "16", "--downsample-p",
         "0.1", "--seed", "5", "--out", d + "/model"});
    cli({"evaluate", "--checkpoint", d + "/model/checkpoint.ckpt", "--instances", d + "/instances/test.jsonl",
         "--oracle", d + "/corpus/oracle.jsonl", "--hierarchy", d + "/corpus/hierarchy.jsonl", "--tfidf",
         d + "/instances/tfidf.tsv", "--out", d + "/eval"});
  } catch (const std::exception&) {
    return 1;
  }
  return 0;
}

void determinism(Outcome& o) {
  const auto a = scratch_dir("acceptance-det-a");
  const auto b = scratch_dir("acceptance-det-b");
  o.require(small_pipeline(a) == 0 && small_pipeline(b) == 0, "pipeline runs");
  if (!o.pass) return;
  std::size_t compared = 0;
  for (const char* file : {"instances/train.jsonl", "instances/val.jsonl", "instances/test.jsonl",
                           "instances/tfidf.tsv", "model/checkpoint.ckpt", "model/loss.tsv", "eval/metrics.json",
                           "eval/results.jsonl"}) {
    o.require(read_file(a / file) == read_file(b / file), std::string(file) + " identical");
    ++compared;
  }
  o.detail << " " << compared << " files compared";
}

void service_contract(Outcome& o) {
  const auto hierarchy = seven_node_tree();
  Corpus corpus;
  auto& p = corpus.patients["p1"];
  p.id = "p1";
  p.reports = {{"r1", "p1", ReportKind::visit, 1, "Acute infarct in the left hemisphere."},
               {"r2", "p1", ReportKind::radiology, 5, "Patient is stable. No bleeding seen."}};
  const std::vector<TrainingInstance> seed_instances = {
      make_instance("p1", 9, {"Acute infarct in the left hemisphere.", "Patient is stable.", "No bleeding seen."},
                    {"stroke"}, {1})};
  Service::Options opts;
  opts.annotations_path = scratch_dir("acceptance-service") / "annotations.jsonl";
  Service service(corpus, hierarchy, std::nullopt, opts);
  service.register_model(initialize_model(seed_instances, hierarchy, tiny_config(0, 0), QueryMode::description, 12));
  service.register_model(initialize_model(seed_instances, hierarchy, tiny_config(0, 0), QueryMode::indicator, 12));
  httplib::Client client("127.0.0.1", service.start_background());

  auto post = [&](const std::string& path, const json& body) {
    auto res = client.Post(path, body.dump(), "application/json");
    if (!res) throw std::runtime_error("no response from " + path);
    return std::make_pair(res->status, json::parse(res->body));
  };

  const auto [s1, one] = post("/rank", {{"patient_id", "p1"},
                                        {"time_point", 3},
                                        {"model", "description"},
                                        {"query", {{"category_id", "stroke"}}}});
  const bool single = s1 == 200 && one["results"].size() == 1 &&
                      one["results"][0]["sentence"] == "Acute infarct in the left hemisphere." &&
                      std::abs(one["results"][0]["score"].get<double>() - 1.0) <= 1e-6;
  o.require(single, "one-sentence history scores 1.0");

  const auto [s2, created] = post("/hierarchy/custom", {{"name", "my query"}, {"description", "left hemisphere bleeding"}});
  o.require(s2 == 200 || s2 == 201, "custom category created");
  const auto custom_id = created.value("id", std::string());
  const auto [s3, rejected] = post("/rank", {{"patient_id", "p1"},
                                             {"time_point", 9},
                                             {"model", "indicator"},
                                             {"query", {{"category_id", custom_id}}}});
  o.require(s3 == 422, "indicator + custom is 422");

  const std::vector<std::string> sentences = {"Acute infarct in the left hemisphere.", "Patient is stable.",
                                              "No bleeding seen."};
  std::vector<ValidationMark> marks;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    const bool relevant = i != 1;
    post("/annotations", {{"annotator", "ann"},
                          {"patient_id", "p1"},
                          {"time_point", 9},
                          {"query", {{"category_id", "stroke"}}},
                          {"fingerprint", sentences[i]},
                          {"relevant", relevant},
                          {"round", "validation"},
                          {"rank", i},
                          {"model", "description"}});
    marks.push_back({relevant, i});
  }
  auto res = client.Get("/metrics/validated_precision?model=description&k=20");
  const double served = res ? json::parse(res->body)["validated_precision"].get<double>() : -1;
  const double expected = validated_precision(marks, 20);
  service.stop();

  o.detail << " single score=" << (one["results"].empty() ? -1.0 : one["results"][0]["score"].get<double>())
           << " indicator+custom=" << s3 << " validated precision served=" << served << " metrics=" << expected;
  o.require(served == expected, "validated precision matches metrics");
}

}  // namespace

int main() {
  criterion("gradient correctness", gradients);
  criterion("attention normalization and shift invariance", attention);
  criterion("rebalancing fidelity", rebalancing);
  criterion("metric oracle equivalence", metric_oracle);
  criterion("extraction correctness", extraction);
  criterion("service contract", service_contract);
  criterion("determinism", determinism);
  criterion("synthetic headline", headline);
  std::cout << (failures ? std::to_string(failures) + " criteria failed" : std::string("all criteria passed"))
            << std::endl;
  return failures ? 1 : 0;
}
